#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fsel/pattern_extraction.hpp"

namespace fsel {

// Patterns file, little-endian:
//   "FSPT", u32 version = 1, then until end of file, per image:
//   u32 id_len, id bytes, u16 k_used, u16 feat_dim, f32[k_used * feat_dim]
//   (row-major, one pattern per row), u32[k_used] member counts.
// There is no record count; a clean end of file ends the sequence.

inline constexpr char kPatternsMagic[4] = {'F', 'S', 'P', 'T'};
inline constexpr std::uint32_t kPatternsVersion = 1;

class PatternsWriter {
public:
    explicit PatternsWriter(std::ostream& out);
    /// Throws DataError if k_used or the dimension does not fit in u16, or on
    /// non-finite entries.
    void write(const SemanticPatternSet& set);

private:
    std::ostream* out_;
};

class PatternsReader {
public:
    explicit PatternsReader(std::istream& in);
    std::optional<SemanticPatternSet> next();

private:
    std::istream* in_;
};

void write_patterns(std::span<const SemanticPatternSet> sets, std::ostream& out);
std::vector<SemanticPatternSet> read_patterns(std::istream& in);
std::vector<SemanticPatternSet> read_patterns_file(const std::string& path);
void write_patterns_file(const std::string& path, std::span<const SemanticPatternSet> sets);

enum class FileKind { bundle, patterns, unknown };

/// Sniffs the first four bytes of a file. Throws IoError if it cannot be opened.
FileKind detect_file_kind(const std::string& path);

}  // namespace fsel
