#include "fsel/patterns_io.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "binary_io.hpp"
#include "fsel/bundle_io.hpp"
#include "fsel/error.hpp"

namespace fsel {

PatternsWriter::PatternsWriter(std::ostream& out) : out_(&out) {
    binio::write_bytes(out, kPatternsMagic, 4);
    binio::write_le<std::uint32_t>(out, kPatternsVersion);
}

void PatternsWriter::write(const SemanticPatternSet& set) {
    constexpr auto u16max = std::numeric_limits<std::uint16_t>::max();
    if (set.k_used() < 1 || set.k_used() > u16max || set.dim() < 1 || set.dim() > u16max) {
        throw DataError("patterns '" + set.image_id + "': k_used/feat_dim out of range");
    }
    if (set.member_counts.size() != static_cast<std::size_t>(set.k_used())) {
        throw DataError("patterns '" + set.image_id + "': member_counts length mismatch");
    }
    if (!set.patterns.allFinite()) throw DataError("patterns '" + set.image_id + "': non-finite entries");

    auto& out = *out_;
    binio::write_id(out, set.image_id);
    binio::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(set.k_used()));
    binio::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(set.dim()));
    const RowMatrixXf rows = set.patterns.cast<float>();
    binio::write_le_array(out, rows.data(), static_cast<std::size_t>(rows.size()));
    binio::write_le_array(out, set.member_counts.data(), set.member_counts.size());
}

PatternsReader::PatternsReader(std::istream& in) : in_(&in) {
    char magic[4];
    binio::read_bytes(in, magic, 4, "patterns magic");
    if (std::memcmp(magic, kPatternsMagic, 4) != 0) throw FormatError("bad magic: not a patterns file");
    const auto version = binio::read_le<std::uint32_t>(in, "patterns version");
    if (version != kPatternsVersion) throw FormatError("unsupported patterns version " + std::to_string(version));
}

std::optional<SemanticPatternSet> PatternsReader::next() {
    auto& in = *in_;
    std::uint32_t id_len = 0;
    if (!binio::read_bytes(in, &id_len, sizeof id_len, "id length", true)) return std::nullopt;
    if constexpr (std::endian::native == std::endian::big) id_len = binio::byteswap(id_len);

    SemanticPatternSet set;
    set.image_id = binio::read_id_body(in, id_len);
    const auto k = binio::read_le<std::uint16_t>(in, "k_used");
    const auto d = binio::read_le<std::uint16_t>(in, "feat_dim");
    if (k == 0 || d == 0) throw FormatError("patterns '" + set.image_id + "': zero k_used or feat_dim");
    RowMatrixXf rows(k, d);
    binio::read_le_array(in, rows.data(), std::size_t{k} * d, "patterns");
    set.patterns = rows.cast<double>();
    set.member_counts.resize(k);
    binio::read_le_array(in, set.member_counts.data(), k, "member counts");
    return set;
}

void write_patterns(std::span<const SemanticPatternSet> sets, std::ostream& out) {
    PatternsWriter writer(out);
    for (const auto& s : sets) writer.write(s);
    out.flush();
    if (!out) throw IoError("flush failed");
}

std::vector<SemanticPatternSet> read_patterns(std::istream& in) {
    PatternsReader reader(in);
    std::vector<SemanticPatternSet> out;
    while (auto s = reader.next()) out.push_back(std::move(*s));
    return out;
}

std::vector<SemanticPatternSet> read_patterns_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return read_patterns(in);
}

void write_patterns_file(const std::string& path, std::span<const SemanticPatternSet> sets) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_patterns(sets, out);
}

FileKind detect_file_kind(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() != 4) return FileKind::unknown;
    if (std::memcmp(magic, kBundleMagic, 4) == 0) return FileKind::bundle;
    if (std::memcmp(magic, kPatternsMagic, 4) == 0) return FileKind::patterns;
    return FileKind::unknown;
}

}  // namespace fsel
