#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fsel {

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One image's extractor output: grid geometry, global and local features,
/// and the last-layer attention maps.
struct ImageRecord {
    std::string image_id;
    std::uint16_t grid_h = 0;
    std::uint16_t grid_w = 0;
    std::uint16_t feat_dim = 0;
    Eigen::VectorXf cls_feature;    // d
    Eigen::VectorXf cls_attention;  // HW, sums to 1
    RowMatrixXf patch_attention;    // HW x HW, rows sum to 1
    RowMatrixXf patch_features;     // HW x d

    Eigen::Index regions() const noexcept { return Eigen::Index{grid_h} * grid_w; }

    /// Bitwise comparison of every field (NaN payloads included).
    friend bool operator==(const ImageRecord& a, const ImageRecord& b);
};

struct Violation {
    std::string field;
    std::int64_t index = -1;  // flat index into the field, -1 if not applicable
    double observed = 0.0;
    std::string message;
};

using ValidationReport = std::vector<Violation>;

/// Every invariant breach in `record`: dimension mismatches, non-finite
/// values, negative attention and attention sums off 1 by more than `tolerance`.
ValidationReport validate_record(const ImageRecord& record, double tolerance = 1e-4);

std::string describe(const Violation& v);

/// Records with more than this many HW*d (or HW*HW) entries are rejected.
inline constexpr std::uint64_t kDefaultMaxEntries = std::uint64_t{1} << 26;

inline constexpr char kBundleMagic[4] = {'F', 'S', 'E', 'L'};
inline constexpr std::uint32_t kBundleVersion = 1;

struct BundleOptions {
    double tolerance = 1e-4;
    /// Validate each record on read/write and throw DataError if it fails.
    bool validate = true;
    std::uint64_t max_entries = kDefaultMaxEntries;
};

/// Streaming writer. The record count goes in the header, so it must be
/// known up front; finish() checks that exactly that many were written.
class BundleWriter {
public:
    BundleWriter(std::ostream& out, std::uint64_t record_count, BundleOptions options = {});

    void write(const ImageRecord& record);
    void finish();

    std::uint64_t written() const noexcept { return written_; }

private:
    std::ostream* out_;
    BundleOptions options_;
    std::uint64_t expected_;
    std::uint64_t written_ = 0;
};

/// Writes a whole bundle. Throws DataError on invalid or duplicate records,
/// IoError if the sink fails.
void write_bundle(std::span<const ImageRecord> records, std::ostream& out, BundleOptions options = {});

/// Streaming reader: holds at most one record at a time.
class BundleReader {
public:
    /// Reads and checks the header. Throws FormatError on bad magic or version.
    explicit BundleReader(std::istream& in, BundleOptions options = {});

    std::uint64_t record_count() const noexcept { return count_; }
    std::uint64_t records_read() const noexcept { return read_; }

    /// The next record in file order, or nullopt after the last one.
    /// Throws FormatError on truncation or oversize dimensions, DataError if
    /// validation is enabled and the record fails it.
    std::optional<ImageRecord> next();

private:
    std::istream* in_;
    BundleOptions options_;
    std::uint64_t count_ = 0;
    std::uint64_t read_ = 0;
};

std::vector<ImageRecord> read_bundle(std::istream& in, BundleOptions options = {});
std::vector<ImageRecord> read_bundle_file(const std::string& path, BundleOptions options = {});
void write_bundle_file(const std::string& path, std::span<const ImageRecord> records, BundleOptions options = {});

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthSpec {
    std::uint64_t num_images = 0;
    std::uint16_t grid_h = 14;
    std::uint16_t grid_w = 14;
    std::uint16_t feat_dim = 384;
    std::uint32_t num_latent_categories = 5;
    double noise_scale = 0.1;
    std::uint64_t seed = 0;
    std::uint64_t max_entries = kDefaultMaxEntries;
};

/// Ground truth planted into one synthetic image.
struct SyntheticImage {
    ImageRecord record;
    std::vector<int> categories;       // distinct categories present, ascending
    std::vector<int> region_category;  // per region (flat grid index)
};

/// Unit-norm planted category directions, num_latent_categories x feat_dim.
Eigen::MatrixXd synthetic_centroids(const SynthSpec& spec);

/// Image `index` of the synthetic bundle described by `spec`. Each image holds
/// 1-3 categories drawn with Zipf(1) frequencies, laid out as grid Voronoi
/// cells around random object centers. CLS attention peaks at object centers;
/// patch attention favours same-category regions. A patch feature is its
/// category direction plus Gaussian noise of expected norm ~noise_scale.
/// Deterministic in (spec, index).
SyntheticImage generate_synthetic_image(const SynthSpec& spec, const Eigen::MatrixXd& centroids, std::uint64_t index);

std::vector<SyntheticImage> generate_synthetic_images(const SynthSpec& spec);
std::vector<ImageRecord> generate_synthetic_bundle(const SynthSpec& spec);

}  // namespace fsel
