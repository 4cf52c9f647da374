#include "fsel/bundle_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "binary_io.hpp"
#include "fsel/error.hpp"

namespace fsel {

namespace {

template <typename Derived>
bool bits_equal(const Eigen::DenseBase<Derived>& a, const Eigen::DenseBase<Derived>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    const auto n = static_cast<std::size_t>(a.size());
    return n == 0 || std::memcmp(a.derived().data(), b.derived().data(), n * sizeof(typename Derived::Scalar)) == 0;
}

bool valid_utf8(const std::string& s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t len = 0;
        std::uint32_t cp = 0;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            len = 2;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            len = 4;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + len > s.size()) return false;
        for (std::size_t k = 1; k < len; ++k) {
            const auto cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (cc & 0x3F);
        }
        const std::uint32_t min_cp[] = {0, 0, 0x80, 0x800, 0x10000};
        if (cp < min_cp[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
        i += len;
    }
    return true;
}

void check_size_cap(std::uint64_t hw, std::uint64_t d, std::uint64_t cap, const std::string& id) {
    if (hw * d > cap || hw * hw > cap) {
        throw FormatError("record '" + id + "': dimensions exceed size cap of " + std::to_string(cap) + " entries");
    }
}

void write_record(std::ostream& out, const ImageRecord& r) {
    binio::write_id(out, r.image_id);
    binio::write_le<std::uint16_t>(out, r.grid_h);
    binio::write_le<std::uint16_t>(out, r.grid_w);
    binio::write_le<std::uint16_t>(out, r.feat_dim);
    binio::write_le<std::uint16_t>(out, 0);
    binio::write_le_array(out, r.cls_feature.data(), static_cast<std::size_t>(r.cls_feature.size()));
    binio::write_le_array(out, r.cls_attention.data(), static_cast<std::size_t>(r.cls_attention.size()));
    binio::write_le_array(out, r.patch_attention.data(), static_cast<std::size_t>(r.patch_attention.size()));
    binio::write_le_array(out, r.patch_features.data(), static_cast<std::size_t>(r.patch_features.size()));
}

void require_valid(const ImageRecord& r, double tolerance) {
    const auto report = validate_record(r, tolerance);
    if (!report.empty()) {
        std::string msg = "record '" + r.image_id + "' is invalid: " + describe(report.front());
        if (report.size() > 1) msg += " (+" + std::to_string(report.size() - 1) + " more)";
        throw DataError(msg);
    }
}

}  // namespace

bool operator==(const ImageRecord& a, const ImageRecord& b) {
    return a.image_id == b.image_id && a.grid_h == b.grid_h && a.grid_w == b.grid_w && a.feat_dim == b.feat_dim &&
           bits_equal(a.cls_feature, b.cls_feature) && bits_equal(a.cls_attention, b.cls_attention) &&
           bits_equal(a.patch_attention, b.patch_attention) && bits_equal(a.patch_features, b.patch_features);
}

std::string describe(const Violation& v) {
    std::ostringstream os;
    os << v.field;
    if (v.index >= 0) os << "[" << v.index << "]";
    os << ": " << v.message << " (observed " << v.observed << ")";
    return os.str();
}

ValidationReport validate_record(const ImageRecord& r, double tolerance) {
    ValidationReport report;
    auto add = [&](std::string field, std::int64_t index, double observed, std::string message) {
        report.push_back({std::move(field), index, observed, std::move(message)});
    };

    if (!valid_utf8(r.image_id)) add("image_id", -1, 0.0, "not valid UTF-8");
    if (r.grid_h == 0) add("grid_h", -1, 0.0, "must be positive");
    if (r.grid_w == 0) add("grid_w", -1, 0.0, "must be positive");
    if (r.feat_dim == 0) add("feat_dim", -1, 0.0, "must be positive");

    const Eigen::Index hw = r.regions();
    const Eigen::Index d = r.feat_dim;
    bool dims_ok = true;
    auto check_dim = [&](const char* field, Eigen::Index rows, Eigen::Index cols, Eigen::Index want_rows,
                         Eigen::Index want_cols) {
        if (rows != want_rows || cols != want_cols) {
            dims_ok = false;
            add(field, -1, static_cast<double>(rows * cols),
                "shape " + std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
                    std::to_string(want_rows) + "x" + std::to_string(want_cols));
        }
    };
    check_dim("cls_feature", r.cls_feature.size(), 1, d, 1);
    check_dim("cls_attention", r.cls_attention.size(), 1, hw, 1);
    check_dim("patch_attention", r.patch_attention.rows(), r.patch_attention.cols(), hw, hw);
    check_dim("patch_features", r.patch_features.rows(), r.patch_features.cols(), hw, d);

    auto check_finite = [&](const char* field, const float* data, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!std::isfinite(data[i])) add(field, i, static_cast<double>(data[i]), "non-finite value");
        }
    };
    check_finite("cls_feature", r.cls_feature.data(), r.cls_feature.size());
    check_finite("cls_attention", r.cls_attention.data(), r.cls_attention.size());
    check_finite("patch_attention", r.patch_attention.data(), r.patch_attention.size());
    check_finite("patch_features", r.patch_features.data(), r.patch_features.size());

    if (!dims_ok) return report;

    double ca_sum = 0.0;
    for (Eigen::Index i = 0; i < hw; ++i) {
        const float v = r.cls_attention(i);
        if (v < 0.0f) add("cls_attention", i, v, "negative attention");
        ca_sum += v;
    }
    if (std::isfinite(ca_sum) && std::abs(ca_sum - 1.0) > tolerance) {
        add("cls_attention", -1, ca_sum, "sum differs from 1");
    }
    for (Eigen::Index row = 0; row < hw; ++row) {
        double s = 0.0;
        for (Eigen::Index c = 0; c < hw; ++c) {
            const float v = r.patch_attention(row, c);
            if (v < 0.0f) add("patch_attention", row * hw + c, v, "negative attention");
            s += v;
        }
        if (std::isfinite(s) && std::abs(s - 1.0) > tolerance) add("patch_attention", row, s, "row sum differs from 1");
    }
    return report;
}

// ---------------------------------------------------------------------------

BundleWriter::BundleWriter(std::ostream& out, std::uint64_t record_count, BundleOptions options)
    : out_(&out), options_(options), expected_(record_count) {
    binio::write_bytes(out, kBundleMagic, 4);
    binio::write_le<std::uint32_t>(out, kBundleVersion);
    binio::write_le<std::uint64_t>(out, record_count);
}

void BundleWriter::write(const ImageRecord& record) {
    if (written_ >= expected_) throw DataError("more records written than declared in the header");
    check_size_cap(static_cast<std::uint64_t>(record.regions()), record.feat_dim, options_.max_entries,
                   record.image_id);
    const Eigen::Index hw = record.regions();
    if (record.cls_feature.size() != record.feat_dim || record.cls_attention.size() != hw ||
        record.patch_attention.rows() != hw || record.patch_attention.cols() != hw ||
        record.patch_features.rows() != hw || record.patch_features.cols() != record.feat_dim) {
        throw DataError("record '" + record.image_id + "': array shapes do not match grid/feat_dim");
    }
    if (options_.validate) require_valid(record, options_.tolerance);
    write_record(*out_, record);
    ++written_;
}

void BundleWriter::finish() {
    if (written_ != expected_) {
        throw DataError("bundle declared " + std::to_string(expected_) + " records but " + std::to_string(written_) +
                        " were written");
    }
    out_->flush();
    if (!*out_) throw IoError("flush failed");
}

void write_bundle(std::span<const ImageRecord> records, std::ostream& out, BundleOptions options) {
    std::unordered_set<std::string> seen;
    for (const auto& r : records) {
        if (!seen.insert(r.image_id).second) throw DataError("duplicate image_id '" + r.image_id + "'");
        if (options.validate) require_valid(r, options.tolerance);
    }
    BundleOptions checked = options;
    checked.validate = false;
    BundleWriter writer(out, records.size(), checked);
    for (const auto& r : records) writer.write(r);
    writer.finish();
}

BundleReader::BundleReader(std::istream& in, BundleOptions options) : in_(&in), options_(options) {
    char magic[4];
    binio::read_bytes(in, magic, 4, "bundle magic");
    if (std::memcmp(magic, kBundleMagic, 4) != 0) throw FormatError("bad magic: not a bundle file");
    const auto version = binio::read_le<std::uint32_t>(in, "bundle version");
    if (version != kBundleVersion) throw FormatError("unsupported bundle version " + std::to_string(version));
    count_ = binio::read_le<std::uint64_t>(in, "record count");
}

std::optional<ImageRecord> BundleReader::next() {
    if (read_ == count_) {
        if (in_->peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after last record");
        return std::nullopt;
    }
    auto& in = *in_;
    ImageRecord r;
    const auto id_len = binio::read_le<std::uint32_t>(in, "id length");
    r.image_id = binio::read_id_body(in, id_len);
    r.grid_h = binio::read_le<std::uint16_t>(in, "grid_h");
    r.grid_w = binio::read_le<std::uint16_t>(in, "grid_w");
    r.feat_dim = binio::read_le<std::uint16_t>(in, "feat_dim");
    const auto reserved = binio::read_le<std::uint16_t>(in, "reserved");
    if (reserved != 0) throw FormatError("record '" + r.image_id + "': reserved field is nonzero");
    if (r.grid_h == 0 || r.grid_w == 0 || r.feat_dim == 0) {
        throw FormatError("record '" + r.image_id + "': zero dimension");
    }
    const auto hw = static_cast<std::uint64_t>(r.regions());
    const std::uint64_t d = r.feat_dim;
    check_size_cap(hw, d, options_.max_entries, r.image_id);

    const auto n_hw = static_cast<Eigen::Index>(hw);
    const auto n_d = static_cast<Eigen::Index>(d);
    r.cls_feature.resize(n_d);
    binio::read_le_array(in, r.cls_feature.data(), d, "cls_feature");
    r.cls_attention.resize(n_hw);
    binio::read_le_array(in, r.cls_attention.data(), hw, "cls_attention");
    r.patch_attention.resize(n_hw, n_hw);
    binio::read_le_array(in, r.patch_attention.data(), hw * hw, "patch_attention");
    r.patch_features.resize(n_hw, n_d);
    binio::read_le_array(in, r.patch_features.data(), hw * d, "patch_features");

    if (options_.validate) require_valid(r, options_.tolerance);
    ++read_;
    return r;
}

std::vector<ImageRecord> read_bundle(std::istream& in, BundleOptions options) {
    BundleReader reader(in, options);
    std::vector<ImageRecord> out;
    while (auto r = reader.next()) out.push_back(std::move(*r));
    return out;
}

std::vector<ImageRecord> read_bundle_file(const std::string& path, BundleOptions options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return read_bundle(in, options);
}

void write_bundle_file(const std::string& path, std::span<const ImageRecord> records, BundleOptions options) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_bundle(records, out, options);
}

}  // namespace fsel
