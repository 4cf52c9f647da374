#include "fsel/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <unordered_map>

#include "fsel/bundle_io.hpp"
#include "fsel/error.hpp"
#include "fsel/parallel.hpp"
#include "fsel/pattern_extraction.hpp"
#include "fsel/patterns_io.hpp"
#include "fsel/selection.hpp"

namespace fsel::cli {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Opens `path` for writing, or wraps `fallback` when path is "-".
class OutputSink {
public:
    OutputSink(const std::string& path, std::ostream& fallback) {
        if (path == "-") {
            stream_ = &fallback;
        } else {
            file_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
            if (!*file_) throw IoError("cannot open '" + path + "' for writing");
            stream_ = file_.get();
        }
    }
    std::ostream& stream() { return *stream_; }
    void close() {
        stream_->flush();
        if (!*stream_) throw IoError("write failed");
        if (file_) file_->close();
    }

private:
    std::unique_ptr<std::ofstream> file_;
    std::ostream* stream_ = nullptr;
};

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return in;
}

struct ExtractionFlags {
    double tau = 0.5;
    int k = 5;
    int d0 = 2;
    std::uint64_t seed = 0;
    double tolerance = 1e-4;
    std::size_t threads = default_thread_count();

    ExtractionConfig config() const {
        ExtractionConfig c;
        c.tau = tau;
        c.k_patterns = k;
        c.d0 = d0;
        c.seed = seed;
        c.check();
        return c;
    }
};

void add_extraction_flags(CLI::App* app, ExtractionFlags& f) {
    app->add_option("--tau", f.tau, "Fraction of CLS attention mass kept by the filter")->capture_default_str();
    app->add_option("--k", f.k, "Semantic patterns per image")->capture_default_str();
    app->add_option("--d0", f.d0, "Chebyshev neighbourhood radius for patch attention")->capture_default_str();
    app->add_option("--threads", f.threads, "Worker threads for extraction and distance updates")->capture_default_str();
    app->add_option("--tolerance", f.tolerance, "Attention-sum tolerance when reading bundles")->capture_default_str();
}

// Streams a bundle through extraction in batches; `emit` receives results in
// input order.
template <typename Emit>
std::uint64_t extract_stream(const std::string& path, const ExtractionFlags& flags, std::ostream& err, Emit&& emit) {
    const ExtractionConfig cfg = flags.config();
    std::ifstream in = open_input(path);
    BundleOptions opts;
    opts.tolerance = flags.tolerance;
    BundleReader reader(in, opts);
    const std::size_t threads = std::max<std::size_t>(flags.threads, 1);
    WorkerPool pool(threads);
    const std::size_t batch = threads * 8;
    std::vector<ImageRecord> records;
    std::vector<SemanticPatternSet> results;
    std::uint64_t done = 0;
    const std::uint64_t total = reader.record_count();
    const std::uint64_t report_every = std::max<std::uint64_t>(total / 10, 1);
    std::uint64_t next_report = report_every;
    for (;;) {
        records.clear();
        while (records.size() < batch) {
            auto r = reader.next();
            if (!r) break;
            records.push_back(std::move(*r));
        }
        if (records.empty()) break;
        results.assign(records.size(), {});
        pool.run(records.size(), [&](std::size_t i) { results[i] = extract_image_patterns(records[i], cfg); });
        for (auto& s : results) emit(std::move(s));
        done += records.size();
        if (done >= next_report || done == total) {
            err << "patterns: " << done << "/" << total << " records\n";
            while (next_report <= done) next_report += report_every;
        }
    }
    return done;
}

// ---------------------------------------------------------------------------

int cmd_validate(const std::string& path, double tolerance, std::ostream& err) {
    std::ifstream in = open_input(path);
    BundleOptions opts;
    opts.validate = false;
    BundleReader reader(in, opts);
    std::uint64_t bad = 0;
    std::uint64_t n = 0;
    std::unordered_map<std::string, std::uint64_t> seen;
    while (auto rec = reader.next()) {
        ValidationReport report = validate_record(*rec, tolerance);
        auto [it, fresh] = seen.try_emplace(rec->image_id, n);
        if (!fresh) report.push_back({"image_id", -1, static_cast<double>(it->second), "duplicate of an earlier record"});
        if (!report.empty()) {
            ++bad;
            for (const auto& v : report) err << "record " << n << " '" << rec->image_id << "': " << describe(v) << "\n";
        }
        ++n;
    }
    err << "validate: " << n << " records, " << bad << " invalid\n";
    return bad == 0 ? kOk : kDataViolation;
}

struct SynthFlags {
    SynthSpec spec;
    std::string out;
    std::string truth;
};

int cmd_synth(const SynthFlags& f, std::ostream& out, std::ostream& err) {
    const Eigen::MatrixXd centroids = synthetic_centroids(f.spec);
    OutputSink sink(f.out, out);
    std::unique_ptr<std::ofstream> truth;
    if (!f.truth.empty()) {
        truth = std::make_unique<std::ofstream>(f.truth, std::ios::trunc);
        if (!*truth) throw IoError("cannot open '" + f.truth + "' for writing");
        *truth << "image_id,categories\n";
    }
    BundleWriter writer(sink.stream(), f.spec.num_images);
    for (std::uint64_t i = 0; i < f.spec.num_images; ++i) {
        const SyntheticImage img = generate_synthetic_image(f.spec, centroids, i);
        writer.write(img.record);
        if (truth) {
            *truth << img.record.image_id << ",";
            for (std::size_t c = 0; c < img.categories.size(); ++c) *truth << (c ? ";" : "") << img.categories[c];
            *truth << "\n";
        }
    }
    writer.finish();
    sink.close();
    err << "synth: wrote " << f.spec.num_images << " records\n";
    return kOk;
}

int cmd_patterns(const std::string& bundle, const std::string& out_path, const ExtractionFlags& flags,
                 std::ostream& out, std::ostream& err) {
    OutputSink sink(out_path, out);
    PatternsWriter writer(sink.stream());
    const auto n = extract_stream(bundle, flags, err, [&](SemanticPatternSet&& s) { writer.write(s); });
    sink.close();
    err << "patterns: wrote " << n << " pattern sets\n";
    return kOk;
}

struct SelectFlags {
    std::string input;
    std::string out = "-";
    std::string strategy = "prob";
    std::string distance = "cosine";
    std::string input_kind = "auto";
    std::string format = "jsonl";
    std::size_t budget = 0;
    std::uint64_t seed = 0;
    bool omit_timing = false;
    ExtractionFlags extraction;
};

void write_selection(std::ostream& os, const SelectionResult& r, const SelectFlags& f, const std::string& kind,
                     bool extracted, std::optional<double> wall) {
    if (f.format == "text") {
        for (const auto& id : r.image_ids) os << id << "\n";
        return;
    }
    auto num_or_null = [](double v) { return std::isnan(v) ? ordered_json(nullptr) : ordered_json(v); };
    for (std::size_t i = 0; i < r.steps.size(); ++i) {
        const auto& s = r.steps[i];
        ordered_json j;
        j["step"] = i;
        j["image_id"] = r.image_ids[i];
        j["pattern"] = s.pattern >= 0 ? ordered_json(s.pattern) : ordered_json(nullptr);
        j["min_dist"] = num_or_null(s.min_dist);
        j["mass"] = num_or_null(s.mass);
        if (s.fallback) j["fallback"] = true;
        os << j.dump() << "\n";
    }
    ordered_json cfg;
    cfg["strategy"] = to_string(r.strategy);
    cfg["distance"] = to_string(r.distance);
    cfg["budget"] = r.steps.size();
    cfg["input"] = kind;
    if (extracted) {
        cfg["tau"] = f.extraction.tau;
        cfg["k"] = f.extraction.k;
        cfg["d0"] = f.extraction.d0;
    }
    ordered_json summary;
    summary["config"] = cfg;
    summary["seed"] = r.seed;
    summary["pool_images"] = r.pool_images;
    summary["pool_patterns"] = r.pool_patterns;
    summary["wall_time_s"] = wall ? ordered_json(*wall) : ordered_json(nullptr);
    ordered_json line;
    line["summary"] = summary;
    os << line.dump() << "\n";
}

int cmd_select(SelectFlags f, std::ostream& out, std::ostream& err) {
    const Strategy strategy = parse_strategy(f.strategy);
    const Distance distance = parse_distance(f.distance);
    if (f.format != "jsonl" && f.format != "text") throw ArgumentError("--format must be jsonl or text");
    if (f.budget < 1) throw ArgumentError("--budget must be >= 1");

    FileKind kind = FileKind::unknown;
    if (f.input_kind == "auto") {
        kind = detect_file_kind(f.input);
        if (kind == FileKind::unknown) throw FormatError("'" + f.input + "' is neither a bundle nor a patterns file");
    } else if (f.input_kind == "bundle") {
        kind = FileKind::bundle;
    } else if (f.input_kind == "patterns") {
        kind = FileKind::patterns;
    } else {
        throw ArgumentError("--input-kind must be auto, bundle or patterns");
    }
    const bool global = strategy == Strategy::global_fds || strategy == Strategy::kmeans;
    if (global && kind != FileKind::bundle) {
        throw ArgumentError("strategy '" + f.strategy + "' needs global features: pass a bundle");
    }

    const auto t0 = std::chrono::steady_clock::now();
    bool extracted = false;
    std::optional<CandidatePool> pool;
    std::vector<std::string> ids;
    if (kind == FileKind::patterns) {
        auto in = open_input(f.input);
        const auto sets = read_patterns(in);
        if (strategy == Strategy::random) {
            for (const auto& s : sets) ids.push_back(s.image_id);
        } else {
            pool.emplace(CandidatePool::from_patterns(sets));
        }
    } else if (global || strategy == Strategy::random) {
        auto in = open_input(f.input);
        BundleOptions opts;
        opts.tolerance = f.extraction.tolerance;
        BundleReader reader(in, opts);
        std::vector<Eigen::MatrixXd> cls;
        while (auto r = reader.next()) {
            ids.push_back(r->image_id);
            if (global) cls.push_back(r->cls_feature.cast<double>().transpose());
        }
        if (global) pool.emplace(std::move(ids), cls);
    } else {
        std::vector<SemanticPatternSet> sets;
        f.extraction.seed = f.seed;
        extract_stream(f.input, f.extraction, err, [&](SemanticPatternSet&& s) { sets.push_back(std::move(s)); });
        pool.emplace(CandidatePool::from_patterns(sets));
        extracted = true;
    }

    SelectOptions opts;
    opts.distance = distance;
    opts.threads = std::max<std::size_t>(f.extraction.threads, 1);
    SelectionResult result;
    switch (strategy) {
        case Strategy::prob: result = select_prob(*pool, f.budget, f.seed, opts); break;
        case Strategy::fds: result = select_fds(*pool, f.budget, f.seed, opts); break;
        case Strategy::global_fds:
            result = select_fds(*pool, f.budget, f.seed, opts);
            result.strategy = Strategy::global_fds;
            break;
        case Strategy::kmeans: result = select_kmeans_global(*pool, f.budget, f.seed); break;
        case Strategy::random: result = select_random(ids, f.budget, f.seed); break;
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    OutputSink sink(f.out, out);
    const std::string kind_name = kind == FileKind::bundle ? "bundle" : "patterns";
    write_selection(sink.stream(), result, f, kind_name, extracted,
                    f.omit_timing ? std::nullopt : std::optional<double>(wall));
    sink.close();
    err << "select: " << result.image_ids.size() << " of " << result.pool_images << " images, strategy "
        << to_string(result.strategy) << ", wall time " << wall << " s\n";
    return kOk;
}

struct SelectionFileEntry {
    std::string image_id;
    std::optional<double> min_dist;
};

struct SelectionFile {
    std::vector<SelectionFileEntry> entries;
    std::optional<std::string> distance;
};

SelectionFile read_selection_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    SelectionFile sel;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line.front() != '{') {
            sel.entries.push_back({line, std::nullopt});
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("selection line " + std::to_string(lineno) + ": " + e.what());
        }
        if (j.contains("summary")) {
            const auto& cfg = j["summary"]["config"];
            if (cfg.is_object() && cfg.contains("distance") && cfg["distance"].is_string()) {
                sel.distance = cfg["distance"].get<std::string>();
            }
            continue;
        }
        if (!j.contains("image_id") || !j["image_id"].is_string()) {
            throw FormatError("selection line " + std::to_string(lineno) + ": missing image_id");
        }
        SelectionFileEntry e{j["image_id"].get<std::string>(), std::nullopt};
        if (j.contains("min_dist") && j["min_dist"].is_number()) e.min_dist = j["min_dist"].get<double>();
        sel.entries.push_back(std::move(e));
    }
    return sel;
}

int cmd_stats(const std::string& selection_path, const std::string& patterns_path, const std::string& out_path,
              const std::string& distance_flag, std::ostream& out, std::ostream& err) {
    const SelectionFile sel = read_selection_file(selection_path);
    auto in = open_input(patterns_path);
    const CandidatePool pool = CandidatePool::from_patterns(read_patterns(in));
    const Distance distance = parse_distance(!distance_flag.empty() ? distance_flag : sel.distance.value_or("cosine"));
    pool.require_compatible(distance);

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < pool.num_images(); ++i) index.emplace(pool.image_id(i), i);

    OutputSink sink(out_path, out);
    auto& os = sink.stream();
    os << "step,image_id,min_dist,covering_radius\n";
    SelectionState state = SelectionState::empty(pool);
    for (std::size_t s = 0; s < sel.entries.size(); ++s) {
        const auto& e = sel.entries[s];
        const auto it = index.find(e.image_id);
        if (it == index.end()) {
            err << "stats: image '" << e.image_id << "' is not in the patterns file\n";
            return kDataViolation;
        }
        if (state.image_selected[it->second]) {
            err << "stats: image '" << e.image_id << "' selected twice\n";
            return kDataViolation;
        }
        add_selected_image(state, pool, it->second, distance);
        const double radius = state.min_dist.maxCoeff();
        os << s << "," << e.image_id << "," << (e.min_dist ? fmt_double(*e.min_dist) : "") << ","
           << fmt_double(radius) << "\n";
    }
    sink.close();
    err << "stats: " << sel.entries.size() << " steps\n";
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Training-free data selection over semantic patterns"};
    app.name(args.empty() ? "fsel" : args.front());
    app.require_subcommand(1);

    std::string validate_path;
    double validate_tol = 1e-4;
    auto* validate = app.add_subcommand("validate", "Check every record of a bundle");
    validate->add_option("bundle", validate_path, "Bundle file")->required();
    validate->add_option("--tolerance", validate_tol, "Attention-sum tolerance")->capture_default_str();

    SynthFlags synth_flags;
    auto* synth = app.add_subcommand("synth", "Write a deterministic synthetic bundle");
    synth->add_option("--out", synth_flags.out, "Output bundle path ('-' for stdout)")->required();
    synth->add_option("--num-images,-n", synth_flags.spec.num_images, "Number of images")->capture_default_str();
    synth->add_option("--grid-h", synth_flags.spec.grid_h, "Grid height")->capture_default_str();
    synth->add_option("--grid-w", synth_flags.spec.grid_w, "Grid width")->capture_default_str();
    synth->add_option("--feat-dim", synth_flags.spec.feat_dim, "Feature dimension")->capture_default_str();
    synth->add_option("--categories", synth_flags.spec.num_latent_categories, "Planted categories")
        ->capture_default_str();
    synth->add_option("--noise", synth_flags.spec.noise_scale, "Feature noise scale")->capture_default_str();
    synth->add_option("--seed", synth_flags.spec.seed, "Generator seed")->capture_default_str();
    synth->add_option("--truth", synth_flags.truth, "Optional CSV of planted categories per image");

    std::string patterns_bundle;
    std::string patterns_out;
    ExtractionFlags patterns_flags;
    auto* patterns = app.add_subcommand("patterns", "Extract semantic patterns from a bundle");
    patterns->add_option("bundle", patterns_bundle, "Bundle file")->required();
    patterns->add_option("--out", patterns_out, "Output patterns path ('-' for stdout)")->required();
    patterns->add_option("--seed", patterns_flags.seed, "Clustering seed")->capture_default_str();
    add_extraction_flags(patterns, patterns_flags);

    SelectFlags select_flags;
    auto* select = app.add_subcommand("select", "Select an annotation subset");
    select->add_option("input", select_flags.input, "Patterns file or bundle")->required();
    select->add_option("--out", select_flags.out, "Output path ('-' for stdout)")->capture_default_str();
    select->add_option("--strategy", select_flags.strategy, "prob | fds | global-fds | kmeans | random")
        ->capture_default_str();
    select->add_option("--budget", select_flags.budget, "Number of images to select")->required();
    select->add_option("--seed", select_flags.seed, "Selection seed")->capture_default_str();
    select->add_option("--distance", select_flags.distance, "cosine | euclidean")->capture_default_str();
    select->add_option("--input-kind", select_flags.input_kind, "auto | bundle | patterns")->capture_default_str();
    select->add_option("--format", select_flags.format, "jsonl | text")->capture_default_str();
    select->add_flag("--omit-timing", select_flags.omit_timing, "Write wall_time_s as null");
    add_extraction_flags(select, select_flags.extraction);

    std::string stats_selection;
    std::string stats_patterns;
    std::string stats_out = "-";
    std::string stats_distance;
    auto* stats = app.add_subcommand("stats", "Coverage metrics of a selection as CSV");
    stats->add_option("selection", stats_selection, "Selection file (jsonl or text)")->required();
    stats->add_option("patterns", stats_patterns, "Patterns file")->required();
    stats->add_option("--out", stats_out, "Output CSV path ('-' for stdout)")->capture_default_str();
    stats->add_option("--distance", stats_distance, "cosine | euclidean (default: from the selection summary)");

    try {
        std::vector<std::string> rev(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
        std::reverse(rev.begin(), rev.end());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsageOrIo;
    }

    try {
        if (*validate) return cmd_validate(validate_path, validate_tol, err);
        if (*synth) return cmd_synth(synth_flags, out, err);
        if (*patterns) return cmd_patterns(patterns_bundle, patterns_out, patterns_flags, out, err);
        if (*select) return cmd_select(select_flags, out, err);
        if (*stats) return cmd_stats(stats_selection, stats_patterns, stats_out, stats_distance, out, err);
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kDataViolation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kUsageOrIo;
    }
    return kUsageOrIo;
}

}  // namespace fsel::cli
