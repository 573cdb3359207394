#include "indexprobe/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "indexprobe/crosswalk.hpp"
#include "indexprobe/error.hpp"
#include "indexprobe/frame.hpp"
#include "indexprobe/index.hpp"
#include "indexprobe/ingest.hpp"
#include "indexprobe/sensitivity.hpp"
#include "indexprobe/table.hpp"
#include "indexprobe/validity.hpp"

namespace indexprobe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Overrides {
    std::string config;
    std::optional<std::string> months;
    std::optional<std::string> window;
    std::optional<std::string> zscore_mode;
    std::optional<std::string> out;
    bool stamp = false;
};

Error config_error(const std::string& msg) { return Error(ErrorCode::Config, msg); }

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw config_error(where + " must be a JSON object");
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.count(key)) throw config_error(where + ": unknown key '" + key + "'");
    }
}

std::string get_string(const json& obj, const std::string& key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw config_error(where + ": missing '" + key + "'");
    if (!it->is_string()) throw config_error(where + ": '" + key + "' must be a string");
    return it->get<std::string>();
}

std::optional<std::string> opt_string(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) return std::nullopt;
    return get_string(obj, key, where);
}

std::vector<std::string> string_list(const json& value, const std::string& where) {
    if (!value.is_array()) throw config_error(where + " must be an array of strings");
    std::vector<std::string> out;
    for (const auto& v : value) {
        if (!v.is_string()) throw config_error(where + " must be an array of strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

std::string file_stem(const std::string& name) {
    std::string out;
    for (char c : name) {
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
        out += ok ? c : '_';
    }
    return out.empty() ? "_" : out;
}

std::vector<std::string> spec_attributes(const IndexSpec& spec) {
    std::vector<std::string> names;
    for (const auto& t : spec.terms) names.push_back(t.attribute);
    if (spec.risk_inputs) {
        names.push_back(spec.risk_inputs->eal);
        if (spec.risk_inputs->transform != RiskTransform::One) {
            names.push_back(spec.risk_inputs->sv);
            names.push_back(spec.risk_inputs->cr);
        }
    }
    return names;
}

struct SpecEntry {
    std::string path;
    std::optional<std::string> scale;
};

struct FrameDecl {
    std::string data;
    std::string schema;
};

class Run {
public:
    Run(std::string command, const Overrides& ov) : command_(std::move(command)), ov_(ov) {
        config_path_ = ov.config;
        base_dir_ = config_path_.parent_path();
        std::string text;
        try {
            text = read_text(config_path_);
        } catch (const Error&) {
            throw config_error("cannot read config '" + ov.config + "'");
        }
        config_hash_ = hex64(fnv1a64(text));
        try {
            config_ = json::parse(text);
        } catch (const json::exception& e) {
            throw config_error(ov.config + ": " + e.what());
        }
        check_keys(config_,
                   {"frames", "crosswalks", "specs", "variants", "impacts", "output", "options", "sensitivity",
                    "validity"},
                   "config");
        parse_options();
        parse_frames();
        parse_crosswalks();
        resolve_output_dir();
    }

    const json& config() const { return config_; }

    fs::path resolve(const std::string& p) const {
        fs::path path(p);
        return path.is_absolute() ? path : base_dir_ / path;
    }

    void note_input(const std::string& as_written, const fs::path& resolved) {
        if (inputs_.count(as_written)) return;
        inputs_[as_written] = hex64(fnv1a64(read_text(resolved)));
    }

    void require_exists(const std::string& as_written, const std::string& what) const {
        if (!fs::exists(resolve(as_written))) {
            throw config_error(what + " '" + as_written + "' does not exist");
        }
    }

    const SpatialFrame& frame(const std::string& scale) {
        if (auto it = frames_.find(scale); it != frames_.end()) return it->second;
        auto decl = frame_decls_.find(scale);
        if (decl == frame_decls_.end()) throw config_error("scale '" + scale + "' is not declared in frames");
        note_input(decl->second.data, resolve(decl->second.data));
        note_input(decl->second.schema, resolve(decl->second.schema));
        auto loaded = load_frame(scale, resolve(decl->second.data), resolve(decl->second.schema));
        return frames_.emplace(scale, std::move(loaded)).first->second;
    }

    std::vector<std::string> frame_scales() const {
        std::vector<std::string> out;
        for (const auto& [s, _] : frame_decls_) out.push_back(s);
        return out;
    }

    std::string only_scale(const std::string& what) const {
        if (frame_decls_.size() != 1) throw config_error(what + ": 'scale' is required when several frames are declared");
        return frame_decls_.begin()->first;
    }

    const std::vector<Crosswalk>& crosswalks() {
        if (!crosswalks_loaded_) {
            for (const auto& d : crosswalk_decls_) {
                note_input(d.path, resolve(d.path));
                crosswalks_.push_back(load_crosswalk(resolve(d.path), d.source, d.target));
            }
            crosswalks_loaded_ = true;
        }
        return crosswalks_;
    }

    const Crosswalk& crosswalk(const std::string& source, const std::string& target) {
        for (const auto& cw : crosswalks()) {
            if (cw.source_scale() == source && cw.target_scale() == target) return cw;
        }
        throw config_error("no crosswalk from '" + source + "' to '" + target + "' is declared");
    }

    SpecEntry spec_entry(const json& v, const std::string& where) const {
        if (v.is_string()) return {v.get<std::string>(), std::nullopt};
        check_keys(v, {"path", "scale"}, where);
        SpecEntry e{get_string(v, "path", where), opt_string(v, "scale", where)};
        if (e.scale && !frame_decls_.count(*e.scale)) {
            throw config_error(where + ": scale '" + *e.scale + "' is not declared in frames");
        }
        return e;
    }

    std::vector<SpecEntry> spec_list(const std::string& key) const {
        std::vector<SpecEntry> out;
        if (!config_.contains(key)) return out;
        const json& arr = config_[key];
        if (!arr.is_array()) throw config_error("'" + key + "' must be an array");
        for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(spec_entry(arr[i], key + "[" + std::to_string(i) + "]"));
        return out;
    }

    IndexSpec load_spec(const std::string& path) {
        IndexSpec spec = load_index_spec(resolve(path));
        note_input(path, resolve(path));
        if (zscore_mode_) spec.zscore_mode = *zscore_mode_;
        return spec;
    }

    void write_output(const std::string& rel, const std::string& content) {
        write_text(out_dir_ / command_ / rel, content);
        outputs_[rel] = hex64(fnv1a64(content));
    }

    void write_json(const std::string& rel, const json& doc) { write_output(rel, doc.dump(2) + "\n"); }

    template <class F>
    void write_stream(const std::string& rel, F&& fill) {
        std::ostringstream os;
        fill(os);
        write_output(rel, os.str());
    }

    void write_manifest() {
        json m;
        m["tool"] = "indexprobe";
        m["version"] = kVersion;
        m["command"] = command_;
        m["config"] = config_path_.filename().string();
        m["config_hash"] = config_hash_;
        m["inputs"] = json::array();
        for (const auto& [path, hash] : inputs_) m["inputs"].push_back({{"path", path}, {"hash", hash}});
        m["outputs"] = json::array();
        for (const auto& [path, hash] : outputs_) m["outputs"].push_back({{"path", path}, {"hash", hash}});
        m["options"] = options_json();
        if (ov_.stamp) {
            const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
            char buf[32];
            std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
            m["generated_at"] = buf;
        }
        write_text(out_dir_ / command_ / "manifest.json", m.dump(2) + "\n");
    }

    fs::path output_dir() const { return out_dir_ / command_; }

    IngestPeriod period;
    double quintile_epsilon = 0.5;
    bool fixed_universe = false;
    int jump_threshold = 2;

private:
    struct CrosswalkDecl {
        std::string path;
        std::string source;
        std::string target;
    };

    void parse_options() {
        json opts = config_.value("options", json::object());
        check_keys(opts, {"zscore_mode", "months", "window", "quintile_epsilon", "fixed_universe", "jump_threshold"},
                   "options");
        std::optional<std::string> zm = opt_string(opts, "zscore_mode", "options");
        std::optional<std::string> months = opt_string(opts, "months", "options");
        std::optional<std::string> window = opt_string(opts, "window", "options");
        if (ov_.zscore_mode) zm = ov_.zscore_mode;
        if (ov_.months) months = ov_.months;
        if (ov_.window) window = ov_.window;
        if (zm) zscore_mode_ = parse_zscore_mode(*zm);
        if (months) period.months = MonthFilter::parse(*months);
        if (window) period.window = DateWindow::parse(*window);
        if (opts.contains("quintile_epsilon")) {
            if (!opts["quintile_epsilon"].is_number() || opts["quintile_epsilon"].get<double>() < 0) {
                throw config_error("options: 'quintile_epsilon' must be a nonnegative number");
            }
            quintile_epsilon = opts["quintile_epsilon"].get<double>();
        }
        if (opts.contains("fixed_universe")) {
            if (!opts["fixed_universe"].is_boolean()) throw config_error("options: 'fixed_universe' must be a boolean");
            fixed_universe = opts["fixed_universe"].get<bool>();
        }
        if (opts.contains("jump_threshold")) {
            if (!opts["jump_threshold"].is_number_integer() || opts["jump_threshold"].get<int>() < 1) {
                throw config_error("options: 'jump_threshold' must be a positive integer");
            }
            jump_threshold = opts["jump_threshold"].get<int>();
        }
    }

    json options_json() const {
        json o;
        o["zscore_mode"] = zscore_mode_ ? json(to_string(*zscore_mode_)) : json(nullptr);
        o["months"] = period.months.list();
        o["window"] = format_date(period.window.first) + ":" + format_date(period.window.last);
        o["quintile_epsilon"] = quintile_epsilon;
        o["fixed_universe"] = fixed_universe;
        o["jump_threshold"] = jump_threshold;
        return o;
    }

    void parse_frames() {
        if (!config_.contains("frames")) return;
        const json& arr = config_["frames"];
        if (!arr.is_array()) throw config_error("'frames' must be an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string where = "frames[" + std::to_string(i) + "]";
            check_keys(arr[i], {"scale", "data", "schema"}, where);
            const std::string scale = get_string(arr[i], "scale", where);
            FrameDecl d{get_string(arr[i], "data", where), get_string(arr[i], "schema", where)};
            require_exists(d.data, where + " data");
            require_exists(d.schema, where + " schema");
            if (!frame_decls_.emplace(scale, d).second) throw config_error(where + ": scale '" + scale + "' declared twice");
        }
    }

    void parse_crosswalks() {
        if (!config_.contains("crosswalks")) return;
        const json& arr = config_["crosswalks"];
        if (!arr.is_array()) throw config_error("'crosswalks' must be an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string where = "crosswalks[" + std::to_string(i) + "]";
            check_keys(arr[i], {"path", "source_scale", "target_scale"}, where);
            CrosswalkDecl d{get_string(arr[i], "path", where), get_string(arr[i], "source_scale", where),
                            get_string(arr[i], "target_scale", where)};
            require_exists(d.path, where);
            for (const auto& s : {d.source, d.target}) {
                if (!frame_decls_.count(s)) throw config_error(where + ": scale '" + s + "' is not declared in frames");
            }
            crosswalk_decls_.push_back(std::move(d));
        }
    }

    void resolve_output_dir() {
        if (ov_.out) {
            out_dir_ = *ov_.out;
        } else if (const char* env = std::getenv("INDEXPROBE_OUT"); env && *env) {
            out_dir_ = env;
        } else if (config_.contains("output")) {
            out_dir_ = resolve(get_string(config_, "output", "config"));
        } else {
            out_dir_ = resolve("out");
        }
    }

    std::string command_;
    Overrides ov_;
    fs::path config_path_;
    fs::path base_dir_;
    json config_;
    std::string config_hash_;
    fs::path out_dir_;
    std::optional<ZscoreMode> zscore_mode_;
    std::map<std::string, FrameDecl> frame_decls_;
    std::map<std::string, SpatialFrame> frames_;
    std::vector<CrosswalkDecl> crosswalk_decls_;
    std::vector<Crosswalk> crosswalks_;
    bool crosswalks_loaded_ = false;
    std::map<std::string, std::string> inputs_;
    std::map<std::string, std::string> outputs_;
};

void write_ranked(Run& run, const RankedIndex& ranked, const IndexSpec& spec, const std::string& stem) {
    run.write_stream(stem + ".csv", [&](std::ostream& os) { write_ranked_csv(os, ranked); });
    run.write_json(stem + ".json", ranked_metadata(ranked, spec, run.quintile_epsilon));
}

// --- rank -----------------------------------------------------------------

void cmd_rank(Run& run, std::ostream& out) {
    const auto entries = run.spec_list("specs");
    if (entries.empty()) throw config_error("rank: 'specs' is empty");
    std::vector<std::pair<IndexSpec, std::vector<std::string>>> jobs;
    for (const auto& e : entries) {
        IndexSpec spec = run.load_spec(e.path);
        jobs.emplace_back(std::move(spec), e.scale ? std::vector<std::string>{*e.scale} : run.frame_scales());
    }
    std::set<std::string> names;
    for (const auto& [spec, scales] : jobs) {
        for (const auto& scale : scales) {
            const std::string stem = file_stem(spec.name) + "__" + file_stem(scale);
            if (!names.insert(stem).second) throw config_error("rank: two specs named '" + spec.name + "'");
            RankedIndex ranked = rank_index(spec, run.frame(scale));
            write_ranked(run, ranked, spec, stem);
            out << "ranked " << spec.name << " on " << scale << " (" << ranked.size() << " units)\n";
        }
    }
}

// --- sensitivity ----------------------------------------------------------

SpatialFrame complete_cases(const SpatialFrame& frame, const std::vector<IndexSpec>& specs) {
    std::set<std::string> attrs;
    for (const auto& s : specs) {
        for (auto& a : spec_attributes(s)) attrs.insert(std::move(a));
    }
    std::vector<std::size_t> keep;
    for (std::size_t u = 0; u < frame.size(); ++u) {
        bool ok = true;
        for (const auto& a : attrs) {
            if (frame.has_attribute(a) && !frame.attribute(a)[u]) ok = false;
        }
        if (ok) keep.push_back(u);
    }
    return frame.subset(keep);
}

void emit_run(Run& run, const VariantRun& vr, const std::string& stem) {
    run.write_stream(stem + ".transitions.csv",
                     [&](std::ostream& os) { write_transitions_csv(os, classify_transitions(vr)); });
    run.write_json(stem + ".plot.json", plot_json(vr));
    run.write_output(stem + ".svg", scatter_svg(vr));
}

void cmd_sensitivity(Run& run, std::ostream& out) {
    const json block = run.config().value("sensitivity", json::object());
    check_keys(block, {"mode", "frame", "fine", "coarse", "broadcast_attributes", "coarse_ranked"}, "sensitivity");
    const std::string mode = block.contains("mode") ? get_string(block, "mode", "sensitivity") : "specification";
    const auto specs = run.spec_list("specs");
    if (specs.empty()) throw config_error("sensitivity: 'specs' must name the base spec");
    const IndexSpec base = run.load_spec(specs.front().path);

    if (mode == "specification") {
        std::vector<IndexSpec> variants;
        for (const auto& e : run.spec_list("variants")) variants.push_back(run.load_spec(e.path));
        if (variants.empty()) throw config_error("sensitivity: 'variants' is empty");
        std::set<std::string> labels;
        for (const auto& v : variants) {
            if (!labels.insert(v.name).second) throw config_error("sensitivity: two variants named '" + v.name + "'");
        }
        const std::string scale = block.contains("frame") ? get_string(block, "frame", "sensitivity")
                                  : specs.front().scale ? *specs.front().scale
                                                        : run.only_scale("sensitivity");
        SpatialFrame frame = run.frame(scale);
        if (run.fixed_universe) {
            std::vector<IndexSpec> all{base};
            all.insert(all.end(), variants.begin(), variants.end());
            frame = complete_cases(frame, all);
        }
        const auto runs = run_variants(base, variants, frame);
        write_ranked(run, runs.front().base, base, "base__" + file_stem(base.name));
        for (const auto& vr : runs) emit_run(run, vr, file_stem(vr.label()));
        const auto summary = stability_summary(runs, run.jump_threshold);
        json doc = summary_json(summary);
        doc["mode"] = "specification";
        doc["base"] = base.name;
        doc["scale"] = scale;
        run.write_json("summary.json", doc);
        out << "sensitivity: " << runs.size() << " variant(s) over " << summary.n_units << " units, "
            << format_number(100.0 * summary.frac_unchanged_all_variants) << "% unchanged in all\n";
    } else if (mode == "scale") {
        const std::string fine = get_string(block, "fine", "sensitivity");
        const std::string coarse = get_string(block, "coarse", "sensitivity");
        const Crosswalk& cw = run.crosswalk(fine, coarse);
        const SpatialFrame& fine_frame = run.frame(fine);
        RankedIndex coarse_index;
        if (block.contains("coarse_ranked")) {
            const std::string p = get_string(block, "coarse_ranked", "sensitivity");
            run.require_exists(p, "sensitivity coarse_ranked");
            run.note_input(p, run.resolve(p));
            coarse_index = read_ranked_csv(run.resolve(p), base.name, coarse);
        } else {
            coarse_index = rank_index(base, run.frame(coarse));
        }
        ScaleOptions opts;
        if (block.contains("broadcast_attributes")) {
            opts.broadcast_attributes = string_list(block["broadcast_attributes"], "sensitivity.broadcast_attributes");
            if (!opts.broadcast_attributes.empty()) opts.coarse_frame = &run.frame(coarse);
        }
        const VariantRun vr = scale_sensitivity(base, fine_frame, cw, coarse_index, opts);
        const std::string stem = "scale__" + file_stem(coarse) + "__" + file_stem(fine);
        emit_run(run, vr, stem);
        const auto summary = stability_summary({vr}, run.jump_threshold);
        json doc = summary_json(summary);
        doc["mode"] = "scale";
        doc["base"] = base.name;
        doc["fine"] = fine;
        doc["coarse"] = coarse;
        run.write_json("summary.json", doc);
        out << "sensitivity: " << coarse << " -> " << fine << ", "
            << format_number(100.0 * summary.frac_unchanged_all_variants) << "% unchanged\n";
    } else {
        throw config_error("sensitivity: unknown mode '" + mode + "'");
    }
}

// --- validity -------------------------------------------------------------

RankedColumn outcome_column(Run& run, const std::string& path, const std::string& scale, const std::string& label) {
    run.require_exists(path, "outcome");
    run.note_input(path, run.resolve(path));
    const CsvTable t = read_csv(run.resolve(path));
    const std::size_t id = t.column("unit_id");
    const std::size_t val = t.column("value");
    std::map<std::string, double> values;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string field = trim(t.rows[r][val]);
        if (field.empty() || field == "NA") continue;
        auto v = parse_number(field);
        if (!v) throw Error(ErrorCode::Parse, path + ": row " + std::to_string(r + 1) + ": bad value '" + field + "'");
        if (!values.emplace(trim(t.rows[r][id]), *v).second) {
            throw Error(ErrorCode::DuplicateUnit, path + ": unit '" + trim(t.rows[r][id]) + "' repeated");
        }
    }
    return {label, scale, impact_ranking(values)};
}

RankedColumn ranking_column(Run& run, const json& v, const std::string& where) {
    check_keys(v, {"label", "spec", "frame", "attribute", "ranked", "outcome", "scale", "score"}, where);
    const auto label = opt_string(v, "label", where);
    const std::string score = v.contains("score") ? get_string(v, "score", where) : "percentile";
    if (score != "percentile" && score != "quintile") throw config_error(where + ": unknown score '" + score + "'");
    auto pick = [&](const RankedIndex& r) {
        return score == "quintile" ? quintile_column(r, label.value_or(r.spec_name))
                                   : percentile_column(r, label.value_or(r.spec_name));
    };
    auto scale_of = [&] {
        if (v.contains("scale")) return get_string(v, "scale", where);
        return run.only_scale(where);
    };
    if (v.contains("spec")) {
        const IndexSpec spec = run.load_spec(get_string(v, "spec", where));
        return pick(rank_index(spec, run.frame(scale_of())));
    }
    if (v.contains("attribute")) {
        const std::string scale = v.contains("frame") ? get_string(v, "frame", where) : scale_of();
        return column_from_frame(run.frame(scale), get_string(v, "attribute", where), label.value_or(""));
    }
    if (v.contains("ranked")) {
        if (!label) throw config_error(where + ": 'label' is required with 'ranked'");
        const std::string p = get_string(v, "ranked", where);
        run.require_exists(p, where);
        run.note_input(p, run.resolve(p));
        return pick(read_ranked_csv(run.resolve(p), *label, get_string(v, "scale", where)));
    }
    if (v.contains("outcome")) {
        if (!label) throw config_error(where + ": 'label' is required with 'outcome'");
        return outcome_column(run, get_string(v, "outcome", where), get_string(v, "scale", where), *label);
    }
    throw config_error(where + ": needs one of 'spec', 'attribute', 'ranked' or 'outcome'");
}

std::vector<RankedColumn> ranking_columns(Run& run, const json& block, const std::string& key) {
    std::vector<RankedColumn> out;
    if (!block.contains(key)) return out;
    if (!block[key].is_array()) throw config_error("validity." + key + " must be an array");
    for (std::size_t i = 0; i < block[key].size(); ++i) {
        out.push_back(ranking_column(run, block[key][i], "validity." + key + "[" + std::to_string(i) + "]"));
    }
    return out;
}

void write_report(Run& run, const ValidityReport& report, const std::string& stem) {
    run.write_json(stem + ".json", report_json(report));
    run.write_stream(stem + "_spearman.csv", [&](std::ostream& os) { write_matrix_csv(os, report, Statistic::Spearman); });
    run.write_stream(stem + "_kendall.csv", [&](std::ostream& os) { write_matrix_csv(os, report, Statistic::Kendall); });
    run.write_stream(stem + "_n.csv", [&](std::ostream& os) { write_matrix_csv(os, report, Statistic::N); });
}

std::set<std::string> shared_units(const std::vector<RankedColumn>& columns, const PairOptions& options,
                                   const std::vector<Crosswalk>& crosswalks) {
    std::optional<std::string> scale = options.common_scale;
    if (!scale) {
        for (const auto& c : columns) {
            if (scale && *scale != c.scale) {
                throw config_error("validity: fixed_universe across scales needs 'common_scale'");
            }
            scale = c.scale;
        }
    }
    std::optional<std::set<std::string>> common;
    for (const auto& c : columns) {
        const RankedColumn m = materialize(c, *scale, crosswalks);
        std::set<std::string> ids;
        for (const auto& [id, _] : m.values) {
            if (!common || common->count(id)) ids.insert(id);
        }
        common = std::move(ids);
    }
    return common.value_or(std::set<std::string>{});
}

void cmd_validity(Run& run, std::ostream& out) {
    const json block = run.config().value("validity", json::object());
    check_keys(block, {"rankings", "impacts", "comparison", "method", "direction", "common_scale"}, "validity");
    PairOptions opts;
    opts.crosswalks = run.crosswalks();
    opts.common_scale = opt_string(block, "common_scale", "validity");
    if (opts.common_scale) run.frame(*opts.common_scale);
    if (auto d = opt_string(block, "direction", "validity")) {
        if (*d == "fine") {
            opts.direction = PairDirection::Fine;
        } else if (*d == "coarse") {
            opts.direction = PairDirection::Coarse;
        } else {
            throw config_error("validity: unknown direction '" + *d + "'");
        }
    }
    const CorrelationMethod method =
        parse_correlation_method(block.contains("method") ? get_string(block, "method", "validity") : "both");

    const auto rankings = ranking_columns(run, block, "rankings");
    const auto impacts = ranking_columns(run, block, "impacts");
    bool wrote = false;

    if (rankings.size() >= 2) {
        PairOptions o = opts;
        if (run.fixed_universe) o.universe = shared_units(rankings, opts, opts.crosswalks);
        const auto report = correlation_matrix(rankings, o, method);
        write_report(run, report, "convergent");
        out << "validity: convergent matrix over " << report.rows.size() << " rankings\n";
        wrote = true;
    }
    if (!impacts.empty()) {
        if (rankings.empty()) throw config_error("validity: 'impacts' needs at least one entry in 'rankings'");
        PairOptions o = opts;
        if (run.fixed_universe) {
            std::vector<RankedColumn> all = rankings;
            all.insert(all.end(), impacts.begin(), impacts.end());
            o.universe = shared_units(all, opts, opts.crosswalks);
        }
        const auto report = impact_validity(rankings, impacts, o, method);
        write_report(run, report, "predictive");
        out << "validity: predictive table, " << impacts.size() << " impact(s) x " << rankings.size() << " index(es)\n";
        wrote = true;
    }
    if (block.contains("comparison")) {
        const json& c = block["comparison"];
        check_keys(c, {"base", "variants", "scale"}, "validity.comparison");
        const std::string scale = c.contains("scale") ? get_string(c, "scale", "validity.comparison")
                                                      : run.only_scale("validity.comparison");
        const IndexSpec base = run.load_spec(get_string(c, "base", "validity.comparison"));
        if (!c.contains("variants")) throw config_error("validity.comparison: missing 'variants'");
        std::vector<IndexSpec> specs{base};
        for (const auto& p : string_list(c["variants"], "validity.comparison.variants")) specs.push_back(run.load_spec(p));
        SpatialFrame frame = run.frame(scale);
        if (run.fixed_universe) frame = complete_cases(frame, specs);
        const RankedIndex base_ranked = rank_index(base, frame);
        std::vector<RankedIndex> variants;
        for (std::size_t i = 1; i < specs.size(); ++i) variants.push_back(rank_index(specs[i], frame));
        const auto rows = specification_comparison(base_ranked, variants);
        run.write_stream("comparison.csv", [&](std::ostream& os) { write_comparison_csv(os, rows); });
        json doc = comparison_json(rows);
        run.write_json("comparison.json", {{"base", base.name}, {"scale", scale}, {"rows", doc}});
        out << "validity: comparison of " << rows.size() << " variant(s) against " << base.name << "\n";
        wrote = true;
    }
    if (!wrote) throw config_error("validity: nothing to do (need two rankings, impacts or a comparison)");
}

// --- ingest ---------------------------------------------------------------

json mapping_doc(Run& run, const json& entry, const std::string& where) {
    if (!entry.contains("columns")) return json::object();
    const json& c = entry["columns"];
    if (c.is_object()) return c;
    if (!c.is_string()) throw config_error(where + ": 'columns' must be an object or a path");
    const std::string p = c.get<std::string>();
    run.require_exists(p, where + " column mapping");
    run.note_input(p, run.resolve(p));
    try {
        return json::parse(read_text(run.resolve(p)));
    } catch (const json::exception& e) {
        throw config_error(p + ": " + e.what());
    }
}

std::map<std::string, double> population_map(Run& run, const json& spec, const std::string& where) {
    if (spec.is_string()) {
        const std::string p = spec.get<std::string>();
        run.require_exists(p, where + " populations");
        run.note_input(p, run.resolve(p));
        const CsvTable t = read_csv(run.resolve(p));
        const std::size_t id = t.column("unit_id");
        const std::size_t pop = t.column("population");
        std::map<std::string, double> out;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            auto v = parse_number(t.rows[r][pop]);
            if (!v || *v < 0) throw Error(ErrorCode::Parse, p + ": row " + std::to_string(r + 1) + ": bad population");
            out[trim(t.rows[r][id])] = *v;
        }
        return out;
    }
    check_keys(spec, {"frame"}, where + ".populations");
    const SpatialFrame& frame = run.frame(get_string(spec, "frame", where + ".populations"));
    const Column& pop = frame.population();
    std::map<std::string, double> out;
    for (std::size_t u = 0; u < frame.size(); ++u) out[frame.ids()[u]] = pop[u].value_or(0.0);
    return out;
}

OutcomeTable run_pipeline(Run& run, const json& entry, const std::string& where, std::string& name) {
    check_keys(entry,
               {"name", "pipeline", "input", "columns", "populations", "zero_fill", "dedup_threshold", "metric",
                "final_call_types", "descriptors", "duplicate_markers"},
               where);
    const std::string pipeline = get_string(entry, "pipeline", where);
    name = entry.contains("name") ? get_string(entry, "name", where) : pipeline;
    if (pipeline != "outage" && pipeline != "ems" && pipeline != "hydrant") {
        throw config_error(where + ": unknown pipeline '" + pipeline + "'");
    }
    const std::string input = get_string(entry, "input", where);
    run.require_exists(input, where + " input");
    const json mapping = mapping_doc(run, entry, where);
    run.note_input(input, run.resolve(input));
    const CsvTable table = read_csv(run.resolve(input));

    auto only_for = [&](const char* key, const char* owner) {
        if (entry.contains(key) && pipeline != owner) {
            throw config_error(where + ": '" + key + "' applies to the " + owner + " pipeline only");
        }
    };
    only_for("dedup_threshold", "outage");
    only_for("metric", "outage");
    only_for("final_call_types", "ems");
    only_for("zero_fill", "ems");
    only_for("descriptors", "hydrant");
    only_for("duplicate_markers", "hydrant");
    only_for("populations", "hydrant");

    if (pipeline == "outage") {
        OutageOptions o;
        o.period = run.period;
        if (entry.contains("dedup_threshold")) {
            if (!entry["dedup_threshold"].is_number()) throw config_error(where + ": 'dedup_threshold' must be a number");
            o.dedup_threshold = entry["dedup_threshold"].get<double>();
        }
        if (auto m = opt_string(entry, "metric", where)) {
            if (*m == "average-daily-max") {
                o.metric = OutageMetric::AverageDailyMax;
            } else if (*m == "cumulative") {
                o.metric = OutageMetric::Cumulative;
            } else {
                throw config_error(where + ": unknown metric '" + *m + "'");
            }
        }
        return outage_rate(read_outages(table, parse_outage_columns(mapping)), o);
    }
    if (pipeline == "ems") {
        EmsOptions o;
        o.period = run.period;
        if (entry.contains("final_call_types")) {
            auto types = string_list(entry["final_call_types"], where + ".final_call_types");
            o.final_call_types = {types.begin(), types.end()};
        }
        if (entry.contains("zero_fill")) {
            const json& z = entry["zero_fill"];
            if (z.is_array()) {
                o.zero_fill_units = string_list(z, where + ".zero_fill");
            } else {
                check_keys(z, {"frame"}, where + ".zero_fill");
                o.zero_fill_units = run.frame(get_string(z, "frame", where + ".zero_fill")).ids();
            }
        }
        return ems_heat_counts(read_dispatches(table, parse_dispatch_columns(mapping)), o);
    }
    HydrantOptions o;
    o.period = run.period;
    if (entry.contains("descriptors")) {
        auto d = string_list(entry["descriptors"], where + ".descriptors");
        o.descriptors = {d.begin(), d.end()};
    }
    if (entry.contains("duplicate_markers")) {
        o.duplicate_markers = string_list(entry["duplicate_markers"], where + ".duplicate_markers");
    }
    if (!entry.contains("populations")) throw config_error(where + ": hydrant pipeline needs 'populations'");
    const auto pops = population_map(run, entry["populations"], where);
    return hydrant_complaints(read_complaints(table, parse_complaint_columns(mapping)), pops, o);
}

void cmd_ingest(Run& run, std::ostream& out) {
    if (!run.config().contains("impacts") || !run.config()["impacts"].is_array() || run.config()["impacts"].empty()) {
        throw config_error("ingest: 'impacts' must be a non-empty array");
    }
    const json& arr = run.config()["impacts"];
    std::set<std::string> names;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string where = "impacts[" + std::to_string(i) + "]";
        std::string name;
        const OutcomeTable t = run_pipeline(run, arr[i], where, name);
        if (!names.insert(name).second) throw config_error(where + ": output name '" + name + "' used twice");
        const std::string stem = file_stem(name);
        run.write_stream(stem + ".csv", [&](std::ostream& os) { write_outcome_csv(os, t.values); });
        run.write_stream(stem + ".exclusions.csv", [&](std::ostream& os) { write_exclusions_csv(os, t.excluded); });
        json log = outcome_log_json(t);
        log["name"] = name;
        log["window"] = format_date(run.period.window.first) + ":" + format_date(run.period.window.last);
        log["months"] = run.period.months.list();
        run.write_json(stem + ".log.json", log);
        out << "ingest " << name << ": " << t.included_count << " of " << t.input_count << " records kept, "
            << t.values.size() << " units\n";
    }
}

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::Config:
        case ErrorCode::Io:
        case ErrorCode::Spec:
        case ErrorCode::Method:
            return 2;
        default:
            return 1;
    }
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Composite index construction, sensitivity and validity toolkit", "indexprobe"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    Overrides ov;
    std::string chosen;
    for (const char* name : {"rank", "sensitivity", "validity", "ingest"}) {
        static const std::map<std::string, std::string> blurbs{
            {"rank", "evaluate every spec on its frames and write ranked tables"},
            {"sensitivity", "compare quintile assignments across specs or scales"},
            {"validity", "rank correlation and alignment reports"},
            {"ingest", "turn raw impact records into per-unit outcome tables"},
        };
        auto* sub = app.add_subcommand(name, blurbs.at(name));
        sub->add_option("--config", ov.config, "run configuration (JSON)")->required();
        sub->add_option("--months", ov.months, "month filter, e.g. 5-9 or 6,7,8");
        sub->add_option("--window", ov.window, "date window FIRST:LAST (YYYY-MM-DD)");
        sub->add_option("--zscore-mode", ov.zscore_mode, "population or sample");
        sub->add_option("--out", ov.out, "output directory");
        sub->add_flag("--stamp", ov.stamp, "record the wall-clock time in the manifest");
        sub->callback([&chosen, name] { chosen = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        Run r(chosen, ov);
        if (chosen == "rank") {
            cmd_rank(r, out);
        } else if (chosen == "sensitivity") {
            cmd_sensitivity(r, out);
        } else if (chosen == "validity") {
            cmd_validity(r, out);
        } else {
            cmd_ingest(r, out);
        }
        r.write_manifest();
        out << "wrote " << r.output_dir().string() << "\n";
        return 0;
    } catch (const Error& e) {
        err << "indexprobe " << chosen << ": " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "indexprobe " << chosen << ": " << e.what() << "\n";
        return 1;
    }
}

}  // namespace indexprobe::cli
