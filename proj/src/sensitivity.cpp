#include "indexprobe/sensitivity.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "indexprobe/error.hpp"

namespace indexprobe {

std::string to_string(Direction d) {
    switch (d) {
        case Direction::Increase: return "increase";
        case Direction::Decrease: return "decrease";
        case Direction::NoChange: return "no-change";
    }
    return "?";
}

Direction classify_direction(int base_quintile, int variant_quintile) noexcept {
    if (variant_quintile > base_quintile) return Direction::Increase;
    if (variant_quintile < base_quintile) return Direction::Decrease;
    return Direction::NoChange;
}

VariantRun make_variant_run(RankedIndex base, RankedIndex variant) {
    VariantRun run;
    std::set<std::string> ids(base.unit_ids.begin(), base.unit_ids.end());
    ids.insert(variant.unit_ids.begin(), variant.unit_ids.end());
    for (const auto& id : ids) {
        const auto b = base.index_of(id);
        const auto v = variant.index_of(id);
        if (!b) {
            run.excluded.push_back({id, "absent from base"});
            continue;
        }
        if (!v) {
            run.excluded.push_back({id, "absent from variant"});
            continue;
        }
        if (!base.percentile[*b]) {
            run.excluded.push_back({id, "missing in base"});
            continue;
        }
        if (!variant.percentile[*v]) {
            run.excluded.push_back({id, "missing in variant"});
            continue;
        }
        run.pairing.push_back({id, *base.percentile[*b], *variant.percentile[*v], *base.quintile[*b],
                               *variant.quintile[*v]});
    }
    run.base = std::move(base);
    run.variant = std::move(variant);
    return run;
}

std::vector<TransitionRecord> classify_transitions(const VariantRun& run) {
    std::vector<TransitionRecord> out;
    out.reserve(run.pairing.size());
    for (const auto& p : run.pairing) {
        out.push_back({p.unit_id, classify_direction(p.base_quintile, p.variant_quintile), p.base_quintile,
                       p.variant_quintile, p.base_percentile, p.variant_percentile});
    }
    return out;
}

std::vector<VariantRun> run_variants(const IndexSpec& base_spec, const std::vector<IndexSpec>& variant_specs,
                                     const SpatialFrame& frame) {
    auto ranked = [&](const IndexSpec& spec) {
        try {
            return rank_index(spec, frame);
        } catch (const Error& e) {
            throw Error(e.code(), "spec '" + spec.name + "': " + e.detail());
        }
    };
    std::vector<VariantRun> runs;
    if (variant_specs.empty()) return runs;
    const RankedIndex base = ranked(base_spec);
    runs.reserve(variant_specs.size());
    for (const auto& spec : variant_specs) runs.push_back(make_variant_run(base, ranked(spec)));
    return runs;
}

StabilitySummary stability_summary(const std::vector<VariantRun>& runs, int jump_threshold) {
    StabilitySummary s;
    s.jump_threshold = jump_threshold;
    s.pooled.variant = "all";
    if (runs.empty()) return s;

    const auto& unit_ids = runs.front().base.unit_ids;
    for (const auto& run : runs) {
        if (run.base.unit_ids != unit_ids) {
            throw Error(ErrorCode::UnitSet, "run '" + run.label() + "' does not share the base unit set");
        }
    }
    s.n_units = unit_ids.size();

    std::map<std::string, std::size_t> seen;     // unit -> runs it was paired in
    std::map<std::string, bool> unchanged_all;
    for (const auto& run : runs) {
        TransitionCounts counts;
        counts.variant = run.label();
        for (const auto& p : run.pairing) {
            ++counts.n;
            ++seen[p.unit_id];
            const Direction d = classify_direction(p.base_quintile, p.variant_quintile);
            auto [it, inserted] = unchanged_all.emplace(p.unit_id, true);
            if (d != Direction::NoChange) it->second = false;
            switch (d) {
                case Direction::NoChange: ++counts.unchanged; break;
                case Direction::Increase: ++counts.increased; break;
                case Direction::Decrease: ++counts.decreased; break;
            }
            if (std::abs(p.variant_quintile - p.base_quintile) >= jump_threshold) {
                s.flagged_jumps.push_back({p.unit_id, run.label(), p.base_quintile, p.variant_quintile});
            }
        }
        s.pooled.n += counts.n;
        s.pooled.unchanged += counts.unchanged;
        s.pooled.increased += counts.increased;
        s.pooled.decreased += counts.decreased;
        s.pairwise.push_back(std::move(counts));
    }

    for (const auto& id : unit_ids) {
        auto it = seen.find(id);
        if (it == seen.end() || it->second != runs.size()) {
            s.excluded_units.push_back(id);
            continue;
        }
        ++s.n_complete;
        if (unchanged_all[id]) ++s.n_unchanged_all;
    }
    s.frac_unchanged_all_variants = s.n_complete ? double(s.n_unchanged_all) / double(s.n_complete) : 0.0;
    return s;
}

SpatialFrame broadcast_attributes(const SpatialFrame& fine_frame, const SpatialFrame& coarse_frame,
                                  const Crosswalk& crosswalk, const std::vector<std::string>& names) {
    std::map<std::string, std::size_t> coarse_pos;
    for (std::size_t i = 0; i < coarse_frame.size(); ++i) coarse_pos.emplace(coarse_frame.ids()[i], i);
    const auto parent = broadcast_parent(coarse_pos, crosswalk);

    SpatialFrame out = fine_frame;
    for (const auto& name : names) {
        const Column& coarse = coarse_frame.attribute(name);
        Column fine(fine_frame.size());
        for (std::size_t u = 0; u < fine_frame.size(); ++u) {
            auto it = parent.find(fine_frame.ids()[u]);
            if (it == parent.end()) {
                throw Error(ErrorCode::MissingParent, "unit '" + fine_frame.ids()[u] + "' is not in the crosswalk");
            }
            fine[u] = coarse[it->second];
        }
        out = out.with_attribute(name, std::move(fine));
    }
    return out;
}

VariantRun scale_sensitivity(const IndexSpec& spec, const SpatialFrame& fine_frame, const Crosswalk& crosswalk,
                             const RankedIndex& coarse_index, const ScaleOptions& options) {
    if (crosswalk.source_scale() != fine_frame.scale()) {
        throw Error(ErrorCode::Scale, "crosswalk source scale '" + crosswalk.source_scale() +
                                          "' does not match fine frame scale '" + fine_frame.scale() + "'");
    }
    if (crosswalk.target_scale() != coarse_index.scale) {
        throw Error(ErrorCode::Scale, "crosswalk target scale '" + crosswalk.target_scale() +
                                          "' does not match coarse index scale '" + coarse_index.scale + "'");
    }

    std::map<std::string, std::size_t> coarse_pos;
    for (std::size_t i = 0; i < coarse_index.size(); ++i) coarse_pos.emplace(coarse_index.unit_ids[i], i);
    const auto parent = broadcast_parent(coarse_pos, crosswalk);

    RankedIndex base;
    base.spec_name = coarse_index.spec_name;
    base.scale = fine_frame.scale();
    base.unit_ids = fine_frame.ids();
    base.degenerate_inputs = coarse_index.degenerate_inputs;
    for (const auto& id : fine_frame.ids()) {
        auto it = parent.find(id);
        if (it == parent.end()) throw Error(ErrorCode::MissingParent, "unit '" + id + "' is not in the crosswalk");
        base.raw.push_back(coarse_index.raw[it->second]);
        base.percentile.push_back(coarse_index.percentile[it->second]);
        base.quintile.push_back(coarse_index.quintile[it->second]);
    }

    SpatialFrame frame = fine_frame;
    if (!options.broadcast_attributes.empty()) {
        if (!options.coarse_frame) {
            throw Error(ErrorCode::Config, "broadcast attributes requested without a coarse frame");
        }
        frame = broadcast_attributes(fine_frame, *options.coarse_frame, crosswalk, options.broadcast_attributes);
    }
    return make_variant_run(std::move(base), rank_index(spec, frame));
}

void write_transitions_csv(std::ostream& os, const std::vector<TransitionRecord>& records) {
    write_csv_row(os, {"unit_id", "base_quintile", "variant_quintile", "direction", "base_percentile",
                       "variant_percentile"});
    for (const auto& r : records) {
        write_csv_row(os, {r.unit_id, std::to_string(r.base_quintile), std::to_string(r.variant_quintile),
                           to_string(r.direction), format_number(r.base_percentile),
                           format_number(r.variant_percentile)});
    }
}

namespace {

nlohmann::json counts_json(const TransitionCounts& c) {
    return {{"variant", c.variant},
            {"n", c.n},
            {"unchanged", c.unchanged},
            {"increased", c.increased},
            {"decreased", c.decreased},
            {"frac_unchanged", c.frac_unchanged()},
            {"frac_increased", c.frac_increased()},
            {"frac_decreased", c.frac_decreased()}};
}

std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string xml_escape(const std::string& text) {
    std::string out;
    for (char c : text) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

}  // namespace

nlohmann::json summary_json(const StabilitySummary& s) {
    nlohmann::json out;
    out["n_units"] = s.n_units;
    out["n_complete"] = s.n_complete;
    out["n_unchanged_all_variants"] = s.n_unchanged_all;
    out["frac_unchanged_all_variants"] = s.frac_unchanged_all_variants;
    out["pairwise"] = nlohmann::json::array();
    for (const auto& c : s.pairwise) out["pairwise"].push_back(counts_json(c));
    out["pooled"] = counts_json(s.pooled);
    out["jump_threshold"] = s.jump_threshold;
    out["flagged_jumps"] = nlohmann::json::array();
    for (const auto& j : s.flagged_jumps) {
        out["flagged_jumps"].push_back({{"unit_id", j.unit_id},
                                        {"variant", j.variant},
                                        {"base_quintile", j.base_quintile},
                                        {"variant_quintile", j.variant_quintile}});
    }
    out["excluded_units"] = s.excluded_units;
    return out;
}

nlohmann::json plot_json(const VariantRun& run) {
    nlohmann::json out;
    out["base"] = run.base.spec_name;
    out["variant"] = run.label();
    out["x"] = "base_percentile";
    out["y"] = "variant_percentile";
    out["thresholds"] = {20, 40, 60, 80};
    out["points"] = nlohmann::json::array();
    for (const auto& t : classify_transitions(run)) {
        out["points"].push_back(
            {{"unit_id", t.unit_id}, {"x", t.base_percentile}, {"y", t.variant_percentile}, {"class", to_string(t.direction)}});
    }
    return out;
}

std::string scatter_svg(const VariantRun& run) {
    constexpr double margin = 50.0;
    constexpr double side = 320.0;
    constexpr double total = side + 2 * margin;
    auto px = [&](double p) { return fixed2(margin + p / 100.0 * side); };
    auto py = [&](double p) { return fixed2(margin + side - p / 100.0 * side); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << total << "\" height=\"" << total
        << "\" viewBox=\"0 0 " << total << ' ' << total << "\">\n";
    svg << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << side << "\" height=\"" << side
        << "\" fill=\"none\" stroke=\"#000\"/>\n";
    for (int t : {20, 40, 60, 80}) {
        svg << "<line class=\"grid\" x1=\"" << px(t) << "\" y1=\"" << py(0) << "\" x2=\"" << px(t) << "\" y2=\"" << py(100)
            << "\" stroke=\"#bbb\" stroke-dasharray=\"4 3\"/>\n";
        svg << "<line class=\"grid\" x1=\"" << px(0) << "\" y1=\"" << py(t) << "\" x2=\"" << px(100) << "\" y2=\"" << py(t)
            << "\" stroke=\"#bbb\" stroke-dasharray=\"4 3\"/>\n";
    }
    for (const auto& t : classify_transitions(run)) {
        const char* color = t.direction == Direction::Increase   ? "#2e8b57"
                            : t.direction == Direction::Decrease ? "#d4a017"
                                                                 : "#999999";
        svg << "<circle cx=\"" << px(t.base_percentile) << "\" cy=\"" << py(t.variant_percentile)
            << "\" r=\"3\" fill=\"" << color << "\"><title>" << xml_escape(t.unit_id) << "</title></circle>\n";
    }
    svg << "<text x=\"" << fixed2(margin + side / 2) << "\" y=\"" << fixed2(total - 12)
        << "\" text-anchor=\"middle\" font-size=\"12\">" << xml_escape(run.base.spec_name) << " percentile</text>\n";
    svg << "<text x=\"14\" y=\"" << fixed2(margin + side / 2) << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 "
        << fixed2(margin + side / 2) << ")\">" << xml_escape(run.label()) << " percentile</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace indexprobe
