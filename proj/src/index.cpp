#include "indexprobe/index.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "indexprobe/error.hpp"

namespace indexprobe {

namespace {

constexpr std::array<double, 4> kQuintileThresholds{20.0, 40.0, 60.0, 80.0};

void reject_unknown_keys(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed,
                         const std::string& where) {
    if (!obj.is_object()) throw Error(ErrorCode::Spec, where + " must be a JSON object");
    for (const auto& [key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw Error(ErrorCode::Spec, where + ": unknown key '" + key + "'");
        }
    }
}

Method parse_method(const std::string& text) {
    if (text == "additive-z") return Method::AdditiveZ;
    if (text == "hierarchical") return Method::Hierarchical;
    if (text == "risk-formula") return Method::RiskFormula;
    throw Error(ErrorCode::Spec, "unknown method '" + text + "'");
}

RiskTransform parse_transform(const std::string& text) {
    if (text == "identity") return RiskTransform::Identity;
    if (text == "minmax") return RiskTransform::MinMax;
    if (text == "one") return RiskTransform::One;
    throw Error(ErrorCode::Spec, "unknown risk transform '" + text + "'");
}

void require_method(const IndexSpec& spec, Method expected) {
    if (spec.method != expected) {
        throw Error(ErrorCode::Method, "spec '" + spec.name + "' has method " + to_string(spec.method) +
                                           ", expected " + to_string(expected));
    }
}

// Adds sign * z(attribute) for each term into raw; a missing z makes the unit missing.
void accumulate_terms(const std::vector<const IndexTerm*>& terms, const SpatialFrame& frame, ZscoreMode mode,
                      Column& raw, std::vector<bool>& missing, std::vector<std::string>& degenerate) {
    for (const IndexTerm* term : terms) {
        const ZscoreResult z = zscore(frame.attribute(term->attribute), mode);
        if (z.degenerate &&
            std::find(degenerate.begin(), degenerate.end(), term->attribute) == degenerate.end()) {
            degenerate.push_back(term->attribute);
        }
        for (std::size_t u = 0; u < raw.size(); ++u) {
            if (!z.values[u]) {
                missing[u] = true;
                continue;
            }
            *raw[u] += term->sign * *z.values[u];
        }
    }
    for (std::size_t u = 0; u < raw.size(); ++u) {
        if (missing[u]) raw[u].reset();
    }
}

}  // namespace

std::string to_string(Method method) {
    switch (method) {
        case Method::AdditiveZ: return "additive-z";
        case Method::Hierarchical: return "hierarchical";
        case Method::RiskFormula: return "risk-formula";
    }
    return "?";
}

std::string to_string(ZscoreMode mode) { return mode == ZscoreMode::Population ? "population" : "sample"; }

std::string to_string(RiskTransform transform) {
    switch (transform) {
        case RiskTransform::Identity: return "identity";
        case RiskTransform::MinMax: return "minmax";
        case RiskTransform::One: return "one";
    }
    return "?";
}

ZscoreMode parse_zscore_mode(const std::string& text) {
    if (text == "population") return ZscoreMode::Population;
    if (text == "sample") return ZscoreMode::Sample;
    throw Error(ErrorCode::Config, "unknown zscore mode '" + text + "' (expected population or sample)");
}

void IndexSpec::validate() const {
    if (name.empty()) throw Error(ErrorCode::Spec, "spec has no name");
    for (const auto& t : terms) {
        if (t.sign != 1 && t.sign != -1) {
            throw Error(ErrorCode::Spec, "spec '" + name + "': term '" + t.attribute + "' sign must be +1 or -1");
        }
        if (t.attribute.empty()) throw Error(ErrorCode::Spec, "spec '" + name + "': term with empty attribute");
    }
    switch (method) {
        case Method::AdditiveZ:
            if (terms.empty()) throw Error(ErrorCode::Spec, "spec '" + name + "': additive-z needs at least one term");
            break;
        case Method::Hierarchical:
            if (terms.empty()) throw Error(ErrorCode::Spec, "spec '" + name + "': hierarchical needs at least one term");
            for (const auto& t : terms) {
                if (!t.group || t.group->empty()) {
                    throw Error(ErrorCode::Spec, "spec '" + name + "': term '" + t.attribute + "' has no group");
                }
            }
            break;
        case Method::RiskFormula:
            if (!risk_inputs || risk_inputs->eal.empty() || risk_inputs->sv.empty() || risk_inputs->cr.empty()) {
                throw Error(ErrorCode::Spec, "spec '" + name + "': risk-formula needs eal, sv and cr");
            }
            if (risk_inputs->transform == RiskTransform::MinMax && !(risk_inputs->f_lo <= risk_inputs->f_hi)) {
                throw Error(ErrorCode::Spec, "spec '" + name + "': f_lo must not exceed f_hi");
            }
            break;
    }
}

IndexSpec parse_index_spec(const nlohmann::json& doc) {
    reject_unknown_keys(doc, {"name", "method", "zscore_mode", "terms", "risk_inputs"}, "index spec");
    IndexSpec spec;
    try {
        spec.name = doc.at("name").get<std::string>();
        spec.method = parse_method(doc.at("method").get<std::string>());
        if (doc.contains("zscore_mode")) {
            const auto mode = doc["zscore_mode"].get<std::string>();
            if (mode != "population" && mode != "sample") {
                throw Error(ErrorCode::Spec, "unknown zscore_mode '" + mode + "'");
            }
            spec.zscore_mode = parse_zscore_mode(mode);
        }
        for (const auto& t : doc.value("terms", nlohmann::json::array())) {
            reject_unknown_keys(t, {"attribute", "sign", "group"}, "index spec term");
            IndexTerm term;
            term.attribute = t.at("attribute").get<std::string>();
            term.sign = t.value("sign", 1);
            if (t.contains("group") && !t["group"].is_null()) term.group = t["group"].get<std::string>();
            spec.terms.push_back(std::move(term));
        }
        if (doc.contains("risk_inputs") && !doc["risk_inputs"].is_null()) {
            const auto& r = doc["risk_inputs"];
            reject_unknown_keys(r, {"eal", "sv", "cr", "transform", "f_lo", "f_hi"}, "index spec risk_inputs");
            RiskInputs inputs;
            inputs.eal = r.at("eal").get<std::string>();
            inputs.sv = r.at("sv").get<std::string>();
            inputs.cr = r.at("cr").get<std::string>();
            inputs.transform = parse_transform(r.value("transform", std::string("identity")));
            inputs.f_lo = r.value("f_lo", 0.0);
            inputs.f_hi = r.value("f_hi", 1.0);
            spec.risk_inputs = std::move(inputs);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Spec, std::string("index spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

nlohmann::json to_json(const IndexSpec& spec) {
    nlohmann::json doc;
    doc["name"] = spec.name;
    doc["method"] = to_string(spec.method);
    doc["zscore_mode"] = to_string(spec.zscore_mode);
    doc["terms"] = nlohmann::json::array();
    for (const auto& t : spec.terms) {
        nlohmann::json term{{"attribute", t.attribute}, {"sign", t.sign}};
        if (t.group) term["group"] = *t.group;
        doc["terms"].push_back(std::move(term));
    }
    if (spec.risk_inputs) {
        const auto& r = *spec.risk_inputs;
        doc["risk_inputs"] = {{"eal", r.eal}, {"sv", r.sv},     {"cr", r.cr},
                              {"transform", to_string(r.transform)}, {"f_lo", r.f_lo}, {"f_hi", r.f_hi}};
    }
    return doc;
}

IndexSpec load_index_spec(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text(path);
    } catch (const Error&) {
        throw Error(ErrorCode::Config, "cannot read index spec '" + path.string() + "'");
    }
    try {
        return parse_index_spec(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Spec, path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.detail());
    }
}

std::string spec_hash(const IndexSpec& spec) { return hex64(fnv1a64(to_json(spec).dump())); }

ZscoreResult zscore(const Column& values, ZscoreMode mode) {
    std::size_t n = 0;
    double sum = 0.0;
    double lo = 0.0, hi = 0.0;
    for (const auto& v : values) {
        if (!v) continue;
        if (n == 0) lo = hi = *v;
        lo = std::min(lo, *v);
        hi = std::max(hi, *v);
        sum += *v;
        ++n;
    }
    if (n < 2) throw Error(ErrorCode::InsufficientData, "z-score needs at least 2 non-missing values, got " + std::to_string(n));

    ZscoreResult out;
    out.values.resize(values.size());
    if (lo == hi) {
        out.degenerate = true;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (values[i]) out.values[i] = 0.0;
        }
        return out;
    }

    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& v : values) {
        if (v) ss += (*v - mean) * (*v - mean);
    }
    const double denom = mode == ZscoreMode::Population ? static_cast<double>(n) : static_cast<double>(n - 1);
    const double sd = std::sqrt(ss / denom);
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i]) out.values[i] = (*values[i] - mean) / sd;
    }
    return out;
}

RawScores evaluate_spec(const IndexSpec& spec, const SpatialFrame& frame) {
    require_method(spec, Method::AdditiveZ);
    spec.validate();
    for (const auto& t : spec.terms) frame.attribute(t.attribute);

    RawScores out;
    out.raw.assign(frame.size(), 0.0);
    std::vector<bool> missing(frame.size(), false);
    std::vector<const IndexTerm*> terms;
    for (const auto& t : spec.terms) terms.push_back(&t);
    accumulate_terms(terms, frame, spec.zscore_mode, out.raw, missing, out.degenerate_inputs);
    return out;
}

RawScores evaluate_hierarchical(const IndexSpec& spec, const SpatialFrame& frame) {
    require_method(spec, Method::Hierarchical);
    spec.validate();
    for (const auto& t : spec.terms) frame.attribute(t.attribute);

    // Groups in order of first appearance.
    std::vector<std::string> groups;
    for (const auto& t : spec.terms) {
        if (std::find(groups.begin(), groups.end(), *t.group) == groups.end()) groups.push_back(*t.group);
    }

    RawScores out;
    const std::size_t n = frame.size();
    std::vector<double> total(n, 0.0);
    std::vector<bool> missing(n, false);
    for (const auto& g : groups) {
        std::vector<const IndexTerm*> members;
        for (const auto& t : spec.terms) {
            if (*t.group == g) members.push_back(&t);
        }
        if (members.empty()) throw Error(ErrorCode::Spec, "spec '" + spec.name + "': group '" + g + "' is empty");
        Column sub(n, 0.0);
        std::vector<bool> sub_missing(n, false);
        accumulate_terms(members, frame, spec.zscore_mode, sub, sub_missing, out.degenerate_inputs);
        const Column pct = percentile_rank(sub);
        for (std::size_t u = 0; u < n; ++u) {
            if (!pct[u]) {
                missing[u] = true;
            } else {
                total[u] += *pct[u];
            }
        }
    }
    out.raw.resize(n);
    for (std::size_t u = 0; u < n; ++u) {
        if (!missing[u]) out.raw[u] = total[u] / static_cast<double>(groups.size());
    }
    return out;
}

RawScores evaluate_risk_formula(const IndexSpec& spec, const SpatialFrame& frame) {
    require_method(spec, Method::RiskFormula);
    spec.validate();
    const RiskInputs& in = *spec.risk_inputs;
    const Column& eal = frame.attribute(in.eal);
    const std::size_t n = frame.size();

    RawScores out;
    out.raw.resize(n);
    for (std::size_t u = 0; u < n; ++u) {
        if (eal[u] && *eal[u] < 0.0) {
            throw Error(ErrorCode::Domain, "unit '" + frame.ids()[u] + "': expected annual loss is negative");
        }
    }
    if (in.transform == RiskTransform::One) {
        out.raw = eal;
        return out;
    }

    const Column& sv = frame.attribute(in.sv);
    const Column& cr = frame.attribute(in.cr);
    Column ratio(n);
    for (std::size_t u = 0; u < n; ++u) {
        if (cr[u] && *cr[u] <= 0.0) {
            throw Error(ErrorCode::Domain, "unit '" + frame.ids()[u] + "': community resilience must be positive");
        }
        if (sv[u] && cr[u]) ratio[u] = *sv[u] / *cr[u];
    }

    if (in.transform == RiskTransform::MinMax) {
        double lo = 0.0, hi = 0.0;
        bool any = false;
        for (const auto& r : ratio) {
            if (!r) continue;
            if (!any) lo = hi = *r;
            lo = std::min(lo, *r);
            hi = std::max(hi, *r);
            any = true;
        }
        if (any && lo == hi) {
            out.degenerate_inputs.push_back(in.sv + "/" + in.cr);
        }
        for (auto& r : ratio) {
            if (!r) continue;
            r = (lo == hi) ? 0.5 * (in.f_lo + in.f_hi) : in.f_lo + (in.f_hi - in.f_lo) * ((*r - lo) / (hi - lo));
        }
    }

    for (std::size_t u = 0; u < n; ++u) {
        if (eal[u] && ratio[u]) out.raw[u] = *eal[u] * *ratio[u];
    }
    return out;
}

RawScores evaluate(const IndexSpec& spec, const SpatialFrame& frame) {
    switch (spec.method) {
        case Method::AdditiveZ: return evaluate_spec(spec, frame);
        case Method::Hierarchical: return evaluate_hierarchical(spec, frame);
        case Method::RiskFormula: return evaluate_risk_formula(spec, frame);
    }
    throw Error(ErrorCode::Method, "unknown method");
}

Column percentile_rank(const Column& values) {
    std::vector<std::size_t> order;
    order.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i]) order.push_back(i);
    }
    if (order.empty()) throw Error(ErrorCode::InsufficientData, "percentile rank of an all-missing column");
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return *values[a] < *values[b]; });

    const double n = static_cast<double>(order.size());
    Column out(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && *values[order[j + 1]] == *values[order[i]]) ++j;
        // Positions i..j (0-based) share ranks i+1..j+1.
        const double avg_rank = static_cast<double>(i + j + 2) / 2.0;
        const double pct = 100.0 * avg_rank / n;
        for (std::size_t k = i; k <= j; ++k) out[order[k]] = pct;
        i = j + 1;
    }
    return out;
}

int quintile_score(double percentile) {
    if (!(percentile > 0.0 && percentile <= 100.0)) {
        std::ostringstream msg;
        msg << "percentile " << percentile << " is outside (0, 100]";
        throw Error(ErrorCode::Domain, msg.str());
    }
    int score = 1;
    for (double t : kQuintileThresholds) {
        if (percentile <= t) return score;
        ++score;
    }
    return score;
}

std::vector<std::optional<int>> quintile_scores(const Column& percentiles) {
    std::vector<std::optional<int>> out(percentiles.size());
    for (std::size_t i = 0; i < percentiles.size(); ++i) {
        if (percentiles[i]) out[i] = quintile_score(*percentiles[i]);
    }
    return out;
}

std::optional<std::size_t> RankedIndex::index_of(const std::string& id) const {
    auto it = std::lower_bound(unit_ids.begin(), unit_ids.end(), id);
    if (it == unit_ids.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - unit_ids.begin());
}

RankedIndex rank_index(const IndexSpec& spec, const SpatialFrame& frame) {
    RawScores scores = evaluate(spec, frame);
    RankedIndex out;
    out.spec_name = spec.name;
    out.scale = frame.scale();
    out.unit_ids = frame.ids();
    out.percentile = percentile_rank(scores.raw);
    out.quintile = quintile_scores(out.percentile);
    out.raw = std::move(scores.raw);
    out.degenerate_inputs = std::move(scores.degenerate_inputs);
    return out;
}

std::vector<NearThreshold> near_threshold_units(const RankedIndex& ranked, double epsilon) {
    std::vector<NearThreshold> out;
    for (std::size_t u = 0; u < ranked.size(); ++u) {
        const auto& p = ranked.percentile[u];
        if (!p) continue;
        for (double t : kQuintileThresholds) {
            if (std::abs(*p - t) < epsilon) {
                out.push_back({ranked.unit_ids[u], *p, t});
                break;
            }
        }
    }
    return out;
}

void write_ranked_csv(std::ostream& os, const RankedIndex& ranked) {
    write_csv_row(os, {"unit_id", "raw", "percentile", "quintile"});
    for (std::size_t u = 0; u < ranked.size(); ++u) {
        write_csv_row(os, {ranked.unit_ids[u], format_optional(ranked.raw[u]), format_optional(ranked.percentile[u]),
                           ranked.quintile[u] ? std::to_string(*ranked.quintile[u]) : std::string()});
    }
}

RankedIndex read_ranked_csv(const std::filesystem::path& path, const std::string& spec_name,
                            const std::string& scale) {
    const CsvTable table = read_csv(path);
    const std::size_t id_col = table.column("unit_id");
    const auto raw_col = table.find_column("raw");
    const std::size_t pct_col = table.column("percentile");
    const auto q_col = table.find_column("quintile");

    std::vector<std::string> ids;
    std::map<std::string, Column> cols;
    Column& raw = cols["raw"];
    Column& pct = cols["percentile"];
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        ids.push_back(trim(row[id_col]));
        auto parse = [&](std::size_t c) -> Value {
            if (trim(row[c]).empty()) return std::nullopt;
            auto v = parse_number(row[c]);
            if (!v) {
                throw Error(ErrorCode::Parse, path.string() + ": row " + std::to_string(r + 1) + ", column '" +
                                                  table.header[c] + "' is not a number");
            }
            return v;
        };
        raw.push_back(raw_col ? parse(*raw_col) : Value{});
        pct.push_back(parse(pct_col));
        if (q_col) parse(*q_col);
    }
    // Reuse the frame constructor for canonical ordering and duplicate detection.
    const SpatialFrame frame(scale, std::move(ids), std::move(cols));
    RankedIndex out;
    out.spec_name = spec_name;
    out.scale = scale;
    out.unit_ids = frame.ids();
    out.raw = frame.attribute("raw");
    out.percentile = frame.attribute("percentile");
    out.quintile = quintile_scores(out.percentile);
    return out;
}

nlohmann::json ranked_metadata(const RankedIndex& ranked, const IndexSpec& spec, double epsilon) {
    nlohmann::json meta;
    meta["spec_name"] = spec.name;
    meta["spec_hash"] = spec_hash(spec);
    meta["method"] = to_string(spec.method);
    meta["zscore_mode"] = to_string(spec.zscore_mode);
    meta["scale"] = ranked.scale;
    meta["n_units"] = ranked.size();
    std::size_t missing = 0;
    for (const auto& p : ranked.percentile) missing += p ? 0 : 1;
    meta["n_missing"] = missing;
    meta["degenerate_inputs"] = ranked.degenerate_inputs;
    meta["percentile_convention"] = "100*average_rank/n";
    meta["quintile_thresholds"] = std::vector<double>(kQuintileThresholds.begin(), kQuintileThresholds.end());
    meta["near_threshold_epsilon"] = epsilon;
    nlohmann::json near = nlohmann::json::array();
    for (const auto& nt : near_threshold_units(ranked, epsilon)) {
        near.push_back({{"unit_id", nt.unit_id}, {"percentile", nt.percentile}, {"threshold", nt.threshold}});
    }
    meta["near_threshold_units"] = std::move(near);
    return meta;
}

}  // namespace indexprobe
