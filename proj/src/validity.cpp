#include "indexprobe/validity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "indexprobe/error.hpp"

namespace indexprobe {

namespace {

const Crosswalk* find_crosswalk(const std::vector<Crosswalk>& crosswalks, const std::string& source,
                                const std::string& target) {
    for (const auto& cw : crosswalks) {
        if (cw.source_scale() == source && cw.target_scale() == target) return &cw;
    }
    return nullptr;
}

Crosswalk resolved(const Crosswalk& cw) { return cw.is_resolved() ? cw : resolve_highest_overlap(cw); }

// Coarse side averaged over the fine units mapped to each coarse unit.
RankedColumn average_onto(const RankedColumn& fine, const std::string& coarse_scale, const Crosswalk& cw) {
    RankedColumn out{fine.label, coarse_scale, {}};
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (const auto& link : cw.links()) {
        auto it = fine.values.find(link.source_id);
        if (it == fine.values.end()) continue;
        auto& a = acc[link.target_id];
        a.first += it->second;
        ++a.second;
    }
    for (const auto& [id, a] : acc) out.values.emplace(id, a.first / static_cast<double>(a.second));
    return out;
}

std::uint64_t tie_pairs(std::uint64_t run) { return run * (run - 1) / 2; }

// Sorts v in place, returning the number of strictly inverted pairs.
std::uint64_t count_inversions(std::vector<double>& v, std::vector<double>& scratch, std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::uint64_t inv = count_inversions(v, scratch, lo, mid) + count_inversions(v, scratch, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            inv += mid - i;
            scratch[k++] = v[j++];
        } else {
            scratch[k++] = v[i++];
        }
    }
    while (i < mid) scratch[k++] = v[i++];
    while (j < hi) scratch[k++] = v[j++];
    std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo), scratch.begin() + static_cast<std::ptrdiff_t>(hi),
              v.begin() + static_cast<std::ptrdiff_t>(lo));
    return inv;
}

void check_pair_size(const PairedRanking& p) {
    if (p.n() < 2) {
        throw Error(ErrorCode::InsufficientData, "'" + p.label_a + "' vs '" + p.label_b + "': only " +
                                                     std::to_string(p.n()) + " paired units");
    }
}

void fill_entry(CorrelationEntry& e, const RankedColumn& a, const RankedColumn& b, const PairOptions& options,
                CorrelationMethod method) {
    try {
        const PairedRanking p = pair(a, b, options);
        e.n = p.n();
        e.n_dropped = p.dropped.size();
        if (method != CorrelationMethod::Kendall) e.spearman = spearman(p);
        if (method != CorrelationMethod::Spearman) e.kendall = kendall_tau(p);
    } catch (const Error& err) {
        e.error = err.what();
    }
}

void require_unique_labels(const std::vector<RankedColumn>& cols) {
    for (std::size_t i = 1; i < cols.size(); ++i) {
        if (cols[i].label == cols[i - 1].label) {
            throw Error(ErrorCode::Config, "ranking label '" + cols[i].label + "' used more than once");
        }
    }
}

void sort_by_label(std::vector<RankedColumn>& cols) {
    std::sort(cols.begin(), cols.end(),
              [](const RankedColumn& x, const RankedColumn& y) { return x.label < y.label; });
    require_unique_labels(cols);
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

RankedColumn percentile_column(const RankedIndex& ranked, std::string label) {
    RankedColumn out{label.empty() ? ranked.spec_name : std::move(label), ranked.scale, {}};
    for (std::size_t u = 0; u < ranked.size(); ++u) {
        if (ranked.percentile[u]) out.values.emplace(ranked.unit_ids[u], *ranked.percentile[u]);
    }
    return out;
}

RankedColumn quintile_column(const RankedIndex& ranked, std::string label) {
    RankedColumn out{label.empty() ? ranked.spec_name : std::move(label), ranked.scale, {}};
    for (std::size_t u = 0; u < ranked.size(); ++u) {
        if (ranked.quintile[u]) out.values.emplace(ranked.unit_ids[u], *ranked.quintile[u]);
    }
    return out;
}

RankedColumn column_from_frame(const SpatialFrame& frame, const std::string& attribute, std::string label) {
    RankedColumn out{label.empty() ? attribute : std::move(label), frame.scale(), {}};
    const Column& col = frame.attribute(attribute);
    for (std::size_t u = 0; u < frame.size(); ++u) {
        if (col[u]) out.values.emplace(frame.ids()[u], *col[u]);
    }
    return out;
}

RankedColumn materialize(const RankedColumn& column, const std::string& scale,
                         const std::vector<Crosswalk>& crosswalks) {
    if (column.scale == scale) return column;
    const Crosswalk* cw = find_crosswalk(crosswalks, scale, column.scale);
    if (!cw) {
        throw Error(ErrorCode::Scale, "no crosswalk from '" + scale + "' to '" + column.scale + "' for '" +
                                          column.label + "'");
    }
    RankedColumn out{column.label, scale, {}};
    const Crosswalk r = resolved(*cw);
    for (const auto& link : r.links()) {
        auto it = column.values.find(link.target_id);
        if (it != column.values.end()) out.values.emplace(link.source_id, it->second);
    }
    return out;
}

PairedRanking pair(const RankedColumn& a_in, const RankedColumn& b_in, const PairOptions& options) {
    RankedColumn a = a_in;
    RankedColumn b = b_in;
    PairedRanking p;
    p.label_a = a.label;
    p.label_b = b.label;

    if (options.common_scale) {
        a = materialize(a, *options.common_scale, options.crosswalks);
        b = materialize(b, *options.common_scale, options.crosswalks);
    } else if (a.scale != b.scale) {
        // Orient as fine (crosswalk source) and coarse (crosswalk target).
        const bool a_fine = find_crosswalk(options.crosswalks, a.scale, b.scale) != nullptr;
        const bool b_fine = !a_fine && find_crosswalk(options.crosswalks, b.scale, a.scale) != nullptr;
        if (!a_fine && !b_fine) {
            throw Error(ErrorCode::Scale, "no crosswalk between '" + a.scale + "' and '" + b.scale + "'");
        }
        RankedColumn& fine = a_fine ? a : b;
        RankedColumn& coarse = a_fine ? b : a;
        const Crosswalk cw = resolved(*find_crosswalk(options.crosswalks, fine.scale, coarse.scale));
        if (options.direction == PairDirection::Fine) {
            coarse = materialize(coarse, fine.scale, {cw});
        } else {
            fine = average_onto(fine, coarse.scale, cw);
        }
    }
    p.scale = a.scale;

    std::set<std::string> ids;
    if (options.universe) {
        ids = *options.universe;
    } else {
        for (const auto& [id, _] : a.values) ids.insert(id);
        for (const auto& [id, _] : b.values) ids.insert(id);
    }
    for (const auto& id : ids) {
        auto ia = a.values.find(id);
        auto ib = b.values.find(id);
        if (ia == a.values.end()) {
            p.dropped.push_back({id, "no value for '" + p.label_a + "'"});
        } else if (ib == b.values.end()) {
            p.dropped.push_back({id, "no value for '" + p.label_b + "'"});
        } else {
            p.unit_ids.push_back(id);
            p.a.push_back(ia->second);
            p.b.push_back(ib->second);
        }
    }
    check_pair_size(p);
    return p;
}

PairedRanking pair(const std::string& label_a, const std::vector<double>& a, const std::string& label_b,
                   const std::vector<double>& b) {
    if (a.size() != b.size()) throw Error(ErrorCode::UnitSet, "paired vectors differ in length");
    PairedRanking p;
    p.label_a = label_a;
    p.label_b = label_b;
    p.a = a;
    p.b = b;
    for (std::size_t i = 0; i < a.size(); ++i) p.unit_ids.push_back(std::to_string(i));
    check_pair_size(p);
    return p;
}

std::vector<double> average_ranks(const std::vector<double>& values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return values[x] < values[y]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = static_cast<double>(i + j + 2) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double spearman(const PairedRanking& p) {
    check_pair_size(p);
    const std::vector<double> ra = average_ranks(p.a);
    const std::vector<double> rb = average_ranks(p.b);
    const double n = static_cast<double>(p.n());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < p.n(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < p.n(); ++i) {
        const double da = ra[i] - ma;
        const double db = rb[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) {
        throw Error(ErrorCode::DegenerateRanking, "'" + (saa == 0.0 ? p.label_a : p.label_b) + "' is all tied");
    }
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

KendallCounts kendall_counts(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw Error(ErrorCode::UnitSet, "paired vectors differ in length");
    const std::size_t n = a.size();
    KendallCounts c;
    c.pairs = tie_pairs(n);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return a[x] < a[y] || (a[x] == a[y] && b[x] < b[y]);
    });

    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && a[order[j]] == a[order[i]]) ++j;
        c.ties_a += tie_pairs(j - i);
        for (std::size_t k = i; k < j;) {
            std::size_t m = k;
            while (m < j && b[order[m]] == b[order[k]]) ++m;
            c.ties_both += tie_pairs(m - k);
            k = m;
        }
        i = j;
    }

    std::vector<double> bs(n);
    for (std::size_t i = 0; i < n; ++i) bs[i] = b[order[i]];
    std::vector<double> scratch(n);
    c.discordant = count_inversions(bs, scratch, 0, n);

    // bs is now sorted ascending.
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && bs[j] == bs[i]) ++j;
        c.ties_b += tie_pairs(j - i);
        i = j;
    }
    c.concordant = c.pairs - c.ties_a - c.ties_b + c.ties_both - c.discordant;
    return c;
}

double tau_b(const KendallCounts& c) {
    if (c.pairs == c.ties_a || c.pairs == c.ties_b) {
        throw Error(ErrorCode::DegenerateRanking, "every pair is tied on one side");
    }
    const double num = static_cast<double>(c.concordant) - static_cast<double>(c.discordant);
    const double den = std::sqrt(static_cast<double>(c.pairs - c.ties_a) * static_cast<double>(c.pairs - c.ties_b));
    return std::clamp(num / den, -1.0, 1.0);
}

double kendall_tau(const PairedRanking& p) {
    check_pair_size(p);
    try {
        return tau_b(kendall_counts(p.a, p.b));
    } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateRanking) throw;
        throw Error(ErrorCode::DegenerateRanking, "'" + p.label_a + "' vs '" + p.label_b + "': " + e.detail());
    }
}

AlignmentResult alignment(const std::map<std::string, int>& scores_a, const std::map<std::string, int>& scores_b) {
    if (scores_a.size() != scores_b.size()) {
        throw Error(ErrorCode::UnitSet, "alignment needs identical unit sets (" + std::to_string(scores_a.size()) +
                                            " vs " + std::to_string(scores_b.size()) + " units)");
    }
    AlignmentResult r;
    for (auto ia = scores_a.begin(), ib = scores_b.begin(); ia != scores_a.end(); ++ia, ++ib) {
        if (ia->first != ib->first) {
            throw Error(ErrorCode::UnitSet, "unit '" + ia->first + "' is not scored on both sides");
        }
        for (int s : {ia->second, ib->second}) {
            if (s < 1 || s > 5) throw Error(ErrorCode::Domain, "score " + std::to_string(s) + " is outside 1-5");
        }
        ++r.total;
        if (ia->second == ib->second) ++r.matches;
    }
    if (r.total == 0) throw Error(ErrorCode::InsufficientData, "alignment of empty score sets");
    r.percent = 100.0 * static_cast<double>(r.matches) / static_cast<double>(r.total);
    return r;
}

AlignmentResult alignment(const RankedIndex& a, const RankedIndex& b) {
    auto scores = [](const RankedIndex& r) {
        std::map<std::string, int> m;
        for (std::size_t u = 0; u < r.size(); ++u) {
            if (r.quintile[u]) m.emplace(r.unit_ids[u], *r.quintile[u]);
        }
        return m;
    };
    return alignment(scores(a), scores(b));
}

CorrelationMethod parse_correlation_method(const std::string& text) {
    if (text == "spearman") return CorrelationMethod::Spearman;
    if (text == "kendall") return CorrelationMethod::Kendall;
    if (text == "both") return CorrelationMethod::Both;
    throw Error(ErrorCode::Config, "unknown correlation method '" + text + "'");
}

const CorrelationEntry* ValidityReport::find(const std::string& a, const std::string& b) const {
    for (const auto& e : entries) {
        if ((e.row == a && e.column == b) || (e.row == b && e.column == a)) return &e;
    }
    return nullptr;
}

ValidityReport correlation_matrix(std::vector<RankedColumn> rankings, const PairOptions& options,
                                  CorrelationMethod method) {
    if (rankings.size() < 2) throw Error(ErrorCode::InsufficientData, "correlation matrix needs at least 2 rankings");
    sort_by_label(rankings);
    ValidityReport report;
    report.kind = "convergent";
    for (std::size_t i = 1; i < rankings.size(); ++i) report.rows.push_back(rankings[i].label);
    for (std::size_t i = 0; i + 1 < rankings.size(); ++i) report.columns.push_back(rankings[i].label);
    for (std::size_t i = 1; i < rankings.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            CorrelationEntry e;
            e.row = rankings[i].label;
            e.column = rankings[j].label;
            fill_entry(e, rankings[j], rankings[i], options, method);
            report.entries.push_back(std::move(e));
        }
    }
    return report;
}

ValidityReport impact_validity(std::vector<RankedColumn> index_rankings, std::vector<RankedColumn> impact_rankings,
                               const PairOptions& options, CorrelationMethod method) {
    if (index_rankings.empty() || impact_rankings.empty()) {
        throw Error(ErrorCode::InsufficientData, "impact validity needs at least one index and one impact");
    }
    sort_by_label(index_rankings);
    sort_by_label(impact_rankings);
    ValidityReport report;
    report.kind = "predictive";
    for (const auto& r : impact_rankings) report.rows.push_back(r.label);
    for (const auto& c : index_rankings) report.columns.push_back(c.label);
    for (const auto& impact : impact_rankings) {
        for (const auto& index : index_rankings) {
            CorrelationEntry e;
            e.row = impact.label;
            e.column = index.label;
            fill_entry(e, index, impact, options, method);
            report.entries.push_back(std::move(e));
        }
    }
    return report;
}

std::vector<ComparisonRow> specification_comparison(const RankedIndex& base, const std::vector<RankedIndex>& variants) {
    std::vector<ComparisonRow> rows;
    for (const auto& variant : variants) {
        ComparisonRow row;
        row.variant = variant.spec_name;
        try {
            const VariantRun run = make_variant_run(base, variant);
            std::vector<double> bp, vp, bq, vq;
            std::map<std::string, int> sa, sb;
            for (const auto& u : run.pairing) {
                bp.push_back(u.base_percentile);
                vp.push_back(u.variant_percentile);
                bq.push_back(u.base_quintile);
                vq.push_back(u.variant_quintile);
                sa.emplace(u.unit_id, u.base_quintile);
                sb.emplace(u.unit_id, u.variant_quintile);
            }
            row.n = bp.size();
            row.alignment_percent = alignment(sa, sb).percent;
            const PairedRanking pct = pair(base.spec_name, bp, variant.spec_name, vp);
            const PairedRanking q = pair(base.spec_name, bq, variant.spec_name, vq);
            row.spearman_percentile = spearman(pct);
            row.kendall_percentile = kendall_tau(pct);
            row.spearman_quintile = spearman(q);
            row.kendall_quintile = kendall_tau(q);
        } catch (const Error& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

nlohmann::json report_json(const ValidityReport& report) {
    nlohmann::json out;
    out["kind"] = report.kind;
    out["kendall_variant"] = "tau-b";
    out["rows"] = report.rows;
    out["columns"] = report.columns;
    out["entries"] = nlohmann::json::array();
    for (const auto& e : report.entries) {
        nlohmann::json j{{"row", e.row},
                         {"column", e.column},
                         {"n", e.n},
                         {"n_dropped", e.n_dropped},
                         {"spearman", optional_json(e.spearman)},
                         {"kendall_tau_b", optional_json(e.kendall)}};
        if (e.error) j["error"] = *e.error;
        out["entries"].push_back(std::move(j));
    }
    out["alignments"] = nlohmann::json::array();
    for (const auto& a : report.alignments) {
        out["alignments"].push_back({{"label_a", a.label_a},
                                     {"label_b", a.label_b},
                                     {"matches", a.matches},
                                     {"total", a.total},
                                     {"percent", a.percent}});
    }
    out["metadata"] = report.metadata;
    return out;
}

void write_matrix_csv(std::ostream& os, const ValidityReport& report, Statistic stat) {
    std::vector<std::string> header{""};
    header.insert(header.end(), report.columns.begin(), report.columns.end());
    write_csv_row(os, header);
    for (const auto& row : report.rows) {
        std::vector<std::string> fields{row};
        for (const auto& col : report.columns) {
            std::string cell;
            for (const auto& e : report.entries) {
                if (e.row != row || e.column != col) continue;
                switch (stat) {
                    case Statistic::Spearman: cell = format_optional(e.spearman); break;
                    case Statistic::Kendall: cell = format_optional(e.kendall); break;
                    case Statistic::N: cell = std::to_string(e.n); break;
                }
            }
            fields.push_back(std::move(cell));
        }
        write_csv_row(os, fields);
    }
}

void write_comparison_csv(std::ostream& os, const std::vector<ComparisonRow>& rows) {
    write_csv_row(os, {"variant", "n", "spearman_percentile", "spearman_quintile", "kendall_percentile",
                       "kendall_quintile", "alignment_percent"});
    for (const auto& r : rows) {
        write_csv_row(os, {r.variant, std::to_string(r.n), format_optional(r.spearman_percentile),
                           format_optional(r.spearman_quintile), format_optional(r.kendall_percentile),
                           format_optional(r.kendall_quintile), r.error ? std::string() : format_number(r.alignment_percent)});
    }
}

nlohmann::json comparison_json(const std::vector<ComparisonRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json j{{"variant", r.variant},
                         {"n", r.n},
                         {"spearman_percentile", optional_json(r.spearman_percentile)},
                         {"spearman_quintile", optional_json(r.spearman_quintile)},
                         {"kendall_tau_b_percentile", optional_json(r.kendall_percentile)},
                         {"kendall_tau_b_quintile", optional_json(r.kendall_quintile)},
                         {"alignment_percent", r.alignment_percent}};
        if (r.error) j["error"] = *r.error;
        out.push_back(std::move(j));
    }
    return out;
}

}  // namespace indexprobe
