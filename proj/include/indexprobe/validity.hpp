#pragma once
// Convergent and predictive validity: rank correlations between rankings that
// may live at different spatial scales, and categorical score alignment.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "indexprobe/crosswalk.hpp"
#include "indexprobe/index.hpp"
#include "indexprobe/sensitivity.hpp"

namespace indexprobe {

// A labeled per-unit value at one scale. Units without a value are simply absent.
struct RankedColumn {
    std::string label;
    std::string scale;
    std::map<std::string, double> values;
};

RankedColumn percentile_column(const RankedIndex& ranked, std::string label = {});
RankedColumn quintile_column(const RankedIndex& ranked, std::string label = {});
RankedColumn column_from_frame(const SpatialFrame& frame, const std::string& attribute, std::string label = {});

enum class PairDirection {
    Fine,    // broadcast the coarse side onto the fine units
    Coarse,  // average the fine side over each coarse unit
};

struct PairOptions {
    std::vector<Crosswalk> crosswalks;
    PairDirection direction = PairDirection::Fine;
    // When set, both sides are first broadcast onto this scale.
    std::optional<std::string> common_scale;
    // When set, pairing is restricted to these units (at the pairing scale).
    std::optional<std::set<std::string>> universe;
};

struct PairedRanking {
    std::string label_a;
    std::string label_b;
    std::string scale;
    std::vector<std::string> unit_ids;
    std::vector<double> a;
    std::vector<double> b;
    std::vector<Exclusion> dropped;

    std::size_t n() const noexcept { return unit_ids.size(); }
};

// Broadcasts a column onto a finer scale through a crosswalk whose source is
// that scale.
RankedColumn materialize(const RankedColumn& column, const std::string& scale,
                         const std::vector<Crosswalk>& crosswalks);

// Pairwise-complete join. Fewer than two pairs raises InsufficientData.
PairedRanking pair(const RankedColumn& a, const RankedColumn& b, const PairOptions& options = {});
PairedRanking pair(const std::string& label_a, const std::vector<double>& a, const std::string& label_b,
                   const std::vector<double>& b);

// 1-based ranks, ties sharing their mean rank.
std::vector<double> average_ranks(const std::vector<double>& values);

// Pearson correlation of the average ranks of both sides.
double spearman(const PairedRanking& p);

struct KendallCounts {
    std::uint64_t pairs = 0;       // n(n-1)/2
    std::uint64_t concordant = 0;
    std::uint64_t discordant = 0;
    std::uint64_t ties_a = 0;      // pairs tied on a (including joint ties)
    std::uint64_t ties_b = 0;      // pairs tied on b (including joint ties)
    std::uint64_t ties_both = 0;

    friend bool operator==(const KendallCounts&, const KendallCounts&) = default;
};

// O(n log n) pair classification (sort plus merge-sort inversion count).
KendallCounts kendall_counts(const std::vector<double>& a, const std::vector<double>& b);
// (C - D) / sqrt((P - T_a)(P - T_b)); DegenerateRanking when either side is all-tied.
double tau_b(const KendallCounts& counts);
double kendall_tau(const PairedRanking& p);

struct AlignmentResult {
    std::size_t matches = 0;
    std::size_t total = 0;
    double percent = 0.0;
};

// Share of units with identical 1-5 scores. Unit sets must match exactly.
AlignmentResult alignment(const std::map<std::string, int>& scores_a, const std::map<std::string, int>& scores_b);
AlignmentResult alignment(const RankedIndex& a, const RankedIndex& b);

enum class CorrelationMethod { Spearman, Kendall, Both };
CorrelationMethod parse_correlation_method(const std::string& text);

struct CorrelationEntry {
    std::string row;
    std::string column;
    std::size_t n = 0;
    std::size_t n_dropped = 0;
    std::optional<double> spearman;
    std::optional<double> kendall;
    std::optional<std::string> error;
};

struct AlignmentEntry {
    std::string label_a;
    std::string label_b;
    std::size_t matches = 0;
    std::size_t total = 0;
    double percent = 0.0;
};

struct ValidityReport {
    std::string kind;                  // "convergent" or "predictive"
    std::vector<std::string> rows;
    std::vector<std::string> columns;
    std::vector<CorrelationEntry> entries;
    std::vector<AlignmentEntry> alignments;
    nlohmann::json metadata = nlohmann::json::object();

    // Order-insensitive lookup of the entry for two labels.
    const CorrelationEntry* find(const std::string& a, const std::string& b) const;
};

// Every unordered pair, laid out as a lower triangle over label-sorted rankings.
// A failing pair records its error and the rest are still computed.
ValidityReport correlation_matrix(std::vector<RankedColumn> rankings, const PairOptions& options,
                                  CorrelationMethod method);
// Impacts as rows, indices as columns.
ValidityReport impact_validity(std::vector<RankedColumn> index_rankings, std::vector<RankedColumn> impact_rankings,
                               const PairOptions& options, CorrelationMethod method);

// Base specification against each variant: rank correlations on percentiles
// and on quintile scores, plus quintile alignment.
struct ComparisonRow {
    std::string variant;
    std::size_t n = 0;
    std::optional<double> spearman_percentile;
    std::optional<double> spearman_quintile;
    std::optional<double> kendall_percentile;
    std::optional<double> kendall_quintile;
    double alignment_percent = 0.0;
    std::optional<std::string> error;
};

std::vector<ComparisonRow> specification_comparison(const RankedIndex& base, const std::vector<RankedIndex>& variants);

enum class Statistic { Spearman, Kendall, N };

nlohmann::json report_json(const ValidityReport& report);
void write_matrix_csv(std::ostream& os, const ValidityReport& report, Statistic stat);
void write_comparison_csv(std::ostream& os, const std::vector<ComparisonRow>& rows);
nlohmann::json comparison_json(const std::vector<ComparisonRow>& rows);

}  // namespace indexprobe
