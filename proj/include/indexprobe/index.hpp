#pragma once
// Composite index evaluation: standardize inputs, combine them according to an
// IndexSpec, then turn raw scores into tie-aware percentile ranks and 1-5
// quintile scores.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "indexprobe/frame.hpp"

namespace indexprobe {

enum class ZscoreMode { Population, Sample };
enum class Method { AdditiveZ, Hierarchical, RiskFormula };

// f in RISK = EAL * f(SV/CR).
enum class RiskTransform {
    Identity,  // f(r) = r
    MinMax,    // r rescaled linearly onto [f_lo, f_hi] over the frame
    One,       // f = 1, the expected-loss-only variant
};

struct IndexTerm {
    std::string attribute;
    int sign = +1;
    std::optional<std::string> group;

    friend bool operator==(const IndexTerm&, const IndexTerm&) = default;
};

struct RiskInputs {
    std::string eal;
    std::string sv;
    std::string cr;
    RiskTransform transform = RiskTransform::Identity;
    double f_lo = 0.0;
    double f_hi = 1.0;

    friend bool operator==(const RiskInputs&, const RiskInputs&) = default;
};

struct IndexSpec {
    std::string name;
    Method method = Method::AdditiveZ;
    ZscoreMode zscore_mode = ZscoreMode::Population;
    std::vector<IndexTerm> terms;
    std::optional<RiskInputs> risk_inputs;

    // Throws Spec on a structurally invalid recipe.
    void validate() const;

    friend bool operator==(const IndexSpec&, const IndexSpec&) = default;
};

std::string to_string(Method method);
std::string to_string(ZscoreMode mode);
std::string to_string(RiskTransform transform);
ZscoreMode parse_zscore_mode(const std::string& text);

IndexSpec parse_index_spec(const nlohmann::json& doc);
nlohmann::json to_json(const IndexSpec& spec);
IndexSpec load_index_spec(const std::filesystem::path& path);
// Fingerprint of the canonical JSON form.
std::string spec_hash(const IndexSpec& spec);

struct ZscoreResult {
    Column values;
    bool degenerate = false;  // zero variance: all outputs are 0
};

// Standardizes the non-missing values; missing slots stay missing.
// Needs at least two non-missing values.
ZscoreResult zscore(const Column& values, ZscoreMode mode);

struct RawScores {
    Column raw;
    std::vector<std::string> degenerate_inputs;
};

// Sum over terms of sign * z(attribute). A unit missing any input is missing.
RawScores evaluate_spec(const IndexSpec& spec, const SpatialFrame& frame);
// Each group is summed as above and percentile-ranked; the raw score is the
// unweighted mean of the group percentiles.
RawScores evaluate_hierarchical(const IndexSpec& spec, const SpatialFrame& frame);
RawScores evaluate_risk_formula(const IndexSpec& spec, const SpatialFrame& frame);
RawScores evaluate(const IndexSpec& spec, const SpatialFrame& frame);

// 100 * average_rank / n over the non-missing values, ranks 1-based with ties
// sharing their mean rank.
Column percentile_rank(const Column& values);

// 1 for p <= 20, 2 for p <= 40, 3 for p <= 60, 4 for p <= 80, else 5.
int quintile_score(double percentile);
std::vector<std::optional<int>> quintile_scores(const Column& percentiles);

struct RankedIndex {
    std::string spec_name;
    std::string scale;
    std::vector<std::string> unit_ids;  // ascending, same order as the frame
    Column raw;
    Column percentile;
    std::vector<std::optional<int>> quintile;
    std::vector<std::string> degenerate_inputs;

    std::optional<std::size_t> index_of(const std::string& id) const;
    std::size_t size() const noexcept { return unit_ids.size(); }
};

RankedIndex rank_index(const IndexSpec& spec, const SpatialFrame& frame);

struct NearThreshold {
    std::string unit_id;
    double percentile = 0.0;
    double threshold = 0.0;
};

// Units whose percentile lies within epsilon of a quintile boundary; these are
// the units whose category is sensitive to the percentile convention.
std::vector<NearThreshold> near_threshold_units(const RankedIndex& ranked, double epsilon);

// unit_id,raw,percentile,quintile
void write_ranked_csv(std::ostream& os, const RankedIndex& ranked);
RankedIndex read_ranked_csv(const std::filesystem::path& path, const std::string& spec_name,
                            const std::string& scale);
nlohmann::json ranked_metadata(const RankedIndex& ranked, const IndexSpec& spec, double epsilon);

}  // namespace indexprobe
