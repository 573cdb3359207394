#pragma once
// Specification and spatial-scale sensitivity: compare a base ranking with
// variant rankings unit by unit and summarize how quintile scores move.

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "indexprobe/crosswalk.hpp"
#include "indexprobe/frame.hpp"
#include "indexprobe/index.hpp"

namespace indexprobe {

enum class Direction { Increase, Decrease, NoChange };

std::string to_string(Direction d);
Direction classify_direction(int base_quintile, int variant_quintile) noexcept;

struct PairedUnit {
    std::string unit_id;
    double base_percentile = 0.0;
    double variant_percentile = 0.0;
    int base_quintile = 0;
    int variant_quintile = 0;
};

struct Exclusion {
    std::string unit_id;
    std::string reason;
};

// One base ranking against one variant ranking over the units both score.
struct VariantRun {
    RankedIndex base;
    RankedIndex variant;
    std::vector<PairedUnit> pairing;    // ascending unit id
    std::vector<Exclusion> excluded;    // units missing on either side

    const std::string& label() const noexcept { return variant.spec_name; }
};

// Pairs units by id; units absent or missing on either side are logged in excluded.
VariantRun make_variant_run(RankedIndex base, RankedIndex variant);

struct TransitionRecord {
    std::string unit_id;
    Direction direction = Direction::NoChange;
    int base_quintile = 0;
    int variant_quintile = 0;
    double base_percentile = 0.0;
    double variant_percentile = 0.0;
};

std::vector<TransitionRecord> classify_transitions(const VariantRun& run);

// Ranks the base once and each variant against it, in input order. Failures
// are rethrown with the offending spec's name.
std::vector<VariantRun> run_variants(const IndexSpec& base_spec, const std::vector<IndexSpec>& variant_specs,
                                     const SpatialFrame& frame);

struct TransitionCounts {
    std::string variant;
    std::size_t n = 0;
    std::size_t unchanged = 0;
    std::size_t increased = 0;
    std::size_t decreased = 0;

    double frac_unchanged() const noexcept { return n ? double(unchanged) / double(n) : 0.0; }
    double frac_increased() const noexcept { return n ? double(increased) / double(n) : 0.0; }
    double frac_decreased() const noexcept { return n ? double(decreased) / double(n) : 0.0; }
};

struct FlaggedJump {
    std::string unit_id;
    std::string variant;
    int base_quintile = 0;
    int variant_quintile = 0;
};

struct StabilitySummary {
    std::size_t n_units = 0;            // units of the shared base ranking
    std::size_t n_complete = 0;         // units paired in every run
    std::size_t n_unchanged_all = 0;    // complete units whose quintile never moves
    double frac_unchanged_all_variants = 0.0;  // n_unchanged_all / n_complete
    std::vector<TransitionCounts> pairwise;    // one per run, in run order
    TransitionCounts pooled;                   // every (unit, run) combination
    std::vector<FlaggedJump> flagged_jumps;
    std::vector<std::string> excluded_units;   // missing under at least one run
    int jump_threshold = 2;
};

// Runs must share the same base unit set; otherwise UnitSet.
StabilitySummary stability_summary(const std::vector<VariantRun>& runs, int jump_threshold = 2);

// Copies the named coarse attributes onto the fine units through the
// crosswalk, for inputs that are not published at the fine scale.
SpatialFrame broadcast_attributes(const SpatialFrame& fine_frame, const SpatialFrame& coarse_frame,
                                  const Crosswalk& crosswalk, const std::vector<std::string>& names);

struct ScaleOptions {
    const SpatialFrame* coarse_frame = nullptr;
    std::vector<std::string> broadcast_attributes;
};

// Base: the coarse ranking copied onto each fine unit. Variant: the spec
// re-ranked among the fine units themselves.
VariantRun scale_sensitivity(const IndexSpec& spec, const SpatialFrame& fine_frame, const Crosswalk& crosswalk,
                             const RankedIndex& coarse_index, const ScaleOptions& options = {});

// unit_id,base_quintile,variant_quintile,direction,base_percentile,variant_percentile
void write_transitions_csv(std::ostream& os, const std::vector<TransitionRecord>& records);
nlohmann::json summary_json(const StabilitySummary& summary);
nlohmann::json plot_json(const VariantRun& run);
std::string scatter_svg(const VariantRun& run);

}  // namespace indexprobe
