#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "indexprobe/error.hpp"
#include "indexprobe/frame.hpp"

namespace indexprobe {

struct CrosswalkLink {
    std::string source_id;
    std::string target_id;
    double weight = 0.0;

    friend bool operator==(const CrosswalkLink&, const CrosswalkLink&) = default;
};

// Many-to-one mapping from units of a finer scale onto a coarser one. Links
// are kept sorted by (source_id, target_id); weights are nonnegative.
class Crosswalk {
public:
    Crosswalk() = default;
    Crosswalk(std::string source_scale, std::string target_scale, std::vector<CrosswalkLink> links);

    const std::string& source_scale() const noexcept { return source_scale_; }
    const std::string& target_scale() const noexcept { return target_scale_; }
    const std::vector<CrosswalkLink>& links() const noexcept { return links_; }

    // True when every source appears in exactly one link.
    bool is_resolved() const noexcept;
    std::optional<std::string> target_of(const std::string& source_id) const;
    std::vector<std::string> sources() const;
    std::vector<std::string> targets() const;

    friend bool operator==(const Crosswalk&, const Crosswalk&) = default;

private:
    std::string source_scale_;
    std::string target_scale_;
    std::vector<CrosswalkLink> links_;
};

// Keeps, for each source, only the link with the largest overlap. Equal
// overlaps go to the lexicographically smallest target id. A source whose
// overlaps are all zero raises UnresolvableSource.
Crosswalk resolve_highest_overlap(const std::string& source_scale, const std::string& target_scale,
                                  std::vector<CrosswalkLink> raw_links);
Crosswalk resolve_highest_overlap(const Crosswalk& raw);

// Each unit of the frame mapped onto itself, at the given target scale label.
Crosswalk identity_crosswalk(const SpatialFrame& frame, const std::string& target_scale);

// Raises Schema when a link names a source the frame does not contain.
void check_sources(const Crosswalk& crosswalk, const SpatialFrame& source_frame);

// Columns source_id,target_id,weight.
Crosswalk load_crosswalk(const std::filesystem::path& path, const std::string& source_scale,
                         const std::string& target_scale);

enum class AggregateMode { WeightedMean, Sum };

struct AggregatedColumn {
    std::string scale;
    std::vector<std::string> ids;  // sorted target ids
    Column values;
    std::size_t skipped_missing = 0;  // sources whose value or weight was missing
};

// weighted-mean: sum(w*x)/sum(w) over mapped sources with both present.
// sum: sum(x) over mapped sources with x present. Targets with nothing to
// aggregate, or zero total weight, come out missing.
AggregatedColumn reaggregate(const SpatialFrame& frame, const std::string& attribute, const Crosswalk& crosswalk,
                             const std::optional<std::string>& weight_attribute, AggregateMode mode);

// Copies each parent's value onto every source mapped to it.
template <class T>
std::map<std::string, T> broadcast_parent(const std::map<std::string, T>& parent_scores, const Crosswalk& crosswalk) {
    if (!crosswalk.is_resolved()) {
        throw Error(ErrorCode::UnresolvableSource, "crosswalk " + crosswalk.source_scale() + "->" +
                                                       crosswalk.target_scale() + " must be resolved before broadcast");
    }
    std::map<std::string, T> out;
    for (const auto& link : crosswalk.links()) {
        auto it = parent_scores.find(link.target_id);
        if (it == parent_scores.end()) {
            throw Error(ErrorCode::MissingParent, "target '" + link.target_id + "' has no score");
        }
        out.emplace(link.source_id, it->second);
    }
    return out;
}

}  // namespace indexprobe
