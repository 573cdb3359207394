#include "indexprobe/crosswalk.hpp"

#include <algorithm>
#include <set>

namespace indexprobe {

Crosswalk::Crosswalk(std::string source_scale, std::string target_scale, std::vector<CrosswalkLink> links)
    : source_scale_(std::move(source_scale)), target_scale_(std::move(target_scale)), links_(std::move(links)) {
    for (const auto& l : links_) {
        if (!(l.weight >= 0.0)) {
            throw Error(ErrorCode::Domain, "link " + l.source_id + "->" + l.target_id + " has negative weight");
        }
    }
    std::sort(links_.begin(), links_.end(), [](const CrosswalkLink& a, const CrosswalkLink& b) {
        if (a.source_id != b.source_id) return a.source_id < b.source_id;
        if (a.target_id != b.target_id) return a.target_id < b.target_id;
        return a.weight < b.weight;
    });
}

bool Crosswalk::is_resolved() const noexcept {
    for (std::size_t i = 1; i < links_.size(); ++i) {
        if (links_[i].source_id == links_[i - 1].source_id) return false;
    }
    return true;
}

std::optional<std::string> Crosswalk::target_of(const std::string& source_id) const {
    auto it = std::lower_bound(links_.begin(), links_.end(), source_id,
                               [](const CrosswalkLink& l, const std::string& id) { return l.source_id < id; });
    if (it == links_.end() || it->source_id != source_id) return std::nullopt;
    return it->target_id;
}

std::vector<std::string> Crosswalk::sources() const {
    std::vector<std::string> out;
    for (const auto& l : links_) {
        if (out.empty() || out.back() != l.source_id) out.push_back(l.source_id);
    }
    return out;
}

std::vector<std::string> Crosswalk::targets() const {
    std::set<std::string> s;
    for (const auto& l : links_) s.insert(l.target_id);
    return {s.begin(), s.end()};
}

Crosswalk resolve_highest_overlap(const std::string& source_scale, const std::string& target_scale,
                                  std::vector<CrosswalkLink> raw_links) {
    // Sorting by (source, target) first means the first maximum seen is the
    // smallest target id among tied overlaps.
    const Crosswalk sorted(source_scale, target_scale, std::move(raw_links));
    std::vector<CrosswalkLink> kept;
    const auto& links = sorted.links();
    for (std::size_t i = 0; i < links.size();) {
        std::size_t j = i;
        const CrosswalkLink* best = &links[i];
        while (j < links.size() && links[j].source_id == links[i].source_id) {
            if (links[j].weight > best->weight) best = &links[j];
            ++j;
        }
        if (best->weight <= 0.0) {
            throw Error(ErrorCode::UnresolvableSource, "source '" + links[i].source_id + "' has no positive overlap");
        }
        kept.push_back(*best);
        i = j;
    }
    return Crosswalk(source_scale, target_scale, std::move(kept));
}

Crosswalk resolve_highest_overlap(const Crosswalk& raw) {
    return resolve_highest_overlap(raw.source_scale(), raw.target_scale(), raw.links());
}

Crosswalk identity_crosswalk(const SpatialFrame& frame, const std::string& target_scale) {
    std::vector<CrosswalkLink> links;
    links.reserve(frame.size());
    for (const auto& id : frame.ids()) links.push_back({id, id, 1.0});
    return Crosswalk(frame.scale(), target_scale, std::move(links));
}

void check_sources(const Crosswalk& crosswalk, const SpatialFrame& source_frame) {
    for (const auto& l : crosswalk.links()) {
        if (!source_frame.index_of(l.source_id)) {
            throw Error(ErrorCode::Schema, "crosswalk source '" + l.source_id + "' is not a unit of frame '" +
                                               source_frame.scale() + "'");
        }
    }
}

Crosswalk load_crosswalk(const std::filesystem::path& path, const std::string& source_scale,
                         const std::string& target_scale) {
    const CsvTable table = read_csv(path);
    try {
        const std::size_t s = table.column("source_id");
        const std::size_t t = table.column("target_id");
        const std::size_t w = table.column("weight");
        std::vector<CrosswalkLink> links;
        links.reserve(table.rows.size());
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            const auto& row = table.rows[r];
            auto weight = parse_number(row[w]);
            if (!weight) {
                throw Error(ErrorCode::Parse, "row " + std::to_string(r + 1) + ", column 'weight': '" + row[w] +
                                                  "' is not a number");
            }
            links.push_back({trim(row[s]), trim(row[t]), *weight});
        }
        return Crosswalk(source_scale, target_scale, std::move(links));
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.detail());
    }
}

AggregatedColumn reaggregate(const SpatialFrame& frame, const std::string& attribute, const Crosswalk& crosswalk,
                             const std::optional<std::string>& weight_attribute, AggregateMode mode) {
    if (crosswalk.source_scale() != frame.scale()) {
        throw Error(ErrorCode::Scale, "crosswalk source scale '" + crosswalk.source_scale() +
                                          "' does not match frame scale '" + frame.scale() + "'");
    }
    const Column& values = frame.attribute(attribute);
    const Column* weights = nullptr;
    if (mode == AggregateMode::WeightedMean) {
        if (!weight_attribute) throw Error(ErrorCode::Schema, "weighted-mean reaggregation needs a weight attribute");
        weights = &frame.attribute(*weight_attribute);
        for (const auto& w : *weights) {
            if (w && *w < 0.0) throw Error(ErrorCode::Domain, "weight attribute '" + *weight_attribute + "' is negative");
        }
    }

    struct Acc {
        double num = 0.0;
        double den = 0.0;
        std::size_t used = 0;
    };
    std::map<std::string, Acc> acc;
    for (const auto& t : crosswalk.targets()) acc[t];

    AggregatedColumn out;
    out.scale = crosswalk.target_scale();
    for (const auto& link : crosswalk.links()) {
        auto idx = frame.index_of(link.source_id);
        if (!idx) {
            throw Error(ErrorCode::Schema, "crosswalk source '" + link.source_id + "' is not a unit of frame '" +
                                               frame.scale() + "'");
        }
        const Value& x = values[*idx];
        Acc& a = acc[link.target_id];
        if (mode == AggregateMode::Sum) {
            if (!x) {
                ++out.skipped_missing;
                continue;
            }
            a.num += *x;
            ++a.used;
        } else {
            const Value& w = (*weights)[*idx];
            if (!x || !w) {
                ++out.skipped_missing;
                continue;
            }
            a.num += *w * *x;
            a.den += *w;
            ++a.used;
        }
    }

    for (const auto& [id, a] : acc) {
        out.ids.push_back(id);
        if (a.used == 0) {
            out.values.emplace_back();
        } else if (mode == AggregateMode::Sum) {
            out.values.emplace_back(a.num);
        } else if (a.den > 0.0) {
            out.values.emplace_back(a.num / a.den);
        } else {
            out.values.emplace_back();
        }
    }
    return out;
}

}  // namespace indexprobe
