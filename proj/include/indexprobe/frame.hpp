#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "indexprobe/table.hpp"

namespace indexprobe {

// A missing cell is std::nullopt and never a zero.
using Value = std::optional<double>;
using Column = std::vector<Value>;

enum class AttributeType { Real, Integer };

struct AttributeDecl {
    std::string name;
    AttributeType type = AttributeType::Real;
};

struct FrameSchema {
    std::string id_column;
    std::optional<std::string> population_column;
    std::vector<AttributeDecl> attributes;
    std::vector<std::string> missing_markers{"", "NA"};
};

// {"id_column", "population_column"?, "attributes": [{"name", "type"?}] | ["name", ...],
//  "missing_markers"?}. Unknown keys are rejected.
FrameSchema parse_frame_schema(const nlohmann::json& doc);
FrameSchema load_frame_schema(const std::filesystem::path& path);

// Attribute table for the units of one spatial scale. Units are held in
// ascending id order whatever order they were supplied in, and every column
// has exactly one slot per unit. Immutable once built.
class SpatialFrame {
public:
    SpatialFrame() = default;
    SpatialFrame(std::string scale, std::vector<std::string> ids, std::map<std::string, Column> attributes,
                 std::optional<std::string> population_name = std::nullopt,
                 std::optional<Column> population = std::nullopt);

    const std::string& scale() const noexcept { return scale_; }
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    std::size_t size() const noexcept { return ids_.size(); }

    std::optional<std::size_t> index_of(const std::string& id) const;

    bool has_population() const noexcept { return population_.has_value(); }
    const std::optional<std::string>& population_name() const noexcept { return population_name_; }
    const Column& population() const;

    // Looks up attribute columns and, by its declared name, the population column.
    bool has_attribute(const std::string& name) const;
    const Column& attribute(const std::string& name) const;
    std::vector<std::string> attribute_names() const;

    SpatialFrame with_attribute(const std::string& name, Column values) const;
    SpatialFrame subset(const std::vector<std::size_t>& keep) const;

private:
    std::string scale_;
    std::vector<std::string> ids_;
    std::map<std::string, Column> attributes_;
    std::optional<std::string> population_name_;
    std::optional<Column> population_;
};

SpatialFrame build_frame(const std::string& scale, const CsvTable& rows, const FrameSchema& schema);
SpatialFrame load_frame(const std::string& scale, const std::filesystem::path& data,
                        const std::filesystem::path& schema);

// Units with a population count above zero. Units with a missing count are dropped too.
SpatialFrame filter_populated(const SpatialFrame& frame);

}  // namespace indexprobe
