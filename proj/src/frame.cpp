#include "indexprobe/frame.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "indexprobe/error.hpp"

namespace indexprobe {

namespace {

Column permute(const Column& col, const std::vector<std::size_t>& order) {
    Column out;
    out.reserve(order.size());
    for (std::size_t i : order) out.push_back(col[i]);
    return out;
}

void check_keys(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw Error(ErrorCode::Config, where + ": unknown key '" + key + "'");
        }
    }
}

}  // namespace

FrameSchema parse_frame_schema(const nlohmann::json& doc) {
    if (!doc.is_object()) throw Error(ErrorCode::Config, "frame schema must be a JSON object");
    check_keys(doc, {"id_column", "population_column", "attributes", "missing_markers"}, "frame schema");
    FrameSchema schema;
    try {
        schema.id_column = doc.at("id_column").get<std::string>();
        if (doc.contains("population_column") && !doc["population_column"].is_null()) {
            schema.population_column = doc["population_column"].get<std::string>();
        }
        for (const auto& a : doc.value("attributes", nlohmann::json::array())) {
            AttributeDecl decl;
            if (a.is_string()) {
                decl.name = a.get<std::string>();
            } else {
                check_keys(a, {"name", "type"}, "frame schema attribute");
                decl.name = a.at("name").get<std::string>();
                const std::string type = a.value("type", "real");
                if (type == "real") {
                    decl.type = AttributeType::Real;
                } else if (type == "integer") {
                    decl.type = AttributeType::Integer;
                } else {
                    throw Error(ErrorCode::Config, "attribute '" + decl.name + "': unknown type '" + type + "'");
                }
            }
            schema.attributes.push_back(std::move(decl));
        }
        if (doc.contains("missing_markers")) {
            schema.missing_markers = doc["missing_markers"].get<std::vector<std::string>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Config, std::string("frame schema: ") + e.what());
    }
    return schema;
}

FrameSchema load_frame_schema(const std::filesystem::path& path) {
    try {
        return parse_frame_schema(nlohmann::json::parse(read_text(path)));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Config, path.string() + ": " + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Io) throw Error(ErrorCode::Config, e.detail());
        throw Error(e.code(), path.string() + ": " + e.detail());
    }
}

SpatialFrame::SpatialFrame(std::string scale, std::vector<std::string> ids, std::map<std::string, Column> attributes,
                           std::optional<std::string> population_name, std::optional<Column> population)
    : scale_(std::move(scale)), population_name_(std::move(population_name)) {
    for (const auto& [name, col] : attributes) {
        if (col.size() != ids.size()) {
            throw Error(ErrorCode::Schema, "attribute '" + name + "' has " + std::to_string(col.size()) +
                                               " values for " + std::to_string(ids.size()) + " units");
        }
    }
    if (population && population->size() != ids.size()) {
        throw Error(ErrorCode::Schema, "population column length does not match unit count");
    }
    if (population && !population_name_) population_name_ = "population";

    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
    for (std::size_t k = 1; k < order.size(); ++k) {
        if (ids[order[k]] == ids[order[k - 1]]) {
            throw Error(ErrorCode::DuplicateUnit, "unit id '" + ids[order[k]] + "' appears more than once");
        }
    }

    ids_.reserve(ids.size());
    for (std::size_t i : order) ids_.push_back(std::move(ids[i]));
    for (auto& [name, col] : attributes) attributes_.emplace(name, permute(col, order));
    if (population) {
        for (const auto& v : *population) {
            if (v && *v < 0.0) throw Error(ErrorCode::Domain, "negative population count");
        }
        population_ = permute(*population, order);
    }
}

std::optional<std::size_t> SpatialFrame::index_of(const std::string& id) const {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it == ids_.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - ids_.begin());
}

const Column& SpatialFrame::population() const {
    if (!population_) throw Error(ErrorCode::Schema, "frame '" + scale_ + "' has no population column");
    return *population_;
}

bool SpatialFrame::has_attribute(const std::string& name) const {
    return attributes_.count(name) > 0 || (population_ && population_name_ == name);
}

const Column& SpatialFrame::attribute(const std::string& name) const {
    if (auto it = attributes_.find(name); it != attributes_.end()) return it->second;
    if (population_ && population_name_ == name) return *population_;
    throw Error(ErrorCode::Schema, "frame '" + scale_ + "' has no attribute '" + name + "'");
}

std::vector<std::string> SpatialFrame::attribute_names() const {
    std::vector<std::string> names;
    names.reserve(attributes_.size());
    for (const auto& [name, _] : attributes_) names.push_back(name);
    return names;
}

SpatialFrame SpatialFrame::with_attribute(const std::string& name, Column values) const {
    auto attrs = attributes_;
    attrs[name] = std::move(values);
    return SpatialFrame(scale_, ids_, std::move(attrs), population_name_, population_);
}

SpatialFrame SpatialFrame::subset(const std::vector<std::size_t>& keep) const {
    std::vector<std::string> ids;
    ids.reserve(keep.size());
    for (std::size_t i : keep) ids.push_back(ids_.at(i));
    std::map<std::string, Column> attrs;
    for (const auto& [name, col] : attributes_) attrs.emplace(name, permute(col, keep));
    std::optional<Column> pop;
    if (population_) pop = permute(*population_, keep);
    return SpatialFrame(scale_, std::move(ids), std::move(attrs), population_name_, std::move(pop));
}

SpatialFrame build_frame(const std::string& scale, const CsvTable& rows, const FrameSchema& schema) {
    const std::size_t id_col = rows.column(schema.id_column);
    std::optional<std::size_t> pop_col;
    if (schema.population_column) pop_col = rows.column(*schema.population_column);

    std::vector<std::pair<std::size_t, const AttributeDecl*>> attr_cols;
    std::set<std::string> seen;
    for (const auto& decl : schema.attributes) {
        if (!seen.insert(decl.name).second) {
            throw Error(ErrorCode::Schema, "attribute '" + decl.name + "' declared twice");
        }
        attr_cols.emplace_back(rows.column(decl.name), &decl);
    }

    auto is_missing = [&](const std::string& cell) {
        const std::string t = trim(cell);
        return std::find(schema.missing_markers.begin(), schema.missing_markers.end(), t) !=
               schema.missing_markers.end();
    };
    auto parse_cell = [&](const std::string& cell, std::size_t row, const std::string& column,
                          AttributeType type) -> Value {
        if (is_missing(cell)) return std::nullopt;
        auto v = parse_number(cell);
        if (!v || (type == AttributeType::Integer && std::floor(*v) != *v)) {
            throw Error(ErrorCode::Parse, "row " + std::to_string(row + 1) + ", column '" + column + "': '" +
                                              cell + "' is not " +
                                              (type == AttributeType::Integer ? "an integer" : "a number"));
        }
        return v;
    };

    std::vector<std::string> ids;
    ids.reserve(rows.rows.size());
    std::map<std::string, Column> attrs;
    for (const auto& decl : schema.attributes) attrs[decl.name].reserve(rows.rows.size());
    std::optional<Column> population;
    if (pop_col) population.emplace();

    for (std::size_t r = 0; r < rows.rows.size(); ++r) {
        const auto& row = rows.rows[r];
        std::string id = trim(row[id_col]);
        if (id.empty()) throw Error(ErrorCode::Parse, "row " + std::to_string(r + 1) + ": empty unit id");
        ids.push_back(std::move(id));
        for (const auto& [col, decl] : attr_cols) {
            attrs[decl->name].push_back(parse_cell(row[col], r, decl->name, decl->type));
        }
        if (pop_col) {
            auto v = parse_cell(row[*pop_col], r, *schema.population_column, AttributeType::Real);
            if (v && *v < 0.0) {
                throw Error(ErrorCode::Parse, "row " + std::to_string(r + 1) + ", column '" +
                                                  *schema.population_column + "': negative population");
            }
            population->push_back(v);
        }
    }
    return SpatialFrame(scale, std::move(ids), std::move(attrs), schema.population_column, std::move(population));
}

SpatialFrame load_frame(const std::string& scale, const std::filesystem::path& data,
                        const std::filesystem::path& schema) {
    const FrameSchema s = load_frame_schema(schema);
    try {
        return build_frame(scale, read_csv(data), s);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Io) throw;
        throw Error(e.code(), data.string() + ": " + e.detail());
    }
}

SpatialFrame filter_populated(const SpatialFrame& frame) {
    const Column& pop = frame.population();
    std::vector<std::size_t> keep;
    keep.reserve(frame.size());
    for (std::size_t i = 0; i < pop.size(); ++i) {
        if (pop[i] && *pop[i] > 0.0) keep.push_back(i);
    }
    return frame.subset(keep);
}

}  // namespace indexprobe
