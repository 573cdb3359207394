#include "indexprobe/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <ostream>
#include <tuple>

#include "indexprobe/error.hpp"
#include "indexprobe/index.hpp"

namespace indexprobe {

namespace {

using namespace std::chrono;

bool read_int(std::string_view& s, std::size_t digits_min, std::size_t digits_max, int& out) {
    std::size_t n = 0;
    while (n < s.size() && n < digits_max && std::isdigit(static_cast<unsigned char>(s[n]))) ++n;
    if (n < digits_min) return false;
    std::from_chars(s.data(), s.data() + n, out);
    s.remove_prefix(n);
    return true;
}

bool eat(std::string_view& s, char c) {
    if (s.empty() || s.front() != c) return false;
    s.remove_prefix(1);
    return true;
}

std::optional<Date> make_date(int y, int m, int d) {
    const Date date{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
    if (!date.ok()) return std::nullopt;
    return date;
}

// "HH:MM[:SS][ AM|PM]" into minutes since midnight.
std::optional<int> parse_clock(std::string_view s) {
    int h = 0, m = 0, sec = 0;
    if (!read_int(s, 1, 2, h) || !eat(s, ':') || !read_int(s, 2, 2, m)) return std::nullopt;
    if (eat(s, ':')) {
        if (!read_int(s, 2, 2, sec)) return std::nullopt;
        if (eat(s, '.')) {
            while (!s.empty() && std::isdigit(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        }
    }
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    if (s == "AM" || s == "PM" || s == "am" || s == "pm") {
        if (h < 1 || h > 12) return std::nullopt;
        const bool pm = s[0] == 'P' || s[0] == 'p';
        h = (h % 12) + (pm ? 12 : 0);
    } else if (s == "Z") {
        // UTC designator; treated like a naive time.
    } else if (!s.empty()) {
        return std::nullopt;
    }
    if (h > 23 || m > 59 || sec > 60) return std::nullopt;
    return h * 60 + m;
}


std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

template <class Columns>
void apply_mapping(const nlohmann::json& doc, std::initializer_list<std::pair<std::string_view, std::string Columns::*>> fields,
                   Columns& cols, const std::string& what) {
    const nlohmann::json& map = doc.contains("columns") ? doc["columns"] : doc;
    if (!map.is_object()) throw Error(ErrorCode::Config, what + " column mapping must be a JSON object");
    for (const auto& [key, value] : map.items()) {
        auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.first == key; });
        if (it == fields.end()) throw Error(ErrorCode::Config, what + " column mapping: unknown field '" + key + "'");
        if (!value.is_string()) throw Error(ErrorCode::Config, what + " column mapping: '" + key + "' must be a string");
        cols.*(it->second) = value.template get<std::string>();
    }
}

std::optional<std::string> non_empty(const std::string& cell) {
    std::string t = trim(cell);
    if (t.empty()) return std::nullopt;
    return t;
}

}  // namespace

std::optional<DateTime> parse_datetime(std::string_view text) {
    std::string owned = trim(text);
    std::string_view s = owned;
    int y = 0, m = 0, d = 0;
    std::string_view probe = s;
    int first = 0;
    if (!read_int(probe, 1, 4, first)) return std::nullopt;
    if (!probe.empty() && probe.front() == '-') {
        if (!read_int(s, 4, 4, y) || !eat(s, '-') || !read_int(s, 2, 2, m) || !eat(s, '-') || !read_int(s, 2, 2, d)) {
            return std::nullopt;
        }
    } else if (!probe.empty() && probe.front() == '/') {
        if (!read_int(s, 1, 2, m) || !eat(s, '/') || !read_int(s, 1, 2, d) || !eat(s, '/') || !read_int(s, 4, 4, y)) {
            return std::nullopt;
        }
    } else {
        return std::nullopt;
    }
    auto date = make_date(y, m, d);
    if (!date) return std::nullopt;
    int minutes_of_day = 0;
    if (!s.empty()) {
        if (s.front() != ' ' && s.front() != 'T') return std::nullopt;
        s.remove_prefix(1);
        auto clock = parse_clock(s);
        if (!clock) return std::nullopt;
        minutes_of_day = *clock;
    }
    return DateTime{sys_days{*date}} + minutes{minutes_of_day};
}

std::optional<Date> parse_date(std::string_view text) {
    auto dt = parse_datetime(text);
    if (!dt) return std::nullopt;
    return Date{floor<days>(*dt)};
}

std::string format_date(const Date& date) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()), static_cast<unsigned>(date.month()),
                  static_cast<unsigned>(date.day()));
    return buf;
}

bool DateWindow::contains(const Date& d) const noexcept {
    return sys_days{d} >= sys_days{first} && sys_days{d} <= sys_days{last};
}

DateWindow DateWindow::parse(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) {
        throw Error(ErrorCode::Config, "window '" + std::string(text) + "' must be FIRST:LAST");
    }
    auto a = parse_date(text.substr(0, colon));
    auto b = parse_date(text.substr(colon + 1));
    if (!a || !b || sys_days{*b} < sys_days{*a}) {
        throw Error(ErrorCode::Config, "window '" + std::string(text) + "' is not a valid date range");
    }
    return {*a, *b};
}

bool MonthFilter::contains(const Date& d) const noexcept { return months[static_cast<unsigned>(d.month())]; }

MonthFilter MonthFilter::parse(std::string_view text) {
    MonthFilter f;
    f.months.fill(false);
    auto bad = [&] { return Error(ErrorCode::Config, "months '" + std::string(text) + "' is not a month list"); };
    std::string_view s = text;
    bool any = false;
    while (!s.empty()) {
        const auto comma = s.find(',');
        std::string item = trim(s.substr(0, comma));
        s = comma == std::string_view::npos ? std::string_view{} : s.substr(comma + 1);
        std::string_view part = item;
        int lo = 0, hi = 0;
        if (!read_int(part, 1, 2, lo)) throw bad();
        hi = lo;
        if (eat(part, '-') && !read_int(part, 1, 2, hi)) throw bad();
        if (!part.empty() || lo < 1 || hi > 12 || hi < lo) throw bad();
        for (int m = lo; m <= hi; ++m) f.months[static_cast<std::size_t>(m)] = true;
        any = true;
    }
    if (!any) throw bad();
    return f;
}

std::vector<int> MonthFilter::list() const {
    std::vector<int> out;
    for (int m = 1; m <= 12; ++m) {
        if (months[static_cast<std::size_t>(m)]) out.push_back(m);
    }
    return out;
}

std::size_t IngestPeriod::day_count() const {
    std::size_t n = 0;
    for (sys_days d{window.first}; d <= sys_days{window.last}; d += days{1}) {
        if (months.contains(Date{d})) ++n;
    }
    return n;
}

std::map<std::string, std::size_t> OutcomeTable::exclusion_counts() const {
    std::map<std::string, std::size_t> counts;
    for (const auto& e : excluded) ++counts[e.reason];
    return counts;
}

OutcomeTable outage_rate(const std::vector<OutageInterval>& intervals, const OutageOptions& options) {
    OutcomeTable out;
    out.pipeline = "outage";
    out.input_count = intervals.size();

    for (const auto& r : intervals) {
        if (!(r.customers_total > 0.0)) {
            throw Error(ErrorCode::Record, "record '" + r.record_id + "': customers_total must be positive");
        }
        if (r.customers_out < 0.0 || r.customers_out > r.customers_total) {
            throw Error(ErrorCode::Record, "record '" + r.record_id + "': customers_out outside [0, customers_total]");
        }
        if (r.timestamp.time_since_epoch().count() % 30 != 0) {
            throw Error(ErrorCode::Record, "record '" + r.record_id + "': timestamp is not on a 30-minute boundary");
        }
    }

    // Identical records are collapsed so re-ingesting a slot changes nothing.
    using Key = std::tuple<std::string, DateTime::rep, int, double, double>;
    std::vector<std::size_t> order(intervals.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto key = [&](std::size_t i) {
        const auto& r = intervals[i];
        return Key{r.locality_id, r.timestamp.time_since_epoch().count(), static_cast<int>(r.system), r.customers_out,
                   r.customers_total};
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });

    // Exclusions are reported in input order.
    std::vector<std::pair<std::size_t, std::string>> dropped;
    std::vector<const OutageInterval*> kept;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& r = intervals[order[k]];
        if (!options.period.contains(Date{floor<days>(r.timestamp)})) {
            dropped.emplace_back(order[k], "outside period");
            continue;
        }
        if (!kept.empty() && key(order[k]) == key(static_cast<std::size_t>(kept.back() - intervals.data()))) {
            dropped.emplace_back(order[k], "duplicate record");
            continue;
        }
        kept.push_back(&r);
    }

    struct Slot {
        std::vector<const OutageInterval*> network;
        std::vector<const OutageInterval*> radial;
    };
    std::map<std::pair<std::string, DateTime>, Slot> slots;
    for (const auto* r : kept) {
        auto& slot = slots[{r->locality_id, r->timestamp}];
        (r->system == DistributionSystem::Network ? slot.network : slot.radial).push_back(r);
    }

    // locality -> day -> max slot rate
    std::map<std::string, std::map<sys_days, double>> daily;
    std::map<std::string, double> cumulative;
    for (const auto& [where, slot] : slots) {
        double out_sum = 0.0;
        double total = 0.0;
        for (const auto* n : slot.network) {
            out_sum += n->customers_out;
            total = std::max(total, n->customers_total);
            ++out.included_count;
        }
        for (const auto* r : slot.radial) {
            const bool mirrors_network =
                r->customers_out > options.dedup_threshold &&
                std::any_of(slot.network.begin(), slot.network.end(),
                            [&](const OutageInterval* n) { return n->customers_out == r->customers_out; });
            if (mirrors_network) {
                dropped.emplace_back(static_cast<std::size_t>(r - intervals.data()), "radial duplicates network");
                continue;
            }
            out_sum += r->customers_out;
            total = std::max(total, r->customers_total);
            ++out.included_count;
        }
        const double rate = out_sum / total;
        const sys_days day = floor<days>(where.second);
        double& m = daily[where.first][day];
        m = std::max(m, rate);
        cumulative[where.first] += rate;
    }

    std::sort(dropped.begin(), dropped.end());
    for (auto& [i, reason] : dropped) out.excluded.push_back({intervals[i].record_id, std::move(reason)});

    if (options.metric == OutageMetric::Cumulative) {
        out.values = std::move(cumulative);
        return out;
    }
    const std::size_t n_days = options.period.day_count();
    if (n_days == 0) throw Error(ErrorCode::Config, "outage period contains no days");
    for (const auto& [locality, by_day] : daily) {
        double sum = 0.0;
        for (const auto& [_, m] : by_day) sum += m;
        out.values[locality] = sum / static_cast<double>(n_days);
    }
    return out;
}

OutcomeTable ems_heat_counts(const std::vector<DispatchRecord>& records, const EmsOptions& options) {
    OutcomeTable out;
    out.pipeline = "ems";
    out.input_count = records.size();
    std::map<std::string, double> counts;
    for (const auto& u : options.zero_fill_units) counts[u] = 0.0;
    for (const auto& r : records) {
        if (!r.date) {
            out.excluded.push_back({r.incident_id, "missing date"});
        } else if (!r.zipcode || r.zipcode->empty()) {
            out.excluded.push_back({r.incident_id, "missing zipcode"});
        } else if (!options.period.contains(*r.date)) {
            out.excluded.push_back({r.incident_id, "outside period"});
        } else if (!options.final_call_types.count(r.final_call_type)) {
            out.excluded.push_back({r.incident_id, options.final_call_types.count(r.initial_call_type)
                                                       ? "initial call type only"
                                                       : "final call type"});
        } else {
            counts[*r.zipcode] += 1.0;
            ++out.included_count;
        }
    }
    out.values = std::move(counts);
    return out;
}

OutcomeTable hydrant_complaints(const std::vector<ComplaintRecord>& records,
                                const std::map<std::string, double>& populations, const HydrantOptions& options) {
    OutcomeTable out;
    out.pipeline = "hydrant";
    out.input_count = records.size();

    std::map<std::string, double> counts;
    for (const auto& [tract, pop] : populations) {
        if (pop > 0.0) {
            counts[tract] = 0.0;
        } else {
            out.excluded_units.push_back({tract, "zero population"});
        }
    }
    for (const auto& r : records) {
        const bool duplicate =
            std::any_of(options.duplicate_markers.begin(), options.duplicate_markers.end(),
                        [&](const std::string& m) { return !m.empty() && r.resolution.find(m) != std::string::npos; });
        if (!r.tract_id || r.tract_id->empty()) {
            out.excluded.push_back({r.complaint_id, "missing tract"});
        } else if (!r.created_date) {
            out.excluded.push_back({r.complaint_id, "missing date"});
        } else if (!options.period.contains(*r.created_date)) {
            out.excluded.push_back({r.complaint_id, "outside period"});
        } else if (!options.descriptors.count(r.descriptor)) {
            out.excluded.push_back({r.complaint_id, "descriptor not allowlisted"});
        } else if (duplicate) {
            out.excluded.push_back({r.complaint_id, "duplicate resolution"});
        } else if (!counts.count(*r.tract_id)) {
            out.excluded.push_back({r.complaint_id, "no population"});
        } else {
            counts[*r.tract_id] += 1.0;
            ++out.included_count;
        }
    }
    for (const auto& [tract, c] : counts) out.values[tract] = 1000.0 * c / populations.at(tract);
    return out;
}

std::map<std::string, double> impact_ranking(const std::map<std::string, double>& values) {
    Column col;
    col.reserve(values.size());
    for (const auto& [_, v] : values) col.emplace_back(v);
    const Column pct = percentile_rank(col);
    std::map<std::string, double> out;
    std::size_t i = 0;
    for (const auto& [id, _] : values) out.emplace(id, *pct[i++]);
    return out;
}

OutageColumns parse_outage_columns(const nlohmann::json& doc) {
    OutageColumns c;
    apply_mapping<OutageColumns>(doc,
                                 {{"record_id", &OutageColumns::record_id},
                                  {"locality", &OutageColumns::locality},
                                  {"timestamp", &OutageColumns::timestamp},
                                  {"system", &OutageColumns::system},
                                  {"customers_out", &OutageColumns::customers_out},
                                  {"customers_total", &OutageColumns::customers_total}},
                                 c, "outage");
    return c;
}

DispatchColumns parse_dispatch_columns(const nlohmann::json& doc) {
    DispatchColumns c;
    apply_mapping<DispatchColumns>(doc,
                                   {{"incident_id", &DispatchColumns::incident_id},
                                    {"date", &DispatchColumns::date},
                                    {"zipcode", &DispatchColumns::zipcode},
                                    {"initial_call_type", &DispatchColumns::initial_call_type},
                                    {"final_call_type", &DispatchColumns::final_call_type}},
                                   c, "ems");
    return c;
}

ComplaintColumns parse_complaint_columns(const nlohmann::json& doc) {
    ComplaintColumns c;
    apply_mapping<ComplaintColumns>(doc,
                                    {{"complaint_id", &ComplaintColumns::complaint_id},
                                     {"created_date", &ComplaintColumns::created_date},
                                     {"tract_id", &ComplaintColumns::tract_id},
                                     {"descriptor", &ComplaintColumns::descriptor},
                                     {"resolution", &ComplaintColumns::resolution}},
                                    c, "hydrant");
    return c;
}

std::vector<OutageInterval> read_outages(const CsvTable& table, const OutageColumns& columns) {
    const auto id_col = columns.record_id.empty() ? std::nullopt : std::optional(table.column(columns.record_id));
    const std::size_t loc = table.column(columns.locality);
    const std::size_t ts = table.column(columns.timestamp);
    const std::size_t sys = table.column(columns.system);
    const std::size_t co = table.column(columns.customers_out);
    const std::size_t ct = table.column(columns.customers_total);

    std::vector<OutageInterval> out;
    out.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string where = "row " + std::to_string(r + 1);
        OutageInterval rec;
        rec.record_id = id_col ? trim(row[*id_col]) : std::to_string(r + 1);
        rec.locality_id = trim(row[loc]);
        auto t = parse_datetime(row[ts]);
        if (!t) throw Error(ErrorCode::Parse, where + ": bad timestamp '" + row[ts] + "'");
        rec.timestamp = *t;
        const std::string s = lower(trim(row[sys]));
        if (s == "network") {
            rec.system = DistributionSystem::Network;
        } else if (s == "radial") {
            rec.system = DistributionSystem::Radial;
        } else {
            throw Error(ErrorCode::Parse, where + ": unknown distribution system '" + row[sys] + "'");
        }
        auto o = parse_number(row[co]);
        auto tot = parse_number(row[ct]);
        if (!o || !tot) throw Error(ErrorCode::Parse, where + ": customer counts must be numbers");
        rec.customers_out = *o;
        rec.customers_total = *tot;
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<DispatchRecord> read_dispatches(const CsvTable& table, const DispatchColumns& columns) {
    const std::size_t id = table.column(columns.incident_id);
    const std::size_t date = table.column(columns.date);
    const std::size_t zip = table.column(columns.zipcode);
    const std::size_t initial = table.column(columns.initial_call_type);
    const std::size_t final_ = table.column(columns.final_call_type);
    std::vector<DispatchRecord> out;
    out.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        DispatchRecord rec;
        rec.incident_id = trim(row[id]);
        if (auto d = non_empty(row[date])) {
            rec.date = parse_date(*d);
            if (!rec.date) throw Error(ErrorCode::Parse, "row " + std::to_string(r + 1) + ": bad date '" + *d + "'");
        }
        rec.zipcode = non_empty(row[zip]);
        rec.initial_call_type = trim(row[initial]);
        rec.final_call_type = trim(row[final_]);
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<ComplaintRecord> read_complaints(const CsvTable& table, const ComplaintColumns& columns) {
    const std::size_t id = table.column(columns.complaint_id);
    const std::size_t date = table.column(columns.created_date);
    const std::size_t tract = table.column(columns.tract_id);
    const std::size_t desc = table.column(columns.descriptor);
    const std::size_t res = table.column(columns.resolution);
    std::vector<ComplaintRecord> out;
    out.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        ComplaintRecord rec;
        rec.complaint_id = trim(row[id]);
        if (auto d = non_empty(row[date])) {
            rec.created_date = parse_date(*d);
            if (!rec.created_date) throw Error(ErrorCode::Parse, "row " + std::to_string(r + 1) + ": bad date '" + *d + "'");
        }
        rec.tract_id = non_empty(row[tract]);
        rec.descriptor = trim(row[desc]);
        rec.resolution = row[res];
        out.push_back(std::move(rec));
    }
    return out;
}

void write_outcome_csv(std::ostream& os, const std::map<std::string, double>& values) {
    write_csv_row(os, {"unit_id", "value"});
    for (const auto& [id, v] : values) write_csv_row(os, {id, format_number(v)});
}

void write_exclusions_csv(std::ostream& os, const std::vector<Exclusion>& excluded) {
    write_csv_row(os, {"record_id", "reason"});
    for (const auto& e : excluded) write_csv_row(os, {e.unit_id, e.reason});
}

nlohmann::json outcome_log_json(const OutcomeTable& table) {
    nlohmann::json out;
    out["pipeline"] = table.pipeline;
    out["input_count"] = table.input_count;
    out["included_count"] = table.included_count;
    out["excluded_count"] = table.excluded.size();
    out["exclusion_counts"] = table.exclusion_counts();
    out["n_units"] = table.values.size();
    out["excluded_units"] = nlohmann::json::array();
    for (const auto& e : table.excluded_units) {
        out["excluded_units"].push_back({{"unit_id", e.unit_id}, {"reason", e.reason}});
    }
    return out;
}

}  // namespace indexprobe
