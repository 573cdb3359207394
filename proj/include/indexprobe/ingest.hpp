#pragma once
// Turns raw outage, EMS dispatch and 311 complaint streams into per-unit
// outcome values. Every input record ends up either included or in the
// exclusion log, never silently dropped.

#include <array>
#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "indexprobe/sensitivity.hpp"

namespace indexprobe {

using Date = std::chrono::year_month_day;
using DateTime = std::chrono::sys_time<std::chrono::minutes>;

// Accepts YYYY-MM-DD, YYYY-MM-DD[ T]HH:MM[:SS], MM/DD/YYYY and
// MM/DD/YYYY HH:MM[:SS][ AM|PM]. Seconds are truncated.
std::optional<DateTime> parse_datetime(std::string_view text);
std::optional<Date> parse_date(std::string_view text);
std::string format_date(const Date& date);

struct DateWindow {
    Date first{std::chrono::year{2021}, std::chrono::January, std::chrono::day{1}};
    Date last{std::chrono::year{2025}, std::chrono::December, std::chrono::day{31}};

    bool contains(const Date& d) const noexcept;
    // "YYYY-MM-DD:YYYY-MM-DD", inclusive.
    static DateWindow parse(std::string_view text);
};

struct MonthFilter {
    std::array<bool, 13> months{false, false, false, false, false, true, true, true, true, true, false, false, false};

    bool contains(const Date& d) const noexcept;
    // "5,6,7", "5-9" or a mix.
    static MonthFilter parse(std::string_view text);
    std::vector<int> list() const;
};

// Defaults: 2021-2025, May through September.
struct IngestPeriod {
    DateWindow window;
    MonthFilter months;

    bool contains(const Date& d) const noexcept { return window.contains(d) && months.contains(d); }
    // Calendar days inside both the window and the month filter.
    std::size_t day_count() const;
};

struct OutcomeTable {
    std::string pipeline;
    std::map<std::string, double> values;
    std::size_t input_count = 0;
    std::size_t included_count = 0;
    std::vector<Exclusion> excluded;          // one per excluded record
    std::vector<Exclusion> excluded_units;    // units left out of values

    std::map<std::string, std::size_t> exclusion_counts() const;
};

enum class DistributionSystem { Network, Radial };

struct OutageInterval {
    std::string record_id;
    std::string locality_id;
    DateTime timestamp;
    DistributionSystem system = DistributionSystem::Network;
    double customers_out = 0.0;
    double customers_total = 0.0;
};

enum class OutageMetric {
    AverageDailyMax,  // mean over period days of the daily maximum slot rate
    Cumulative,       // sum of slot rates over the period
};

struct OutageOptions {
    IngestPeriod period;
    // Radial records equal to the network record are dropped above this count.
    double dedup_threshold = 10.0;
    OutageMetric metric = OutageMetric::AverageDailyMax;
};

// Slot rate is the summed customers_out of the retained records in a
// 30-minute slot over the locality's customer total. Days of the period with
// no records count as zero.
OutcomeTable outage_rate(const std::vector<OutageInterval>& intervals, const OutageOptions& options = {});

struct DispatchRecord {
    std::string incident_id;
    std::optional<Date> date;
    std::optional<std::string> zipcode;
    std::string initial_call_type;
    std::string final_call_type;
};

struct EmsOptions {
    IngestPeriod period;
    std::set<std::string> final_call_types{"HEAT"};
    // Units reported with a zero count when no record qualifies.
    std::vector<std::string> zero_fill_units;
};

// Raw counts per zipcode of records whose final call type qualifies.
OutcomeTable ems_heat_counts(const std::vector<DispatchRecord>& records, const EmsOptions& options = {});

struct ComplaintRecord {
    std::string complaint_id;
    std::optional<Date> created_date;
    std::optional<std::string> tract_id;
    std::string descriptor;
    std::string resolution;
};

struct HydrantOptions {
    IngestPeriod period;
    std::set<std::string> descriptors{"Hydrant Running Full (WA4)", "Hydrant Running (WC3)",
                                      "Illegal Use Of A Hydrant (CIN)", "Request To Open A Hydrant (WC4)"};
    // Case-sensitive substrings of the resolution text that mark a duplicate.
    std::vector<std::string> duplicate_markers{"duplicate"};
};

// Qualifying complaints per 1,000 residents for every tract with a positive
// population; tracts without one are listed in excluded_units.
OutcomeTable hydrant_complaints(const std::vector<ComplaintRecord>& records,
                                const std::map<std::string, double>& populations, const HydrantOptions& options = {});

// Tie-aware percentile ranks of an outcome column.
std::map<std::string, double> impact_ranking(const std::map<std::string, double>& values);

// Column-name mappings for the portal exports. Each maps a field name to the
// header used in the file; unknown fields are rejected.
struct OutageColumns {
    std::string record_id;  // empty: use the row number
    std::string locality = "locality";
    std::string timestamp = "timestamp";
    std::string system = "system";
    std::string customers_out = "customers_out";
    std::string customers_total = "customers_total";
};

struct DispatchColumns {
    std::string incident_id = "CAD_INCIDENT_ID";
    std::string date = "INCIDENT_DATETIME";
    std::string zipcode = "ZIPCODE";
    std::string initial_call_type = "INITIAL_CALL_TYPE";
    std::string final_call_type = "FINAL_CALL_TYPE";
};

struct ComplaintColumns {
    std::string complaint_id = "Unique Key";
    std::string created_date = "Created Date";
    std::string tract_id = "tract_id";
    std::string descriptor = "Descriptor";
    std::string resolution = "Resolution Description";
};

OutageColumns parse_outage_columns(const nlohmann::json& doc);
DispatchColumns parse_dispatch_columns(const nlohmann::json& doc);
ComplaintColumns parse_complaint_columns(const nlohmann::json& doc);

std::vector<OutageInterval> read_outages(const CsvTable& table, const OutageColumns& columns = {});
std::vector<DispatchRecord> read_dispatches(const CsvTable& table, const DispatchColumns& columns = {});
std::vector<ComplaintRecord> read_complaints(const CsvTable& table, const ComplaintColumns& columns = {});

// unit_id,value
void write_outcome_csv(std::ostream& os, const std::map<std::string, double>& values);
// record_id,reason
void write_exclusions_csv(std::ostream& os, const std::vector<Exclusion>& excluded);
nlohmann::json outcome_log_json(const OutcomeTable& table);

}  // namespace indexprobe
