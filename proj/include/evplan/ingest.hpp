#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evplan/matrix.hpp"

namespace evplan::ingest {

struct CivilDate {
    int year = 0;
    int month = 1;
    int day = 1;

    // Days since 1970-01-01 (proleptic Gregorian); used for day-span counts.
    std::int64_t day_number() const;
    auto operator<=>(const CivilDate&) const = default;
};

// Parses an ISO-8601 date or datetime; only the calendar date is kept.
std::optional<CivilDate> parse_iso_date(const std::string& text);

struct ChargingEvent {
    std::string station_id;
    std::string location_id;
    CivilDate start_time;
    double energy_kwh = 0.0;
};

struct RejectedRow {
    std::size_t line = 0;  // 1-based, header = line 1
    std::string reason;
};

struct ParseResult {
    std::vector<ChargingEvent> events;
    std::vector<RejectedRow> rejects;
    std::size_t rows_seen = 0;
    std::size_t duplicate_count = 0;  // identical (station, timestamp, energy); kept
};

// Optional renames from the file's column names to the canonical schema
// (station_id, location_id, start_time, energy_kwh).
using ColumnSchema = std::map<std::string, std::string>;

ParseResult parse_events(const std::filesystem::path& path, const ColumnSchema& schema = {});

struct AdoptionRecord {
    int year = 0;
    double pev_count = 0.0;
    double cs_count = 0.0;
};

class AdoptionSeries {
public:
    AdoptionSeries(std::string region_id, std::vector<AdoptionRecord> records, int reference_year);

    const std::string& region_id() const { return region_id_; }
    int reference_year() const { return reference_year_; }
    int first_year() const { return records_.front().year; }
    int last_year() const { return records_.back().year; }

    // PEV_t / CS_t; missing years inside the span are linearly interpolated,
    // years outside it are refused.
    double ratio(int year) const;
    double reference_ratio() const { return ratio(reference_year_); }

private:
    std::string region_id_;
    std::vector<AdoptionRecord> records_;  // sorted by year
    int reference_year_;
};

AdoptionSeries parse_adoption(const std::filesystem::path& path, int reference_year,
                              const std::string& region_id = "");

// E'_t: raw energy scaled by the reference EVs-per-station ratio over the
// event year's ratio.
double adjust_energy(const ChargingEvent& event, const AdoptionSeries& adoption);

double station_daily_consumption(const std::vector<double>& adjusted_energies,
                                 std::int64_t days_active);

struct LocationConsumption {
    std::string location_id;
    std::map<std::string, double> station_daily;       // station -> kWh/day
    std::map<std::string, std::int64_t> days_active;   // station -> days
    double total = 0.0;
};

// Groups events by location, adjusts each event, derives per-station day
// spans (inclusive, first to last observed event) and daily consumptions.
std::vector<LocationConsumption> consumption_by_location(
    const std::vector<ChargingEvent>& events, const AdoptionSeries& adoption);

LocationConsumption location_consumption(
    const std::string& location_id,
    const std::map<std::string, double>& station_daily,
    const std::map<std::string, std::int64_t>& days_active);

struct FeatureTable {
    std::vector<std::string> row_labels;
    std::vector<std::string> columns;
    Matrix values;  // n x d
    bool standardized = false;
    std::vector<double> means;  // populated by standardize(); original-scale
    std::vector<double> sds;

    std::size_t column_index(const std::string& name) const;
    std::vector<double> column(const std::string& name) const;
};

// One row per location; columns sorted lexicographically with
// consumption_level last.
FeatureTable build_feature_table(
    const std::vector<std::string>& locations,
    const std::map<std::string, double>& consumption,
    const std::map<std::string, std::map<std::string, double>>& node_features);

// Z-scores every column (sample SD, n-1 denominator). The input is untouched.
FeatureTable standardize(const FeatureTable& table);

// Inverse transform using the means/SDs recorded by standardize().
FeatureTable unstandardize(const FeatureTable& table);

// Feature-table CSV plus a sidecar metadata JSON holding the standardized
// flag and per-column means/SDs.
void write_feature_table(const std::filesystem::path& csv_path, const FeatureTable& table);
FeatureTable read_feature_table(const std::filesystem::path& csv_path);

}  // namespace evplan::ingest
