#include "evplan/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "evplan/csv.hpp"

namespace evplan::ingest {

std::int64_t CivilDate::day_number() const {
    // Howard Hinnant's days_from_civil.
    const int y = year - (month <= 2);
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (month + (month > 2 ? -3 : 9)) + 2) / 5 + day - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::optional<CivilDate> parse_iso_date(const std::string& text) {
    // YYYY-MM-DD, optionally followed by 'T' or ' ' and a time of day.
    if (text.size() < 10) return std::nullopt;
    auto digits = [&](std::size_t off, std::size_t len) -> std::optional<int> {
        int v = 0;
        for (std::size_t i = off; i < off + len; ++i) {
            if (text[i] < '0' || text[i] > '9') return std::nullopt;
            v = v * 10 + (text[i] - '0');
        }
        return v;
    };
    if (text[4] != '-' || text[7] != '-') return std::nullopt;
    auto y = digits(0, 4), m = digits(5, 2), d = digits(8, 2);
    if (!y || !m || !d) return std::nullopt;
    if (text.size() > 10 && text[10] != 'T' && text[10] != ' ') return std::nullopt;
    if (*m < 1 || *m > 12 || *d < 1 || *d > 31) return std::nullopt;
    static constexpr int days_in[] = {31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (*d > days_in[*m - 1]) return std::nullopt;
    if (*m == 2 && *d == 29) {
        const bool leap = (*y % 4 == 0 && *y % 100 != 0) || *y % 400 == 0;
        if (!leap) return std::nullopt;
    }
    return CivilDate{*y, *m, *d};
}

ParseResult parse_events(const std::filesystem::path& path, const ColumnSchema& schema) {
    if (!std::filesystem::exists(path))
        throw std::runtime_error("events file does not exist: " + path.string());
    csv::Table t = csv::read_file(path);

    auto canonical = [&schema](const std::string& name) {
        auto it = schema.find(name);
        return it == schema.end() ? name : it->second;
    };
    std::vector<std::string> header(t.header.size());
    for (std::size_t i = 0; i < t.header.size(); ++i) header[i] = canonical(t.header[i]);
    auto col = [&header](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw std::runtime_error("missing required column: " + name);
    };
    const std::size_t c_station = col("station_id");
    const std::size_t c_location = col("location_id");
    const std::size_t c_time = col("start_time");
    const std::size_t c_energy = col("energy_kwh");

    ParseResult result;
    std::map<std::string, std::string> station_location;
    std::set<std::tuple<std::string, CivilDate, double>> seen;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::size_t line = r + 2;
        ++result.rows_seen;
        if (row.size() != t.header.size()) {
            result.rejects.push_back({line, "wrong field count"});
            continue;
        }
        auto date = parse_iso_date(row[c_time]);
        if (!date) {
            result.rejects.push_back({line, "unparseable timestamp: " + row[c_time]});
            continue;
        }
        auto energy = csv::parse_double(row[c_energy]);
        if (!energy || !std::isfinite(*energy)) {
            result.rejects.push_back({line, "unparseable energy: " + row[c_energy]});
            continue;
        }
        if (*energy < 0.0) {
            result.rejects.push_back({line, "negative energy: " + row[c_energy]});
            continue;
        }
        if (row[c_station].empty() || row[c_location].empty()) {
            result.rejects.push_back({line, "empty station or location id"});
            continue;
        }
        auto [it, inserted] = station_location.emplace(row[c_station], row[c_location]);
        if (!inserted && it->second != row[c_location])
            throw std::runtime_error("station " + row[c_station] + " maps to multiple locations (" +
                                     it->second + ", " + row[c_location] + ")");
        if (!seen.emplace(row[c_station], *date, *energy).second) ++result.duplicate_count;
        result.events.push_back({row[c_station], row[c_location], *date, *energy});
    }
    return result;
}

AdoptionSeries::AdoptionSeries(std::string region_id, std::vector<AdoptionRecord> records,
                               int reference_year)
    : region_id_(std::move(region_id)), records_(std::move(records)), reference_year_(reference_year) {
    if (records_.empty()) throw std::runtime_error("adoption series is empty");
    std::sort(records_.begin(), records_.end(),
              [](const auto& a, const auto& b) { return a.year < b.year; });
    for (std::size_t i = 1; i < records_.size(); ++i)
        if (records_[i].year == records_[i - 1].year)
            throw std::runtime_error("duplicate adoption year " + std::to_string(records_[i].year));
    for (const auto& r : records_)
        if (r.pev_count <= 0.0 || r.cs_count <= 0.0)
            throw std::runtime_error("adoption counts must be positive (year " +
                                     std::to_string(r.year) + ")");
    if (reference_year_ < first_year() || reference_year_ > last_year())
        throw std::runtime_error("reference year " + std::to_string(reference_year_) +
                                 " outside adoption coverage [" + std::to_string(first_year()) +
                                 ", " + std::to_string(last_year()) + "]");
}

double AdoptionSeries::ratio(int year) const {
    if (year < first_year() || year > last_year())
        throw std::runtime_error("year " + std::to_string(year) +
                                 " outside adoption coverage [" + std::to_string(first_year()) +
                                 ", " + std::to_string(last_year()) + "]");
    auto it = std::lower_bound(records_.begin(), records_.end(), year,
                               [](const AdoptionRecord& r, int y) { return r.year < y; });
    if (it != records_.end() && it->year == year) return it->pev_count / it->cs_count;
    // Gap year: interpolate the counts linearly, then form the ratio.
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double f = static_cast<double>(year - lo.year) / static_cast<double>(hi.year - lo.year);
    const double pev = lo.pev_count + f * (hi.pev_count - lo.pev_count);
    const double cs = lo.cs_count + f * (hi.cs_count - lo.cs_count);
    return pev / cs;
}

AdoptionSeries parse_adoption(const std::filesystem::path& path, int reference_year,
                              const std::string& region_id) {
    csv::Table t = csv::read_file(path);
    const std::size_t c_year = t.require("year");
    const std::size_t c_pev = t.require("pev_count");
    const std::size_t c_cs = t.require("cs_count");
    const auto c_region = t.find("region_id");
    std::string region = region_id;
    std::vector<AdoptionRecord> records;
    for (const auto& row : t.rows) {
        if (c_region) {
            if (region.empty()) region = row[*c_region];
            else if (!region_id.empty() && row[*c_region] != region_id) continue;
            else if (region_id.empty() && row[*c_region] != region)
                throw std::runtime_error("multiple regions in adoption file; pass a region id");
        }
        auto year = csv::parse_int(row[c_year]);
        auto pev = csv::parse_double(row[c_pev]);
        auto cs = csv::parse_double(row[c_cs]);
        if (!year || !pev || !cs)
            throw std::runtime_error("malformed adoption row in " + path.string());
        records.push_back({static_cast<int>(*year), *pev, *cs});
    }
    return AdoptionSeries(region, std::move(records), reference_year);
}

double adjust_energy(const ChargingEvent& event, const AdoptionSeries& adoption) {
    return event.energy_kwh * adoption.reference_ratio() / adoption.ratio(event.start_time.year);
}

double station_daily_consumption(const std::vector<double>& adjusted_energies,
                                 std::int64_t days_active) {
    if (days_active < 1) throw std::runtime_error("days_active must be >= 1");
    double total = 0.0;
    for (double e : adjusted_energies) total += e;
    return total / static_cast<double>(days_active);
}

LocationConsumption location_consumption(const std::string& location_id,
                                         const std::map<std::string, double>& station_daily,
                                         const std::map<std::string, std::int64_t>& days_active) {
    if (station_daily.empty())
        throw std::runtime_error("location " + location_id + " has no stations");
    LocationConsumption lc;
    lc.location_id = location_id;
    lc.station_daily = station_daily;
    lc.days_active = days_active;
    for (const auto& [_, v] : station_daily) lc.total += v;
    return lc;
}

std::vector<LocationConsumption> consumption_by_location(const std::vector<ChargingEvent>& events,
                                                         const AdoptionSeries& adoption) {
    struct StationAcc {
        std::string location;
        double adjusted_sum = 0.0;
        CivilDate first, last;
        bool any = false;
    };
    std::map<std::string, StationAcc> stations;
    for (const auto& e : events) {
        auto& acc = stations[e.station_id];
        acc.location = e.location_id;
        acc.adjusted_sum += adjust_energy(e, adoption);
        if (!acc.any || e.start_time < acc.first) acc.first = e.start_time;
        if (!acc.any || acc.last < e.start_time) acc.last = e.start_time;
        acc.any = true;
    }
    std::map<std::string, std::pair<std::map<std::string, double>, std::map<std::string, std::int64_t>>>
        by_location;
    for (const auto& [sid, acc] : stations) {
        const std::int64_t days = acc.last.day_number() - acc.first.day_number() + 1;
        auto& [daily, spans] = by_location[acc.location];
        daily[sid] = acc.adjusted_sum / static_cast<double>(days);
        spans[sid] = days;
    }
    std::vector<LocationConsumption> out;
    out.reserve(by_location.size());
    for (const auto& [loc, maps] : by_location)
        out.push_back(location_consumption(loc, maps.first, maps.second));
    return out;
}

std::size_t FeatureTable::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    throw std::runtime_error("feature table has no column: " + name);
}

std::vector<double> FeatureTable::column(const std::string& name) const {
    return values.column(column_index(name));
}

FeatureTable build_feature_table(
    const std::vector<std::string>& locations,
    const std::map<std::string, double>& consumption,
    const std::map<std::string, std::map<std::string, double>>& node_features) {
    std::set<std::string> names;
    for (const auto& [_, feats] : node_features)
        for (const auto& [name, __] : feats) names.insert(name);
    names.erase("consumption_level");

    FeatureTable t;
    t.row_labels = locations;
    t.columns.assign(names.begin(), names.end());  // lexicographic
    t.columns.push_back("consumption_level");
    t.values = Matrix(locations.size(), t.columns.size());
    for (std::size_t r = 0; r < locations.size(); ++r) {
        const auto& loc = locations[r];
        auto cit = consumption.find(loc);
        if (cit == consumption.end())
            throw std::runtime_error("location " + loc + " is missing feature consumption_level");
        auto fit = node_features.find(loc);
        for (std::size_t c = 0; c + 1 < t.columns.size(); ++c) {
            const auto& name = t.columns[c];
            if (fit == node_features.end() || !fit->second.count(name))
                throw std::runtime_error("location " + loc + " is missing feature " + name);
            t.values(r, c) = fit->second.at(name);
        }
        t.values(r, t.columns.size() - 1) = cit->second;
    }
    return t;
}

FeatureTable standardize(const FeatureTable& table) {
    const std::size_t n = table.values.rows();
    const std::size_t d = table.values.cols();
    if (n < 2) throw std::runtime_error("standardize needs at least 2 rows");
    FeatureTable out = table;
    out.means.assign(d, 0.0);
    out.sds.assign(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += table.values(i, j);
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dlt = table.values(i, j) - mean;
            ss += dlt * dlt;
        }
        const double sd = std::sqrt(ss / static_cast<double>(n - 1));
        if (sd == 0.0)
            throw std::runtime_error("cannot standardize constant column: " + table.columns[j]);
        out.means[j] = mean;
        out.sds[j] = sd;
        for (std::size_t i = 0; i < n; ++i) out.values(i, j) = (table.values(i, j) - mean) / sd;
    }
    out.standardized = true;
    return out;
}

FeatureTable unstandardize(const FeatureTable& table) {
    if (!table.standardized || table.means.size() != table.values.cols())
        throw std::runtime_error("unstandardize: table lacks standardization parameters");
    FeatureTable out = table;
    for (std::size_t j = 0; j < table.values.cols(); ++j)
        for (std::size_t i = 0; i < table.values.rows(); ++i)
            out.values(i, j) = table.values(i, j) * table.sds[j] + table.means[j];
    out.standardized = false;
    out.means.clear();
    out.sds.clear();
    return out;
}

namespace {
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
    auto p = csv_path;
    p += ".meta.json";
    return p;
}
}  // namespace

void write_feature_table(const std::filesystem::path& csv_path, const FeatureTable& table) {
    csv::Table t;
    t.header.push_back("location_id");
    for (const auto& c : table.columns) t.header.push_back(c);
    for (std::size_t i = 0; i < table.values.rows(); ++i) {
        std::vector<std::string> row;
        row.push_back(table.row_labels[i]);
        for (std::size_t j = 0; j < table.values.cols(); ++j)
            row.push_back(csv::format_double(table.values(i, j)));
        t.rows.push_back(std::move(row));
    }
    csv::write_file(csv_path, t);

    nlohmann::ordered_json meta;
    meta["standardized"] = table.standardized;
    meta["columns"] = table.columns;
    meta["means"] = table.means;
    meta["sds"] = table.sds;
    std::ofstream out(sidecar_path(csv_path), std::ios::binary);
    out << meta.dump(2) << "\n";
}

FeatureTable read_feature_table(const std::filesystem::path& csv_path) {
    csv::Table t = csv::read_file(csv_path);
    if (t.header.empty() || t.header[0] != "location_id")
        throw std::runtime_error("feature table must start with location_id column");
    FeatureTable ft;
    ft.columns.assign(t.header.begin() + 1, t.header.end());
    ft.values = Matrix(t.rows.size(), ft.columns.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        ft.row_labels.push_back(t.rows[i][0]);
        for (std::size_t j = 0; j < ft.columns.size(); ++j) {
            auto v = csv::parse_double(t.rows[i][j + 1]);
            if (!v) throw std::runtime_error("malformed feature value in " + csv_path.string());
            ft.values(i, j) = *v;
        }
    }
    const auto meta_path = sidecar_path(csv_path);
    if (std::filesystem::exists(meta_path)) {
        std::ifstream in(meta_path, std::ios::binary);
        nlohmann::json meta = nlohmann::json::parse(in);
        ft.standardized = meta.value("standardized", false);
        if (meta.contains("means")) ft.means = meta["means"].get<std::vector<double>>();
        if (meta.contains("sds")) ft.sds = meta["sds"].get<std::vector<double>>();
    }
    return ft;
}

}  // namespace evplan::ingest
