#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "evplan/bayes.hpp"
#include "evplan/evalsuite.hpp"
#include "evplan/geo.hpp"
#include "evplan/ingest.hpp"
#include "evplan/siteopt.hpp"
#include "evplan/structlearn.hpp"

namespace evplan::pipeline {

struct PipelineConfig {
    // input files
    std::filesystem::path events;
    std::filesystem::path adoption;
    std::filesystem::path graph_nodes;
    std::filesystem::path graph_edges;
    std::filesystem::path pois;
    std::filesystem::path stations;
    std::filesystem::path registrations;
    int adoption_reference_year = 0;
    std::string adoption_region;

    bool standardize = true;  // raw mode exists for the scaling comparison

    structlearn::LearnConfig learn;
    std::vector<bayes::RegressionSpec> regression_specs;

    struct {
        std::size_t max_stations = 10;
        double d_rival = 250.0;
        double d_operator = 500.0;
        double radius = 400.0;
    } siteopt;

    struct {
        std::size_t replicates = 5;
        std::size_t permutations = 1000;
    } kci;

    geo::GeoConfig geo;

    std::filesystem::path out_dir = "out";
    std::uint64_t seed = 0;

    // Validates that every referenced input path exists.
    void validate() const;
    std::string content_hash() const;  // stable hash of the key-value form
};

// Flat key = value file with '#' comments.
PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const PipelineConfig& config);

struct StageReport {
    std::string name;
    double seconds = 0.0;
    std::map<std::string, std::string> notes;
};

struct RunReport {
    int schema = 1;
    std::filesystem::path run_dir;
    std::uint64_t seed = 0;
    std::string config_hash;
    unsigned threads = 1;
    std::vector<StageReport> stages;
    std::map<std::string, std::string> output_hashes;  // filename -> fnv1a hex
    bool notears_converged = true;
    bool dagma_converged = true;
    bool placement_optimal = true;
};

std::string fnv1a_file_hash(const std::filesystem::path& path);

// Runs ingest -> features -> learn -> evaluate -> regress -> select and
// writes every artifact plus report.json under a per-run directory stamped
// with the seed and config hash. A stage failure aborts with the stage name;
// earlier outputs are left in place. A non-empty `until` stops after the
// named stage (its prerequisites still run, in order).
RunReport run_pipeline(const PipelineConfig& config, const std::string& until = "");

void write_run_report(const std::filesystem::path& path, const RunReport& report);

// --- synthetic city ---------------------------------------------------------

struct SynthParams {
    std::size_t n_nodes = 300;      // 100..5000
    std::size_t n_locations = 50;   // 10..50
    std::size_t n_stations = 75;
    std::size_t n_rivals = 6;
    std::size_t n_poi_clusters = 16;
    double box_km = 6.0;
    // planted structural coefficients on standardized features
    double beta_amenities = 1.3;
    double beta_ev = 0.8;
    double beta_high_traffic = 0.7;
    double consumption_noise_sd = 0.15;

    void validate() const;
};

struct SyntheticCity {
    geo::StreetGraph graph;
    std::vector<geo::PointOfInterest> pois;
    std::vector<geo::StationSite> sites;
    std::map<std::string, double> registrations;
    std::vector<ingest::AdoptionRecord> adoption;
    int adoption_reference_year = 0;
    std::vector<ingest::ChargingEvent> events;

    // ground truth for assertions
    std::vector<std::string> location_nodes;                 // location_id == node_id
    std::map<std::string, double> location_consumption;      // kWh/day
    ingest::FeatureTable truth_table;                        // raw features + consumption
    std::vector<std::string> planted_parents;                // of consumption_level
};

SyntheticCity generate_synthetic_city(const SynthParams& params, std::uint64_t seed);

// Writes all dataset files into dir and returns a config whose input paths
// point at them.
PipelineConfig write_city(const std::filesystem::path& dir, const SyntheticCity& city);

}  // namespace evplan::pipeline
