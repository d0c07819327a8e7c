#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "evplan/pipeline.hpp"

using namespace evplan;
namespace pl = pipeline;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

pl::SynthParams small_params() {
    pl::SynthParams p;
    p.n_nodes = 150;
    p.n_locations = 25;
    p.n_stations = 35;
    p.n_rivals = 3;
    return p;
}

}  // namespace

TEST_CASE("config round trip preserves every field and the content hash") {
    const auto dir = temp_dir("evplan_cfg");
    const auto city = pl::generate_synthetic_city(small_params(), 3);
    auto config = pl::write_city(dir / "city", city);
    config.seed = 17;
    config.out_dir = dir / "out";
    config.learn.lambda1 = 0.15;
    config.kci.permutations = 123;
    config.standardize = false;

    const auto path = dir / "roundtrip.conf";
    pl::save_config(path, config);
    const auto back = pl::load_config(path);
    CHECK(back.seed == 17);
    CHECK(back.learn.lambda1 == 0.15);
    CHECK(back.kci.permutations == 123);
    CHECK(!back.standardize);
    CHECK(back.events == config.events);
    CHECK(back.regression_specs.size() == config.regression_specs.size());
    CHECK(back.regression_specs[0].features == config.regression_specs[0].features);
    CHECK(back.content_hash() == config.content_hash());

    auto changed = back;
    changed.learn.lambda1 = 0.2;
    CHECK(changed.content_hash() != back.content_hash());
    std::filesystem::remove_all(dir);
}

TEST_CASE("config validation names missing inputs") {
    pl::PipelineConfig config;
    config.events = "/nonexistent/events.csv";
    CHECK_THROWS_WITH_AS(config.validate(), doctest::Contains("/nonexistent/events.csv"),
                         std::runtime_error);
}

TEST_CASE("synth params are range-checked") {
    pl::SynthParams p;
    p.n_nodes = 50;
    CHECK_THROWS(p.validate());
    p = pl::SynthParams{};
    p.n_locations = 5;
    CHECK_THROWS(p.validate());
    CHECK_NOTHROW(pl::SynthParams{}.validate());
}

TEST_CASE("synthetic city is self-consistent and reproducible") {
    const auto params = small_params();
    const auto city = pl::generate_synthetic_city(params, 11);
    CHECK(city.graph.n_nodes() == params.n_nodes);
    CHECK(city.location_nodes.size() == params.n_locations);
    CHECK(city.sites.size() == params.n_stations + params.n_rivals);
    CHECK(city.truth_table.values.rows() == params.n_locations);
    CHECK(city.planted_parents ==
          std::vector<std::string>{"amenities", "ev_count", "high_traffic"});
    for (const auto& [loc, c] : city.location_consumption) CHECK(c > 0.0);

    const auto again = pl::generate_synthetic_city(params, 11);
    CHECK(again.location_nodes == city.location_nodes);
    for (const auto& [loc, c] : city.location_consumption)
        CHECK(again.location_consumption.at(loc) == c);

    const auto other = pl::generate_synthetic_city(params, 12);
    CHECK(other.location_consumption != city.location_consumption);
}

TEST_CASE("ingest of the written city reproduces the planted consumption exactly") {
    const auto dir = temp_dir("evplan_city_ingest");
    const auto city = pl::generate_synthetic_city(small_params(), 5);
    const auto config = pl::write_city(dir, city);

    const auto parsed = ingest::parse_events(config.events);
    CHECK(parsed.rejects.empty());
    const auto adoption = ingest::parse_adoption(config.adoption, config.adoption_reference_year);
    const auto per_location = ingest::consumption_by_location(parsed.events, adoption);
    REQUIRE(per_location.size() == city.location_consumption.size());
    for (const auto& lc : per_location)
        CHECK(lc.total ==
              doctest::Approx(city.location_consumption.at(lc.location_id)).epsilon(1e-9));
    std::filesystem::remove_all(dir);
}

TEST_CASE("amenities and shopping counts are strongly correlated at locations") {
    // Fig. 6-style calibration: the generator plants a strong amenities /
    // shopping_and_food correlation (target rho ~ 0.84).
    double sum = 0.0;
    const int reps = 4;
    for (int s = 0; s < reps; ++s) {
        const auto city = pl::generate_synthetic_city(pl::SynthParams{}, 100 + s);
        const auto& t = city.truth_table;
        const auto a = t.column("amenities");
        const auto b = t.column("shopping_and_food");
        const auto n = static_cast<double>(a.size());
        double ma = 0, mb = 0;
        for (std::size_t i = 0; i < a.size(); ++i) { ma += a[i]; mb += b[i]; }
        ma /= n;
        mb /= n;
        double saa = 0, sbb = 0, sab = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            saa += (a[i] - ma) * (a[i] - ma);
            sbb += (b[i] - mb) * (b[i] - mb);
            sab += (a[i] - ma) * (b[i] - mb);
        }
        sum += sab / std::sqrt(saa * sbb);
    }
    CHECK(sum / reps == doctest::Approx(0.8446).epsilon(0.12));
}

TEST_CASE("run_pipeline completes and reruns are byte-identical") {
    const auto dir = temp_dir("evplan_e2e");
    const auto city = pl::generate_synthetic_city(small_params(), 7);
    auto config = pl::write_city(dir / "city", city);
    config.out_dir = dir / "out";
    config.seed = 7;
    config.kci.permutations = 200;  // keep the smoke test quick
    config.kci.replicates = 2;

    const auto report = pl::run_pipeline(config);
    CHECK(report.schema == 1);
    CHECK(std::filesystem::exists(report.run_dir / "report.json"));
    for (const char* artifact :
         {"consumption.csv", "node_features.csv", "feature_table.csv", "w_notears.csv",
          "w_dagma.csv", "edges_notears.csv", "edges_dagma.csv", "ci_results.csv", "metrics.csv",
          "posterior_summary.csv", "model_comparison.csv", "scores.csv", "placement.geojson",
          "placement_report.json"})
        CHECK(std::filesystem::exists(report.run_dir / artifact));
    CHECK(report.stages.size() == 6);
    CHECK(!report.output_hashes.empty());

    // rerun into a fresh output root: hashes must match exactly
    auto config2 = config;
    config2.out_dir = dir / "out2";
    const auto second = pl::run_pipeline(config2);
    CHECK(second.config_hash == report.config_hash);
    REQUIRE(second.output_hashes.size() == report.output_hashes.size());
    for (const auto& [file, hash] : report.output_hashes)
        CHECK(second.output_hashes.at(file) == hash);

    // stage prefix appears in failure contexts
    auto broken = config;
    broken.events = dir / "city" / "nodes.csv";  // wrong schema
    CHECK_THROWS_WITH_AS(static_cast<void>(pl::run_pipeline(broken)),
                         doctest::Contains("stage ingest"), std::runtime_error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("run_pipeline honors the until parameter") {
    const auto dir = temp_dir("evplan_until");
    const auto city = pl::generate_synthetic_city(small_params(), 9);
    auto config = pl::write_city(dir / "city", city);
    config.out_dir = dir / "out";
    config.seed = 9;

    const auto report = pl::run_pipeline(config, "features");
    REQUIRE(report.stages.size() == 2);
    CHECK(report.stages[0].name == "ingest");
    CHECK(report.stages[1].name == "features");
    CHECK(std::filesystem::exists(report.run_dir / "feature_table.csv"));
    CHECK(!std::filesystem::exists(report.run_dir / "w_notears.csv"));
    CHECK(std::filesystem::exists(report.run_dir / "report.json"));

    CHECK_THROWS(static_cast<void>(pl::run_pipeline(config, "nonsense")));
    std::filesystem::remove_all(dir);
}

TEST_CASE("fnv1a_file_hash is stable and content-sensitive") {
    const auto dir = temp_dir("evplan_hash");
    const auto p1 = dir / "a.txt";
    std::ofstream(p1) << "hello";
    const auto h1 = pl::fnv1a_file_hash(p1);
    CHECK(h1 == pl::fnv1a_file_hash(p1));
    std::ofstream(p1) << "hello!";
    CHECK(h1 != pl::fnv1a_file_hash(p1));
    CHECK_THROWS(static_cast<void>(pl::fnv1a_file_hash(dir / "missing.txt")));
    std::filesystem::remove_all(dir);
}
