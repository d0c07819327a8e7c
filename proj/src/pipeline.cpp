#include "evplan/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "evplan/csv.hpp"

namespace evplan::pipeline {

namespace {

std::string join_doubles(const std::vector<double>& v) {
    std::string out;
    for (double x : v) {
        if (!out.empty()) out += ",";
        out += csv::format_double(x);
    }
    return out;
}

std::vector<double> split_doubles(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto v = csv::parse_double(item);
        if (!v) throw std::runtime_error("bad numeric list entry: " + item);
        out.push_back(*v);
    }
    return out;
}

std::string join_specs(const std::vector<bayes::RegressionSpec>& specs) {
    std::string out;
    for (const auto& s : specs) {
        if (!out.empty()) out += ";";
        out += s.name();
    }
    return out;
}

std::vector<bayes::RegressionSpec> split_specs(const std::string& s) {
    std::vector<bayes::RegressionSpec> specs;
    std::stringstream ss(s);
    std::string spec_str;
    while (std::getline(ss, spec_str, ';')) {
        bayes::RegressionSpec spec;
        std::stringstream fs(spec_str);
        std::string f;
        while (std::getline(fs, f, ','))
            if (!f.empty()) spec.features.push_back(f);
        if (!spec.features.empty()) specs.push_back(std::move(spec));
    }
    return specs;
}

std::map<std::string, std::string> config_kv(const PipelineConfig& c) {
    std::map<std::string, std::string> kv;
    kv["events"] = c.events.string();
    kv["adoption"] = c.adoption.string();
    kv["adoption_reference_year"] = std::to_string(c.adoption_reference_year);
    kv["adoption_region"] = c.adoption_region;
    kv["graph_nodes"] = c.graph_nodes.string();
    kv["graph_edges"] = c.graph_edges.string();
    kv["pois"] = c.pois.string();
    kv["stations"] = c.stations.string();
    kv["registrations"] = c.registrations.string();
    kv["standardize"] = c.standardize ? "1" : "0";
    kv["lambda1"] = csv::format_double(c.learn.lambda1);
    kv["threshold_omega"] = csv::format_double(c.learn.threshold_omega);
    kv["notears_rho_init"] = csv::format_double(c.learn.notears.rho_init);
    kv["notears_rho_mult"] = csv::format_double(c.learn.notears.rho_mult);
    kv["notears_rho_max"] = csv::format_double(c.learn.notears.rho_max);
    kv["notears_h_tol"] = csv::format_double(c.learn.notears.h_tol);
    kv["notears_max_dual_iter"] = std::to_string(c.learn.notears.max_dual_iter);
    kv["dagma_s_schedule"] = join_doubles(c.learn.dagma.s_schedule);
    kv["dagma_mu_schedule"] = join_doubles(c.learn.dagma.mu_schedule);
    kv["inner_max_iter"] = std::to_string(c.learn.inner.max_iter);
    kv["inner_grad_tol"] = csv::format_double(c.learn.inner.grad_tol);
    kv["regression_specs"] = join_specs(c.regression_specs);
    kv["siteopt_m"] = std::to_string(c.siteopt.max_stations);
    kv["d_rival"] = csv::format_double(c.siteopt.d_rival);
    kv["d_operator"] = csv::format_double(c.siteopt.d_operator);
    kv["radius"] = csv::format_double(c.siteopt.radius);
    kv["kci_replicates"] = std::to_string(c.kci.replicates);
    kv["kci_permutations"] = std::to_string(c.kci.permutations);
    kv["walkable_radius"] = csv::format_double(c.geo.walkable_radius_m);
    kv["arterial_threshold"] = csv::format_double(c.geo.arterial_threshold_m);
    kv["poi_snap_cutoff"] = csv::format_double(c.geo.poi_snap_cutoff_m);
    kv["out_dir"] = c.out_dir.string();
    kv["seed"] = std::to_string(c.seed);
    return kv;
}

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 14695981039346656037ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

void PipelineConfig::validate() const {
    for (const auto* p : {&events, &adoption, &graph_nodes, &graph_edges, &pois, &stations,
                          &registrations}) {
        if (p->empty()) throw std::runtime_error("config: missing input path");
        if (!std::filesystem::exists(*p))
            throw std::runtime_error("config: input path does not exist: " + p->string());
    }
    if (regression_specs.empty()) throw std::runtime_error("config: no regression specs");
    learn.validate();
}

std::string PipelineConfig::content_hash() const {
    std::string blob;
    for (const auto& [k, v] : config_kv(*this)) {
        if (k == "out_dir") continue;  // output location must not perturb the run identity
        blob += k;
        blob += '=';
        blob += v;
        blob += '\n';
    }
    return hex64(fnv1a(blob.data(), blob.size()));
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }

    PipelineConfig c;
    auto get = [&kv](const char* key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        return it->second;
    };
    auto get_d = [&](const char* key, double& target) {
        if (auto v = get(key)) {
            auto d = csv::parse_double(*v);
            if (!d) throw std::runtime_error(std::string("config: bad number for ") + key);
            target = *d;
        }
    };
    auto get_i = [&](const char* key, auto& target) {
        if (auto v = get(key)) {
            auto d = csv::parse_int(*v);
            if (!d) throw std::runtime_error(std::string("config: bad integer for ") + key);
            target = static_cast<std::decay_t<decltype(target)>>(*d);
        }
    };
    if (auto v = get("events")) c.events = *v;
    if (auto v = get("adoption")) c.adoption = *v;
    get_i("adoption_reference_year", c.adoption_reference_year);
    if (auto v = get("adoption_region")) c.adoption_region = *v;
    if (auto v = get("graph_nodes")) c.graph_nodes = *v;
    if (auto v = get("graph_edges")) c.graph_edges = *v;
    if (auto v = get("pois")) c.pois = *v;
    if (auto v = get("stations")) c.stations = *v;
    if (auto v = get("registrations")) c.registrations = *v;
    if (auto v = get("standardize")) c.standardize = *v != "0";
    get_d("lambda1", c.learn.lambda1);
    get_d("threshold_omega", c.learn.threshold_omega);
    get_d("notears_rho_init", c.learn.notears.rho_init);
    get_d("notears_rho_mult", c.learn.notears.rho_mult);
    get_d("notears_rho_max", c.learn.notears.rho_max);
    get_d("notears_h_tol", c.learn.notears.h_tol);
    get_i("notears_max_dual_iter", c.learn.notears.max_dual_iter);
    if (auto v = get("dagma_s_schedule")) c.learn.dagma.s_schedule = split_doubles(*v);
    if (auto v = get("dagma_mu_schedule")) c.learn.dagma.mu_schedule = split_doubles(*v);
    get_i("inner_max_iter", c.learn.inner.max_iter);
    get_d("inner_grad_tol", c.learn.inner.grad_tol);
    if (auto v = get("regression_specs")) c.regression_specs = split_specs(*v);
    get_i("siteopt_m", c.siteopt.max_stations);
    get_d("d_rival", c.siteopt.d_rival);
    get_d("d_operator", c.siteopt.d_operator);
    get_d("radius", c.siteopt.radius);
    get_i("kci_replicates", c.kci.replicates);
    get_i("kci_permutations", c.kci.permutations);
    get_d("walkable_radius", c.geo.walkable_radius_m);
    get_d("arterial_threshold", c.geo.arterial_threshold_m);
    get_d("poi_snap_cutoff", c.geo.poi_snap_cutoff_m);
    if (auto v = get("out_dir")) c.out_dir = *v;
    get_i("seed", c.seed);
    return c;
}

void save_config(const std::filesystem::path& path, const PipelineConfig& config) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write config: " + path.string());
    out << "# evplan pipeline configuration\n";
    for (const auto& [k, v] : config_kv(config)) out << k << " = " << v << "\n";
}

std::string fnv1a_file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot hash missing file: " + path.string());
    std::uint64_t h = 14695981039346656037ull;
    char buf[8192];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
    return hex64(h);
}

namespace {

void write_adjacency_csv(const std::filesystem::path& path,
                         const structlearn::WeightedAdjacency& w) {
    csv::Table t;
    t.header.push_back("label");
    for (const auto& l : w.labels) t.header.push_back(l);
    for (std::size_t i = 0; i < w.labels.size(); ++i) {
        std::vector<std::string> row{w.labels[i]};
        for (std::size_t j = 0; j < w.labels.size(); ++j)
            row.push_back(csv::format_double(w.weights(i, j)));
        t.rows.push_back(std::move(row));
    }
    csv::write_file(path, t);
}

void write_edges_csv(const std::filesystem::path& path, const structlearn::EdgeSet& es) {
    csv::Table t;
    t.header = {"src", "dst", "weight"};
    for (const auto& e : es.edges)
        t.rows.push_back({es.labels[e.src], es.labels[e.dst], csv::format_double(e.weight)});
    csv::write_file(path, t);
}

struct StageTimer {
    RunReport& report;
    StageReport stage;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    StageTimer(RunReport& r, std::string name) : report(r) { stage.name = std::move(name); }
    void finish() {
        stage.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        report.stages.push_back(stage);
    }
};

}  // namespace

RunReport run_pipeline(const PipelineConfig& config, const std::string& until) {
    static const std::vector<std::string> kStages = {"ingest",   "features", "learn",
                                                     "evaluate", "regress",  "select"};
    if (!until.empty() && std::find(kStages.begin(), kStages.end(), until) == kStages.end())
        throw std::runtime_error("unknown stage: " + until);
    config.validate();

    RunReport report;
    report.seed = config.seed;
    report.config_hash = config.content_hash();
    report.run_dir = config.out_dir /
                     ("run_" + std::to_string(config.seed) + "_" + report.config_hash.substr(0, 8));
    std::filesystem::create_directories(report.run_dir);
    const auto& dir = report.run_dir;

    auto finalize = [&report, &dir]() {
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (!entry.is_regular_file() || entry.path().filename() == "report.json") continue;
            report.output_hashes[entry.path().filename().string()] = fnv1a_file_hash(entry.path());
        }
        write_run_report(dir / "report.json", report);
    };

    auto run_stage = [&](const char* name, auto&& fn) {
        StageTimer timer(report, name);
        try {
            fn(timer.stage);
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("stage ") + name + ": " + e.what());
        }
        timer.finish();
    };

    // --- ingest -------------------------------------------------------------
    ingest::FeatureTable table;
    std::map<std::string, double> consumption;
    std::vector<std::string> locations;
    run_stage("ingest", [&](StageReport& stage) {
        auto parsed = ingest::parse_events(config.events);
        stage.notes["events"] = std::to_string(parsed.events.size());
        stage.notes["rejects"] = std::to_string(parsed.rejects.size());
        stage.notes["duplicates"] = std::to_string(parsed.duplicate_count);
        {
            csv::Table rejects;
            rejects.header = {"line", "reason"};
            for (const auto& r : parsed.rejects)
                rejects.rows.push_back({std::to_string(r.line), r.reason});
            csv::write_file(dir / "rejects.csv", rejects);
        }
        auto adoption = ingest::parse_adoption(config.adoption, config.adoption_reference_year,
                                               config.adoption_region);
        auto per_location = ingest::consumption_by_location(parsed.events, adoption);
        csv::Table ct;
        ct.header = {"location_id", "consumption_level", "n_stations"};
        for (const auto& lc : per_location) {
            consumption[lc.location_id] = lc.total;
            locations.push_back(lc.location_id);
            ct.rows.push_back({lc.location_id, csv::format_double(lc.total),
                               std::to_string(lc.station_daily.size())});
        }
        csv::write_file(dir / "consumption.csv", ct);
    });
    if (until == "ingest") {
        finalize();
        return report;
    }

    // --- features -----------------------------------------------------------
    geo::StreetGraph graph;
    geo::NodeFeatures node_features;
    ingest::FeatureTable table_fit;  // standardized unless raw mode requested
    run_stage("features", [&](StageReport& stage) {
        graph = geo::load_graph(config.graph_nodes, config.graph_edges);
        auto pois = geo::load_pois(config.pois);
        auto sites = geo::load_stations(config.stations, graph);
        auto regs = geo::load_registrations(config.registrations);
        node_features = geo::compute_node_features(graph, pois, sites, regs, config.geo);
        geo::write_node_features(dir / "node_features.csv", node_features);
        stage.notes["graph_nodes"] = std::to_string(graph.n_nodes());
        stage.notes["components"] = std::to_string(graph.n_components);

        std::map<std::string, std::map<std::string, double>> loc_features;
        for (const auto& loc : locations) {
            auto idx = graph.try_index_of(loc);
            if (!idx)
                throw std::runtime_error("location " + loc + " is not a graph node id");
            for (std::size_t j = 0; j < node_features.columns.size(); ++j)
                loc_features[loc][node_features.columns[j]] = node_features.values(*idx, j);
        }
        table = ingest::build_feature_table(locations, consumption, loc_features);

        // Constant columns cannot be standardized; drop them here and record it.
        std::vector<std::size_t> keep;
        std::string dropped;
        for (std::size_t j = 0; j < table.columns.size(); ++j) {
            auto col = table.values.column(j);
            const bool constant = std::all_of(col.begin(), col.end(),
                                              [&col](double v) { return v == col.front(); });
            if (constant && table.columns[j] != "consumption_level") {
                if (!dropped.empty()) dropped += ",";
                dropped += table.columns[j];
            } else {
                keep.push_back(j);
            }
        }
        if (!dropped.empty()) {
            stage.notes["dropped_constant_columns"] = dropped;
            ingest::FeatureTable pruned;
            pruned.row_labels = table.row_labels;
            pruned.values = Matrix(table.values.rows(), keep.size());
            for (std::size_t k = 0; k < keep.size(); ++k) {
                pruned.columns.push_back(table.columns[keep[k]]);
                pruned.values.set_column(k, table.values.column(keep[k]));
            }
            table = std::move(pruned);
        }
        ingest::write_feature_table(dir / "feature_table.csv", table);
        if (config.standardize) {
            table_fit = ingest::standardize(table);
        } else {
            stage.notes["warning"] = "structure learning on raw (unstandardized) features";
            table_fit = table;
        }
        ingest::write_feature_table(dir / "feature_table_fit.csv", table_fit);
    });
    if (until == "features") {
        finalize();
        return report;
    }

    // --- learn --------------------------------------------------------------
    structlearn::FitResult notears_fit, dagma_fit;
    structlearn::EdgeSet notears_edges, dagma_edges;
    run_stage("learn", [&](StageReport& stage) {
        notears_fit = structlearn::fit_notears(table_fit.values, table_fit.columns, config.learn);
        dagma_fit = structlearn::fit_dagma(table_fit.values, table_fit.columns, config.learn);
        report.notears_converged = notears_fit.converged;
        report.dagma_converged = dagma_fit.converged;
        stage.notes["notears_h"] = csv::format_double(notears_fit.final_h);
        stage.notes["dagma_h"] = csv::format_double(dagma_fit.final_h);
        write_adjacency_csv(dir / "w_notears.csv", notears_fit.w);
        write_adjacency_csv(dir / "w_dagma.csv", dagma_fit.w);
        notears_edges = structlearn::threshold_edges(notears_fit.w, config.learn.threshold_omega);
        dagma_edges = structlearn::threshold_edges(dagma_fit.w, config.learn.threshold_omega);
        write_edges_csv(dir / "edges_notears.csv", notears_edges);
        write_edges_csv(dir / "edges_dagma.csv", dagma_edges);
    });
    if (until == "learn") {
        finalize();
        return report;
    }

    // --- evaluate -----------------------------------------------------------
    run_stage("evaluate", [&](StageReport& stage) {
        const auto score = evalsuite::graph_score(notears_edges, dagma_edges);
        csv::Table metrics;
        metrics.header = {"metric", "value"};
        metrics.rows.push_back({"algorithms_shd", std::to_string(score.shd)});
        metrics.rows.push_back({"algorithms_f1_skeleton", csv::format_double(score.f1_skeleton)});
        metrics.rows.push_back({"notears_edges", std::to_string(notears_edges.edges.size())});
        metrics.rows.push_back({"dagma_edges", std::to_string(dagma_edges.edges.size())});
        csv::write_file(dir / "metrics.csv", metrics);

        // CI hypotheses: consumption vs. each non-conditioning variable,
        // given amenities, EV count, and high-traffic proximity.
        const std::vector<std::string> conditioning = {"amenities", "ev_count", "high_traffic"};
        csv::Table ci;
        ci.header = {"hypothesis", "p_mean", "p_sd", "replicates"};
        std::vector<std::size_t> cond_cols;
        bool have_conditioning = true;
        for (const auto& c : conditioning) {
            if (std::count(table_fit.columns.begin(), table_fit.columns.end(), c) == 0) {
                have_conditioning = false;
                break;
            }
            cond_cols.push_back(table_fit.column_index(c));
        }
        if (have_conditioning) {
            const std::size_t target = table_fit.column_index("consumption_level");
            for (std::size_t j = 0; j < table_fit.columns.size(); ++j) {
                const auto& name = table_fit.columns[j];
                if (j == target ||
                    std::count(conditioning.begin(), conditioning.end(), name))
                    continue;
                evalsuite::KciConfig kc;
                kc.permutations = config.kci.permutations;
                kc.seed = config.seed;
                auto r = evalsuite::kci_repeated(table_fit.values, target, j, cond_cols,
                                                 config.kci.replicates, kc, name);
                ci.rows.push_back({name, csv::format_double(r.p_mean),
                                   csv::format_double(r.p_sd), std::to_string(r.replicates)});
            }
        } else {
            stage.notes["warning"] = "conditioning variables absent; CI tests skipped";
        }
        csv::write_file(dir / "ci_results.csv", ci);
    });
    if (until == "evaluate") {
        finalize();
        return report;
    }

    // --- regress ------------------------------------------------------------
    std::map<std::string, double> coefficients;
    run_stage("regress", [&](StageReport& stage) {
        const auto& baseline = config.regression_specs.front();
        auto draws = bayes::fit_posterior(table_fit, baseline, config.seed);
        coefficients = bayes::posterior_mean(draws);
        csv::Table summary;
        summary.header = {"parameter", "mean", "q05", "q95"};
        for (const auto& s : draws.summary)
            summary.rows.push_back({s.name, csv::format_double(s.mean), csv::format_double(s.q05),
                                    csv::format_double(s.q95)});
        csv::write_file(dir / "posterior_summary.csv", summary);

        csv::Table comparison;
        comparison.header = {"spec", "elpd", "se", "rank"};
        if (config.regression_specs.size() >= 2) {
            auto mc = bayes::compare_models(table_fit, config.regression_specs);
            for (const auto& e : mc.ranked)
                comparison.rows.push_back({e.spec.name(), csv::format_double(e.elpd),
                                           csv::format_double(e.se), std::to_string(e.rank)});
        } else {
            auto loo = bayes::loo_elpd(table_fit, baseline);
            comparison.rows.push_back(
                {baseline.name(), csv::format_double(loo.elpd), csv::format_double(loo.se), "1"});
        }
        csv::write_file(dir / "model_comparison.csv", comparison);
        stage.notes["draws"] = std::to_string(draws.draws.rows());
    });
    if (until == "regress") {
        finalize();
        return report;
    }

    // --- select -------------------------------------------------------------
    run_stage("select", [&](StageReport& stage) {
        // Transform node features with the fitted table's parameters.
        std::vector<std::string> cols;
        std::vector<double> means, sds;
        if (table_fit.standardized) {
            for (std::size_t j = 0; j < table_fit.columns.size(); ++j) {
                if (table_fit.columns[j] == "consumption_level") continue;
                cols.push_back(table_fit.columns[j]);
                means.push_back(table_fit.means[j]);
                sds.push_back(table_fit.sds[j]);
            }
        }
        auto nf = table_fit.standardized
                      ? siteopt::standardize_node_features(node_features, cols, means, sds)
                      : node_features;
        auto scores = siteopt::node_scores(nf, coefficients);
        siteopt::write_scores_csv(dir / "scores.csv", graph, scores);

        auto sites = geo::load_stations(config.stations, graph);
        auto candidates = siteopt::candidate_set(graph, sites, config.siteopt.d_rival,
                                                 config.siteopt.d_operator);
        auto conflicts = siteopt::build_conflicts(graph, candidates);
        auto placement = siteopt::select_sites(candidates, scores, conflicts,
                                               config.siteopt.max_stations);
        report.placement_optimal = placement.optimal;
        if (!siteopt::check_placement(placement, candidates, conflicts))
            throw std::runtime_error("placement failed the feasibility check");

        std::map<geo::NodeIndex, double> demand;
        for (const auto& [loc, value] : consumption)
            if (auto idx = graph.try_index_of(loc)) demand[*idx] += value;
        siteopt::PlacementReport pr;
        pr.d_rival = config.siteopt.d_rival;
        pr.d_operator = config.siteopt.d_operator;
        if (!demand.empty() && !placement.selected.empty()) {
            pr.demand_satisfaction = siteopt::demand_satisfaction_rate(placement, demand, graph,
                                                                       config.siteopt.radius);
            pr.coverage_efficiency =
                siteopt::coverage_efficiency(placement, demand, graph, config.siteopt.radius);
        }
        siteopt::write_placement_geojson(dir / "placement.geojson", graph, placement, scores);
        siteopt::write_placement_report(dir / "placement_report.json", placement, pr);
        stage.notes["candidates"] = std::to_string(candidates.nodes.size());
        stage.notes["selected"] = std::to_string(placement.selected.size());
        stage.notes["objective"] = csv::format_double(placement.objective);
    });

    finalize();
    return report;
}

void write_run_report(const std::filesystem::path& path, const RunReport& report) {
    nlohmann::ordered_json j;
    j["schema"] = report.schema;
    j["run_dir"] = report.run_dir.string();
    j["seed"] = report.seed;
    j["config_hash"] = report.config_hash;
    j["threads"] = report.threads;
    j["notears_converged"] = report.notears_converged;
    j["dagma_converged"] = report.dagma_converged;
    j["placement_optimal"] = report.placement_optimal;
    for (const auto& s : report.stages) {
        nlohmann::ordered_json stage;
        stage["name"] = s.name;
        stage["seconds"] = s.seconds;
        for (const auto& [k, v] : s.notes) stage["notes"][k] = v;
        j["stages"].push_back(std::move(stage));
    }
    for (const auto& [file, hash] : report.output_hashes) j["output_hashes"][file] = hash;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace evplan::pipeline
