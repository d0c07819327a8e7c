#include "evplan/siteopt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "evplan/csv.hpp"

namespace evplan::siteopt {

std::map<NodeIndex, NodeScore> node_scores(const geo::NodeFeatures& features,
                                           const std::map<std::string, double>& coefficients) {
    std::vector<std::pair<std::size_t, std::pair<std::string, double>>> cols;
    for (const auto& [name, b] : coefficients) {
        if (name == "alpha" || name == "sigma") continue;
        cols.push_back({features.column_index(name), {name, b}});
    }
    std::map<NodeIndex, NodeScore> scores;
    for (std::size_t v = 0; v < features.node_ids.size(); ++v) {
        NodeScore s;
        for (const auto& [col, nb] : cols) {
            const double contribution = nb.second * features.values(v, col);
            s.contributions[nb.first] = contribution;
            s.total += contribution;
        }
        scores[static_cast<NodeIndex>(v)] = std::move(s);
    }
    return scores;
}

geo::NodeFeatures standardize_node_features(const geo::NodeFeatures& features,
                                            const std::vector<std::string>& columns,
                                            const std::vector<double>& means,
                                            const std::vector<double>& sds) {
    if (columns.size() != means.size() || columns.size() != sds.size())
        throw std::runtime_error("standardize_node_features: parameter sizes disagree");
    geo::NodeFeatures out = features;
    for (std::size_t k = 0; k < columns.size(); ++k) {
        if (!std::count(features.columns.begin(), features.columns.end(), columns[k])) continue;
        const std::size_t j = features.column_index(columns[k]);
        if (sds[k] == 0.0) throw std::runtime_error("zero SD for feature " + columns[k]);
        for (std::size_t i = 0; i < out.values.rows(); ++i)
            out.values(i, j) = (features.values(i, j) - means[k]) / sds[k];
    }
    return out;
}

CandidateSet candidate_set(const geo::StreetGraph& g, const std::vector<geo::StationSite>& sites,
                           double d_rival, double d_operator) {
    if (d_rival <= 0.0 || d_operator <= 0.0)
        throw std::runtime_error("candidate_set: separation distances must be positive");
    CandidateSet c;
    c.d_rival = d_rival;
    c.d_operator = d_operator;

    std::vector<NodeIndex> rivals, operators;
    for (const auto& s : sites) (s.rival ? rivals : operators).push_back(s.node);
    std::vector<double> rival_dist(g.n_nodes(), geo::kUnreachable);
    std::vector<double> operator_dist(g.n_nodes(), geo::kUnreachable);
    if (!rivals.empty()) rival_dist = geo::multi_source_dijkstra(g, rivals);
    if (!operators.empty()) operator_dist = geo::multi_source_dijkstra(g, operators);

    auto nearest_site_id = [&](NodeIndex v, bool rival) {
        double best = geo::kUnreachable;
        std::string id;
        for (const auto& s : sites) {
            if (s.rival != rival) continue;
            auto d = geo::network_distance(g, v, s.node);
            if (d && *d < best) {
                best = *d;
                id = s.id;
            }
        }
        return id;
    };

    for (std::size_t v = 0; v < g.n_nodes(); ++v) {
        const auto node = static_cast<NodeIndex>(v);
        if (rival_dist[v] <= d_rival)
            c.excluded.push_back({node, "rival", nearest_site_id(node, true)});
        else if (operator_dist[v] <= d_operator)
            c.excluded.push_back({node, "operator", nearest_site_id(node, false)});
        else
            c.nodes.push_back(node);
    }
    return c;
}

ConflictMatrix build_conflicts(const geo::StreetGraph& g, const CandidateSet& candidates) {
    const std::size_t n = candidates.nodes.size();
    ConflictMatrix m(n);
    std::vector<std::size_t> candidate_pos(g.n_nodes(), SIZE_MAX);
    for (std::size_t i = 0; i < n; ++i) candidate_pos[candidates.nodes[i]] = i;
    for (std::size_t i = 0; i < n; ++i) {
        const auto dist = geo::dijkstra(g, candidates.nodes[i], candidates.d_operator);
        for (std::size_t v = 0; v < g.n_nodes(); ++v) {
            const std::size_t j = candidate_pos[v];
            if (j == SIZE_MAX || j <= i) continue;
            if (dist[v] <= candidates.d_operator) m.set_conflict(i, j);
        }
    }
    return m;
}

namespace {

struct OrderedCandidate {
    std::size_t pos = 0;  // position in CandidateSet::nodes / ConflictMatrix
    NodeIndex node = 0;
    double score = 0.0;
};

struct BnbState {
    const std::vector<OrderedCandidate>* cands = nullptr;
    const ConflictMatrix* conflicts = nullptr;
    std::size_t max_stations = 0;
    std::uint64_t max_nodes = 0;
    std::chrono::steady_clock::time_point deadline;
    std::uint64_t explored = 0;
    bool budget_hit = false;

    std::vector<std::size_t> chosen;       // positions into *cands
    std::vector<int> blocked;              // conflict counts per candidate order index
    double best_objective = 0.0;
    std::vector<NodeIndex> best_selected;

    void consider_incumbent(double objective, const std::vector<std::size_t>& chosen_idx) {
        std::vector<NodeIndex> sel;
        sel.reserve(chosen_idx.size());
        for (std::size_t k : chosen_idx) sel.push_back((*cands)[k].node);
        std::sort(sel.begin(), sel.end());
        if (objective > best_objective + 1e-12 ||
            (std::fabs(objective - best_objective) <= 1e-12 && sel < best_selected)) {
            best_objective = objective;
            best_selected = std::move(sel);
        }
    }

    void search(std::size_t idx, double current) {
        if (++explored > max_nodes || std::chrono::steady_clock::now() > deadline) {
            budget_hit = true;
            return;
        }
        consider_incumbent(current, chosen);
        if (chosen.size() >= max_stations) return;

        // Greedy bound: best remaining non-blocked scores, one per open slot.
        double bound = current;
        std::size_t slots = max_stations - chosen.size();
        for (std::size_t k = idx; k < cands->size() && slots > 0; ++k) {
            if (blocked[k] > 0) continue;
            bound += (*cands)[k].score;
            --slots;
        }
        if (bound <= best_objective + 1e-12) return;

        for (std::size_t k = idx; k < cands->size(); ++k) {
            if (budget_hit) return;
            if (blocked[k] > 0) continue;
            chosen.push_back(k);
            for (std::size_t j = k + 1; j < cands->size(); ++j)
                if (conflicts->conflict((*cands)[k].pos, (*cands)[j].pos)) ++blocked[j];
            search(k + 1, current + (*cands)[k].score);
            for (std::size_t j = k + 1; j < cands->size(); ++j)
                if (conflicts->conflict((*cands)[k].pos, (*cands)[j].pos)) --blocked[j];
            chosen.pop_back();
        }
    }
};

std::vector<OrderedCandidate> positive_candidates(const CandidateSet& candidates,
                                                  const std::map<NodeIndex, NodeScore>& scores) {
    std::vector<OrderedCandidate> out;
    for (std::size_t pos = 0; pos < candidates.nodes.size(); ++pos) {
        const NodeIndex node = candidates.nodes[pos];
        auto it = scores.find(node);
        if (it == scores.end())
            throw std::runtime_error("missing score for candidate node " + std::to_string(node));
        // A node with s_v <= 0 can never improve the objective: selecting
        // fewer than M stations is always feasible.
        if (it->second.total > 0.0) out.push_back({pos, node, it->second.total});
    }
    std::sort(out.begin(), out.end(), [](const OrderedCandidate& a, const OrderedCandidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.node < b.node;
    });
    return out;
}

}  // namespace

Placement select_sites(const CandidateSet& candidates,
                       const std::map<NodeIndex, NodeScore>& scores,
                       const ConflictMatrix& conflicts, std::size_t max_stations,
                       const SolverBudget& budget) {
    if (max_stations < 1) throw std::runtime_error("select_sites: M must be >= 1");
    const auto start = std::chrono::steady_clock::now();
    auto cands = positive_candidates(candidates, scores);

    BnbState state;
    state.cands = &cands;
    state.conflicts = &conflicts;
    state.max_stations = max_stations;
    state.max_nodes = budget.max_nodes;
    state.deadline = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                 std::chrono::duration<double>(budget.max_seconds));
    state.blocked.assign(cands.size(), 0);
    state.search(0, 0.0);

    Placement p;
    p.selected = std::move(state.best_selected);
    p.objective = state.best_objective;
    p.max_stations = max_stations;
    p.optimal = !state.budget_hit;
    p.stats.nodes_explored = state.explored;
    p.stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return p;
}

Placement brute_force_select(const CandidateSet& candidates,
                             const std::map<NodeIndex, NodeScore>& scores,
                             const ConflictMatrix& conflicts, std::size_t max_stations) {
    if (candidates.nodes.size() > 25)
        throw std::runtime_error("brute_force_select: candidate set too large");
    const std::size_t n = candidates.nodes.size();
    Placement best;
    best.max_stations = max_stations;
    best.optimal = true;

    std::vector<std::size_t> subset;
    std::uint64_t explored = 0;
    auto recurse = [&](auto&& self, std::size_t next) -> void {
        ++explored;
        double objective = 0.0;
        for (std::size_t i : subset) objective += scores.at(candidates.nodes[i]).total;
        std::vector<NodeIndex> sel;
        for (std::size_t i : subset) sel.push_back(candidates.nodes[i]);
        std::sort(sel.begin(), sel.end());
        if (objective > best.objective + 1e-12 ||
            (std::fabs(objective - best.objective) <= 1e-12 && !best.selected.empty() &&
             sel < best.selected)) {
            best.objective = objective;
            best.selected = sel;
        }
        if (subset.size() >= max_stations) return;
        for (std::size_t i = next; i < n; ++i) {
            bool ok = true;
            for (std::size_t j : subset)
                if (conflicts.conflict(i, j)) { ok = false; break; }
            if (!ok) continue;
            subset.push_back(i);
            self(self, i + 1);
            subset.pop_back();
        }
    };
    recurse(recurse, 0);
    best.stats.nodes_explored = explored;
    return best;
}

bool check_placement(const Placement& placement, const CandidateSet& candidates,
                     const ConflictMatrix& conflicts) {
    if (placement.selected.size() > placement.max_stations) return false;
    std::vector<std::size_t> positions;
    for (NodeIndex v : placement.selected) {
        auto it = std::lower_bound(candidates.nodes.begin(), candidates.nodes.end(), v);
        if (it == candidates.nodes.end() || *it != v) return false;
        positions.push_back(static_cast<std::size_t>(it - candidates.nodes.begin()));
    }
    for (std::size_t a = 0; a < positions.size(); ++a)
        for (std::size_t b = a + 1; b < positions.size(); ++b)
            if (conflicts.conflict(positions[a], positions[b])) return false;
    return true;
}

namespace {
double covered_demand(const Placement& placement, const std::map<NodeIndex, double>& demand,
                      const geo::StreetGraph& g, double radius_m) {
    if (placement.selected.empty()) return 0.0;
    const auto dist = geo::multi_source_dijkstra(g, placement.selected);
    double covered = 0.0;
    for (const auto& [node, value] : demand)
        if (dist[node] <= radius_m) covered += value;
    return covered;
}
}  // namespace

double demand_satisfaction_rate(const Placement& placement,
                                const std::map<NodeIndex, double>& demand,
                                const geo::StreetGraph& g, double radius_m) {
    double total = 0.0;
    for (const auto& [_, v] : demand) total += v;
    if (total <= 0.0) throw std::runtime_error("demand_satisfaction_rate: zero total demand");
    return covered_demand(placement, demand, g, radius_m) / total;
}

double coverage_efficiency(const Placement& placement, const std::map<NodeIndex, double>& demand,
                           const geo::StreetGraph& g, double radius_m) {
    if (placement.selected.empty())
        throw std::runtime_error("coverage_efficiency: empty placement");
    return covered_demand(placement, demand, g, radius_m) /
           static_cast<double>(placement.selected.size());
}

void write_scores_csv(const std::filesystem::path& path, const geo::StreetGraph& g,
                      const std::map<NodeIndex, NodeScore>& scores) {
    csv::Table t;
    t.header = {"node_id", "s_v"};
    std::vector<std::string> features;
    if (!scores.empty())
        for (const auto& [f, _] : scores.begin()->second.contributions) features.push_back(f);
    for (const auto& f : features) t.header.push_back("contrib_" + f);
    for (const auto& [node, s] : scores) {
        std::vector<std::string> row{g.node_ids[node], csv::format_double(s.total)};
        for (const auto& f : features) row.push_back(csv::format_double(s.contributions.at(f)));
        t.rows.push_back(std::move(row));
    }
    csv::write_file(path, t);
}

void write_placement_geojson(const std::filesystem::path& path, const geo::StreetGraph& g,
                             const Placement& placement,
                             const std::map<NodeIndex, NodeScore>& scores) {
    nlohmann::ordered_json fc;
    fc["type"] = "FeatureCollection";
    fc["features"] = nlohmann::ordered_json::array();

    std::vector<NodeIndex> by_rank = placement.selected;
    std::sort(by_rank.begin(), by_rank.end(), [&scores](NodeIndex a, NodeIndex b) {
        const double sa = scores.at(a).total, sb = scores.at(b).total;
        if (sa != sb) return sa > sb;
        return a < b;
    });
    for (std::size_t r = 0; r < by_rank.size(); ++r) {
        const NodeIndex v = by_rank[r];
        nlohmann::ordered_json f;
        f["type"] = "Feature";
        f["geometry"] = {{"type", "Point"}, {"coordinates", {g.lon[v], g.lat[v]}}};
        f["properties"]["node_id"] = g.node_ids[v];
        f["properties"]["score"] = scores.at(v).total;
        f["properties"]["rank"] = r + 1;
        for (const auto& [name, contrib] : scores.at(v).contributions)
            f["properties"]["contributions"][name] = contrib;
        fc["features"].push_back(std::move(f));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << fc.dump(2) << "\n";
}

void write_placement_report(const std::filesystem::path& path, const Placement& placement,
                            const PlacementReport& report) {
    nlohmann::ordered_json j;
    j["objective"] = placement.objective;
    j["M"] = placement.max_stations;
    j["selected"] = placement.selected.size();
    j["d_rival"] = report.d_rival;
    j["d_operator"] = report.d_operator;
    j["optimal"] = placement.optimal;
    j["demand_satisfaction_rate"] = report.demand_satisfaction;
    j["coverage_efficiency"] = report.coverage_efficiency;
    j["solver_nodes_explored"] = placement.stats.nodes_explored;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace evplan::siteopt
