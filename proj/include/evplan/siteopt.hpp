#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "evplan/geo.hpp"

namespace evplan::siteopt {

using geo::NodeIndex;

struct NodeScore {
    double total = 0.0;
    std::map<std::string, double> contributions;  // per feature
};

// s_v = sum_f b_f * f_v over the coefficient features; the intercept is
// constant across nodes and is excluded. Features must already be transformed
// with the standardization parameters used when fitting.
std::map<NodeIndex, NodeScore> node_scores(const geo::NodeFeatures& features,
                                           const std::map<std::string, double>& coefficients);

// Applies (f - mean) / sd with the fitted table's parameters to the feature
// columns named in `columns`.
geo::NodeFeatures standardize_node_features(const geo::NodeFeatures& features,
                                            const std::vector<std::string>& columns,
                                            const std::vector<double>& means,
                                            const std::vector<double>& sds);

struct CandidateSet {
    std::vector<NodeIndex> nodes;  // sorted ascending
    double d_rival = 0.0;
    double d_operator = 0.0;
    struct Exclusion {
        NodeIndex node = 0;
        std::string reason;  // "rival" or "operator"
        std::string site_id;
    };
    std::vector<Exclusion> excluded;
};

CandidateSet candidate_set(const geo::StreetGraph& g, const std::vector<geo::StationSite>& sites,
                           double d_rival, double d_operator);

// Symmetric conflict relation over the candidate set: a_uv = 1 iff the
// network distance between u and v is <= d_operator. Self-conflicts are
// never consulted.
class ConflictMatrix {
public:
    ConflictMatrix() = default;
    ConflictMatrix(std::size_t n_candidates) : n_(n_candidates), bits_(n_candidates * n_candidates, 0) {}

    bool conflict(std::size_t u, std::size_t v) const { return bits_[u * n_ + v] != 0; }
    void set_conflict(std::size_t u, std::size_t v) {
        bits_[u * n_ + v] = 1;
        bits_[v * n_ + u] = 1;
    }
    std::size_t size() const { return n_; }

private:
    std::size_t n_ = 0;
    std::vector<std::uint8_t> bits_;
};

ConflictMatrix build_conflicts(const geo::StreetGraph& g, const CandidateSet& candidates);

struct SolverStats {
    std::uint64_t nodes_explored = 0;
    double seconds = 0.0;
};

struct Placement {
    std::vector<NodeIndex> selected;  // sorted ascending
    double objective = 0.0;
    std::size_t max_stations = 0;     // M
    bool optimal = false;
    SolverStats stats;
};

struct SolverBudget {
    std::uint64_t max_nodes = 10'000'000;
    double max_seconds = 60.0;
};

// Exact maximizer of sum(x_v * s_v) subject to |selected| <= M and no
// conflicting pair, by branch and bound over candidates in descending score
// order with a greedy top-k upper bound.
Placement select_sites(const CandidateSet& candidates,
                       const std::map<NodeIndex, NodeScore>& scores,
                       const ConflictMatrix& conflicts, std::size_t max_stations,
                       const SolverBudget& budget = {});

// Exhaustive oracle for |C| <= 25.
Placement brute_force_select(const CandidateSet& candidates,
                             const std::map<NodeIndex, NodeScore>& scores,
                             const ConflictMatrix& conflicts, std::size_t max_stations);

// Standalone feasibility certificate: cardinality, pairwise separation, and
// candidate membership.
bool check_placement(const Placement& placement, const CandidateSet& candidates,
                     const ConflictMatrix& conflicts);

double demand_satisfaction_rate(const Placement& placement,
                                const std::map<NodeIndex, double>& demand,
                                const geo::StreetGraph& g, double radius_m = 400.0);

double coverage_efficiency(const Placement& placement, const std::map<NodeIndex, double>& demand,
                           const geo::StreetGraph& g, double radius_m = 400.0);

void write_scores_csv(const std::filesystem::path& path, const geo::StreetGraph& g,
                      const std::map<NodeIndex, NodeScore>& scores);

struct PlacementReport {
    double d_rival = 0.0;
    double d_operator = 0.0;
    double demand_satisfaction = 0.0;
    double coverage_efficiency = 0.0;
};

void write_placement_geojson(const std::filesystem::path& path, const geo::StreetGraph& g,
                             const Placement& placement,
                             const std::map<NodeIndex, NodeScore>& scores);
void write_placement_report(const std::filesystem::path& path, const Placement& placement,
                            const PlacementReport& report);

}  // namespace evplan::siteopt
