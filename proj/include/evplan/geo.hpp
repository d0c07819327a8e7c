#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "evplan/matrix.hpp"

namespace evplan::geo {

using NodeIndex = std::uint32_t;

constexpr double kEarthRadiusM = 6'371'000.0;
constexpr double kUnreachable = std::numeric_limits<double>::infinity();

double haversine_m(double lat1, double lon1, double lat2, double lon2);

struct StreetGraph {
    struct Edge {
        NodeIndex u = 0, v = 0;
        double length_m = 0.0;
        bool arterial = false;
    };

    std::vector<std::string> node_ids;
    std::vector<double> lat, lon;
    std::vector<std::string> zip;
    std::vector<Edge> edges;

    // adjacency: per node, (neighbor, edge length)
    std::vector<std::vector<std::pair<NodeIndex, double>>> adj;
    std::vector<std::uint32_t> component;  // connected component id per node
    std::uint32_t n_components = 0;

    std::size_t n_nodes() const { return node_ids.size(); }
    NodeIndex index_of(const std::string& id) const;
    std::optional<NodeIndex> try_index_of(const std::string& id) const;

    // Validates endpoints, lengths, and the length >= 0.99 * great-circle
    // sanity bound; builds adjacency and component labels.
    static StreetGraph build(std::vector<std::string> node_ids, std::vector<double> lat,
                             std::vector<double> lon, std::vector<std::string> zip,
                             std::vector<Edge> edges);

private:
    std::unordered_map<std::string, NodeIndex> index_;
};

StreetGraph load_graph(const std::filesystem::path& nodes_csv,
                       const std::filesystem::path& edges_csv);
void write_graph(const std::filesystem::path& nodes_csv, const std::filesystem::path& edges_csv,
                 const StreetGraph& g);

struct PointOfInterest {
    std::string id;
    std::string category;  // from kPoiCategories
    double lat = 0.0, lon = 0.0;
};

inline constexpr const char* kPoiCategories[] = {
    "amenities",  "shopping_and_food", "transport_hub", "entertainment",
    "medical",    "accommodation",     "public_transport_station", "other",
};
bool is_poi_category(const std::string& s);

std::vector<PointOfInterest> load_pois(const std::filesystem::path& path);
void write_pois(const std::filesystem::path& path, const std::vector<PointOfInterest>& pois);

struct StationSite {
    std::string id;
    NodeIndex node = 0;
    bool rival = false;
    int n_chargers = 1;
};

// Stations CSV carries lat/lon; each site is snapped to its nearest node.
std::vector<StationSite> load_stations(const std::filesystem::path& path, const StreetGraph& g);
void write_stations(const std::filesystem::path& path, const std::vector<StationSite>& sites,
                    const StreetGraph& g);

std::map<std::string, double> load_registrations(const std::filesystem::path& path);
void write_registrations(const std::filesystem::path& path,
                         const std::map<std::string, double>& regs);

// Single-source shortest path lengths; kUnreachable outside the component.
// With a finite cutoff the search stops expanding past it.
std::vector<double> dijkstra(const StreetGraph& g, NodeIndex src,
                             double cutoff = kUnreachable);
std::vector<double> multi_source_dijkstra(const StreetGraph& g,
                                          const std::vector<NodeIndex>& sources);

std::optional<double> network_distance(const StreetGraph& g, NodeIndex u, NodeIndex v);

// (m-1) / sum of distances within the node's component (size m); 0 if isolated.
double closeness_centrality(const StreetGraph& g, NodeIndex v);
std::vector<double> closeness_centrality_all(const StreetGraph& g);

// 1 iff the straight-line distance to the nearest arterial edge segment is
// <= threshold_m. Returns all zeros (and sets *warned) when no edge is arterial.
std::vector<int> high_traffic_flags(const StreetGraph& g, double threshold_m = 70.0,
                                    bool* warned = nullptr);

std::vector<NodeIndex> walkable_ball(const StreetGraph& g, NodeIndex v, double radius_m = 400.0);

struct SnappedPoi {
    std::size_t poi = 0;       // index into the input list
    NodeIndex node = 0;
    double snap_distance_m = 0.0;
};
struct SnapResult {
    std::vector<SnappedPoi> snapped;
    std::size_t excluded = 0;  // farther than the cutoff from every node
};
SnapResult snap_pois(const StreetGraph& g, const std::vector<PointOfInterest>& pois,
                     double cutoff_m = 250.0);

std::map<std::string, double> poi_counts(const StreetGraph& g, NodeIndex v,
                                         const std::vector<PointOfInterest>& pois,
                                         const SnapResult& snapped, double radius_m = 400.0);

double ev_density(const StreetGraph& g, NodeIndex v,
                  const std::map<std::string, double>& registrations);

std::optional<double> nearest_station_distance(const StreetGraph& g, NodeIndex v,
                                               const std::vector<StationSite>& sites,
                                               bool rivals_only);

struct NodeFeatures {
    std::vector<std::string> node_ids;
    std::vector<std::string> columns;
    Matrix values;  // n_nodes x n_features

    std::size_t column_index(const std::string& name) const;
    double at(NodeIndex v, const std::string& name) const;
};

struct GeoConfig {
    double walkable_radius_m = 400.0;
    double arterial_threshold_m = 70.0;
    double poi_snap_cutoff_m = 250.0;
    // Sentinel written when no rival exists or none is reachable.
    double unreachable_sentinel = -1.0;
};

// Full Table-II style feature block for every node. Columns, in fixed order:
// amenities, shopping_and_food, transport, entertainment, medical,
// accommodation_share, public_transport, network_centrality, high_traffic,
// ev_count, n_chargers, nearest_rival_distance.
NodeFeatures compute_node_features(const StreetGraph& g,
                                   const std::vector<PointOfInterest>& pois,
                                   const std::vector<StationSite>& sites,
                                   const std::map<std::string, double>& registrations,
                                   const GeoConfig& config = {});

void write_node_features(const std::filesystem::path& path, const NodeFeatures& nf);
NodeFeatures read_node_features(const std::filesystem::path& path);

}  // namespace evplan::geo
