#include "evplan/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <stdexcept>

#include "evplan/csv.hpp"

namespace evplan::geo {

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;
}

double haversine_m(double lat1, double lon1, double lat2, double lon2) {
    const double phi1 = lat1 * kDeg, phi2 = lat2 * kDeg;
    const double dphi = (lat2 - lat1) * kDeg, dlam = (lon2 - lon1) * kDeg;
    const double a = std::sin(dphi / 2) * std::sin(dphi / 2) +
                     std::cos(phi1) * std::cos(phi2) * std::sin(dlam / 2) * std::sin(dlam / 2);
    return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

NodeIndex StreetGraph::index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw std::runtime_error("unknown graph node: " + id);
    return it->second;
}

std::optional<NodeIndex> StreetGraph::try_index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

StreetGraph StreetGraph::build(std::vector<std::string> node_ids, std::vector<double> lat,
                               std::vector<double> lon, std::vector<std::string> zip,
                               std::vector<Edge> edges) {
    StreetGraph g;
    g.node_ids = std::move(node_ids);
    g.lat = std::move(lat);
    g.lon = std::move(lon);
    g.zip = std::move(zip);
    g.edges = std::move(edges);
    const std::size_t n = g.node_ids.size();
    if (g.lat.size() != n || g.lon.size() != n || g.zip.size() != n)
        throw std::runtime_error("graph: node attribute sizes disagree");
    for (std::size_t i = 0; i < n; ++i)
        if (!g.index_.emplace(g.node_ids[i], static_cast<NodeIndex>(i)).second)
            throw std::runtime_error("duplicate node id: " + g.node_ids[i]);

    g.adj.assign(n, {});
    for (const auto& e : g.edges) {
        if (e.u >= n || e.v >= n) throw std::runtime_error("edge endpoint out of range");
        if (e.length_m <= 0.0) throw std::runtime_error("edge length must be positive");
        const double gc = haversine_m(g.lat[e.u], g.lon[e.u], g.lat[e.v], g.lon[e.v]);
        if (e.length_m < 0.99 * gc)
            throw std::runtime_error("edge " + g.node_ids[e.u] + "-" + g.node_ids[e.v] +
                                     " shorter than great-circle distance");
        g.adj[e.u].emplace_back(e.v, e.length_m);
        g.adj[e.v].emplace_back(e.u, e.length_m);
    }

    g.component.assign(n, 0);
    std::vector<bool> seen(n, false);
    std::uint32_t comp = 0;
    std::vector<NodeIndex> stack;
    for (std::size_t s = 0; s < n; ++s) {
        if (seen[s]) continue;
        stack.push_back(static_cast<NodeIndex>(s));
        seen[s] = true;
        while (!stack.empty()) {
            const NodeIndex u = stack.back();
            stack.pop_back();
            g.component[u] = comp;
            for (auto [v, _] : g.adj[u]) {
                if (!seen[v]) {
                    seen[v] = true;
                    stack.push_back(v);
                }
            }
        }
        ++comp;
    }
    g.n_components = comp;
    return g;
}

StreetGraph load_graph(const std::filesystem::path& nodes_csv,
                       const std::filesystem::path& edges_csv) {
    csv::Table nodes = csv::read_file(nodes_csv);
    const auto c_id = nodes.require("node_id");
    const auto c_lat = nodes.require("lat");
    const auto c_lon = nodes.require("lon");
    const auto c_zip = nodes.require("zip");
    std::vector<std::string> ids, zips;
    std::vector<double> lat, lon;
    for (const auto& row : nodes.rows) {
        ids.push_back(row[c_id]);
        auto la = csv::parse_double(row[c_lat]);
        auto lo = csv::parse_double(row[c_lon]);
        if (!la || !lo) throw std::runtime_error("malformed node row in " + nodes_csv.string());
        lat.push_back(*la);
        lon.push_back(*lo);
        zips.push_back(row[c_zip]);
    }
    std::unordered_map<std::string, NodeIndex> index;
    for (std::size_t i = 0; i < ids.size(); ++i) index[ids[i]] = static_cast<NodeIndex>(i);

    csv::Table edges = csv::read_file(edges_csv);
    const auto c_u = edges.require("u");
    const auto c_v = edges.require("v");
    const auto c_len = edges.require("length_m");
    const auto c_art = edges.require("arterial");
    std::vector<StreetGraph::Edge> es;
    for (const auto& row : edges.rows) {
        auto iu = index.find(row[c_u]);
        auto iv = index.find(row[c_v]);
        if (iu == index.end() || iv == index.end())
            throw std::runtime_error("edge endpoint not in nodes file: " + row[c_u] + "-" + row[c_v]);
        auto len = csv::parse_double(row[c_len]);
        auto art = csv::parse_int(row[c_art]);
        if (!len || !art || (*art != 0 && *art != 1))
            throw std::runtime_error("malformed edge row in " + edges_csv.string());
        es.push_back({iu->second, iv->second, *len, *art == 1});
    }
    return StreetGraph::build(std::move(ids), std::move(lat), std::move(lon), std::move(zips),
                              std::move(es));
}

void write_graph(const std::filesystem::path& nodes_csv, const std::filesystem::path& edges_csv,
                 const StreetGraph& g) {
    csv::Table nodes;
    nodes.header = {"node_id", "lat", "lon", "zip"};
    for (std::size_t i = 0; i < g.n_nodes(); ++i)
        nodes.rows.push_back({g.node_ids[i], csv::format_double(g.lat[i]),
                              csv::format_double(g.lon[i]), g.zip[i]});
    csv::write_file(nodes_csv, nodes);

    csv::Table edges;
    edges.header = {"u", "v", "length_m", "arterial"};
    for (const auto& e : g.edges)
        edges.rows.push_back({g.node_ids[e.u], g.node_ids[e.v], csv::format_double(e.length_m),
                              e.arterial ? "1" : "0"});
    csv::write_file(edges_csv, edges);
}

bool is_poi_category(const std::string& s) {
    for (const char* c : kPoiCategories)
        if (s == c) return true;
    return false;
}

std::vector<PointOfInterest> load_pois(const std::filesystem::path& path) {
    csv::Table t = csv::read_file(path);
    const auto c_id = t.require("poi_id");
    const auto c_cat = t.require("category");
    const auto c_lat = t.require("lat");
    const auto c_lon = t.require("lon");
    std::vector<PointOfInterest> pois;
    for (const auto& row : t.rows) {
        if (!is_poi_category(row[c_cat]))
            throw std::runtime_error("unknown POI category: " + row[c_cat]);
        auto la = csv::parse_double(row[c_lat]);
        auto lo = csv::parse_double(row[c_lon]);
        if (!la || !lo) throw std::runtime_error("malformed POI row in " + path.string());
        pois.push_back({row[c_id], row[c_cat], *la, *lo});
    }
    return pois;
}

void write_pois(const std::filesystem::path& path, const std::vector<PointOfInterest>& pois) {
    csv::Table t;
    t.header = {"poi_id", "category", "lat", "lon"};
    for (const auto& p : pois)
        t.rows.push_back({p.id, p.category, csv::format_double(p.lat), csv::format_double(p.lon)});
    csv::write_file(path, t);
}

namespace {
NodeIndex nearest_node(const StreetGraph& g, double lat, double lon, double* dist_out) {
    NodeIndex best = 0;
    double best_d = kUnreachable;
    for (std::size_t i = 0; i < g.n_nodes(); ++i) {
        const double d = haversine_m(lat, lon, g.lat[i], g.lon[i]);
        if (d < best_d) {
            best_d = d;
            best = static_cast<NodeIndex>(i);
        }
    }
    if (dist_out) *dist_out = best_d;
    return best;
}
}  // namespace

std::vector<StationSite> load_stations(const std::filesystem::path& path, const StreetGraph& g) {
    csv::Table t = csv::read_file(path);
    const auto c_id = t.require("site_id");
    const auto c_lat = t.require("lat");
    const auto c_lon = t.require("lon");
    const auto c_owner = t.require("owner");
    const auto c_ch = t.require("n_chargers");
    std::vector<StationSite> sites;
    for (const auto& row : t.rows) {
        auto la = csv::parse_double(row[c_lat]);
        auto lo = csv::parse_double(row[c_lon]);
        auto ch = csv::parse_int(row[c_ch]);
        if (!la || !lo || !ch || *ch < 1)
            throw std::runtime_error("malformed station row in " + path.string());
        if (row[c_owner] != "operator" && row[c_owner] != "rival")
            throw std::runtime_error("station owner must be operator or rival, got " + row[c_owner]);
        StationSite s;
        s.id = row[c_id];
        s.node = nearest_node(g, *la, *lo, nullptr);
        s.rival = row[c_owner] == "rival";
        s.n_chargers = static_cast<int>(*ch);
        sites.push_back(std::move(s));
    }
    return sites;
}

void write_stations(const std::filesystem::path& path, const std::vector<StationSite>& sites,
                    const StreetGraph& g) {
    csv::Table t;
    t.header = {"site_id", "lat", "lon", "owner", "n_chargers"};
    for (const auto& s : sites)
        t.rows.push_back({s.id, csv::format_double(g.lat[s.node]), csv::format_double(g.lon[s.node]),
                          s.rival ? "rival" : "operator", std::to_string(s.n_chargers)});
    csv::write_file(path, t);
}

std::map<std::string, double> load_registrations(const std::filesystem::path& path) {
    csv::Table t = csv::read_file(path);
    const auto c_zip = t.require("zip");
    const auto c_n = t.require("ev_count");
    std::map<std::string, double> regs;
    for (const auto& row : t.rows) {
        auto n = csv::parse_double(row[c_n]);
        if (!n || *n < 0) throw std::runtime_error("malformed registration row in " + path.string());
        regs[row[c_zip]] = *n;
    }
    return regs;
}

void write_registrations(const std::filesystem::path& path,
                         const std::map<std::string, double>& regs) {
    csv::Table t;
    t.header = {"zip", "ev_count"};
    for (const auto& [z, n] : regs) t.rows.push_back({z, csv::format_double(n)});
    csv::write_file(path, t);
}

std::vector<double> dijkstra(const StreetGraph& g, NodeIndex src, double cutoff) {
    std::vector<double> dist(g.n_nodes(), kUnreachable);
    using Item = std::pair<double, NodeIndex>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[src] = 0.0;
    pq.emplace(0.0, src);
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d > dist[u]) continue;
        if (d > cutoff) break;
        for (auto [v, w] : g.adj[u]) {
            const double nd = d + w;
            if (nd < dist[v]) {
                dist[v] = nd;
                if (nd <= cutoff) pq.emplace(nd, v);
            }
        }
    }
    if (std::isfinite(cutoff))
        for (double& d : dist)
            if (d > cutoff) d = kUnreachable;
    return dist;
}

std::vector<double> multi_source_dijkstra(const StreetGraph& g,
                                          const std::vector<NodeIndex>& sources) {
    std::vector<double> dist(g.n_nodes(), kUnreachable);
    using Item = std::pair<double, NodeIndex>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    for (NodeIndex s : sources) {
        dist[s] = 0.0;
        pq.emplace(0.0, s);
    }
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d > dist[u]) continue;
        for (auto [v, w] : g.adj[u]) {
            const double nd = d + w;
            if (nd < dist[v]) {
                dist[v] = nd;
                pq.emplace(nd, v);
            }
        }
    }
    return dist;
}

std::optional<double> network_distance(const StreetGraph& g, NodeIndex u, NodeIndex v) {
    if (u >= g.n_nodes() || v >= g.n_nodes()) throw std::runtime_error("node index out of range");
    if (g.component[u] != g.component[v]) return std::nullopt;
    if (u == v) return 0.0;
    auto dist = dijkstra(g, u);
    if (!std::isfinite(dist[v])) return std::nullopt;
    return dist[v];
}

double closeness_centrality(const StreetGraph& g, NodeIndex v) {
    auto dist = dijkstra(g, v);
    double total = 0.0;
    std::size_t m = 0;
    for (std::size_t u = 0; u < g.n_nodes(); ++u) {
        if (g.component[u] != g.component[v]) continue;
        ++m;
        if (u != v) total += dist[u];
    }
    if (m < 2 || total <= 0.0) return 0.0;
    return static_cast<double>(m - 1) / total;
}

std::vector<double> closeness_centrality_all(const StreetGraph& g) {
    std::vector<double> out(g.n_nodes());
    std::vector<std::size_t> comp_size(g.n_components, 0);
    for (auto c : g.component) ++comp_size[c];
    for (std::size_t v = 0; v < g.n_nodes(); ++v) {
        const std::size_t m = comp_size[g.component[v]];
        if (m < 2) {
            out[v] = 0.0;
            continue;
        }
        auto dist = dijkstra(g, static_cast<NodeIndex>(v));
        double total = 0.0;
        for (std::size_t u = 0; u < g.n_nodes(); ++u)
            if (u != v && std::isfinite(dist[u])) total += dist[u];
        out[v] = total > 0.0 ? static_cast<double>(m - 1) / total : 0.0;
    }
    return out;
}

namespace {
// Straight-line distance from point p to segment (a, b), all geographic.
// Uses a local equirectangular projection centered at p, accurate at the
// sub-kilometer scales involved.
double point_segment_distance_m(const StreetGraph& g, NodeIndex p, NodeIndex a, NodeIndex b) {
    const double lat0 = g.lat[p] * kDeg;
    auto project = [&](NodeIndex q, double& x, double& y) {
        x = kEarthRadiusM * (g.lon[q] - g.lon[p]) * kDeg * std::cos(lat0);
        y = kEarthRadiusM * (g.lat[q] - g.lat[p]) * kDeg;
    };
    double ax, ay, bx, by;
    project(a, ax, ay);
    project(b, bx, by);
    const double dx = bx - ax, dy = by - ay;
    const double len_sq = dx * dx + dy * dy;
    double t = 0.0;
    if (len_sq > 0.0) t = std::clamp((-ax * dx - ay * dy) / len_sq, 0.0, 1.0);
    const double px = ax + t * dx, py = ay + t * dy;
    return std::sqrt(px * px + py * py);
}
}  // namespace

std::vector<int> high_traffic_flags(const StreetGraph& g, double threshold_m, bool* warned) {
    std::vector<int> flags(g.n_nodes(), 0);
    bool any_arterial = false;
    for (const auto& e : g.edges)
        if (e.arterial) { any_arterial = true; break; }
    if (warned) *warned = !any_arterial;
    if (!any_arterial) return flags;
    for (std::size_t v = 0; v < g.n_nodes(); ++v) {
        for (const auto& e : g.edges) {
            if (!e.arterial) continue;
            if (point_segment_distance_m(g, static_cast<NodeIndex>(v), e.u, e.v) <= threshold_m) {
                flags[v] = 1;
                break;
            }
        }
    }
    return flags;
}

std::vector<NodeIndex> walkable_ball(const StreetGraph& g, NodeIndex v, double radius_m) {
    if (radius_m <= 0.0) throw std::runtime_error("walkable_ball: radius must be positive");
    auto dist = dijkstra(g, v, radius_m);
    std::vector<NodeIndex> ball;
    for (std::size_t u = 0; u < g.n_nodes(); ++u)
        if (dist[u] <= radius_m) ball.push_back(static_cast<NodeIndex>(u));
    return ball;
}

SnapResult snap_pois(const StreetGraph& g, const std::vector<PointOfInterest>& pois,
                     double cutoff_m) {
    SnapResult r;
    for (std::size_t i = 0; i < pois.size(); ++i) {
        double d = 0.0;
        const NodeIndex node = nearest_node(g, pois[i].lat, pois[i].lon, &d);
        if (d > cutoff_m) {
            ++r.excluded;
            continue;
        }
        r.snapped.push_back({i, node, d});
    }
    return r;
}

std::map<std::string, double> poi_counts(const StreetGraph& g, NodeIndex v,
                                         const std::vector<PointOfInterest>& pois,
                                         const SnapResult& snapped, double radius_m) {
    auto dist = dijkstra(g, v, radius_m);
    std::map<std::string, double> counts;
    for (const char* c : kPoiCategories) counts[c] = 0.0;
    for (const auto& s : snapped.snapped) {
        if (dist[s.node] <= radius_m) counts[pois[s.poi].category] += 1.0;
    }
    const double buildings = counts["accommodation"] + counts["amenities"] +
                             counts["shopping_and_food"] + counts["medical"] +
                             counts["entertainment"];
    counts["accommodation_share"] = buildings > 0.0 ? counts["accommodation"] / buildings : 0.0;
    return counts;
}

double ev_density(const StreetGraph& g, NodeIndex v,
                  const std::map<std::string, double>& registrations) {
    const auto& z = g.zip[v];
    auto it = registrations.find(z);
    if (it == registrations.end())
        throw std::runtime_error("no EV registration count for zip " + z);
    return it->second;
}

std::optional<double> nearest_station_distance(const StreetGraph& g, NodeIndex v,
                                               const std::vector<StationSite>& sites,
                                               bool rivals_only) {
    std::vector<NodeIndex> nodes;
    for (const auto& s : sites)
        if (!rivals_only || s.rival) nodes.push_back(s.node);
    if (nodes.empty()) return std::nullopt;
    auto dist = multi_source_dijkstra(g, nodes);
    if (!std::isfinite(dist[v])) return std::nullopt;
    return dist[v];
}

std::size_t NodeFeatures::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    throw std::runtime_error("node features have no column: " + name);
}

double NodeFeatures::at(NodeIndex v, const std::string& name) const {
    return values(v, column_index(name));
}

NodeFeatures compute_node_features(const StreetGraph& g,
                                   const std::vector<PointOfInterest>& pois,
                                   const std::vector<StationSite>& sites,
                                   const std::map<std::string, double>& registrations,
                                   const GeoConfig& config) {
    NodeFeatures nf;
    nf.node_ids = g.node_ids;
    nf.columns = {"amenities",      "shopping_and_food", "transport",       "entertainment",
                  "medical",        "accommodation_share", "public_transport", "network_centrality",
                  "high_traffic",   "ev_count",          "n_chargers",      "nearest_rival_distance"};
    const std::size_t n = g.n_nodes();
    nf.values = Matrix(n, nf.columns.size());

    const auto snapped = snap_pois(g, pois, config.poi_snap_cutoff_m);
    const auto centrality = closeness_centrality_all(g);
    const auto traffic = high_traffic_flags(g, config.arterial_threshold_m);

    std::vector<double> rival_dist(n, kUnreachable);
    {
        std::vector<NodeIndex> rivals;
        for (const auto& s : sites)
            if (s.rival) rivals.push_back(s.node);
        if (!rivals.empty()) rival_dist = multi_source_dijkstra(g, rivals);
    }
    std::vector<double> chargers(n, 0.0);
    for (const auto& s : sites) chargers[s.node] += s.n_chargers;

    for (std::size_t v = 0; v < n; ++v) {
        auto counts = poi_counts(g, static_cast<NodeIndex>(v), pois, snapped,
                                 config.walkable_radius_m);
        nf.values(v, 0) = counts["amenities"];
        nf.values(v, 1) = counts["shopping_and_food"];
        nf.values(v, 2) = counts["transport_hub"];
        nf.values(v, 3) = counts["entertainment"];
        nf.values(v, 4) = counts["medical"];
        nf.values(v, 5) = counts["accommodation_share"];
        nf.values(v, 6) = counts["public_transport_station"];
        nf.values(v, 7) = centrality[v];
        nf.values(v, 8) = traffic[v];
        nf.values(v, 9) = ev_density(g, static_cast<NodeIndex>(v), registrations);
        nf.values(v, 10) = chargers[v];
        nf.values(v, 11) = std::isfinite(rival_dist[v]) ? rival_dist[v]
                                                        : config.unreachable_sentinel;
    }
    return nf;
}

void write_node_features(const std::filesystem::path& path, const NodeFeatures& nf) {
    csv::Table t;
    t.header.push_back("node_id");
    for (const auto& c : nf.columns) t.header.push_back(c);
    for (std::size_t i = 0; i < nf.node_ids.size(); ++i) {
        std::vector<std::string> row;
        row.push_back(nf.node_ids[i]);
        for (std::size_t j = 0; j < nf.columns.size(); ++j)
            row.push_back(csv::format_double(nf.values(i, j)));
        t.rows.push_back(std::move(row));
    }
    csv::write_file(path, t);
}

NodeFeatures read_node_features(const std::filesystem::path& path) {
    csv::Table t = csv::read_file(path);
    if (t.header.empty() || t.header[0] != "node_id")
        throw std::runtime_error("node features must start with node_id column");
    NodeFeatures nf;
    nf.columns.assign(t.header.begin() + 1, t.header.end());
    nf.values = Matrix(t.rows.size(), nf.columns.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        nf.node_ids.push_back(t.rows[i][0]);
        for (std::size_t j = 0; j < nf.columns.size(); ++j) {
            auto v = csv::parse_double(t.rows[i][j + 1]);
            if (!v) throw std::runtime_error("malformed node feature value in " + path.string());
            nf.values(i, j) = *v;
        }
    }
    return nf;
}

}  // namespace evplan::geo
