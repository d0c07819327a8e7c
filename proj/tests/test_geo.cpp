#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "evplan/geo.hpp"

using namespace evplan;
using geo::NodeIndex;
using geo::StreetGraph;

namespace {

constexpr double kLat0 = 40.0;
constexpr double kLon0 = -105.0;

// Builds a graph from planar offsets in meters around (kLat0, kLon0).
StreetGraph planar_graph(const std::vector<std::pair<double, double>>& xy,
                         std::vector<StreetGraph::Edge> edges,
                         const std::string& zip = "Z1") {
    const double m_lat = 111'320.0;
    const double m_lon = m_lat * std::cos(kLat0 * std::acos(-1.0) / 180.0);
    std::vector<std::string> ids;
    std::vector<double> lat, lon;
    std::vector<std::string> zips;
    for (std::size_t i = 0; i < xy.size(); ++i) {
        ids.push_back("n" + std::to_string(i));
        lat.push_back(kLat0 + xy[i].second / m_lat);
        lon.push_back(kLon0 + xy[i].first / m_lon);
        zips.push_back(zip);
    }
    return StreetGraph::build(std::move(ids), std::move(lat), std::move(lon), std::move(zips),
                              std::move(edges));
}

// Straight-line path A(0,0) - B(100,0) - C(150,0) with edge lengths 100 and 50.
StreetGraph path_abc() {
    return planar_graph({{0, 0}, {100, 0}, {150, 0}},
                        {{0, 1, 100.0, false}, {1, 2, 50.0, false}});
}

std::vector<double> bellman_ford(const StreetGraph& g, NodeIndex src) {
    const std::size_t n = g.n_nodes();
    std::vector<double> dist(n, geo::kUnreachable);
    dist[src] = 0.0;
    for (std::size_t pass = 0; pass + 1 < n; ++pass) {
        bool changed = false;
        for (const auto& e : g.edges) {
            if (dist[e.u] + e.length_m < dist[e.v]) { dist[e.v] = dist[e.u] + e.length_m; changed = true; }
            if (dist[e.v] + e.length_m < dist[e.u]) { dist[e.u] = dist[e.v] + e.length_m; changed = true; }
        }
        if (!changed) break;
    }
    return dist;
}

StreetGraph random_geometric_graph(std::size_t n, std::mt19937_64& rng, double box_m = 2000.0) {
    std::uniform_real_distribution<double> u(-box_m / 2, box_m / 2);
    std::vector<std::pair<double, double>> xy(n);
    for (auto& p : xy) p = {u(rng), u(rng)};
    std::vector<StreetGraph::Edge> edges;
    std::uniform_real_distribution<double> detour(1.0, 1.3);
    auto dist = [&xy](std::size_t a, std::size_t b) {
        const double dx = xy[a].first - xy[b].first, dy = xy[a].second - xy[b].second;
        return std::sqrt(dx * dx + dy * dy);
    };
    for (std::size_t i = 1; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < i; ++j)
            if (dist(i, j) < dist(i, best)) best = j;
        edges.push_back({static_cast<NodeIndex>(best), static_cast<NodeIndex>(i),
                         std::max(1.0, dist(i, best)) * detour(rng), (i % 7) == 0});
    }
    // a few shortcuts
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t k = 0; k < n / 2; ++k) {
        const auto a = pick(rng), b = pick(rng);
        if (a == b) continue;
        edges.push_back({static_cast<NodeIndex>(a), static_cast<NodeIndex>(b),
                         std::max(1.0, dist(a, b)) * detour(rng), false});
    }
    return planar_graph(xy, std::move(edges));
}

}  // namespace

TEST_CASE("haversine on known points") {
    CHECK(geo::haversine_m(40.0, -105.0, 40.0, -105.0) == doctest::Approx(0.0));
    // one degree of latitude is ~111.2 km on the spherical Earth
    CHECK(geo::haversine_m(40.0, -105.0, 41.0, -105.0) ==
          doctest::Approx(111'194.9).epsilon(1e-3));
    // symmetry
    CHECK(geo::haversine_m(40.0, -105.0, 40.5, -104.3) ==
          doctest::Approx(geo::haversine_m(40.5, -104.3, 40.0, -105.0)));
}

TEST_CASE("graph build validates inputs") {
    CHECK_THROWS(static_cast<void>(StreetGraph::build({"a", "a"}, {40.0, 40.0}, {-105.0, -105.0},
                                                      {"z", "z"}, {})));
    // edge shorter than the great-circle bound
    CHECK_THROWS(static_cast<void>(
        StreetGraph::build({"a", "b"}, {40.0, 41.0}, {-105.0, -105.0}, {"z", "z"},
                           {{0, 1, 10.0, false}})));
    CHECK_THROWS(static_cast<void>(StreetGraph::build({"a", "b"}, {40.0, 40.0},
                                                      {-105.0, -105.0001}, {"z", "z"},
                                                      {{0, 1, 0.0, false}})));
}

TEST_CASE("network distance on the A-B-C path") {
    const auto g = path_abc();
    CHECK(*geo::network_distance(g, 0, 0) == doctest::Approx(0.0));
    CHECK(*geo::network_distance(g, 0, 2) == doctest::Approx(150.0));
    CHECK(*geo::network_distance(g, 2, 0) == doctest::Approx(150.0));
}

TEST_CASE("network distance is unreachable across components") {
    const auto g = planar_graph({{0, 0}, {100, 0}, {5000, 0}, {5100, 0}},
                                {{0, 1, 110.0, false}, {2, 3, 110.0, false}});
    CHECK(g.n_components == 2);
    CHECK(!geo::network_distance(g, 0, 2).has_value());
    CHECK(geo::network_distance(g, 0, 1).has_value());
}

TEST_CASE("dijkstra equals the Bellman-Ford oracle on random geometric graphs") {
    std::mt19937_64 rng(31);
    const auto g = random_geometric_graph(200, rng);
    std::uniform_int_distribution<NodeIndex> pick(0, 199);
    for (int k = 0; k < 50; ++k) {
        const auto src = pick(rng);
        const auto fast = geo::dijkstra(g, src);
        const auto slow = bellman_ford(g, src);
        for (std::size_t v = 0; v < 200; ++v) {
            if (std::isinf(slow[v]))
                CHECK(std::isinf(fast[v]));
            else
                CHECK(fast[v] == doctest::Approx(slow[v]).epsilon(1e-9));
        }
    }
}

TEST_CASE("triangle inequality on sampled triples") {
    std::mt19937_64 rng(32);
    const auto g = random_geometric_graph(100, rng);
    std::uniform_int_distribution<NodeIndex> pick(0, 99);
    for (int k = 0; k < 100; ++k) {
        const auto a = pick(rng), b = pick(rng), c = pick(rng);
        const auto ab = geo::network_distance(g, a, b);
        const auto bc = geo::network_distance(g, b, c);
        const auto ac = geo::network_distance(g, a, c);
        if (ab && bc && ac) CHECK(*ac <= *ab + *bc + 1e-9);
    }
}

TEST_CASE("closeness centrality of star graph") {
    // center n0 with 4 unit spokes (1 m each, scaled up to dodge the
    // great-circle sanity bound: use 100 m spokes and scale expectations).
    const auto g = planar_graph({{0, 0}, {100, 0}, {-100, 0}, {0, 100}, {0, -100}},
                                {{0, 1, 100.0, false},
                                 {0, 2, 100.0, false},
                                 {0, 3, 100.0, false},
                                 {0, 4, 100.0, false}});
    CHECK(geo::closeness_centrality(g, 0) == doctest::Approx(4.0 / 400.0));
    // leaf: distances 100, 200, 200, 200 -> 4/700
    CHECK(geo::closeness_centrality(g, 1) == doctest::Approx(4.0 / 700.0));
}

TEST_CASE("closeness centrality: isolated node is 0, component nodes positive") {
    const auto g = planar_graph({{0, 0}, {100, 0}, {5000, 5000}}, {{0, 1, 110.0, false}});
    CHECK(geo::closeness_centrality(g, 2) == 0.0);
    CHECK(geo::closeness_centrality(g, 0) > 0.0);
    const auto all = geo::closeness_centrality_all(g);
    CHECK(all[0] == doctest::Approx(geo::closeness_centrality(g, 0)));
    CHECK(all[2] == 0.0);
}

TEST_CASE("closeness matches brute-force all-pairs oracle") {
    std::mt19937_64 rng(33);
    const auto g = random_geometric_graph(100, rng);
    const auto all = geo::closeness_centrality_all(g);
    for (NodeIndex v = 0; v < 100; v += 7) {
        const auto dist = bellman_ford(g, v);
        double sum = 0.0;
        int m = 0;
        for (std::size_t u = 0; u < 100; ++u)
            if (!std::isinf(dist[u])) { sum += dist[u]; ++m; }
        const double expect = (m >= 2 && sum > 0.0) ? (m - 1) / sum : 0.0;
        CHECK(all[v] == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("high traffic flags") {
    // n0 on the arterial edge, n1 30 m off it, n2 500 m away
    const auto g = planar_graph({{0, 0}, {150, 30}, {150, 500}, {300, 0}},
                                {{0, 3, 310.0, true},
                                 {0, 1, 160.0, false},
                                 {1, 2, 480.0, false}});
    bool warned = true;
    const auto flags = geo::high_traffic_flags(g, 70.0, &warned);
    CHECK(!warned);
    CHECK(flags[0] == 1);
    CHECK(flags[1] == 1);
    CHECK(flags[2] == 0);
    CHECK(flags[3] == 1);
}

TEST_CASE("no arterial edges -> all zeros with warning") {
    const auto g = path_abc();
    bool warned = false;
    const auto flags = geo::high_traffic_flags(g, 70.0, &warned);
    CHECK(warned);
    for (int f : flags) CHECK(f == 0);
}

TEST_CASE("high traffic flags match a brute-force segment-distance oracle") {
    std::mt19937_64 rng(34);
    const auto g = random_geometric_graph(50, rng, 600.0);
    const auto flags = geo::high_traffic_flags(g, 70.0);
    // oracle: dense sampling along each arterial segment in the planar frame
    const double m_lat = 111'320.0;
    const double m_lon = m_lat * std::cos(kLat0 * std::acos(-1.0) / 180.0);
    auto px = [&](NodeIndex v) { return (g.lon[v] - kLon0) * m_lon; };
    auto py = [&](NodeIndex v) { return (g.lat[v] - kLat0) * m_lat; };
    for (NodeIndex v = 0; v < 50; ++v) {
        double best = 1e18;
        for (const auto& e : g.edges) {
            if (!e.arterial) continue;
            for (int t = 0; t <= 2000; ++t) {
                const double f = t / 2000.0;
                const double sx = px(e.u) + f * (px(e.v) - px(e.u));
                const double sy = py(e.u) + f * (py(e.v) - py(e.u));
                const double dx = px(v) - sx, dy = py(v) - sy;
                best = std::min(best, std::sqrt(dx * dx + dy * dy));
            }
        }
        const int expect = best <= 70.0 ? 1 : 0;
        // skip knife-edge cases where the sampled oracle itself is uncertain
        if (std::abs(best - 70.0) > 0.5) CHECK(flags[v] == expect);
    }
}

TEST_CASE("arterial subdivision does not change flags") {
    auto nodes = std::vector<std::pair<double, double>>{{0, 0}, {300, 0}, {150, 60}, {150, 200}};
    const auto g1 = planar_graph(nodes, {{0, 1, 310.0, true}, {2, 3, 150.0, false}});
    nodes.push_back({150, 0});  // midpoint of the arterial
    const auto g2 = planar_graph(
        nodes, {{0, 4, 155.0, true}, {4, 1, 155.0, true}, {2, 3, 150.0, false}});
    const auto f1 = geo::high_traffic_flags(g1);
    const auto f2 = geo::high_traffic_flags(g2);
    for (std::size_t v = 0; v < 4; ++v) CHECK(f1[v] == f2[v]);
}

TEST_CASE("walkable ball") {
    // A - B - C with lengths 300, 300
    const auto g = planar_graph({{0, 0}, {290, 0}, {580, 0}},
                                {{0, 1, 300.0, false}, {1, 2, 300.0, false}});
    const auto ball = geo::walkable_ball(g, 0, 400.0);
    REQUIRE(ball.size() == 2);
    CHECK(ball[0] == 0);
    CHECK(ball[1] == 1);
    const auto tiny = geo::walkable_ball(g, 2, 0.001);
    REQUIRE(tiny.size() == 1);
    CHECK(tiny[0] == 2);
}

TEST_CASE("walkable ball is monotone in radius and matches full Dijkstra") {
    std::mt19937_64 rng(35);
    const auto g = random_geometric_graph(500, rng, 3000.0);
    std::uniform_int_distribution<NodeIndex> pick(0, 499);
    for (int k = 0; k < 20; ++k) {
        const auto c = pick(rng);
        const auto small = geo::walkable_ball(g, c, 250.0);
        const auto large = geo::walkable_ball(g, c, 400.0);
        CHECK(std::includes(large.begin(), large.end(), small.begin(), small.end()));
        const auto dist = geo::dijkstra(g, c);  // full pass as oracle
        std::vector<NodeIndex> expect;
        for (std::size_t v = 0; v < 500; ++v)
            if (dist[v] <= 400.0) expect.push_back(static_cast<NodeIndex>(v));
        CHECK(large == expect);
    }
}

TEST_CASE("poi snapping and counts") {
    const auto g = planar_graph({{0, 0}, {290, 0}, {580, 0}},
                                {{0, 1, 300.0, false}, {1, 2, 300.0, false}});
    std::vector<geo::PointOfInterest> pois;
    const double m_lat = 111'320.0;
    auto at_node = [&](const std::string& id, const std::string& cat, NodeIndex v, double off_m) {
        pois.push_back({id, cat, g.lat[v] + off_m / m_lat, g.lon[v]});
    };
    at_node("p0", "amenities", 0, 5.0);
    at_node("p1", "amenities", 0, -8.0);
    at_node("p2", "amenities", 0, 3.0);
    at_node("p3", "accommodation", 1, 2.0);
    at_node("p4", "public_transport_station", 1, 2.0);
    at_node("p5", "amenities", 2, 4000.0);  // beyond the 250 m snap cutoff

    const auto snapped = geo::snap_pois(g, pois, 250.0);
    CHECK(snapped.excluded == 1);
    REQUIRE(snapped.snapped.size() == 5);

    const auto counts = geo::poi_counts(g, 0, pois, snapped, 400.0);
    CHECK(counts.at("amenities") == 3.0);
    CHECK(counts.at("accommodation") == 1.0);
    CHECK(counts.at("public_transport_station") == 1.0);
    CHECK(counts.at("medical") == 0.0);
    // share = accommodation / (accommodation + amenities + shopping + medical + entertainment)
    CHECK(counts.at("accommodation_share") == doctest::Approx(1.0 / 4.0));

    const auto far = geo::poi_counts(g, 2, pois, snapped, 250.0);  // ball excludes node 1
    CHECK(far.at("amenities") == 0.0);
    CHECK(far.at("accommodation_share") == 0.0);  // zero denominator
}

TEST_CASE("ev_density: constant within zip, unknown zip errors") {
    const auto g = planar_graph({{0, 0}, {100, 0}}, {{0, 1, 110.0, false}});
    CHECK(geo::ev_density(g, 0, {{"Z1", 321.0}}) == 321.0);
    CHECK(geo::ev_density(g, 1, {{"Z1", 321.0}}) == geo::ev_density(g, 0, {{"Z1", 321.0}}));
    CHECK(geo::ev_density(g, 0, {{"Z1", 0.0}}) == 0.0);
    CHECK_THROWS_WITH_AS(static_cast<void>(geo::ev_density(g, 0, {{"Z9", 1.0}})),
                         doctest::Contains("Z1"), std::runtime_error);
}

TEST_CASE("nearest station distance") {
    const auto g = path_abc();
    std::vector<geo::StationSite> sites = {{"r1", 2, true, 1}, {"o1", 1, false, 2}};
    CHECK(*geo::nearest_station_distance(g, 2, sites, true) == doctest::Approx(0.0));
    CHECK(*geo::nearest_station_distance(g, 0, sites, true) == doctest::Approx(150.0));
    CHECK(*geo::nearest_station_distance(g, 0, sites, false) == doctest::Approx(100.0));
    CHECK(!geo::nearest_station_distance(g, 0, {{"o1", 1, false, 2}}, true).has_value());
}

TEST_CASE("nearest station distance equals the exhaustive min oracle") {
    std::mt19937_64 rng(36);
    const auto g = random_geometric_graph(120, rng);
    std::uniform_int_distribution<NodeIndex> pick(0, 119);
    std::vector<geo::StationSite> sites;
    for (int s = 0; s < 30; ++s)
        sites.push_back({"s" + std::to_string(s), pick(rng), s % 3 == 0, 1});
    for (int q = 0; q < 40; ++q) {
        const auto v = pick(rng);
        const auto dist = geo::dijkstra(g, v);
        double best = geo::kUnreachable;
        for (const auto& s : sites)
            if (s.rival) best = std::min(best, dist[s.node]);
        const auto got = geo::nearest_station_distance(g, v, sites, true);
        if (std::isinf(best))
            CHECK(!got.has_value());
        else
            CHECK(*got == doctest::Approx(best).epsilon(1e-9));
    }
}

TEST_CASE("compute_node_features: fixed column order and sentinel") {
    const auto g = path_abc();
    const auto nf = geo::compute_node_features(g, {}, {}, {{"Z1", 100.0}});
    const std::vector<std::string> expect = {
        "amenities",      "shopping_and_food",   "transport",      "entertainment",
        "medical",        "accommodation_share", "public_transport", "network_centrality",
        "high_traffic",   "ev_count",            "n_chargers",     "nearest_rival_distance"};
    CHECK(nf.columns == expect);
    CHECK(nf.at(0, "amenities") == 0.0);
    CHECK(nf.at(0, "ev_count") == 100.0);
    CHECK(nf.at(0, "n_chargers") == 0.0);
    CHECK(nf.at(0, "nearest_rival_distance") == -1.0);  // no rivals -> sentinel
    CHECK(nf.at(1, "network_centrality") > 0.0);
}

TEST_CASE("graph and feature CSV round trips are byte-identical") {
    std::mt19937_64 rng(37);
    const auto g = random_geometric_graph(60, rng);
    const auto dir = std::filesystem::temp_directory_path();
    const auto nodes1 = dir / "evplan_nodes1.csv", edges1 = dir / "evplan_edges1.csv";
    const auto nodes2 = dir / "evplan_nodes2.csv", edges2 = dir / "evplan_edges2.csv";
    geo::write_graph(nodes1, edges1, g);
    const auto g2 = geo::load_graph(nodes1, edges1);
    geo::write_graph(nodes2, edges2, g2);
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    };
    CHECK(slurp(nodes1) == slurp(nodes2));
    CHECK(slurp(edges1) == slurp(edges2));

    const auto nf = geo::compute_node_features(g, {}, {}, {{"Z1", 5.0}});
    const auto f1 = dir / "evplan_nf1.csv", f2 = dir / "evplan_nf2.csv";
    geo::write_node_features(f1, nf);
    geo::write_node_features(f2, geo::read_node_features(f1));
    CHECK(slurp(f1) == slurp(f2));
    for (const auto& p : {nodes1, edges1, nodes2, edges2, f1, f2}) std::filesystem::remove(p);
}
