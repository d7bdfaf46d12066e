#include "gengnn/graph_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gengnn/errors.hpp"
#include "gengnn/random.hpp"

namespace gengnn {

using nlohmann::json;

std::string graph_to_json_line(const Graph& g) {
    json j;
    j["n"] = g.n();
    j["node_types"] = g.node_types();
    json edges = json::array();
    for (auto [a, b] : g.edges()) edges.push_back({a, b, g.edge_type(a, b)});
    j["edges"] = std::move(edges);
    j["node_classes"] = g.node_classes();
    j["edge_classes"] = g.edge_classes();
    if (!g.y().empty()) j["y"] = g.y();
    return j.dump();
}

namespace {

struct RawGraph {
    int n = 0;
    std::vector<int> node_types;
    std::vector<std::array<int, 3>> edges;
    std::vector<double> y;
    int node_classes = -1;
    int edge_classes = -1;
};

[[noreturn]] void fail(const std::string& msg, long line) {
    throw ParseError("line " + std::to_string(line) + ": " + msg, line);
}

RawGraph parse_raw(const std::string& text, long line) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(std::string("malformed JSON (") + e.what() + ")", line);
    }
    if (!j.is_object()) fail("record is not a JSON object", line);
    for (const char* key : {"n", "node_types", "edges"})
        if (!j.contains(key)) fail(std::string("missing field \"") + key + "\"", line);

    RawGraph raw;
    try {
        raw.n = j.at("n").get<int>();
        raw.node_types = j.at("node_types").get<std::vector<int>>();
        for (const auto& e : j.at("edges")) {
            if (!e.is_array() || e.size() != 3) fail("edge entries must be [i, j, type]", line);
            raw.edges.push_back({e[0].get<int>(), e[1].get<int>(), e[2].get<int>()});
        }
        if (j.contains("y")) raw.y = j.at("y").get<std::vector<double>>();
        if (j.contains("node_classes")) raw.node_classes = j.at("node_classes").get<int>();
        if (j.contains("edge_classes")) raw.edge_classes = j.at("edge_classes").get<int>();
    } catch (const json::exception& e) {
        fail(std::string("wrong field type (") + e.what() + ")", line);
    }
    if (raw.n < 0) fail("negative node count", line);
    if (static_cast<int>(raw.node_types.size()) != raw.n) fail("node_types length differs from n", line);
    for (int t : raw.node_types)
        if (t < 0) fail("negative node type", line);
    for (const auto& e : raw.edges) {
        if (e[0] < 0 || e[0] >= raw.n || e[1] < 0 || e[1] >= raw.n) fail("edge endpoint out of range", line);
        if (e[0] == e[1]) fail("self-loop", line);
        if (e[2] < 1) fail("edge type must be >= 1 (0 is reserved for no-edge)", line);
    }
    return raw;
}

Graph build(const RawGraph& raw, int dx, int de, long line) {
    Graph g(raw.n, dx, de);
    for (int i = 0; i < raw.n; ++i) {
        if (raw.node_types[static_cast<std::size_t>(i)] >= dx) throw SchemaError("line " + std::to_string(line) + ": node type exceeds node_classes");
        g.set_node_type(i, raw.node_types[static_cast<std::size_t>(i)]);
    }
    for (const auto& e : raw.edges) {
        if (e[2] >= de) throw SchemaError("line " + std::to_string(line) + ": edge type exceeds edge_classes");
        if (g.has_edge(e[0], e[1]) && g.edge_type(e[0], e[1]) != e[2]) fail("conflicting duplicate edge", line);
        g.set_edge(e[0], e[1], e[2]);
    }
    g.set_y(raw.y);
    return g;
}

}  // namespace

Graph graph_from_json_line(const std::string& line, long line_number) {
    RawGraph raw = parse_raw(line, line_number);
    int dx = raw.node_classes;
    int de = raw.edge_classes;
    if (dx < 0) {
        dx = 1;
        for (int t : raw.node_types) dx = std::max(dx, t + 1);
    }
    if (de < 0) {
        de = 2;
        for (const auto& e : raw.edges) de = std::max(de, e[2] + 1);
    }
    return build(raw, dx, de, line_number);
}

void write_jsonl(const GraphSet& set, std::ostream& out) {
    for (const Graph& g : set.graphs) out << graph_to_json_line(g) << '\n';
}

void write_jsonl(const GraphSet& set, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_jsonl(set, out);
    if (!out) throw IoError("write failed for " + path.string());
}

GraphSet read_jsonl(std::istream& in) {
    std::vector<RawGraph> raws;
    std::vector<long> lines;
    std::string text;
    long line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) continue;
        raws.push_back(parse_raw(text, line));
        lines.push_back(line);
    }

    int declared_dx = -1, declared_de = -1;
    int inferred_dx = 1, inferred_de = 2;
    for (std::size_t k = 0; k < raws.size(); ++k) {
        const RawGraph& r = raws[k];
        auto check = [&](int declared, int& slot, const char* what) {
            if (declared < 0) return;
            if (slot >= 0 && slot != declared)
                throw SchemaError("line " + std::to_string(lines[k]) + ": " + what + " " + std::to_string(declared) +
                                  " differs from earlier records (" + std::to_string(slot) + ")");
            slot = declared;
        };
        check(r.node_classes, declared_dx, "node_classes");
        check(r.edge_classes, declared_de, "edge_classes");
        for (int t : r.node_types) inferred_dx = std::max(inferred_dx, t + 1);
        for (const auto& e : r.edges) inferred_de = std::max(inferred_de, e[2] + 1);
    }
    const int dx = declared_dx >= 0 ? declared_dx : inferred_dx;
    const int de = declared_de >= 0 ? declared_de : inferred_de;

    GraphSet set;
    set.provenance = "file";
    set.graphs.reserve(raws.size());
    for (std::size_t k = 0; k < raws.size(); ++k) set.graphs.push_back(build(raws[k], dx, de, lines[k]));
    return set;
}

GraphSet read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    GraphSet set = read_jsonl(in);
    set.provenance = path.filename().string();
    return set;
}

namespace {

std::uint64_t mix(std::uint64_t h, std::uint64_t v) { return splitmix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2))); }

}  // namespace

std::uint64_t wl_hash(const Graph& g, int iterations) {
    if (iterations < 1) throw InvalidArgument("wl_hash: iterations must be >= 1");
    const int n = g.n();
    std::vector<std::uint64_t> color(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) color[static_cast<std::size_t>(i)] = mix(0x5157u, static_cast<std::uint64_t>(g.node_type(i)));

    auto fold_round = [&](std::uint64_t h) {
        std::vector<std::uint64_t> sorted = color;
        std::sort(sorted.begin(), sorted.end());
        h = mix(h, sorted.size());
        for (std::uint64_t c : sorted) h = mix(h, c);
        return h;
    };

    std::uint64_t h = mix(0x77u, static_cast<std::uint64_t>(n));
    h = fold_round(h);
    std::vector<std::uint64_t> next(color.size());
    std::vector<std::uint64_t> neigh;
    for (int it = 0; it < iterations; ++it) {
        for (int i = 0; i < n; ++i) {
            neigh.clear();
            for (int j = 0; j < n; ++j)
                if (g.has_edge(i, j))
                    neigh.push_back(mix(static_cast<std::uint64_t>(g.edge_type(i, j)), color[static_cast<std::size_t>(j)]));
            std::sort(neigh.begin(), neigh.end());
            std::uint64_t c = mix(color[static_cast<std::size_t>(i)], neigh.size());
            for (std::uint64_t v : neigh) c = mix(c, v);
            next[static_cast<std::size_t>(i)] = c;
        }
        color.swap(next);
        h = fold_round(h);
    }
    return h;
}

}  // namespace gengnn
