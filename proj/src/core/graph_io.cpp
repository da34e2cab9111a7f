#include "rsg/graph_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace rsg {

using nlohmann::json;

std::string serialize_graph(const Rsg& graph) {
    json nodes = json::array();
    for (const RsgNode& n : graph.nodes()) {
        nodes.push_back({{"id", n.id},
                         {"kind", to_string(n.kind)},
                         {"name", n.name},
                         {"qualified_name", n.qualified_name},
                         {"file_path", n.file_path},
                         {"span", {n.span.start_line, n.span.end_line}},
                         {"source_text", n.source_text},
                         {"signature", n.signature}});
    }
    json edges = json::array();
    for (const RsgEdge& e : graph.edges()) {
        edges.push_back({{"src", e.src}, {"dst", e.dst}, {"relation", to_string(e.relation)}});
    }
    json doc = {{"meta",
                 {{"format_version", kGraphFormatVersion},
                  {"node_count", graph.node_count()},
                  {"edge_count", graph.edge_count()}}},
                {"nodes", nodes},
                {"edges", edges}};
    return doc.dump(1);
}

Rsg deserialize_graph(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw GraphError(std::string("malformed graph document: ") + e.what());
    }
    if (!doc.contains("meta") || !doc.contains("nodes") || !doc.contains("edges"))
        throw GraphError("graph document missing meta/nodes/edges");
    const int version = doc["meta"].value("format_version", -1);
    if (version != kGraphFormatVersion)
        throw GraphError("unsupported graph format_version " + std::to_string(version));

    std::vector<RsgNode> nodes;
    for (const json& jn : doc["nodes"]) {
        RsgNode n;
        n.id = jn.value("id", -1);
        auto kind = parse_node_kind(jn.value("kind", std::string{}));
        if (!kind) throw GraphError("unknown node kind in document");
        n.kind = *kind;
        n.name = jn.value("name", std::string{});
        n.qualified_name = jn.value("qualified_name", std::string{});
        n.file_path = jn.value("file_path", std::string{});
        if (jn.contains("span") && jn["span"].is_array() && jn["span"].size() == 2)
            n.span = {jn["span"][0].get<int>(), jn["span"][1].get<int>()};
        n.source_text = jn.value("source_text", std::string{});
        n.signature = jn.value("signature", std::string{});
        nodes.push_back(std::move(n));
    }
    std::vector<RsgEdge> edges;
    for (const json& je : doc["edges"]) {
        auto rel = parse_relation_kind(je.value("relation", std::string{}));
        if (!rel) throw GraphError("unknown relation kind in document");
        edges.push_back({je.value("src", -1), je.value("dst", -1), *rel});
    }
    return Rsg::from_parts(std::move(nodes), std::move(edges));
}

void save_graph(const Rsg& graph, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw GraphError("cannot open " + path.string() + " for writing");
    out << serialize_graph(graph);
}

Rsg load_graph(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw GraphError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_graph(buf.str());
}

}  // namespace rsg
