#include "rsg/graph.hpp"

#include <algorithm>
#include <set>

namespace rsg {

namespace {

constexpr std::array<std::string_view, 4> kNodeKindNames{"Function", "Method", "Class", "Script"};
constexpr std::array<std::string_view, 5> kRelationNames{"Imports", "Invokes", "Owns", "Encloses",
                                                         "Inherits"};
constexpr std::array<std::string_view, 5> kInverseLabels{"ImportedBy", "Caller", "OwnedBy",
                                                         "EnclosedBy", "InheritedBy"};

void insert_sorted(std::vector<NodeId>& v, NodeId id) {
    auto it = std::lower_bound(v.begin(), v.end(), id);
    if (it == v.end() || *it != id) v.insert(it, id);
}

}  // namespace

std::string_view to_string(NodeKind kind) { return kNodeKindNames[static_cast<int>(kind)]; }
std::string_view to_string(RelationKind relation) {
    return kRelationNames[static_cast<int>(relation)];
}
std::string_view inverse_label(RelationKind relation) {
    return kInverseLabels[static_cast<int>(relation)];
}

std::optional<NodeKind> parse_node_kind(std::string_view text) {
    for (int i = 0; i < 4; ++i)
        if (kNodeKindNames[i] == text) return static_cast<NodeKind>(i);
    return std::nullopt;
}

std::optional<RelationKind> parse_relation_kind(std::string_view text) {
    for (int i = 0; i < kRelationCount; ++i)
        if (kRelationNames[i] == text) return static_cast<RelationKind>(i);
    return std::nullopt;
}

NodeId Rsg::add_node(RsgNode node) {
    if (node.kind == NodeKind::Script) {
        if (file_index_.contains(node.file_path))
            throw GraphError("duplicate Script node for file " + node.file_path);
    }
    const NodeId id = static_cast<NodeId>(nodes_.size());
    node.id = id;
    if (node.kind == NodeKind::Script) file_index_.emplace(node.file_path, id);
    nodes_.push_back(std::move(node));
    forward_adjacency_.emplace_back();
    reverse_adjacency_.emplace_back();
    return id;
}

void Rsg::add_edge(const RsgEdge& edge) {
    if (edge.src < 0 || edge.src >= static_cast<NodeId>(nodes_.size()) || edge.dst < 0 ||
        edge.dst >= static_cast<NodeId>(nodes_.size()))
        throw GraphError("edge endpoint does not exist");
    const RsgNode& src = nodes_[edge.src];
    const RsgNode& dst = nodes_[edge.dst];
    switch (edge.relation) {
        case RelationKind::Imports:
            if (src.kind != NodeKind::Script)
                throw GraphError("Imports constraint: src must be a Script node");
            if (dst.kind == NodeKind::Method)
                throw GraphError("Imports constraint: dst must not be a Method node");
            break;
        case RelationKind::Invokes:
            if (src.kind != NodeKind::Function && src.kind != NodeKind::Method)
                throw GraphError("Invokes constraint: src must be a Function or Method");
            if (dst.kind != NodeKind::Function && dst.kind != NodeKind::Method)
                throw GraphError("Invokes constraint: dst must be a Function or Method");
            break;
        case RelationKind::Owns:
            if (src.kind != NodeKind::Class) throw GraphError("Owns constraint: src must be a Class");
            if (dst.kind != NodeKind::Method)
                throw GraphError("Owns constraint: dst must be a Method");
            break;
        case RelationKind::Encloses:
            if (src.kind != NodeKind::Script)
                throw GraphError("Encloses constraint: src must be a Script");
            if (dst.kind == NodeKind::Script)
                throw GraphError("Encloses constraint: dst must not be a Script");
            if (dst.file_path != src.file_path)
                throw GraphError("Encloses constraint: dst must be in the same file as src");
            break;
        case RelationKind::Inherits:
            if (src.kind != NodeKind::Class || dst.kind != NodeKind::Class)
                throw GraphError("Inherits constraint: both endpoints must be Class nodes");
            if (edge.src == edge.dst)
                throw GraphError("Inherits constraint: a class cannot inherit itself");
            break;
    }
    if (has_edge(edge.src, edge.dst, edge.relation)) return;
    edges_.push_back(edge);
    index_edge(edge);
}

void Rsg::index_edge(const RsgEdge& edge) {
    const int r = static_cast<int>(edge.relation);
    insert_sorted(forward_adjacency_[edge.src][r], edge.dst);
    insert_sorted(reverse_adjacency_[edge.dst][r], edge.src);
}

bool Rsg::has_edge(NodeId src, NodeId dst, RelationKind relation) const {
    if (src < 0 || src >= static_cast<NodeId>(forward_adjacency_.size())) return false;
    const auto& v = forward_adjacency_[src][static_cast<int>(relation)];
    return std::binary_search(v.begin(), v.end(), dst);
}

std::vector<NeighborRecord> Rsg::neighbors(NodeId id,
                                           const std::vector<RelationKind>* relation_filter,
                                           Direction direction) const {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
        throw GraphError("unknown node id " + std::to_string(id));
    std::array<bool, kRelationCount> wanted{};
    if (relation_filter == nullptr) {
        wanted.fill(true);
    } else {
        for (RelationKind r : *relation_filter) wanted[static_cast<int>(r)] = true;
    }
    std::vector<NeighborRecord> out;
    for (int r = 0; r < kRelationCount; ++r) {
        if (!wanted[r]) continue;
        if (direction == Direction::Forward || direction == Direction::Both) {
            for (NodeId n : forward_adjacency_[id][r])
                out.push_back({n, static_cast<RelationKind>(r), Direction::Forward});
        }
        if (direction == Direction::Reverse || direction == Direction::Both) {
            for (NodeId n : reverse_adjacency_[id][r])
                out.push_back({n, static_cast<RelationKind>(r), Direction::Reverse});
        }
    }
    return out;
}

std::vector<NodeId> Rsg::all_neighbors(NodeId id) const {
    std::set<NodeId> uniq;
    for (const NeighborRecord& rec : neighbors(id, nullptr, Direction::Both)) uniq.insert(rec.node);
    return {uniq.begin(), uniq.end()};
}

const RsgNode& Rsg::node(NodeId id) const {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
        throw GraphError("unknown node id " + std::to_string(id));
    return nodes_[id];
}

std::optional<NodeId> Rsg::script_for_file(const std::string& file_path) const {
    auto it = file_index_.find(file_path);
    if (it == file_index_.end()) return std::nullopt;
    return it->second;
}

Rsg Rsg::from_parts(std::vector<RsgNode> nodes, std::vector<RsgEdge> edges) {
    Rsg g;
    g.nodes_ = std::move(nodes);
    g.edges_ = std::move(edges);
    g.forward_adjacency_.resize(g.nodes_.size());
    g.reverse_adjacency_.resize(g.nodes_.size());
    for (std::size_t i = 0; i < g.nodes_.size(); ++i) {
        const RsgNode& n = g.nodes_[i];
        if (n.kind == NodeKind::Script && !g.file_index_.contains(n.file_path))
            g.file_index_.emplace(n.file_path, static_cast<NodeId>(i));
    }
    for (const RsgEdge& e : g.edges_) {
        if (e.src >= 0 && e.src < static_cast<NodeId>(g.nodes_.size()) && e.dst >= 0 &&
            e.dst < static_cast<NodeId>(g.nodes_.size()))
            g.index_edge(e);
    }
    return g;
}

std::vector<Violation> Rsg::validate() const {
    std::vector<Violation> out;
    auto report = [&out](std::string invariant, std::string detail) {
        out.push_back({std::move(invariant), std::move(detail)});
    };

    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const RsgNode& n = nodes_[i];
        if (n.id != static_cast<NodeId>(i))
            report("dense-node-ids", "node at index " + std::to_string(i) + " carries id " +
                                         std::to_string(n.id));
        if (n.span.start_line > n.span.end_line)
            report("span-order", "node " + std::to_string(i) + " has start_line > end_line");
        if ((n.kind == NodeKind::Function || n.kind == NodeKind::Method) && n.signature.empty())
            report("signature-presence", "node " + std::to_string(i) + " (" +
                                             std::string(to_string(n.kind)) +
                                             ") has an empty signature");
    }

    std::unordered_map<std::string, int> qnames;
    std::unordered_map<std::string, int> script_files;
    for (const RsgNode& n : nodes_) {
        if (++qnames[n.qualified_name] == 2)
            report("qualified-name-unique", "duplicate qualified_name " + n.qualified_name);
        if (n.kind == NodeKind::Script && ++script_files[n.file_path] == 2)
            report("one-script-per-file", "duplicate Script node for file " + n.file_path);
    }

    std::set<std::tuple<NodeId, NodeId, int>> triples;
    const NodeId n_nodes = static_cast<NodeId>(nodes_.size());
    for (std::size_t i = 0; i < edges_.size(); ++i) {
        const RsgEdge& e = edges_[i];
        const std::string tag = "edge " + std::to_string(i);
        if (e.src < 0 || e.src >= n_nodes || e.dst < 0 || e.dst >= n_nodes) {
            report("edge-endpoints-exist", tag + " references a missing node");
            continue;
        }
        if (!triples.insert({e.src, e.dst, static_cast<int>(e.relation)}).second)
            report("no-duplicate-edges", tag + " duplicates (" + std::to_string(e.src) + "," +
                                             std::to_string(e.dst) + "," +
                                             std::string(to_string(e.relation)) + ")");
        const RsgNode& src = nodes_[e.src];
        const RsgNode& dst = nodes_[e.dst];
        switch (e.relation) {
            case RelationKind::Imports:
                if (src.kind != NodeKind::Script)
                    report("imports-src-script", tag + ": src is not a Script");
                if (dst.kind == NodeKind::Method)
                    report("imports-dst-kind", tag + ": dst is a Method");
                break;
            case RelationKind::Invokes:
                if ((src.kind != NodeKind::Function && src.kind != NodeKind::Method) ||
                    (dst.kind != NodeKind::Function && dst.kind != NodeKind::Method))
                    report("invokes-endpoint-kind", tag + ": endpoints must be Function/Method");
                break;
            case RelationKind::Owns:
                if (src.kind != NodeKind::Class || dst.kind != NodeKind::Method)
                    report("owns-endpoint-kind", tag + ": must be Class -> Method");
                break;
            case RelationKind::Encloses:
                if (src.kind != NodeKind::Script || dst.kind == NodeKind::Script)
                    report("encloses-endpoint-kind", tag + ": must be Script -> non-Script");
                else if (dst.file_path != src.file_path)
                    report("encloses-same-file", tag + ": dst lives in a different file");
                break;
            case RelationKind::Inherits:
                if (src.kind != NodeKind::Class || dst.kind != NodeKind::Class)
                    report("inherits-endpoint-kind", tag + ": must be Class -> Class");
                if (e.src == e.dst) report("inherits-no-self", tag + ": self inheritance");
                break;
        }
    }

    // Containment: every non-Script node has exactly one inbound Encloses,
    // every Method exactly one inbound Owns.
    std::vector<int> encloses_in(nodes_.size(), 0), owns_in(nodes_.size(), 0);
    for (const RsgEdge& e : edges_) {
        if (e.dst < 0 || e.dst >= n_nodes) continue;
        if (e.relation == RelationKind::Encloses) ++encloses_in[e.dst];
        if (e.relation == RelationKind::Owns) ++owns_in[e.dst];
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].kind != NodeKind::Script && encloses_in[i] != 1)
            report("encloses-exactly-one",
                   "node " + std::to_string(i) + " (" + nodes_[i].qualified_name + ") has " +
                       std::to_string(encloses_in[i]) + " inbound Encloses edges");
        if (nodes_[i].kind == NodeKind::Method && owns_in[i] != 1)
            report("method-owned-once", "method " + std::to_string(i) + " (" +
                                            nodes_[i].qualified_name + ") has " +
                                            std::to_string(owns_in[i]) + " inbound Owns edges");
    }

    // Inherits acyclicity (iterative DFS with explicit frames; reports one cycle).
    {
        std::vector<int> color(nodes_.size(), 0);  // 0 white, 1 gray, 2 black
        struct Frame {
            NodeId node;
            std::size_t next_child;
        };
        bool reported = false;
        for (NodeId start = 0; start < n_nodes && !reported; ++start) {
            if (color[start] != 0) continue;
            std::vector<Frame> frames{{start, 0}};
            color[start] = 1;
            while (!frames.empty() && !reported) {
                Frame& f = frames.back();
                const auto& children =
                    forward_adjacency_[f.node][static_cast<int>(RelationKind::Inherits)];
                if (f.next_child < children.size()) {
                    NodeId w = children[f.next_child++];
                    if (color[w] == 1) {
                        std::string cycle;
                        bool in_cycle = false;
                        for (const Frame& fr : frames) {
                            if (fr.node == w) in_cycle = true;
                            if (in_cycle) cycle += std::to_string(fr.node) + " -> ";
                        }
                        cycle += std::to_string(w);
                        report("inherits-acyclic", "Inherits cycle: " + cycle);
                        reported = true;
                    } else if (color[w] == 0) {
                        color[w] = 1;
                        frames.push_back({w, 0});
                    }
                } else {
                    color[f.node] = 2;
                    frames.pop_back();
                }
            }
        }
    }

    return out;
}

}  // namespace rsg
