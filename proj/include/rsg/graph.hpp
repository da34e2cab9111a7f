#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rsg {

using NodeId = std::int32_t;

enum class NodeKind : int { Function = 0, Method = 1, Class = 2, Script = 3 };
enum class RelationKind : int { Imports = 0, Invokes = 1, Owns = 2, Encloses = 3, Inherits = 4 };
enum class Direction : int { Forward = 0, Reverse = 1, Both = 2 };

inline constexpr int kRelationCount = 5;

std::string_view to_string(NodeKind kind);
std::string_view to_string(RelationKind relation);
// Traversal-view label of the inverse relation ("ImportedBy", "Caller", ...).
std::string_view inverse_label(RelationKind relation);
std::optional<NodeKind> parse_node_kind(std::string_view text);
std::optional<RelationKind> parse_relation_kind(std::string_view text);

struct Span {
    int start_line = 1;  // 1-based, inclusive
    int end_line = 1;
    bool operator==(const Span&) const = default;
};

struct RsgNode {
    NodeId id = -1;
    NodeKind kind = NodeKind::Function;
    std::string name;
    std::string qualified_name;
    std::string file_path;  // repo-relative, forward slashes
    Span span;
    std::string source_text;
    std::string signature;  // Function/Method only, empty otherwise
    bool operator==(const RsgNode&) const = default;
};

struct RsgEdge {
    NodeId src = -1;
    NodeId dst = -1;
    RelationKind relation = RelationKind::Imports;
    bool operator==(const RsgEdge&) const = default;
};

struct NeighborRecord {
    NodeId node;
    RelationKind relation;
    Direction direction;  // Forward or Reverse
    bool operator==(const NeighborRecord&) const = default;
};

struct Violation {
    std::string invariant;
    std::string detail;
};

class GraphError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Repo-level semantic graph: typed code entities plus five relation families.
// Mutable while being assembled by a single writer; all query methods are
// const and safe for concurrent readers once construction is done.
class Rsg {
  public:
    Rsg() = default;

    // Appends a node with the next dense id and returns it.
    // Throws GraphError on a duplicate Script node for a file.
    NodeId add_node(RsgNode node);

    // Stores a forward edge and updates both adjacency directions.
    // Duplicate (src, dst, relation) triples are ignored. Throws GraphError
    // when a kind constraint is violated or an endpoint does not exist.
    void add_edge(const RsgEdge& edge);

    // Neighbors of a node, optionally restricted to a relation set, in
    // deterministic (relation ordinal, direction, node id) order.
    std::vector<NeighborRecord> neighbors(NodeId id,
                                          const std::vector<RelationKind>* relation_filter,
                                          Direction direction) const;

    // Unique neighbor ids over all relations, both directions, ascending.
    std::vector<NodeId> all_neighbors(NodeId id) const;

    const RsgNode& node(NodeId id) const;
    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return edges_.size(); }
    const std::vector<RsgNode>& nodes() const { return nodes_; }
    const std::vector<RsgEdge>& edges() const { return edges_; }
    bool has_edge(NodeId src, NodeId dst, RelationKind relation) const;

    std::optional<NodeId> script_for_file(const std::string& file_path) const;
    const std::unordered_map<std::string, NodeId>& file_index() const { return file_index_; }

    // Checks every structural invariant; violations are data, not failures.
    std::vector<Violation> validate() const;

    // Rebuilds a graph from raw parts without enforcing edge constraints,
    // so that hand-corrupted serialized graphs can be loaded and validated.
    static Rsg from_parts(std::vector<RsgNode> nodes, std::vector<RsgEdge> edges);

  private:
    void index_edge(const RsgEdge& edge);

    std::vector<RsgNode> nodes_;
    std::vector<RsgEdge> edges_;
    // adjacency[node][relation] -> sorted neighbor ids
    std::vector<std::array<std::vector<NodeId>, kRelationCount>> forward_adjacency_;
    std::vector<std::array<std::vector<NodeId>, kRelationCount>> reverse_adjacency_;
    std::unordered_map<std::string, NodeId> file_index_;
};

}  // namespace rsg
