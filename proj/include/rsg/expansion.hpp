#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsg/embedding.hpp"
#include "rsg/graph.hpp"

namespace rsg {

class ExpansionError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kPatternFormatVersion = 1;

enum class Strategy { Exhausted, Pattern, Knn };
enum class BudgetScope { PerAnchor, Global };

struct PathStep {
    RelationKind relation;
    Direction direction;  // Forward or Reverse
    NodeKind dest_kind;
    auto operator<=>(const PathStep&) const = default;
};

// Alternating node-kind/relation signature of a BFS exploration path,
// e.g. Class <-Encloses- Script -Imports-> Function. Zero steps means the
// node is the anchor itself.
struct PathType {
    NodeKind origin;
    std::vector<PathStep> steps;
    auto operator<=>(const PathType&) const = default;

    PathType extended(const PathStep& step) const;
    std::string to_string() const;
    static PathType parse(std::string_view text);
};

struct PathTypeSet {
    std::map<PathType, long> frequencies;
    double coverage_quantile = 0.9;

    bool contains(const PathType& p) const { return frequencies.contains(p); }
    // Adds every proper prefix of each retained path (BFS cannot otherwise
    // reach the tail of a retained path through a pruned prefix).
    void close_under_prefixes();
    std::size_t size() const { return frequencies.size(); }
};

struct ExpansionConfig {
    int anchor_count = 3;   // K
    int max_depth = 4;      // D
    int max_nodes = 1000;   // M, counts the anchor itself
    Strategy strategy = Strategy::Exhausted;
    BudgetScope budget_scope = BudgetScope::PerAnchor;
    std::optional<PathTypeSet> patterns;
};

struct PathRecord {
    NodeId anchor;
    PathType path;
    bool operator==(const PathRecord&) const = default;
};

struct ExpandedSubgraph {
    std::vector<std::pair<NodeId, double>> anchors;  // with anchor similarity
    std::vector<NodeId> expanded;                    // A_exp, ascending
    std::map<NodeId, PathRecord> path_records;       // first-visit path per node
    std::vector<RsgEdge> induced_edges;

    bool contains(NodeId id) const;
};

std::vector<std::pair<NodeId, double>> select_anchors(const Rsg& graph,
                                                      const EmbeddingTable& table,
                                                      std::span<const double> query, int k);

ExpandedSubgraph exhausted_expand(const Rsg& graph,
                                  const std::vector<std::pair<NodeId, double>>& anchors,
                                  int max_depth, int max_nodes,
                                  BudgetScope scope = BudgetScope::PerAnchor);

ExpandedSubgraph pattern_expand(const Rsg& graph,
                                const std::vector<std::pair<NodeId, double>>& anchors,
                                int max_depth, int max_nodes, const PathTypeSet& patterns,
                                BudgetScope scope = BudgetScope::PerAnchor);

struct MiningSample {
    const Rsg* graph;
    const EmbeddingTable* table;
    std::vector<double> query;
    NodeId gold;
};

// Runs anchor selection + exhausted expansion per sample, records the path
// type that first reached each reached gold, keeps the smallest most-frequent
// set with cumulative frequency >= quantile * total, closes under prefixes.
PathTypeSet mine_path_patterns(const std::vector<MiningSample>& samples, int k, int max_depth,
                               int max_nodes, double coverage_quantile);

struct HitsCoverage {
    double hit_rate = 0.0;
    double mean_coverage = 0.0;
};

struct ExpansionRun {
    const ExpandedSubgraph* subgraph;
    NodeId gold;
    std::size_t graph_size;
};

HitsCoverage measure_hits_coverage(const std::vector<ExpansionRun>& runs);

void save_patterns(const PathTypeSet& set, const std::filesystem::path& path);
PathTypeSet load_patterns(const std::filesystem::path& path);

}  // namespace rsg
