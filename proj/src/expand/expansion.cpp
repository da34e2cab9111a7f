#include "rsg/expansion.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

namespace rsg {

PathType PathType::extended(const PathStep& step) const {
    PathType out = *this;
    out.steps.push_back(step);
    return out;
}

std::string PathType::to_string() const {
    std::string out{rsg::to_string(origin)};
    for (const PathStep& s : steps) {
        if (s.direction == Direction::Forward) {
            out += " -";
            out += rsg::to_string(s.relation);
            out += "-> ";
        } else {
            out += " <-";
            out += rsg::to_string(s.relation);
            out += "- ";
        }
        out += rsg::to_string(s.dest_kind);
    }
    return out;
}

PathType PathType::parse(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string tok;
    if (!(in >> tok)) throw ExpansionError("empty path type");
    auto origin = parse_node_kind(tok);
    if (!origin) throw ExpansionError("bad origin kind in path type: " + tok);
    PathType out{*origin, {}};
    std::string rel_tok, kind_tok;
    while (in >> rel_tok >> kind_tok) {
        PathStep step{};
        std::string rel_name;
        if (rel_tok.starts_with("-") && rel_tok.ends_with("->")) {
            step.direction = Direction::Forward;
            rel_name = rel_tok.substr(1, rel_tok.size() - 3);
        } else if (rel_tok.starts_with("<-") && rel_tok.ends_with("-")) {
            step.direction = Direction::Reverse;
            rel_name = rel_tok.substr(2, rel_tok.size() - 3);
        } else {
            throw ExpansionError("bad step token in path type: " + rel_tok);
        }
        auto rel = parse_relation_kind(rel_name);
        auto kind = parse_node_kind(kind_tok);
        if (!rel || !kind) throw ExpansionError("bad step in path type: " + rel_tok + " " + kind_tok);
        step.relation = *rel;
        step.dest_kind = *kind;
        out.steps.push_back(step);
    }
    return out;
}

void PathTypeSet::close_under_prefixes() {
    std::map<PathType, long> closed = frequencies;
    for (const auto& [path, freq] : frequencies) {
        PathType prefix{path.origin, {}};
        auto it = closed.find(prefix);
        if (it == closed.end()) closed.emplace(prefix, freq);
        for (const PathStep& step : path.steps) {
            prefix.steps.push_back(step);
            it = closed.find(prefix);
            if (it == closed.end()) closed.emplace(prefix, freq);
        }
    }
    frequencies = std::move(closed);
}

bool ExpandedSubgraph::contains(NodeId id) const {
    return std::binary_search(expanded.begin(), expanded.end(), id);
}

std::vector<std::pair<NodeId, double>> select_anchors(const Rsg& graph,
                                                      const EmbeddingTable& table,
                                                      std::span<const double> query, int k) {
    if (table.size() != graph.node_count())
        throw ExpansionError("embedding table does not cover the graph");
    return knn_search(table, query, k);
}

namespace {

ExpandedSubgraph bounded_bfs(const Rsg& graph,
                             const std::vector<std::pair<NodeId, double>>& anchors, int max_depth,
                             int max_nodes, const PathTypeSet* patterns, BudgetScope scope) {
    if (max_depth < 0 || max_nodes < 1) throw ExpansionError("require D >= 0 and M >= 1");
    if (patterns != nullptr && patterns->frequencies.empty())
        throw ExpansionError("pattern search requires a non-empty path type set");

    ExpandedSubgraph out;
    out.anchors = anchors;
    std::set<NodeId> expanded;
    long global_count = 0;

    struct Item {
        NodeId node;
        int depth;
        PathType path;
    };

    // A is always a subset of A_exp, even when the budget truncates early.
    for (const auto& [anchor, sim] : anchors) {
        if (anchor < 0 || anchor >= static_cast<NodeId>(graph.node_count()))
            throw ExpansionError("anchor id out of range: " + std::to_string(anchor));
        expanded.insert(anchor);
        out.path_records.try_emplace(anchor, PathRecord{anchor, PathType{graph.node(anchor).kind, {}}});
    }

    for (const auto& [anchor, sim] : anchors) {
        long per_anchor_count = 0;
        long* count = scope == BudgetScope::Global ? &global_count : &per_anchor_count;
        if (*count >= max_nodes) break;
        ++*count;  // the M budget counts the anchor itself

        std::set<NodeId> visited{anchor};
        std::deque<Item> queue{{anchor, 0, PathType{graph.node(anchor).kind, {}}}};
        bool halted = false;
        while (!queue.empty() && !halted) {
            Item cur = queue.front();
            queue.pop_front();
            if (cur.depth == max_depth) continue;
            for (const NeighborRecord& nb : graph.neighbors(cur.node, nullptr, Direction::Both)) {
                if (visited.contains(nb.node)) continue;
                const PathStep step{nb.relation, nb.direction, graph.node(nb.node).kind};
                PathType next_path = cur.path.extended(step);
                if (patterns != nullptr && !patterns->contains(next_path)) continue;
                if (*count >= max_nodes) {
                    halted = true;  // budget exhausted: stop this anchor's BFS
                    break;
                }
                visited.insert(nb.node);
                ++*count;
                expanded.insert(nb.node);
                out.path_records.try_emplace(nb.node, PathRecord{anchor, next_path});
                queue.push_back({nb.node, cur.depth + 1, std::move(next_path)});
            }
        }
    }

    out.expanded.assign(expanded.begin(), expanded.end());
    for (const RsgEdge& e : graph.edges()) {
        if (expanded.contains(e.src) && expanded.contains(e.dst)) out.induced_edges.push_back(e);
    }
    return out;
}

}  // namespace

ExpandedSubgraph exhausted_expand(const Rsg& graph,
                                  const std::vector<std::pair<NodeId, double>>& anchors,
                                  int max_depth, int max_nodes, BudgetScope scope) {
    return bounded_bfs(graph, anchors, max_depth, max_nodes, nullptr, scope);
}

ExpandedSubgraph pattern_expand(const Rsg& graph,
                                const std::vector<std::pair<NodeId, double>>& anchors,
                                int max_depth, int max_nodes, const PathTypeSet& patterns,
                                BudgetScope scope) {
    return bounded_bfs(graph, anchors, max_depth, max_nodes, &patterns, scope);
}

PathTypeSet mine_path_patterns(const std::vector<MiningSample>& samples, int k, int max_depth,
                               int max_nodes, double coverage_quantile) {
    if (coverage_quantile < 0.0 || coverage_quantile > 1.0)
        throw ExpansionError("coverage quantile must lie in [0, 1]");
    std::map<PathType, long> observed;
    long total = 0;
    for (const MiningSample& s : samples) {
        if (s.gold < 0 || s.gold >= static_cast<NodeId>(s.graph->node_count()))
            throw ExpansionError("gold node missing from graph");
        auto anchors = select_anchors(*s.graph, *s.table, s.query, k);
        ExpandedSubgraph sub = exhausted_expand(*s.graph, anchors, max_depth, max_nodes);
        auto it = sub.path_records.find(s.gold);
        if (it == sub.path_records.end()) continue;
        ++observed[it->second.path];
        ++total;
    }
    if (total == 0)
        throw ExpansionError(
            "no sample reached its gold node under exhausted expansion (D/M too small?)");

    // Most frequent first; ties by symbolic form for determinism.
    std::vector<std::pair<PathType, long>> ordered(observed.begin(), observed.end());
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    PathTypeSet set;
    set.coverage_quantile = coverage_quantile;
    long cumulative = 0;
    for (const auto& [path, freq] : ordered) {
        set.frequencies.emplace(path, freq);
        cumulative += freq;
        if (static_cast<double>(cumulative) >= coverage_quantile * static_cast<double>(total))
            break;
    }
    set.close_under_prefixes();
    return set;
}

HitsCoverage measure_hits_coverage(const std::vector<ExpansionRun>& runs) {
    if (runs.empty()) throw ExpansionError("measure_hits_coverage requires at least one run");
    double hits = 0.0, coverage = 0.0;
    for (const ExpansionRun& run : runs) {
        if (run.subgraph->contains(run.gold)) hits += 1.0;
        coverage += static_cast<double>(run.subgraph->expanded.size()) /
                    static_cast<double>(run.graph_size);
    }
    return {hits / runs.size(), coverage / runs.size()};
}

void save_patterns(const PathTypeSet& set, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ExpansionError("cannot open " + path.string() + " for writing");
    out << "RSGPTS " << kPatternFormatVersion << " q=" << set.coverage_quantile << '\n';
    for (const auto& [p, freq] : set.frequencies) out << freq << '\t' << p.to_string() << '\n';
}

PathTypeSet load_patterns(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ExpansionError("cannot open " + path.string());
    std::string magic, qtok;
    int version = 0;
    in >> magic >> version >> qtok;
    if (magic != "RSGPTS" || version != kPatternFormatVersion || !qtok.starts_with("q="))
        throw ExpansionError("not a path type set file (or unsupported version): " + path.string());
    PathTypeSet set;
    set.coverage_quantile = std::stod(qtok.substr(2));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw ExpansionError("malformed pattern line: " + line);
        long freq = std::stol(line.substr(0, tab));
        if (freq <= 0) throw ExpansionError("non-positive frequency in pattern file");
        set.frequencies.emplace(PathType::parse(line.substr(tab + 1)), freq);
    }
    if (set.frequencies.empty()) throw ExpansionError("empty path type set in " + path.string());
    return set;
}

}  // namespace rsg
