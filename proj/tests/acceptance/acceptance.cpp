// Acceptance suite: one self-contained check per release criterion, each
// printing a single PASS/FAIL line. The process exits nonzero if any
// criterion fails. Oracles here are independent re-derivations (explicit
// loops, brute-force selection, hand-traced inventories), not calls back
// into the code under test.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rsg/builder.hpp"
#include "rsg/embedding.hpp"
#include "rsg/expansion.hpp"
#include "rsg/gnn.hpp"
#include "rsg/graph.hpp"
#include "rsg/graph_io.hpp"
#include "rsg/kernels.hpp"
#include "rsg/pipeline.hpp"

#include "../support/random_graph.hpp"
#include "../support/synthetic.hpp"

namespace fs = std::filesystem;
using namespace rsg;
using namespace rsg::testsupport;

namespace {

int g_failures = 0;

struct Check {
    bool ok = true;
    std::string detail;
    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

void criterion(int number, const std::string& name, double limit_seconds,
               const std::function<void(Check&)>& body) {
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
        body(check);
    } catch (const std::exception& e) {
        check.require(false, std::string("exception: ") + e.what());
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    check.require(elapsed <= limit_seconds,
                  "time limit exceeded: " + std::to_string(elapsed) + "s > " +
                      std::to_string(limit_seconds) + "s");
    char line[256];
    std::snprintf(line, sizeof line, "%s  %d %s (%.2fs)%s%s", check.ok ? "PASS" : "FAIL",
                  number, name.c_str(), elapsed, check.ok ? "" : " -- ",
                  check.ok ? "" : check.detail.c_str());
    std::cout << line << "\n";
    if (!check.ok) ++g_failures;
}

fs::path tests_dir() {
    if (const char* env = std::getenv("RSG_TEST_DATA")) return env;
    return fs::path(__FILE__).parent_path().parent_path();
}

fs::path cli_path() {
    if (const char* env = std::getenv("RSG_CLI")) return env;
    // tests/<binary> and tools/rsg share the build directory
    return fs::read_symlink("/proc/self/exe").parent_path().parent_path() / "tools" / "rsg";
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

int run_cmd(const std::string& command) { return std::system(command.c_str()); }

fs::path fresh_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("rsg-accept-" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// --------------------------------------------------------------------------
// 1. Graph fidelity on the hand-traced fixture repository.
void criterion_graph_fidelity(Check& c) {
    const fs::path repo = tests_dir() / "fixtures" / "repo_alpha";
    BuildResult result = build_rsg(repo);
    const Rsg& g = result.graph;

    static const std::vector<std::pair<NodeKind, std::string>> expected_nodes = {
        {NodeKind::Script, "app"},
        {NodeKind::Script, "app.cli"},
        {NodeKind::Function, "app.cli.main"},
        {NodeKind::Script, "app.engine"},
        {NodeKind::Function, "app.engine.run"},
        {NodeKind::Function, "app.engine.make_board"},
        {NodeKind::Script, "app.models"},
        {NodeKind::Class, "app.models.Board"},
        {NodeKind::Method, "app.models.Board.__init__"},
        {NodeKind::Script, "geometry"},
        {NodeKind::Script, "geometry.circle"},
        {NodeKind::Class, "geometry.circle.Circle"},
        {NodeKind::Method, "geometry.circle.Circle.area"},
        {NodeKind::Script, "geometry.shapes"},
        {NodeKind::Class, "geometry.shapes.Shape"},
        {NodeKind::Method, "geometry.shapes.Shape.area"},
        {NodeKind::Method, "geometry.shapes.Shape.describe"},
        {NodeKind::Class, "geometry.shapes.Polygon"},
        {NodeKind::Method, "geometry.shapes.Polygon.__init__"},
        {NodeKind::Method, "geometry.shapes.Polygon.perimeter"},
        {NodeKind::Class, "geometry.shapes.Square"},
        {NodeKind::Method, "geometry.shapes.Square.area"},
        {NodeKind::Method, "geometry.shapes.Square.perimeter"},
        {NodeKind::Script, "main"},
        {NodeKind::Script, "util"},
        {NodeKind::Script, "util.format"},
        {NodeKind::Function, "util.format.label"},
        {NodeKind::Script, "util.text"},
        {NodeKind::Function, "util.text.slugify"},
        {NodeKind::Function, "util.text.banner"},
        {NodeKind::Script, "util.validate"},
        {NodeKind::Function, "util.validate.check"},
    };
    c.require(g.node_count() == expected_nodes.size(), "node count != 32");
    if (!c.ok) return;
    for (std::size_t i = 0; i < expected_nodes.size(); ++i) {
        const RsgNode& n = g.node(static_cast<NodeId>(i));
        c.require(n.kind == expected_nodes[i].first &&
                      n.qualified_name == expected_nodes[i].second,
                  "node " + std::to_string(i) + " mismatch: " + n.qualified_name);
    }

    const RelationKind En = RelationKind::Encloses, Ow = RelationKind::Owns,
                       Im = RelationKind::Imports, Ih = RelationKind::Inherits,
                       Iv = RelationKind::Invokes;
    static const std::vector<RsgEdge> expected_edges = {
        {1, 2, En},   {3, 4, En},   {3, 5, En},   {6, 7, En},   {6, 8, En},   {10, 11, En},
        {10, 12, En}, {13, 14, En}, {13, 15, En}, {13, 16, En}, {13, 17, En}, {13, 18, En},
        {13, 19, En}, {13, 20, En}, {13, 21, En}, {13, 22, En}, {25, 26, En}, {27, 28, En},
        {27, 29, En}, {30, 31, En}, {7, 8, Ow},   {11, 12, Ow}, {14, 15, Ow}, {14, 16, Ow},
        {17, 18, Ow}, {17, 19, Ow}, {20, 21, Ow}, {20, 22, Ow}, {1, 4, Im},   {1, 5, Im},
        {3, 25, Im},  {3, 7, Im},   {6, 20, Im},  {9, 20, Im},  {9, 11, Im},  {10, 14, Im},
        {23, 2, Im},  {24, 29, Im}, {25, 28, Im}, {30, 28, Im}, {30, 29, Im}, {11, 14, Ih},
        {17, 14, Ih}, {20, 17, Ih}, {2, 5, Iv},   {2, 4, Iv},   {4, 26, Iv},  {16, 15, Iv},
        {26, 28, Iv}, {31, 28, Iv}, {31, 29, Iv},
    };
    auto key = [](const RsgEdge& e) {
        return std::tuple{static_cast<int>(e.relation), e.src, e.dst};
    };
    std::vector<RsgEdge> got = g.edges(), want = expected_edges;
    auto by_key = [&](const RsgEdge& a, const RsgEdge& b) { return key(a) < key(b); };
    std::sort(got.begin(), got.end(), by_key);
    std::sort(want.begin(), want.end(), by_key);
    c.require(got == want, "edge inventory mismatch (got " + std::to_string(got.size()) +
                               " edges, want " + std::to_string(want.size()) + ")");

    c.require(g.validate().empty(), "structural invariants violated");

    const std::string once = serialize_graph(g);
    const std::string twice = serialize_graph(build_rsg(repo).graph);
    c.require(once == twice, "rebuild is not byte-identical");
}

// --------------------------------------------------------------------------
// 2. Exact kNN against a brute-force oracle, zero tolerance.
void criterion_knn_oracle(Check& c) {
    std::mt19937_64 rng(2024);
    const int ks[] = {1, 3, 5, 10};
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 10 + static_cast<int>(rng() % 491);
        const int d = 16 << (rng() % 3);  // 16, 32, 64
        EmbeddingTable table;
        table.dimension = d;
        table.provenance = "oracle";
        for (int i = 0; i < n; ++i) table.entries.push_back(random_unit(rng, d));
        const auto query = random_unit(rng, d);
        const int k = ks[rng() % 4];

        // oracle: full similarity scan + total sort, no partial selection
        std::vector<std::pair<NodeId, double>> all;
        for (int i = 0; i < n; ++i)
            all.push_back({i, kernels::dot(table.entries[i].data(), query.data(), d)});
        std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        all.resize(std::min<std::size_t>(k, all.size()));

        const auto got = knn_search(table, query, k);
        c.require(got == all, "trial " + std::to_string(trial) + ": kNN deviates from oracle");
        if (!c.ok) return;
    }
}

// --------------------------------------------------------------------------
// 3. Expansion invariants over random graphs.
void criterion_expansion_invariants(Check& c) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const Rsg g = random_graph(rng, 4 + static_cast<int>(rng() % 7),
                                   3 + static_cast<int>(rng() % 4));
        const int n = static_cast<int>(g.node_count());
        std::vector<std::pair<NodeId, double>> anchors;
        std::set<NodeId> chosen;
        const int k = 1 + static_cast<int>(rng() % 3);
        while (static_cast<int>(chosen.size()) < std::min(k, n))
            chosen.insert(static_cast<NodeId>(rng() % n));
        for (NodeId a : chosen) anchors.push_back({a, 1.0});

        const int depth = 1 + static_cast<int>(rng() % 4);
        const int budget = 2 + static_cast<int>(rng() % 30);
        const auto sub = exhausted_expand(g, anchors, depth, budget);

        c.require(std::is_sorted(sub.expanded.begin(), sub.expanded.end()),
                  "expanded ids not ascending");
        c.require(sub.expanded.size() <= static_cast<std::size_t>(budget) * anchors.size(),
                  "per-anchor budget exceeded");
        for (const auto& [a, sim] : anchors)
            c.require(sub.contains(a), "anchor missing from expansion");
        for (const auto& [node, record] : sub.path_records)
            c.require(static_cast<int>(record.path.steps.size()) <= depth,
                      "path longer than depth bound");

        // anchors stay in the result even when the global budget truncates
        // early, so the bound is M plus the uncounted anchors
        const auto global = exhausted_expand(g, anchors, depth, budget, BudgetScope::Global);
        c.require(global.expanded.size() <= static_cast<std::size_t>(budget) + anchors.size(),
                  "global budget exceeded");
        c.require(std::includes(sub.expanded.begin(), sub.expanded.end(),
                                global.expanded.begin(), global.expanded.end()),
                  "global-scope result escaped the per-anchor result");

        // with room in the budget, a filter holding every observed path type
        // must change nothing (under truncation the two searches may spend
        // the budget on different branches)
        const auto roomy = exhausted_expand(g, anchors, depth, n + 1);
        PathTypeSet vacuous;
        vacuous.coverage_quantile = 1.0;
        for (const auto& [node, record] : roomy.path_records)
            ++vacuous.frequencies[record.path];
        vacuous.close_under_prefixes();
        const auto filtered = pattern_expand(g, anchors, depth, n + 1, vacuous);
        c.require(filtered.expanded == roomy.expanded, "vacuous pattern filter changed result");

        // any pattern expansion stays inside the exhausted one
        PathTypeSet partial;
        partial.coverage_quantile = 1.0;
        for (const auto& [node, record] : roomy.path_records)
            if (rng() % 2 == 0) ++partial.frequencies[record.path];
        if (!partial.frequencies.empty()) {
            partial.close_under_prefixes();
            const auto pruned = pattern_expand(g, anchors, depth, n + 1, partial);
            c.require(std::includes(roomy.expanded.begin(), roomy.expanded.end(),
                                    pruned.expanded.begin(), pruned.expanded.end()),
                      "pattern expansion escaped the exhausted set");
        }

        // deeper searches only grow, given room in the budget
        const auto shallow = exhausted_expand(g, anchors, depth, n + 1);
        const auto deeper = exhausted_expand(g, anchors, depth + 1, n + 1);
        c.require(std::includes(deeper.expanded.begin(), deeper.expanded.end(),
                                shallow.expanded.begin(), shallow.expanded.end()),
                  "depth monotonicity violated");
        if (!c.ok) return;
    }
}

// --------------------------------------------------------------------------
// 4. Pattern search keeps the hit rate of exhausted search at a fraction of
//    the coverage, on a corpus where gold always sits on one planted path.
void criterion_planted_patterns(Check& c) {
    std::mt19937_64 rng(99);
    const int mining_queries = 50, eval_queries = 200;
    const PlantedCorpus corpus = make_planted_corpus(rng, mining_queries + eval_queries);

    const auto samples = mining_samples(corpus, 0, mining_queries);
    const PathTypeSet patterns = mine_path_patterns(samples, 3, 4, 1000, 0.9);
    c.require(!patterns.frequencies.empty(), "no patterns mined");

    std::vector<ExpandedSubgraph> exhausted_subs, pattern_subs;
    exhausted_subs.reserve(eval_queries);
    pattern_subs.reserve(eval_queries);
    std::vector<ExpansionRun> exhausted_runs, pattern_runs;
    for (int i = mining_queries; i < mining_queries + eval_queries; ++i) {
        const auto anchors = select_anchors(corpus.graph, corpus.table, corpus.queries[i], 3);
        exhausted_subs.push_back(exhausted_expand(corpus.graph, anchors, 4, 1000));
        pattern_subs.push_back(pattern_expand(corpus.graph, anchors, 4, 1000, patterns));
        exhausted_runs.push_back(
            {&exhausted_subs.back(), corpus.golds[i], corpus.graph.node_count()});
        pattern_runs.push_back(
            {&pattern_subs.back(), corpus.golds[i], corpus.graph.node_count()});
    }
    const HitsCoverage exhausted = measure_hits_coverage(exhausted_runs);
    const HitsCoverage pattern = measure_hits_coverage(pattern_runs);

    c.require(std::abs(exhausted.hit_rate - pattern.hit_rate) <= 0.05,
              "hit rates differ by more than 5 points (exhausted " +
                  std::to_string(exhausted.hit_rate) + ", pattern " +
                  std::to_string(pattern.hit_rate) + ")");
    c.require(pattern.mean_coverage <= 0.8 * exhausted.mean_coverage,
              "pattern coverage not at least 20% below exhausted (exhausted " +
                  std::to_string(exhausted.mean_coverage) + ", pattern " +
                  std::to_string(pattern.mean_coverage) + ")");
}

// --------------------------------------------------------------------------
// 5. Message-passing numerics: dense forward oracle and finite-difference
//    gradients.
namespace dense {

std::vector<std::vector<NodeId>> adjacency(const Rsg& g, const QueryNode& query) {
    const NodeId qid = static_cast<NodeId>(g.node_count());
    std::vector<std::set<NodeId>> nbrs(g.node_count() + 1);
    for (const RsgEdge& e : g.edges()) {
        nbrs[e.src].insert(e.dst);
        nbrs[e.dst].insert(e.src);
    }
    for (const auto& [relation, node] : query.known_edges) {
        nbrs[qid].insert(node);
        nbrs[node].insert(qid);
    }
    std::vector<std::vector<NodeId>> out(nbrs.size());
    for (std::size_t i = 0; i < nbrs.size(); ++i) out[i].assign(nbrs[i].begin(), nbrs[i].end());
    return out;
}

std::vector<std::vector<double>> forward(const GnnModel& model, const Rsg& g,
                                         const EmbeddingTable& table, const QueryNode& query) {
    const auto nbrs = adjacency(g, query);
    std::vector<std::vector<double>> z(table.entries.begin(), table.entries.end());
    z.push_back(query.embedding);
    for (int layer = 0; layer < model.layer_count(); ++layer) {
        const Matrix& ws = model.self_weights[layer];
        const Matrix& wn = model.nbr_weights[layer];
        std::vector<std::vector<double>> next(z.size(), std::vector<double>(ws.cols, 0.0));
        for (std::size_t v = 0; v < z.size(); ++v) {
            std::vector<double> mean(ws.rows, 0.0);
            if (!nbrs[v].empty()) {
                for (NodeId u : nbrs[v])
                    for (int i = 0; i < ws.rows; ++i) mean[i] += z[u][i];
                for (double& m : mean) m /= static_cast<double>(nbrs[v].size());
            }
            for (int j = 0; j < ws.cols; ++j) {
                double acc = 0.0;
                for (int i = 0; i < ws.rows; ++i)
                    acc += ws.at(i, j) * z[v][i] + wn.at(i, j) * mean[i];
                if (layer + 1 < model.layer_count() && acc < 0.0) acc = 0.0;
                next[v][j] = acc;
            }
        }
        z = std::move(next);
    }
    return z;
}

}  // namespace dense

void criterion_gnn_numerics(Check& c) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const Rsg g = random_graph(rng, 2, 3);  // stays well under 20 nodes
        const int d = 8;
        EmbeddingTable table;
        table.dimension = d;
        table.provenance = "oracle";
        for (std::size_t i = 0; i < g.node_count(); ++i)
            table.entries.push_back(random_unit(rng, d));
        QueryNode query;
        query.text = "q";
        query.embedding = random_unit(rng, d);
        query.known_edges.push_back(
            {RelationKind::Encloses, static_cast<NodeId>(rng() % g.node_count())});

        const GnnModel model = init_model(d, 3, rng());
        const auto aug = attach_query(g, query);
        const auto got = gnn_forward(model, aug, table);
        const auto want = dense::forward(model, g, table, query);
        c.require(got.size() == want.size(), "forward output size mismatch");
        double max_diff = 0.0;
        for (std::size_t v = 0; v < want.size(); ++v)
            for (std::size_t j = 0; j < want[v].size(); ++j)
                max_diff = std::max(max_diff, std::abs(got[v][j] - want[v][j]));
        c.require(max_diff <= 1e-9,
                  "forward deviates from dense oracle by " + std::to_string(max_diff));
        if (!c.ok) return;
    }

    // finite differences on the full loss, probing every tensor
    int probes = 0;
    for (int draw = 0; draw < 20; ++draw) {
        const Rsg g = random_graph(rng, 2, 3);
        const int d = 6;
        EmbeddingTable table;
        table.dimension = d;
        table.provenance = "oracle";
        for (std::size_t i = 0; i < g.node_count(); ++i)
            table.entries.push_back(random_unit(rng, d));

        TrainSample sample;
        sample.id = "fd";
        sample.graph = &g;
        sample.table = &table;
        sample.query.text = "q";
        sample.query.embedding = random_unit(rng, d);
        sample.query.known_edges.push_back(
            {RelationKind::Encloses, static_cast<NodeId>(rng() % g.node_count())});
        sample.gold = static_cast<NodeId>(rng() % g.node_count());
        for (int i = 0; i < 4; ++i)
            sample.candidates.push_back(static_cast<NodeId>(rng() % g.node_count()));
        if (std::find(sample.candidates.begin(), sample.candidates.end(), sample.gold) ==
            sample.candidates.end())
            sample.candidates.push_back(sample.gold);

        GnnModel model = init_model(d, 2, rng());
        const GnnGradients grads = compute_gradients(model, sample);

        const double h = 1e-5;
        auto probe = [&](double* param, double analytic) {
            const double saved = *param;
            *param = saved + h;
            const double up = sample_loss(model, sample);
            *param = saved - h;
            const double down = sample_loss(model, sample);
            *param = saved;
            const double fd = (up - down) / (2.0 * h);
            const double scale = std::max({std::abs(fd), std::abs(analytic), 1e-6});
            c.require(std::abs(fd - analytic) / scale <= 1e-4,
                      "gradient check failed: fd " + std::to_string(fd) + " vs analytic " +
                          std::to_string(analytic));
            ++probes;
        };
        for (int layer = 0; layer < model.layer_count(); ++layer) {
            for (int rep = 0; rep < 2; ++rep) {
                const std::size_t i = rng() % model.self_weights[layer].data.size();
                probe(&model.self_weights[layer].data[i], grads.self_weights[layer].data[i]);
                const std::size_t j = rng() % model.nbr_weights[layer].data.size();
                probe(&model.nbr_weights[layer].data[j], grads.nbr_weights[layer].data[j]);
            }
        }
        const std::size_t s = rng() % model.scoring.size();
        probe(&model.scoring[s], grads.scoring[s]);
        if (!c.ok) return;
    }
    c.require(probes >= 100, "fewer than 100 gradient probes");
}

// --------------------------------------------------------------------------
// 6. The trained predictor must exploit link structure that cosine
//    similarity cannot see.
void criterion_learning_efficacy(Check& c) {
    std::mt19937_64 rng(1234);
    const LinkCorpus corpus = make_link_corpus(rng, 100, 100);

    GnnModel model = init_model(corpus.table.dimension, 3, /*seed=*/5);
    TrainConfig config;
    config.seed = 5;
    train_model(model, corpus.train, config);

    int gnn_hits = 0, cosine_hits = 0;
    for (const TrainSample& sample : corpus.held_out) {
        const auto aug = attach_query(*sample.graph, sample.query);
        const auto z = gnn_forward(model, aug, corpus.table);
        const auto ranked = score_candidates(model, z, sample.candidates, aug.query_id());
        if (ranked.entries.front().node == sample.gold) ++gnn_hits;
        const auto cos =
            cosine_rerank(sample.query.embedding, sample.candidates, corpus.table);
        if (cos.entries.front().node == sample.gold) ++cosine_hits;
    }
    const double gnn_acc = gnn_hits / 100.0, cosine_acc = cosine_hits / 100.0;
    c.require(gnn_acc >= 0.90,
              "trained predictor acc@1 " + std::to_string(gnn_acc) + " < 0.90");
    c.require(cosine_acc <= 0.60,
              "cosine baseline acc@1 " + std::to_string(cosine_acc) + " > 0.60");
}

// --------------------------------------------------------------------------
// 7. End-to-end command-line run is byte-for-byte deterministic.
void criterion_cli_determinism(Check& c) {
    const fs::path cli = cli_path();
    c.require(fs::exists(cli), "cli binary not found at " + cli.string());
    if (!c.ok) return;
    const fs::path repo = tests_dir() / "fixtures" / "repo_alpha";

    auto run_pipeline = [&](const fs::path& dir) -> std::vector<std::string> {
        auto sh = [&](const std::string& args, const std::string& out) {
            const std::string cmd = cli.string() + " " + args + " > " + (dir / out).string() +
                                    " 2>&1";
            c.require(run_cmd(cmd) == 0, "command failed: " + cmd);
        };
        const std::string g = (dir / "graph.rsg").string();
        const std::string e = (dir / "emb.tbl").string();
        sh("index " + repo.string() + " -o " + g + " --diagnostics " +
               (dir / "diag.jsonl").string(),
           "index.out");
        sh("embed " + g + " -d 32 -o " + e, "embed.out");

        std::vector<EvalRecord> records(3);
        records[0].id = "r0";
        records[0].query_text = "def label(value):\n    return slugify(value)";
        records[0].query_file = "util/format.py";
        records[0].gold_node = 28;  // util.text.slugify
        records[1].id = "r1";
        records[1].query_text = "def run(width):\n    fmt.label('board')";
        records[1].query_file = "app/engine.py";
        records[1].gold_node = 26;  // util.format.label
        records[2].id = "r2";
        records[2].query_text = "def check(value):\n    slugify(value)\n    banner(value)";
        records[2].query_file = "util/validate.py";
        records[2].gold_node = 29;  // util.text.banner
        for (EvalRecord& r : records) r.gold_next_line = "return value";
        save_records(records, dir / "train.jsonl");

        const std::string rec = (dir / "train.jsonl").string();
        sh("mine-patterns " + rec + " --graph " + g + " --emb " + e + " -o " +
               (dir / "pat.pts").string(),
           "mine.out");
        sh("train " + rec + " --graph " + g + " --emb " + e + " --seed 7 -o " +
               (dir / "model.gnn").string(),
           "train.out");

        std::ofstream(dir / "query.py") << records[0].query_text;
        sh("retrieve " + (dir / "query.py").string() + " --graph " + g + " --emb " + e +
               " --model " + (dir / "model.gnn").string() + " --query-path util/format.py" +
               " --top 3",
           "retrieve.out");
        sh("eval --task retrieval " + rec + " --graph " + g + " --emb " + e + " --model " +
               (dir / "model.gnn").string(),
           "eval_retrieval.out");
        sh("eval --task completion " + rec + " --graph " + g + " --emb " + e + " --top 3 " +
               "--budget 2000",
           "eval_completion.out");

        std::vector<std::string> contents;
        for (const char* name :
             {"graph.rsg", "diag.jsonl", "emb.tbl", "pat.pts", "model.gnn", "index.out",
              "embed.out", "mine.out", "train.out", "retrieve.out", "eval_retrieval.out",
              "eval_completion.out"})
            contents.push_back(read_file(dir / name));
        return contents;
    };

    const auto first = run_pipeline(fresh_dir("run1"));
    const auto second = run_pipeline(fresh_dir("run2"));
    if (!c.ok) return;
    c.require(first == second, "pipeline outputs differ between identical runs");
    // the retrieval metrics must be real output, not empty files
    c.require(first[10].find("acc@1") != std::string::npos, "retrieval metrics missing");
    c.require(first[11].find("em") != std::string::npos, "completion metric missing");
}

// --------------------------------------------------------------------------
// 8. Metric correctness.
void criterion_metrics(Check& c) {
    std::mt19937_64 rng(55);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<EvalRecord> records(20);
        int within[11] = {0};
        for (EvalRecord& r : records) {
            r.gold_node = static_cast<NodeId>(rng() % 10);
            for (int i = 0; i < 10; ++i) r.ranked.push_back(i);
            std::shuffle(r.ranked.begin(), r.ranked.end(), rng);
            const int rank = static_cast<int>(std::find(r.ranked.begin(), r.ranked.end(),
                                                        r.gold_node) -
                                              r.ranked.begin());
            for (int k = rank + 1; k <= 10; ++k) ++within[k];
        }
        double previous = -1.0;
        for (int k = 1; k <= 10; ++k) {
            const double got = metric_acc_at_k(records, k);
            const double want = 100.0 * within[k] / static_cast<double>(records.size());
            c.require(std::abs(got - want) < 1e-12, "acc@k mismatch at k=" + std::to_string(k));
            c.require(got >= previous, "acc@k not monotone in k");
            previous = got;
        }
        if (!c.ok) return;
    }

    const std::vector<std::pair<std::pair<std::string, std::string>, bool>> exact_match_table =
        {
            {{"return x + 1", "return x + 1"}, true},
            {{"  return x + 1  ", "return x + 1"}, true},
            {{"return  x  +  1", "return x + 1"}, true},
            {{"\treturn\tx + 1", "return x + 1"}, true},
            {{"return x+1", "return x + 1"}, false},
            {{"return X + 1", "return x + 1"}, false},
            {{"", ""}, true},
            {{"   ", ""}, true},
            {{"pass", "pass  # done"}, false},
            {{"value = compute( a , b )", "value = compute( a, b )"}, false},
        };
    for (std::size_t i = 0; i < exact_match_table.size(); ++i) {
        const auto& [pair, want] = exact_match_table[i];
        EvalRecord r;
        r.prediction = pair.first;
        r.has_prediction = true;
        r.gold_next_line = pair.second;
        const double em = metric_exact_match({r});
        c.require((em == 100.0) == want, "exact-match pair " + std::to_string(i) + " wrong");
    }
}

// --------------------------------------------------------------------------
// 9. Default hyperparameters.
void criterion_defaults(Check& c) {
    const ExpansionConfig expansion;
    c.require(expansion.anchor_count == 3, "default K != 3");
    c.require(expansion.max_depth == 4, "default D != 4");
    c.require(expansion.max_nodes == 1000, "default M != 1000");
    c.require(expansion.strategy == Strategy::Exhausted, "default strategy not exhausted");

    const TrainConfig train;
    c.require(train.epochs == 10, "default epochs != 10");
    c.require(std::abs(train.learning_rate - 0.01) < 1e-15, "default learning rate != 0.01");

    const GnnModel model = init_model(16, 3, 0);
    c.require(model.layer_count() == 3, "three-layer init has wrong depth");
    c.require(model.input_dim() == 16 && model.output_dim() == 16,
              "layer widths default to the embedding dimension");
    c.require(static_cast<int>(model.scoring.size()) == 2 * model.output_dim(),
              "scoring head width != 2 * h_L");

    // the command line must expose the same defaults
    const fs::path cli = cli_path();
    const fs::path dir = fresh_dir("defaults");
    const std::string help = (dir / "help.out").string();
    c.require(run_cmd(cli.string() + " retrieve --help > " + help + " 2>&1") == 0,
              "retrieve --help failed");
    const std::string text = read_file(help);
    for (const char* needle : {"--anchors", "--depth", "--max-nodes"})
        c.require(text.find(needle) != std::string::npos,
                  std::string("missing option ") + needle);

    const std::string thelp = (dir / "train_help.out").string();
    c.require(run_cmd(cli.string() + " train --help > " + thelp + " 2>&1") == 0,
              "train --help failed");
    const std::string ttext = read_file(thelp);
    for (const char* needle : {"--layers", "--lr", "--epochs"})
        c.require(ttext.find(needle) != std::string::npos,
                  std::string("missing option ") + needle);
}

}  // namespace

int main() {
    criterion(1, "semantic graph fidelity on the fixture repository", 2.0,
              criterion_graph_fidelity);
    criterion(2, "exact kNN vs brute-force oracle (100 trials)", 10.0, criterion_knn_oracle);
    criterion(3, "expansion bounds, subset and monotonicity invariants", 30.0,
              criterion_expansion_invariants);
    criterion(4, "pattern search hit rate and coverage on planted paths", 60.0,
              criterion_planted_patterns);
    criterion(5, "message passing vs dense oracle and finite differences", 30.0,
              criterion_gnn_numerics);
    criterion(6, "trained predictor beats cosine on structural links", 120.0,
              criterion_learning_efficacy);
    criterion(7, "end-to-end pipeline determinism", 180.0, criterion_cli_determinism);
    criterion(8, "retrieval and completion metric correctness", 1.0, criterion_metrics);
    criterion(9, "documented hyperparameter defaults", 10.0, criterion_defaults);

    if (g_failures == 0) {
        std::cout << "all criteria passed\n";
        return 0;
    }
    std::cout << g_failures << " criteria failed\n";
    return 1;
}
