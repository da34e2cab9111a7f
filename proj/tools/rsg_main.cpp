#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rsg/builder.hpp"
#include "rsg/embedding.hpp"
#include "rsg/expansion.hpp"
#include "rsg/gnn.hpp"
#include "rsg/graph_io.hpp"
#include "rsg/pipeline.hpp"

namespace fs = std::filesystem;
using namespace rsg;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Reconstructs the encoder that produced a table from its provenance string.
std::unique_ptr<Encoder> encoder_for(const EmbeddingTable& table) {
    const BaselineEncoder probe(table.dimension);
    if (table.provenance == probe.id()) return std::make_unique<BaselineEncoder>(table.dimension);
    throw PipelineError("cannot encode queries for external provenance '" + table.provenance +
                        "'; query-side encoding needs the baseline encoder");
}

Strategy parse_strategy(const std::string& name) {
    if (name == "exhausted") return Strategy::Exhausted;
    if (name == "pattern") return Strategy::Pattern;
    if (name == "knn") return Strategy::Knn;
    throw CLI::ValidationError("--strategy", "expected exhausted|pattern|knn, got " + name);
}

struct CommonArgs {
    std::string graph_path;
    std::string emb_path;
    std::string model_path;
    std::string patterns_path;
    std::string manifest_path;
    std::string strategy = "exhausted";
    int k = 3;
    int depth = 4;
    int max_nodes = 1000;
    std::string budget_scope = "per-anchor";
};

void add_expansion_flags(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--strategy", args.strategy, "exhausted|pattern|knn")
        ->default_val("exhausted");
    cmd->add_option("-K,--anchors", args.k, "kNN anchor count")->default_val(3);
    cmd->add_option("-D,--depth", args.depth, "maximum BFS depth")->default_val(4);
    cmd->add_option("-M,--max-nodes", args.max_nodes, "node budget (counts the anchor)")
        ->default_val(1000);
    cmd->add_option("--budget-scope", args.budget_scope, "per-anchor|global")
        ->default_val("per-anchor");
}

ExpansionConfig make_expansion(const CommonArgs& args,
                               const std::optional<PathTypeSet>& patterns) {
    ExpansionConfig config;
    config.anchor_count = args.k;
    config.max_depth = args.depth;
    config.max_nodes = args.max_nodes;
    config.strategy = parse_strategy(args.strategy);
    config.budget_scope =
        args.budget_scope == "global" ? BudgetScope::Global : BudgetScope::PerAnchor;
    config.patterns = patterns;
    return config;
}

fs::path default_manifest(const fs::path& artifact) {
    return artifact.parent_path() / "rsg-manifest.json";
}

// Loads the shared inputs, verifying them against the manifest when one
// exists next to the graph (or at --manifest).
struct LoadedInputs {
    Rsg graph;
    EmbeddingTable table;
    std::optional<GnnModel> model;
    std::optional<PathTypeSet> patterns;
};

LoadedInputs load_inputs(const CommonArgs& args, bool verify) {
    LoadedInputs in;
    fs::path manifest_path = args.manifest_path.empty()
                                 ? default_manifest(fs::path(args.graph_path))
                                 : fs::path(args.manifest_path);
    std::optional<Manifest> manifest;
    if (verify && fs::exists(manifest_path)) manifest = load_manifest(manifest_path);
    auto check = [&](const std::string& p) {
        if (manifest) verify_artifact(*manifest, fs::path(p));
    };
    check(args.graph_path);
    in.graph = load_graph(args.graph_path);
    check(args.emb_path);
    in.table = load_table(args.emb_path, in.graph.node_count());
    if (!args.model_path.empty()) {
        check(args.model_path);
        in.model = load_model(args.model_path);
    }
    if (!args.patterns_path.empty()) {
        check(args.patterns_path);
        in.patterns = load_patterns(args.patterns_path);
    }
    return in;
}

// Training/mining samples from a records file; gold comes from gold_node or
// from Jaccard alignment of the gold snippet.
NodeId resolve_gold(const Rsg& graph, const EvalRecord& record) {
    if (record.gold_node >= 0) {
        if (static_cast<std::size_t>(record.gold_node) >= graph.node_count())
            throw PipelineError("record " + record.id + ": gold node out of range");
        return record.gold_node;
    }
    if (!record.gold_snippet.empty()) {
        if (auto aligned = align_gold(graph, record.gold_snippet)) return *aligned;
        throw PipelineError("record " + record.id + ": gold snippet aligns to no node");
    }
    throw PipelineError("record " + record.id + ": no gold node or snippet");
}

// Runs fn(i) over [0, n) on a small pool; results land at their input index.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const unsigned workers =
        std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), 8));
    if (workers == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next++; i < n; i = next++) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

int cmd_index(const std::string& repo, const std::string& output,
              const std::string& diagnostics_path, const std::string& manifest_path) {
    BuildResult result = build_rsg(repo);
    const auto violations = result.graph.validate();
    if (!violations.empty()) {
        for (const auto& v : violations)
            std::cerr << "invariant violation: " << v.invariant << ": " << v.detail << "\n";
        return 1;
    }
    save_graph(result.graph, output);
    if (!diagnostics_path.empty()) save_diagnostics(result.diagnostics, diagnostics_path);
    const fs::path manifest =
        manifest_path.empty() ? default_manifest(output) : fs::path(manifest_path);
    record_artifact(manifest, output);
    std::cout << "nodes\t" << result.graph.node_count() << "\nedges\t"
              << result.graph.edge_count() << "\ndiagnostics\t" << result.diagnostics.size()
              << "\n";
    return 0;
}

int cmd_embed(const std::string& graph_path, const std::string& encoder_spec,
              const std::string& output, int dimension, const std::string& manifest_path) {
    const Rsg graph = load_graph(graph_path);
    EmbeddingTable table;
    if (encoder_spec == "baseline") {
        table = build_table(graph, BaselineEncoder(dimension));
    } else if (encoder_spec.starts_with("file:")) {
        table = load_table(encoder_spec.substr(5), graph.node_count());
    } else {
        throw CLI::ValidationError("--encoder", "expected baseline or file:<path>");
    }
    save_table(table, output);
    const fs::path manifest =
        manifest_path.empty() ? default_manifest(output) : fs::path(manifest_path);
    record_artifact(manifest, output);
    std::cout << "entries\t" << table.size() << "\ndimension\t" << table.dimension
              << "\nprovenance\t" << table.provenance << "\n";
    return 0;
}

std::vector<MiningSample> build_mining_samples(const std::vector<EvalRecord>& records,
                                               const Rsg& graph, const EmbeddingTable& table,
                                               const Encoder& encoder) {
    std::vector<MiningSample> samples(records.size());
    parallel_for(records.size(), [&](std::size_t i) {
        samples[i] = {&graph, &table, encoder.encode(records[i].query_text),
                      resolve_gold(graph, records[i])};
    });
    return samples;
}

int cmd_mine(const std::string& records_path, CommonArgs& args, double quantile,
             const std::string& output) {
    LoadedInputs in = load_inputs(args, /*verify=*/true);
    const auto encoder = encoder_for(in.table);
    const auto records = load_records(records_path);
    const auto samples = build_mining_samples(records, in.graph, in.table, *encoder);
    const PathTypeSet set =
        mine_path_patterns(samples, args.k, args.depth, args.max_nodes, quantile);
    save_patterns(set, output);
    record_artifact(args.manifest_path.empty() ? default_manifest(output)
                                               : fs::path(args.manifest_path),
                    output);
    std::cout << "patterns\t" << set.size() << "\n";
    return 0;
}

int cmd_train(const std::string& records_path, CommonArgs& args, int layers, int hidden,
              double lr, int epochs, std::uint64_t seed, const std::string& output) {
    LoadedInputs in = load_inputs(args, /*verify=*/true);
    const auto encoder = encoder_for(in.table);
    const auto records = load_records(records_path);

    std::vector<TrainSample> samples(records.size());
    parallel_for(records.size(), [&](std::size_t i) {
        const EvalRecord& r = records[i];
        TrainSample s;
        s.id = r.id;
        s.graph = &in.graph;
        s.table = &in.table;
        s.query.text = r.query_text;
        s.query.embedding = encoder->encode(r.query_text);
        if (!r.query_file.empty()) {
            if (auto script = in.graph.script_for_file(r.query_file))
                s.query.known_edges.push_back({RelationKind::Encloses, *script});
        }
        s.gold = resolve_gold(in.graph, r);
        const auto anchors = select_anchors(in.graph, in.table, s.query.embedding, args.k);
        const auto sub =
            exhausted_expand(in.graph, anchors, args.depth, args.max_nodes);
        s.candidates = sub.expanded;
        if (!sub.contains(s.gold)) s.candidates.push_back(s.gold);
        samples[i] = std::move(s);
    });

    std::optional<std::vector<int>> hidden_dims;
    if (hidden > 0) hidden_dims.emplace(layers, hidden);
    GnnModel model =
        init_model(in.table.dimension, layers, seed, hidden_dims ? &*hidden_dims : nullptr);
    model.metadata["provenance"] = in.table.provenance;
    TrainConfig config;
    config.epochs = epochs;
    config.learning_rate = lr;
    config.seed = seed;
    const TrainReport report = train_model(model, samples, config);
    save_model(model, output);
    record_artifact(args.manifest_path.empty() ? default_manifest(output)
                                               : fs::path(args.manifest_path),
                    output);
    for (std::size_t e = 0; e < report.epoch_mean_loss.size(); ++e) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", report.epoch_mean_loss[e]);
        std::cout << "epoch\t" << e + 1 << "\tloss\t" << buf << "\n";
    }
    return 0;
}

int cmd_retrieve(const std::string& query_path, CommonArgs& args, const std::string& order,
                 long budget, int top_n, const std::string& query_file) {
    LoadedInputs in = load_inputs(args, /*verify=*/true);
    const auto encoder = encoder_for(in.table);

    RetrievalRequest request;
    request.query_text = read_file(query_path);
    request.query_file = query_file;
    request.expansion = make_expansion(args, in.patterns);
    request.top_n = top_n;
    request.token_budget = budget;
    request.ordering = order == "l2h" ? Ordering::L2H : Ordering::H2L;

    const RankedContexts ranked =
        retrieve(in.graph, in.table, in.model ? &*in.model : nullptr, *encoder, request);

    std::vector<PromptBlock> blocks;
    for (const RankedEntry& e : ranked.entries) {
        const RsgNode& node = in.graph.node(e.node);
        blocks.push_back({node.file_path, node.source_text, node.id, e.score});
    }
    const AssembledPrompt prompt =
        assemble_prompt(request.query_text, blocks, request.ordering, budget);

    nlohmann::json doc;
    doc["candidates"] = ranked.candidate_universe.size();
    auto& out_ranked = doc["ranked"] = nlohmann::json::array();
    for (const RankedEntry& e : ranked.entries) {
        char sbuf[32], pbuf[32];
        std::snprintf(sbuf, sizeof sbuf, "%.9g", e.score);
        std::snprintf(pbuf, sizeof pbuf, "%.9g", e.probability);
        out_ranked.push_back({{"node", e.node},
                              {"qualified_name", in.graph.node(e.node).qualified_name},
                              {"score", sbuf},
                              {"probability", pbuf}});
    }
    doc["prompt"] = prompt.text();
    doc["token_estimate"] = prompt.token_estimate;
    std::cout << doc.dump(1) << "\n";
    return 0;
}

int cmd_eval(const std::string& task, const std::string& records_path, CommonArgs& args,
             const std::string& order, long budget, int top_n) {
    auto records = load_records(records_path);
    if (records.empty()) throw PipelineError("no records in " + records_path);

    const bool need_pipeline = [&] {
        for (const EvalRecord& r : records) {
            if (task == "retrieval" && r.ranked.empty()) return true;
            if (task == "completion" && !r.has_prediction) return true;
        }
        return false;
    }();

    std::optional<LoadedInputs> in;
    std::unique_ptr<Encoder> encoder;
    if (need_pipeline) {
        if (args.graph_path.empty() || args.emb_path.empty())
            throw PipelineError("records lack precomputed outputs; --graph and --emb required");
        in = load_inputs(args, /*verify=*/true);
        encoder = encoder_for(in->table);
    }

    auto run_retrieve = [&](EvalRecord& r, int keep) {
        RetrievalRequest request;
        request.query_text = r.query_text;
        request.query_file = r.query_file;
        request.expansion = make_expansion(args, in->patterns);
        request.top_n = keep;
        request.token_budget = budget;
        request.ordering = order == "l2h" ? Ordering::L2H : Ordering::H2L;
        return retrieve(in->graph, in->table, in->model ? &*in->model : nullptr, *encoder,
                        request);
    };

    if (task == "retrieval") {
        parallel_for(records.size(), [&](std::size_t i) {
            EvalRecord& r = records[i];
            if (r.gold_node < 0 && in) r.gold_node = resolve_gold(in->graph, r);
            if (!r.ranked.empty()) return;
            const RankedContexts ranked = run_retrieve(r, /*keep=*/0);
            for (const RankedEntry& e : ranked.entries) r.ranked.push_back(e.node);
        });
        std::ostringstream out;
        out << "metric\tvalue\n";
        for (int k : {1, 3, 5}) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.2f", metric_acc_at_k(records, k));
            out << "acc@" << k << "\t" << buf << "\n";
        }
        std::cout << out.str();
        return 0;
    }
    if (task == "completion") {
        std::unique_ptr<CompletionClient> client;
        if (std::getenv("RSG_COMPLETION_ENDPOINT") != nullptr) {
            client = std::make_unique<HttpCompletionClient>();
        } else if (const char* map_path = std::getenv("RSG_STUB_MAP")) {
            client = std::make_unique<StubCompletionClient>(
                StubCompletionClient::from_file(map_path));
        } else {
            client = std::make_unique<StubCompletionClient>();
        }
        // retrieval is parallel; external calls stay sequential in input
        // order so the in-flight request count is bounded
        std::vector<AssembledPrompt> prompts(records.size());
        parallel_for(records.size(), [&](std::size_t i) {
            EvalRecord& r = records[i];
            if (r.has_prediction) return;
            const RankedContexts ranked = run_retrieve(r, top_n);
            std::vector<PromptBlock> blocks;
            for (const RankedEntry& e : ranked.entries) {
                const RsgNode& node = in->graph.node(e.node);
                blocks.push_back({node.file_path, node.source_text, node.id, e.score});
            }
            prompts[i] = assemble_prompt(r.query_text, blocks,
                                         order == "l2h" ? Ordering::L2H : Ordering::H2L, budget);
        });
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (records[i].has_prediction) continue;
            records[i].prediction = complete(prompts[i], *client, records[i].id);
            records[i].has_prediction = true;
        }
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", metric_exact_match(records));
        std::cout << "metric\tvalue\nem\t" << buf << "\n";
        return 0;
    }
    throw CLI::ValidationError("--task", "expected retrieval or completion");
}

int cmd_sensitivity(const std::string& grid_path, const std::string& records_path,
                    CommonArgs& args) {
    LoadedInputs in = load_inputs(args, /*verify=*/true);
    const auto encoder = encoder_for(in.table);
    const auto records = load_records(records_path);
    const auto samples = build_mining_samples(records, in.graph, in.table, *encoder);

    std::vector<GridPoint> grid;
    std::ifstream gin(grid_path);
    if (!gin) throw PipelineError("cannot open grid file " + grid_path);
    std::string line;
    while (std::getline(gin, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string strategy;
        GridPoint p;
        if (!(ls >> strategy >> p.max_depth >> p.max_nodes >> p.anchor_count))
            throw PipelineError("malformed grid line: " + line);
        p.strategy = parse_strategy(strategy);
        grid.push_back(p);
    }
    const auto rows =
        run_sensitivity(samples, grid, in.patterns ? &*in.patterns : nullptr);
    std::cout << render_sensitivity_table(rows);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"repository-context retrieval engine"};
    app.require_subcommand(1);

    // index
    std::string repo, output, diagnostics_path;
    CommonArgs args;
    auto* index = app.add_subcommand("index", "build the semantic graph from a repository");
    index->add_option("repo", repo, "repository root")->required();
    index->add_option("-o,--output", output, "graph output path")->required();
    index->add_option("--diagnostics", diagnostics_path, "diagnostics JSONL output");
    index->add_option("--manifest", args.manifest_path, "manifest path");

    // embed
    std::string encoder_spec = "baseline";
    int dimension = 64;
    auto* embed = app.add_subcommand("embed", "embed every graph node");
    embed->add_option("graph", args.graph_path, "graph file")->required();
    embed->add_option("--encoder", encoder_spec, "baseline | file:<path>")
        ->default_val("baseline");
    embed->add_option("-d,--dim", dimension, "baseline embedding dimension (power of two)")
        ->default_val(64);
    embed->add_option("-o,--output", output, "table output path")->required();
    embed->add_option("--manifest", args.manifest_path, "manifest path");

    // mine-patterns
    std::string records_path;
    double quantile = 0.9;
    auto* mine = app.add_subcommand("mine-patterns", "mine gold-reaching path types");
    mine->add_option("records", records_path, "training records JSONL")->required();
    mine->add_option("--graph", args.graph_path, "graph file")->required();
    mine->add_option("--emb", args.emb_path, "embedding table")->required();
    add_expansion_flags(mine, args);
    mine->add_option("-q,--quantile", quantile, "coverage quantile")->default_val(0.9);
    mine->add_option("-o,--output", output, "pattern set output path")->required();
    mine->add_option("--manifest", args.manifest_path, "manifest path");

    // train
    int layers = 3, epochs = 10, top_n = 0;
    double lr = 0.01;
    std::uint64_t seed = 0;
    auto* train = app.add_subcommand("train", "train the link predictor");
    train->add_option("records", records_path, "training records JSONL")->required();
    train->add_option("--graph", args.graph_path, "graph file")->required();
    train->add_option("--emb", args.emb_path, "embedding table")->required();
    add_expansion_flags(train, args);
    train->add_option("--layers", layers, "GNN layer count")->default_val(3);
    int hidden = 0;
    train->add_option("--hidden", hidden, "hidden layer width (default: embedding dimension)")
        ->default_val(0);
    train->add_option("--lr", lr, "Adam learning rate")->default_val(0.01);
    train->add_option("--epochs", epochs, "training epochs")->default_val(10);
    train->add_option("--seed", seed, "init/shuffle seed")->default_val(0);
    train->add_option("-o,--output", output, "model output path")->required();
    train->add_option("--manifest", args.manifest_path, "manifest path");

    // retrieve
    std::string query_path, order = "h2l", query_file;
    long budget = -1;
    auto* retrieve_cmd = app.add_subcommand("retrieve", "rank contexts for a query snippet");
    retrieve_cmd->add_option("query", query_path, "file holding the query snippet")->required();
    retrieve_cmd->add_option("--graph", args.graph_path, "graph file")->required();
    retrieve_cmd->add_option("--emb", args.emb_path, "embedding table")->required();
    retrieve_cmd->add_option("--model", args.model_path, "trained model (cosine fallback if absent)");
    retrieve_cmd->add_option("--patterns", args.patterns_path, "mined pattern set");
    add_expansion_flags(retrieve_cmd, args);
    retrieve_cmd->add_option("--order", order, "l2h|h2l prompt ordering")->default_val("h2l");
    retrieve_cmd->add_option("--budget", budget, "prompt token budget (unlimited if absent)");
    retrieve_cmd->add_option("--top", top_n, "keep the N best contexts (0 = budget-driven)")
        ->default_val(0);
    retrieve_cmd->add_option("--query-path", query_file,
                             "repo-relative file the query belongs to");
    retrieve_cmd->add_option("--manifest", args.manifest_path, "manifest path");

    // eval
    std::string task;
    auto* eval_cmd = app.add_subcommand("eval", "score retrieval or completion records");
    eval_cmd->add_option("--task", task, "retrieval|completion")->required();
    eval_cmd->add_option("records", records_path, "records JSONL")->required();
    eval_cmd->add_option("--graph", args.graph_path, "graph file");
    eval_cmd->add_option("--emb", args.emb_path, "embedding table");
    eval_cmd->add_option("--model", args.model_path, "trained model");
    eval_cmd->add_option("--patterns", args.patterns_path, "mined pattern set");
    add_expansion_flags(eval_cmd, args);
    eval_cmd->add_option("--order", order, "l2h|h2l prompt ordering")->default_val("h2l");
    eval_cmd->add_option("--budget", budget, "prompt token budget");
    eval_cmd->add_option("--top", top_n, "contexts kept per prompt")->default_val(0);
    eval_cmd->add_option("--manifest", args.manifest_path, "manifest path");

    // sensitivity
    std::string grid_path;
    auto* sens = app.add_subcommand("sensitivity", "hits/coverage over a config grid");
    sens->add_option("records", records_path, "query records JSONL")->required();
    sens->add_option("--grid", grid_path, "grid file: strategy D M K per line")->required();
    sens->add_option("--graph", args.graph_path, "graph file")->required();
    sens->add_option("--emb", args.emb_path, "embedding table")->required();
    sens->add_option("--patterns", args.patterns_path, "mined pattern set");
    sens->add_option("--manifest", args.manifest_path, "manifest path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (index->parsed())
            return cmd_index(repo, output, diagnostics_path, args.manifest_path);
        if (embed->parsed()) {
            const std::string graph_path = args.graph_path;
            return cmd_embed(graph_path, encoder_spec, output, dimension, args.manifest_path);
        }
        if (mine->parsed()) return cmd_mine(records_path, args, quantile, output);
        if (train->parsed())
            return cmd_train(records_path, args, layers, hidden, lr, epochs, seed, output);
        if (retrieve_cmd->parsed())
            return cmd_retrieve(query_path, args, order, budget, top_n, query_file);
        if (eval_cmd->parsed())
            return cmd_eval(task, records_path, args, order, budget, top_n);
        if (sens->parsed()) return cmd_sensitivity(grid_path, records_path, args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
