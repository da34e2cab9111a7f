#include "rsg/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#define CPPHTTPLIB_NO_EXCEPTIONS
#include "httplib.h"

namespace rsg {

namespace {

ExpandedSubgraph expand_by_strategy(const Rsg& graph,
                                    const std::vector<std::pair<NodeId, double>>& anchors,
                                    const ExpansionConfig& config) {
    switch (config.strategy) {
        case Strategy::Exhausted:
            return exhausted_expand(graph, anchors, config.max_depth, config.max_nodes,
                                    config.budget_scope);
        case Strategy::Pattern:
            if (!config.patterns)
                throw PipelineError("pattern strategy selected but no pattern set loaded");
            return pattern_expand(graph, anchors, config.max_depth, config.max_nodes,
                                  *config.patterns, config.budget_scope);
        case Strategy::Knn: {
            ExpandedSubgraph sub;
            sub.anchors = anchors;
            for (const auto& [id, sim] : anchors) sub.expanded.push_back(id);
            std::sort(sub.expanded.begin(), sub.expanded.end());
            sub.expanded.erase(std::unique(sub.expanded.begin(), sub.expanded.end()),
                               sub.expanded.end());
            return sub;
        }
    }
    throw PipelineError("unknown strategy");
}

}  // namespace

RankedContexts retrieve(const Rsg& graph, const EmbeddingTable& table, const GnnModel* model,
                        const Encoder& encoder, const RetrievalRequest& request) {
    if (table.provenance != encoder.id())
        throw PipelineError("embedding table provenance '" + table.provenance +
                            "' does not match encoder '" + encoder.id() + "'");
    if (model != nullptr) {
        auto it = model->metadata.find("provenance");
        if (it != model->metadata.end() && it->second != table.provenance)
            throw PipelineError("model was trained against provenance '" + it->second +
                                "', table has '" + table.provenance + "'");
        if (model->input_dim() != table.dimension)
            throw PipelineError("model input dimension does not match the embedding table");
    }
    if (request.query_text.empty()) throw PipelineError("empty query snippet");

    const std::vector<double> query_vec = encoder.encode(request.query_text);
    const auto anchors =
        select_anchors(graph, table, query_vec, request.expansion.anchor_count);
    const ExpandedSubgraph sub = expand_by_strategy(graph, anchors, request.expansion);

    std::vector<NodeId> candidates = sub.expanded;
    if (!request.query_file.empty()) {
        const std::vector<NodeId> universe = import_universe(graph, request.query_file);
        std::vector<NodeId> filtered;
        std::set_intersection(candidates.begin(), candidates.end(), universe.begin(),
                              universe.end(), std::back_inserter(filtered));
        if (!filtered.empty()) candidates = std::move(filtered);
    }

    RankedContexts ranked;
    if (model != nullptr) {
        QueryNode query;
        query.text = request.query_text;
        query.embedding = query_vec;
        if (!request.query_file.empty()) {
            if (auto script = graph.script_for_file(request.query_file))
                query.known_edges.push_back({RelationKind::Encloses, *script});
        }
        const AugmentedGraph g1 = attach_query(graph, query);
        const auto final_embeddings = gnn_forward(*model, g1, table);
        ranked = score_candidates(*model, final_embeddings, candidates, g1.query_id());
    } else {
        ranked = cosine_rerank(query_vec, candidates, table);
    }
    if (request.top_n > 0 && !ranked.entries.empty()) {
        const int keep =
            std::min<int>(request.top_n, static_cast<int>(ranked.entries.size()));
        ranked = select_top(ranked, keep);
    }
    return ranked;
}

long estimate_tokens(std::string_view text) {
    return static_cast<long>((text.size() + 3) / 4);
}

std::string PromptBlock::render() const {
    std::string out = "# file: " + file_path + "\n" + body;
    if (!out.ends_with('\n')) out += '\n';
    return out;
}

long PromptBlock::token_estimate() const { return estimate_tokens(render()); }

std::string AssembledPrompt::text() const {
    std::string out;
    for (const PromptBlock& b : blocks) {
        out += b.render();
        out += '\n';
    }
    out += query;
    return out;
}

AssembledPrompt assemble_prompt(const std::string& query, const std::vector<PromptBlock>& ranked,
                                Ordering ordering, long token_budget) {
    const long query_tokens = estimate_tokens(query);
    if (token_budget >= 0 && query_tokens > token_budget)
        throw PipelineError("token budget " + std::to_string(token_budget) +
                            " cannot fit the query alone (" + std::to_string(query_tokens) + ")");
    AssembledPrompt prompt;
    prompt.query = query;
    long total = query_tokens;
    for (const PromptBlock& block : ranked) {
        const long cost = block.token_estimate();
        if (token_budget >= 0 && total + cost > token_budget) break;
        total += cost;
        prompt.blocks.push_back(block);
    }
    prompt.token_estimate = total;
    if (ordering == Ordering::L2H)
        std::reverse(prompt.blocks.begin(), prompt.blocks.end());
    return prompt;
}

StubCompletionClient StubCompletionClient::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PipelineError("cannot open stub mapping " + path.string());
    nlohmann::json doc;
    in >> doc;
    std::map<std::string, std::string> mapping;
    for (const auto& [k, v] : doc.items()) mapping[k] = v.get<std::string>();
    return StubCompletionClient(std::move(mapping));
}

std::string StubCompletionClient::complete_text(const std::string& prompt) {
    auto it = mapping_.find(prompt);
    if (it != mapping_.end()) return it->second;
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : prompt) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string("// completion ") + buf;
}

HttpCompletionClient::HttpCompletionClient() {
    const char* endpoint = std::getenv("RSG_COMPLETION_ENDPOINT");
    if (endpoint == nullptr || *endpoint == '\0')
        throw PipelineError("RSG_COMPLETION_ENDPOINT is not set");
    endpoint_ = endpoint;
    if (const char* token = std::getenv("RSG_COMPLETION_TOKEN")) token_ = token;
}

std::string HttpCompletionClient::complete_text(const std::string& prompt) {
    // split "http://host:port/path"
    std::string base = endpoint_;
    std::string path = "/";
    const std::size_t scheme = base.find("://");
    const std::size_t slash = base.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (slash != std::string::npos) {
        path = base.substr(slash);
        base.resize(slash);
    }
    httplib::Client client(base);
    client.set_read_timeout(30, 0);
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
    const nlohmann::json body = {{"prompt", prompt}};
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) throw PipelineError("completion transport failure against " + endpoint_);
    if (res->status < 200 || res->status >= 300)
        throw PipelineError("completion service returned status " + std::to_string(res->status));
    const nlohmann::json doc = nlohmann::json::parse(res->body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("completion"))
        throw PipelineError("completion response is not a JSON object with 'completion'");
    return doc["completion"].get<std::string>();
}

std::string complete(const AssembledPrompt& prompt, CompletionClient& client,
                     const std::string& request_id) {
    std::string raw;
    try {
        raw = client.complete_text(prompt.text());
    } catch (const PipelineError& e) {
        throw PipelineError("request " + request_id + ": " + e.what());
    }
    if (raw.empty()) throw PipelineError("request " + request_id + ": empty completion");
    std::string line = raw.substr(0, raw.find('\n'));
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back())))
        line.pop_back();
    return line;
}

std::vector<EvalRecord> load_records(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PipelineError("cannot open records file " + path.string());
    std::vector<EvalRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object())
            throw PipelineError(path.string() + ":" + std::to_string(lineno) +
                                ": malformed record");
        EvalRecord r;
        r.id = doc.value("id", "r" + std::to_string(lineno));
        r.graph_path = doc.value("graph", "");
        r.query_text = doc.value("query", "");
        r.query_file = doc.value("file", "");
        r.gold_node = doc.value("gold_node", -1);
        r.gold_snippet = doc.value("gold_snippet", "");
        r.gold_next_line = doc.value("gold_next_line", "");
        if (doc.contains("ranked")) r.ranked = doc["ranked"].get<std::vector<NodeId>>();
        if (doc.contains("prediction")) {
            r.prediction = doc["prediction"].get<std::string>();
            r.has_prediction = true;
        }
        records.push_back(std::move(r));
    }
    return records;
}

void save_records(const std::vector<EvalRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    for (const EvalRecord& r : records) {
        nlohmann::json doc;
        doc["id"] = r.id;
        if (!r.graph_path.empty()) doc["graph"] = r.graph_path;
        doc["query"] = r.query_text;
        if (!r.query_file.empty()) doc["file"] = r.query_file;
        if (r.gold_node >= 0) doc["gold_node"] = r.gold_node;
        if (!r.gold_snippet.empty()) doc["gold_snippet"] = r.gold_snippet;
        if (!r.gold_next_line.empty()) doc["gold_next_line"] = r.gold_next_line;
        if (!r.ranked.empty()) doc["ranked"] = r.ranked;
        if (r.has_prediction) doc["prediction"] = r.prediction;
        out << doc.dump() << '\n';
    }
}

double metric_acc_at_k(const std::vector<EvalRecord>& records, int k) {
    if (k < 1) throw PipelineError("acc@k requires k >= 1");
    if (records.empty()) return 0.0;
    long hits = 0;
    for (const EvalRecord& r : records) {
        if (r.gold_node < 0)
            throw PipelineError("record " + r.id + " has no gold node for acc@k");
        const auto end = r.ranked.begin() + std::min<std::size_t>(r.ranked.size(), k);
        if (std::find(r.ranked.begin(), end, r.gold_node) != end) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(records.size());
}

std::string normalize_completion_line(std::string_view line) {
    std::string out;
    bool in_space = true;  // swallows leading whitespace
    for (char c : line) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_space = true;
        } else {
            if (in_space && !out.empty()) out += ' ';
            in_space = false;
            out += c;
        }
    }
    return out;
}

double metric_exact_match(const std::vector<EvalRecord>& records) {
    if (records.empty()) return 0.0;
    long hits = 0;
    for (const EvalRecord& r : records) {
        if (!r.has_prediction)
            throw PipelineError("record " + r.id + " has no prediction for EM");
        if (normalize_completion_line(r.prediction) ==
            normalize_completion_line(r.gold_next_line))
            ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(records.size());
}

namespace {

std::set<std::string> token_set(std::string_view text) {
    std::set<std::string> tokens;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
            cur += c;
        } else if (!cur.empty()) {
            tokens.insert(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.insert(std::move(cur));
    return tokens;
}

}  // namespace

double jaccard_tokens(std::string_view a, std::string_view b) {
    const auto sa = token_set(a);
    const auto sb = token_set(b);
    if (sa.empty() && sb.empty()) return 1.0;
    std::size_t inter = 0;
    for (const std::string& t : sa) inter += sb.count(t);
    const std::size_t uni = sa.size() + sb.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::optional<NodeId> align_gold(const Rsg& graph, const std::string& snippet, double threshold) {
    std::optional<NodeId> best;
    double best_score = threshold;
    for (const RsgNode& node : graph.nodes()) {
        const double score = jaccard_tokens(snippet, node.source_text);
        if (score > best_score || (score == best_score && !best)) {
            best = node.id;
            best_score = score;
        }
    }
    return best;
}

std::vector<SensitivityRow> run_sensitivity(const std::vector<MiningSample>& queries,
                                            const std::vector<GridPoint>& grid,
                                            const PathTypeSet* patterns) {
    if (grid.empty()) throw PipelineError("sensitivity grid is empty");
    std::vector<SensitivityRow> rows;
    for (const GridPoint& point : grid) {
        std::vector<ExpandedSubgraph> subs;
        subs.reserve(queries.size());
        std::vector<ExpansionRun> runs;
        for (const MiningSample& q : queries) {
            ExpansionConfig config;
            config.anchor_count = point.anchor_count;
            config.max_depth = point.max_depth;
            config.max_nodes = point.max_nodes;
            config.strategy = point.strategy;
            if (point.strategy == Strategy::Pattern) {
                if (patterns == nullptr)
                    throw PipelineError("grid requests the pattern strategy without a pattern set");
                config.patterns = *patterns;
            }
            const auto anchors =
                select_anchors(*q.graph, *q.table, q.query, config.anchor_count);
            subs.push_back(expand_by_strategy(*q.graph, anchors, config));
        }
        for (std::size_t i = 0; i < queries.size(); ++i)
            runs.push_back({&subs[i], queries[i].gold, queries[i].graph->node_count()});
        rows.push_back({point, measure_hits_coverage(runs)});
    }
    return rows;
}

std::string render_sensitivity_table(const std::vector<SensitivityRow>& rows) {
    std::ostringstream out;
    out << "strategy\tD\tM\tK\thits\tcoverage\n";
    for (const SensitivityRow& row : rows) {
        const char* name = row.point.strategy == Strategy::Exhausted ? "exhausted"
                           : row.point.strategy == Strategy::Pattern ? "pattern"
                                                                     : "knn";
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.4f\t%.4f", row.result.hit_rate,
                      row.result.mean_coverage);
        out << name << '\t' << row.point.max_depth << '\t' << row.point.max_nodes << '\t'
            << row.point.anchor_count << '\t' << buf << '\n';
    }
    return out.str();
}

AssembledPrompt baseline_prompt(BaselineMode mode, const EvalRecord& record,
                                const std::string& file_text, int prediction_line) {
    if (mode == BaselineMode::GoldOnly) {
        if (record.gold_snippet.empty())
            throw PipelineError("record " + record.id + " has no gold snippet for GoldOnly");
        PromptBlock block{"gold", record.gold_snippet, -1, 0.0};
        return assemble_prompt(record.query_text, {block}, Ordering::H2L, -1);
    }
    std::vector<std::string> lines;
    std::istringstream in(file_text);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    const int end = std::clamp(prediction_line - 1, 0, static_cast<int>(lines.size()));
    const int start = std::max(0, end - 30);
    std::string body;
    for (int i = start; i < end; ++i) body += lines[i] + "\n";
    if (body.empty()) return assemble_prompt(record.query_text, {}, Ordering::H2L, -1);
    PromptBlock block{record.query_file, body, -1, 0.0};
    return assemble_prompt(record.query_text, {block}, Ordering::H2L, -1);
}

std::uint64_t fnv1a_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PipelineError("cannot hash missing artifact " + path.string());
    std::uint64_t h = 1469598103934665603ull;
    char buf[4096];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return h;
}

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PipelineError("cannot open manifest " + path.string());
    nlohmann::json doc;
    in >> doc;
    Manifest m;
    for (const auto& [k, v] : doc.items())
        m.hashes[k] = std::stoull(v.get<std::string>(), nullptr, 16);
    return m;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
    nlohmann::json doc = nlohmann::json::object();
    for (const auto& [k, v] : manifest.hashes) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
        doc[k] = buf;
    }
    std::ofstream out(path, std::ios::binary);
    out << doc.dump(1) << '\n';
}

void record_artifact(const std::filesystem::path& manifest_path,
                     const std::filesystem::path& artifact) {
    Manifest m;
    if (std::filesystem::exists(manifest_path)) m = load_manifest(manifest_path);
    m.hashes[artifact.filename().string()] = fnv1a_file(artifact);
    save_manifest(m, manifest_path);
}

void verify_artifact(const Manifest& manifest, const std::filesystem::path& artifact) {
    auto it = manifest.hashes.find(artifact.filename().string());
    if (it == manifest.hashes.end()) return;  // unlisted artifacts are tolerated
    if (it->second != fnv1a_file(artifact))
        throw PipelineError("artifact " + artifact.string() +
                            " does not match its manifest hash; re-run the producing command");
}

}  // namespace rsg
