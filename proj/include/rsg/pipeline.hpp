#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsg/builder.hpp"
#include "rsg/embedding.hpp"
#include "rsg/expansion.hpp"
#include "rsg/gnn.hpp"
#include "rsg/graph.hpp"

namespace rsg {

class PipelineError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class Ordering { L2H, H2L };

struct RetrievalRequest {
    std::string query_text;
    std::string query_file;  // empty disables import-universe filtering
    ExpansionConfig expansion;
    int top_n = 0;            // N2; 0 = budget-driven (keep all ranked)
    long token_budget = -1;   // <0 = unlimited
    Ordering ordering = Ordering::H2L;
};

// Full retrieval chain: encode -> anchors -> expand -> rank -> select_top.
// Without a model the ranking falls back to cosine re-ranking over the
// candidate universe. Candidates are A_exp restricted to the query file's
// import universe when that intersection is non-empty.
RankedContexts retrieve(const Rsg& graph, const EmbeddingTable& table, const GnnModel* model,
                        const Encoder& encoder, const RetrievalRequest& request);

struct PromptBlock {
    std::string file_path;
    std::string body;  // verbatim node source text
    NodeId node = -1;
    double score = 0.0;

    std::string render() const;  // "# file: <path>\n" header + body
    long token_estimate() const;
};

struct AssembledPrompt {
    std::vector<PromptBlock> blocks;  // in final emission order
    std::string query;
    long token_estimate = 0;

    std::string text() const;  // blocks in order, then the query
};

long estimate_tokens(std::string_view text);  // ceil(chars / 4)

// Greedy inclusion in rank order under the budget, then ordering: H2L puts
// the best block first, L2H puts it last (adjacent to the query). Throws
// when the budget cannot fit the query alone.
AssembledPrompt assemble_prompt(const std::string& query, const std::vector<PromptBlock>& ranked,
                                Ordering ordering, long token_budget);

// Narrow completion transport: prompt text in, raw completion out.
class CompletionClient {
  public:
    virtual ~CompletionClient() = default;
    virtual std::string complete_text(const std::string& prompt) = 0;
};

// Offline deterministic client: exact prompt-text mapping with a hash-based
// fallback line, so tests never touch the network.
class StubCompletionClient : public CompletionClient {
  public:
    StubCompletionClient() = default;
    explicit StubCompletionClient(std::map<std::string, std::string> mapping)
        : mapping_(std::move(mapping)) {}
    // Mapping file: one JSON object, prompt text -> completion.
    static StubCompletionClient from_file(const std::filesystem::path& path);
    std::string complete_text(const std::string& prompt) override;

  private:
    std::map<std::string, std::string> mapping_;
};

// POSTs {"prompt": ...} and reads {"completion": ...}. The endpoint comes
// from RSG_COMPLETION_ENDPOINT and the bearer token from
// RSG_COMPLETION_TOKEN; neither is ever accepted as a flag.
class HttpCompletionClient : public CompletionClient {
  public:
    HttpCompletionClient();  // throws PipelineError when the env is unset
    std::string complete_text(const std::string& prompt) override;

  private:
    std::string endpoint_;
    std::string token_;
};

// First line of the client's completion, trailing whitespace stripped.
// Errors (transport, empty completion) carry the request id.
std::string complete(const AssembledPrompt& prompt, CompletionClient& client,
                     const std::string& request_id);

struct EvalRecord {
    std::string id;
    std::string graph_path;
    std::string query_text;
    std::string query_file;
    NodeId gold_node = -1;  // -1 = not set
    std::string gold_snippet;
    std::string gold_next_line;
    std::vector<NodeId> ranked;
    std::string prediction;
    bool has_prediction = false;
};

std::vector<EvalRecord> load_records(const std::filesystem::path& path);
void save_records(const std::vector<EvalRecord>& records, const std::filesystem::path& path);

// Percentage of records whose gold node sits within the first k ranks.
double metric_acc_at_k(const std::vector<EvalRecord>& records, int k);

// Edge-strip + collapse internal whitespace runs, then string equality.
std::string normalize_completion_line(std::string_view line);
double metric_exact_match(const std::vector<EvalRecord>& records);

// Token-set Jaccard alignment of a gold snippet to the best-matching node;
// nullopt below the threshold.
double jaccard_tokens(std::string_view a, std::string_view b);
std::optional<NodeId> align_gold(const Rsg& graph, const std::string& snippet,
                                 double threshold = 0.5);

struct GridPoint {
    Strategy strategy = Strategy::Exhausted;
    int max_depth = 4;
    int max_nodes = 1000;
    int anchor_count = 3;
};

struct SensitivityRow {
    GridPoint point;
    HitsCoverage result;
};

// One expansion sweep over all queries per grid point. The knn strategy
// keeps the anchors only.
std::vector<SensitivityRow> run_sensitivity(const std::vector<MiningSample>& queries,
                                            const std::vector<GridPoint>& grid,
                                            const PathTypeSet* patterns);

std::string render_sensitivity_table(const std::vector<SensitivityRow>& rows);

enum class BaselineMode { GoldOnly, InFileOnly };

// GoldOnly: the gold snippet as the single context. InFileOnly: at most the
// 30 lines preceding prediction_line of the query file, no cross-file text.
AssembledPrompt baseline_prompt(BaselineMode mode, const EvalRecord& record,
                                const std::string& file_text, int prediction_line);

// Content-addressed artifact manifest (FNV-1a 64 of the file bytes).
struct Manifest {
    std::map<std::string, std::uint64_t> hashes;  // file name -> hash
};

std::uint64_t fnv1a_file(const std::filesystem::path& path);
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);
void record_artifact(const std::filesystem::path& manifest_path,
                     const std::filesystem::path& artifact);
// Throws when the manifest lists this artifact under a different hash.
void verify_artifact(const Manifest& manifest, const std::filesystem::path& artifact);

}  // namespace rsg
