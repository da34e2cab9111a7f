#pragma once

#include <cstdint>
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

class GnnError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kModelFormatVersion = 1;

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // row-major

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
    double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

// Mean-aggregation message-passing model plus the linear scoring head.
// Layer l maps h_{l-1} -> h_l via z <- act(W_self^T z + W_nbr^T mean_nbr).
// Hidden layers use a rectifier, the last layer is linear.
struct GnnModel {
    std::vector<int> dims;             // h_0 .. h_L, h_0 = embedding dimension
    std::vector<Matrix> self_weights;  // per layer, (h_{l-1} x h_l)
    std::vector<Matrix> nbr_weights;
    std::vector<double> scoring;  // W, length 2 * h_L
    std::uint64_t seed = 0;
    std::map<std::string, std::string> metadata;

    int layer_count() const { return static_cast<int>(self_weights.size()); }
    int input_dim() const { return dims.front(); }
    int output_dim() const { return dims.back(); }
};

// Glorot-uniform init, fully determined by the seed.
GnnModel init_model(int embedding_dim, int layers, std::uint64_t seed,
                    const std::vector<int>* hidden_dims = nullptr);

struct QueryNode {
    std::string text;
    std::vector<double> embedding;  // Z_Q^(0)
    std::vector<std::pair<RelationKind, NodeId>> known_edges;
};

// Query-attachment view: the base graph is never modified; the query node
// has id = |V| and its known edges are visible in both directions.
class AugmentedGraph {
  public:
    AugmentedGraph(const Rsg& base, const QueryNode& query);

    NodeId query_id() const { return static_cast<NodeId>(base_->node_count()); }
    std::size_t node_count() const { return base_->node_count() + 1; }
    const Rsg& base() const { return *base_; }
    const QueryNode& query() const { return *query_; }

    // Unique neighbor ids (all relations, both directions) per node,
    // including the appended query node.
    std::vector<std::vector<NodeId>> neighbor_lists() const;

  private:
    const Rsg* base_;
    const QueryNode* query_;
};

AugmentedGraph attach_query(const Rsg& graph, const QueryNode& query);

// Optional cache of per-layer inputs, neighbor means, and pre-activations
// so training can backpropagate without recomputation.
struct ForwardCache {
    std::vector<std::vector<std::vector<double>>> inputs;    // per layer: n x h_{l-1}
    std::vector<std::vector<std::vector<double>>> nbr_means; // per layer: n x h_{l-1}
    std::vector<std::vector<std::vector<double>>> preacts;   // per layer: n x h_l
    std::vector<std::vector<NodeId>> neighbors;
};

// Final embeddings Z^(L) for all nodes of the augmented graph (query last).
std::vector<std::vector<double>> gnn_forward(const GnnModel& model, const AugmentedGraph& g1,
                                             const EmbeddingTable& table,
                                             ForwardCache* cache = nullptr);

struct RankedEntry {
    NodeId node;
    double score;        // s_i
    double probability;  // sigmoid(s_i)
};

struct RankedContexts {
    std::vector<RankedEntry> entries;  // scores descending, ties by ascending id
    std::vector<NodeId> candidate_universe;
};

RankedContexts score_candidates(const GnnModel& model,
                                const std::vector<std::vector<double>>& final_embeddings,
                                const std::vector<NodeId>& candidates, NodeId query_id);

// Full binary cross-entropy with probability clamping to [eps, 1-eps].
double bce_loss(std::span<const double> probabilities, std::span<const int> labels,
                double eps = 1e-7);

struct TrainSample {
    std::string id;
    const Rsg* graph;
    const EmbeddingTable* table;
    QueryNode query;
    NodeId gold;
    std::vector<NodeId> candidates;  // must contain gold
};

struct TrainConfig {
    int epochs = 10;
    double learning_rate = 0.01;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
};

struct TrainReport {
    std::vector<double> epoch_mean_loss;
};

TrainReport train_model(GnnModel& model, const std::vector<TrainSample>& dataset,
                        const TrainConfig& config);

// Gradients in the same shapes as the model parameters; used by training
// and by the finite-difference checks.
struct GnnGradients {
    std::vector<Matrix> self_weights;
    std::vector<Matrix> nbr_weights;
    std::vector<double> scoring;
};

double sample_loss(const GnnModel& model, const TrainSample& sample);
GnnGradients compute_gradients(const GnnModel& model, const TrainSample& sample,
                               double* loss_out = nullptr);

RankedContexts select_top(const RankedContexts& ranked, int n2);

RankedContexts cosine_rerank(std::span<const double> query_embedding,
                             const std::vector<NodeId>& candidates, const EmbeddingTable& table);

void save_model(const GnnModel& model, const std::filesystem::path& path);
GnnModel load_model(const std::filesystem::path& path);

}  // namespace rsg
