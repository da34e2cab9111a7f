#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsg/graph.hpp"

namespace rsg {

class EmbeddingError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kEmbeddingFormatVersion = 1;

// Pluggable encoder; identified by a provenance string stored in every table.
class Encoder {
  public:
    virtual ~Encoder() = default;
    virtual std::string id() const = 0;
    // Deterministic unit-norm vector for a non-empty text.
    virtual std::vector<double> encode(std::string_view text) const = 0;
};

// Signed feature hashing over identifier/word tokens; the desk-scale
// stand-in for a neural encoder. d must be a power of two, >= 16.
std::vector<double> baseline_embed(std::string_view text, int dimension);

class BaselineEncoder : public Encoder {
  public:
    explicit BaselineEncoder(int dimension);
    std::string id() const override;
    std::vector<double> encode(std::string_view text) const override;
    int dimension() const { return dimension_; }

  private:
    int dimension_;
};

struct EmbeddingTable {
    int dimension = 0;
    std::string provenance;
    std::vector<std::vector<double>> entries;  // node id -> unit vector

    std::size_t size() const { return entries.size(); }
};

// One entry per graph node, encoding full source_text.
EmbeddingTable build_table(const Rsg& graph, const Encoder& encoder);

// Exact top-K by cosine similarity, descending, ties broken by ascending
// node id. Stored vectors are unit-norm so cosine equals the dot product.
std::vector<std::pair<NodeId, double>> knn_search(const EmbeddingTable& table,
                                                  std::span<const double> query, int k);

// Line-oriented wire format: "RSGEMB <version> <d> <provenance>" then one
// record per node at 9 significant digits.
void save_table(const EmbeddingTable& table, const std::filesystem::path& path);

// Loads and checks an external table: every id in [0, expected_nodes),
// consistent dimension, finite values. Vectors off unit norm by more than
// 1e-6 are re-normalized; zero vectors map to basis vector 0.
EmbeddingTable load_table(const std::filesystem::path& path, std::size_t expected_nodes);

}  // namespace rsg
