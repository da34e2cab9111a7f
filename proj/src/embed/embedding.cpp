#include "rsg/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rsg/kernels.hpp"

namespace rsg {

namespace {

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void normalize_or_basis(std::vector<double>& v) {
    double norm2 = kernels::dot_scalar(v.data(), v.data(), v.size());
    if (norm2 <= 0.0) {
        std::fill(v.begin(), v.end(), 0.0);
        v[0] = 1.0;  // reserved basis vector for empty/zero inputs
        return;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
}

}  // namespace

std::vector<double> baseline_embed(std::string_view text, int dimension) {
    if (dimension < 16 || (dimension & (dimension - 1)) != 0)
        throw EmbeddingError("dimension must be a power of two >= 16");
    std::vector<double> v(dimension, 0.0);
    std::string token;
    bool any = false;
    auto flush = [&] {
        if (token.empty()) return;
        for (char& c : token) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        const std::uint64_t h = fnv1a64(token);
        const int bucket = static_cast<int>(h & static_cast<std::uint64_t>(dimension - 1));
        const double sign = ((h >> 32) & 1u) != 0 ? 1.0 : -1.0;
        v[bucket] += sign;
        any = true;
        token.clear();
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_')
            token.push_back(c);
        else
            flush();
    }
    flush();
    if (!any) {
        v[0] = 1.0;
        return v;
    }
    normalize_or_basis(v);
    return v;
}

BaselineEncoder::BaselineEncoder(int dimension) : dimension_(dimension) {
    if (dimension < 16 || (dimension & (dimension - 1)) != 0)
        throw EmbeddingError("dimension must be a power of two >= 16");
}

std::string BaselineEncoder::id() const {
    return "baseline-d" + std::to_string(dimension_) + "-fulltext";
}

std::vector<double> BaselineEncoder::encode(std::string_view text) const {
    if (text.empty()) throw EmbeddingError("cannot encode empty text");
    return baseline_embed(text, dimension_);
}

EmbeddingTable build_table(const Rsg& graph, const Encoder& encoder) {
    EmbeddingTable table;
    table.provenance = encoder.id();
    for (const RsgNode& n : graph.nodes()) {
        std::string_view text = n.source_text;
        std::vector<double> v =
            text.empty() ? encoder.encode(n.qualified_name) : encoder.encode(text);
        if (table.dimension == 0) table.dimension = static_cast<int>(v.size());
        table.entries.push_back(std::move(v));
    }
    return table;
}

std::vector<std::pair<NodeId, double>> knn_search(const EmbeddingTable& table,
                                                  std::span<const double> query, int k) {
    if (k < 1 || static_cast<std::size_t>(k) > table.size())
        throw EmbeddingError("K must be in [1, table size], got " + std::to_string(k));
    if (static_cast<int>(query.size()) != table.dimension)
        throw EmbeddingError("query dimension mismatch");
    std::vector<std::pair<NodeId, double>> scored(table.size());
    for (std::size_t i = 0; i < table.size(); ++i) {
        scored[i] = {static_cast<NodeId>(i),
                     kernels::dot(table.entries[i].data(), query.data(), query.size())};
    }
    auto better = [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    };
    std::partial_sort(scored.begin(), scored.begin() + k, scored.end(), better);
    scored.resize(k);
    return scored;
}

void save_table(const EmbeddingTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw EmbeddingError("cannot open " + path.string() + " for writing");
    out << "RSGEMB " << kEmbeddingFormatVersion << ' ' << table.dimension << ' '
        << table.provenance << '\n';
    char buf[40];
    for (std::size_t i = 0; i < table.entries.size(); ++i) {
        out << i;
        for (double x : table.entries[i]) {
            std::snprintf(buf, sizeof buf, " %.9g", x);
            out << buf;
        }
        out << '\n';
    }
}

EmbeddingTable load_table(const std::filesystem::path& path, std::size_t expected_nodes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw EmbeddingError("cannot open " + path.string());
    std::string magic;
    int version = 0;
    EmbeddingTable table;
    in >> magic >> version >> table.dimension;
    std::getline(in, table.provenance);
    if (magic != "RSGEMB" || version != kEmbeddingFormatVersion)
        throw EmbeddingError("not an embeddings file (or unsupported version): " + path.string());
    if (table.dimension < 1) throw EmbeddingError("invalid dimension in header");
    if (!table.provenance.empty() && table.provenance.front() == ' ')
        table.provenance.erase(0, 1);

    table.entries.assign(expected_nodes, {});
    std::vector<bool> seen(expected_nodes, false);
    std::string line;
    std::size_t record = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++record;
        std::istringstream ls(line);
        long long id = -1;
        ls >> id;
        if (id < 0 || static_cast<std::size_t>(id) >= expected_nodes)
            throw EmbeddingError("record " + std::to_string(record) + ": node id " +
                                 std::to_string(id) + " out of range");
        std::vector<double> v(table.dimension);
        for (int j = 0; j < table.dimension; ++j) {
            if (!(ls >> v[j]))
                throw EmbeddingError("record " + std::to_string(record) + ": dimension mismatch");
            if (!std::isfinite(v[j]))
                throw EmbeddingError("record " + std::to_string(record) + ": non-finite value");
        }
        double extra;
        if (ls >> extra)
            throw EmbeddingError("record " + std::to_string(record) + ": dimension mismatch");
        const double norm = std::sqrt(kernels::dot_scalar(v.data(), v.data(), v.size()));
        if (std::abs(norm - 1.0) > 1e-6) normalize_or_basis(v);
        table.entries[static_cast<std::size_t>(id)] = std::move(v);
        seen[static_cast<std::size_t>(id)] = true;
    }
    for (std::size_t i = 0; i < expected_nodes; ++i)
        if (!seen[i]) throw EmbeddingError("missing embedding for node " + std::to_string(i));
    return table;
}

}  // namespace rsg
