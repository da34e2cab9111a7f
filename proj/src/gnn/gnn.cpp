#include "rsg/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "rsg/kernels.hpp"

namespace rsg {

namespace {

// Raw 64-bit draws mapped to [0,1); identical across standard libraries,
// unlike std::uniform_real_distribution.
double next_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void fill_glorot(Matrix& m, int fan_in, int fan_out, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& x : m.data) x = (2.0 * next_unit(rng) - 1.0) * bound;
}

double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

void write_values(std::ostream& out, std::span<const double> values) {
    char buf[40];
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::snprintf(buf, sizeof buf, i == 0 ? "%.9g" : " %.9g", values[i]);
        out << buf;
    }
    out << '\n';
}

}  // namespace

GnnModel init_model(int embedding_dim, int layers, std::uint64_t seed,
                    const std::vector<int>* hidden_dims) {
    if (embedding_dim < 1 || layers < 1) throw GnnError("need embedding_dim >= 1 and layers >= 1");
    GnnModel model;
    model.seed = seed;
    model.dims.assign(static_cast<std::size_t>(layers) + 1, embedding_dim);
    if (hidden_dims != nullptr) {
        if (static_cast<int>(hidden_dims->size()) != layers)
            throw GnnError("hidden_dims must list one width per layer");
        for (int l = 0; l < layers; ++l) model.dims[l + 1] = (*hidden_dims)[l];
    }
    std::mt19937_64 rng(seed);
    for (int l = 0; l < layers; ++l) {
        Matrix w_self(model.dims[l], model.dims[l + 1]);
        Matrix w_nbr(model.dims[l], model.dims[l + 1]);
        fill_glorot(w_self, model.dims[l], model.dims[l + 1], rng);
        fill_glorot(w_nbr, model.dims[l], model.dims[l + 1], rng);
        model.self_weights.push_back(std::move(w_self));
        model.nbr_weights.push_back(std::move(w_nbr));
    }
    const int h_last = model.dims.back();
    model.scoring.resize(2 * static_cast<std::size_t>(h_last));
    const double bound = std::sqrt(6.0 / (2 * h_last + 1));
    for (double& x : model.scoring) x = (2.0 * next_unit(rng) - 1.0) * bound;
    return model;
}

AugmentedGraph::AugmentedGraph(const Rsg& base, const QueryNode& query)
    : base_(&base), query_(&query) {
    for (const auto& [rel, dst] : query.known_edges) {
        (void)rel;
        if (dst < 0 || dst >= static_cast<NodeId>(base.node_count()))
            throw GnnError("known_edge references missing node " + std::to_string(dst));
    }
}

AugmentedGraph attach_query(const Rsg& graph, const QueryNode& query) {
    return AugmentedGraph(graph, query);
}

std::vector<std::vector<NodeId>> AugmentedGraph::neighbor_lists() const {
    const std::size_t n = base_->node_count();
    std::vector<std::vector<NodeId>> lists(n + 1);
    for (std::size_t i = 0; i < n; ++i) lists[i] = base_->all_neighbors(static_cast<NodeId>(i));
    std::set<NodeId> query_nbrs;
    for (const auto& [rel, dst] : query_->known_edges) {
        (void)rel;
        query_nbrs.insert(dst);
    }
    const NodeId q = query_id();
    for (NodeId dst : query_nbrs) lists[dst].insert(std::lower_bound(lists[dst].begin(), lists[dst].end(), q), q);
    lists[n].assign(query_nbrs.begin(), query_nbrs.end());
    return lists;
}

std::vector<std::vector<double>> gnn_forward(const GnnModel& model, const AugmentedGraph& g1,
                                             const EmbeddingTable& table, ForwardCache* cache) {
    const std::size_t n_base = g1.base().node_count();
    const std::size_t n = n_base + 1;
    if (table.size() != n_base) throw GnnError("embedding table does not cover the base graph");
    if (table.dimension != model.input_dim())
        throw GnnError("embedding dimension does not match model input dimension");
    if (static_cast<int>(g1.query().embedding.size()) != model.input_dim())
        throw GnnError("query embedding dimension mismatch");

    std::vector<std::vector<NodeId>> nbrs = g1.neighbor_lists();

    std::vector<std::vector<double>> x(n);
    for (std::size_t i = 0; i < n_base; ++i) x[i] = table.entries[i];
    x[n_base] = g1.query().embedding;

    const int layers = model.layer_count();
    if (cache != nullptr) {
        cache->inputs.clear();
        cache->nbr_means.clear();
        cache->preacts.clear();
        cache->neighbors = nbrs;
    }

    for (int l = 0; l < layers; ++l) {
        const int h_prev = model.dims[l];
        const int h_cur = model.dims[l + 1];
        const Matrix& w_self = model.self_weights[l];
        const Matrix& w_nbr = model.nbr_weights[l];
        const bool last = (l == layers - 1);

        std::vector<std::vector<double>> means(n, std::vector<double>(h_prev, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            if (nbrs[i].empty()) continue;  // isolated nodes use a zero neighbor mean
            for (NodeId j : nbrs[i])
                kernels::axpy(means[i].data(), 1.0, x[j].data(), static_cast<std::size_t>(h_prev));
            const double inv = 1.0 / static_cast<double>(nbrs[i].size());
            for (double& v : means[i]) v *= inv;
        }

        std::vector<std::vector<double>> pre(n, std::vector<double>(h_cur, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            for (int r = 0; r < h_prev; ++r) {
                kernels::axpy(pre[i].data(), x[i][r], w_self.row(r), static_cast<std::size_t>(h_cur));
                kernels::axpy(pre[i].data(), means[i][r], w_nbr.row(r),
                              static_cast<std::size_t>(h_cur));
            }
        }

        if (cache != nullptr) {
            cache->inputs.push_back(x);
            cache->nbr_means.push_back(means);
            cache->preacts.push_back(pre);
        }

        std::vector<std::vector<double>> next(n, std::vector<double>(h_cur));
        for (std::size_t i = 0; i < n; ++i) {
            for (int c = 0; c < h_cur; ++c)
                next[i][c] = last ? pre[i][c] : std::max(0.0, pre[i][c]);
        }
        x = std::move(next);
    }
    return x;
}

RankedContexts score_candidates(const GnnModel& model,
                                const std::vector<std::vector<double>>& final_embeddings,
                                const std::vector<NodeId>& candidates, NodeId query_id) {
    if (candidates.empty()) throw GnnError("empty candidate set");
    const int h = model.output_dim();
    if (static_cast<std::size_t>(model.scoring.size()) != 2 * static_cast<std::size_t>(h))
        throw GnnError("scoring vector dimension mismatch");
    const double* w_node = model.scoring.data();
    const double* w_query = model.scoring.data() + h;
    const double query_term =
        kernels::dot(w_query, final_embeddings.at(query_id).data(), static_cast<std::size_t>(h));

    RankedContexts out;
    out.candidate_universe = candidates;
    for (NodeId c : candidates) {
        const double s =
            kernels::dot(w_node, final_embeddings.at(c).data(), static_cast<std::size_t>(h)) +
            query_term;
        out.entries.push_back({c, s, sigmoid(s)});
    }
    std::sort(out.entries.begin(), out.entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.node < b.node;
    });
    return out;
}

double bce_loss(std::span<const double> probabilities, std::span<const int> labels, double eps) {
    if (probabilities.size() != labels.size()) throw GnnError("probability/label length mismatch");
    if (probabilities.empty()) throw GnnError("empty loss input");
    double total = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw GnnError("labels must lie in {0,1}");
        const double p = std::clamp(probabilities[i], eps, 1.0 - eps);
        total += labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
    }
    return -total / static_cast<double>(probabilities.size());
}

namespace {

struct SampleEval {
    double loss = 0.0;
    std::vector<double> score_grads;  // dL/ds per candidate, candidate order
    std::vector<NodeId> candidates;
    ForwardCache cache;
    std::vector<std::vector<double>> final_embeddings;
};

SampleEval eval_sample(const GnnModel& model, const TrainSample& sample, bool with_cache) {
    if (std::find(sample.candidates.begin(), sample.candidates.end(), sample.gold) ==
        sample.candidates.end())
        throw GnnError("sample " + sample.id + ": gold node is not among the candidates");
    AugmentedGraph g1(*sample.graph, sample.query);
    SampleEval ev;
    ev.candidates = sample.candidates;
    ev.final_embeddings = gnn_forward(model, g1, *sample.table, with_cache ? &ev.cache : nullptr);

    const int h = model.output_dim();
    const double* w_node = model.scoring.data();
    const double* w_query = model.scoring.data() + h;
    const double query_term = kernels::dot(w_query, ev.final_embeddings[g1.query_id()].data(),
                                           static_cast<std::size_t>(h));
    const auto n1 = static_cast<double>(sample.candidates.size());
    constexpr double eps = 1e-7;
    ev.score_grads.resize(sample.candidates.size());
    double total = 0.0;
    for (std::size_t i = 0; i < sample.candidates.size(); ++i) {
        const NodeId c = sample.candidates[i];
        const double s = kernels::dot(w_node, ev.final_embeddings[c].data(),
                                      static_cast<std::size_t>(h)) +
                         query_term;
        const double p = sigmoid(s);
        const double pc = std::clamp(p, eps, 1.0 - eps);
        const int y = (c == sample.gold) ? 1 : 0;
        total += y == 1 ? std::log(pc) : std::log(1.0 - pc);
        // d(-BCE)/ds with sigmoid folded in; clamping only matters in a
        // region where the gradient is numerically zero anyway.
        ev.score_grads[i] = (p - y) / n1;
    }
    ev.loss = -total / n1;
    return ev;
}

}  // namespace

double sample_loss(const GnnModel& model, const TrainSample& sample) {
    return eval_sample(model, sample, false).loss;
}

GnnGradients compute_gradients(const GnnModel& model, const TrainSample& sample, double* loss_out) {
    SampleEval ev = eval_sample(model, sample, true);
    if (loss_out != nullptr) *loss_out = ev.loss;

    const int layers = model.layer_count();
    GnnGradients grads;
    grads.scoring.assign(model.scoring.size(), 0.0);
    for (int l = 0; l < layers; ++l) {
        grads.self_weights.emplace_back(model.dims[l], model.dims[l + 1]);
        grads.nbr_weights.emplace_back(model.dims[l], model.dims[l + 1]);
    }

    const std::size_t n = ev.final_embeddings.size();
    const int h_last = model.output_dim();
    const NodeId query_id = static_cast<NodeId>(n - 1);

    // Scoring head.
    std::vector<std::vector<double>> dx(n, std::vector<double>(h_last, 0.0));
    double ds_total = 0.0;
    for (std::size_t i = 0; i < ev.candidates.size(); ++i) {
        const NodeId c = ev.candidates[i];
        const double ds = ev.score_grads[i];
        ds_total += ds;
        kernels::axpy(grads.scoring.data(), ds, ev.final_embeddings[c].data(),
                      static_cast<std::size_t>(h_last));
        kernels::axpy(dx[c].data(), ds, model.scoring.data(), static_cast<std::size_t>(h_last));
    }
    kernels::axpy(grads.scoring.data() + h_last, ds_total, ev.final_embeddings[query_id].data(),
                  static_cast<std::size_t>(h_last));
    kernels::axpy(dx[query_id].data(), ds_total, model.scoring.data() + h_last,
                  static_cast<std::size_t>(h_last));

    // Layers, last to first.
    for (int l = layers - 1; l >= 0; --l) {
        const int h_prev = model.dims[l];
        const int h_cur = model.dims[l + 1];
        const bool last = (l == layers - 1);
        const auto& inputs = ev.cache.inputs[l];
        const auto& means = ev.cache.nbr_means[l];
        const auto& pre = ev.cache.preacts[l];
        const Matrix& w_self = model.self_weights[l];
        const Matrix& w_nbr = model.nbr_weights[l];

        std::vector<std::vector<double>> dpre(n, std::vector<double>(h_cur));
        for (std::size_t i = 0; i < n; ++i) {
            for (int c = 0; c < h_cur; ++c)
                dpre[i][c] = last ? dx[i][c] : (pre[i][c] > 0.0 ? dx[i][c] : 0.0);
        }

        std::vector<std::vector<double>> dx_prev(n, std::vector<double>(h_prev, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            for (int r = 0; r < h_prev; ++r) {
                kernels::axpy(grads.self_weights[l].row(r), inputs[i][r], dpre[i].data(),
                              static_cast<std::size_t>(h_cur));
                kernels::axpy(grads.nbr_weights[l].row(r), means[i][r], dpre[i].data(),
                              static_cast<std::size_t>(h_cur));
                dx_prev[i][r] += kernels::dot(w_self.row(r), dpre[i].data(),
                                              static_cast<std::size_t>(h_cur));
            }
            const auto& nb = ev.cache.neighbors[i];
            if (nb.empty()) continue;
            const double inv = 1.0 / static_cast<double>(nb.size());
            for (int r = 0; r < h_prev; ++r) {
                const double dm =
                    kernels::dot(w_nbr.row(r), dpre[i].data(), static_cast<std::size_t>(h_cur)) *
                    inv;
                for (NodeId j : nb) dx_prev[j][r] += dm;
            }
        }
        dx = std::move(dx_prev);
    }
    return grads;
}

namespace {

struct AdamState {
    std::vector<double> m, v;
    explicit AdamState(std::size_t size) : m(size, 0.0), v(size, 0.0) {}
};

void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state,
               const TrainConfig& cfg, long t) {
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
}

}  // namespace

TrainReport train_model(GnnModel& model, const std::vector<TrainSample>& dataset,
                        const TrainConfig& config) {
    if (dataset.empty()) throw GnnError("empty training dataset");
    const int layers = model.layer_count();
    std::vector<AdamState> self_state, nbr_state;
    for (int l = 0; l < layers; ++l) {
        self_state.emplace_back(model.self_weights[l].data.size());
        nbr_state.emplace_back(model.nbr_weights[l].data.size());
    }
    AdamState scoring_state(model.scoring.size());

    TrainReport report;
    long t = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (const TrainSample& sample : dataset) {
            double loss = 0.0;
            GnnGradients grads = compute_gradients(model, sample, &loss);
            if (!std::isfinite(loss))
                throw GnnError("non-finite loss on sample " + sample.id);
            epoch_loss += loss;
            ++t;
            for (int l = 0; l < layers; ++l) {
                adam_step(model.self_weights[l].data, grads.self_weights[l].data, self_state[l],
                          config, t);
                adam_step(model.nbr_weights[l].data, grads.nbr_weights[l].data, nbr_state[l],
                          config, t);
            }
            adam_step(model.scoring, grads.scoring, scoring_state, config, t);
        }
        report.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(dataset.size()));
    }
    return report;
}

RankedContexts select_top(const RankedContexts& ranked, int n2) {
    if (n2 < 1 || static_cast<std::size_t>(n2) > ranked.entries.size())
        throw GnnError("N2 must lie in [1, ranked size]");
    RankedContexts out;
    out.candidate_universe = ranked.candidate_universe;
    out.entries.assign(ranked.entries.begin(), ranked.entries.begin() + n2);
    return out;
}

RankedContexts cosine_rerank(std::span<const double> query_embedding,
                             const std::vector<NodeId>& candidates, const EmbeddingTable& table) {
    if (candidates.empty()) throw GnnError("empty candidate set");
    RankedContexts out;
    out.candidate_universe = candidates;
    for (NodeId c : candidates) {
        const double s = kernels::dot(table.entries.at(c).data(), query_embedding.data(),
                                      query_embedding.size());
        out.entries.push_back({c, s, sigmoid(s)});
    }
    std::sort(out.entries.begin(), out.entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.node < b.node;
    });
    return out;
}

void save_model(const GnnModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw GnnError("cannot open " + path.string() + " for writing");
    out << "RSGGNN " << kModelFormatVersion << '\n';
    out << "seed " << model.seed << '\n';
    out << "dims";
    for (int d : model.dims) out << ' ' << d;
    out << '\n';
    out << "meta " << model.metadata.size() << '\n';
    for (const auto& [k, v] : model.metadata) out << k << ' ' << v << '\n';
    for (int l = 0; l < model.layer_count(); ++l) {
        out << "layer " << l << " self\n";
        for (int r = 0; r < model.self_weights[l].rows; ++r)
            write_values(out, {model.self_weights[l].row(r),
                               static_cast<std::size_t>(model.self_weights[l].cols)});
        out << "layer " << l << " nbr\n";
        for (int r = 0; r < model.nbr_weights[l].rows; ++r)
            write_values(out, {model.nbr_weights[l].row(r),
                               static_cast<std::size_t>(model.nbr_weights[l].cols)});
    }
    out << "scoring\n";
    write_values(out, model.scoring);
}

GnnModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw GnnError("cannot open " + path.string());
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "RSGGNN" || version != kModelFormatVersion)
        throw GnnError("not a model file (or unsupported version): " + path.string());
    GnnModel model;
    std::string tok;
    in >> tok >> model.seed;
    if (tok != "seed") throw GnnError("malformed model file: expected seed");
    in >> tok;
    if (tok != "dims") throw GnnError("malformed model file: expected dims");
    {
        std::string rest;
        std::getline(in, rest);
        std::istringstream ds(rest);
        int d;
        while (ds >> d) model.dims.push_back(d);
        if (model.dims.size() < 2) throw GnnError("model needs at least one layer");
    }
    std::size_t meta_count = 0;
    in >> tok >> meta_count;
    if (tok != "meta") throw GnnError("malformed model file: expected meta");
    std::getline(in, tok);
    for (std::size_t i = 0; i < meta_count; ++i) {
        std::string line;
        std::getline(in, line);
        auto sp = line.find(' ');
        if (sp == std::string::npos) throw GnnError("malformed model metadata line: " + line);
        model.metadata.emplace(line.substr(0, sp), line.substr(sp + 1));
    }
    const int layers = static_cast<int>(model.dims.size()) - 1;
    auto read_matrix = [&](int l, const char* role) {
        std::string kw, role_tok;
        int idx = -1;
        in >> kw >> idx >> role_tok;
        if (kw != "layer" || idx != l || role_tok != role)
            throw GnnError("malformed model file: expected layer " + std::to_string(l) + " " + role);
        Matrix m(model.dims[l], model.dims[l + 1]);
        for (double& x : m.data) {
            if (!(in >> x) || !std::isfinite(x))
                throw GnnError("malformed or non-finite weight in model file");
        }
        return m;
    };
    for (int l = 0; l < layers; ++l) {
        model.self_weights.push_back(read_matrix(l, "self"));
        model.nbr_weights.push_back(read_matrix(l, "nbr"));
    }
    in >> tok;
    if (tok != "scoring") throw GnnError("malformed model file: expected scoring");
    model.scoring.resize(2 * static_cast<std::size_t>(model.dims.back()));
    for (double& x : model.scoring) {
        if (!(in >> x) || !std::isfinite(x))
            throw GnnError("malformed or non-finite scoring weight in model file");
    }
    return model;
}

}  // namespace rsg
