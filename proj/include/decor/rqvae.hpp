// rqvae.hpp
// Residual-quantized autoencoder used as the semantic indexer: an MLP
// encoder/decoder pair with M codebooks quantizing successive residuals,
// trained on reconstruction plus the quantization losses, then used to
// assign collision-disambiguated semantic ids.
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "decor/optim.hpp"
#include "decor/params.hpp"
#include "decor/tensor.hpp"

namespace decor {

struct RqVaeConfig {
    int levels = 3;
    int codebook_size = 256;
    int latent_dim = 128;
    double beta = 0.25;
    int input_dim = 768;
    std::vector<int> encoder_hidden = {512, 256};
    double learning_rate = 1e-3;
    int epochs = 200;
    int batch_size = 256;
    int collision_vocab = 64;
    bool kmeans_init = true;
    int kmeans_iters = 25;
    uint64_t seed = 2025;

    void validate() const {
        DECOR_REQUIRE(levels >= 1, ConfigError, "tokenizer.levels must be >= 1");
        DECOR_REQUIRE(codebook_size >= 2, ConfigError, "tokenizer.codebook_size must be >= 2");
        DECOR_REQUIRE(beta > 0.0, ConfigError, "tokenizer.beta must be positive");
        DECOR_REQUIRE(latent_dim >= 1 && input_dim >= 1, ConfigError, "tokenizer dims must be positive");
        DECOR_REQUIRE(collision_vocab >= 1, ConfigError, "tokenizer.collision_vocab must be >= 1");
    }
};

struct SemanticID {
    std::vector<int> codes;  // one per level, in [0, K)
    int collision = 0;

    bool operator==(const SemanticID& o) const {
        return codes == o.codes && collision == o.collision;
    }
};

// ---------------------------------------------------------------------------
// MLP stack: Linear layers with ReLU between, linear output.
// ---------------------------------------------------------------------------

template <typename T>
struct Mlp {
    std::vector<Parameter<T>> weights;  // {out, in}
    std::vector<Parameter<T>> biases;   // {out}

    void build(const std::string& prefix, int in_dim, const std::vector<int>& hidden, int out_dim,
               std::mt19937_64& rng) {
        std::vector<int> dims;
        dims.push_back(in_dim);
        for (int h : hidden) dims.push_back(h);
        dims.push_back(out_dim);
        for (size_t i = 0; i + 1 < dims.size(); ++i) {
            int64_t fan_in = dims[i], fan_out = dims[i + 1];
            weights.emplace_back(prefix + ".W" + std::to_string(i), num::Shape{fan_out, fan_in},
                                 xavier_init<T>(fan_out, fan_in, rng));
            biases.emplace_back(prefix + ".b" + std::to_string(i), num::Shape{fan_out},
                                std::vector<T>(static_cast<size_t>(fan_out), T(0)));
        }
    }

    num::Tensor<T> forward(num::Tensor<T> x) const {
        for (size_t i = 0; i < weights.size(); ++i) {
            x = num::add_rowvec(num::matmul(x, weights[i].tensor, false, true), biases[i].tensor);
            if (i + 1 < weights.size()) x = num::relu(x);
        }
        return x;
    }

    void collect(ParamSet<T>& out) {
        for (auto& w : weights) out.add(w);
        for (auto& b : biases) out.add(b);
    }
};

// ---------------------------------------------------------------------------
// Model.
// ---------------------------------------------------------------------------

template <typename T>
struct RqVaeModel {
    RqVaeConfig config;
    Mlp<T> encoder;
    Mlp<T> decoder;
    std::vector<Parameter<T>> codebooks;  // per level, {K, d}

    static RqVaeModel init(const RqVaeConfig& cfg) {
        cfg.validate();
        RqVaeModel m;
        m.config = cfg;
        std::mt19937_64 rng(derive_seed(cfg.seed, "rqvae.init"));
        m.encoder.build("rqvae.encoder", cfg.input_dim, cfg.encoder_hidden, cfg.latent_dim, rng);
        std::vector<int> rev(cfg.encoder_hidden.rbegin(), cfg.encoder_hidden.rend());
        m.decoder.build("rqvae.decoder", cfg.latent_dim, rev, cfg.input_dim, rng);
        for (int l = 0; l < cfg.levels; ++l) {
            m.codebooks.emplace_back("rqvae.codebook." + std::to_string(l),
                                     num::Shape{cfg.codebook_size, cfg.latent_dim},
                                     normal_init<T>(static_cast<size_t>(cfg.codebook_size) *
                                                        static_cast<size_t>(cfg.latent_dim),
                                                    0.02, rng));
        }
        return m;
    }

    void collect_params(ParamSet<T>& out) {
        encoder.collect(out);
        decoder.collect(out);
        for (auto& cb : codebooks) out.add(cb);
    }

    num::Tensor<T> encode(const num::Tensor<T>& x) const {
        DECOR_REQUIRE(x.cols() == config.input_dim, NumericsError,
                      "encode: input width " << x.cols() << " != " << config.input_dim);
        return encoder.forward(x);
    }
    num::Tensor<T> decode(const num::Tensor<T>& r) const { return decoder.forward(r); }
};

// ---------------------------------------------------------------------------
// Quantization. Nearest neighbor on values, lowest index wins ties.
// ---------------------------------------------------------------------------

template <typename T>
int nearest_code(const T* z, const T* codebook, int k, int d) {
    int best = 0;
    T best_dist = T(0);
    for (int j = 0; j < d; ++j) {
        T diff = z[j] - codebook[j];
        best_dist += diff * diff;
    }
    for (int c = 1; c < k; ++c) {
        const T* row = codebook + static_cast<size_t>(c) * d;
        T dist = T(0);
        for (int j = 0; j < d; ++j) {
            T diff = z[j] - row[j];
            dist += diff * diff;
        }
        if (dist < best_dist) {
            best_dist = dist;
            best = c;
        }
    }
    return best;
}

template <typename T>
struct LevelQuantization {
    int index = 0;
    num::Tensor<T> residual;
};

template <typename T>
LevelQuantization<T> quantize_level(const num::Tensor<T>& z, const Parameter<T>& codebook) {
    int k = static_cast<int>(codebook.tensor.rows());
    int d = static_cast<int>(codebook.tensor.cols());
    DECOR_REQUIRE(z.numel() == d, NumericsError, "quantize_level: width mismatch");
    int idx = nearest_code(z.value().data(), codebook.values().data(), k, d);
    num::Tensor<T> picked = num::gather_rows(codebook.tensor, {static_cast<int32_t>(idx)});
    return {idx, num::sub(z, num::stop_gradient(picked))};
}

// Residual trace across all levels.  The z chain subtracts stop-gradient
// codebook rows, so the encoder path stays identity through quantization
// while codebooks learn only from their own loss term.
template <typename T>
struct QuantizationTrace {
    std::vector<num::Tensor<T>> z;             // z_0 .. z_M, each {B, d}
    std::vector<std::vector<int32_t>> codes;   // [level][row]
    std::vector<num::Tensor<T>> picked;        // gathered codebook rows per level
    num::Tensor<T> quantized_sum;              // r~ = sum of picked rows
};

template <typename T>
QuantizationTrace<T> quantize(const num::Tensor<T>& z0, const RqVaeModel<T>& model) {
    const RqVaeConfig& cfg = model.config;
    int64_t batch = z0.rows();
    int d = cfg.latent_dim;
    QuantizationTrace<T> trace;
    trace.z.push_back(z0);
    num::Tensor<T> z_prev = z0;
    for (int l = 0; l < cfg.levels; ++l) {
        const Parameter<T>& cb = model.codebooks[static_cast<size_t>(l)];
        std::vector<int32_t> idx(static_cast<size_t>(batch));
        for (int64_t i = 0; i < batch; ++i) {
            idx[static_cast<size_t>(i)] = static_cast<int32_t>(nearest_code(
                z_prev.value().data() + i * d, cb.values().data(), cfg.codebook_size, d));
        }
        num::Tensor<T> picked = num::gather_rows(cb.tensor, idx);
        trace.codes.push_back(std::move(idx));
        trace.picked.push_back(picked);
        trace.quantized_sum = l == 0 ? picked : num::add(trace.quantized_sum, picked);
        z_prev = num::sub(z_prev, num::stop_gradient(picked));
        trace.z.push_back(z_prev);
    }
    return trace;
}

template <typename T>
struct RqVaeLosses {
    num::Tensor<T> recon;
    num::Tensor<T> rq;
    num::Tensor<T> sq;
};

// Mean-per-example losses.  Decoder input uses the straight-through
// estimator: value r~, gradient routed to z_0.
template <typename T>
RqVaeLosses<T> rqvae_losses(const num::Tensor<T>& x, const QuantizationTrace<T>& trace,
                            const RqVaeModel<T>& model) {
    T inv_b = T(1) / static_cast<T>(x.rows());
    num::Tensor<T> z0 = trace.z.front();
    num::Tensor<T> ste = num::add(z0, num::stop_gradient(num::sub(trace.quantized_sum, z0)));
    num::Tensor<T> recon = num::scale(num::sum_squares(num::sub(x, model.decode(ste))), inv_b);

    num::Tensor<T> rq;
    for (size_t l = 0; l < trace.picked.size(); ++l) {
        num::Tensor<T> z_prev = trace.z[l];
        num::Tensor<T> e = trace.picked[l];
        num::Tensor<T> codebook_term = num::sum_squares(num::sub(num::stop_gradient(z_prev), e));
        num::Tensor<T> commit_term = num::sum_squares(num::sub(z_prev, num::stop_gradient(e)));
        num::Tensor<T> level = num::add(codebook_term,
                                        num::scale(commit_term, static_cast<T>(model.config.beta)));
        rq = l == 0 ? level : num::add(rq, level);
    }
    rq = num::scale(rq, inv_b);
    return {recon, rq, num::add(recon, rq)};
}

// ---------------------------------------------------------------------------
// Deterministic k-means (k-means++ seeding, Lloyd updates, empty clusters
// reseeded to the farthest point).
// ---------------------------------------------------------------------------

template <typename T>
std::vector<T> kmeans(const std::vector<T>& points, int64_t n, int d, int k, int iters,
                      std::mt19937_64& rng) {
    std::vector<T> centroids(static_cast<size_t>(k) * d);
    std::uniform_int_distribution<int64_t> pick(0, n - 1);
    std::vector<double> dist2(static_cast<size_t>(n), 0.0);

    int64_t first = pick(rng);
    std::copy_n(points.data() + first * d, d, centroids.data());
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            double best = 1e300;
            for (int cc = 0; cc < c; ++cc) {
                double s = 0.0;
                for (int j = 0; j < d; ++j) {
                    double diff = static_cast<double>(points[static_cast<size_t>(i * d + j)]) -
                                  static_cast<double>(centroids[static_cast<size_t>(cc * d + j)]);
                    s += diff * diff;
                }
                best = std::min(best, s);
            }
            dist2[static_cast<size_t>(i)] = best;
            total += best;
        }
        int64_t chosen;
        if (total <= 0.0) {
            chosen = pick(rng);
        } else {
            std::uniform_real_distribution<double> uni(0.0, total);
            double r = uni(rng), acc = 0.0;
            chosen = n - 1;
            for (int64_t i = 0; i < n; ++i) {
                acc += dist2[static_cast<size_t>(i)];
                if (acc >= r) {
                    chosen = i;
                    break;
                }
            }
        }
        std::copy_n(points.data() + chosen * d, d, centroids.data() + static_cast<size_t>(c) * d);
    }

    std::vector<int> assign(static_cast<size_t>(n), -1);
    for (int it = 0; it < iters; ++it) {
        bool changed = false;
        for (int64_t i = 0; i < n; ++i) {
            int a = nearest_code(points.data() + i * d, centroids.data(), k, d);
            if (a != assign[static_cast<size_t>(i)]) {
                assign[static_cast<size_t>(i)] = a;
                changed = true;
            }
        }
        if (!changed) break;
        std::vector<double> sums(static_cast<size_t>(k) * d, 0.0);
        std::vector<int64_t> counts(static_cast<size_t>(k), 0);
        for (int64_t i = 0; i < n; ++i) {
            int a = assign[static_cast<size_t>(i)];
            ++counts[static_cast<size_t>(a)];
            for (int j = 0; j < d; ++j)
                sums[static_cast<size_t>(a * d + j)] += static_cast<double>(points[static_cast<size_t>(i * d + j)]);
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] == 0) {
                // reseed to the point farthest from its assigned centroid
                int64_t far_i = 0;
                double far_d = -1.0;
                for (int64_t i = 0; i < n; ++i) {
                    int a = assign[static_cast<size_t>(i)];
                    double s = 0.0;
                    for (int j = 0; j < d; ++j) {
                        double diff = static_cast<double>(points[static_cast<size_t>(i * d + j)]) -
                                      static_cast<double>(centroids[static_cast<size_t>(a * d + j)]);
                        s += diff * diff;
                    }
                    if (s > far_d) {
                        far_d = s;
                        far_i = i;
                    }
                }
                for (int j = 0; j < d; ++j)
                    centroids[static_cast<size_t>(c * d + j)] = points[static_cast<size_t>(far_i * d + j)];
            } else {
                for (int j = 0; j < d; ++j)
                    centroids[static_cast<size_t>(c * d + j)] =
                        static_cast<T>(sums[static_cast<size_t>(c * d + j)] / static_cast<double>(counts[static_cast<size_t>(c)]));
            }
        }
    }
    return centroids;
}

// Re-perturb exact duplicate rows until all entries are distinct.
template <typename T>
void break_duplicates(std::vector<T>& table, int k, int d, std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, 1e-4);
    bool again = true;
    while (again) {
        again = false;
        for (int a = 0; a < k; ++a) {
            for (int b = a + 1; b < k; ++b) {
                if (std::equal(table.begin() + static_cast<size_t>(a) * d,
                               table.begin() + static_cast<size_t>(a + 1) * d,
                               table.begin() + static_cast<size_t>(b) * d)) {
                    for (int j = 0; j < d; ++j)
                        table[static_cast<size_t>(b) * d + j] += static_cast<T>(noise(rng));
                    again = true;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

struct RqVaeEpochStats {
    double recon = 0.0;
    double rq = 0.0;
    std::vector<double> codebook_usage;  // fraction of K codes hit, per level
};

struct RqVaeTrainLog {
    std::vector<RqVaeEpochStats> epochs;
};

// Codebook init from the first batch: encode, then per level run k-means on
// the running residuals. Falls back to sampled rows when too few items.
template <typename T>
void init_codebooks(RqVaeModel<T>& model, const num::Tensor<T>& items) {
    const RqVaeConfig& cfg = model.config;
    std::mt19937_64 rng(derive_seed(cfg.seed, "rqvae.kmeans"));
    int64_t n = std::min<int64_t>(items.rows(), cfg.batch_size);
    bool use_kmeans = cfg.kmeans_init;
    if (use_kmeans && n < cfg.codebook_size) {
        DECOR_WARN("k-means init requested with " << n << " items < K=" << cfg.codebook_size
                                                  << "; falling back to random init");
        use_kmeans = false;
    }
    num::NoGradGuard ng;
    num::Tensor<T> batch = num::slice_rows(items, 0, n);
    std::vector<T> resid = model.encode(batch).value();
    int d = cfg.latent_dim;
    for (int l = 0; l < cfg.levels; ++l) {
        std::vector<T>& table = model.codebooks[static_cast<size_t>(l)].values();
        if (use_kmeans) {
            table = kmeans(resid, n, d, cfg.codebook_size, cfg.kmeans_iters, rng);
        } else {
            std::uniform_int_distribution<int64_t> pick(0, n - 1);
            std::normal_distribution<double> noise(0.0, 0.01);
            for (int c = 0; c < cfg.codebook_size; ++c) {
                int64_t i = pick(rng);
                for (int j = 0; j < d; ++j)
                    table[static_cast<size_t>(c) * d + j] =
                        resid[static_cast<size_t>(i) * d + j] + static_cast<T>(noise(rng));
            }
        }
        break_duplicates(table, cfg.codebook_size, d, rng);
        for (int64_t i = 0; i < n; ++i) {
            int a = nearest_code(resid.data() + i * d, table.data(), cfg.codebook_size, d);
            for (int j = 0; j < d; ++j) resid[static_cast<size_t>(i * d + j)] -= table[static_cast<size_t>(a) * d + j];
        }
    }
}

template <typename T>
RqVaeModel<T> train_rqvae(const num::Tensor<T>& items, const RqVaeConfig& cfg,
                          RqVaeTrainLog* log = nullptr) {
    RqVaeModel<T> model = RqVaeModel<T>::init(cfg);
    init_codebooks(model, items);

    ParamSet<T> params;
    model.collect_params(params);
    AdamW<T> opt(params, {.weight_decay = 0.0});
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, "rqvae.shuffle"));

    int64_t n = items.rows();
    std::vector<int32_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = static_cast<int32_t>(i);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        RqVaeEpochStats stats;
        std::vector<std::set<int>> used(static_cast<size_t>(cfg.levels));
        int64_t batches = 0;
        for (int64_t start = 0; start < n; start += cfg.batch_size) {
            int64_t len = std::min<int64_t>(cfg.batch_size, n - start);
            std::vector<int32_t> idx(order.begin() + start, order.begin() + start + len);
            num::Tensor<T> x = num::gather_rows(items, idx);
            num::Tensor<T> z0 = model.encode(x);
            QuantizationTrace<T> trace = quantize(z0, model);
            RqVaeLosses<T> losses = rqvae_losses(x, trace, model);
            double loss = static_cast<double>(losses.sq.item());
            DECOR_REQUIRE(std::isfinite(loss), DivergenceError,
                          "tokenizer training diverged at epoch " << epoch);
            num::Gradients<T> grads;
            num::backward(losses.sq, grads);
            GradBuffers<T> buf(params);
            for (size_t p = 0; p < params.size(); ++p) {
                const std::vector<T>* g = grads.find(params.at(p).tensor.node());
                if (g != nullptr) buf.slots[p] = *g;
            }
            opt.step(params, buf, cfg.learning_rate);
            stats.recon += static_cast<double>(losses.recon.item());
            stats.rq += static_cast<double>(losses.rq.item());
            ++batches;
            for (int l = 0; l < cfg.levels; ++l)
                for (int32_t c : trace.codes[static_cast<size_t>(l)]) used[static_cast<size_t>(l)].insert(c);
        }
        stats.recon /= static_cast<double>(batches);
        stats.rq /= static_cast<double>(batches);
        for (int l = 0; l < cfg.levels; ++l)
            stats.codebook_usage.push_back(static_cast<double>(used[static_cast<size_t>(l)].size()) /
                                           static_cast<double>(cfg.codebook_size));
        if (log != nullptr) log->epochs.push_back(stats);
        DECOR_INFO("rqvae epoch " << epoch << " recon " << stats.recon << " rq " << stats.rq
                                  << " l1-usage " << stats.codebook_usage.front());
    }
    return model;
}

// ---------------------------------------------------------------------------
// Semantic id assignment and codebook export.
// ---------------------------------------------------------------------------

template <typename T>
std::vector<int> quantize_values(const RqVaeModel<T>& model, const T* z0) {
    const RqVaeConfig& cfg = model.config;
    std::vector<T> resid(z0, z0 + cfg.latent_dim);
    std::vector<int> codes(static_cast<size_t>(cfg.levels));
    for (int l = 0; l < cfg.levels; ++l) {
        const std::vector<T>& table = model.codebooks[static_cast<size_t>(l)].values();
        int c = nearest_code(resid.data(), table.data(), cfg.codebook_size, cfg.latent_dim);
        codes[static_cast<size_t>(l)] = c;
        for (int j = 0; j < cfg.latent_dim; ++j)
            resid[static_cast<size_t>(j)] -= table[static_cast<size_t>(c) * cfg.latent_dim + j];
    }
    return codes;
}

// items must be ordered by item_id (std::map gives that); collision ordinals
// are assigned 0,1,2,... in ascending item_id order within a code group.
template <typename T>
std::map<std::string, SemanticID> assign_semantic_ids(
    const std::map<std::string, std::vector<T>>& items, const RqVaeModel<T>& model) {
    const RqVaeConfig& cfg = model.config;
    num::NoGradGuard ng;

    std::vector<std::string> ids;
    std::vector<T> flat;
    ids.reserve(items.size());
    for (const auto& [id, emb] : items) {
        DECOR_REQUIRE(static_cast<int>(emb.size()) == cfg.input_dim, ConfigError,
                      "item " << id << " embedding width " << emb.size() << " != tokenizer input_dim "
                              << cfg.input_dim);
        ids.push_back(id);
        flat.insert(flat.end(), emb.begin(), emb.end());
    }
    DECOR_REQUIRE(!ids.empty(), ConfigError, "assign_semantic_ids: no items");

    num::Tensor<T> x = num::Tensor<T>::leaf({static_cast<int64_t>(ids.size()), cfg.input_dim},
                                            std::move(flat), false);
    num::Tensor<T> z0 = model.encode(x);

    std::vector<std::vector<int>> all_codes(ids.size());
    parallel_chunks(ids.size(), [&](size_t begin, size_t end, int) {
        for (size_t i = begin; i < end; ++i)
            all_codes[i] = quantize_values(model, z0.value().data() + i * cfg.latent_dim);
    });

    std::map<std::string, SemanticID> result;
    std::map<std::vector<int>, int> next_ordinal;
    for (size_t i = 0; i < ids.size(); ++i) {
        int& ord = next_ordinal[all_codes[i]];
        DECOR_REQUIRE(ord < cfg.collision_vocab, CollisionOverflowError,
                      "collision ordinal for item " << ids[i] << " would exceed vocabulary of "
                                                    << cfg.collision_vocab);
        result.emplace(ids[i], SemanticID{all_codes[i], ord});
        ++ord;
    }
    return result;
}

// Stacked frozen codebooks, level-major rows, consumed by the fused
// embedding table and persisted in checkpoints.
template <typename T>
struct FrozenCodebooks {
    int levels = 0;
    int codebook_size = 0;
    int dim = 0;
    std::vector<T> data;  // levels * codebook_size * dim

    const T* row(int level, int code) const {
        return data.data() +
               (static_cast<size_t>(level) * codebook_size + static_cast<size_t>(code)) * dim;
    }
};

template <typename T>
FrozenCodebooks<T> export_codebooks(const RqVaeModel<T>& model) {
    FrozenCodebooks<T> out;
    out.levels = model.config.levels;
    out.codebook_size = model.config.codebook_size;
    out.dim = model.config.latent_dim;
    for (const auto& cb : model.codebooks)
        out.data.insert(out.data.end(), cb.values().begin(), cb.values().end());
    return out;
}

}  // namespace decor
