// beam.hpp
// Trie-constrained beam search. Inference runs a value-mode incremental
// decoder with per-hypothesis KV caches; the math mirrors the graph path
// op for op so the two routes agree to rounding. At each step logits are
// restricted to trie-valid continuations and renormalized; hypothesis
// scores are summed log-probabilities.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "decor/recommender.hpp"
#include "decor/trie.hpp"

namespace decor {

struct ScoredItem {
    std::string item_id;
    double score;
};

namespace detail {

template <typename T>
void layer_norm_row(const T* x, T* y, int64_t d, const std::vector<T>& gain,
                    const std::vector<T>& bias) {
    T mean = T(0);
    for (int64_t j = 0; j < d; ++j) mean += x[j];
    mean /= static_cast<T>(d);
    T var = T(0);
    for (int64_t j = 0; j < d; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<T>(d);
    T inv = T(1) / std::sqrt(var + T(1e-5));
    for (int64_t j = 0; j < d; ++j) y[j] = (x[j] - mean) * inv * gain[static_cast<size_t>(j)] + bias[static_cast<size_t>(j)];
}

// y {d} = x {d} * W^T, W {out, in}
template <typename T>
void matvec_nt(const T* x, const std::vector<T>& w, T* y, int64_t out, int64_t in) {
    for (int64_t o = 0; o < out; ++o) {
        const T* wrow = w.data() + o * in;
        T s = T(0);
        for (int64_t j = 0; j < in; ++j) s += x[j] * wrow[j];
        y[o] = s;
    }
}

template <typename T>
void softmax_inplace(T* x, int64_t n) {
    T mx = x[0];
    for (int64_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    T sum = T(0);
    for (int64_t i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - mx);
        sum += x[i];
    }
    for (int64_t i = 0; i < n; ++i) x[i] /= sum;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Eval-wide caches: fused vocabulary, per-token pooling scores, composition
// keys. All value copies taken from the graph ops under a no-grad guard.
// ---------------------------------------------------------------------------

template <typename T>
class BeamDecoder {
public:
    BeamDecoder(const RecommenderModel<T>& model, ForwardPath path = ForwardPath::Auto)
        : model_(model), use_decor_(model.decor_active(path)) {
        num::NoGradGuard ng;
        ctx_ = make_step_context(model);
        fused_ = ctx_.fused_vocab.value();
        score_table_ = model.pooler.scores(ctx_.fused_vocab).value();
        for (const auto& k : ctx_.level_keys) level_keys_.push_back(k.value());
        if (model.bos.n >= 1) bos_keys_ = ctx_.bos_keys.value();
        d_ = model.cfg.d_model;
    }

    struct Session {
        std::vector<int32_t> history;
        int64_t hist_len = 0;
        std::vector<T> enc_out;                 // L*d
        std::vector<std::vector<T>> cross_k;    // per layer L*d
        std::vector<std::vector<T>> cross_v;    // per layer L*d
    };

    Session open(const std::vector<int32_t>& history_tokens) const {
        num::NoGradGuard ng;
        Session s;
        s.history = history_tokens;
        TokenizedSequence seq{history_tokens, {}};
        ForwardCtx<T> fwd;  // eval mode
        num::Tensor<T> enc = encode_history(seq, model_, ctx_, fwd, use_decor_);
        s.enc_out = enc.value();
        s.hist_len = enc.rows();
        for (const auto& layer : model_.dec_layers) {
            num::Tensor<T> ck = num::matmul(enc, layer.cross_attn.w_k.tensor, false, true);
            num::Tensor<T> cv = num::matmul(enc, layer.cross_attn.w_v.tensor, false, true);
            s.cross_k.push_back(ck.value());
            s.cross_v.push_back(cv.value());
        }
        return s;
    }

    struct Hyp {
        std::vector<int32_t> tokens;
        int trie_node = 0;
        double score = 0.0;
        std::vector<std::vector<T>> k_cache, v_cache;  // per layer, steps*d
    };

    Hyp fresh_hyp() const {
        Hyp h;
        h.k_cache.resize(model_.dec_layers.size());
        h.v_cache.resize(model_.dec_layers.size());
        return h;
    }

    // Embedding for decoder position p of this hypothesis (p == tokens
    // consumed so far), including the positional row.
    std::vector<T> input_row(const Session& s, const Hyp& h, int p) const {
        std::vector<T> row(static_cast<size_t>(d_));
        if (p == 0) {
            if (use_decor_ && model_.bos.n >= 1) {
                std::vector<T> u = context_vector(s, h, 0);
                compose_row(u, bos_keys_.data(), model_.bos.queries.values().data(), model_.bos.n,
                            model_.heads[0], TokenVocab::kBos, row.data());
            } else {
                std::copy_n(fused_row(TokenVocab::kBos), d_, row.data());
            }
        } else {
            int32_t tok = h.tokens[static_cast<size_t>(p - 1)];
            if (use_decor_ && model_.vocab.is_code(tok)) {
                int level = model_.vocab.level_of(tok);
                const auto& head = model_.head_for_level(level);
                std::vector<T> u = context_vector(s, h, p);
                int64_t base = model_.vocab.code_base() + static_cast<int64_t>(level) * model_.vocab.codebook_size;
                compose_row(u, level_keys_[static_cast<size_t>(level)].data(), fused_.data() + base * d_,
                            model_.vocab.codebook_size, head, tok, row.data());
            } else {
                std::copy_n(fused_row(tok), d_, row.data());
            }
        }
        const std::vector<T>& pos = model_.dec_pos.values();
        for (int64_t j = 0; j < d_; ++j) row[static_cast<size_t>(j)] += pos[static_cast<size_t>(p) * d_ + j];
        return row;
    }

    // One incremental decoder step; appends to the hypothesis caches and
    // returns the full logit row {V}.
    std::vector<T> decode_step(const Session& s, Hyp& h, const std::vector<T>& in_row, int p) const {
        int heads = model_.cfg.heads;
        int64_t dh = d_ / heads;
        T scale_f = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
        std::vector<T> y = in_row;
        std::vector<T> n(static_cast<size_t>(d_)), q(static_cast<size_t>(d_)), tmp(static_cast<size_t>(d_));

        for (size_t l = 0; l < model_.dec_layers.size(); ++l) {
            const DecoderLayer<T>& layer = model_.dec_layers[l];
            // self attention over cached positions
            detail::layer_norm_row(y.data(), n.data(), d_, layer.ln1.gain.values(), layer.ln1.bias.values());
            detail::matvec_nt(n.data(), layer.self_attn.w_q.values(), q.data(), d_, d_);
            size_t old = h.k_cache[l].size();
            h.k_cache[l].resize(old + static_cast<size_t>(d_));
            h.v_cache[l].resize(old + static_cast<size_t>(d_));
            detail::matvec_nt(n.data(), layer.self_attn.w_k.values(), h.k_cache[l].data() + old, d_, d_);
            detail::matvec_nt(n.data(), layer.self_attn.w_v.values(), h.v_cache[l].data() + old, d_, d_);
            int64_t steps = p + 1;
            std::vector<T> merged(static_cast<size_t>(d_), T(0));
            std::vector<T> probs(static_cast<size_t>(steps));
            for (int h_i = 0; h_i < heads; ++h_i) {
                int64_t off = h_i * dh;
                for (int64_t t = 0; t < steps; ++t) {
                    const T* kt = h.k_cache[l].data() + t * d_ + off;
                    T sdot = T(0);
                    for (int64_t j = 0; j < dh; ++j) sdot += q[static_cast<size_t>(off + j)] * kt[j];
                    probs[static_cast<size_t>(t)] = sdot * scale_f;
                }
                detail::softmax_inplace(probs.data(), steps);
                T* out = merged.data() + off;
                for (int64_t t = 0; t < steps; ++t) {
                    const T* vt = h.v_cache[l].data() + t * d_ + off;
                    T pw = probs[static_cast<size_t>(t)];
                    for (int64_t j = 0; j < dh; ++j) out[j] += pw * vt[j];
                }
            }
            detail::matvec_nt(merged.data(), layer.self_attn.w_o.values(), tmp.data(), d_, d_);
            for (int64_t j = 0; j < d_; ++j) y[static_cast<size_t>(j)] += tmp[static_cast<size_t>(j)];

            // cross attention over the encoder output
            detail::layer_norm_row(y.data(), n.data(), d_, layer.ln2.gain.values(), layer.ln2.bias.values());
            detail::matvec_nt(n.data(), layer.cross_attn.w_q.values(), q.data(), d_, d_);
            std::vector<T> cprobs(static_cast<size_t>(s.hist_len));
            std::fill(merged.begin(), merged.end(), T(0));
            for (int h_i = 0; h_i < heads; ++h_i) {
                int64_t off = h_i * dh;
                for (int64_t t = 0; t < s.hist_len; ++t) {
                    const T* kt = s.cross_k[l].data() + t * d_ + off;
                    T sdot = T(0);
                    for (int64_t j = 0; j < dh; ++j) sdot += q[static_cast<size_t>(off + j)] * kt[j];
                    cprobs[static_cast<size_t>(t)] = sdot * scale_f;
                }
                detail::softmax_inplace(cprobs.data(), s.hist_len);
                T* out = merged.data() + off;
                for (int64_t t = 0; t < s.hist_len; ++t) {
                    const T* vt = s.cross_v[l].data() + t * d_ + off;
                    T pw = cprobs[static_cast<size_t>(t)];
                    for (int64_t j = 0; j < dh; ++j) out[j] += pw * vt[j];
                }
            }
            detail::matvec_nt(merged.data(), layer.cross_attn.w_o.values(), tmp.data(), d_, d_);
            for (int64_t j = 0; j < d_; ++j) y[static_cast<size_t>(j)] += tmp[static_cast<size_t>(j)];

            // feed forward
            detail::layer_norm_row(y.data(), n.data(), d_, layer.ln3.gain.values(), layer.ln3.bias.values());
            int64_t inner = layer.ffn.w1.tensor.rows();
            std::vector<T> hdn(static_cast<size_t>(inner));
            detail::matvec_nt(n.data(), layer.ffn.w1.values(), hdn.data(), inner, d_);
            const std::vector<T>& b1 = layer.ffn.b1.values();
            for (int64_t j = 0; j < inner; ++j) {
                hdn[static_cast<size_t>(j)] += b1[static_cast<size_t>(j)];
                if (hdn[static_cast<size_t>(j)] < T(0)) hdn[static_cast<size_t>(j)] = T(0);
            }
            detail::matvec_nt(hdn.data(), layer.ffn.w2.values(), tmp.data(), d_, inner);
            const std::vector<T>& b2 = layer.ffn.b2.values();
            for (int64_t j = 0; j < d_; ++j) y[static_cast<size_t>(j)] += tmp[static_cast<size_t>(j)] + b2[static_cast<size_t>(j)];
        }

        detail::layer_norm_row(y.data(), n.data(), d_, model_.dec_final.gain.values(),
                               model_.dec_final.bias.values());
        std::vector<T> logits(static_cast<size_t>(model_.vocab.size()));
        detail::matvec_nt(n.data(), model_.out_head.values(), logits.data(), model_.vocab.size(), d_);
        return logits;
    }

    bool decor_enabled() const { return use_decor_; }
    const std::vector<T>& fused_vocab_values() const { return fused_; }

private:
    const T* fused_row(int32_t token) const { return fused_.data() + static_cast<size_t>(token) * d_; }

    // attention-pooled context vector over history plus generated tokens
    std::vector<T> context_vector(const Session& s, const Hyp& h, int gen_len) const {
        int64_t total = s.hist_len + gen_len;
        std::vector<T> scores(static_cast<size_t>(total));
        for (int64_t i = 0; i < s.hist_len; ++i)
            scores[static_cast<size_t>(i)] = score_table_[static_cast<size_t>(s.history[static_cast<size_t>(i)])];
        for (int i = 0; i < gen_len; ++i)
            scores[static_cast<size_t>(s.hist_len + i)] = score_table_[static_cast<size_t>(h.tokens[static_cast<size_t>(i)])];
        detail::softmax_inplace(scores.data(), total);
        std::vector<T> pooled(static_cast<size_t>(d_), T(0));
        auto accumulate = [&](int32_t tok, T w) {
            const T* row = fused_row(tok);
            for (int64_t j = 0; j < d_; ++j) pooled[static_cast<size_t>(j)] += w * row[j];
        };
        for (int64_t i = 0; i < s.hist_len; ++i) accumulate(s.history[static_cast<size_t>(i)], scores[static_cast<size_t>(i)]);
        for (int i = 0; i < gen_len; ++i)
            accumulate(h.tokens[static_cast<size_t>(i)], scores[static_cast<size_t>(s.hist_len + i)]);
        // mlp_ctx
        std::vector<T> hidden(static_cast<size_t>(d_)), u(static_cast<size_t>(d_));
        detail::matvec_nt(pooled.data(), model_.pooler.mlp_w1.values(), hidden.data(), d_, d_);
        const std::vector<T>& b1 = model_.pooler.mlp_b1.values();
        for (int64_t j = 0; j < d_; ++j) hidden[static_cast<size_t>(j)] = std::tanh(hidden[static_cast<size_t>(j)] + b1[static_cast<size_t>(j)]);
        detail::matvec_nt(hidden.data(), model_.pooler.mlp_w2.values(), u.data(), d_, d_);
        const std::vector<T>& b2 = model_.pooler.mlp_b2.values();
        for (int64_t j = 0; j < d_; ++j) u[static_cast<size_t>(j)] += b2[static_cast<size_t>(j)];
        return u;
    }

    // out = alpha * sum_c attn_c cand_c + (1 - alpha) * fused[static_token]
    void compose_row(const std::vector<T>& u, const T* keys, const T* candidates, int n_cand,
                     const CompositionHead<T>& head, int32_t static_token, T* out) const {
        std::vector<T> q(static_cast<size_t>(d_));
        detail::matvec_nt(u.data(), head.w_q.values(), q.data(), d_, d_);
        std::vector<T> attn(static_cast<size_t>(n_cand));
        for (int c = 0; c < n_cand; ++c) {
            const T* k = keys + static_cast<size_t>(c) * d_;
            T sdot = T(0);
            for (int64_t j = 0; j < d_; ++j) sdot += q[static_cast<size_t>(j)] * k[j];
            attn[static_cast<size_t>(c)] = sdot;
        }
        detail::softmax_inplace(attn.data(), n_cand);
        std::vector<T> mixed(static_cast<size_t>(d_), T(0));
        for (int c = 0; c < n_cand; ++c) {
            const T* cand = candidates + static_cast<size_t>(c) * d_;
            T w = attn[static_cast<size_t>(c)];
            for (int64_t j = 0; j < d_; ++j) mixed[static_cast<size_t>(j)] += w * cand[j];
        }
        const T* st = fused_row(static_token);
        T a = head.alpha;
        for (int64_t j = 0; j < d_; ++j) out[j] = a * mixed[static_cast<size_t>(j)] + (T(1) - a) * st[j];
    }

    const RecommenderModel<T>& model_;
    bool use_decor_;
    int64_t d_ = 0;
    StepContext<T> ctx_;
    std::vector<T> fused_;
    std::vector<T> score_table_;
    std::vector<std::vector<T>> level_keys_;
    std::vector<T> bos_keys_;
};

// ---------------------------------------------------------------------------
// Beam search proper.
// ---------------------------------------------------------------------------

template <typename T>
std::vector<ScoredItem> generate(const std::vector<int32_t>& history_tokens,
                                 const BeamDecoder<T>& decoder, const SemanticTrie& trie,
                                 int beam_size, int top_k) {
    DECOR_REQUIRE(beam_size >= top_k && top_k >= 1, ConfigError,
                  "generate: need beam_size >= top_k >= 1");
    using Hyp = typename BeamDecoder<T>::Hyp;
    typename BeamDecoder<T>::Session session = decoder.open(history_tokens);

    int total_steps = 0;
    {
        // path length = levels + collision digit; read off any trie path
        int node = trie.root();
        while (!trie.node(node).children.empty()) {
            node = trie.node(node).children.begin()->second;
            ++total_steps;
        }
    }

    std::vector<Hyp> beam{decoder.fresh_hyp()};
    struct Cand {
        size_t parent;
        int32_t token;
        int child_node;
        double score;
    };

    for (int p = 0; p < total_steps; ++p) {
        std::vector<Cand> cands;
        for (size_t b = 0; b < beam.size(); ++b) {
            Hyp& h = beam[b];
            std::vector<T> row = decoder.input_row(session, h, p);
            std::vector<T> logits = decoder.decode_step(session, h, row, p);
            const auto& children = trie.node(h.trie_node).children;
            DECOR_REQUIRE(!children.empty(), ConfigError, "trie path ended early");
            // log-softmax restricted to the valid continuations
            double mx = -1e300;
            for (const auto& [tok, child] : children)
                mx = std::max(mx, static_cast<double>(logits[static_cast<size_t>(tok)]));
            double lse = 0.0;
            for (const auto& [tok, child] : children)
                lse += std::exp(static_cast<double>(logits[static_cast<size_t>(tok)]) - mx);
            lse = std::log(lse) + mx;
            for (const auto& [tok, child] : children) {
                cands.push_back({b, tok, child,
                                 h.score + static_cast<double>(logits[static_cast<size_t>(tok)]) - lse});
            }
        }
        std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.parent != b.parent) return a.parent < b.parent;
            return a.token < b.token;
        });
        size_t keep = std::min<size_t>(static_cast<size_t>(beam_size), cands.size());
        std::vector<Hyp> next;
        next.reserve(keep);
        for (size_t i = 0; i < keep; ++i) {
            const Cand& c = cands[i];
            Hyp h = beam[c.parent];  // copies the KV caches
            h.tokens.push_back(c.token);
            h.trie_node = c.child_node;
            h.score = c.score;
            next.push_back(std::move(h));
        }
        beam = std::move(next);
    }

    std::vector<ScoredItem> ranked;
    ranked.reserve(beam.size());
    for (const Hyp& h : beam) {
        const std::string& item = trie.node(h.trie_node).item_id;
        DECOR_REQUIRE(!item.empty(), ConfigError, "beam hypothesis did not reach a leaf");
        ranked.push_back({item, h.score});
    }
    std::sort(ranked.begin(), ranked.end(), [](const ScoredItem& a, const ScoredItem& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.item_id < b.item_id;
    });
    DECOR_REQUIRE(static_cast<int>(ranked.size()) >= top_k, ConfigError,
                  "beam of " << beam_size << " produced only " << ranked.size()
                             << " complete items; need " << top_k);
    ranked.resize(static_cast<size_t>(top_k));
    return ranked;
}

}  // namespace decor
