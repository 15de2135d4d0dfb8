// recommender.hpp
// Encoder-decoder recommender over semantic-id tokens. History tokens
// enter the encoder as fused embeddings; decoder inputs are the composed
// BOS followed by target tokens whose embeddings are contextually
// composed from their quantization level, each position pooling the
// history plus the target prefix available at that point.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "decor/data.hpp"
#include "decor/embedding.hpp"
#include "decor/transformer.hpp"
#include "decor/trie.hpp"
#include "decor/vocab.hpp"

namespace decor {

struct RecommenderConfig {
    int d_model = 128;
    int enc_layers = 2;
    int dec_layers = 2;
    int heads = 4;
    int ffn_mult = 4;
    double dropout = 0.1;
    double learning_rate = 0.003;
    int warmup_steps = -1;  // -1: 5% of the total step budget
    double weight_decay = 0.05;
    double max_grad_norm = 1.0;
    int batch_size = 256;
    int max_epochs = 200;
    int early_stop_patience = 20;
    int beam_size = 50;
    int max_history_items = 20;
    int examples_per_epoch = 0;  // 0: all training pairs each epoch
    int val_eval_users = 0;      // 0: full validation split
    int val_every = 1;
    uint64_t seed = 2025;

    void validate() const {
        DECOR_REQUIRE(d_model >= 1 && heads >= 1 && d_model % heads == 0, ConfigError,
                      "recommender.d_model must be positive and divisible by heads");
        DECOR_REQUIRE(enc_layers >= 1 && dec_layers >= 1, ConfigError,
                      "recommender layer counts must be positive");
        DECOR_REQUIRE(max_history_items >= 1, ConfigError, "recommender.max_history_items must be >= 1");
        DECOR_REQUIRE(batch_size >= 1 && max_epochs >= 0, ConfigError, "recommender training scalars invalid");
        DECOR_REQUIRE(dropout >= 0.0 && dropout < 1.0, ConfigError, "recommender.dropout must be in [0,1)");
    }
};

struct DecorConfig {
    double alpha = 0.4;
    int bos_queries = 32;
    bool encoder_side_composition = false;
    bool share_head_across_levels = true;

    void validate() const {
        DECOR_REQUIRE(alpha >= 0.0 && alpha <= 1.0, ConfigError, "decor.alpha must be in [0,1]");
        DECOR_REQUIRE(bos_queries >= 0, ConfigError, "decor.bos_queries must be >= 0");
    }
};

enum class ForwardPath { Auto, Decor, Static };

// ---------------------------------------------------------------------------
// Token sequences.
// ---------------------------------------------------------------------------

struct TokenizedSequence {
    std::vector<int32_t> history;  // flattened item tokens, oldest first
    std::vector<int32_t> target;   // M code tokens then the collision token
};

inline std::vector<int32_t> build_inputs(const std::vector<std::string>& history_items,
                                         const std::map<std::string, SemanticID>& sid_map,
                                         const TokenVocab& vocab, int max_history_items) {
    size_t start = history_items.size() > static_cast<size_t>(max_history_items)
                       ? history_items.size() - static_cast<size_t>(max_history_items)
                       : 0;
    std::vector<int32_t> tokens;
    tokens.reserve((history_items.size() - start) * static_cast<size_t>(vocab.levels + 1));
    for (size_t i = start; i < history_items.size(); ++i) {
        auto it = sid_map.find(history_items[i]);
        DECOR_REQUIRE(it != sid_map.end(), UniverseMismatchError,
                      "item " << history_items[i] << " has no semantic id");
        for (int32_t t : sid_tokens(it->second, vocab)) tokens.push_back(t);
    }
    return tokens;
}

inline TokenizedSequence tokenize_example(const SplitExample& ex,
                                          const std::map<std::string, SemanticID>& sid_map,
                                          const TokenVocab& vocab, int max_history_items) {
    TokenizedSequence seq;
    seq.history = build_inputs(ex.context, sid_map, vocab, max_history_items);
    auto it = sid_map.find(ex.target);
    DECOR_REQUIRE(it != sid_map.end(), UniverseMismatchError,
                  "target item " << ex.target << " has no semantic id");
    seq.target = sid_tokens(it->second, vocab);
    return seq;
}

// ---------------------------------------------------------------------------
// Model.
// ---------------------------------------------------------------------------

template <typename T>
struct RecommenderModel {
    RecommenderConfig cfg;
    DecorConfig decor;
    TokenVocab vocab;

    FusedEmbeddingTable<T> table;
    ContextPooler<T> pooler;
    std::vector<CompositionHead<T>> heads;  // one, or one per level
    BosQuerySet<T> bos;
    Parameter<T> enc_pos;  // {max history tokens, d}
    Parameter<T> dec_pos;  // {M + 2, d}
    std::vector<EncoderLayer<T>> enc_layers;
    std::vector<DecoderLayer<T>> dec_layers;
    LayerNormParams<T> enc_final, dec_final;
    Parameter<T> out_head;  // {V, d}

    static RecommenderModel init(const RecommenderConfig& cfg, const DecorConfig& decor,
                                 const TokenVocab& vocab, const FrozenCodebooks<T>& pre) {
        cfg.validate();
        decor.validate();
        DECOR_REQUIRE(pre.dim == cfg.d_model, ConfigError,
                      "tokenizer latent_dim " << pre.dim << " != recommender d_model " << cfg.d_model);
        RecommenderModel m;
        m.cfg = cfg;
        m.decor = decor;
        m.vocab = vocab;

        std::mt19937_64 rng(derive_seed(cfg.seed, "rec.init"));
        int64_t d = cfg.d_model;
        m.table = FusedEmbeddingTable<T>::init(vocab, pre, rng);
        m.pooler = ContextPooler<T>::init(d, rng);
        int n_heads_sets = decor.share_head_across_levels ? 1 : vocab.levels;
        for (int h = 0; h < n_heads_sets; ++h) {
            m.heads.push_back(CompositionHead<T>::init(d, static_cast<T>(decor.alpha), rng));
            if (!decor.share_head_across_levels) {
                m.heads.back().w_q.name = "compose.W_q." + std::to_string(h);
                m.heads.back().w_k.name = "compose.W_k." + std::to_string(h);
            }
        }
        m.bos = BosQuerySet<T>::init(decor.bos_queries, d, rng);

        int64_t max_hist_tokens = static_cast<int64_t>(cfg.max_history_items) * (vocab.levels + 1);
        m.enc_pos = Parameter<T>("backbone.enc_pos", {max_hist_tokens, d},
                                 normal_init<T>(static_cast<size_t>(max_hist_tokens * d), 0.02, rng));
        m.dec_pos = Parameter<T>("backbone.dec_pos", {vocab.levels + 2, d},
                                 normal_init<T>(static_cast<size_t>((vocab.levels + 2) * d), 0.02, rng));

        int64_t inner = d * cfg.ffn_mult;
        for (int l = 0; l < cfg.enc_layers; ++l)
            m.enc_layers.push_back(EncoderLayer<T>::init("backbone.enc" + std::to_string(l), d, inner, rng));
        m.enc_final = LayerNormParams<T>::init("backbone.enc_final", d);
        for (int l = 0; l < cfg.dec_layers; ++l)
            m.dec_layers.push_back(DecoderLayer<T>::init("backbone.dec" + std::to_string(l), d, inner, rng));
        m.dec_final = LayerNormParams<T>::init("backbone.dec_final", d);
        m.out_head = Parameter<T>("backbone.out_head", {vocab.size(), d},
                                  normal_init<T>(static_cast<size_t>(vocab.size()) * static_cast<size_t>(d), 0.02, rng));
        return m;
    }

    void collect_params(ParamSet<T>& out) {
        table.collect_params(out);
        pooler.collect_params(out);
        for (auto& h : heads) h.collect_params(out);
        bos.collect_params(out);
        out.add(enc_pos);
        out.add(dec_pos);
        for (auto& l : enc_layers) l.collect(out);
        enc_final.collect(out);
        for (auto& l : dec_layers) l.collect(out);
        dec_final.collect(out);
        out.add(out_head);
    }

    const CompositionHead<T>& head_for_level(int level) const {
        return decor.share_head_across_levels ? heads[0] : heads[static_cast<size_t>(level)];
    }

    bool decor_active(ForwardPath path) const {
        if (path == ForwardPath::Static) return false;
        if (path == ForwardPath::Decor) return true;
        return decor.alpha > 0.0 || decor.bos_queries > 0;
    }
};

// ---------------------------------------------------------------------------
// Per-step shared context: the fused vocabulary and composition keys are
// functions of the parameters only, so one graph serves every sequence in
// a batch (threads accumulate adjoints privately).
// ---------------------------------------------------------------------------

template <typename T>
struct StepContext {
    num::Tensor<T> fused_vocab;                    // {V, d}
    std::vector<num::Tensor<T>> level_candidates;  // per level {K, d}
    std::vector<num::Tensor<T>> level_keys;        // per level {K, d}
    num::Tensor<T> bos_keys;                       // {N, d} when enabled
};

template <typename T>
StepContext<T> make_step_context(const RecommenderModel<T>& model) {
    StepContext<T> ctx;
    ctx.fused_vocab = model.table.fuse_all();
    const TokenVocab& vocab = model.vocab;
    for (int l = 0; l < vocab.levels; ++l) {
        num::Tensor<T> cand = num::slice_rows(
            ctx.fused_vocab, vocab.code_base() + static_cast<int64_t>(l) * vocab.codebook_size,
            vocab.codebook_size);
        ctx.level_candidates.push_back(cand);
        ctx.level_keys.push_back(num::matmul(cand, model.head_for_level(l).w_k.tensor, false, true));
    }
    if (model.bos.n >= 1)
        ctx.bos_keys = num::matmul(model.bos.queries.tensor, model.heads[0].w_k.tensor, false, true);
    return ctx;
}

// composed embedding of a codebook token against precomputed keys
template <typename T>
num::Tensor<T> compose_token_fast(int32_t token, const num::Tensor<T>& u, const StepContext<T>& ctx,
                                  const RecommenderModel<T>& model) {
    int level = model.vocab.level_of(token);
    const CompositionHead<T>& head = model.head_for_level(level);
    num::Tensor<T> attn = composition_attention_with_keys(u, ctx.level_keys[static_cast<size_t>(level)], head);
    num::Tensor<T> mixed = num::matmul(attn, ctx.level_candidates[static_cast<size_t>(level)]);
    num::Tensor<T> e_static = num::gather_rows(ctx.fused_vocab, {token});
    return num::add(num::scale(mixed, head.alpha), num::scale(e_static, T(1) - head.alpha));
}

template <typename T>
num::Tensor<T> compose_bos_fast(const num::Tensor<T>& u, const StepContext<T>& ctx,
                                const RecommenderModel<T>& model) {
    const CompositionHead<T>& head = model.heads[0];
    num::Tensor<T> attn = composition_attention_with_keys(u, ctx.bos_keys, head);
    num::Tensor<T> mixed = num::matmul(attn, model.bos.queries.tensor);
    num::Tensor<T> e_static = num::gather_rows(ctx.fused_vocab, {TokenVocab::kBos});
    return num::add(num::scale(mixed, head.alpha), num::scale(e_static, T(1) - head.alpha));
}

// ---------------------------------------------------------------------------
// Forward.
// ---------------------------------------------------------------------------

template <typename T>
num::Tensor<T> encode_history(const TokenizedSequence& seq, const RecommenderModel<T>& model,
                              const StepContext<T>& ctx, const ForwardCtx<T>& fwd, bool use_decor) {
    DECOR_REQUIRE(!seq.history.empty(), ConfigError, "empty history");
    num::Tensor<T> hist = num::gather_rows(ctx.fused_vocab, seq.history);
    if (use_decor && model.decor.encoder_side_composition) {
        // every history code token composed against the whole history
        num::Tensor<T> u = pool_context(hist, model.pooler);
        std::vector<num::Tensor<T>> rows;
        for (size_t i = 0; i < seq.history.size(); ++i) {
            int32_t t = seq.history[i];
            if (model.vocab.is_code(t)) {
                rows.push_back(compose_token_fast(t, u, ctx, model));
            } else {
                rows.push_back(num::slice_rows(hist, static_cast<int64_t>(i), 1));
            }
        }
        hist = num::concat_rows(rows);
    }
    int64_t n = hist.rows();
    DECOR_REQUIRE(n <= model.enc_pos.tensor.rows(), ConfigError,
                  "history of " << n << " tokens exceeds position table");
    num::Tensor<T> x = num::add(hist, num::slice_rows(model.enc_pos.tensor, 0, n));
    for (const auto& layer : model.enc_layers) x = layer.forward(x, model.cfg.heads, fwd);
    return model.enc_final.apply(x);
}

// Decoder inputs for a (possibly partial) target prefix: BOS plus the
// first `prefix_len` target tokens, each embedded with the context that
// was available when it entered the sequence.
template <typename T>
num::Tensor<T> decoder_inputs(const TokenizedSequence& seq, int prefix_len,
                              const RecommenderModel<T>& model, const StepContext<T>& ctx,
                              bool use_decor) {
    int64_t hist_len = static_cast<int64_t>(seq.history.size());
    std::vector<num::Tensor<T>> rows;
    num::Tensor<T> ctx_rows, scores;
    if (use_decor) {
        num::Tensor<T> hist = num::gather_rows(ctx.fused_vocab, seq.history);
        if (prefix_len > 0) {
            std::vector<int32_t> prefix(seq.target.begin(), seq.target.begin() + prefix_len);
            ctx_rows = num::concat_rows<T>({hist, num::gather_rows(ctx.fused_vocab, prefix)});
        } else {
            ctx_rows = hist;
        }
        scores = model.pooler.scores(ctx_rows);
    }

    if (use_decor && model.bos.n >= 1) {
        num::Tensor<T> u0 = pool_context_prefix(ctx_rows, scores, hist_len, model.pooler);
        rows.push_back(compose_bos_fast(u0, ctx, model));
    } else {
        rows.push_back(num::gather_rows(ctx.fused_vocab, {TokenVocab::kBos}));
    }
    for (int j = 1; j <= prefix_len; ++j) {
        int32_t tok = seq.target[static_cast<size_t>(j - 1)];
        if (use_decor && model.vocab.is_code(tok)) {
            num::Tensor<T> u = pool_context_prefix(ctx_rows, scores, hist_len + j, model.pooler);
            rows.push_back(compose_token_fast(tok, u, ctx, model));
        } else {
            rows.push_back(num::gather_rows(ctx.fused_vocab, {tok}));
        }
    }
    num::Tensor<T> y = rows.size() == 1 ? rows[0] : num::concat_rows(rows);
    return num::add(y, num::slice_rows(model.dec_pos.tensor, 0, y.rows()));
}

// Teacher-forced logits {prefix_len + 1, V}.
template <typename T>
num::Tensor<T> forward_logits(const TokenizedSequence& seq, const RecommenderModel<T>& model,
                              const StepContext<T>& ctx, const ForwardCtx<T>& fwd,
                              ForwardPath path = ForwardPath::Auto, int prefix_len = -1) {
    bool use_decor = model.decor_active(path);
    if (prefix_len < 0) prefix_len = static_cast<int>(seq.target.size());
    DECOR_REQUIRE(prefix_len <= static_cast<int>(seq.target.size()), ConfigError,
                  "prefix longer than target");
    num::Tensor<T> enc_out = encode_history(seq, model, ctx, fwd, use_decor);
    num::Tensor<T> y = decoder_inputs(seq, prefix_len, model, ctx, use_decor);
    for (const auto& layer : model.dec_layers) y = layer.forward(y, enc_out, model.cfg.heads, fwd);
    y = model.dec_final.apply(y);
    return num::matmul(y, model.out_head.tensor, false, true);
}

// Cross entropy against [target tokens..., EOS], PAD-masked.
template <typename T>
num::Tensor<T> sequence_loss(const num::Tensor<T>& logits, const TokenizedSequence& seq) {
    std::vector<int32_t> targets = seq.target;
    targets.push_back(TokenVocab::kEos);
    DECOR_REQUIRE(logits.rows() == static_cast<int64_t>(targets.size()), NumericsError,
                  "sequence_loss: logits rows " << logits.rows() << " != targets " << targets.size());
    return num::cross_entropy(logits, targets, static_cast<int32_t>(TokenVocab::kPad));
}

// Self-feeding variant: each decoder step consumes the model's own argmax
// instead of the gold token (exercises the generation-style embedding path
// in-graph; constrained decoding lives in beam.hpp).
template <typename T>
num::Tensor<T> forward_logits_self_feeding(const TokenizedSequence& seq,
                                           const RecommenderModel<T>& model,
                                           const StepContext<T>& ctx, const ForwardCtx<T>& fwd,
                                           ForwardPath path = ForwardPath::Auto) {
    int steps = model.vocab.levels + 1;
    TokenizedSequence walk{seq.history, {}};
    num::Tensor<T> logits;
    for (int p = 0; p < steps; ++p) {
        logits = forward_logits(walk, model, ctx, fwd, path, p);
        const std::vector<T>& v = logits.value();
        int64_t vsize = logits.cols();
        const T* last = v.data() + (logits.rows() - 1) * vsize;
        int32_t best = 0;
        for (int64_t j = 1; j < vsize; ++j)
            if (last[j] > last[best]) best = static_cast<int32_t>(j);
        walk.target.push_back(best);
    }
    return forward_logits(walk, model, ctx, fwd, path, steps);
}

}  // namespace decor
