// evaluate.hpp
// Full-corpus evaluation through constrained beam search, the per-level
// embedding-utilization analysis, and raw embedding dumps for external
// projection.
#pragma once

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "decor/beam.hpp"
#include "decor/metrics.hpp"
#include "decor/recommender.hpp"

namespace decor {

struct EvalReport {
    std::map<std::string, double> metrics;  // recall@5, recall@10, ndcg@5, ndcg@10
    int64_t n_users = 0;
    std::string config_fingerprint;
};

struct UserRanking {
    std::string user_id;
    std::vector<std::string> ranked;
    std::string truth;
};

struct EvalResult {
    EvalReport report;
    std::vector<UserRanking> rankings;
};

inline std::string fingerprint(const std::string& text) {
    uint64_t h = 1469598103934665603ULL;
    for (char c : text) {
        h ^= static_cast<uint64_t>(static_cast<unsigned char>(c));
        h *= 1099511628211ULL;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Metric aggregation over persisted rankings; evaluate() routes through
// this so reports can be recomputed from their rankings.
inline EvalReport aggregate_rankings(const std::vector<UserRanking>& rankings,
                                     const std::vector<int>& ks,
                                     const std::string& config_fingerprint = "") {
    EvalReport report;
    report.n_users = static_cast<int64_t>(rankings.size());
    report.config_fingerprint = config_fingerprint;
    for (int k : ks) {
        double recall = 0.0, ndcg = 0.0;
        for (const auto& r : rankings) {
            recall += recall_at_k(r.ranked, r.truth, k);
            ndcg += ndcg_at_k(r.ranked, r.truth, k);
        }
        double denom = rankings.empty() ? 1.0 : static_cast<double>(rankings.size());
        report.metrics["recall@" + std::to_string(k)] = recall / denom;
        report.metrics["ndcg@" + std::to_string(k)] = ndcg / denom;
    }
    return report;
}

template <typename T>
EvalResult evaluate(const RecommenderModel<T>& model, const std::vector<SplitExample>& examples,
                    const std::map<std::string, SemanticID>& sid_map, const SemanticTrie& trie,
                    const std::vector<int>& ks, int beam_size,
                    const std::string& config_fingerprint = "",
                    ForwardPath path = ForwardPath::Auto) {
    int top_k = 1;
    for (int k : ks) top_k = std::max(top_k, k);
    DECOR_REQUIRE(beam_size >= top_k, ConfigError,
                  "evaluate: beam_size " << beam_size << " < max k " << top_k);
    BeamDecoder<T> decoder(model, path);

    EvalResult result;
    result.rankings.resize(examples.size());
    parallel_chunks(examples.size(), [&](size_t begin, size_t end, int) {
        for (size_t i = begin; i < end; ++i) {
            const SplitExample& ex = examples[i];
            try {
                std::vector<int32_t> history =
                    build_inputs(ex.context, sid_map, model.vocab, model.cfg.max_history_items);
                std::vector<ScoredItem> ranked = generate(history, decoder, trie, beam_size, top_k);
                UserRanking& ur = result.rankings[i];
                ur.user_id = ex.user_id;
                ur.truth = ex.target;
                for (const auto& s : ranked) ur.ranked.push_back(s.item_id);
            } catch (const DecorError& e) {
                throw DecorError("evaluation failed for user " + ex.user_id + ": " + e.what());
            }
        }
    });
    result.report = aggregate_rankings(result.rankings, ks, config_fingerprint);
    return result;
}

// ---------------------------------------------------------------------------
// Embedding utilization (per quantization level):
//   static_used         codes appearing in at least one semantic id
//   composition_active  codes whose composition attention exceeds the
//                       uniform weight 1/K at least once over the contexts
//   combined            union of the two
// ---------------------------------------------------------------------------

struct UtilizationLevel {
    int level = 0;
    double static_used = 0.0;
    double composition_active = 0.0;
    double combined = 0.0;
};

struct UtilizationReport {
    std::vector<UtilizationLevel> levels;
};

template <typename T>
UtilizationReport utilization(const RecommenderModel<T>& model,
                              const std::vector<SplitExample>& contexts,
                              const std::map<std::string, SemanticID>& sid_map,
                              ForwardPath path = ForwardPath::Auto) {
    const TokenVocab& vocab = model.vocab;
    int k = vocab.codebook_size;
    std::vector<std::set<int>> static_codes(static_cast<size_t>(vocab.levels));
    for (const auto& [item, sid] : sid_map)
        for (size_t l = 0; l < sid.codes.size(); ++l)
            static_codes[l].insert(sid.codes[l]);

    std::vector<std::set<int>> active_codes(static_cast<size_t>(vocab.levels));
    bool use_decor = model.decor_active(path);
    if (use_decor) {
        num::NoGradGuard ng;
        StepContext<T> ctx = make_step_context(model);
        T uniform = T(1) / static_cast<T>(k);
        for (const SplitExample& ex : contexts) {
            TokenizedSequence seq = tokenize_example(ex, sid_map, vocab, model.cfg.max_history_items);
            num::Tensor<T> hist = num::gather_rows(ctx.fused_vocab, seq.history);
            num::Tensor<T> ctx_rows =
                num::concat_rows<T>({hist, num::gather_rows(ctx.fused_vocab, seq.target)});
            num::Tensor<T> scores = model.pooler.scores(ctx_rows);
            int64_t hist_len = hist.rows();
            for (int j = 1; j <= static_cast<int>(seq.target.size()); ++j) {
                int32_t tok = seq.target[static_cast<size_t>(j - 1)];
                if (!vocab.is_code(tok)) continue;
                int level = vocab.level_of(tok);
                num::Tensor<T> u = pool_context_prefix(ctx_rows, scores, hist_len + j, model.pooler);
                num::Tensor<T> attn = composition_attention_with_keys(
                    u, ctx.level_keys[static_cast<size_t>(level)], model.head_for_level(level));
                const std::vector<T>& w = attn.value();
                for (int c = 0; c < k; ++c)
                    if (w[static_cast<size_t>(c)] > uniform) active_codes[static_cast<size_t>(level)].insert(c);
            }
        }
    }

    UtilizationReport report;
    for (int l = 0; l < vocab.levels; ++l) {
        UtilizationLevel lv;
        lv.level = l + 1;
        std::set<int> combined = static_codes[static_cast<size_t>(l)];
        combined.insert(active_codes[static_cast<size_t>(l)].begin(), active_codes[static_cast<size_t>(l)].end());
        lv.static_used = static_cast<double>(static_codes[static_cast<size_t>(l)].size()) / k;
        lv.composition_active = static_cast<double>(active_codes[static_cast<size_t>(l)].size()) / k;
        lv.combined = static_cast<double>(combined.size()) / k;
        report.levels.push_back(lv);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Embedding dumps: K static rows for the level, plus one composed row per
// context (the gold token of that level under its teacher-forced context).
// ---------------------------------------------------------------------------

template <typename T>
void dump_embeddings(const RecommenderModel<T>& model, int level,
                     const std::vector<SplitExample>& contexts,
                     const std::map<std::string, SemanticID>& sid_map, const std::string& path,
                     ForwardPath fpath = ForwardPath::Auto) {
    const TokenVocab& vocab = model.vocab;
    DECOR_REQUIRE(level >= 1 && level <= vocab.levels, ConfigError,
                  "dump_embeddings: level " << level << " out of range [1," << vocab.levels << "]");
    int l = level - 1;
    std::ofstream out(path);
    DECOR_REQUIRE(out.good(), IoError, "cannot write embedding dump: " << path);

    num::NoGradGuard ng;
    StepContext<T> ctx = make_step_context(model);
    bool use_decor = model.decor_active(fpath);

    for (int c = 0; c < vocab.codebook_size; ++c) {
        int32_t tok = vocab.code_token(l, c);
        num::Tensor<T> row = num::gather_rows(ctx.fused_vocab, {tok});
        nlohmann::json rec;
        rec["token"] = tok;
        rec["kind"] = "static";
        rec["vector"] = std::vector<double>(row.value().begin(), row.value().end());
        out << rec.dump() << "\n";
    }

    for (const SplitExample& ex : contexts) {
        TokenizedSequence seq = tokenize_example(ex, sid_map, vocab, model.cfg.max_history_items);
        int32_t tok = seq.target[static_cast<size_t>(l)];
        num::Tensor<T> composed;
        if (use_decor) {
            num::Tensor<T> hist = num::gather_rows(ctx.fused_vocab, seq.history);
            num::Tensor<T> ctx_rows =
                num::concat_rows<T>({hist, num::gather_rows(ctx.fused_vocab, seq.target)});
            num::Tensor<T> scores = model.pooler.scores(ctx_rows);
            num::Tensor<T> u =
                pool_context_prefix(ctx_rows, scores, hist.rows() + l + 1, model.pooler);
            composed = compose_token_fast(tok, u, ctx, model);
        } else {
            composed = num::gather_rows(ctx.fused_vocab, {tok});
        }
        nlohmann::json rec;
        rec["token"] = tok;
        rec["kind"] = "composed";
        rec["context_id"] = ex.user_id;
        rec["vector"] = std::vector<double>(composed.value().begin(), composed.value().end());
        out << rec.dump() << "\n";
    }
    DECOR_REQUIRE(out.good(), IoError, "write failed: " << path);
}

}  // namespace decor
