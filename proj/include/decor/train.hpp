// train.hpp
// Recommender training: AdamW with warmup + cosine decay, global-norm
// clipping, early stopping on validation NDCG@10, and data-parallel
// gradient accumulation (per-thread adjoint stores merged in chunk order,
// deterministic for a fixed thread count).
#pragma once

#include <algorithm>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "decor/evaluate.hpp"
#include "decor/optim.hpp"
#include "decor/recommender.hpp"

namespace decor {

struct TrainEpochStats {
    int epoch = 0;
    double loss = 0.0;
    double val_ndcg10 = -1.0;  // -1 when not evaluated this epoch
    double lr = 0.0;
};

struct TrainRecLog {
    std::vector<TrainEpochStats> epochs;
    int best_epoch = -1;
    double best_val = -1.0;
    bool early_stopped = false;
};

// Mutable trainer state, serialized into checkpoints so a resumed run
// replays the exact trajectory of an uninterrupted one.
template <typename T>
struct TrainerState {
    int64_t epochs_done = 0;
    int64_t global_step = 0;
    double best_val = -1.0;
    int64_t best_epoch = -1;
    int64_t bad_evals = 0;
    std::string rng_state;
    std::vector<std::vector<T>> best_params;  // aligned with the model ParamSet
};

template <typename T>
std::vector<std::vector<T>> snapshot_params(ParamSet<T>& params) {
    std::vector<std::vector<T>> snap;
    snap.reserve(params.size());
    for (auto* p : params) snap.push_back(p->values());
    return snap;
}

template <typename T>
void restore_params(ParamSet<T>& params, const std::vector<std::vector<T>>& snap) {
    DECOR_REQUIRE(snap.size() == params.size(), ConfigError, "parameter snapshot shape mismatch");
    for (size_t i = 0; i < snap.size(); ++i) {
        DECOR_REQUIRE(snap[i].size() == params.at(i).values().size(), ConfigError,
                      "parameter snapshot shape mismatch for " << params.at(i).name);
        params.at(i).values() = snap[i];
    }
}

// Deterministic validation subsample (independent of the training stream).
inline std::vector<SplitExample> val_subsample(const std::vector<SplitExample>& val, int cap,
                                               uint64_t seed) {
    if (cap <= 0 || static_cast<size_t>(cap) >= val.size()) return val;
    std::vector<size_t> idx(val.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(derive_seed(seed, "rec.valsub"));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<size_t>(cap));
    std::sort(idx.begin(), idx.end());
    std::vector<SplitExample> out;
    out.reserve(idx.size());
    for (size_t i : idx) out.push_back(val[i]);
    return out;
}

// epoch_cap > 0 interrupts after that many epochs without touching the
// LR schedule, so a resumed run continues the exact trajectory.
template <typename T>
TrainRecLog train_recommender(RecommenderModel<T>& model,
                              const std::vector<SplitExample>& train_examples,
                              const std::vector<SplitExample>& val_examples,
                              const std::map<std::string, SemanticID>& sid_map,
                              const SemanticTrie& trie, AdamW<T>& opt, TrainerState<T>& state,
                              ForwardPath path = ForwardPath::Auto, int epoch_cap = -1) {
    const RecommenderConfig& cfg = model.cfg;
    ParamSet<T> params;
    model.collect_params(params);

    std::vector<TokenizedSequence> tokenized;
    tokenized.reserve(train_examples.size());
    for (const auto& ex : train_examples)
        tokenized.push_back(tokenize_example(ex, sid_map, model.vocab, cfg.max_history_items));

    int64_t n_all = static_cast<int64_t>(tokenized.size());
    DECOR_REQUIRE(n_all > 0, ConfigError, "no training examples");
    int64_t n_eff = cfg.examples_per_epoch > 0 ? std::min<int64_t>(cfg.examples_per_epoch, n_all) : n_all;
    int64_t steps_per_epoch = (n_eff + cfg.batch_size - 1) / cfg.batch_size;
    LrSchedule sched;
    sched.base_lr = cfg.learning_rate;
    sched.total_steps = std::max<int64_t>(1, steps_per_epoch * cfg.max_epochs);
    sched.warmup_steps = cfg.warmup_steps >= 0
                             ? cfg.warmup_steps
                             : std::max<int64_t>(1, sched.total_steps / 20);

    std::mt19937_64 rng;
    if (state.rng_state.empty()) {
        rng.seed(derive_seed(cfg.seed, "rec.train"));
    } else {
        std::istringstream in(state.rng_state);
        in >> rng;
    }

    std::vector<SplitExample> val_set = val_subsample(val_examples, cfg.val_eval_users, cfg.seed);
    std::vector<int64_t> order(static_cast<size_t>(n_all));
    for (int64_t i = 0; i < n_all; ++i) order[static_cast<size_t>(i)] = i;

    TrainRecLog log;
    log.best_epoch = static_cast<int>(state.best_epoch);
    log.best_val = state.best_val;
    if (state.best_params.empty()) state.best_params = snapshot_params(params);

    int threads = thread_budget();
    int64_t last_epoch = cfg.max_epochs;
    if (epoch_cap > 0) last_epoch = std::min<int64_t>(last_epoch, epoch_cap);
    for (int64_t epoch = state.epochs_done; epoch < last_epoch; ++epoch) {
        // shuffle from identity so the epoch's order is a pure function of
        // the RNG state and survives checkpoint resume
        for (int64_t i = 0; i < n_all; ++i) order[static_cast<size_t>(i)] = i;
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        int64_t seen = 0;
        for (int64_t start = 0; start < n_eff; start += cfg.batch_size) {
            int64_t len = std::min<int64_t>(cfg.batch_size, n_eff - start);
            StepContext<T> step_ctx = make_step_context(model);
            size_t n_chunks = static_cast<size_t>(std::min<int64_t>(threads, len));
            std::vector<GradBuffers<T>> thread_bufs(n_chunks, GradBuffers<T>(params));
            std::vector<double> losses(static_cast<size_t>(len), 0.0);
            T inv = T(1) / static_cast<T>(len);

            parallel_chunks(static_cast<size_t>(len), [&](size_t cb, size_t ce, int tid) {
                GradBuffers<T>& buf = thread_bufs[static_cast<size_t>(tid)];
                for (size_t k = cb; k < ce; ++k) {
                    const TokenizedSequence& seq =
                        tokenized[static_cast<size_t>(order[static_cast<size_t>(start + static_cast<int64_t>(k))])];
                    std::mt19937_64 drop_rng(derive_seed(
                        cfg.seed, "rec.dropout",
                        static_cast<uint64_t>(epoch) * 1000003ULL + static_cast<uint64_t>(start + static_cast<int64_t>(k))));
                    ForwardCtx<T> fwd{true, static_cast<T>(cfg.dropout), &drop_rng};
                    num::Tensor<T> logits = forward_logits(seq, model, step_ctx, fwd, path);
                    num::Tensor<T> loss = sequence_loss(logits, seq);
                    losses[k] = static_cast<double>(loss.item());
                    // adjoints are merged per example: graph nodes die with
                    // the example, so their addresses must never be cached
                    num::Gradients<T> grads;
                    num::backward(num::scale(loss, inv), grads);
                    for (size_t p = 0; p < params.size(); ++p) {
                        if (params.at(p).frozen) continue;
                        const std::vector<T>* g = grads.find(params.at(p).tensor.node());
                        if (g == nullptr) continue;
                        std::vector<T>& slot = buf.slots[p];
                        for (size_t e = 0; e < slot.size(); ++e) slot[e] += (*g)[e];
                    }
                }
            });

            double batch_loss = 0.0;
            for (double l : losses) batch_loss += l;
            batch_loss /= static_cast<double>(len);
            DECOR_REQUIRE(std::isfinite(batch_loss), DivergenceError,
                          "training diverged at epoch " << epoch << " (non-finite loss)");
            epoch_loss += batch_loss * static_cast<double>(len);
            seen += len;

            GradBuffers<T> buf(params);
            for (size_t p = 0; p < params.size(); ++p) {
                if (params.at(p).frozen) continue;
                std::vector<T>& slot = buf.slots[p];
                for (const auto& tb : thread_bufs) {
                    const std::vector<T>& g = tb.slots[p];
                    for (size_t e = 0; e < slot.size(); ++e) slot[e] += g[e];
                }
            }
            clip_global_norm(buf, cfg.max_grad_norm);
            opt.step(params, buf, sched.at(state.global_step));
            ++state.global_step;
        }

        TrainEpochStats stats;
        stats.epoch = static_cast<int>(epoch);
        stats.loss = epoch_loss / static_cast<double>(seen);
        stats.lr = sched.at(state.global_step - 1);

        bool do_val = !val_set.empty() &&
                      (cfg.val_every <= 1 || (epoch + 1) % cfg.val_every == 0 || epoch + 1 == cfg.max_epochs);
        if (do_val) {
            EvalResult val = evaluate(model, val_set, sid_map, trie, {10}, cfg.beam_size, "", path);
            stats.val_ndcg10 = val.report.metrics.at("ndcg@10");
            if (stats.val_ndcg10 > state.best_val) {
                state.best_val = stats.val_ndcg10;
                state.best_epoch = epoch;
                state.bad_evals = 0;
                state.best_params = snapshot_params(params);
            } else {
                ++state.bad_evals;
            }
        }
        log.epochs.push_back(stats);
        DECOR_INFO("rec epoch " << epoch << " loss " << stats.loss << " val_ndcg10 "
                                << stats.val_ndcg10 << " lr " << stats.lr);

        state.epochs_done = epoch + 1;
        std::ostringstream rs;
        rs << rng;
        state.rng_state = rs.str();

        if (cfg.early_stop_patience > 0 && state.bad_evals >= cfg.early_stop_patience) {
            log.early_stopped = true;
            break;
        }
    }

    if (state.best_epoch < 0) {
        // no validation pass ran; best is the final state
        state.best_params = snapshot_params(params);
        state.best_epoch = state.epochs_done - 1;
    }
    log.best_epoch = static_cast<int>(state.best_epoch);
    log.best_val = state.best_val;
    return log;
}

}  // namespace decor
