// Acceptance suite: one pass/fail line per criterion, exit code equal to
// the number of failures. The synthetic end-to-end comparison (criterion
// 6) is the long pole; progress goes to stderr.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "decor/beam.hpp"
#include "decor/evaluate.hpp"
#include "decor/gradcheck.hpp"
#include "decor/train.hpp"

#ifndef DECOR_CLI_PATH
#error "DECOR_CLI_PATH must point at the decor binary"
#endif

using namespace decor;
using num::Tensor;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", id, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

void progress(const std::string& msg) {
    std::fprintf(stderr, "[acceptance] %s\n", msg.c_str());
    std::fflush(stderr);
}

double elapsed(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// 1 + 2: quantizer oracle equivalence and the telescoping identity.
// ---------------------------------------------------------------------------

void criterion_1_and_2() {
    auto start = Clock::now();
    RqVaeConfig cfg;
    cfg.levels = 3;
    cfg.codebook_size = 32;
    cfg.latent_dim = 16;
    cfg.input_dim = 16;
    cfg.encoder_hidden = {};
    cfg.seed = 7;
    RqVaeModel<float> model = RqVaeModel<float>::init(cfg);

    std::vector<std::vector<float>> tables;
    for (const auto& cb : model.codebooks) tables.push_back(cb.values());

    std::mt19937_64 rng(101);
    std::normal_distribution<double> g(0.0, 1.0);
    int mismatches = 0;
    double worst_tele = 0.0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<float> z(16);
        for (auto& x : z) x = static_cast<float>(g(rng));
        Tensor<float> z0 = Tensor<float>::leaf({1, 16}, z, false);
        QuantizationTrace<float> trace = quantize(z0, model);

        // independent greedy brute force in double precision
        std::vector<double> resid(z.begin(), z.end());
        for (int l = 0; l < 3; ++l) {
            int best = 0;
            double best_dist = std::numeric_limits<double>::infinity();
            for (int c = 0; c < 32; ++c) {
                double dist = 0.0;
                for (int j = 0; j < 16; ++j) {
                    double diff = resid[static_cast<size_t>(j)] -
                                  static_cast<double>(tables[static_cast<size_t>(l)][static_cast<size_t>(c * 16 + j)]);
                    dist += diff * diff;
                }
                if (dist < best_dist) {  // strict: lowest index wins ties
                    best_dist = dist;
                    best = c;
                }
            }
            if (trace.codes[static_cast<size_t>(l)][0] != best) ++mismatches;
            for (int j = 0; j < 16; ++j)
                resid[static_cast<size_t>(j)] -= static_cast<double>(tables[static_cast<size_t>(l)][static_cast<size_t>(best * 16 + j)]);
        }
        const auto& zm = trace.z.back().value();
        const auto& rsum = trace.quantized_sum.value();
        for (int j = 0; j < 16; ++j)
            worst_tele = std::max(worst_tele,
                                  std::abs(static_cast<double>(z[static_cast<size_t>(j)]) - rsum[static_cast<size_t>(j)] - zm[static_cast<size_t>(j)]));
    }
    double secs = elapsed(start);
    report(1, "quantizer matches brute-force oracle on 1000 vectors", mismatches == 0 && secs < 10.0,
           "mismatches=" + std::to_string(mismatches) + ", " + fmt(secs) + "s");
    report(2, "telescoping identity |z0 - sum(e) - zM| <= 1e-5", worst_tele <= 1e-5,
           "max=" + fmt(worst_tele));
}

// ---------------------------------------------------------------------------
// 3: gradient suite at 64-bit, eps 1e-4, tolerance 1e-5.
// ---------------------------------------------------------------------------

struct ToyParts {
    TokenVocab vocab{2, 3, 4};
    FrozenCodebooks<double> pre;
    FusedEmbeddingTable<double> table;
    ContextPooler<double> pooler;
    CompositionHead<double> head;
    BosQuerySet<double> bos;

    explicit ToyParts(uint64_t seed) {
        pre.levels = 2;
        pre.codebook_size = 3;
        pre.dim = 16;
        std::mt19937_64 rng(derive_seed(seed, "toy"));
        std::normal_distribution<double> g(0.0, 1.0);
        pre.data.resize(2 * 3 * 16);
        for (auto& v : pre.data) v = g(rng);
        table = FusedEmbeddingTable<double>::init(vocab, pre, rng);
        for (auto& v : table.e_collab.values()) v = g(rng);  // trained-scale rows
        pooler = ContextPooler<double>::init(16, rng);
        head = CompositionHead<double>::init(16, 0.45, rng);
        bos = BosQuerySet<double>::init(2, 16, rng);
    }
};

template <typename Builder>
double checked_params_error(ParamSet<double>& params, Builder&& build_loss) {
    std::vector<num::GradCheckInput> inputs;
    std::vector<Parameter<double>*> live;
    for (auto* p : params) {
        if (p->frozen) continue;
        live.push_back(p);
        inputs.push_back({p->name, p->tensor.shape(), p->values()});
    }
    auto op = [&](const std::vector<Tensor<double>>& in) {
        for (size_t i = 0; i < in.size(); ++i) live[i]->tensor = in[i];
        return build_loss();
    };
    return num::grad_check("params", op, inputs, 1e-4).max_relative_error;
}

void criterion_3() {
    double worst = 0.0;
    std::string worst_name = "none";
    auto track = [&](const std::string& name, double err) {
        progress("grad " + name + " err " + fmt(err));
        if (err > worst) {
            worst = err;
            worst_name = name;
        }
    };

    {  // primitive ops
        std::mt19937_64 rng(31);
        std::uniform_real_distribution<double> uni(-1.0, 1.0);
        auto rand_vec = [&](size_t n) {
            std::vector<double> v(n);
            for (auto& x : v) x = uni(rng);
            return v;
        };
        track("softmax_rows",
              num::grad_check(
                  "softmax_rows",
                  [](const std::vector<Tensor<double>>& in) {
                      return num::sum_squares(num::softmax_rows(in[0]));
                  },
                  {{"s", {3, 5}, rand_vec(15)}})
                  .max_relative_error);
        track("layer_normalize",
              num::grad_check(
                  "layer_normalize",
                  [](const std::vector<Tensor<double>>& in) {
                      return num::sum_squares(num::layer_norm(in[0], in[1], in[2], 1e-5));
                  },
                  {{"x", {3, 6}, rand_vec(18)},
                   {"gain", {6}, rand_vec(6)},
                   {"bias", {6}, rand_vec(6)}})
                  .max_relative_error);
    }

    ToyParts t(51);
    std::vector<int32_t> context = {t.vocab.code_token(0, 1), t.vocab.code_token(1, 2),
                                    t.vocab.collision_token(1)};
    {  // fuse_token
        ParamSet<double> params;
        t.table.collect_params(params);
        track("fuse_token", checked_params_error(params, [&] {
                  return num::sum_squares(fuse_token(t.vocab.code_token(1, 1), t.table));
              }));
    }
    {  // pool_context
        ParamSet<double> params;
        t.table.collect_params(params);
        t.pooler.collect_params(params);
        track("pool_context", checked_params_error(params, [&] {
                  auto fv = t.table.fuse_all();
                  return num::sum_squares(pool_context(num::gather_rows(fv, context), t.pooler));
              }));
    }
    {  // compose_token through the pooled context
        ParamSet<double> params;
        t.table.collect_params(params);
        t.pooler.collect_params(params);
        t.head.collect_params(params);
        track("compose_token", checked_params_error(params, [&] {
                  auto fv = t.table.fuse_all();
                  auto u = pool_context(num::gather_rows(fv, context), t.pooler);
                  return num::sum_squares(compose_token(t.vocab.code_token(0, 2), u, fv, t.vocab, t.head));
              }));
    }
    {  // compose_bos
        ParamSet<double> params;
        t.table.collect_params(params);
        t.pooler.collect_params(params);
        t.head.collect_params(params);
        t.bos.collect_params(params);
        track("compose_bos", checked_params_error(params, [&] {
                  auto fv = t.table.fuse_all();
                  auto u = pool_context(num::gather_rows(fv, context), t.pooler);
                  return num::sum_squares(compose_bos(u, t.bos, t.head, num::gather_rows(fv, {TokenVocab::kBos})));
              }));
    }

    bool analytic_ok = false;
    {  // rqvae losses: full grad check plus the analytic stop-gradient forms
        RqVaeConfig cfg;
        cfg.levels = 2;
        cfg.codebook_size = 4;
        cfg.latent_dim = 4;
        cfg.input_dim = 6;
        cfg.encoder_hidden = {8};
        cfg.seed = 77;
        RqVaeModel<double> model = RqVaeModel<double>::init(cfg);
        std::mt19937_64 rng(13);
        std::normal_distribution<double> g(0.0, 4.0);
        for (auto& cb : model.codebooks)
            for (auto& v : cb.values()) v = g(rng);
        std::vector<double> x_data(6);
        for (auto& v : x_data) v = g(rng) * 0.25;
        Tensor<double> x = Tensor<double>::leaf({1, 6}, x_data, false);
        ParamSet<double> params;
        model.collect_params(params);
        track("rqvae_losses", checked_params_error(params, [&] {
                  QuantizationTrace<double> trace = quantize(model.encode(x), model);
                  return rqvae_losses(x, trace, model).sq;
              }));

        // analytic: dL_RQ/de = 2(e - z), dL_RQ/dz = 2*beta*(z - e)
        RqVaeConfig one;
        one.levels = 1;
        one.codebook_size = 2;
        one.latent_dim = 2;
        one.input_dim = 2;
        one.encoder_hidden = {};
        one.beta = 0.25;
        RqVaeModel<double> m1 = RqVaeModel<double>::init(one);
        m1.codebooks[0].values() = {0.0, 0.0, 10.0, 10.0};
        Tensor<double> z = Tensor<double>::leaf({1, 2}, {1.0, 0.0}, true);
        QuantizationTrace<double> trace = quantize(z, m1);
        RqVaeLosses<double> losses = rqvae_losses(Tensor<double>::leaf({1, 2}, {0.0, 0.0}, false), trace, m1);
        num::Gradients<double> grads;
        num::backward(losses.rq, grads);
        const std::vector<double>& de = *grads.find(m1.codebooks[0].tensor.node());
        const std::vector<double>& dz = *grads.find(z.node());
        analytic_ok = std::abs(de[0] - (-2.0)) < 1e-9 && std::abs(de[1]) < 1e-9 &&
                      std::abs(dz[0] - 0.5) < 1e-9 && std::abs(dz[1]) < 1e-9;
    }

    {  // full recommender forward-to-loss at toy shape (d = 16, 1+1 layers)
        RecommenderConfig rc;
        rc.d_model = 16;
        rc.enc_layers = 1;
        rc.dec_layers = 1;
        rc.heads = 2;
        rc.ffn_mult = 2;
        rc.dropout = 0.0;
        rc.max_history_items = 4;
        rc.seed = 61;
        DecorConfig dc;
        dc.alpha = 0.45;
        dc.bos_queries = 2;
        ToyParts tp(62);
        RecommenderModel<double> model = RecommenderModel<double>::init(rc, dc, tp.vocab, tp.pre);
        std::mt19937_64 rng(63);
        std::normal_distribution<double> g(0.0, 1.0);
        for (auto& v : model.table.e_collab.values()) v = g(rng);

        TokenizedSequence seq;
        seq.history = {tp.vocab.code_token(0, 0), tp.vocab.code_token(1, 1), tp.vocab.collision_token(0),
                       tp.vocab.code_token(0, 2), tp.vocab.code_token(1, 0), tp.vocab.collision_token(1)};
        seq.target = {tp.vocab.code_token(0, 1), tp.vocab.code_token(1, 2), tp.vocab.collision_token(0)};

        ParamSet<double> params;
        model.collect_params(params);
        ForwardCtx<double> fwd;
        track("recommender_forward", checked_params_error(params, [&] {
                  StepContext<double> ctx = make_step_context(model);
                  return sequence_loss(forward_logits(seq, model, ctx, fwd), seq);
              }));
    }

    report(3, "gradient suite (64-bit, eps 1e-4) <= 1e-5", worst <= 1e-5 && analytic_ok,
           "max=" + fmt(worst) + " at " + worst_name + ", analytic rq forms " +
               (analytic_ok ? "match" : "MISMATCH"));
}

// ---------------------------------------------------------------------------
// Shared synthetic pipeline pieces for criteria 4 to 8.
// ---------------------------------------------------------------------------

struct SynthRun {
    std::map<std::string, SemanticID> sids;
    TokenVocab vocab{3, 32, 64};
    SemanticTrie trie;
    LeaveOneOutSplit split;
    FrozenCodebooks<float> pre;
};

SynthRun build_synth_run(uint64_t seed, int tokenizer_epochs = 40) {
    SynthRun r;
    SyntheticSpec spec;  // defaults: 2048 items, 5000 users, 64-dim
    spec.seed = seed;
    SyntheticData data = generate_synthetic(spec);

    RqVaeConfig tok;
    tok.levels = 3;
    tok.codebook_size = 32;
    tok.latent_dim = 128;
    tok.input_dim = 64;
    tok.encoder_hidden = {256, 128};
    tok.epochs = tokenizer_epochs;
    tok.batch_size = 256;
    tok.seed = seed;
    std::vector<float> flat;
    for (const auto& [id, emb] : data.items.embeddings)
        for (double v : emb) flat.push_back(static_cast<float>(v));
    auto items = Tensor<float>::leaf({spec.n_items, 64}, std::move(flat), false);
    RqVaeModel<float> tokm = train_rqvae(items, tok);

    std::map<std::string, std::vector<float>> typed;
    for (const auto& [id, emb] : data.items.embeddings)
        typed.emplace(id, std::vector<float>(emb.begin(), emb.end()));
    r.sids = assign_semantic_ids(typed, tokm);
    r.trie = build_trie(r.sids, r.vocab);
    r.split = leave_one_out_split(filter_5core(data.interactions));
    r.pre = export_codebooks(tokm);
    return r;
}

RecommenderConfig desk_rec_config(uint64_t seed, int epochs) {
    RecommenderConfig rc;
    rc.d_model = 128;
    rc.enc_layers = 2;
    rc.dec_layers = 2;
    rc.heads = 4;
    rc.ffn_mult = 4;
    rc.dropout = 0.1;
    rc.learning_rate = 0.003;
    rc.weight_decay = 0.05;
    rc.batch_size = 256;
    rc.max_epochs = epochs;
    rc.beam_size = 10;
    rc.max_history_items = 10;
    rc.examples_per_epoch = 4096;
    rc.val_eval_users = 200;
    rc.val_every = epochs;  // one validation pass at the end
    rc.seed = seed;
    return rc;
}

RecommenderModel<float> train_synth_model(const SynthRun& run, uint64_t seed, double alpha, int bos,
                                          int epochs) {
    RecommenderConfig rc = desk_rec_config(seed, epochs);
    DecorConfig dc;
    dc.alpha = alpha;
    dc.bos_queries = bos;
    RecommenderModel<float> model = RecommenderModel<float>::init(rc, dc, run.vocab, run.pre);
    ParamSet<float> params;
    model.collect_params(params);
    AdamW<float> opt(params, {.weight_decay = rc.weight_decay});
    TrainerState<float> state;
    train_recommender(model, run.split.train, run.split.val, run.sids, run.trie, opt, state);
    restore_params(params, state.best_params);
    return model;
}

// ---------------------------------------------------------------------------
// 4: DECOR-off logit equivalence on 100 random batches.
// ---------------------------------------------------------------------------

void criterion_4(const SynthRun& run) {
    RecommenderConfig rc = desk_rec_config(5, 1);
    DecorConfig dc;
    dc.alpha = 0.0;
    dc.bos_queries = 0;
    RecommenderModel<float> model = RecommenderModel<float>::init(rc, dc, run.vocab, run.pre);

    num::NoGradGuard ng;
    StepContext<float> ctx = make_step_context(model);
    ForwardCtx<float> fwd;
    std::mt19937_64 rng(404);
    std::uniform_int_distribution<size_t> pick(0, run.split.val.size() - 1);
    double worst = 0.0;
    for (int b = 0; b < 100; ++b) {
        TokenizedSequence seq =
            tokenize_example(run.split.val[pick(rng)], run.sids, run.vocab, rc.max_history_items);
        auto on = forward_logits(seq, model, ctx, fwd, ForwardPath::Decor);
        auto off = forward_logits(seq, model, ctx, fwd, ForwardPath::Static);
        for (int64_t i = 0; i < on.numel(); ++i)
            worst = std::max(worst, std::abs(static_cast<double>(on.value()[static_cast<size_t>(i)]) -
                                             off.value()[static_cast<size_t>(i)]));
    }
    report(4, "alpha=0, N=0 logits match the static baseline <= 1e-6", worst <= 1e-6,
           "max |diff|=" + fmt(worst) + " over 100 batches");
}

// ---------------------------------------------------------------------------
// 5: frozen-semantics preservation over 500 optimizer steps.
// ---------------------------------------------------------------------------

void criterion_5(const SynthRun& run) {
    RecommenderConfig rc = desk_rec_config(9, 1);
    rc.d_model = 128;
    rc.enc_layers = 1;
    rc.dec_layers = 1;
    rc.batch_size = 4;
    rc.examples_per_epoch = 2000;  // 500 steps of batch 4
    rc.val_every = 100;
    rc.learning_rate = 1e-3;
    DecorConfig dc;
    dc.alpha = 0.4;
    dc.bos_queries = 8;
    RecommenderModel<float> model = RecommenderModel<float>::init(rc, dc, run.vocab, run.pre);
    std::vector<float> pre_before = model.table.e_pre.values();
    std::vector<float> collab_before = model.table.e_collab.values();

    ParamSet<float> params;
    model.collect_params(params);
    AdamW<float> opt(params, {.weight_decay = rc.weight_decay});
    TrainerState<float> state;
    std::vector<SplitExample> train_sub(run.split.train.begin(), run.split.train.begin() + 2000);
    train_recommender(model, train_sub, {}, run.sids, run.trie, opt, state);

    bool frozen_ok = model.table.e_pre.values() == pre_before;
    bool collab_moved = model.table.e_collab.values() != collab_before;
    report(5, "E_pre bitwise frozen across 500 steps, E_collab trained",
           frozen_ok && collab_moved && state.global_step == 500,
           std::string("E_pre ") + (frozen_ok ? "unchanged" : "CHANGED") + ", E_collab " +
               (collab_moved ? "moved" : "STUCK") + ", steps=" + std::to_string(state.global_step));
}

// ---------------------------------------------------------------------------
// 6 + 7: the end-to-end synthetic comparison and utilization direction.
// ---------------------------------------------------------------------------

void criteria_6_and_7(const SynthRun& seed1_run) {
    auto start = Clock::now();
    const int epochs = 3;
    const std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};

    int decor_wins = 0;
    double seed1_recall10 = 0.0;
    std::vector<std::string> pair_details;
    UtilizationReport util_decor, util_static;

    for (size_t si = 0; si < seeds.size(); ++si) {
        uint64_t seed = seeds[si];
        progress("criterion 6: seed " + std::to_string(seed) + " corpus+tokenizer");
        SynthRun run = seed == 1 ? seed1_run : build_synth_run(seed);

        // comparison subsample: identical fixed slice of the test split for
        // both configurations of a seed
        std::vector<SplitExample> test_cmp(
            run.split.test.begin(),
            run.split.test.begin() + std::min<size_t>(2000, run.split.test.size()));

        progress("criterion 6: seed " + std::to_string(seed) + " DECOR training");
        RecommenderModel<float> decor_model = train_synth_model(run, seed, 0.4, 32, epochs);
        progress("criterion 6: seed " + std::to_string(seed) + " static training");
        RecommenderModel<float> static_model = train_synth_model(run, seed, 0.0, 0, epochs);

        EvalResult decor_eval = evaluate(decor_model, test_cmp, run.sids, run.trie, {5, 10}, 10, "");
        EvalResult static_eval = evaluate(static_model, test_cmp, run.sids, run.trie, {5, 10}, 10, "");
        double dn = decor_eval.report.metrics.at("ndcg@10");
        double sn = static_eval.report.metrics.at("ndcg@10");
        if (dn >= sn) ++decor_wins;
        pair_details.push_back("s" + std::to_string(seed) + ":" + fmt(dn) + (dn >= sn ? ">=" : "<") + fmt(sn));
        progress("criterion 6: seed " + std::to_string(seed) + " ndcg decor " + fmt(dn) +
                 " static " + fmt(sn));

        if (seed == 1) {
            // (a) full test split for the DECOR configuration
            progress("criterion 6: full-test evaluation for (a)");
            EvalResult full = evaluate(decor_model, run.split.test, run.sids, run.trie, {5, 10}, 10, "");
            seed1_recall10 = full.report.metrics.at("recall@10");

            // criterion 7 inputs on the same trained pair
            std::vector<SplitExample> util_ctx(
                run.split.val.begin(),
                run.split.val.begin() + std::min<size_t>(500, run.split.val.size()));
            util_decor = utilization(decor_model, util_ctx, run.sids);
            util_static = utilization(static_model, util_ctx, run.sids);
        }
    }

    double random_recall = 10.0 / 2048.0;
    bool a_ok = seed1_recall10 >= 10.0 * random_recall;
    bool b_ok = decor_wins >= 3;
    std::string detail6 = "(a) recall@10=" + fmt(seed1_recall10) + " vs 10x random " +
                          fmt(10.0 * random_recall) + "; (b) wins " + std::to_string(decor_wins) +
                          "/5 on 2000-user test slices [";
    for (size_t i = 0; i < pair_details.size(); ++i) detail6 += (i ? " " : "") + pair_details[i];
    detail6 += "]; " + fmt(elapsed(start)) + "s";
    report(6, "end-to-end synthetic run: recall floor and ablation direction", a_ok && b_ok, detail6);

    bool dir_ok = util_decor.levels[0].combined >= util_static.levels[0].static_used;
    bool static_exact = true;
    for (const auto& lv : util_static.levels)
        if (lv.combined != lv.static_used || lv.composition_active != 0.0) static_exact = false;
    report(7, "utilization direction at layer 1; static baseline exact",
           dir_ok && static_exact,
           "decor combined=" + fmt(util_decor.levels[0].combined) +
               " >= static=" + fmt(util_static.levels[0].static_used) +
               (static_exact ? "; static combined == static_used" : "; STATIC MISMATCH"));
}

// ---------------------------------------------------------------------------
// 8: composition path scales linearly in the context length.
// ---------------------------------------------------------------------------

void criterion_8(const SynthRun& run) {
    RecommenderConfig rc = desk_rec_config(11, 1);
    rc.max_history_items = 32;
    DecorConfig dc;
    dc.alpha = 0.4;
    dc.bos_queries = 32;
    RecommenderModel<float> model = RecommenderModel<float>::init(rc, dc, run.vocab, run.pre);

    num::NoGradGuard ng;
    StepContext<float> ctx = make_step_context(model);
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> code(0, 31), level(0, 2);

    auto make_history = [&](int items) {
        std::vector<int32_t> h;
        for (int i = 0; i < items; ++i) {
            for (int l = 0; l < 3; ++l) h.push_back(run.vocab.code_token(l, code(rng)));
            h.push_back(run.vocab.collision_token(0));
        }
        return h;
    };
    int32_t target = run.vocab.code_token(level(rng), code(rng));

    // pool + compose only; the backbone never runs here
    auto time_composition = [&](const std::vector<int32_t>& history) {
        constexpr int reps = 60;
        auto t0 = Clock::now();
        for (int r = 0; r < reps; ++r) {
            num::Tensor<float> rows = num::gather_rows(ctx.fused_vocab, history);
            num::Tensor<float> scores = model.pooler.scores(rows);
            num::Tensor<float> u = pool_context_prefix(rows, scores, rows.rows(), model.pooler);
            num::Tensor<float> out = compose_token_fast(target, u, ctx, model);
            (void)out;
        }
        return elapsed(t0) / reps;
    };

    std::vector<double> t8, t16, t32;
    auto h8 = make_history(8), h16 = make_history(16), h32 = make_history(32);
    time_composition(h32);  // warm up
    for (int trial = 0; trial < 20; ++trial) {
        t8.push_back(time_composition(h8));
        t16.push_back(time_composition(h16));
        t32.push_back(time_composition(h32));
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    double m8 = median(t8), m16 = median(t16), m32 = median(t32);
    double ratio = m32 / m16;
    report(8, "composition path: time(32 items) <= 2.5 x time(16 items)", ratio <= 2.5,
           "medians us: L8=" + fmt(m8 * 1e6) + " L16=" + fmt(m16 * 1e6) + " L32=" + fmt(m32 * 1e6) +
               ", ratio(32/16)=" + fmt(ratio));
}

// ---------------------------------------------------------------------------
// 9: metric oracles.
// ---------------------------------------------------------------------------

void criterion_9() {
    std::mt19937_64 rng(91);
    std::uniform_int_distribution<int> n_pick(1, 30), k_pick(1, 15), item_pick(0, 39);
    int mismatches = 0;
    for (int t = 0; t < 1000; ++t) {
        int n = n_pick(rng), k = k_pick(rng);
        std::vector<std::string> pool;
        for (int i = 0; i < 40; ++i) pool.push_back("i" + std::to_string(i));
        std::shuffle(pool.begin(), pool.end(), rng);
        std::vector<std::string> ranked(pool.begin(), pool.begin() + n);
        std::string truth = "i" + std::to_string(item_pick(rng));

        // brute force: find the 1-based rank by scan
        int rank = 0;
        for (int i = 0; i < n; ++i)
            if (ranked[static_cast<size_t>(i)] == truth) {
                rank = i + 1;
                break;
            }
        double want_recall = rank >= 1 && rank <= k ? 1.0 : 0.0;
        double want_ndcg = rank >= 1 && rank <= k ? 1.0 / std::log2(static_cast<double>(rank + 1)) : 0.0;
        if (recall_at_k(ranked, truth, k) != want_recall) ++mismatches;
        if (std::abs(ndcg_at_k(ranked, truth, k) - want_ndcg) > 0.0) ++mismatches;
    }
    std::vector<std::string> abc = {"a", "b", "c"};
    bool rank3 = ndcg_at_k(abc, "c", 5) == 0.5;
    report(9, "recall/ndcg match brute force on 1000 cases; ndcg(rank 3) = 0.5",
           mismatches == 0 && rank3, "mismatches=" + std::to_string(mismatches) + ", ndcg@rank3=" +
                                         fmt(ndcg_at_k(abc, "c", 5)));
}

// ---------------------------------------------------------------------------
// 10: pipeline determinism through the CLI, --threads 1, byte-identical
// reports and checkpoints.
// ---------------------------------------------------------------------------

int run_cmd(const std::string& cmd) {
    int status = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion_10() {
    auto start = Clock::now();
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "decor_acceptance_c10";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::string cfg = (dir / "config.json").string();
    {
        std::ofstream out(cfg);
        out << R"({"seed": 31,
  "synthetic": {"n_categories": 4, "n_subcategories_per_cat": 4, "n_items": 160,
                 "embed_dim": 16, "n_users": 220, "seq_len_min": 6, "seq_len_max": 10},
  "tokenizer": {"levels": 2, "codebook_size": 8, "latent_dim": 32, "input_dim": 16,
                 "encoder_hidden": [32], "epochs": 12, "batch_size": 64},
  "recommender": {"d_model": 32, "enc_layers": 1, "dec_layers": 1, "heads": 2, "ffn_mult": 2,
                   "dropout": 0.1, "max_epochs": 3, "batch_size": 32, "beam_size": 10,
                   "max_history_items": 8, "val_eval_users": 10, "learning_rate": 0.002},
  "decor": {"alpha": 0.4, "bos_queries": 4}})";
    }

    const std::string bin = DECOR_CLI_PATH;
    bool all_ok = true;
    // both passes run the literally identical command lines in one working
    // directory; pass A's artifacts are stashed aside before the rerun
    fs::path work = dir / "run";
    std::vector<std::string> artifacts = {"data/items.jsonl", "data/interactions.jsonl",
                                          "data/truth.jsonl", "tok.ckpt", "sids.jsonl",
                                          "rec.ckpt", "report.json"};
    auto run_once = [&] {
        fs::remove_all(work);
        fs::create_directories(work);
        std::string common = " --threads 1";
        all_ok = all_ok && run_cmd(bin + " synth --config " + cfg + " --out " + (work / "data").string() + common) == 0;
        all_ok = all_ok && run_cmd(bin + " train-tokenizer --config " + cfg + " --items " + (work / "data/items.jsonl").string() +
                                   " --out " + (work / "tok.ckpt").string() + common) == 0;
        all_ok = all_ok && run_cmd(bin + " tokenize --ckpt " + (work / "tok.ckpt").string() + " --items " +
                                   (work / "data/items.jsonl").string() + " --out " + (work / "sids.jsonl").string() + common) == 0;
        all_ok = all_ok && run_cmd(bin + " train-rec --config " + cfg + " --sids " + (work / "sids.jsonl").string() +
                                   " --interactions " + (work / "data/interactions.jsonl").string() + " --tokenizer-ckpt " +
                                   (work / "tok.ckpt").string() + " --out " + (work / "rec.ckpt").string() + common) == 0;
        all_ok = all_ok && run_cmd(bin + " evaluate --ckpt " + (work / "rec.ckpt").string() + " --split test --out " +
                                   (work / "report.json").string() + common) == 0;
    };

    progress("criterion 10: pipeline run A");
    run_once();
    std::map<std::string, std::string> first_pass;
    for (const auto& f : artifacts) first_pass[f] = file_bytes((work / f).string());
    progress("criterion 10: pipeline run B");
    run_once();

    std::string mismatch;
    for (const auto& f : artifacts) {
        if (file_bytes((work / f).string()) != first_pass[f]) {
            mismatch += f + " ";
        }
    }
    report(10, "pipeline run twice with one seed is byte-identical", all_ok && mismatch.empty(),
           (all_ok ? "" : "command failure; ") +
               (mismatch.empty() ? "all artifacts identical" : "differs: " + mismatch) + ", " +
               fmt(elapsed(start)) + "s");
    fs::remove_all(dir);
}

}  // namespace

int main() {
    // fixed worker count: training results depend on the reduction chunking,
    // so the suite pins it for run-to-run reproducibility
    set_thread_budget(2);
    std::printf("DECOR acceptance suite (2 worker threads)\n");
    auto t0 = Clock::now();

    criterion_1_and_2();
    criterion_3();

    progress("building the shared seed-1 synthetic run");
    SynthRun seed1 = build_synth_run(1);
    criterion_4(seed1);
    criterion_5(seed1);
    criterion_9();
    criterion_8(seed1);
    criterion_10();
    criteria_6_and_7(seed1);

    std::printf("%d/10 criteria passed in %.1fs\n", 10 - g_failures, elapsed(t0));
    return g_failures;
}
