// Decomposed embedding fusion and contextualized token composition:
// closed-form cases, attention-distribution properties, the alpha
// residual-mix affinity, frozen-codebook semantics, and gradient checks
// of the composed paths.
#include <doctest.h>

#include <cmath>
#include <random>

#include "decor/embedding.hpp"
#include "decor/gradcheck.hpp"
#include "decor/optim.hpp"

using namespace decor;
using num::Tensor;

namespace {

struct Fixture {
    TokenVocab vocab;
    FrozenCodebooks<double> pre;
    FusedEmbeddingTable<double> table;
    ContextPooler<double> pooler;
    CompositionHead<double> head;
    BosQuerySet<double> bos;

    explicit Fixture(int levels = 2, int k = 4, int d = 6, double alpha = 0.4, int n_bos = 3,
                     uint64_t seed = 5) {
        vocab = TokenVocab{levels, k, 8};
        pre.levels = levels;
        pre.codebook_size = k;
        pre.dim = d;
        std::mt19937_64 rng(derive_seed(seed, "fixture"));
        std::normal_distribution<double> g(0.0, 1.0);
        pre.data.resize(static_cast<size_t>(levels * k * d));
        for (auto& v : pre.data) v = g(rng);
        table = FusedEmbeddingTable<double>::init(vocab, pre, rng);
        // unit-scale collaborative rows mimic a trained table and keep the
        // layer norms away from their eps-dominated regime
        for (auto& v : table.e_collab.values()) v = g(rng);
        pooler = ContextPooler<double>::init(d, rng);
        head = CompositionHead<double>::init(d, alpha, rng);
        bos = BosQuerySet<double>::init(n_bos, d, rng);
    }
};

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("fuse_token closed forms") {
    Fixture f;
    int d = f.pre.dim;

    // zero fusion matrix kills every codebook token embedding
    std::fill(f.table.w_fuse.values().begin(), f.table.w_fuse.values().end(), 0.0);
    int32_t tok = f.vocab.code_token(1, 2);
    auto zero = fuse_token(tok, f.table);
    for (double v : zero.value()) CHECK(v == 0.0);

    // identity projections with W_fuse = [I | 0] reduce to LN(E_pre row)
    Fixture f2;
    auto eye = [&](Parameter<double>& p) {
        std::fill(p.values().begin(), p.values().end(), 0.0);
        for (int i = 0; i < d; ++i) p.values()[static_cast<size_t>(i * d + i)] = 1.0;
    };
    eye(f2.table.w_pre);
    eye(f2.table.w_collab);
    std::fill(f2.table.ln_pre_gain.values().begin(), f2.table.ln_pre_gain.values().end(), 1.0);
    std::fill(f2.table.ln_pre_bias.values().begin(), f2.table.ln_pre_bias.values().end(), 0.0);
    std::fill(f2.table.w_fuse.values().begin(), f2.table.w_fuse.values().end(), 0.0);
    for (int i = 0; i < d; ++i) f2.table.w_fuse.values()[static_cast<size_t>(i * 2 * d + i)] = 1.0;

    int32_t tok2 = f2.vocab.code_token(0, 3);
    auto fused = fuse_token(tok2, f2.table);
    std::vector<double> row(f2.pre.row(0, 3), f2.pre.row(0, 3) + d);
    auto expected = num::layer_norm(Tensor<double>::leaf({d}, row, false),
                                    f2.table.ln_pre_gain.tensor, f2.table.ln_pre_bias.tensor, 1e-5);
    CHECK(max_abs_diff(fused.value(), expected.value()) < 1e-9);

    // special tokens bypass fusion entirely
    auto bos_row = fuse_token(TokenVocab::kBos, f2.table);
    for (int j = 0; j < d; ++j)
        CHECK(bos_row.value()[static_cast<size_t>(j)] ==
              f2.table.special.values()[static_cast<size_t>(TokenVocab::kBos * d + j)]);

    CHECK_THROWS_AS(fuse_token(f.vocab.size(), f.table), ConfigError);
}

TEST_CASE("fuse_token gradients: frozen E_pre takes none, the rest do") {
    Fixture f;
    {
        num::Gradients<double> g;
        num::backward(num::sum_squares(fuse_token(f.vocab.code_token(0, 1), f.table)), g);
        CHECK(g.find(f.table.e_pre.tensor.node()) == nullptr);
        CHECK(g.find(f.table.e_collab.tensor.node()) != nullptr);
        CHECK(g.find(f.table.w_pre.tensor.node()) != nullptr);
        CHECK(g.find(f.table.w_collab.tensor.node()) != nullptr);
        CHECK(g.find(f.table.w_fuse.tensor.node()) != nullptr);
    }

    ParamSet<double> params;
    f.table.collect_params(params);
    std::vector<num::GradCheckInput> inputs;
    std::vector<Parameter<double>*> live;
    for (auto* p : params) {
        if (p->frozen) continue;
        live.push_back(p);
        inputs.push_back({p->name, p->tensor.shape(), p->values()});
    }
    auto op = [&](const std::vector<Tensor<double>>& in) {
        for (size_t i = 0; i < in.size(); ++i) live[i]->tensor = in[i];
        return num::sum_squares(fuse_token(f.vocab.code_token(1, 0), f.table));
    };
    auto report = num::grad_check("fuse_token", op, inputs, 1e-4);
    CHECK(report.max_relative_error <= 1e-5);
}

TEST_CASE("pool_context basics") {
    Fixture f;
    int d = f.pre.dim;
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.0, 1.0);

    // singleton context: softmax weight 1, u = mlp_ctx(h1)
    std::vector<double> h1(static_cast<size_t>(d));
    for (auto& v : h1) v = g(rng);
    Tensor<double> single = Tensor<double>::leaf({1, d}, h1, false);
    auto u = pool_context(single, f.pooler);
    auto direct = f.pooler.mlp_ctx(single);
    CHECK(max_abs_diff(u.value(), direct.value()) < 1e-12);

    // identical rows pool with weights 1/2 each
    std::vector<double> twice = h1;
    twice.insert(twice.end(), h1.begin(), h1.end());
    Tensor<double> pair = Tensor<double>::leaf({2, d}, twice, false);
    auto w = num::softmax_rows(f.pooler.scores(pair));
    CHECK(w.value()[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(w.value()[1] == doctest::Approx(0.5).epsilon(1e-9));

    // order-free pooling: permuting the rows leaves u unchanged
    std::vector<double> rows(static_cast<size_t>(5 * d));
    for (auto& v : rows) v = g(rng);
    Tensor<double> h_seq = Tensor<double>::leaf({5, d}, rows, false);
    std::vector<double> perm_rows;
    for (int i : {3, 0, 4, 2, 1})
        perm_rows.insert(perm_rows.end(), rows.begin() + i * d, rows.begin() + (i + 1) * d);
    Tensor<double> h_perm = Tensor<double>::leaf({5, d}, perm_rows, false);
    CHECK(max_abs_diff(pool_context(h_seq, f.pooler).value(),
                       pool_context(h_perm, f.pooler).value()) < 1e-9);

    CHECK_THROWS_AS(pool_context(Tensor<double>::leaf({0, d}, {}, false), f.pooler), NumericsError);

    // pooling weights form a probability vector
    auto weights = num::softmax_rows(f.pooler.scores(h_seq)).value();
    double sum = 0.0;
    for (double v : weights) {
        CHECK(v >= 0.0);
        sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("composition attention distribution") {
    Fixture f;
    int d = f.pre.dim;
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> uv(static_cast<size_t>(d)), cand(static_cast<size_t>(5 * d));
    for (auto& v : uv) v = g(rng);
    for (auto& v : cand) v = g(rng);
    Tensor<double> u = Tensor<double>::leaf({1, d}, uv, false);
    Tensor<double> candidates = Tensor<double>::leaf({5, d}, cand, false);

    // W_q = 0 gives uniform weights
    std::fill(f.head.w_q.values().begin(), f.head.w_q.values().end(), 0.0);
    auto uni = composition_attention(u, candidates, f.head).value();
    for (double v : uni) CHECK(v == doctest::Approx(0.2).epsilon(1e-9));

    // restore a random head, weights sum to 1 and follow the scores
    Fixture f3;
    auto attn = composition_attention(u, candidates, f3.head);
    double sum = 0.0;
    for (double v : attn.value()) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));

    num::NoGradGuard ng;
    auto q = num::matmul(u, f3.head.w_q.tensor, false, true);
    auto keys = num::matmul(candidates, f3.head.w_k.tensor, false, true);
    auto scores = num::matmul(q, keys, false, true).value();
    for (int a = 0; a < 5; ++a)
        for (int b = 0; b < 5; ++b)
            if (scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)])
                CHECK(attn.value()[static_cast<size_t>(a)] > attn.value()[static_cast<size_t>(b)]);
}

TEST_CASE("compose_token closed forms and convexity bound") {
    int d = 6;
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> uv(static_cast<size_t>(d));
    for (auto& v : uv) v = g(rng);
    Tensor<double> u = Tensor<double>::leaf({1, d}, uv, false);

    // alpha = 0: exactly the static fused embedding
    Fixture f0(2, 4, d, 0.0);
    int32_t tok = f0.vocab.code_token(1, 2);
    auto fused_vocab = f0.table.fuse_all();
    auto composed = compose_token(tok, u, fused_vocab, f0.vocab, f0.head);
    auto statik = num::gather_rows(fused_vocab, {tok});
    CHECK(max_abs_diff(composed.value(), statik.value()) == 0.0);

    // alpha = 1 with W_q = 0: unweighted mean of the level's candidates
    Fixture f1(2, 4, d, 1.0);
    std::fill(f1.head.w_q.values().begin(), f1.head.w_q.values().end(), 0.0);
    auto vocab1 = f1.table.fuse_all();
    int32_t tok1 = f1.vocab.code_token(0, 1);
    auto mean_composed = compose_token(tok1, u, vocab1, f1.vocab, f1.head);
    auto cands = num::slice_rows(vocab1, f1.vocab.code_base(), 4);
    std::vector<double> mean(static_cast<size_t>(d), 0.0);
    for (int c = 0; c < 4; ++c)
        for (int j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += cands.value()[static_cast<size_t>(c * d + j)] / 4.0;
    CHECK(max_abs_diff(mean_composed.value(), mean) < 1e-9);

    // special tokens are never composed
    CHECK_THROWS_AS(compose_token(TokenVocab::kEos, u, vocab1, f1.vocab, f1.head), ConfigError);

    // ||e_final - e_static|| <= alpha * max_c ||e_c - e_static||
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Fixture fr(2, 5, d, 0.55, 3, seed + 100);
        std::vector<double> uu(static_cast<size_t>(d));
        for (auto& v : uu) v = g(rng);
        Tensor<double> ur = Tensor<double>::leaf({1, d}, uu, false);
        auto fv = fr.table.fuse_all();
        int32_t tk = fr.vocab.code_token(1, 3);
        auto out = compose_token(tk, ur, fv, fr.vocab, fr.head);
        auto st = num::gather_rows(fv, {tk});
        auto cd = num::slice_rows(fv, fr.vocab.code_base() + 5, 5);
        double lhs = 0.0;
        for (int j = 0; j < d; ++j) {
            double diff = out.value()[static_cast<size_t>(j)] - st.value()[static_cast<size_t>(j)];
            lhs += diff * diff;
        }
        lhs = std::sqrt(lhs);
        double max_dist = 0.0;
        for (int c = 0; c < 5; ++c) {
            double dist = 0.0;
            for (int j = 0; j < d; ++j) {
                double diff = cd.value()[static_cast<size_t>(c * d + j)] - st.value()[static_cast<size_t>(j)];
                dist += diff * diff;
            }
            max_dist = std::max(max_dist, std::sqrt(dist));
        }
        CHECK(lhs <= 0.55 * max_dist + 1e-9);
    }
}

TEST_CASE("compose_bos closed forms") {
    int d = 6;
    std::mt19937_64 rng(31);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> uv(static_cast<size_t>(d));
    for (auto& v : uv) v = g(rng);
    Tensor<double> u = Tensor<double>::leaf({1, d}, uv, false);

    // N = 1: mix of the single query and the static row
    Fixture f(2, 4, d, 0.3, 1);
    auto fv = f.table.fuse_all();
    auto e_bos = num::gather_rows(fv, {TokenVocab::kBos});
    auto out = compose_bos(u, f.bos, f.head, e_bos);
    for (int j = 0; j < d; ++j) {
        double expect = 0.3 * f.bos.queries.values()[static_cast<size_t>(j)] + 0.7 * e_bos.value()[static_cast<size_t>(j)];
        CHECK(out.value()[static_cast<size_t>(j)] == doctest::Approx(expect).epsilon(1e-9));
    }

    // alpha = 0: static BOS embedding
    Fixture f0(2, 4, d, 0.0, 4);
    auto fv0 = f0.table.fuse_all();
    auto e0 = num::gather_rows(fv0, {TokenVocab::kBos});
    auto out0 = compose_bos(u, f0.bos, f0.head, e0);
    CHECK(max_abs_diff(out0.value(), e0.value()) == 0.0);

    // N = 32: weights over the queries sum to 1
    Fixture f32(2, 4, d, 0.5, 32);
    auto attn = composition_attention(u, f32.bos.queries.tensor, f32.head).value();
    double sum = 0.0;
    for (double v : attn) sum += v;
    CHECK(attn.size() == 32);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));

    Fixture fdis(2, 4, d, 0.5, 0);
    CHECK_THROWS_AS(compose_bos(u, fdis.bos, fdis.head, e0), ConfigError);
}

TEST_CASE("e_final is affine in alpha") {
    int d = 6;
    std::mt19937_64 rng(41);
    std::normal_distribution<double> g(0.0, 1.0);
    for (uint64_t seed = 0; seed < 5; ++seed) {
        std::vector<double> uv(static_cast<size_t>(d));
        for (auto& v : uv) v = g(rng);
        Tensor<double> u = Tensor<double>::leaf({1, d}, uv, false);
        std::vector<std::vector<double>> outs;
        for (double alpha : {0.0, 0.5, 1.0}) {
            Fixture f(2, 4, d, alpha, 2, seed + 7);  // same seed: same weights, alpha differs
            auto fv = f.table.fuse_all();
            outs.push_back(compose_token(f.vocab.code_token(0, 2), u, fv, f.vocab, f.head).value());
        }
        for (int j = 0; j < d; ++j) {
            double mid = 0.5 * (outs[0][static_cast<size_t>(j)] + outs[2][static_cast<size_t>(j)]);
            CHECK(std::abs(outs[1][static_cast<size_t>(j)] - mid) <= 1e-6);
        }
    }
}

TEST_CASE("grad_check of the pooled composition path") {
    Fixture f(2, 3, 5, 0.45, 2, 77);
    int d = 5;
    std::mt19937_64 rng(55);
    std::normal_distribution<double> g(0.0, 1.0);

    std::vector<int32_t> context = {f.vocab.code_token(0, 1), f.vocab.code_token(1, 2),
                                    f.vocab.collision_token(0)};
    int32_t target = f.vocab.code_token(1, 0);

    ParamSet<double> params;
    f.table.collect_params(params);
    f.pooler.collect_params(params);
    f.head.collect_params(params);
    f.bos.collect_params(params);
    std::vector<num::GradCheckInput> inputs;
    std::vector<Parameter<double>*> live;
    for (auto* p : params) {
        if (p->frozen) continue;
        live.push_back(p);
        inputs.push_back({p->name, p->tensor.shape(), p->values()});
    }

    auto pool_compose = [&](const std::vector<Tensor<double>>& in) {
        for (size_t i = 0; i < in.size(); ++i) live[i]->tensor = in[i];
        auto fv = f.table.fuse_all();
        auto h_seq = num::gather_rows(fv, context);
        auto u = pool_context(h_seq, f.pooler);
        return num::sum_squares(compose_token(target, u, fv, f.vocab, f.head));
    };
    auto report = num::grad_check("pool_context+compose_token", pool_compose, inputs, 1e-4);
    INFO("max relative error " << report.max_relative_error);
    CHECK(report.max_relative_error <= 1e-5);

    auto bos_op = [&](const std::vector<Tensor<double>>& in) {
        for (size_t i = 0; i < in.size(); ++i) live[i]->tensor = in[i];
        auto fv = f.table.fuse_all();
        auto h_seq = num::gather_rows(fv, context);
        auto u = pool_context(h_seq, f.pooler);
        return num::sum_squares(compose_bos(u, f.bos, f.head, num::gather_rows(fv, {TokenVocab::kBos})));
    };
    auto bos_report = num::grad_check("compose_bos", bos_op, inputs, 1e-4);
    CHECK(bos_report.max_relative_error <= 1e-5);
}

TEST_CASE("frozen pretrained table survives optimizer steps while collab moves") {
    Fixture f(2, 4, 6, 0.5, 2, 3);
    ParamSet<double> params;
    f.table.collect_params(params);
    f.pooler.collect_params(params);
    f.head.collect_params(params);

    std::vector<double> pre_before = f.table.e_pre.values();
    std::vector<double> collab_before = f.table.e_collab.values();

    AdamW<double> opt(params, {.weight_decay = 0.01});
    std::vector<int32_t> context = {f.vocab.code_token(0, 0), f.vocab.code_token(1, 1)};
    for (int step = 0; step < 25; ++step) {
        auto fv = f.table.fuse_all();
        auto u = pool_context(num::gather_rows(fv, context), f.pooler);
        auto loss = num::sum_squares(compose_token(f.vocab.code_token(0, 2), u, fv, f.vocab, f.head));
        num::Gradients<double> g;
        num::backward(loss, g);
        GradBuffers<double> buf(params);
        for (size_t p = 0; p < params.size(); ++p) {
            if (params.at(p).frozen) continue;
            const std::vector<double>* grad = g.find(params.at(p).tensor.node());
            if (grad != nullptr) buf.slots[p] = *grad;
        }
        opt.step(params, buf, 1e-2);
    }
    CHECK(f.table.e_pre.values() == pre_before);       // bitwise unchanged
    CHECK(f.table.e_collab.values() != collab_before);  // learnable side moved
}
