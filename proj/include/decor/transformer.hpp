// transformer.hpp
// Pre-norm encoder/decoder blocks over the autodiff substrate. Attention
// projections carry no bias, FFN layers do; ReLU inside the FFN.
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "decor/params.hpp"
#include "decor/tensor.hpp"

namespace decor {

template <typename T>
struct ForwardCtx {
    bool training = false;
    T dropout = T(0);
    std::mt19937_64* rng = nullptr;

    num::Tensor<T> drop(const num::Tensor<T>& x) const {
        if (!training || dropout <= T(0)) return x;
        return num::dropout(x, dropout, *rng, true);
    }
};

template <typename T>
struct AttentionParams {
    Parameter<T> w_q, w_k, w_v, w_o;  // {d, d}

    static AttentionParams init(const std::string& prefix, int64_t d, std::mt19937_64& rng) {
        AttentionParams a;
        a.w_q = Parameter<T>(prefix + ".W_q", {d, d}, xavier_init<T>(d, d, rng));
        a.w_k = Parameter<T>(prefix + ".W_k", {d, d}, xavier_init<T>(d, d, rng));
        a.w_v = Parameter<T>(prefix + ".W_v", {d, d}, xavier_init<T>(d, d, rng));
        a.w_o = Parameter<T>(prefix + ".W_o", {d, d}, xavier_init<T>(d, d, rng));
        return a;
    }
    void collect(ParamSet<T>& out) {
        out.add(w_q);
        out.add(w_k);
        out.add(w_v);
        out.add(w_o);
    }
};

template <typename T>
struct LayerNormParams {
    Parameter<T> gain, bias;

    static LayerNormParams init(const std::string& prefix, int64_t d) {
        LayerNormParams ln;
        ln.gain = Parameter<T>(prefix + ".gain", {d}, std::vector<T>(static_cast<size_t>(d), T(1)));
        ln.bias = Parameter<T>(prefix + ".bias", {d}, std::vector<T>(static_cast<size_t>(d), T(0)));
        return ln;
    }
    void collect(ParamSet<T>& out) {
        out.add(gain);
        out.add(bias);
    }
    num::Tensor<T> apply(const num::Tensor<T>& x) const {
        return num::layer_norm(x, gain.tensor, bias.tensor, T(1e-5));
    }
};

template <typename T>
struct FfnParams {
    Parameter<T> w1, b1, w2, b2;

    static FfnParams init(const std::string& prefix, int64_t d, int64_t inner,
                          std::mt19937_64& rng) {
        FfnParams f;
        f.w1 = Parameter<T>(prefix + ".W1", {inner, d}, xavier_init<T>(inner, d, rng));
        f.b1 = Parameter<T>(prefix + ".b1", {inner}, std::vector<T>(static_cast<size_t>(inner), T(0)));
        f.w2 = Parameter<T>(prefix + ".W2", {d, inner}, xavier_init<T>(d, inner, rng));
        f.b2 = Parameter<T>(prefix + ".b2", {d}, std::vector<T>(static_cast<size_t>(d), T(0)));
        return f;
    }
    void collect(ParamSet<T>& out) {
        out.add(w1);
        out.add(b1);
        out.add(w2);
        out.add(b2);
    }
    num::Tensor<T> apply(const num::Tensor<T>& x) const {
        num::Tensor<T> h = num::relu(num::add_rowvec(num::matmul(x, w1.tensor, false, true), b1.tensor));
        return num::add_rowvec(num::matmul(h, w2.tensor, false, true), b2.tensor);
    }
};

// Additive causal mask {n, n}: 0 on and below the diagonal, -1e9 above.
template <typename T>
num::Tensor<T> causal_mask(int64_t n) {
    std::vector<T> m(static_cast<size_t>(n * n), T(0));
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = i + 1; j < n; ++j) m[static_cast<size_t>(i * n + j)] = T(-1e9);
    return num::Tensor<T>::leaf({n, n}, std::move(m), false);
}

template <typename T>
num::Tensor<T> multi_head_attention(const num::Tensor<T>& q_in, const num::Tensor<T>& kv_in,
                                    const AttentionParams<T>& p, int heads, bool causal,
                                    const ForwardCtx<T>& ctx) {
    int64_t d = q_in.cols();
    DECOR_REQUIRE(d % heads == 0, ConfigError, "model width not divisible by head count");
    int64_t dh = d / heads;
    T scale_f = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    num::Tensor<T> q = num::matmul(q_in, p.w_q.tensor, false, true);
    num::Tensor<T> k = num::matmul(kv_in, p.w_k.tensor, false, true);
    num::Tensor<T> v = num::matmul(kv_in, p.w_v.tensor, false, true);

    num::Tensor<T> mask;
    if (causal) mask = causal_mask<T>(q_in.rows());

    num::Tensor<T> merged;
    for (int h = 0; h < heads; ++h) {
        num::Tensor<T> qh = num::slice_cols(q, h * dh, dh);
        num::Tensor<T> kh = num::slice_cols(k, h * dh, dh);
        num::Tensor<T> vh = num::slice_cols(v, h * dh, dh);
        num::Tensor<T> scores = num::scale(num::matmul(qh, kh, false, true), scale_f);
        if (causal) scores = num::add(scores, mask);
        num::Tensor<T> probs = ctx.drop(num::softmax_rows(scores));
        num::Tensor<T> ctx_h = num::matmul(probs, vh);
        merged = h == 0 ? ctx_h : num::concat_cols(merged, ctx_h);
    }
    return num::matmul(merged, p.w_o.tensor, false, true);
}

template <typename T>
struct EncoderLayer {
    LayerNormParams<T> ln1, ln2;
    AttentionParams<T> attn;
    FfnParams<T> ffn;

    static EncoderLayer init(const std::string& prefix, int64_t d, int64_t inner,
                             std::mt19937_64& rng) {
        EncoderLayer l;
        l.ln1 = LayerNormParams<T>::init(prefix + ".ln1", d);
        l.ln2 = LayerNormParams<T>::init(prefix + ".ln2", d);
        l.attn = AttentionParams<T>::init(prefix + ".attn", d, rng);
        l.ffn = FfnParams<T>::init(prefix + ".ffn", d, inner, rng);
        return l;
    }
    void collect(ParamSet<T>& out) {
        ln1.collect(out);
        ln2.collect(out);
        attn.collect(out);
        ffn.collect(out);
    }
    num::Tensor<T> forward(num::Tensor<T> x, int heads, const ForwardCtx<T>& ctx) const {
        num::Tensor<T> n1 = ln1.apply(x);
        x = num::add(x, ctx.drop(multi_head_attention(n1, n1, attn, heads, false, ctx)));
        x = num::add(x, ctx.drop(ffn.apply(ln2.apply(x))));
        return x;
    }
};

template <typename T>
struct DecoderLayer {
    LayerNormParams<T> ln1, ln2, ln3;
    AttentionParams<T> self_attn, cross_attn;
    FfnParams<T> ffn;

    static DecoderLayer init(const std::string& prefix, int64_t d, int64_t inner,
                             std::mt19937_64& rng) {
        DecoderLayer l;
        l.ln1 = LayerNormParams<T>::init(prefix + ".ln1", d);
        l.ln2 = LayerNormParams<T>::init(prefix + ".ln2", d);
        l.ln3 = LayerNormParams<T>::init(prefix + ".ln3", d);
        l.self_attn = AttentionParams<T>::init(prefix + ".self", d, rng);
        l.cross_attn = AttentionParams<T>::init(prefix + ".cross", d, rng);
        l.ffn = FfnParams<T>::init(prefix + ".ffn", d, inner, rng);
        return l;
    }
    void collect(ParamSet<T>& out) {
        ln1.collect(out);
        ln2.collect(out);
        ln3.collect(out);
        self_attn.collect(out);
        cross_attn.collect(out);
        ffn.collect(out);
    }
    num::Tensor<T> forward(num::Tensor<T> y, const num::Tensor<T>& enc_out, int heads,
                           const ForwardCtx<T>& ctx) const {
        num::Tensor<T> n1 = ln1.apply(y);
        y = num::add(y, ctx.drop(multi_head_attention(n1, n1, self_attn, heads, true, ctx)));
        y = num::add(y, ctx.drop(multi_head_attention(ln2.apply(y), enc_out, cross_attn, heads, false, ctx)));
        y = num::add(y, ctx.drop(ffn.apply(ln3.apply(y))));
        return y;
    }
};

}  // namespace decor
