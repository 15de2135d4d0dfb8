// optim.hpp
// AdamW with decoupled weight decay, linear warmup + cosine decay schedule,
// and global gradient-norm clipping.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "decor/params.hpp"

namespace decor {

struct LrSchedule {
    double base_lr = 1e-3;
    int64_t warmup_steps = 0;
    int64_t total_steps = 1;

    double at(int64_t step) const {
        if (warmup_steps > 0 && step < warmup_steps) {
            return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
        }
        int64_t decay_span = total_steps - warmup_steps;
        if (decay_span <= 0) return base_lr;
        double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(decay_span);
        progress = std::min(1.0, std::max(0.0, progress));
        return base_lr * 0.5 * (1.0 + std::cos(progress * 3.14159265358979323846));
    }
};

// Gradient buffers aligned with a ParamSet; frozen parameters keep empty
// slots so indices stay stable.
template <typename T>
struct GradBuffers {
    std::vector<std::vector<T>> slots;

    explicit GradBuffers(const ParamSet<T>& params) {
        slots.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            if (!params.at(i).frozen) slots[i].assign(static_cast<size_t>(params.at(i).numel()), T(0));
        }
    }
    void zero() {
        for (auto& s : slots) std::fill(s.begin(), s.end(), T(0));
    }
};

// Returns the pre-clip global norm.
template <typename T>
double clip_global_norm(GradBuffers<T>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& s : grads.slots)
        for (T g : s) sq += static_cast<double>(g) * static_cast<double>(g);
    double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        T f = static_cast<T>(max_norm / norm);
        for (auto& s : grads.slots)
            for (T& g : s) g *= f;
    }
    return norm;
}

template <typename T>
class AdamW {
public:
    struct Options {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.0;
    };

    AdamW(const ParamSet<T>& params, Options opts) : opts_(opts) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            if (!params.at(i).frozen) {
                m_[i].assign(static_cast<size_t>(params.at(i).numel()), T(0));
                v_[i].assign(static_cast<size_t>(params.at(i).numel()), T(0));
            }
        }
    }

    void step(ParamSet<T>& params, const GradBuffers<T>& grads, double lr) {
        ++step_count_;
        double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_count_));
        double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_count_));
        for (size_t i = 0; i < params.size(); ++i) {
            Parameter<T>& p = params.at(i);
            if (p.frozen) continue;
            std::vector<T>& w = p.values();
            const std::vector<T>& g = grads.slots[i];
            std::vector<T>& m = m_[i];
            std::vector<T>& v = v_[i];
            // decay applied to matrices only; vectors (biases, norms) exempt
            bool decay = opts_.weight_decay > 0.0 && p.tensor.shape().size() >= 2;
            for (size_t e = 0; e < w.size(); ++e) {
                double gd = static_cast<double>(g[e]);
                double md = opts_.beta1 * static_cast<double>(m[e]) + (1.0 - opts_.beta1) * gd;
                double vd = opts_.beta2 * static_cast<double>(v[e]) + (1.0 - opts_.beta2) * gd * gd;
                m[e] = static_cast<T>(md);
                v[e] = static_cast<T>(vd);
                double update = (md / bc1) / (std::sqrt(vd / bc2) + opts_.eps);
                double wd = static_cast<double>(w[e]);
                if (decay) wd -= lr * opts_.weight_decay * wd;
                w[e] = static_cast<T>(wd - lr * update);
            }
        }
    }

    int64_t step_count() const { return step_count_; }
    void set_step_count(int64_t s) { step_count_ = s; }
    std::vector<std::vector<T>>& moments1() { return m_; }
    std::vector<std::vector<T>>& moments2() { return v_; }

private:
    Options opts_;
    int64_t step_count_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

}  // namespace decor
