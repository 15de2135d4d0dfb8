// params.hpp
// Named trainable parameters and the flat registry used by the optimizer
// and checkpointing. Frozen parameters take no gradient and never change.
#pragma once

#include <random>
#include <string>
#include <vector>

#include "decor/tensor.hpp"

namespace decor {

template <typename T>
struct Parameter {
    std::string name;
    num::Tensor<T> tensor;
    bool frozen = false;

    Parameter() = default;
    Parameter(std::string n, num::Shape shape, std::vector<T> data, bool frozen_ = false)
        : name(std::move(n)),
          tensor(num::Tensor<T>::leaf(std::move(shape), std::move(data), /*requires_grad=*/!frozen_)),
          frozen(frozen_) {}

    std::vector<T>& values() { return tensor.mutable_value(); }
    const std::vector<T>& values() const { return tensor.value(); }
    int64_t numel() const { return tensor.numel(); }
};

template <typename T>
class ParamSet {
public:
    void add(Parameter<T>& p) { items_.push_back(&p); }
    size_t size() const { return items_.size(); }
    Parameter<T>& at(size_t i) { return *items_[i]; }
    const Parameter<T>& at(size_t i) const { return *items_[i]; }

    Parameter<T>* find(const std::string& name) {
        for (auto* p : items_)
            if (p->name == name) return p;
        return nullptr;
    }

    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

private:
    std::vector<Parameter<T>*> items_;
};

// ---------------------------------------------------------------------------
// Initializers. All draws come from the caller's engine so parameter
// initialization is a single deterministic stream.
// ---------------------------------------------------------------------------

template <typename T>
std::vector<T> normal_init(size_t n, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(dist(rng));
    return v;
}

template <typename T>
std::vector<T> uniform_init(size_t n, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(dist(rng));
    return v;
}

// fan-based uniform, the usual sqrt(6/(fan_in+fan_out)) limit
template <typename T>
std::vector<T> xavier_init(int64_t fan_out, int64_t fan_in, std::mt19937_64& rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform_init<T>(static_cast<size_t>(fan_in * fan_out), -limit, limit, rng);
}

}  // namespace decor
