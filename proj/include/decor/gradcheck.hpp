// gradcheck.hpp
// Central-difference gradient verification for scalar-valued ops.
// Runs in 64-bit; stop-gradient values and dropout masks are frozen
// across probe evaluations through the tensor replay log.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "decor/tensor.hpp"

namespace decor::num {

struct GradCheckReport {
    std::string op_name;
    double max_relative_error = 0.0;
    std::vector<std::pair<std::string, double>> per_input_errors;
};

struct GradCheckInput {
    std::string name;
    Shape shape;
    std::vector<double> data;
};

// rel = |a - n| / max(1, |a|, |n|)
inline double relative_error(double analytic, double numeric) {
    double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / denom;
}

// op: (const std::vector<Tensor<double>>&) -> Tensor<double>, scalar loss.
template <typename Op>
GradCheckReport grad_check(const std::string& op_name, Op&& op,
                           const std::vector<GradCheckInput>& input_specs, double eps = 1e-4) {
    std::vector<Tensor<double>> inputs;
    inputs.reserve(input_specs.size());
    for (const auto& spec : input_specs) {
        inputs.push_back(Tensor<double>::leaf(spec.shape, spec.data, /*requires_grad=*/true));
    }

    ReplayLog<double> log;
    active_replay<double>() = &log;
    struct Deactivate {
        ~Deactivate() { active_replay<double>() = nullptr; }
    } deactivate;

    // Recording pass: analytic gradients.
    Tensor<double> loss = op(inputs);
    DECOR_REQUIRE(loss.numel() == 1, NumericsError, "grad_check: op must produce a scalar");
    Gradients<double> grads;
    backward(loss, grads);

    // Determinism probe: a replayed evaluation must reproduce the loss bit
    // for bit before any finite differencing is trusted.
    log.restart_replay();
    double replayed = op(inputs).item();
    DECOR_REQUIRE(replayed == loss.item(), NumericsError,
                  "grad_check: op is non-deterministic across probe evaluations");

    GradCheckReport report;
    report.op_name = op_name;
    for (size_t i = 0; i < inputs.size(); ++i) {
        const std::vector<double>* analytic = grads.find(inputs[i].node());
        std::vector<double>& data = inputs[i].mutable_value();
        double worst = 0.0;
        for (size_t e = 0; e < data.size(); ++e) {
            double saved = data[e];
            data[e] = saved + eps;
            log.restart_replay();
            double up = op(inputs).item();
            data[e] = saved - eps;
            log.restart_replay();
            double down = op(inputs).item();
            data[e] = saved;
            double numeric = (up - down) / (2.0 * eps);
            double a = analytic == nullptr ? 0.0 : (*analytic)[e];
            worst = std::max(worst, relative_error(a, numeric));
        }
        report.per_input_errors.emplace_back(input_specs[i].name, worst);
        report.max_relative_error = std::max(report.max_relative_error, worst);
    }
    return report;
}

}  // namespace decor::num
