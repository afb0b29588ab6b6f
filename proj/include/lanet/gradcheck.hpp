#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "lanet/tensor.hpp"

namespace lanet {

/// Central finite differences against the analytic gradient.
///
/// `forward` must rebuild the graph from the given inputs and return a scalar
/// loss. Inputs must be f64 leaves with grad tracking. When `max_coords > 0`
/// a deterministic random subset of coordinates per input is checked instead
/// of every coordinate (full-model checks would otherwise need one forward
/// pair per parameter element). `denom_floor` turns the comparison absolute
/// for gradients below it; deep graphs have coordinates whose true gradient
/// sits under the forward pass's own roundoff.
inline double grad_check(
    const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& forward,
    std::vector<Tensor<double>>& inputs, double eps, std::size_t max_coords = 0,
    std::uint64_t coord_seed = 7, double denom_floor = 1e-12) {
    Tensor<double> loss = forward(inputs);
    if (loss.size() != 1) throw std::invalid_argument("grad_check: forward must return a scalar");
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (auto& in : inputs) {
        if (!in.node) throw std::invalid_argument("grad_check: input without grad tracking");
        analytic.push_back(in.node->grad);
    }

    std::mt19937_64 rng(coord_seed);
    double max_rel = 0.0;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        Tensor<double>& in = inputs[t];
        std::vector<std::size_t> coords;
        if (max_coords == 0 || in.size() <= max_coords) {
            coords.resize(in.size());
            for (std::size_t i = 0; i < in.size(); ++i) coords[i] = i;
        } else {
            for (std::size_t i = 0; i < max_coords; ++i)
                coords.push_back(rng() % in.size());
        }
        for (std::size_t i : coords) {
            const double orig = (*in.data)[i];
            (*in.data)[i] = orig + eps;
            const double fp = forward(inputs).scalar();
            (*in.data)[i] = orig - eps;
            const double fm = forward(inputs).scalar();
            (*in.data)[i] = orig;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[t][i];
            if (!std::isfinite(numeric) || !std::isfinite(a))
                throw NumericError("grad_check: non-finite value at input " + std::to_string(t) +
                                   " coordinate " + std::to_string(i));
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), denom_floor});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace lanet
