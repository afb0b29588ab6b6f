#pragma once

#include <map>
#include <string>

#include "lanet/tensor.hpp"

namespace lanet {

/// Named leaf tensors. std::map keeps iteration order deterministic.
template <class T>
using ParamStore = std::map<std::string, Tensor<T>>;

template <class T>
using GradMap = std::map<std::string, Tensor<T>>;

/// Collect gradients accumulated on the parameters by the last backward pass.
template <class T>
GradMap<T> collect_grads(const ParamStore<T>& params) {
    GradMap<T> grads;
    for (const auto& [name, p] : params) grads.emplace(name, p.grad());
    return grads;
}

/// SGD with classical momentum and L2 weight decay:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
template <class T>
struct SgdState {
    std::map<std::string, std::vector<T>> velocity;
};

template <class T>
void sgd_step(ParamStore<T>& params, const GradMap<T>& grads, SgdState<T>& state,
              T lr, T momentum, T weight_decay) {
    if (lr < T(0)) throw std::invalid_argument("sgd_step: lr must be non-negative");
    if (momentum < T(0) || momentum >= T(1))
        throw std::invalid_argument("sgd_step: momentum must be in [0,1)");
    for (auto& [name, p] : params) {
        auto it = grads.find(name);
        if (it == grads.end())
            throw std::invalid_argument("sgd_step: missing gradient for parameter '" + name + "'");
        const Tensor<T>& g = it->second;
        if (g.shape != p.shape)
            throw std::invalid_argument("sgd_step: gradient shape " + g.shape.str() +
                                        " does not match parameter '" + name + "' " + p.shape.str());
        auto& v = state.velocity[name];
        if (v.size() != p.size()) v.assign(p.size(), T(0));
        for (std::size_t i = 0; i < p.size(); ++i) {
            v[i] = momentum * v[i] + (*g.data)[i] + weight_decay * (*p.data)[i];
            (*p.data)[i] -= lr * v[i];
        }
    }
}

}  // namespace lanet
