#pragma once

#include "lanet/ops.hpp"

namespace lanet {

inline int reduced_channels(int channels, int reduction) {
    if (reduction < 1) throw std::invalid_argument("reduction ratio must be positive");
    return std::max(channels / reduction, 4);
}

/// Patch attention: descriptor window and bottleneck reduction ratio.
struct PamConfig {
    int patch_h = 4;
    int patch_w = 4;
    int reduction = 16;
    int channels = 0;

    int reduced() const { return reduced_channels(channels, reduction); }
};

template <class T>
struct PamParams {
    Tensor<T> w_reduce;   // (c_red, c, 1, 1)
    Tensor<T> b_reduce;   // (1, c_red, 1, 1)
    Tensor<T> w_increase; // (c, c_red, 1, 1)
    Tensor<T> b_increase; // (1, c, 1, 1)
};

/// Cross-level attention: descriptors pooled on the high-level map, gated and
/// projected to the low-level channel count, then upsampled onto the
/// low-level grid.
struct AemConfig {
    int high_patch_h = 2;
    int high_patch_w = 2;
    int reduction = 16;
    int c_high = 0;
    int c_low = 0;
    int upsample_h = 0;  // descriptor grid -> low-level map
    int upsample_w = 0;

    int reduced() const { return reduced_channels(c_high, reduction); }
};

template <class T>
struct AemParams {
    Tensor<T> w_reduce;   // (c_high_red, c_high, 1, 1)
    Tensor<T> b_reduce;   // (1, c_high_red, 1, 1)
    Tensor<T> w_project;  // (c_low, c_high_red, 1, 1)
    Tensor<T> b_project;  // (1, c_low, 1, 1)
};

namespace detail {

template <class T>
Tensor<T> bottleneck_gate(const Tensor<T>& z, const Tensor<T>& w1, const Tensor<T>& b1,
                          const Tensor<T>& w2, const Tensor<T>& b2) {
    auto r = relu(conv2d(z, w1, std::optional<Tensor<T>>(b1), 1, 0));
    return sigmoid(conv2d(r, w2, std::optional<Tensor<T>>(b2), 1, 0));
}

}  // namespace detail

/// Patch attention with residual: pools per-patch channel descriptors, runs
/// the bottleneck gate as 1x1 convolutions over the descriptor grid (the same
/// weights serve every patch), upsamples the attention back to the input
/// resolution and returns x + x*A.
template <class T>
Tensor<T> pam_forward(const Tensor<T>& x, const PamParams<T>& params, const PamConfig& cfg) {
    if (x.shape.c != cfg.channels)
        throw std::invalid_argument("pam_forward: input channels " + x.shape.str() +
                                    " do not match config channels " + std::to_string(cfg.channels));
    if (x.shape.h % cfg.patch_h != 0 || x.shape.w % cfg.patch_w != 0)
        throw std::invalid_argument("pam_forward: input " + x.shape.str() +
                                    " not divisible by patch (" + std::to_string(cfg.patch_h) +
                                    "," + std::to_string(cfg.patch_w) + ")");
    auto z = avg_pool2d(x, cfg.patch_h, cfg.patch_w);
    auto a = detail::bottleneck_gate(z, params.w_reduce, params.b_reduce,
                                     params.w_increase, params.b_increase);
    auto attention = upsample_nearest(a, cfg.patch_h, cfg.patch_w);
    return add(x, mul(x, attention));
}

/// Attention embedding: descriptors from the high-level map gate the
/// low-level features residually, x_low + x_low*A_l.
template <class T>
Tensor<T> aem_forward(const Tensor<T>& x_low, const Tensor<T>& x_high,
                      const AemParams<T>& params, const AemConfig& cfg) {
    if (x_high.shape.c != cfg.c_high || x_low.shape.c != cfg.c_low)
        throw std::invalid_argument("aem_forward: channel mismatch, low " + x_low.shape.str() +
                                    " high " + x_high.shape.str());
    if (x_high.shape.h % cfg.high_patch_h != 0 || x_high.shape.w % cfg.high_patch_w != 0)
        throw std::invalid_argument("aem_forward: high-level map " + x_high.shape.str() +
                                    " not divisible by patch (" + std::to_string(cfg.high_patch_h) +
                                    "," + std::to_string(cfg.high_patch_w) + ")");
    const int grid_h = x_high.shape.h / cfg.high_patch_h;
    const int grid_w = x_high.shape.w / cfg.high_patch_w;
    if (grid_h * cfg.upsample_h != x_low.shape.h || grid_w * cfg.upsample_w != x_low.shape.w)
        throw std::invalid_argument(
            "aem_forward: descriptor grid (" + std::to_string(grid_h) + "," +
            std::to_string(grid_w) + ") x upsample (" + std::to_string(cfg.upsample_h) + "," +
            std::to_string(cfg.upsample_w) + ") gives (" +
            std::to_string(grid_h * cfg.upsample_h) + "," + std::to_string(grid_w * cfg.upsample_w) +
            "), required low-level dims (" + std::to_string(x_low.shape.h) + "," +
            std::to_string(x_low.shape.w) + ")");
    auto z = avg_pool2d(x_high, cfg.high_patch_h, cfg.high_patch_w);
    auto a = detail::bottleneck_gate(z, params.w_reduce, params.b_reduce,
                                     params.w_project, params.b_project);
    auto attention = upsample_nearest(a, cfg.upsample_h, cfg.upsample_w);
    return add(x_low, mul(x_low, attention));
}

/// Squeeze-and-excitation baseline: one global descriptor per channel, gated
/// and broadcast back over the map. No residual.
template <class T>
Tensor<T> se_forward(const Tensor<T>& x, const PamParams<T>& params) {
    if (x.shape.c != params.w_reduce.shape.c)
        throw std::invalid_argument("se_forward: input channels " + x.shape.str() +
                                    " do not match weights " + params.w_reduce.shape.str());
    auto z = avg_pool2d(x, x.shape.h, x.shape.w);
    auto a = detail::bottleneck_gate(z, params.w_reduce, params.b_reduce,
                                     params.w_increase, params.b_increase);
    auto attention = upsample_nearest(a, x.shape.h, x.shape.w);
    return mul(x, attention);
}

}  // namespace lanet
