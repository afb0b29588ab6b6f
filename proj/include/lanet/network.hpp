#pragma once

#include <array>
#include <iostream>
#include <optional>

#include "lanet/attention.hpp"
#include "lanet/dataset.hpp"
#include "lanet/optim.hpp"

namespace lanet {

enum class Variant { Fcn, FcnPam, FcnAem, Lanet };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Fcn: return "fcn";
        case Variant::FcnPam: return "fcn-pam";
        case Variant::FcnAem: return "fcn-aem";
        case Variant::Lanet: return "lanet";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s) {
    if (s == "fcn") return Variant::Fcn;
    if (s == "fcn-pam") return Variant::FcnPam;
    if (s == "fcn-aem") return Variant::FcnAem;
    if (s == "lanet") return Variant::Lanet;
    throw std::invalid_argument("unknown variant '" + s +
                                "' (valid: fcn, fcn-pam, fcn-aem, lanet)");
}

inline bool has_low_branch(Variant v) { return v != Variant::Fcn; }
inline bool has_pam(Variant v) { return v == Variant::FcnPam || v == Variant::Lanet; }
inline bool has_aem(Variant v) { return v == Variant::FcnAem || v == Variant::Lanet; }

/// Encoder and head layout. The encoder is a four-stage stride-16 plain CNN;
/// each stage halves the resolution with a 2x2 average pool before its two
/// 3x3 convolutions (pooled downsampling keeps the whole network
/// flip-equivariant, which strided convolution on even-sized maps cannot be).
struct ArchConfig {
    int in_channels = 4;
    int num_classes = 6;
    std::array<int, 4> widths{32, 64, 96, 128};
    int head_width = 64;
    int pam_high_patch = 4;  // on the stride-16 map
    int pam_low_patch = 8;   // on the stride-4 map
    int aem_patch = 2;       // descriptor window on the stride-16 map
    int reduction = 16;
    double aux_loss_weight = 0.4;

    static constexpr int high_stride = 16;
    static constexpr int low_stride = 4;

    int c_low() const { return widths[1]; }
    int c_high() const { return widths[3]; }

    /// Input dims must be divisible by this for a direct forward pass.
    int alignment() const {
        int a = high_stride;
        a = std::max(a, high_stride * pam_high_patch);
        a = std::max(a, high_stride * aem_patch);
        a = std::max(a, low_stride * pam_low_patch);
        return a;
    }
};

namespace detail {

template <class T>
Tensor<T> kaiming_leaf(Shape s, Rng& rng) {
    auto t = Tensor<T>::leaf(s, true);
    const int fan_in = s.c * s.h * s.w;
    const double bound = std::sqrt(6.0 / fan_in);
    for (std::size_t i = 0; i < t.size(); ++i)
        (*t.data)[i] = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

template <class T>
void add_conv(ParamStore<T>& params, Rng& rng, const std::string& name, int out_c, int in_c,
              int k, bool zero_init = false) {
    auto w = zero_init ? Tensor<T>::leaf(Shape{out_c, in_c, k, k}, true)
                       : kaiming_leaf<T>(Shape{out_c, in_c, k, k}, rng);
    params.emplace(name + ".w", w);
    params.emplace(name + ".b", Tensor<T>::leaf(Shape{1, out_c, 1, 1}, true));
}

}  // namespace detail

/// Parameter set for (arch, variant); every tensor is a tracked leaf.
/// Weight init: Kaiming-uniform fan-in, zero biases, zero final classifiers.
template <class T>
ParamStore<T> build_variant(Variant variant, const ArchConfig& arch, std::uint64_t seed) {
    Rng rng(seed);
    ParamStore<T> params;
    detail::add_conv(params, rng, "stem", arch.widths[0], arch.in_channels, 3);
    int prev = arch.widths[0];
    for (int s = 0; s < 4; ++s) {
        const std::string base = "stage" + std::to_string(s + 1);
        detail::add_conv(params, rng, base + ".conv1", arch.widths[s], prev, 3);
        detail::add_conv(params, rng, base + ".conv2", arch.widths[s], arch.widths[s], 3);
        prev = arch.widths[s];
    }
    if (has_pam(variant)) {
        const int ch = arch.c_high(), cl = arch.c_low();
        detail::add_conv(params, rng, "pam_high.reduce", reduced_channels(ch, arch.reduction), ch, 1);
        detail::add_conv(params, rng, "pam_high.expand", ch, reduced_channels(ch, arch.reduction), 1);
        detail::add_conv(params, rng, "pam_low.reduce", reduced_channels(cl, arch.reduction), cl, 1);
        detail::add_conv(params, rng, "pam_low.expand", cl, reduced_channels(cl, arch.reduction), 1);
    }
    if (has_aem(variant)) {
        const int ch = arch.c_high();
        detail::add_conv(params, rng, "aem.reduce", reduced_channels(ch, arch.reduction), ch, 1);
        detail::add_conv(params, rng, "aem.project", arch.c_low(),
                         reduced_channels(ch, arch.reduction), 1);
    }
    detail::add_conv(params, rng, "cls_high.conv1", arch.head_width, arch.c_high(), 3);
    detail::add_conv(params, rng, "cls_high.conv2", arch.num_classes, arch.head_width, 1, true);
    if (has_low_branch(variant)) {
        detail::add_conv(params, rng, "cls_low.conv1", arch.head_width, arch.c_low(), 3);
        detail::add_conv(params, rng, "cls_low.conv2", arch.num_classes, arch.head_width, 1, true);
    }
    return params;
}

/// Copies of the parameter tensors sharing storage but detached from the
/// graph; forward passes through them record nothing.
template <class T>
ParamStore<T> detach_params(const ParamStore<T>& params) {
    ParamStore<T> out;
    for (const auto& [name, p] : params) {
        Tensor<T> t;
        t.shape = p.shape;
        t.data = p.data;
        out.emplace(name, t);
    }
    return out;
}

template <class T>
struct BackboneFeatures {
    Tensor<T> low;   // stride 4
    Tensor<T> high;  // stride 16
};

template <class T>
BackboneFeatures<T> backbone_forward(const Tensor<T>& image, const ParamStore<T>& params) {
    if (image.shape.h % ArchConfig::high_stride != 0 || image.shape.w % ArchConfig::high_stride != 0)
        throw std::invalid_argument("backbone_forward: input " + image.shape.str() +
                                    " not divisible by stride 16");
    auto conv = [&params](const Tensor<T>& x, const std::string& name) {
        return conv2d(x, params.at(name + ".w"),
                      std::optional<Tensor<T>>(params.at(name + ".b")), 1, 1);
    };
    Tensor<T> x = conv(image, "stem");
    BackboneFeatures<T> feats;
    for (int s = 0; s < 4; ++s) {
        const std::string base = "stage" + std::to_string(s + 1);
        x = avg_pool2d(x, 2, 2);
        x = relu(conv(x, base + ".conv1"));
        x = relu(conv(x, base + ".conv2"));
        if (s == 1) feats.low = x;
    }
    feats.high = x;
    return feats;
}

template <class T>
struct ModelOutput {
    Tensor<T> fused;
    Tensor<T> high;
    std::optional<Tensor<T>> low;
};

template <class T>
ModelOutput<T> model_forward(const Tensor<T>& image, const ParamStore<T>& params,
                             const ArchConfig& arch, Variant variant) {
    auto feats = backbone_forward(image, params);

    auto pam_params = [&params](const std::string& base) {
        return PamParams<T>{params.at(base + ".reduce.w"), params.at(base + ".reduce.b"),
                            params.at(base + ".expand.w"), params.at(base + ".expand.b")};
    };
    Tensor<T> high = feats.high;
    if (has_pam(variant)) {
        PamConfig cfg{.patch_h = arch.pam_high_patch, .patch_w = arch.pam_high_patch,
                      .reduction = arch.reduction, .channels = arch.c_high()};
        high = pam_forward(high, pam_params("pam_high"), cfg);
    }

    auto head = [&](const Tensor<T>& f, const std::string& base, int up) {
        auto h = relu(conv2d(f, params.at(base + ".conv1.w"),
                             std::optional<Tensor<T>>(params.at(base + ".conv1.b")), 1, 1));
        auto logits = conv2d(h, params.at(base + ".conv2.w"),
                             std::optional<Tensor<T>>(params.at(base + ".conv2.b")), 1, 0);
        return upsample_nearest(logits, up, up);
    };

    ModelOutput<T> out;
    out.high = head(high, "cls_high", ArchConfig::high_stride);
    if (!has_low_branch(variant)) {
        out.fused = out.high;
        return out;
    }

    Tensor<T> low = feats.low;
    if (has_pam(variant)) {
        PamConfig cfg{.patch_h = arch.pam_low_patch, .patch_w = arch.pam_low_patch,
                      .reduction = arch.reduction, .channels = arch.c_low()};
        low = pam_forward(low, pam_params("pam_low"), cfg);
    }
    if (has_aem(variant)) {
        const int grid_h = feats.high.shape.h / arch.aem_patch;
        const int grid_w = feats.high.shape.w / arch.aem_patch;
        AemConfig cfg{.high_patch_h = arch.aem_patch, .high_patch_w = arch.aem_patch,
                      .reduction = arch.reduction, .c_high = arch.c_high(),
                      .c_low = arch.c_low(), .upsample_h = low.shape.h / grid_h,
                      .upsample_w = low.shape.w / grid_w};
        AemParams<T> ap{params.at("aem.reduce.w"), params.at("aem.reduce.b"),
                        params.at("aem.project.w"), params.at("aem.project.b")};
        low = aem_forward(low, feats.high, ap, cfg);
    }
    out.low = head(low, "cls_low", ArchConfig::low_stride);
    out.fused = add(out.high, *out.low);
    return out;
}

/// Mirrors every conv kernel along its width axis. Under this parameter map
/// the whole model is exactly equivariant to horizontal input flips.
template <class T>
ParamStore<T> mirror_params_horizontal(const ParamStore<T>& params) {
    ParamStore<T> out;
    for (const auto& [name, p] : params) {
        Tensor<T> m(p.shape);
        for (int n = 0; n < p.shape.n; ++n)
            for (int c = 0; c < p.shape.c; ++c)
                for (int y = 0; y < p.shape.h; ++y)
                    for (int x = 0; x < p.shape.w; ++x)
                        m.at(n, c, y, x) = p.at(n, c, y, p.shape.w - 1 - x);
        out.emplace(name, m);
    }
    return out;
}

// --- training ----------------------------------------------------------------

struct TrainConfig {
    double lr = 0.02;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int steps = 500;
    int batch = 2;
    int crop = 64;
    std::uint64_t seed = 0;
    double lambda = 0.4;       // auxiliary per-branch supervision weight
    double lr_decay = 0.1;     // step decay applied once
    double decay_fraction = 0.75;
};

/// CE(fused) + lambda * (CE(high) + CE(low)). `logged` receives the fused CE,
/// the quantity reported in the training log.
template <class T>
Tensor<T> training_loss(const ModelOutput<T>& out, const LabelMap& labels, double lambda,
                        T* logged = nullptr) {
    auto fused_ce = softmax_cross_entropy(out.fused, labels);
    if (logged) *logged = fused_ce.scalar();
    if (!out.low || lambda == 0.0) return fused_ce;
    auto aux = add(softmax_cross_entropy(out.high, labels),
                   softmax_cross_entropy(*out.low, labels));
    return add(fused_ce, scale(aux, static_cast<T>(lambda)));
}

struct TrainResult {
    ParamStore<float> params;
    std::vector<std::string> log;
    float final_logged_loss = 0.0f;
};

inline TrainResult train(const std::vector<RasterSample>& train_set, const ArchConfig& arch,
                         Variant variant, const TrainConfig& cfg,
                         std::ostream* log_stream = nullptr) {
    if (train_set.empty()) throw std::invalid_argument("train: empty training set");
    if (cfg.crop % ArchConfig::high_stride != 0)
        throw std::invalid_argument("train: crop must be divisible by 16");

    TrainResult result;
    result.params = build_variant<float>(variant, arch, cfg.seed);
    SgdState<float> sgd_state;
    Rng rng = Rng::derive(cfg.seed, 0x747261696eULL);
    const int bands = train_set.front().image.shape.c;

    for (int step = 0; step < cfg.steps; ++step) {
        Tensor<float> batch(Shape{cfg.batch, bands, cfg.crop, cfg.crop});
        LabelMap labels(cfg.batch, cfg.crop, cfg.crop);
        for (int b = 0; b < cfg.batch; ++b) {
            const auto& sample = train_set[rng.below(train_set.size())];
            RasterSample aug = augment(sample, cfg.crop, rng);
            std::copy(aug.image.data->begin(), aug.image.data->end(),
                      batch.data->begin() + static_cast<std::size_t>(b) * bands * cfg.crop * cfg.crop);
            std::copy(aug.labels.ids.begin(), aug.labels.ids.end(),
                      labels.ids.begin() + static_cast<std::size_t>(b) * cfg.crop * cfg.crop);
        }

        const double lr = step >= static_cast<int>(cfg.decay_fraction * cfg.steps)
                              ? cfg.lr * cfg.lr_decay
                              : cfg.lr;
        auto out = model_forward(batch, result.params, arch, variant);
        float logged = 0.0f;
        auto loss = training_loss(out, labels, cfg.lambda, &logged);
        if (!std::isfinite(loss.scalar()))
            throw NumericError("train: non-finite loss at step " + std::to_string(step));
        backward(loss);
        auto grads = collect_grads(result.params);
        sgd_step(result.params, grads, sgd_state, static_cast<float>(lr),
                 static_cast<float>(cfg.momentum), static_cast<float>(cfg.weight_decay));

        std::ostringstream line;
        line << step << "\t" << std::setprecision(8) << logged << "\t" << lr;
        result.log.push_back(line.str());
        result.final_logged_loss = logged;
        if (log_stream) *log_stream << line.str() << "\n";
    }
    return result;
}

// --- inference ----------------------------------------------------------------

namespace detail {

inline int reflect_index(int i, int n) {
    // mirror without repeating the edge sample
    if (n == 1) return 0;
    const int period = 2 * n - 2;
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
}

template <class T>
Tensor<T> reflect_pad_crop(const Tensor<T>& img, int y0, int x0, int out_h, int out_w) {
    Tensor<T> out(Shape{1, img.shape.c, out_h, out_w});
    for (int c = 0; c < img.shape.c; ++c)
        for (int y = 0; y < out_h; ++y) {
            const int sy = reflect_index(y0 + y, img.shape.h);
            for (int x = 0; x < out_w; ++x)
                out.at(0, c, y, x) = img.at(0, c, sy, reflect_index(x0 + x, img.shape.w));
        }
    return out;
}

template <class T>
LabelMap argmax_labels(const Tensor<T>& logits) {
    LabelMap out(logits.shape.n, logits.shape.h, logits.shape.w);
    const std::size_t plane = static_cast<std::size_t>(logits.shape.h) * logits.shape.w;
    for (int n = 0; n < logits.shape.n; ++n)
        for (int y = 0; y < logits.shape.h; ++y)
            for (int x = 0; x < logits.shape.w; ++x) {
                const std::size_t off = static_cast<std::size_t>(y) * logits.shape.w + x;
                const T* base = logits.data->data() + static_cast<std::size_t>(n) * logits.shape.c * plane;
                int best = 0;
                T best_v = base[off];
                for (int c = 1; c < logits.shape.c; ++c)
                    if (base[c * plane + off] > best_v) {
                        best_v = base[c * plane + off];
                        best = c;
                    }
                out.at(n, y, x) = best;
            }
    return out;
}

inline std::vector<int> tile_starts(int extent, int tile, int overlap) {
    std::vector<int> starts{0};
    const int step = tile - overlap;
    while (starts.back() + tile < extent) {
        const int next = std::min(starts.back() + step, extent - tile);
        starts.push_back(next);
    }
    return starts;
}

}  // namespace detail

/// Whole-image prediction; input is reflect-padded up to the architecture's
/// alignment and the result cropped back.
template <class T>
LabelMap predict_whole(const Tensor<T>& image, const ParamStore<T>& params, const ArchConfig& arch,
                       Variant variant) {
    const int a = arch.alignment();
    const int ph = (image.shape.h + a - 1) / a * a;
    const int pw = (image.shape.w + a - 1) / a * a;
    Tensor<T> padded = (ph == image.shape.h && pw == image.shape.w)
                           ? image
                           : detail::reflect_pad_crop(image, 0, 0, ph, pw);
    auto out = model_forward(padded, detach_params(params), arch, variant);
    LabelMap full = detail::argmax_labels(out.fused);
    if (ph == image.shape.h && pw == image.shape.w) return full;
    LabelMap cropped(1, image.shape.h, image.shape.w);
    for (int y = 0; y < image.shape.h; ++y)
        for (int x = 0; x < image.shape.w; ++x) cropped.at(0, y, x) = full.at(0, y, x);
    return cropped;
}

/// Overlap-tiled prediction. Adjacent tiles split their overlap at its
/// midpoint, so every output pixel is written exactly once; border tiles keep
/// their outer margins. tile = 0 selects whole-image prediction.
template <class T>
LabelMap predict_tiled(const Tensor<T>& image, const ParamStore<T>& params, const ArchConfig& arch,
                       Variant variant, int tile, int overlap) {
    if (tile == 0) return predict_whole(image, params, arch, variant);
    if (tile % arch.alignment() != 0)
        throw std::invalid_argument("predict_tiled: tile must be divisible by " +
                                    std::to_string(arch.alignment()));
    if (overlap < 2 * ArchConfig::high_stride || overlap >= tile)
        throw std::invalid_argument("predict_tiled: overlap must be in [32, tile)");

    const int H = image.shape.h, W = image.shape.w;
    auto params_d = detach_params(params);
    const auto ys = detail::tile_starts(H, tile, overlap);
    const auto xs = detail::tile_starts(W, tile, overlap);

    LabelMap out(1, H, W);
    for (std::size_t ti = 0; ti < ys.size(); ++ti) {
        // write rows [wy0, wy1): overlap midpoints, outer edges at the borders
        const int wy0 = ti == 0 ? 0 : (ys[ti] + ys[ti - 1] + tile + 1) / 2;
        const int wy1 = ti + 1 == ys.size() ? H : (ys[ti + 1] + ys[ti] + tile + 1) / 2;
        for (std::size_t tj = 0; tj < xs.size(); ++tj) {
            const int wx0 = tj == 0 ? 0 : (xs[tj] + xs[tj - 1] + tile + 1) / 2;
            const int wx1 = tj + 1 == xs.size() ? W : (xs[tj + 1] + xs[tj] + tile + 1) / 2;
            Tensor<T> patch = detail::reflect_pad_crop(image, ys[ti], xs[tj], tile, tile);
            auto logits = model_forward(patch, params_d, arch, variant).fused;
            LabelMap lbl = detail::argmax_labels(logits);
            for (int y = wy0; y < std::min(wy1, ys[ti] + tile); ++y)
                for (int x = wx0; x < std::min(wx1, xs[tj] + tile); ++x)
                    out.at(0, y, x) = lbl.at(0, y - ys[ti], x - xs[tj]);
        }
    }
    return out;
}

}  // namespace lanet
