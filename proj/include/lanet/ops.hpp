#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include "lanet/tensor.hpp"

namespace lanet {

/// Per-pixel integer class ids for a batch, row-major (n,h,w).
struct LabelMap {
    int n = 1, h = 1, w = 1;
    std::vector<int32_t> ids;

    LabelMap() = default;
    LabelMap(int n_, int h_, int w_) : n(n_), h(h_), w(w_), ids(static_cast<std::size_t>(n_) * h_ * w_, 0) {}

    std::size_t size() const { return static_cast<std::size_t>(n) * h * w; }
    int32_t& at(int in, int iy, int ix) { return ids[(static_cast<std::size_t>(in) * h + iy) * w + ix]; }
    int32_t at(int in, int iy, int ix) const { return ids[(static_cast<std::size_t>(in) * h + iy) * w + ix]; }
};

namespace detail {

template <class T>
std::shared_ptr<Node<T>> attach_node(Tensor<T>& out,
                                     std::vector<std::shared_ptr<Node<T>>> parents) {
    bool tracked = false;
    for (auto& p : parents) tracked = tracked || (p != nullptr);
    if (!tracked) return nullptr;
    out.node = std::make_shared<Node<T>>();
    out.node->parents = std::move(parents);
    out.node->grad.assign(out.size(), T(0));
    return out.node;
}

}  // namespace detail

/// 2-D cross-correlation. weight is (out_c, in_c, kh, kw) packed into Shape
/// {n=out_c, c=in_c, h=kh, w=kw}; bias, if present, has out_c elements.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight,
                 const std::optional<Tensor<T>>& bias, int stride, int pad) {
    const int in_c = weight.shape.c, out_c = weight.shape.n;
    const int kh = weight.shape.h, kw = weight.shape.w;
    if (x.shape.c != in_c)
        throw std::invalid_argument("conv2d: input channels " + x.shape.str() +
                                    " do not match weight " + weight.shape.str());
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be positive");
    if (pad < 0) throw std::invalid_argument("conv2d: pad must be non-negative");
    if (bias && static_cast<int>(bias->size()) != out_c)
        throw std::invalid_argument("conv2d: bias size " + std::to_string(bias->size()) +
                                    " does not match out channels " + std::to_string(out_c));
    const int oh = (x.shape.h + 2 * pad - kh) / stride + 1;
    const int ow = (x.shape.w + 2 * pad - kw) / stride + 1;
    if (x.shape.h + 2 * pad - kh < 0 || x.shape.w + 2 * pad - kw < 0 || oh < 1 || ow < 1)
        throw std::invalid_argument("conv2d: zero-sized output for input " + x.shape.str() +
                                    " kernel " + weight.shape.str());

    Tensor<T> y(Shape{x.shape.n, out_c, oh, ow});
    const T* xd = x.data->data();
    const T* wd = weight.data->data();
    T* yd = y.data->data();
    const int ih = x.shape.h, iw = x.shape.w;

    for (int in = 0; in < x.shape.n; ++in) {
        for (int oc = 0; oc < out_c; ++oc) {
            T* yp = yd + ((static_cast<std::size_t>(in) * out_c + oc) * oh) * ow;
            const T b = bias ? (*bias->data)[oc] : T(0);
            std::fill(yp, yp + static_cast<std::size_t>(oh) * ow, b);
            for (int ic = 0; ic < in_c; ++ic) {
                const T* xp = xd + ((static_cast<std::size_t>(in) * in_c + ic) * ih) * iw;
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        const T wv = wd[((static_cast<std::size_t>(oc) * in_c + ic) * kh + ky) * kw + kx];
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= ih) continue;
                            const T* xrow = xp + static_cast<std::size_t>(iy) * iw;
                            T* yrow = yp + static_cast<std::size_t>(oy) * ow;
                            for (int ox = 0; ox < ow; ++ox) {
                                const int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= iw) continue;
                                yrow[ox] += wv * xrow[ix];
                            }
                        }
                    }
                }
            }
        }
    }

    std::vector<std::shared_ptr<Node<T>>> parents{x.node, weight.node,
                                                  bias ? bias->node : nullptr};
    if (auto out_node = detail::attach_node(y, parents)) {
        auto xn = x.node;
        auto wn = weight.node;
        auto bn = bias ? bias->node : nullptr;
        auto xdata = x.data;
        auto wdata = weight.data;
        Shape xs = x.shape, ws = weight.shape, ys = y.shape;
        Node<T>* self = out_node.get();
        out_node->backprop = [=]() {
            const T* gy = self->grad.data();
            const T* xd2 = xdata->data();
            const T* wd2 = wdata->data();
            const int ih2 = xs.h, iw2 = xs.w, oh2 = ys.h, ow2 = ys.w;
            for (int in = 0; in < xs.n; ++in) {
                for (int oc = 0; oc < ws.n; ++oc) {
                    const T* gp = gy + ((static_cast<std::size_t>(in) * ws.n + oc) * oh2) * ow2;
                    if (bn) {
                        T acc = 0;
                        for (std::size_t i = 0; i < static_cast<std::size_t>(oh2) * ow2; ++i)
                            acc += gp[i];
                        bn->grad[oc] += acc;
                    }
                    for (int ic = 0; ic < ws.c; ++ic) {
                        const T* xp = xd2 + ((static_cast<std::size_t>(in) * ws.c + ic) * ih2) * iw2;
                        T* gxp = xn ? xn->grad.data() +
                                          ((static_cast<std::size_t>(in) * ws.c + ic) * ih2) * iw2
                                    : nullptr;
                        for (int ky = 0; ky < ws.h; ++ky) {
                            for (int kx = 0; kx < ws.w; ++kx) {
                                const std::size_t widx =
                                    ((static_cast<std::size_t>(oc) * ws.c + ic) * ws.h + ky) * ws.w + kx;
                                const T wv = wd2[widx];
                                T wg = 0;
                                for (int oy = 0; oy < oh2; ++oy) {
                                    const int iy = oy * stride - pad + ky;
                                    if (iy < 0 || iy >= ih2) continue;
                                    const T* xrow = xp + static_cast<std::size_t>(iy) * iw2;
                                    const T* grow = gp + static_cast<std::size_t>(oy) * ow2;
                                    T* gxrow = gxp ? gxp + static_cast<std::size_t>(iy) * iw2 : nullptr;
                                    for (int ox = 0; ox < ow2; ++ox) {
                                        const int ix = ox * stride - pad + kx;
                                        if (ix < 0 || ix >= iw2) continue;
                                        wg += grow[ox] * xrow[ix];
                                        if (gxrow) gxrow[ix] += grow[ox] * wv;
                                    }
                                }
                                if (wn) wn->grad[widx] += wg;
                            }
                        }
                    }
                }
            }
        };
    }
    return y;
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, int stride, int pad) {
    return conv2d(x, weight, std::optional<Tensor<T>>{}, stride, pad);
}

/// Non-overlapping average pooling; stride equals the window.
template <class T>
Tensor<T> avg_pool2d(const Tensor<T>& x, int win_h, int win_w) {
    if (win_h < 1 || win_w < 1) throw std::invalid_argument("avg_pool2d: window must be positive");
    if (x.shape.h % win_h != 0 || x.shape.w % win_w != 0)
        throw std::invalid_argument("avg_pool2d: input " + x.shape.str() +
                                    " not divisible by window (" + std::to_string(win_h) + "," +
                                    std::to_string(win_w) + ")");
    const int oh = x.shape.h / win_h, ow = x.shape.w / win_w;
    Tensor<T> y(Shape{x.shape.n, x.shape.c, oh, ow});
    // Wider accumulator: window sums of equal values stay exact, which makes
    // the pool/upsample round trip the bitwise identity.
    using Acc = std::conditional_t<std::is_same_v<T, float>, double, long double>;
    const Acc count = Acc(win_h) * Acc(win_w);
    const int planes = x.shape.n * x.shape.c;
    for (int p = 0; p < planes; ++p) {
        const T* xp = x.data->data() + static_cast<std::size_t>(p) * x.shape.h * x.shape.w;
        T* yp = y.data->data() + static_cast<std::size_t>(p) * oh * ow;
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                Acc acc = 0;
                for (int ky = 0; ky < win_h; ++ky) {
                    const T* row = xp + static_cast<std::size_t>(oy * win_h + ky) * x.shape.w + ox * win_w;
                    for (int kx = 0; kx < win_w; ++kx) acc += row[kx];
                }
                yp[static_cast<std::size_t>(oy) * ow + ox] = static_cast<T>(acc / count);
            }
    }
    if (auto out_node = detail::attach_node(y, {x.node})) {
        auto xn = x.node;
        Shape xs = x.shape;
        Node<T>* self = out_node.get();
        out_node->backprop = [=]() {
            const T* gy = self->grad.data();
            const int oh2 = xs.h / win_h, ow2 = xs.w / win_w;
            const T inv2 = T(1) / (T(win_h) * T(win_w));
            for (int p = 0; p < xs.n * xs.c; ++p) {
                T* gx = xn->grad.data() + static_cast<std::size_t>(p) * xs.h * xs.w;
                const T* gp = gy + static_cast<std::size_t>(p) * oh2 * ow2;
                for (int oy = 0; oy < oh2; ++oy)
                    for (int ox = 0; ox < ow2; ++ox) {
                        const T g = gp[static_cast<std::size_t>(oy) * ow2 + ox] * inv2;
                        for (int ky = 0; ky < win_h; ++ky) {
                            T* row = gx + static_cast<std::size_t>(oy * win_h + ky) * xs.w + ox * win_w;
                            for (int kx = 0; kx < win_w; ++kx) row[kx] += g;
                        }
                    }
            }
        };
    }
    return y;
}

/// Nearest-neighbor upsampling: each pixel becomes a factor_h x factor_w block.
template <class T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int factor_h, int factor_w) {
    if (factor_h < 1 || factor_w < 1)
        throw std::invalid_argument("upsample_nearest: factors must be >= 1");
    const int oh = x.shape.h * factor_h, ow = x.shape.w * factor_w;
    Tensor<T> y(Shape{x.shape.n, x.shape.c, oh, ow});
    const int planes = x.shape.n * x.shape.c;
    for (int p = 0; p < planes; ++p) {
        const T* xp = x.data->data() + static_cast<std::size_t>(p) * x.shape.h * x.shape.w;
        T* yp = y.data->data() + static_cast<std::size_t>(p) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            const T* xrow = xp + static_cast<std::size_t>(oy / factor_h) * x.shape.w;
            T* yrow = yp + static_cast<std::size_t>(oy) * ow;
            for (int ox = 0; ox < ow; ++ox) yrow[ox] = xrow[ox / factor_w];
        }
    }
    if (auto out_node = detail::attach_node(y, {x.node})) {
        auto xn = x.node;
        Shape xs = x.shape;
        Node<T>* self = out_node.get();
        out_node->backprop = [=]() {
            const T* gy = self->grad.data();
            const int oh2 = xs.h * factor_h, ow2 = xs.w * factor_w;
            for (int p = 0; p < xs.n * xs.c; ++p) {
                T* gx = xn->grad.data() + static_cast<std::size_t>(p) * xs.h * xs.w;
                const T* gp = gy + static_cast<std::size_t>(p) * oh2 * ow2;
                for (int oy = 0; oy < oh2; ++oy) {
                    T* gxrow = gx + static_cast<std::size_t>(oy / factor_h) * xs.w;
                    const T* grow = gp + static_cast<std::size_t>(oy) * ow2;
                    for (int ox = 0; ox < ow2; ++ox) gxrow[ox / factor_w] += grow[ox];
                }
            }
        };
    }
    return y;
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) (*y.data)[i] = std::max(T(0), (*x.data)[i]);
    if (auto out_node = detail::attach_node(y, {x.node})) {
        auto xn = x.node;
        auto xdata = x.data;
        Node<T>* self = out_node.get();
        out_node->backprop = [=]() {
            for (std::size_t i = 0; i < self->grad.size(); ++i)
                if ((*xdata)[i] > T(0)) xn->grad[i] += self->grad[i];
        };
    }
    return y;
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i)
        (*y.data)[i] = T(1) / (T(1) + std::exp(-(*x.data)[i]));
    if (auto out_node = detail::attach_node(y, {x.node})) {
        auto xn = x.node;
        auto ydata = y.data;
        Node<T>* self = out_node.get();
        out_node->backprop = [=]() {
            for (std::size_t i = 0; i < self->grad.size(); ++i) {
                const T s = (*ydata)[i];
                xn->grad[i] += self->grad[i] * s * (T(1) - s);
            }
        };
    }
    return y;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape)
        throw std::invalid_argument("add: shape mismatch " + a.shape.str() + " vs " + b.shape.str());
    Tensor<T> y(a.shape);
    for (std::size_t i = 0; i < a.size(); ++i) (*y.data)[i] = (*a.data)[i] + (*b.data)[i];
    if (auto out_node = detail::attach_node(y, {a.node, b.node})) {
        auto an = a.node;
        auto bn = b.node;
        Node<T>* self = out_node.get();
        out_node->backprop = [=]() {
            for (std::size_t i = 0; i < self->grad.size(); ++i) {
                if (an) an->grad[i] += self->grad[i];
                if (bn) bn->grad[i] += self->grad[i];
            }
        };
    }
    return y;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape)
        throw std::invalid_argument("mul: shape mismatch " + a.shape.str() + " vs " + b.shape.str());
    Tensor<T> y(a.shape);
    for (std::size_t i = 0; i < a.size(); ++i) (*y.data)[i] = (*a.data)[i] * (*b.data)[i];
    if (auto out_node = detail::attach_node(y, {a.node, b.node})) {
        auto an = a.node;
        auto bn = b.node;
        auto ad = a.data;
        auto bd = b.data;
        Node<T>* self = out_node.get();
        out_node->backprop = [=]() {
            for (std::size_t i = 0; i < self->grad.size(); ++i) {
                if (an) an->grad[i] += self->grad[i] * (*bd)[i];
                if (bn) bn->grad[i] += self->grad[i] * (*ad)[i];
            }
        };
    }
    return y;
}

/// Sum of all elements, as a scalar tensor.
template <class T>
Tensor<T> sum(const Tensor<T>& x) {
    Tensor<T> y(Shape{1, 1, 1, 1});
    T acc = 0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += (*x.data)[i];
    (*y.data)[0] = acc;
    if (auto out_node = detail::attach_node(y, {x.node})) {
        auto xn = x.node;
        Node<T>* self = out_node.get();
        out_node->backprop = [=]() {
            for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += self->grad[0];
        };
    }
    return y;
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T k) {
    Tensor<T> y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) (*y.data)[i] = (*x.data)[i] * k;
    if (auto out_node = detail::attach_node(y, {x.node})) {
        auto xn = x.node;
        Node<T>* self = out_node.get();
        out_node->backprop = [=]() {
            for (std::size_t i = 0; i < self->grad.size(); ++i) xn->grad[i] += self->grad[i] * k;
        };
    }
    return y;
}

/// Mean over non-ignored pixels of -log softmax(logits)[label], stabilized
/// by max-subtraction. Labels index (n,h,w); ignore_label < 0 disables ignoring.
template <class T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const LabelMap& labels,
                                int ignore_label = -1) {
    if (logits.shape.n != labels.n || logits.shape.h != labels.h || logits.shape.w != labels.w)
        throw std::invalid_argument("softmax_cross_entropy: logits " + logits.shape.str() +
                                    " vs labels (" + std::to_string(labels.n) + "," +
                                    std::to_string(labels.h) + "," + std::to_string(labels.w) + ")");
    const int K = logits.shape.c;
    const int H = labels.h, W = labels.w;
    const std::size_t plane = static_cast<std::size_t>(H) * W;

    // softmax probabilities are kept for the backward pass
    auto probs = std::make_shared<std::vector<T>>(logits.size());
    std::size_t count = 0;
    // wide accumulator: summing ~1e4 per-pixel terms in T would visibly bias
    // the mean (a zero-logit model must log ln K to tight tolerance)
    using Acc = std::conditional_t<std::is_same_v<T, float>, double, long double>;
    Acc loss_acc = 0;
    for (int in = 0; in < labels.n; ++in) {
        const T* base = logits.data->data() + static_cast<std::size_t>(in) * K * plane;
        T* pbase = probs->data() + static_cast<std::size_t>(in) * K * plane;
        for (int iy = 0; iy < H; ++iy) {
            for (int ix = 0; ix < W; ++ix) {
                const std::size_t off = static_cast<std::size_t>(iy) * W + ix;
                const int32_t lbl = labels.at(in, iy, ix);
                if (lbl == ignore_label) {
                    for (int k = 0; k < K; ++k) pbase[k * plane + off] = T(0);
                    continue;
                }
                if (lbl < 0 || lbl >= K)
                    throw std::invalid_argument(
                        "softmax_cross_entropy: label " + std::to_string(lbl) +
                        " out of range [0," + std::to_string(K) + ") at pixel (" +
                        std::to_string(in) + "," + std::to_string(iy) + "," + std::to_string(ix) + ")");
                T mx = base[off];
                for (int k = 1; k < K; ++k) mx = std::max(mx, base[k * plane + off]);
                T denom = 0;
                for (int k = 0; k < K; ++k) denom += std::exp(base[k * plane + off] - mx);
                const T log_denom = std::log(denom);
                for (int k = 0; k < K; ++k)
                    pbase[k * plane + off] = std::exp(base[k * plane + off] - mx) / denom;
                loss_acc += -(base[static_cast<std::size_t>(lbl) * plane + off] - mx - log_denom);
                ++count;
            }
        }
    }
    if (count == 0)
        throw std::invalid_argument("softmax_cross_entropy: all pixels ignored");

    Tensor<T> y(Shape{1, 1, 1, 1});
    (*y.data)[0] = static_cast<T>(loss_acc / static_cast<Acc>(count));

    if (auto out_node = detail::attach_node(y, {logits.node})) {
        auto ln = logits.node;
        Shape ls = logits.shape;
        LabelMap lbls = labels;
        Node<T>* self = out_node.get();
        out_node->backprop = [=]() {
            const T g = self->grad[0] / T(count);
            const std::size_t plane2 = static_cast<std::size_t>(ls.h) * ls.w;
            for (int in = 0; in < ls.n; ++in) {
                T* gbase = ln->grad.data() + static_cast<std::size_t>(in) * ls.c * plane2;
                const T* pbase = probs->data() + static_cast<std::size_t>(in) * ls.c * plane2;
                for (int iy = 0; iy < ls.h; ++iy)
                    for (int ix = 0; ix < ls.w; ++ix) {
                        const std::size_t off = static_cast<std::size_t>(iy) * ls.w + ix;
                        const int32_t lbl = lbls.at(in, iy, ix);
                        if (lbl == ignore_label) continue;
                        for (int k = 0; k < ls.c; ++k) {
                            T d = pbase[k * plane2 + off];
                            if (k == lbl) d -= T(1);
                            gbase[k * plane2 + off] += g * d;
                        }
                    }
            }
        };
    }
    return y;
}

}  // namespace lanet
