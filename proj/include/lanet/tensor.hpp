#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace lanet {

/// Numeric breakdown (NaN/Inf in a loss, failed gradient check) as opposed
/// to bad input data; callers map the two to different exit codes.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dense 4-D shape, NCHW order.
struct Shape {
    int n = 1, c = 1, h = 1, w = 1;

    std::size_t size() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    bool operator==(const Shape& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        std::ostringstream os;
        os << "(" << n << "," << c << "," << h << "," << w << ")";
        return os.str();
    }
};

inline void check_shape_valid(const Shape& s) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1)
        throw std::invalid_argument("tensor shape has non-positive dim: " + s.str());
}

template <class T>
struct Node {
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void()> backprop;  // accumulates this->grad into parents
    std::vector<T> grad;
};

/// Dense 4-D tensor with shared storage. When `node` is set the tensor
/// participates in the recorded graph and receives gradients on backward().
template <class T>
struct Tensor {
    Shape shape;
    std::shared_ptr<std::vector<T>> data;
    std::shared_ptr<Node<T>> node;

    Tensor() : data(std::make_shared<std::vector<T>>(1, T(0))) {}

    explicit Tensor(Shape s, T fill = T(0)) : shape(s) {
        check_shape_valid(s);
        data = std::make_shared<std::vector<T>>(s.size(), fill);
    }

    Tensor(Shape s, std::vector<T> values) : shape(s) {
        check_shape_valid(s);
        if (values.size() != s.size())
            throw std::invalid_argument("data length " + std::to_string(values.size()) +
                                        " does not match shape " + s.str());
        data = std::make_shared<std::vector<T>>(std::move(values));
    }

    static Tensor leaf(Shape s, bool requires_grad) {
        Tensor t(s);
        if (requires_grad) {
            t.node = std::make_shared<Node<T>>();
            t.node->grad.assign(s.size(), T(0));
        }
        return t;
    }

    bool requires_grad() const { return node != nullptr; }

    void set_requires_grad() {
        if (!node) {
            node = std::make_shared<Node<T>>();
            node->grad.assign(shape.size(), T(0));
        }
    }

    std::size_t size() const { return shape.size(); }

    std::size_t index(int in, int ic, int iy, int ix) const {
        return ((static_cast<std::size_t>(in) * shape.c + ic) * shape.h + iy) * shape.w + ix;
    }
    T& at(int in, int ic, int iy, int ix) { return (*data)[index(in, ic, iy, ix)]; }
    T at(int in, int ic, int iy, int ix) const { return (*data)[index(in, ic, iy, ix)]; }

    T& operator[](std::size_t i) { return (*data)[i]; }
    T operator[](std::size_t i) const { return (*data)[i]; }

    T scalar() const {
        if (size() != 1)
            throw std::invalid_argument("scalar() on non-scalar tensor " + shape.str());
        return (*data)[0];
    }

    /// Deep copy of the values; the copy is detached from the graph.
    Tensor detached_copy() const {
        Tensor t(shape);
        *t.data = *data;
        return t;
    }

    /// Gradient accumulated by the last backward() pass.
    Tensor grad() const {
        if (!node) throw std::runtime_error("grad() on tensor without grad tracking");
        Tensor g(shape);
        *g.data = node->grad;
        return g;
    }
};

namespace detail {

template <class T>
void topo_order(const std::shared_ptr<Node<T>>& root, std::vector<Node<T>*>& order) {
    // Iterative post-order DFS; order ends with root.
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

}  // namespace detail

/// Reverse-mode sweep from a recorded scalar loss. Gradients of all tracked
/// tensors reachable from `loss` are overwritten (zeroed, then accumulated).
template <class T>
void backward(const Tensor<T>& loss) {
    if (loss.size() != 1)
        throw std::invalid_argument("backward() requires a scalar loss, got " + loss.shape.str());
    if (!loss.node)
        throw std::invalid_argument("backward() on a tensor with no recorded graph");

    std::vector<Node<T>*> order;
    detail::topo_order(loss.node, order);
    for (Node<T>* n : order) std::fill(n->grad.begin(), n->grad.end(), T(0));
    loss.node->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop();
}

}  // namespace lanet
