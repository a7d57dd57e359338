#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "stseg/util.hpp"

namespace stseg {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

inline size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (int d : s) {
        if (d <= 0) throw std::invalid_argument("tensor dimension must be positive, got shape " + shape_str(s));
        n *= static_cast<size_t>(d);
    }
    return n;
}

// Disables graph construction inside the guarded scope. Ops executed while a
// guard is alive produce requires_grad=false outputs with no parent links.
class NoGradGuard {
public:
    NoGradGuard() : prev_(active_ref()) { active_ref() = true; }
    ~NoGradGuard() { active_ref() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

    static bool active() { return active_ref(); }

private:
    static bool& active_ref() {
        thread_local bool flag = false;
        return flag;
    }
    bool prev_;
};

// Dense row-major tensor with an optional gradient buffer. A Tensor is a
// cheap shared handle; ops link result nodes to their parents with a
// backward closure, and backward() replays the closures in reverse
// topological order.
template <typename T>
class Tensor {
public:
    struct Node {
        Shape shape;
        std::vector<T> data;
        std::vector<T> grad;  // sized lazily, same length as data
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backward;

        size_t numel() const { return data.size(); }
        void ensure_grad() {
            if (grad.size() != data.size()) grad.assign(data.size(), T(0));
        }
    };

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return filled(std::move(shape), T(0), requires_grad);
    }

    static Tensor filled(Shape shape, T value, bool requires_grad = false) {
        Tensor t;
        t.node_ = std::make_shared<Node>();
        t.node_->shape = std::move(shape);
        t.node_->data.assign(shape_numel(t.node_->shape), value);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (shape_numel(shape) != data.size())
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
        Tensor t;
        t.node_ = std::make_shared<Node>();
        t.node_->shape = std::move(shape);
        t.node_->data = std::move(data);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor randn(Shape shape, Rng& rng, T stddev = T(1), bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (T& v : t.node_->data) v = static_cast<T>(rng.normal()) * stddev;
        return t;
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape.at(static_cast<size_t>(i)); }
    size_t numel() const { return node_->data.size(); }

    std::span<T> data() { return {node_->data.data(), node_->data.size()}; }
    std::span<const T> data() const { return {node_->data.data(), node_->data.size()}; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }

    std::span<T> grad() {
        node_->ensure_grad();
        return {node_->grad.data(), node_->grad.size()};
    }
    std::span<const T> grad() const {
        node_->ensure_grad();
        return {node_->grad.data(), node_->grad.size()};
    }

    void zero_grad() {
        node_->ensure_grad();
        std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }

    T value() const {
        if (numel() != 1) throw std::logic_error("value() requires a scalar tensor, got shape " + shape_str(shape()));
        return node_->data[0];
    }

    // Runs reverse-mode accumulation from this scalar. Gradients are added
    // into the grad buffer of every reachable node with requires_grad.
    void backward() {
        if (numel() != 1) throw std::logic_error("backward() requires a scalar loss, got shape " + shape_str(shape()));
        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        topo(node_.get(), seen, order);
        node_->ensure_grad();
        node_->grad[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* n = *it;
            if (n->backward) n->backward(*n);
        }
    }

    std::shared_ptr<Node> node() const { return node_; }

    // Used by ops to build result nodes.
    static Tensor make_result(Shape shape, std::vector<std::shared_ptr<Node>> parents,
                              std::function<void(Node&)> backward_fn) {
        Tensor t = zeros(std::move(shape));
        bool rg = false;
        if (!NoGradGuard::active()) {
            for (const auto& p : parents)
                if (p && p->requires_grad) rg = true;
        }
        if (rg) {
            t.node_->requires_grad = true;
            t.node_->parents = std::move(parents);
            t.node_->backward = std::move(backward_fn);
        }
        return t;
    }

private:
    static void topo(Node* n, std::unordered_set<Node*>& seen, std::vector<Node*>& order) {
        // iterative DFS; graphs can be deep (per-step training graphs)
        struct Frame {
            Node* node;
            size_t next_parent;
        };
        std::vector<Frame> stack;
        if (!seen.insert(n).second) return;
        stack.push_back({n, 0});
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next_parent < f.node->parents.size()) {
                Node* p = f.node->parents[f.next_parent++].get();
                if (p && p->requires_grad && seen.insert(p).second) {
                    p->ensure_grad();
                    stack.push_back({p, 0});
                }
            } else {
                order.push_back(f.node);
                stack.pop_back();
            }
        }
    }

    std::shared_ptr<Node> node_;
};

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

template <typename T>
inline bool all_finite(const Tensor<T>& t) {
    for (T v : t.data())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace stseg
