#pragma once

#include <deque>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nsdial/rng.hpp"
#include "nsdial/tensor.hpp"

namespace nsdial {

template <class S>
class TapeT;

/// Handle to a node on a tape.
template <class S>
struct VarT {
    TapeT<S>* tape = nullptr;
    int idx = -1;

    bool valid() const { return tape != nullptr && idx >= 0; }
    const TensorT<S>& value() const;
    const std::vector<int>& shape() const { return value().shape; }
    S scalar() const {
        const auto& v = value();
        if (v.numel() != 1) throw std::invalid_argument("scalar() on non-scalar var");
        return v.data[0];
    }
};

/// Named persistent parameters with gradient and Adam moment buffers.
template <class S>
class ParamStoreT {
  public:
    struct Entry {
        std::string name;
        TensorT<S> value;
        TensorT<S> grad;
        TensorT<S> m, v;  // optimizer moments, persist across steps
    };

    int add(const std::string& name, std::vector<int> shape) {
        for (const auto& e : entries_)
            if (e.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
        Entry e;
        e.name = name;
        e.value = TensorT<S>(shape);
        e.grad = TensorT<S>(shape);
        e.m = TensorT<S>(shape);
        e.v = TensorT<S>(std::move(shape));
        entries_.push_back(std::move(e));
        return static_cast<int>(entries_.size()) - 1;
    }

    // U(-a, a) init
    int add_uniform(const std::string& name, std::vector<int> shape, Rng& rng, double a) {
        int id = add(name, std::move(shape));
        for (auto& x : entries_[id].value.data) x = static_cast<S>(rng.uniform(-a, a));
        return id;
    }

    int size() const { return static_cast<int>(entries_.size()); }
    Entry& entry(int id) { return entries_[static_cast<size_t>(id)]; }
    const Entry& entry(int id) const { return entries_[static_cast<size_t>(id)]; }
    TensorT<S>& value(int id) { return entries_[static_cast<size_t>(id)].value; }
    TensorT<S>& grad(int id) { return entries_[static_cast<size_t>(id)].grad; }

    int find(const std::string& name) const {
        for (size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i].name == name) return static_cast<int>(i);
        return -1;
    }

    void zero_grads() {
        for (auto& e : entries_) e.grad.fill(S(0));
    }

    int64_t total_params() const {
        int64_t n = 0;
        for (const auto& e : entries_) n += e.value.numel();
        return n;
    }

  private:
    std::vector<Entry> entries_;
};

/// Records operations in execution order; creation order is a topological
/// order, so the backward sweep is a single reverse pass.
template <class S>
class TapeT {
  public:
    struct Node {
        TensorT<S> value;
        TensorT<S> grad;  // allocated on first write during backward
        std::function<void(TapeT&, const TensorT<S>&)> back;
        bool needs_grad = false;
        bool grad_written = false;
        int param_id = -1;
        ParamStoreT<S>* store = nullptr;
    };

    bool check_finite = false;

    VarT<S> constant(TensorT<S> v) { return push(std::move(v), nullptr, false); }

    VarT<S> input(TensorT<S> v, bool needs_grad = false) {
        return push(std::move(v), nullptr, needs_grad);
    }

    // Leaf for a persistent parameter; cached so repeated lookups share a node.
    VarT<S> param(ParamStoreT<S>& store, int pid) {
        auto key = std::make_pair(static_cast<const void*>(&store), pid);
        auto it = param_cache_.find(key);
        if (it != param_cache_.end()) return {this, it->second};
        VarT<S> v = push(store.value(pid), nullptr, true);
        nodes_[static_cast<size_t>(v.idx)].param_id = pid;
        nodes_[static_cast<size_t>(v.idx)].store = &store;
        param_cache_[key] = v.idx;
        return v;
    }

    VarT<S> push(TensorT<S> value, std::function<void(TapeT&, const TensorT<S>&)> back,
                 bool needs_grad) {
        if (check_finite && !value.all_finite())
            throw std::runtime_error("non-finite value produced at tape node " +
                                     std::to_string(nodes_.size()));
        Node n;
        n.value = std::move(value);
        n.back = std::move(back);
        n.needs_grad = needs_grad;
        nodes_.push_back(std::move(n));
        return {this, static_cast<int>(nodes_.size()) - 1};
    }

    const TensorT<S>& value(int idx) const { return nodes_[static_cast<size_t>(idx)].value; }
    bool needs_grad(int idx) const { return nodes_[static_cast<size_t>(idx)].needs_grad; }

    // Accumulate into a node's gradient buffer.
    void add_grad(int idx, const TensorT<S>& g) {
        Node& n = nodes_[static_cast<size_t>(idx)];
        if (!n.needs_grad) return;
        if (!n.grad_written) {
            n.grad = TensorT<S>(n.value.shape);
            n.grad_written = true;
        }
        for (size_t i = 0; i < g.data.size(); ++i) n.grad.data[i] += g.data[i];
    }

    void add_grad_at(int idx, int64_t flat, S g) {
        Node& n = nodes_[static_cast<size_t>(idx)];
        if (!n.needs_grad) return;
        if (!n.grad_written) {
            n.grad = TensorT<S>(n.value.shape);
            n.grad_written = true;
        }
        n.grad.data[static_cast<size_t>(flat)] += g;
    }

    /// Reverse-mode sweep from a scalar loss. Visits nodes in reverse creation
    /// order exactly once; parameter leaves accumulate into their store.
    void backward(VarT<S> loss) {
        if (loss.tape != this) throw std::invalid_argument("backward: var from another tape");
        Node& ln = nodes_[static_cast<size_t>(loss.idx)];
        if (ln.value.numel() != 1) throw std::invalid_argument("backward: loss is not a scalar");
        TensorT<S> one({1});
        one.data[0] = S(1);
        add_grad(loss.idx, one);
        for (int i = loss.idx; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (!n.grad_written) continue;
            if (n.back) n.back(*this, n.grad);
            if (n.param_id >= 0 && n.store) {
                auto& pg = n.store->grad(n.param_id);
                for (size_t k = 0; k < pg.data.size(); ++k) pg.data[k] += n.grad.data[k];
            }
        }
    }

    size_t size() const { return nodes_.size(); }

  private:
    std::deque<Node> nodes_;  // deque: held references survive later pushes
    std::map<std::pair<const void*, int>, int> param_cache_;
};

template <class S>
const TensorT<S>& VarT<S>::value() const {
    return tape->value(idx);
}

using Var = VarT<float>;
using Tape = TapeT<float>;
using ParamStore = ParamStoreT<float>;

}  // namespace nsdial
