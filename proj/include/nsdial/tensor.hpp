#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace nsdial {

/// Dense row-major tensor. Rank 1 and 2 cover everything this library needs.
template <class S>
struct TensorT {
    std::vector<int> shape;
    std::vector<S> data;

    TensorT() = default;
    explicit TensorT(std::vector<int> shp) : shape(std::move(shp)) {
        data.assign(numel_of(shape), S(0));
    }
    TensorT(std::vector<int> shp, std::vector<S> d) : shape(std::move(shp)), data(std::move(d)) {
        if (static_cast<size_t>(numel_of(shape)) != data.size())
            throw std::invalid_argument("tensor: shape/data size mismatch");
    }

    static TensorT vec(std::vector<S> d) {
        int n = static_cast<int>(d.size());
        return TensorT({n}, std::move(d));
    }
    static TensorT zeros(std::vector<int> shp) { return TensorT(std::move(shp)); }

    static int64_t numel_of(const std::vector<int>& shp) {
        int64_t n = 1;
        for (int d : shp) {
            if (d < 0) throw std::invalid_argument("tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    S& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    const S& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    // rank-2 access
    S& at(int r, int c) { return data[static_cast<size_t>(r) * dim(1) + c]; }
    const S& at(int r, int c) const { return data[static_cast<size_t>(r) * dim(1) + c]; }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (S v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    void fill(S v) { std::fill(data.begin(), data.end(), v); }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

using Tensor = TensorT<float>;

}  // namespace nsdial
