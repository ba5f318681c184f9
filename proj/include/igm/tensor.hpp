#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace igm {

// Dense row-major double tensor. Shape is dynamic; all math kernels live in
// autodiff.hpp / the modules, this is just storage plus a few helpers.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> v;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        v.assign(numel_of(shape), 0.0);
    }

    Tensor(std::vector<std::size_t> s, std::vector<double> data)
        : shape(std::move(s)), v(std::move(data)) {
        if (v.size() != numel_of(shape))
            throw std::invalid_argument("Tensor: data size does not match shape");
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    std::size_t numel() const { return v.size(); }
    std::size_t ndim() const { return shape.size(); }

    // 2-D accessors (rows x cols), used by the linear-algebra paths.
    std::size_t rows() const {
        if (shape.size() != 2) throw std::logic_error("Tensor::rows: not 2-D");
        return shape[0];
    }
    std::size_t cols() const {
        if (shape.size() != 2) throw std::logic_error("Tensor::cols: not 2-D");
        return shape[1];
    }
    double& at(std::size_t r, std::size_t c) { return v[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols() + c]; }

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<std::size_t> s, double x) {
        Tensor t(std::move(s));
        for (double& e : t.v) e = x;
        return t;
    }

    static Tensor scalar(double x) { return Tensor({1}, {x}); }

    static Tensor row(std::vector<double> data) {
        std::size_t n = data.size();
        return Tensor({1, n}, std::move(data));
    }

    Tensor reshaped(std::vector<std::size_t> s) const {
        if (numel_of(s) != numel())
            throw std::invalid_argument("Tensor::reshaped: element count mismatch");
        return Tensor(std::move(s), v);
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace igm
