#pragma once

// Core containers: single-channel images, K-channel coefficient maps,
// convolutional dictionaries and the linear atom-transfer operator.
//
// Layouts are fixed: images are row-major, coefficient maps and
// dictionaries are atom-major then row-major.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cscf/error.hpp"

namespace cscf {

class Image {
public:
    Image() = default;
    Image(std::size_t height, std::size_t width, double fill = 0.0)
        : height_(height), width_(width), data_(height * width, fill) {}
    Image(std::size_t height, std::size_t width, std::vector<double> data)
        : height_(height), width_(width), data_(std::move(data)) {
        if (data_.size() != height_ * width_)
            throw DimensionError("Image: payload length does not match height*width");
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double &operator()(std::size_t r, std::size_t c) { return data_[r * width_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * width_ + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool same_shape(const Image &o) const noexcept {
        return height_ == o.height_ && width_ == o.width_;
    }

    friend bool operator==(const Image &, const Image &) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> data_;
};

// K coefficient channels of H x W each.
class CoeffMap {
public:
    CoeffMap() = default;
    CoeffMap(std::size_t atoms, std::size_t height, std::size_t width, double fill = 0.0)
        : atoms_(atoms), height_(height), width_(width), data_(atoms * height * width, fill) {}
    CoeffMap(std::size_t atoms, std::size_t height, std::size_t width, std::vector<double> data)
        : atoms_(atoms), height_(height), width_(width), data_(std::move(data)) {
        if (data_.size() != atoms_ * height_ * width_)
            throw DimensionError("CoeffMap: payload length does not match K*H*W");
    }

    std::size_t atoms() const noexcept { return atoms_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t plane() const noexcept { return height_ * width_; }
    std::size_t size() const noexcept { return data_.size(); }

    double &operator()(std::size_t k, std::size_t r, std::size_t c) {
        return data_[(k * height_ + r) * width_ + c];
    }
    double operator()(std::size_t k, std::size_t r, std::size_t c) const {
        return data_[(k * height_ + r) * width_ + c];
    }

    std::span<double> channel(std::size_t k) { return {data_.data() + k * plane(), plane()}; }
    std::span<const double> channel(std::size_t k) const {
        return {data_.data() + k * plane(), plane()};
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool same_shape(const CoeffMap &o) const noexcept {
        return atoms_ == o.atoms_ && height_ == o.height_ && width_ == o.width_;
    }
    bool matches(const Image &img) const noexcept {
        return height_ == img.height() && width_ == img.width();
    }

    friend bool operator==(const CoeffMap &, const CoeffMap &) = default;

private:
    std::size_t atoms_ = 0;
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> data_;
};

// Full-size (H x W support) filters, the unconstrained output of the
// dictionary data-consistency solve before support projection.
using FilterStack = CoeffMap;

// K atoms with k x k support, k odd. Atom (0,0) sits at image (0,0) when
// padded to image size.
class Dictionary {
public:
    Dictionary() = default;
    Dictionary(std::size_t atoms, std::size_t kernel, double fill = 0.0)
        : atoms_(atoms), kernel_(kernel), data_(atoms * kernel * kernel, fill) {}
    Dictionary(std::size_t atoms, std::size_t kernel, std::vector<double> data)
        : atoms_(atoms), kernel_(kernel), data_(std::move(data)) {
        if (data_.size() != atoms_ * kernel_ * kernel_)
            throw DimensionError("Dictionary: payload length does not match K*k*k");
    }

    std::size_t atoms() const noexcept { return atoms_; }
    std::size_t kernel() const noexcept { return kernel_; }
    std::size_t atom_size() const noexcept { return kernel_ * kernel_; }

    double &operator()(std::size_t k, std::size_t r, std::size_t c) {
        return data_[(k * kernel_ + r) * kernel_ + c];
    }
    double operator()(std::size_t k, std::size_t r, std::size_t c) const {
        return data_[(k * kernel_ + r) * kernel_ + c];
    }

    std::span<double> atom(std::size_t k) { return {data_.data() + k * atom_size(), atom_size()}; }
    std::span<const double> atom(std::size_t k) const {
        return {data_.data() + k * atom_size(), atom_size()};
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    double atom_norm(std::size_t k) const {
        double s = 0.0;
        for (double v : atom(k)) s += v * v;
        return std::sqrt(s);
    }

    friend bool operator==(const Dictionary &, const Dictionary &) = default;

private:
    std::size_t atoms_ = 0;
    std::size_t kernel_ = 0;
    std::vector<double> data_;
};

// Per-pixel affine map between coefficient vectors: out = mix * s + bias.
struct TransferOp {
    Eigen::MatrixXd mix;
    Eigen::VectorXd bias;
    double ridge = 0.0;

    std::size_t atoms() const noexcept { return static_cast<std::size_t>(mix.rows()); }

    static TransferOp identity(std::size_t atoms) {
        const auto n = static_cast<Eigen::Index>(atoms);
        return {Eigen::MatrixXd::Identity(n, n), Eigen::VectorXd::Zero(n), 0.0};
    }

    friend bool operator==(const TransferOp &a, const TransferOp &b) {
        return a.mix.rows() == b.mix.rows() && a.mix.cols() == b.mix.cols() &&
               a.bias.size() == b.bias.size() && a.mix == b.mix && a.bias == b.bias &&
               a.ridge == b.ridge;
    }
};

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline void require_same_shape(const Image &a, const Image &b, const char *what) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(what) + ": image dimensions differ");
}

inline void require_same_shape(const CoeffMap &a, const CoeffMap &b, const char *what) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(what) + ": coefficient map dimensions differ");
}

} // namespace cscf
