#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace ipatch {

/// Dense row-major tensor of doubles. All numeric state in the project is
/// carried in 64-bit floats so oracle tolerances stay unambiguous.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor identity(std::size_t n);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    // 2-D accessors; dim checks in debug builds only.
    std::size_t rows() const { return shape_.at(0); }
    std::size_t cols() const { return shape_.at(1); }
    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    std::string shape_str() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// Shape-checked dense kernels. Throw std::invalid_argument on mismatch.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

/// Numerically stable softmax over a flat sequence: shifts by the max before
/// exponentiating, so the result is invariant under adding a constant.
std::vector<double> softmax(const std::vector<double>& x);

/// Counter-based deterministic generator (splitmix64). The draw sequence
/// depends only on the seed, never on platform or standard-library version,
/// which is why std::mt19937 + std::*_distribution are not used here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);
    /// Standard normal via Box-Muller; two uniforms consumed per draw.
    double normal();
    /// Integer in [0, n).
    std::size_t index(std::size_t n);

    /// Glorot-uniform fill: entries in +/- sqrt(6 / (fan_in + fan_out)).
    Tensor glorot(std::vector<std::size_t> shape, std::size_t fan_in, std::size_t fan_out);
    Tensor uniform_tensor(std::vector<std::size_t> shape, double lo, double hi);

private:
    std::uint64_t state_;
};

}  // namespace ipatch
