#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fsmlp/error.hpp"
#include "fsmlp/rng.hpp"

namespace fsmlp {

struct Shape3 {
    std::int64_t d0 = 0;
    std::int64_t d1 = 0;
    std::int64_t d2 = 0;

    std::int64_t numel() const { return d0 * d1 * d2; }
    bool operator==(const Shape3&) const = default;
    std::string str() const;
};

namespace detail {
// Leaves doubles default-initialized on resize; tensors that every op fully
// overwrites skip the zero-fill this way.
template <typename T>
struct UninitAllocator : std::allocator<T> {
    template <typename U>
    struct rebind {
        using other = UninitAllocator<U>;
    };
    template <typename U>
    void construct(U* p) noexcept {
        ::new (static_cast<void*>(p)) U;
    }
    template <typename U, typename... Args>
    void construct(U* p, Args&&... args) {
        ::new (static_cast<void*>(p)) U(static_cast<Args&&>(args)...);
    }
};
}  // namespace detail

// Dense row-major rank-3 tensor of doubles. Every value in the model is one
// of these: (batch, channels, time) activations, (1, n_in, n_out) weight
// matrices, (1, 1, n) bias rows, (1, 1, 1) scalars.
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(std::int64_t d0, std::int64_t d1, std::int64_t d2, double fill = 0.0);
    explicit Tensor3(Shape3 s, double fill = 0.0) : Tensor3(s.d0, s.d1, s.d2, fill) {}

    // Allocation without the zero-fill, for outputs that are written in full.
    static Tensor3 uninitialized(Shape3 s);

    static Tensor3 from_values(std::int64_t d0, std::int64_t d1, std::int64_t d2,
                               std::vector<double> values);
    static Tensor3 scalar(double v) { return from_values(1, 1, 1, {v}); }
    static Tensor3 random_uniform(Shape3 s, double lo, double hi, Rng& rng);
    static Tensor3 random_normal(Shape3 s, double mean, double stddev, Rng& rng);

    const Shape3& shape() const { return shape_; }
    std::int64_t dim0() const { return shape_.d0; }
    std::int64_t dim1() const { return shape_.d1; }
    std::int64_t dim2() const { return shape_.d2; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& at(std::int64_t i, std::int64_t j, std::int64_t k) {
        return data_[(i * shape_.d1 + j) * shape_.d2 + k];
    }
    double at(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return data_[(i * shape_.d1 + j) * shape_.d2 + k];
    }
    double& operator[](std::int64_t flat) { return data_[flat]; }
    double operator[](std::int64_t flat) const { return data_[flat]; }

    // Scalar convenience for (1,1,1) tensors.
    double item() const;

    void fill(double v);
    void zero() { fill(0.0); }

    bool all_finite() const;
    double max_abs() const;
    double max_abs_diff(const Tensor3& other) const;

    Tensor3 transposed12() const;  // swaps dims 1 and 2

    bool same_shape(const Tensor3& o) const { return shape_ == o.shape_; }

private:
    Shape3 shape_{};
    std::vector<double, detail::UninitAllocator<double>> data_;
};

// Throws DimensionError naming both shapes when they differ.
void require_same_shape(const Tensor3& a, const Tensor3& b, const char* where);

}  // namespace fsmlp
