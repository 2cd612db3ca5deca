#include "fsmlp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fsmlp/kernels.hpp"

namespace fsmlp {

std::string Shape3::str() const {
    std::ostringstream os;
    os << "(" << d0 << "," << d1 << "," << d2 << ")";
    return os.str();
}

Tensor3::Tensor3(std::int64_t d0, std::int64_t d1, std::int64_t d2, double fill)
    : shape_{d0, d1, d2} {
    if (d0 < 0 || d1 < 0 || d2 < 0)
        throw DimensionError("Tensor3: negative dimension in " + shape_.str());
    data_.assign(static_cast<std::size_t>(shape_.numel()), fill);
}

Tensor3 Tensor3::uninitialized(Shape3 s) {
    Tensor3 t;
    if (s.d0 < 0 || s.d1 < 0 || s.d2 < 0)
        throw DimensionError("Tensor3: negative dimension in " + s.str());
    t.shape_ = s;
    t.data_.resize(static_cast<std::size_t>(s.numel()));
    return t;
}

Tensor3 Tensor3::from_values(std::int64_t d0, std::int64_t d1, std::int64_t d2,
                             std::vector<double> values) {
    Tensor3 t;
    t.shape_ = {d0, d1, d2};
    if (static_cast<std::int64_t>(values.size()) != t.shape_.numel())
        throw DimensionError("Tensor3::from_values: " + std::to_string(values.size()) +
                             " values for shape " + t.shape_.str());
    t.data_.assign(values.begin(), values.end());
    return t;
}

Tensor3 Tensor3::random_uniform(Shape3 s, double lo, double hi, Rng& rng) {
    Tensor3 t(s);
    for (auto& v : t.data_) v = rng.uniform(lo, hi);
    return t;
}

Tensor3 Tensor3::random_normal(Shape3 s, double mean, double stddev, Rng& rng) {
    Tensor3 t(s);
    for (auto& v : t.data_) v = rng.normal(mean, stddev);
    return t;
}

double Tensor3::item() const {
    if (size() != 1)
        throw DimensionError("Tensor3::item on non-scalar shape " + shape_.str());
    return data_[0];
}

void Tensor3::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor3::all_finite() const {
    return kernels::active().all_finite(data_.data(), data_.size());
}

double Tensor3::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
}

double Tensor3::max_abs_diff(const Tensor3& other) const {
    require_same_shape(*this, other, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i)
        m = std::max(m, std::fabs(data_[i] - other.data_[i]));
    return m;
}

Tensor3 Tensor3::transposed12() const {
    Tensor3 out = Tensor3::uninitialized({shape_.d0, shape_.d2, shape_.d1});
    for (std::int64_t i = 0; i < shape_.d0; ++i)
        for (std::int64_t j = 0; j < shape_.d1; ++j)
            for (std::int64_t k = 0; k < shape_.d2; ++k)
                out.at(i, k, j) = at(i, j, k);
    return out;
}

void require_same_shape(const Tensor3& a, const Tensor3& b, const char* where) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(where) + ": shape mismatch " + a.shape().str() +
                             " vs " + b.shape().str());
}

}  // namespace fsmlp
