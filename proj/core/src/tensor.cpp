#include "casvid/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "casvid/errors.hpp"
#include "casvid/rng.hpp"

namespace casvid {

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw DimError("negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(shape_numel(shape_)), 0.0);
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
    if (shape_numel(shape) != size())
        throw DimError("reshape " + shape_str(shape_) + " -> " + shape_str(shape) +
                       " changes element count");
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor::fill_normal(Rng& rng) {
    for (auto& v : data_) v = rng.normal();
}

Tensor& Tensor::operator+=(const Tensor& other) {
    require_same_shape(*this, other, "operator+=");
    for (std::int64_t i = 0; i < size(); ++i) data_[static_cast<std::size_t>(i)] += other[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
    require_same_shape(*this, other, "operator-=");
    for (std::int64_t i = 0; i < size(); ++i) data_[static_cast<std::size_t>(i)] -= other[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
}

Tensor operator+(const Tensor& a, const Tensor& b) {
    Tensor r = a;
    r += b;
    return r;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    Tensor r = a;
    r -= b;
    return r;
}

Tensor operator*(const Tensor& a, double s) {
    Tensor r = a;
    r *= s;
    return r;
}

void axpy(double a, const Tensor& x, Tensor& y) {
    require_same_shape(x, y, "axpy");
    double* yd = y.data();
    const double* xd = x.data();
    for (std::int64_t i = 0; i < x.size(); ++i) yd[i] += a * xd[i];
}

double sum(const Tensor& t) {
    double s = 0.0;
    for (std::int64_t i = 0; i < t.size(); ++i) s += t[i];
    return s;
}

double mean(const Tensor& t) { return t.size() ? sum(t) / static_cast<double>(t.size()) : 0.0; }

double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double max_abs(const Tensor& t) {
    double m = 0.0;
    for (std::int64_t i = 0; i < t.size(); ++i) m = std::max(m, std::abs(t[i]));
    return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double l2_norm(const Tensor& t) { return std::sqrt(dot(t, t)); }

double mean_squared_error(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mean_squared_error");
    double s = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return a.size() ? s / static_cast<double>(a.size()) : 0.0;
}

bool all_finite(const Tensor& t) {
    for (std::int64_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(t[i])) return false;
    return true;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b))
        throw DimError(std::string(where) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
}

}  // namespace casvid
