#include "fvdm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace fvdm {

std::size_t shape_size(const Shape& shape)
{
    std::size_t n = 1;
    for (auto e : shape) {
        if (e == 0) {
            throw NumericsError("tensor extents must be positive, got " + shape_string(shape));
        }
        n *= e;
    }
    return n;
}

std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape))
{
    if (shape_.empty()) {
        throw NumericsError("tensor shape must have at least one axis");
    }
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data))
{
    if (shape_.empty()) {
        throw NumericsError("tensor shape must have at least one axis");
    }
    if (shape_size(shape_) != data_.size()) {
        throw NumericsError("tensor data length " + std::to_string(data_.size()) +
                            " does not match shape " + shape_string(shape_));
    }
}

Tensor Tensor::identity(std::size_t n)
{
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        t.at(i, i) = 1.0;
    }
    return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows)
{
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw NumericsError("ragged matrix literal");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values)
{
    return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const
{
    if (axis >= shape_.size()) {
        throw NumericsError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
    }
    return shape_[axis];
}

std::size_t Tensor::rows() const
{
    if (rank() != 2) {
        throw NumericsError("expected a matrix, got shape " + shape_string(shape_));
    }
    return shape_[0];
}

std::size_t Tensor::cols() const
{
    if (rank() != 2) {
        throw NumericsError("expected a matrix, got shape " + shape_string(shape_));
    }
    return shape_[1];
}

std::span<double> Tensor::row(std::size_t r)
{
    const std::size_t c = cols();
    return std::span<double>(data_).subspan(r * c, c);
}

std::span<const double> Tensor::row(std::size_t r) const
{
    const std::size_t c = cols();
    return std::span<const double>(data_).subspan(r * c, c);
}

Tensor Tensor::reshaped(Shape shape) const
{
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::require_finite(const char* what) const
{
    if (!all_finite()) {
        throw NumericsError(std::string(what) + ": non-finite value");
    }
}

bool bit_equal(const Tensor& a, const Tensor& b)
{
    return a.shape() == b.shape() &&
           std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b)
{
    if (a.shape() != b.shape()) {
        throw NumericsError("max_abs_diff: shape mismatch " + shape_string(a.shape()) + " vs " +
                            shape_string(b.shape()));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

double frobenius_norm(const Tensor& a)
{
    double s = 0.0;
    for (double v : a.data()) {
        s += v * v;
    }
    return std::sqrt(s);
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op)
{
    if (a.shape() != b.shape()) {
        throw NumericsError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                            shape_string(b.shape()));
    }
}

}  // namespace

Tensor operator+(const Tensor& a, const Tensor& b)
{
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += b[i];
    }
    return out;
}

Tensor operator-(const Tensor& a, const Tensor& b)
{
    require_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] -= b[i];
    }
    return out;
}

Tensor operator*(double s, const Tensor& a)
{
    Tensor out = a;
    for (double& v : out.data()) {
        v *= s;
    }
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b)
{
    require_same_shape(a, b, "hadamard");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= b[i];
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b)
{
    if (a.rank() != 2 || b.rank() != 2) {
        throw NumericsError("matmul expects matrices, got " + shape_string(a.shape()) + " and " +
                            shape_string(b.shape()));
    }
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    if (b.rows() != k) {
        throw NumericsError("matmul inner dimension mismatch: " + shape_string(a.shape()) + " x " +
                            shape_string(b.shape()));
    }
    Tensor out({n, m});
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    // i-k-j order keeps the inner loop contiguous; the summation order per
    // output entry is still k ascending, so results match the naive loop.
    for (std::size_t i = 0; i < n; ++i) {
        double* orow = po + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            const double* brow = pb + p * m;
            for (std::size_t j = 0; j < m; ++j) {
                orow[j] += av * brow[j];
            }
        }
    }
    return out;
}

Tensor transpose(const Tensor& a)
{
    const std::size_t n = a.rows(), m = a.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            out.at(j, i) = a.at(i, j);
        }
    }
    return out;
}

Tensor matvec(const Tensor& a, std::span<const double> x)
{
    const std::size_t n = a.rows(), m = a.cols();
    if (x.size() != m) {
        throw NumericsError("matvec dimension mismatch");
    }
    Tensor out({n});
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            s += a.at(i, j) * x[j];
        }
        out[i] = s;
    }
    return out;
}

}  // namespace fvdm
