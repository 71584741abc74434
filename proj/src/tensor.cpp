#include "brainof/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "brainof/errors.hpp"

namespace brainof {

namespace {
std::size_t product(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)), data(product(shape), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (product(shape) != data.size())
        throw DimensionError("tensor: shape/data size mismatch");
}

Tensor Tensor::zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

Tensor Tensor::full(std::vector<std::size_t> s, double v) {
    Tensor t(std::move(s));
    for (double& x : t.data) x = v;
    return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r ? rows.begin()->size() : 0;
    Tensor t({r, c});
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("tensor: ragged matrix literal");
        for (double v : row) t.data[i++] = v;
    }
    return t;
}

std::size_t Tensor::numel() const { return data.size(); }

std::size_t Tensor::rows() const {
    if (shape.size() != 2) throw DimensionError("tensor: rows() on non-2D tensor");
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (shape.size() != 2) throw DimensionError("tensor: cols() on non-2D tensor");
    return shape[1];
}

double& Tensor::at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
double Tensor::at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

bool Tensor::same_shape(const Tensor& other) const { return shape == other.shape; }

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

void ensure_finite(const Tensor& t, const char* where) {
    for (double v : t.data)
        if (!std::isfinite(v))
            throw NumericError(std::string("non-finite value in ") + where);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0])
        throw DimensionError("matmul: incompatible shapes " + a.shape_str() + " " + b.shape_str());
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a.data[i * k + p];
            if (av == 0.0) continue;
            const double* brow = &b.data[p * n];
            double* crow = &c.data[i * n];
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    ensure_finite(c, "matmul");
    return c;
}

Tensor transpose(const Tensor& a) {
    if (a.shape.size() != 2) throw DimensionError("transpose: need 2-D tensor");
    Tensor t({a.shape[1], a.shape[0]});
    for (std::size_t i = 0; i < a.shape[0]; ++i)
        for (std::size_t j = 0; j < a.shape[1]; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DimensionError("add: shape mismatch");
    Tensor c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DimensionError("sub: shape mismatch");
    Tensor c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] -= b.data[i];
    return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DimensionError("mul: shape mismatch");
    Tensor c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] *= b.data[i];
    return c;
}

Tensor scale(const Tensor& a, double s) {
    Tensor c = a;
    for (double& v : c.data) v *= s;
    return c;
}

double dot(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DimensionError("dot: shape mismatch");
    return std::inner_product(a.data.begin(), a.data.end(), b.data.begin(), 0.0);
}

double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

}  // namespace brainof
