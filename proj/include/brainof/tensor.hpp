#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace brainof {

// Dense row-major tensor of doubles. Value semantics; all public numerics
// operations check finiteness of their results.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s);
    Tensor(std::vector<std::size_t> s, std::vector<double> d);

    static Tensor zeros(std::vector<std::size_t> s);
    static Tensor full(std::vector<std::size_t> s, double v);
    // 2-D convenience constructor from nested lists.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t numel() const;
    std::size_t rows() const;  // 2-D only
    std::size_t cols() const;  // 2-D only

    double& at(std::size_t i, std::size_t j);
    double at(std::size_t i, std::size_t j) const;

    bool same_shape(const Tensor& other) const;
    std::string shape_str() const;
};

// Throws NumericError if any element is NaN or Inf.
void ensure_finite(const Tensor& t, const char* where);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

double dot(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);

}  // namespace brainof
