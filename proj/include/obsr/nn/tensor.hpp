#pragma once

// Row-major 64-bit matrix and the matrix-product kernels everything else is
// built on. Each kernel has an OpenMP version and a serial reference with the
// same per-element accumulation order, so both produce identical bits.

#include <cstddef>
#include <span>
#include <vector>

#include "obsr/error.hpp"
#include "obsr/exec.hpp"

namespace obsr::nn {

class Tensor2 {
public:
    Tensor2() = default;
    Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    double* row(std::size_t r) noexcept { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const noexcept { return data_.data() + r * cols_; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& vec() noexcept { return data_; }
    const std::vector<double>& vec() const noexcept { return data_; }

    void fill(double v);
    bool same_shape(const Tensor2& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    friend bool operator==(const Tensor2&, const Tensor2&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

void require_shape(const Tensor2& t, std::size_t rows, std::size_t cols, const char* what);
/// Throws NonFinite naming `where` if any element is NaN or infinite.
void check_finite(const Tensor2& t, const char* where);

/// out (+)= a · b
void matmul(const Tensor2& a, const Tensor2& b, Tensor2& out, bool accumulate = false, Exec exec = Exec::parallel);
/// out (+)= aᵀ · b
void matmul_tn(const Tensor2& a, const Tensor2& b, Tensor2& out, bool accumulate = false, Exec exec = Exec::parallel);
/// out (+)= a · bᵀ
void matmul_nt(const Tensor2& a, const Tensor2& b, Tensor2& out, bool accumulate = false, Exec exec = Exec::parallel);

Tensor2 matmul(const Tensor2& a, const Tensor2& b, Exec exec = Exec::parallel);
Tensor2 transpose(const Tensor2& a);

/// Row-wise bias add: every row of x gets b (1 × cols).
void add_row_vector(Tensor2& x, const Tensor2& b);
/// Column sums accumulated into out (1 × cols).
void accumulate_column_sums(const Tensor2& x, Tensor2& out);

}  // namespace obsr::nn
