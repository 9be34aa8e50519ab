#include "obsr/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace obsr::nn {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) fail(Errc::ShapeMismatch, "tensor data does not match its shape");
}

void Tensor2::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void require_shape(const Tensor2& t, std::size_t rows, std::size_t cols, const char* what) {
    if (t.rows() != rows || t.cols() != cols) {
        fail(Errc::ShapeMismatch, std::string(what) + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                                      ", got " + std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
    }
}

void check_finite(const Tensor2& t, const char* where) {
    for (double v : t.data()) {
        if (!std::isfinite(v)) fail(Errc::NonFinite, std::string("non-finite value in ") + where);
    }
}

namespace {

void prepare(Tensor2& out, std::size_t rows, std::size_t cols, bool accumulate) {
    if (accumulate) {
        require_shape(out, rows, cols, "accumulated product");
    } else if (out.rows() != rows || out.cols() != cols) {
        out = Tensor2(rows, cols);
    } else {
        out.fill(0.0);
    }
}

constexpr std::size_t kRowBlock = 4;

// Rows [r0, r0 + kRowBlock) of out += a * b. Each element still accumulates
// over k in ascending order, so blocking does not change any result; sharing
// one pass over b between several output rows is what saves bandwidth.
void gemm_block(const Tensor2& a, const Tensor2& b, Tensor2& out, std::size_t r0) {
    const std::size_t n = b.cols();
    const std::size_t rows = std::min(kRowBlock, a.rows() - r0);
    if (rows < kRowBlock) {
        for (std::size_t i = r0; i < r0 + rows; ++i) {
            const double* ai = a.row(i);
            double* o = out.row(i);
            for (std::size_t k = 0; k < b.rows(); ++k) {
                const double aik = ai[k];
                if (aik == 0.0) continue;
                const double* bk = b.row(k);
                for (std::size_t j = 0; j < n; ++j) o[j] += aik * bk[j];
            }
        }
        return;
    }
    const double *a0 = a.row(r0), *a1 = a.row(r0 + 1), *a2 = a.row(r0 + 2), *a3 = a.row(r0 + 3);
    double *o0 = out.row(r0), *o1 = out.row(r0 + 1), *o2 = out.row(r0 + 2), *o3 = out.row(r0 + 3);
    for (std::size_t k = 0; k < b.rows(); ++k) {
        const double x0 = a0[k], x1 = a1[k], x2 = a2[k], x3 = a3[k];
        if (x0 == 0.0 && x1 == 0.0 && x2 == 0.0 && x3 == 0.0) continue;
        const double* bk = b.row(k);
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) {
            const double v = bk[j];
            o0[j] += x0 * v;
            o1[j] += x1 * v;
            o2[j] += x2 * v;
            o3[j] += x3 * v;
        }
    }
}

}  // namespace

void matmul(const Tensor2& a, const Tensor2& b, Tensor2& out, bool accumulate, Exec exec) {
    if (a.cols() != b.rows()) fail(Errc::ShapeMismatch, "matmul inner dimensions differ");
    prepare(out, a.rows(), b.cols(), accumulate);
    const auto blocks = static_cast<std::ptrdiff_t>((a.rows() + kRowBlock - 1) / kRowBlock);
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static) if (a.rows() * b.size() > 32768)
        for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) gemm_block(a, b, out, static_cast<std::size_t>(blk) * kRowBlock);
    } else {
        for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) gemm_block(a, b, out, static_cast<std::size_t>(blk) * kRowBlock);
    }
}

void matmul_tn(const Tensor2& a, const Tensor2& b, Tensor2& out, bool accumulate, Exec exec) {
    if (a.rows() != b.rows()) fail(Errc::ShapeMismatch, "matmul_tn row counts differ");
    matmul(transpose(a), b, out, accumulate, exec);
}

void matmul_nt(const Tensor2& a, const Tensor2& b, Tensor2& out, bool accumulate, Exec exec) {
    if (a.cols() != b.cols()) fail(Errc::ShapeMismatch, "matmul_nt column counts differ");
    matmul(a, transpose(b), out, accumulate, exec);
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b, Exec exec) {
    Tensor2 out;
    matmul(a, b, out, false, exec);
    return out;
}

Tensor2 transpose(const Tensor2& a) {
    Tensor2 t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    }
    return t;
}

void add_row_vector(Tensor2& x, const Tensor2& b) {
    require_shape(b, 1, x.cols(), "bias");
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double* r = x.row(i);
        for (std::size_t j = 0; j < x.cols(); ++j) r[j] += b(0, j);
    }
}

void accumulate_column_sums(const Tensor2& x, Tensor2& out) {
    require_shape(out, 1, x.cols(), "column sums");
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* r = x.row(i);
        for (std::size_t j = 0; j < x.cols(); ++j) out(0, j) += r[j];
    }
}

}  // namespace obsr::nn
