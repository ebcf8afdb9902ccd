#include <omp.h>

#include <cstdint>

#include "uncal/error.hpp"
#include "uncal/kernels.hpp"

namespace uncal::kernels {

namespace {

// OpenMP wants signed loop counters.
using index_t = std::int64_t;

constexpr index_t kMinParallelWork = 4096;

bool worth_parallel(std::size_t work) { return static_cast<index_t>(work) >= kMinParallelWork; }

}  // namespace

std::vector<double> column_means(const Matrix& x) {
    std::vector<double> means(x.cols(), 0.0);
    if (x.rows() == 0) {
        return means;
    }
    const auto cols = static_cast<index_t>(x.cols());
    const auto rows = x.rows();
#pragma omp parallel for schedule(static) if (worth_parallel(x.rows() * x.cols()))
    for (index_t c = 0; c < cols; ++c) {
        double sum = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            sum += x(r, static_cast<std::size_t>(c));
        }
        means[static_cast<std::size_t>(c)] = sum / static_cast<double>(rows);
    }
    return means;
}

Matrix center_columns(const Matrix& x) {
    const auto means = column_means(x);
    Matrix out(x.rows(), x.cols());
    const auto rows = static_cast<index_t>(x.rows());
#pragma omp parallel for schedule(static) if (worth_parallel(x.rows() * x.cols()))
    for (index_t r = 0; r < rows; ++r) {
        const auto src = x.row(static_cast<std::size_t>(r));
        auto dst = out.row(static_cast<std::size_t>(r));
        for (std::size_t c = 0; c < src.size(); ++c) {
            dst[c] = src[c] - means[c];
        }
    }
    return out;
}

Matrix cross_product(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw Error(ErrorKind::ShapeError, "cross_product: row counts differ");
    }
    Matrix out(a.cols(), b.cols());
    const auto outputs = static_cast<index_t>(a.cols() * b.cols());
    const auto q = b.cols();
    const auto n = a.rows();
#pragma omp parallel for schedule(static) if (worth_parallel(a.cols() * b.cols() * a.rows()))
    for (index_t k = 0; k < outputs; ++k) {
        const auto i = static_cast<std::size_t>(k) / q;
        const auto j = static_cast<std::size_t>(k) % q;
        double sum = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            sum += a(r, i) * b(r, j);
        }
        out(i, j) = sum;
    }
    return out;
}

std::vector<double> matvec(const Matrix& x, std::span<const double> v) {
    if (v.size() != x.cols()) {
        throw Error(ErrorKind::ShapeError, "matvec: vector length differs from column count");
    }
    std::vector<double> out(x.rows(), 0.0);
    const auto rows = static_cast<index_t>(x.rows());
#pragma omp parallel for schedule(static) if (worth_parallel(x.rows() * x.cols()))
    for (index_t r = 0; r < rows; ++r) {
        const auto row = x.row(static_cast<std::size_t>(r));
        double sum = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) {
            sum += row[c] * v[c];
        }
        out[static_cast<std::size_t>(r)] = sum;
    }
    return out;
}

std::vector<double> matvec_transposed(const Matrix& x, std::span<const double> v) {
    if (v.size() != x.rows()) {
        throw Error(ErrorKind::ShapeError, "matvec_transposed: vector length differs from row count");
    }
    std::vector<double> out(x.cols(), 0.0);
    const auto cols = static_cast<index_t>(x.cols());
    const auto rows = x.rows();
#pragma omp parallel for schedule(static) if (worth_parallel(x.rows() * x.cols()))
    for (index_t c = 0; c < cols; ++c) {
        double sum = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            sum += x(r, static_cast<std::size_t>(c)) * v[r];
        }
        out[static_cast<std::size_t>(c)] = sum;
    }
    return out;
}

double frobenius_sq(const Matrix& x) {
    std::vector<double> partial(x.rows(), 0.0);
    const auto rows = static_cast<index_t>(x.rows());
#pragma omp parallel for schedule(static) if (worth_parallel(x.rows() * x.cols()))
    for (index_t r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (double v : x.row(static_cast<std::size_t>(r))) {
            sum += v * v;
        }
        partial[static_cast<std::size_t>(r)] = sum;
    }
    double total = 0.0;
    for (double p : partial) {
        total += p;
    }
    return total;
}

}  // namespace uncal::kernels
