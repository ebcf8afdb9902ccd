#include "uncal/error.hpp"
#include "uncal/kernels.hpp"

namespace uncal::kernels::serial {

std::vector<double> column_means(const Matrix& x) {
    std::vector<double> means(x.cols(), 0.0);
    if (x.rows() == 0) {
        return means;
    }
    for (std::size_t c = 0; c < x.cols(); ++c) {
        double sum = 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            sum += x(r, c);
        }
        means[c] = sum / static_cast<double>(x.rows());
    }
    return means;
}

Matrix center_columns(const Matrix& x) {
    const auto means = column_means(x);
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) {
            out(r, c) = x(r, c) - means[c];
        }
    }
    return out;
}

Matrix cross_product(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw Error(ErrorKind::ShapeError, "cross_product: row counts differ");
    }
    Matrix out(a.cols(), b.cols());
    for (std::size_t i = 0; i < a.cols(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double sum = 0.0;
            for (std::size_t r = 0; r < a.rows(); ++r) {
                sum += a(r, i) * b(r, j);
            }
            out(i, j) = sum;
        }
    }
    return out;
}

std::vector<double> matvec(const Matrix& x, std::span<const double> v) {
    if (v.size() != x.cols()) {
        throw Error(ErrorKind::ShapeError, "matvec: vector length differs from column count");
    }
    std::vector<double> out(x.rows(), 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) {
            sum += x(r, c) * v[c];
        }
        out[r] = sum;
    }
    return out;
}

std::vector<double> matvec_transposed(const Matrix& x, std::span<const double> v) {
    if (v.size() != x.rows()) {
        throw Error(ErrorKind::ShapeError, "matvec_transposed: vector length differs from row count");
    }
    std::vector<double> out(x.cols(), 0.0);
    for (std::size_t c = 0; c < x.cols(); ++c) {
        double sum = 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            sum += x(r, c) * v[r];
        }
        out[c] = sum;
    }
    return out;
}

double frobenius_sq(const Matrix& x) {
    // Row partial sums first, then rows in order; the parallel kernel matches this.
    double total = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double sum = 0.0;
        for (double v : x.row(r)) {
            sum += v * v;
        }
        total += sum;
    }
    return total;
}

}  // namespace uncal::kernels::serial
