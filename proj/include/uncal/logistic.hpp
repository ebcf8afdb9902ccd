#pragma once

// L2-regularized logistic regression on standardized features, fit by
// full-batch gradient descent. Shared by the wrongness probe and the
// surface-feature trigger classifier.

#include <cstddef>
#include <span>
#include <vector>

#include "uncal/json_io.hpp"
#include "uncal/matrix.hpp"

namespace uncal::logistic {

/// Per-column z-scoring. Columns with zero variance map to 0.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;  ///< standard deviation; 0 marks a constant column

    [[nodiscard]] Matrix apply(const Matrix& x) const;
    [[nodiscard]] std::vector<double> apply(std::span<const double> row) const;
};

Standardizer fit_standardizer(const Matrix& x);

struct GdOptions {
    double step = 0.1;
    std::size_t iterations = 2000;
    std::size_t trace_every = 100;
};

struct LogisticModel {
    Standardizer standardizer;
    std::vector<double> weights;
    double bias = 0.0;
    double l2 = 0.0;
    /// Objective at iteration 0, every `trace_every` iterations, and at the end.
    std::vector<double> loss_trace;

    /// P(label = 1) for one raw (unstandardized) feature row.
    [[nodiscard]] double predict(std::span<const double> raw_row) const;
    [[nodiscard]] std::vector<double> predict(const Matrix& raw) const;
};

double sigmoid(double z) noexcept;

/// log(1 + exp(z)) without overflow.
double softplus(double z) noexcept;

/// Mean Bernoulli NLL of logits against {0,1} labels.
double mean_log_loss(std::span<const double> logits, std::span<const int> labels);

/// Zero-initialized fit minimizing mean log loss + l2 * ||w||^2.
/// DegenerateFit when only one class is present; ShapeError on size mismatch.
LogisticModel fit(const Matrix& features, std::span<const int> labels, double l2, const GdOptions& options = {});

json to_json(const LogisticModel& model);
LogisticModel model_from_json(const json& j);

}  // namespace uncal::logistic
