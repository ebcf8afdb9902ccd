#include "uncal/logistic.hpp"

#include <cmath>

#include "uncal/error.hpp"
#include "uncal/kernels.hpp"

namespace uncal::logistic {

double sigmoid(double z) noexcept {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double softplus(double z) noexcept {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double mean_log_loss(std::span<const double> logits, std::span<const int> labels) {
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        // -log sigmoid(z) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
        sum += labels[i] != 0 ? softplus(-logits[i]) : softplus(logits[i]);
    }
    return sum / static_cast<double>(logits.size());
}

Standardizer fit_standardizer(const Matrix& x) {
    Standardizer s;
    s.mean = kernels::column_means(x);
    s.scale.assign(x.cols(), 0.0);
    const auto centered = kernels::center_columns(x);
    for (std::size_t c = 0; c < x.cols(); ++c) {
        double ss = 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            ss += centered(r, c) * centered(r, c);
        }
        const double sd = std::sqrt(ss / static_cast<double>(x.rows()));
        s.scale[c] = sd > 1e-12 ? sd : 0.0;
    }
    return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
    if (x.cols() != mean.size()) {
        throw Error(ErrorKind::ShapeError, "standardizer width differs from feature width");
    }
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) {
            out(r, c) = scale[c] > 0.0 ? (x(r, c) - mean[c]) / scale[c] : 0.0;
        }
    }
    return out;
}

std::vector<double> Standardizer::apply(std::span<const double> row) const {
    if (row.size() != mean.size()) {
        throw Error(ErrorKind::ShapeError, "standardizer width differs from feature width");
    }
    std::vector<double> out(row.size());
    for (std::size_t c = 0; c < row.size(); ++c) {
        out[c] = scale[c] > 0.0 ? (row[c] - mean[c]) / scale[c] : 0.0;
    }
    return out;
}

double LogisticModel::predict(std::span<const double> raw_row) const {
    const auto z = standardizer.apply(raw_row);
    double logit = bias;
    for (std::size_t c = 0; c < z.size(); ++c) {
        logit += weights[c] * z[c];
    }
    return sigmoid(logit);
}

std::vector<double> LogisticModel::predict(const Matrix& raw) const {
    const auto z = standardizer.apply(raw);
    auto logits = kernels::matvec(z, weights);
    for (auto& v : logits) {
        v = sigmoid(v + bias);
    }
    return logits;
}

LogisticModel fit(const Matrix& features, std::span<const int> labels, double l2, const GdOptions& options) {
    if (features.rows() != labels.size()) {
        throw Error(ErrorKind::ShapeError, "label count differs from feature rows");
    }
    if (!(l2 >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "l2 must be non-negative");
    }
    std::size_t positives = 0;
    for (int y : labels) {
        positives += y != 0 ? 1 : 0;
    }
    if (positives == 0 || positives == labels.size()) {
        throw Error(ErrorKind::DegenerateFit, "logistic fit needs both classes");
    }

    LogisticModel model;
    model.l2 = l2;
    model.standardizer = fit_standardizer(features);
    const auto z = model.standardizer.apply(features);
    const double n = static_cast<double>(z.rows());
    model.weights.assign(z.cols(), 0.0);

    auto objective = [&](std::span<const double> logits) {
        double penalty = 0.0;
        for (double w : model.weights) {
            penalty += w * w;
        }
        return mean_log_loss(logits, labels) + l2 * penalty;
    };

    std::vector<double> residual(z.rows());
    for (std::size_t it = 0; it <= options.iterations; ++it) {
        auto logits = kernels::matvec(z, model.weights);
        for (auto& v : logits) {
            v += model.bias;
        }
        if (options.trace_every > 0 && (it % options.trace_every == 0 || it == options.iterations)) {
            model.loss_trace.push_back(objective(logits));
        }
        if (it == options.iterations) {
            break;
        }
        double bias_grad = 0.0;
        for (std::size_t r = 0; r < z.rows(); ++r) {
            residual[r] = sigmoid(logits[r]) - (labels[r] != 0 ? 1.0 : 0.0);
            bias_grad += residual[r];
        }
        const auto grad = kernels::matvec_transposed(z, residual);
        for (std::size_t c = 0; c < model.weights.size(); ++c) {
            model.weights[c] -= options.step * (grad[c] / n + 2.0 * l2 * model.weights[c]);
        }
        model.bias -= options.step * bias_grad / n;
    }
    return model;
}

json to_json(const LogisticModel& model) {
    return {{"weights", model.weights},
            {"bias", model.bias},
            {"l2", model.l2},
            {"feature_mean", model.standardizer.mean},
            {"feature_scale", model.standardizer.scale}};
}

LogisticModel model_from_json(const json& j) {
    LogisticModel m;
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.l2 = j.value("l2", 0.0);
    m.standardizer.mean = j.at("feature_mean").get<std::vector<double>>();
    m.standardizer.scale = j.at("feature_scale").get<std::vector<double>>();
    if (m.weights.size() != m.standardizer.mean.size() || m.weights.size() != m.standardizer.scale.size()) {
        throw Error(ErrorKind::ParseError, "logistic model vectors differ in length");
    }
    return m;
}

}  // namespace uncal::logistic
