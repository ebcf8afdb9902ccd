#include "uncal/probe.hpp"

#include <algorithm>
#include <exception>
#include <unordered_map>

#include "uncal/error.hpp"
#include "uncal/metrics.hpp"
#include "uncal/rewards.hpp"

namespace uncal::probe {

std::vector<double> ProbeFeatures::flatten() const {
    std::vector<double> out(span_mean);
    out.push_back(response_token_count);
    out.push_back(emission_count);
    out.push_back(first_emit_fraction);
    return out;
}

namespace {

void fill_scalars(ProbeFeatures& f, const PredictionRecord& record) {
    if (record.emissions.empty()) {
        throw Error(ErrorKind::NotEmitted, "record '" + record.qid + "' has no emission");
    }
    f.response_token_count = static_cast<double>(record.response_token_count);
    f.emission_count = static_cast<double>(record.emissions.size());
    f.first_emit_fraction = rewards::first_emit_fraction(record).value_or(0.0);
}

}  // namespace

ProbeFeatures build_features(const Matrix& token_hidden, const PredictionRecord& record, std::size_t window,
                             std::size_t span_tokens) {
    ProbeFeatures f;
    fill_scalars(f, record);
    const auto& first = record.emissions.front();
    if (!first.token_index) {
        throw Error(ErrorKind::AlignmentError, "first emission of '" + record.qid + "' has no token index");
    }
    const std::size_t start = *first.token_index;
    if (start >= token_hidden.rows()) {
        throw Error(ErrorKind::AlignmentError, "emission token index beyond hidden-state sequence");
    }
    const std::size_t lo = start > window ? start - window : 0;
    const std::size_t hi = std::min(token_hidden.rows(), start + span_tokens + window);
    f.span_mean.assign(token_hidden.cols(), 0.0);
    for (std::size_t r = lo; r < hi; ++r) {
        const auto row = token_hidden.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            f.span_mean[c] += row[c];
        }
    }
    for (auto& v : f.span_mean) {
        v /= static_cast<double>(hi - lo);
    }
    return f;
}

ProbeFeatures features_from_row(std::span<const double> pooled, const PredictionRecord& record) {
    ProbeFeatures f;
    fill_scalars(f, record);
    f.span_mean.assign(pooled.begin(), pooled.end());
    return f;
}

Matrix stack(const std::vector<ProbeFeatures>& features) {
    if (features.empty()) {
        return {};
    }
    const auto width = features.front().span_mean.size() + kScalarFeatures;
    Matrix m(features.size(), width);
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto row = features[i].flatten();
        if (row.size() != width) {
            throw Error(ErrorKind::ShapeError, "probe features differ in width");
        }
        std::copy(row.begin(), row.end(), m.row(i).begin());
    }
    return m;
}

double ProbeModel::score(const ProbeFeatures& features) const { return model.predict(features.flatten()); }

std::vector<double> ProbeModel::scores(const std::vector<ProbeFeatures>& features) const {
    return model.predict(stack(features));
}

ProbeModel fit_probe(const std::vector<ProbeFeatures>& features, std::span<const int> wrong, double l2, int layer) {
    if (features.size() < 10) {
        throw Error(ErrorKind::DegenerateFit, "probe fit needs at least 10 examples");
    }
    ProbeModel p;
    p.layer = layer;
    p.model = logistic::fit(stack(features), wrong, l2);
    return p;
}

ProbeModel tune_threshold(ProbeModel model, const std::vector<ProbeFeatures>& dev_features,
                          std::span<const int> dev_labels) {
    const auto s = model.scores(dev_features);
    model.threshold = metrics::best_f1_threshold(s, dev_labels).threshold;
    return model;
}

ProbeEval evaluate(const ProbeModel& model, const std::vector<ProbeFeatures>& features, std::span<const int> labels) {
    const auto s = model.scores(features);
    ProbeEval e;
    e.n = features.size();
    e.auroc = metrics::auroc(s, labels);
    e.auprc = metrics::auprc(s, labels);
    const auto at = metrics::at_threshold(s, labels, model.threshold);
    e.precision = at.precision;
    e.recall = at.recall;
    e.f1 = at.f1;
    e.threshold = model.threshold;
    return e;
}

bool in_dev_split(const std::string& qid, std::uint64_t seed) {
    // FNV-1a over the seed bytes then the qid.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](unsigned char byte) {
        h ^= byte;
        h *= 0x100000001b3ULL;
    };
    for (int i = 0; i < 8; ++i) {
        mix(static_cast<unsigned char>(seed >> (8 * i)));
    }
    for (unsigned char c : qid) {
        mix(c);
    }
    return h % 5 == 0;
}

LayerData align_layer(const HiddenMatrix& hidden, std::span<const PredictionRecord> records, double f1_threshold) {
    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t r = 0; r < hidden.row_ids.size(); ++r) {
        row_of.emplace(hidden.row_ids[r], r);
    }
    LayerData data;
    for (const auto& raw : records) {
        const auto record = rewards::annotate(raw, f1_threshold);
        if (record.emissions.empty()) {
            continue;
        }
        const auto it = row_of.find(record.qid);
        if (it == row_of.end()) {
            throw Error(ErrorKind::AlignmentError, "no hidden row for emitted record '" + record.qid + "'");
        }
        data.features.push_back(features_from_row(hidden.values.row(it->second), record));
        data.wrong.push_back(record.match->correct ? 0 : 1);
        data.qids.push_back(record.qid);
    }
    return data;
}

LayerFit fit_layer(const HiddenMatrix& hidden, std::span<const PredictionRecord> records,
                   const SweepOptions& options) {
    const auto data = align_layer(hidden, records, options.f1_threshold);
    std::vector<ProbeFeatures> train_x;
    std::vector<ProbeFeatures> dev_x;
    std::vector<int> train_y;
    std::vector<int> dev_y;
    for (std::size_t i = 0; i < data.qids.size(); ++i) {
        if (in_dev_split(data.qids[i], options.seed)) {
            dev_x.push_back(data.features[i]);
            dev_y.push_back(data.wrong[i]);
        } else {
            train_x.push_back(data.features[i]);
            train_y.push_back(data.wrong[i]);
        }
    }
    auto model = fit_probe(train_x, train_y, options.l2, hidden.layer);
    model = tune_threshold(std::move(model), dev_x, dev_y);
    SweepRow row{hidden.layer, evaluate(model, dev_x, dev_y), train_x.size()};
    return {std::move(model), row};
}

std::vector<SweepRow> layer_sweep(const std::vector<HiddenMatrix>& layers, std::span<const PredictionRecord> records,
                                  const SweepOptions& options) {
    std::vector<SweepRow> rows(layers.size());
    std::vector<std::exception_ptr> failures(layers.size());
    const auto n = static_cast<std::int64_t>(layers.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        try {
            rows[k] = fit_layer(layers[k], records, options).row;
        } catch (...) {
            failures[k] = std::current_exception();
        }
    }
    for (const auto& f : failures) {
        if (f) {
            std::rethrow_exception(f);
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) { return a.layer < b.layer; });
    return rows;
}

json to_json(const ProbeModel& model) {
    auto j = logistic::to_json(model.model);
    j["kind"] = "probe";
    j["layer"] = model.layer;
    j["threshold"] = model.threshold;
    return j;
}

ProbeModel probe_from_json(const json& j) {
    ProbeModel p;
    p.model = logistic::model_from_json(j);
    p.layer = j.at("layer").get<int>();
    p.threshold = j.at("threshold").get<double>();
    return p;
}

json to_json(const ProbeEval& e) {
    return {{"auroc", e.auroc},   {"auprc", e.auprc}, {"precision", e.precision}, {"recall", e.recall},
            {"f1", e.f1},         {"threshold", e.threshold}, {"n", e.n}};
}

json to_json(const SweepRow& row) {
    auto j = to_json(row.dev);
    j["layer"] = row.layer;
    j["train_n"] = row.train_n;
    return j;
}

}  // namespace uncal::probe
