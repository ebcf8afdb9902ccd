#include "uncal/repr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "uncal/error.hpp"
#include "uncal/kernels.hpp"

namespace uncal::repr {

namespace {

Matrix transpose(const Matrix& x) {
    Matrix t(x.cols(), x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) {
            t(c, r) = x(r, c);
        }
    }
    return t;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void normalize(std::vector<double>& v) {
    const double n = norm(v);
    for (double& x : v) {
        x /= n;
    }
}

void orient(std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (std::abs(v[i]) > std::abs(v[best])) {
            best = i;
        }
    }
    if (v[best] < 0.0) {
        for (double& x : v) {
            x = -x;
        }
    }
}

// Removes the projections onto the accepted components.
void orthogonalize(std::vector<double>& v, const std::vector<std::vector<double>>& basis) {
    for (const auto& b : basis) {
        const double d = dot(v, b);
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] -= d * b[i];
        }
    }
}

std::vector<double> symmetric_apply(const Matrix& c, std::span<const double> v) { return kernels::matvec(c, v); }

std::string lower_trimmed(std::string_view tok) {
    std::string out;
    for (char ch : tok) {
        if (!std::isspace(static_cast<unsigned char>(ch))) {
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    return out;
}

bool is_numeric_token(std::string_view tok) {
    bool digit = false;
    for (char ch : tok) {
        if (std::isdigit(static_cast<unsigned char>(ch))) {
            digit = true;
        } else if (ch != '.' && ch != '%' && !std::isspace(static_cast<unsigned char>(ch))) {
            return false;
        }
    }
    return digit;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

double kl(std::span<const double> p, std::span<const double> q, double epsilon) {
    if (p.size() != q.size()) {
        throw Error(ErrorKind::ShapeError, "kl: distributions differ in length");
    }
    if (!(epsilon >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "kl: epsilon must be nonnegative");
    }
    const double denom = 1.0 + static_cast<double>(q.size()) * epsilon;
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) {
            total += p[i] * std::log(p[i] / ((q[i] + epsilon) / denom));
        }
    }
    return std::max(total, 0.0);
}

std::string to_string(TokenType type) {
    switch (type) {
        case TokenType::ConfidenceDigit: return "confidence_digit";
        case TokenType::StructuralLabel: return "structural_label";
        case TokenType::ReasoningToken: return "reasoning";
        case TokenType::UncertaintyToken: return "uncertainty";
        case TokenType::NearbyContext: return "nearby_context";
        case TokenType::Other: return "other";
    }
    return "other";
}

TokenType token_type_from_string(std::string_view text) {
    for (TokenType t : kAllTokenTypes) {
        if (to_string(t) == text) {
            return t;
        }
    }
    throw Error(ErrorKind::ParseError, "unknown token type '" + std::string(text) + "'");
}

void TokenDistPair::validate() const {
    if (base_probs.size() != calibrated_probs.size()) {
        throw Error(ErrorKind::ShapeError, "distribution pair lengths differ at position " + std::to_string(position));
    }
    for (const auto* v : {&base_probs, &calibrated_probs}) {
        double s = 0.0;
        for (double x : *v) {
            if (!(x >= 0.0)) {
                throw Error(ErrorKind::ShapeError, "negative probability at position " + std::to_string(position));
            }
            s += x;
        }
        if (std::abs(s - 1.0) > 1e-6) {
            throw Error(ErrorKind::ShapeError, "distribution does not sum to 1 at position " + std::to_string(position));
        }
    }
}

double TokenDistPair::divergence(double epsilon) const { return kl(calibrated_probs, base_probs, epsilon); }

KlByType kl_by_type(std::span<const TokenDistPair> pairs, std::span<const TokenAnnotation> annotations,
                    double epsilon) {
    std::map<std::size_t, TokenType> type_at;
    for (const auto& a : annotations) {
        if (!type_at.emplace(a.position, a.type).second) {
            throw Error(ErrorKind::InvalidArgument, "duplicate annotation at position " + std::to_string(a.position));
        }
    }
    KlByType table;
    for (TokenType t : kAllTokenTypes) {
        table.by_type[t];
    }
    for (const auto& pair : pairs) {
        const auto it = type_at.find(pair.position);
        if (it == type_at.end()) {
            throw Error(ErrorKind::InvalidArgument, "no annotation for position " + std::to_string(pair.position));
        }
        pair.validate();
        const double d = pair.divergence(epsilon);
        auto& s = table.by_type[it->second];
        ++s.count;
        s.total_kl += d;
        table.total_kl += d;
        ++table.positions;
    }
    for (auto& [type, s] : table.by_type) {
        if (s.count == 0) {
            continue;
        }
        s.mean_kl = s.total_kl / static_cast<double>(s.count);
        if (table.total_kl > 0.0) {
            s.mass_fraction = s.total_kl / table.total_kl;
        }
    }
    return table;
}

std::vector<TokenAnnotation> default_annotations(std::span<const std::string> tokens, std::size_t window) {
    const std::size_t n = tokens.size();
    std::vector<int> kind(n, -1);
    std::vector<bool> marker(n, false);
    std::vector<bool> label(n, false);
    std::vector<bool> digit(n, false);
    std::optional<std::size_t> first_label;
    bool after_conf_label = false;
    for (std::size_t i = 0; i < n; ++i) {
        const auto t = lower_trimmed(tokens[i]);
        if (t == "<uncertain>") {
            marker[i] = true;
            continue;
        }
        const bool is_label = t == "answer" || t == "answer:" || t == "confidence" || t == "confidence:" ||
                              (t == ":" && i > 0 && label[i - 1]);
        if (is_label) {
            label[i] = true;
            if (!first_label) {
                first_label = i;
            }
            if (t.starts_with("confidence")) {
                after_conf_label = true;
            } else if (t.starts_with("answer")) {
                after_conf_label = false;
            }
            continue;
        }
        if (after_conf_label && is_numeric_token(tokens[i])) {
            digit[i] = true;
        }
    }
    std::vector<bool> nearby(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (!marker[i]) {
            continue;
        }
        const std::size_t lo = i >= window ? i - window : 0;
        const std::size_t hi = std::min(n, i + window + 1);
        for (std::size_t j = lo; j < hi; ++j) {
            nearby[j] = true;
        }
    }
    std::vector<TokenAnnotation> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        TokenType t = TokenType::Other;
        if (marker[i]) {
            t = TokenType::UncertaintyToken;
        } else if (digit[i]) {
            t = TokenType::ConfidenceDigit;
        } else if (label[i]) {
            t = TokenType::StructuralLabel;
        } else if (nearby[i]) {
            t = TokenType::NearbyContext;
        } else if (!first_label || i < *first_label) {
            t = TokenType::ReasoningToken;
        }
        out.push_back({i, t});
    }
    return out;
}

double linear_cka(const Matrix& x, const Matrix& y) {
    if (x.rows() != y.rows()) {
        throw Error(ErrorKind::ShapeError, "cka: row counts differ");
    }
    if (x.rows() < 2) {
        throw Error(ErrorKind::ShapeError, "cka: need at least 2 rows");
    }
    const Matrix xc = kernels::center_columns(x);
    const Matrix yc = kernels::center_columns(y);
    if (kernels::frobenius_sq(xc) == 0.0 || kernels::frobenius_sq(yc) == 0.0) {
        throw Error(ErrorKind::UndefinedSimilarity, "cka: zero-variance representation");
    }
    double cross = 0.0;
    double xx = 0.0;
    double yy = 0.0;
    const bool use_gram = x.rows() < std::max(x.cols(), y.cols());
    if (use_gram) {
        // Same quantities through n x n Gram matrices: ||Y^T X||^2 = <XX^T, YY^T>.
        const Matrix kx = kernels::cross_product(transpose(xc), transpose(xc));
        const Matrix ky = kernels::cross_product(transpose(yc), transpose(yc));
        const auto a = kx.values();
        const auto b = ky.values();
        for (std::size_t i = 0; i < a.size(); ++i) {
            cross += a[i] * b[i];
        }
        xx = std::sqrt(kernels::frobenius_sq(kx));
        yy = std::sqrt(kernels::frobenius_sq(ky));
    } else {
        cross = kernels::frobenius_sq(kernels::cross_product(yc, xc));
        xx = std::sqrt(kernels::frobenius_sq(kernels::cross_product(xc, xc)));
        yy = std::sqrt(kernels::frobenius_sq(kernels::cross_product(yc, yc)));
    }
    return std::clamp(cross / (xx * yy), 0.0, 1.0);
}

PcaResult pca_project(const Matrix& x, std::size_t k, const PcaOptions& options) {
    const std::size_t d = x.cols();
    if (k < 1 || k > d) {
        throw Error(ErrorKind::InvalidArgument, "pca: k must lie in [1, dims]");
    }
    if (x.rows() <= k) {
        throw Error(ErrorKind::InvalidArgument, "pca: need more rows than components");
    }
    const Matrix xc = kernels::center_columns(x);
    Matrix cov = kernels::cross_product(xc, xc);
    const double scale = 1.0 / static_cast<double>(x.rows() - 1);
    for (double& v : cov.values()) {
        v *= scale;
    }
    double trace = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        trace += cov(i, i);
    }
    if (!(trace > 0.0)) {
        throw Error(ErrorKind::UndefinedSimilarity, "pca: zero-variance matrix");
    }

    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> gauss;
    std::vector<std::vector<double>> basis;
    std::vector<double> eigenvalues;
    Matrix deflated = cov;
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<double> v(d);
        for (double& e : v) {
            e = gauss(rng);
        }
        orthogonalize(v, basis);
        normalize(v);
        for (std::size_t it = 0; it < options.max_iterations; ++it) {
            auto w = symmetric_apply(deflated, v);
            orthogonalize(w, basis);
            const double n = norm(w);
            if (n <= trace * 1e-300 || !std::isfinite(n)) {
                break;  // remaining spectrum is zero; keep the orthogonal start vector
            }
            for (double& e : w) {
                e /= n;
            }
            orient(w);
            double diff = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                diff = std::max(diff, std::abs(w[i] - v[i]));
            }
            v = std::move(w);
            if (diff < options.tolerance) {
                break;
            }
        }
        orient(v);
        const auto cv = symmetric_apply(cov, v);
        const double lambda = std::max(0.0, dot(v, cv));
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                deflated(i, j) -= lambda * v[i] * v[j];
            }
        }
        basis.push_back(v);
        eigenvalues.push_back(lambda);
    }

    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return eigenvalues[a] > eigenvalues[b]; });

    PcaResult out;
    out.components = Matrix(k, d);
    for (std::size_t c = 0; c < k; ++c) {
        const auto& v = basis[order[c]];
        std::copy(v.begin(), v.end(), out.components.row(c).begin());
        out.eigenvalues.push_back(eigenvalues[order[c]]);
        out.explained_ratio.push_back(eigenvalues[order[c]] / trace);
    }
    out.projection = Matrix(x.rows(), k);
    for (std::size_t c = 0; c < k; ++c) {
        const auto proj = kernels::matvec(xc, out.components.row(c));
        for (std::size_t r = 0; r < x.rows(); ++r) {
            out.projection(r, c) = proj[r];
        }
    }
    return out;
}

LensBins logit_lens_bins(const std::map<int, double>& digit_probs, double low_hi, double mid_hi) {
    if (!(low_hi >= 0.0 && low_hi <= mid_hi && mid_hi <= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "logit lens edges must satisfy 0 <= low <= mid <= 1");
    }
    // Digits are compared in tenths to avoid rounding at the edges.
    const double low_tenths = std::round(low_hi * 1e9) / 1e8;
    const double mid_tenths = std::round(mid_hi * 1e9) / 1e8;
    LensBins bins;
    for (const auto& [digit, p] : digit_probs) {
        if (digit < 0 || digit > 10) {
            throw Error(ErrorKind::InvalidArgument, "logit lens digit outside 0-10");
        }
        const double d = static_cast<double>(digit);
        if (d <= low_tenths) {
            bins.low += p;
        } else if (d <= mid_tenths) {
            bins.mid += p;
        } else {
            bins.high += p;
        }
    }
    return bins;
}

double frobenius_drift(const Matrix& w_base, const Matrix& w_cal) {
    if (w_base.rows() != w_cal.rows() || w_base.cols() != w_cal.cols()) {
        throw Error(ErrorKind::ShapeError, "drift: shapes differ");
    }
    const double base = kernels::frobenius_sq(w_base);
    if (base == 0.0) {
        throw Error(ErrorKind::UndefinedSimilarity, "drift: base matrix has zero norm");
    }
    Matrix diff(w_base.rows(), w_base.cols());
    const auto a = w_base.values();
    const auto b = w_cal.values();
    auto out = diff.values();
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = b[i] - a[i];
    }
    return std::sqrt(kernels::frobenius_sq(diff) / base);
}

DriftReport embedding_drift_report(std::span<const std::size_t> interest_rows,
                                   std::span<const std::size_t> baseline_rows, const Matrix& w_base,
                                   const Matrix& w_cal) {
    if (w_base.rows() != w_cal.rows() || w_base.cols() != w_cal.cols()) {
        throw Error(ErrorKind::ShapeError, "drift: shapes differ");
    }
    if (interest_rows.empty() || baseline_rows.empty()) {
        throw Error(ErrorKind::InvalidArgument, "drift: row sets must be nonempty");
    }
    const std::set<std::size_t> interest(interest_rows.begin(), interest_rows.end());
    for (std::size_t r : baseline_rows) {
        if (interest.contains(r)) {
            throw Error(ErrorKind::InvalidArgument, "drift: row sets overlap");
        }
    }
    auto mean_drift = [&](std::span<const std::size_t> rows) {
        double sum = 0.0;
        for (std::size_t r : rows) {
            if (r >= w_base.rows()) {
                throw Error(ErrorKind::InvalidArgument, "drift: row index out of range");
            }
            const auto a = w_base.row(r);
            const auto b = w_cal.row(r);
            double base = 0.0;
            double delta = 0.0;
            for (std::size_t c = 0; c < a.size(); ++c) {
                base += a[c] * a[c];
                delta += (b[c] - a[c]) * (b[c] - a[c]);
            }
            if (base == 0.0) {
                throw Error(ErrorKind::UndefinedSimilarity, "drift: row " + std::to_string(r) + " has zero norm");
            }
            sum += std::sqrt(delta / base);
        }
        return sum / static_cast<double>(rows.size());
    };
    DriftReport report;
    report.interest_mean_drift = mean_drift(interest_rows);
    report.baseline_mean_drift = mean_drift(baseline_rows);
    if (report.baseline_mean_drift > 0.0) {
        report.ratio = report.interest_mean_drift / report.baseline_mean_drift;
    } else if (report.interest_mean_drift > 0.0) {
        report.ratio = std::numeric_limits<double>::infinity();
    }
    return report;
}

TokenDistPair dist_pair_from_json(const json& j) {
    TokenDistPair p;
    p.position = j.at("position").get<std::size_t>();
    p.base_probs = j.at("base_probs").get<std::vector<double>>();
    p.calibrated_probs = j.at("calibrated_probs").get<std::vector<double>>();
    p.validate();
    return p;
}

TokenAnnotation annotation_from_json(const json& j) {
    return {j.at("position").get<std::size_t>(), token_type_from_string(j.at("type").get<std::string>())};
}

json to_json(const KlByType& table) {
    json types = json::object();
    for (const auto& [type, s] : table.by_type) {
        types[to_string(type)] = {{"count", s.count},
                                  {"total_kl", s.total_kl},
                                  {"mean_kl", optional_json(s.mean_kl)},
                                  {"mass_fraction", optional_json(s.mass_fraction)}};
    }
    return {{"positions", table.positions}, {"total_kl", table.total_kl}, {"types", types}};
}

json to_json(const PcaResult& result) {
    json comps = json::array();
    for (std::size_t c = 0; c < result.components.rows(); ++c) {
        const auto r = result.components.row(c);
        comps.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return {{"components", comps}, {"eigenvalues", result.eigenvalues}, {"explained_ratio", result.explained_ratio}};
}

json to_json(const DriftReport& report) {
    json ratio = nullptr;
    if (report.ratio) {
        ratio = std::isinf(*report.ratio) ? json("+inf") : json(*report.ratio);
    }
    return {{"interest_mean_drift", report.interest_mean_drift},
            {"baseline_mean_drift", report.baseline_mean_drift},
            {"ratio", ratio}};
}

json to_json(const LensBins& bins) { return {{"low", bins.low}, {"mid", bins.mid}, {"high", bins.high}}; }

std::string kl_csv(const KlByType& table) {
    std::string out = "type,count,mean_kl,mass_fraction\n";
    char buf[96];
    auto cell = [&](const std::optional<double>& v) {
        if (!v) {
            return std::string();
        }
        std::snprintf(buf, sizeof buf, "%.17g", *v);
        return std::string(buf);
    };
    for (const auto& [type, s] : table.by_type) {
        out += to_string(type) + "," + std::to_string(s.count) + "," + cell(s.mean_kl) + "," +
               cell(s.mass_fraction) + "\n";
    }
    return out;
}

std::string projection_csv(const PcaResult& result, std::span<const std::string> row_ids) {
    std::string out = "row_id";
    const std::size_t k = result.projection.cols();
    for (std::size_t c = 0; c < k; ++c) {
        out += ",pc" + std::to_string(c + 1);
    }
    out += "\n";
    char buf[32];
    for (std::size_t r = 0; r < result.projection.rows(); ++r) {
        out += r < row_ids.size() ? row_ids[r] : std::to_string(r);
        for (std::size_t c = 0; c < k; ++c) {
            std::snprintf(buf, sizeof buf, ",%.17g", result.projection(r, c));
            out += buf;
        }
        out += "\n";
    }
    return out;
}

}  // namespace uncal::repr
