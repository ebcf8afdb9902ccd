#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "doctest.h"
#include "synthetic.hpp"
#include "uncal/error.hpp"
#include "uncal/repr.hpp"

using namespace uncal;
using namespace uncal::repr;

namespace {

Matrix from_eigen(const Eigen::MatrixXd& m) {
    Matrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            out(r, c) = m(r, c);
        }
    }
    return out;
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            out(r, c) = m(r, c);
        }
    }
    return out;
}

Eigen::MatrixXd random_orthogonal(std::mt19937_64& rng, std::size_t d) {
    const auto g = to_eigen(testing::gaussian_matrix(rng, d, d));
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    return qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
}

TokenDistPair pair_at(std::size_t pos, std::vector<double> base, std::vector<double> cal) {
    return {pos, std::move(base), std::move(cal)};
}

template <typename F>
void expect_kind(ErrorKind kind, F&& fn) {
    try {
        fn();
        FAIL("expected " << to_string(kind));
    } catch (const Error& e) {
        CHECK(e.kind() == kind);
    }
}

}  // namespace

TEST_CASE("kl basics") {
    const std::vector<double> p{0.2, 0.3, 0.5};
    CHECK(kl(p, p) <= 1e-9);
    CHECK(kl(p, p, 0.0) == 0.0);
    CHECK(kl(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5}, 0.0) == doctest::Approx(std::log(2.0)));
    const double big = kl(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0});
    CHECK(std::isfinite(big));
    CHECK(big > 5.0);
    expect_kind(ErrorKind::ShapeError, [] { kl(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}); });
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> a(5);
        std::vector<double> b(5);
        double sa = 0;
        double sb = 0;
        for (int i = 0; i < 5; ++i) {
            a[i] = unit(rng);
            b[i] = unit(rng);
            sa += a[i];
            sb += b[i];
        }
        for (int i = 0; i < 5; ++i) {
            a[i] /= sa;
            b[i] /= sb;
        }
        CHECK(kl(a, b) >= 0.0);
    }
}

TEST_CASE("kl by type") {
    const std::vector<double> u{0.5, 0.5};
    const std::vector<double> s{0.9, 0.1};
    const std::vector<double> t{0.1, 0.9};
    // Equal KL at every position: fractions follow position counts.
    std::vector<TokenDistPair> pairs;
    std::vector<TokenAnnotation> ann;
    for (std::size_t i = 0; i < 4; ++i) {
        pairs.push_back(pair_at(i, u, i % 2 ? s : t));
        ann.push_back({i, i < 3 ? TokenType::ReasoningToken : TokenType::ConfidenceDigit});
    }
    auto table = kl_by_type(pairs, ann);
    CHECK(table.by_type[TokenType::ReasoningToken].mass_fraction == doctest::Approx(0.75));
    CHECK(table.by_type[TokenType::ConfidenceDigit].mass_fraction == doctest::Approx(0.25));
    CHECK_FALSE(table.by_type[TokenType::Other].mean_kl.has_value());

    // Only confidence digits change.
    pairs.clear();
    for (std::size_t i = 0; i < 4; ++i) {
        pairs.push_back(pair_at(i, u, i == 3 ? s : u));
    }
    table = kl_by_type(pairs, ann);
    CHECK(table.by_type[TokenType::ConfidenceDigit].mass_fraction == 1.0);
    CHECK(table.by_type[TokenType::ReasoningToken].mass_fraction == 0.0);

    // Five positions with hand KLs (epsilon 0): ln2 at 0 and 1, 0 at 2, ln2 at 3 and 4.
    const std::vector<double> one{1.0, 0.0};
    std::vector<TokenDistPair> five{pair_at(0, u, one), pair_at(1, u, one), pair_at(2, u, u), pair_at(3, u, one),
                                    pair_at(4, u, one)};
    std::vector<TokenAnnotation> five_ann{{0, TokenType::UncertaintyToken},
                                          {1, TokenType::NearbyContext},
                                          {2, TokenType::NearbyContext},
                                          {3, TokenType::ReasoningToken},
                                          {4, TokenType::ReasoningToken}};
    table = kl_by_type(five, five_ann, 0.0);
    CHECK(table.total_kl == doctest::Approx(4 * std::log(2.0)));
    CHECK(table.by_type[TokenType::UncertaintyToken].mass_fraction == doctest::Approx(0.25));
    CHECK(table.by_type[TokenType::NearbyContext].mass_fraction == doctest::Approx(0.25));
    CHECK(table.by_type[TokenType::NearbyContext].mean_kl == doctest::Approx(std::log(2.0) / 2));
    CHECK(table.by_type[TokenType::ReasoningToken].mass_fraction == doctest::Approx(0.5));
    double sum = 0;
    for (const auto& [type, st] : table.by_type) {
        sum += st.mass_fraction.value_or(0.0);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);

    std::vector<TokenAnnotation> missing(five_ann.begin(), five_ann.begin() + 4);
    CHECK_THROWS_AS(kl_by_type(five, missing), Error);
}

TEST_CASE("default annotator") {
    const std::vector<std::string> tokens{"We", "need", "the", "city", "<uncertain>", "maybe", "Paris",
                                          "a",  "b",    "c",   "d",    "e",           "f",     "Answer:",
                                          "Paris", "Confidence", ":", "0", ".", "8"};
    const auto ann = default_annotations(tokens, 2);
    CHECK(ann[0].type == TokenType::ReasoningToken);
    CHECK(ann[2].type == TokenType::NearbyContext);
    CHECK(ann[4].type == TokenType::UncertaintyToken);
    CHECK(ann[6].type == TokenType::NearbyContext);
    CHECK(ann[7].type == TokenType::ReasoningToken);
    CHECK(ann[13].type == TokenType::StructuralLabel);
    CHECK(ann[14].type == TokenType::Other);
    CHECK(ann[15].type == TokenType::StructuralLabel);
    CHECK(ann[16].type == TokenType::StructuralLabel);
    CHECK(ann[17].type == TokenType::ConfidenceDigit);
    CHECK(ann[19].type == TokenType::ConfidenceDigit);
}

TEST_CASE("linear CKA identities") {
    std::mt19937_64 rng(8);
    const auto x = testing::gaussian_matrix(rng, 50, 6);
    CHECK(linear_cka(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    const auto y = testing::gaussian_matrix(rng, 50, 4);
    CHECK(std::abs(linear_cka(x, y) - linear_cka(y, x)) <= 1e-10);
    for (int t = 0; t < 5; ++t) {
        const auto q = random_orthogonal(rng, 6);
        const double s = 0.1 + 10.0 * std::uniform_real_distribution<double>(0, 1)(rng);
        const auto xq = from_eigen(s * to_eigen(x) * q);
        CHECK(std::abs(linear_cka(x, xq) - 1.0) <= 1e-8);
        CHECK(std::abs(linear_cka(xq, y) - linear_cka(x, y)) <= 1e-8);
    }
    const auto a = testing::gaussian_matrix(rng, 100, 10);
    const auto b = testing::gaussian_matrix(rng, 100, 10);
    CHECK(linear_cka(a, b) < 0.3);
    // Gram form: fewer rows than dimensions.
    const auto wide = testing::gaussian_matrix(rng, 8, 12);
    const auto wide2 = testing::gaussian_matrix(rng, 8, 12);
    const double direct = linear_cka(wide, wide2);
    CHECK(direct >= 0.0);
    CHECK(direct <= 1.0);
    expect_kind(ErrorKind::UndefinedSimilarity, [&] { linear_cka(Matrix(50, 3, 1.0), x); });
    expect_kind(ErrorKind::ShapeError, [&] { linear_cka(Matrix(5, 3), x); });
}

TEST_CASE("pca") {
    // Points on a line through (1,2,3).
    Matrix line(20, 3);
    for (std::size_t i = 0; i < 20; ++i) {
        const double t = static_cast<double>(i) - 7.3;
        line(i, 0) = 1.0 * t + 4.0;
        line(i, 1) = 2.0 * t - 1.0;
        line(i, 2) = 3.0 * t;
    }
    const auto r = pca_project(line, 2);
    CHECK(std::abs(r.explained_ratio[0] - 1.0) <= 1e-8);
    CHECK(r.components(0, 2) > 0.0);

    // 2-D hand fixture: covariance [[2,1],[1,2]] has eigenvalues 3 and 1,
    // eigenvectors (1,1)/sqrt2 and (1,-1)/sqrt2 (largest entry positive).
    const double a = std::sqrt(2.25);
    const double b = std::sqrt(0.75);
    Matrix hand(4, 2);
    hand(0, 0) = a; hand(0, 1) = a;
    hand(1, 0) = -a; hand(1, 1) = -a;
    hand(2, 0) = b; hand(2, 1) = -b;
    hand(3, 0) = -b; hand(3, 1) = b;
    const auto h = pca_project(hand, 1);
    CHECK(std::abs(h.eigenvalues[0] - 3.0) <= 1e-10);
    CHECK(std::abs(h.components(0, 0) - std::sqrt(0.5)) <= 1e-10);
    CHECK(std::abs(h.components(0, 1) - std::sqrt(0.5)) <= 1e-10);
    CHECK(std::abs(h.explained_ratio[0] - 0.75) <= 1e-10);

    std::mt19937_64 rng(1);
    const auto iso = testing::gaussian_matrix(rng, 5000, 4);
    const auto ri = pca_project(iso, 4);
    double total = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(std::abs(ri.explained_ratio[i] - 0.25) <= 0.05);
        if (i > 0) {
            CHECK(ri.explained_ratio[i] <= ri.explained_ratio[i - 1]);
        }
        total += ri.explained_ratio[i];
    }
    CHECK(total <= 1.0 + 1e-9);
    expect_kind(ErrorKind::UndefinedSimilarity, [] { pca_project(Matrix(5, 2, 3.0), 1); });
    CHECK_THROWS_AS(pca_project(hand, 3), Error);
}

TEST_CASE("logit lens bins") {
    std::map<int, double> nine{{9, 0.7}};
    auto b = logit_lens_bins(nine);
    CHECK(b.high == 0.7);
    CHECK(b.low == 0.0);
    std::map<int, double> uniform;
    for (int d = 0; d <= 10; ++d) {
        uniform[d] = 1.0 / 11.0;
    }
    b = logit_lens_bins(uniform, 0.3, 0.7);
    CHECK(b.low == doctest::Approx(4.0 / 11.0));
    CHECK(b.mid == doctest::Approx(4.0 / 11.0));
    CHECK(b.high == doctest::Approx(3.0 / 11.0));
    std::map<int, double> zeros;
    for (int d = 0; d <= 10; ++d) {
        zeros[d] = 0.0;
    }
    b = logit_lens_bins(zeros);
    CHECK(b.low + b.mid + b.high == 0.0);
}

TEST_CASE("frobenius drift") {
    Matrix w(2, 2);
    w(0, 0) = 1; w(0, 1) = 2; w(1, 0) = 2; w(1, 1) = 4;
    CHECK(frobenius_drift(w, w) == 0.0);
    Matrix w2 = w;
    for (auto& v : w2.values()) {
        v *= 2.0;
    }
    CHECK(frobenius_drift(w, w2) == doctest::Approx(1.0));
    Matrix w3 = w;
    w3(1, 1) = 7;  // diff norm 3, base norm 5
    CHECK(frobenius_drift(w, w3) == doctest::Approx(0.6));
    expect_kind(ErrorKind::ShapeError, [&] { frobenius_drift(w, Matrix(3, 2)); });
    expect_kind(ErrorKind::UndefinedSimilarity, [&] { frobenius_drift(Matrix(2, 2), w); });
}

TEST_CASE("embedding drift report") {
    Matrix base(4, 2, 1.0);
    const std::vector<std::size_t> interest{0, 1};
    const std::vector<std::size_t> baseline{2, 3};
    auto rep = embedding_drift_report(interest, baseline, base, base);
    CHECK_FALSE(rep.ratio.has_value());
    Matrix cal = base;
    cal(0, 0) = 2.0;
    rep = embedding_drift_report(interest, baseline, base, cal);
    CHECK(rep.ratio.has_value());
    CHECK(std::isinf(*rep.ratio));
    CHECK(to_json(rep)["ratio"] == "+inf");
    // Planted: interest rows scaled by 1.3, baseline rows by 1.1 -> ratio 3.
    Matrix planted = base;
    for (std::size_t c = 0; c < 2; ++c) {
        planted(0, c) = 1.3;
        planted(1, c) = 1.3;
        planted(2, c) = 1.1;
        planted(3, c) = 1.1;
    }
    rep = embedding_drift_report(interest, baseline, base, planted);
    CHECK(std::abs(*rep.ratio - 3.0) <= 1e-10);
    CHECK_THROWS_AS(embedding_drift_report(interest, interest, base, cal), Error);
    CHECK_THROWS_AS(embedding_drift_report({}, baseline, base, cal), Error);
}
