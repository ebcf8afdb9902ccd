#pragma once

// Representation and distribution analytics: token-level KL by position
// type, linear CKA, PCA by power iteration, logit-lens binning and weight drift.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uncal/json_io.hpp"
#include "uncal/matrix.hpp"

namespace uncal::repr {

inline constexpr double kKlEpsilon = 1e-9;
inline constexpr std::size_t kNearbyWindow = 5;

/// sum p_i ln(p_i / q'_i) with q' = (q + eps) / (1 + n eps); 0 ln 0 = 0.
/// ShapeError on length mismatch.
double kl(std::span<const double> p, std::span<const double> q, double epsilon = kKlEpsilon);

enum class TokenType { ConfidenceDigit, StructuralLabel, ReasoningToken, UncertaintyToken, NearbyContext, Other };

inline constexpr std::array<TokenType, 6> kAllTokenTypes{TokenType::ConfidenceDigit,  TokenType::StructuralLabel,
                                                         TokenType::ReasoningToken,   TokenType::UncertaintyToken,
                                                         TokenType::NearbyContext,    TokenType::Other};

std::string to_string(TokenType type);
TokenType token_type_from_string(std::string_view text);

struct TokenAnnotation {
    std::size_t position = 0;
    TokenType type = TokenType::Other;
};

struct TokenDistPair {
    std::size_t position = 0;
    std::vector<double> base_probs;
    std::vector<double> calibrated_probs;

    /// ShapeError unless both vectors have equal length and sum to 1 within 1e-6.
    void validate() const;
    /// KL(calibrated || base), the base distribution being the smoothed reference.
    [[nodiscard]] double divergence(double epsilon = kKlEpsilon) const;
};

struct TypeStats {
    std::size_t count = 0;
    std::optional<double> mean_kl;        ///< absent when the type has no positions
    std::optional<double> mass_fraction;  ///< absent when the type has no positions or total KL is 0
    double total_kl = 0.0;
};

struct KlByType {
    std::map<TokenType, TypeStats> by_type;
    double total_kl = 0.0;
    std::size_t positions = 0;
};

/// InvalidArgument when a pair position lacks an annotation or an annotation
/// position repeats.
KlByType kl_by_type(std::span<const TokenDistPair> pairs, std::span<const TokenAnnotation> annotations,
                    double epsilon = kKlEpsilon);

/// Types tokens of one response. `<uncertain>` markers, digits after a
/// confidence label, `Answer:`/`Confidence:` labels, tokens within `window`
/// of a marker, reasoning before the first label, and everything else.
std::vector<TokenAnnotation> default_annotations(std::span<const std::string> tokens,
                                                 std::size_t window = kNearbyWindow);

/// ||Yc^T Xc||_F^2 / (||Xc^T Xc||_F ||Yc^T Yc||_F) after column centering.
/// ShapeError on row mismatch or fewer than 2 rows; UndefinedSimilarity on zero variance.
double linear_cka(const Matrix& x, const Matrix& y);

struct PcaOptions {
    std::uint64_t seed = 0x5eed;
    std::size_t max_iterations = 1000;
    double tolerance = 1e-10;
};

struct PcaResult {
    Matrix projection;                    ///< rows x k
    Matrix components;                    ///< k x dims, unit rows
    std::vector<double> eigenvalues;      ///< covariance eigenvalues, non-increasing
    std::vector<double> explained_ratio;  ///< eigenvalue / total variance
};

/// InvalidArgument unless 1 <= k <= dims and rows > k; UndefinedSimilarity on zero variance.
PcaResult pca_project(const Matrix& x, std::size_t k, const PcaOptions& options = {});

struct LensBins {
    double low = 0.0;
    double mid = 0.0;
    double high = 0.0;
};

/// Digit d on the 0-10 scale has value d/10: low when value <= low_hi,
/// mid when value <= mid_hi, high otherwise.
LensBins logit_lens_bins(const std::map<int, double>& digit_probs, double low_hi = 0.3, double mid_hi = 0.7);

/// ||w_cal - w_base||_F / ||w_base||_F. ShapeError on shape mismatch,
/// UndefinedSimilarity on a zero base norm.
double frobenius_drift(const Matrix& w_base, const Matrix& w_cal);

struct DriftReport {
    double interest_mean_drift = 0.0;
    double baseline_mean_drift = 0.0;
    std::optional<double> ratio;  ///< absent for 0/0, +inf when only the baseline is 0
};

/// Per-row relative drift averaged within each row set.
/// InvalidArgument when a set is empty, the sets overlap or an index is out of range.
DriftReport embedding_drift_report(std::span<const std::size_t> interest_rows,
                                   std::span<const std::size_t> baseline_rows, const Matrix& w_base,
                                   const Matrix& w_cal);

TokenDistPair dist_pair_from_json(const json& j);
TokenAnnotation annotation_from_json(const json& j);

json to_json(const KlByType& table);
json to_json(const PcaResult& result);
json to_json(const DriftReport& report);
json to_json(const LensBins& bins);

/// type,count,mean_kl,mass_fraction
std::string kl_csv(const KlByType& table);
/// pc1,...,pck per row
std::string projection_csv(const PcaResult& result, std::span<const std::string> row_ids);

}  // namespace uncal::repr
