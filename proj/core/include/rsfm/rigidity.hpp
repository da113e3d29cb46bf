#pragma once

#include "rsfm/types.hpp"

#include <cstdint>
#include <optional>

namespace rsfm {

enum class SamplingMode { kExhaustive, kRandomized };
enum class Aggregation { kStrictMin, kQuantile };

struct RigidityParams {
    double sigma_f = 1.0;  // px, Gaussian kernel width for epipolar residuals
    double sigma_h = 2.0;  // px, kernel width for homography transfer residuals

    // Acceptance thresholds; when unset they come from default_thresholds(M).
    std::optional<double> tau_f;
    std::optional<double> tau_h;

    // Target RMS residuals behind default_thresholds; unset means 0.75 sigma.
    std::optional<double> target_rms_f;
    std::optional<double> target_rms_h;

    SamplingMode sampling_mode = SamplingMode::kRandomized;
    int n_samples_f = 200;
    int n_samples_h = 200;
    std::uint64_t rng_seed = 0;

    Aggregation aggregation = Aggregation::kQuantile;
    double quantile = 0.05;  // lower tail, only used with kQuantile

    // max(d(x', Fx), d(x, F^T x')) instead of the one-sided distance.
    bool symmetric_epipolar = false;

    // Exhaustive enumeration refuses to run past this many subsets.
    std::uint64_t exhaustive_cap = 10'000'000;

    void validate() const;  // throws std::invalid_argument
};

struct ScoreStats {
    double p = 0.0;      // aggregated probability, exp(log_p)
    double log_p = 0.0;  // aggregated log score, <= 0
    int n_samples_used = 0;
    int n_degenerate = 0;
};

struct RigidityScore {
    double p = 0.0;    // final verdict probability
    double p_f = 0.0;  // epipolar-consistency score
    double p_h = 1.0;  // homography-consistency score
    double tau_f = 0.0;  // thresholds the verdict was made with
    double tau_h = 0.0;
    int n_samples_used_f = 0;
    int n_samples_used_h = 0;
    int n_degenerate_skipped = 0;
    // Every subset of one side was degenerate. A fully degenerate epipolar
    // side (planar scene, zero baseline) means no F is identifiable and the
    // pair cannot be declared rigid; a fully degenerate homography side is
    // treated as if a homography explained the pair, which also rejects it.
    bool fundamental_degenerate = false;
    bool homography_degenerate = false;
};

struct NaiveVerdict {
    bool rigid = false;
    double mean_residual = 0.0;  // px, mean point-to-epipolar-line distance
    bool degenerate = false;     // full-set fit failed outright
};

/// Probability that some fundamental matrix explains all correspondences:
/// every sampled 8-subset is fit, scored by the product of per-point Gaussian
/// kernels exp(-d^2/sigma_f^2) over all M points (in log space), and the
/// per-sample scores are aggregated by strict minimum or a low quantile.
/// Throws NoValidSampleError when every sample is degenerate.
ScoreStats fundamental_score(const CorrespondenceSet& corrs, const RigidityParams& params);

/// Same scheme over 4-point homography fits and transfer distances.
ScoreStats homography_score(const CorrespondenceSet& corrs, const RigidityParams& params);

/// Rigidity decision: p = p_f * (1 - p_h) when p_f >= tau_f and p_h < tau_h,
/// otherwise p = 0. Fully degenerate sub-scores are folded into the verdict
/// (see RigidityScore) instead of escaping as exceptions.
RigidityScore modified_epipolar_test(const CorrespondenceSet& corrs,
                                     const RigidityParams& params);

/// Deliberately crude baseline: one least-squares F over all points, rigid
/// iff the mean epipolar distance is below tolerance. Blind to the
/// homography degeneracy, which is the point of keeping it around.
NaiveVerdict naive_epipolar_test(const CorrespondenceSet& corrs, double tolerance_px);

/// Smallest K with 1 - (1-e)^K >= p: the number of random minimal samples
/// needed to hit at least one all-inlier sample with confidence p.
int required_samples(double inlier_ratio, double confidence);

struct Thresholds {
    double tau_f = 0.0;
    double tau_h = 0.0;
};

/// tau = exp(-M r^2 / sigma^2), the score of a hypothetical model leaving an
/// RMS residual of r px on all M points. Keeps thresholds meaningful as the
/// raw M-term product shrinks with M.
Thresholds default_thresholds(int n_points, const RigidityParams& params);

/// Exact binomial coefficient; throws std::overflow_error past 64 bits.
std::uint64_t binomial(int n, int k);

}  // namespace rsfm
