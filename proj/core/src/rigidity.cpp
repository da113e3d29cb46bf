#include "rsfm/rigidity.hpp"

#include "rsfm/geometry.hpp"
#include "rsfm/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsfm {
namespace {

constexpr std::uint64_t kFundamentalStream = 0x8a7c3b2f90e15d41ull;
constexpr std::uint64_t kHomographyStream = 0x1f2e3d4c5b6a7988ull;

double aggregate(std::vector<double>& log_scores, const RigidityParams& params) {
    if (params.aggregation == Aggregation::kStrictMin)
        return *std::min_element(log_scores.begin(), log_scores.end());
    // Lower empirical quantile, floor index, no interpolation: deterministic
    // and coincides with the strict minimum as q -> 0.
    std::sort(log_scores.begin(), log_scores.end());
    const auto n = log_scores.size();
    auto idx = static_cast<std::size_t>(params.quantile * static_cast<double>(n));
    if (idx >= n) idx = n - 1;
    return log_scores[idx];
}

/// Sum over all M correspondences of -d^2/sigma^2 for one fitted model.
template <typename Model, typename DistanceFn>
double log_kernel_product(const Model& model, const CorrespondenceSet& corrs,
                          double sigma, DistanceFn&& distance) {
    double acc = 0.0;
    const double inv_s2 = 1.0 / (sigma * sigma);
    for (std::size_t i = 0; i < corrs.size(); ++i) {
        const double d = distance(model, corrs.x[i], corrs.x_prime[i]);
        acc -= d * d * inv_s2;
    }
    return acc;
}

template <int kSubset, typename FitFn, typename ScoreFn>
ScoreStats subset_score(const CorrespondenceSet& corrs, const RigidityParams& params,
                        int n_samples, std::uint64_t stream, FitFn&& fit,
                        ScoreFn&& score) {
    const auto m = corrs.size();
    std::array<Vec2, kSubset> sx, sxp;
    std::vector<double> log_scores;
    ScoreStats stats;

    auto try_sample = [&](const std::array<int, kSubset>& idx) {
        for (int s = 0; s < kSubset; ++s) {
            sx[static_cast<std::size_t>(s)] = corrs.x[static_cast<std::size_t>(idx[static_cast<std::size_t>(s)])];
            sxp[static_cast<std::size_t>(s)] = corrs.x_prime[static_cast<std::size_t>(idx[static_cast<std::size_t>(s)])];
        }
        const auto model = fit(sx, sxp);
        if (!model) {
            ++stats.n_degenerate;
            return;
        }
        log_scores.push_back(score(*model));
        ++stats.n_samples_used;
    };

    if (params.sampling_mode == SamplingMode::kExhaustive) {
        const std::uint64_t total = binomial(static_cast<int>(m), kSubset);
        if (total > params.exhaustive_cap)
            throw std::invalid_argument(
                "exhaustive enumeration of " + std::to_string(total) +
                " subsets exceeds the cap of " + std::to_string(params.exhaustive_cap) +
                "; use randomized sampling");
        std::array<int, kSubset> idx;
        std::iota(idx.begin(), idx.end(), 0);
        while (true) {
            try_sample(idx);
            int i = kSubset - 1;
            while (i >= 0 && idx[static_cast<std::size_t>(i)] == static_cast<int>(m) - kSubset + i) --i;
            if (i < 0) break;
            ++idx[static_cast<std::size_t>(i)];
            for (int j = i + 1; j < kSubset; ++j)
                idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
        }
    } else {
        Rng rng(mix_seed(params.rng_seed, stream));
        std::array<int, kSubset> idx;
        // Degenerate draws are retried; give up after a 10x attempt budget.
        const long max_attempts = 10L * n_samples;
        for (long attempt = 0; attempt < max_attempts && stats.n_samples_used < n_samples;
             ++attempt) {
            rng.sample_distinct(static_cast<int>(m), kSubset, idx.data());
            // Canonical index order: the fit for a subset must not depend on
            // the order it was drawn in, so min-aggregation over randomized
            // samples is bit-comparable with exhaustive enumeration.
            std::sort(idx.begin(), idx.end());
            try_sample(idx);
        }
    }

    if (log_scores.empty())
        throw NoValidSampleError("all " + std::to_string(kSubset) +
                                 "-point samples were degenerate");

    stats.log_p = aggregate(log_scores, params);
    stats.p = std::exp(stats.log_p);
    return stats;
}

}  // namespace

void RigidityParams::validate() const {
    if (!(sigma_f > 0.0) || !(sigma_h > 0.0))
        throw std::invalid_argument("rigidity params: kernel widths must be positive");
    for (const auto& tau : {tau_f, tau_h})
        if (tau && !(*tau >= 0.0 && *tau <= 1.0))
            throw std::invalid_argument("rigidity params: tau outside [0,1]");
    if (n_samples_f < 1 || n_samples_h < 1)
        throw std::invalid_argument("rigidity params: sample counts must be positive");
    if (aggregation == Aggregation::kQuantile && !(quantile > 0.0 && quantile <= 0.5))
        throw std::invalid_argument("rigidity params: quantile must lie in (0, 0.5]");
}

ScoreStats fundamental_score(const CorrespondenceSet& corrs, const RigidityParams& params) {
    params.validate();
    if (corrs.size() < 8)
        throw std::invalid_argument("fundamental_score: needs at least 8 correspondences");

    return subset_score<8>(
        corrs, params, params.n_samples_f, kFundamentalStream,
        [](std::span<const Vec2> x, std::span<const Vec2> xp) {
            return fit_fundamental_8pt(x, xp);
        },
        [&](const FundamentalMatrix& f) {
            return log_kernel_product(f, corrs, params.sigma_f,
                                      [&](const FundamentalMatrix& m, const Vec2& a,
                                          const Vec2& b) {
                                          return params.symmetric_epipolar
                                                     ? symmetric_epipolar_distance(m, a, b)
                                                     : epipolar_distance(m, a, b);
                                      });
        });
}

ScoreStats homography_score(const CorrespondenceSet& corrs, const RigidityParams& params) {
    params.validate();
    if (corrs.size() < 4)
        throw std::invalid_argument("homography_score: needs at least 4 correspondences");

    return subset_score<4>(
        corrs, params, params.n_samples_h, kHomographyStream,
        [](std::span<const Vec2> x, std::span<const Vec2> xp) {
            return fit_homography_4pt(x, xp);
        },
        [&](const Homography& h) {
            return log_kernel_product(
                h, corrs, params.sigma_h,
                [](const Homography& m, const Vec2& a, const Vec2& b) {
                    return homography_distance(m, a, b);
                });
        });
}

RigidityScore modified_epipolar_test(const CorrespondenceSet& corrs,
                                     const RigidityParams& params) {
    params.validate();
    if (corrs.size() < 8)
        throw std::invalid_argument("modified_epipolar_test: needs at least 8 correspondences");

    const Thresholds taus = default_thresholds(static_cast<int>(corrs.size()), params);
    RigidityScore out;
    out.tau_f = params.tau_f.value_or(taus.tau_f);
    out.tau_h = params.tau_h.value_or(taus.tau_h);

    // Threshold comparisons run in the log domain: linear probabilities
    // underflow for residuals a few kernel widths out, long before the log
    // scores lose meaning. Default log thresholds come from the closed form
    // rather than log(exp(.)) so they survive even when tau itself rounds
    // to zero.
    const int m = static_cast<int>(corrs.size());
    const double rf = params.target_rms_f.value_or(0.75 * params.sigma_f);
    const double rh = params.target_rms_h.value_or(0.75 * params.sigma_h);
    const double log_tau_f =
        params.tau_f ? std::log(*params.tau_f) : -m * rf * rf / (params.sigma_f * params.sigma_f);
    const double log_tau_h =
        params.tau_h ? std::log(*params.tau_h) : -m * rh * rh / (params.sigma_h * params.sigma_h);

    double log_pf = -std::numeric_limits<double>::infinity();
    double log_ph = 0.0;
    try {
        const ScoreStats f = fundamental_score(corrs, params);
        out.p_f = f.p;
        log_pf = f.log_p;
        out.n_samples_used_f = f.n_samples_used;
        out.n_degenerate_skipped += f.n_degenerate;
    } catch (const NoValidSampleError&) {
        // No 8-subset pins down an F: planar scene or zero baseline. No
        // epipolar evidence of rigidity exists, so the pair is rejected.
        out.fundamental_degenerate = true;
        out.p_f = 0.0;
    }

    try {
        const ScoreStats h = homography_score(corrs, params);
        out.p_h = h.p;
        log_ph = h.log_p;
        out.n_samples_used_h = h.n_samples_used;
        out.n_degenerate_skipped += h.n_degenerate;
    } catch (const NoValidSampleError&) {
        // Cannot rule the homography explanation out; reject conservatively.
        out.homography_degenerate = true;
        out.p_h = 1.0;
    }

    if (log_pf >= log_tau_f && log_ph < log_tau_h) out.p = out.p_f * (1.0 - out.p_h);
    return out;
}

NaiveVerdict naive_epipolar_test(const CorrespondenceSet& corrs, double tolerance_px) {
    if (corrs.size() < 8)
        throw std::invalid_argument("naive_epipolar_test: needs at least 8 correspondences");
    if (!(tolerance_px > 0.0))
        throw std::invalid_argument("naive_epipolar_test: tolerance must be positive");

    NaiveVerdict out;
    const auto f = fit_fundamental_all(corrs.x, corrs.x_prime);
    if (!f) {
        out.degenerate = true;
        out.mean_residual = std::numeric_limits<double>::infinity();
        return out;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < corrs.size(); ++i)
        acc += epipolar_distance(*f, corrs.x[i], corrs.x_prime[i]);
    out.mean_residual = acc / static_cast<double>(corrs.size());
    out.rigid = out.mean_residual < tolerance_px;
    return out;
}

int required_samples(double inlier_ratio, double confidence) {
    if (!(inlier_ratio > 0.0 && inlier_ratio < 1.0))
        throw std::invalid_argument("required_samples: inlier ratio must lie in (0,1)");
    if (!(confidence > 0.0 && confidence < 1.0))
        throw std::invalid_argument("required_samples: confidence must lie in (0,1)");

    const double k = std::log1p(-confidence) / std::log1p(-inlier_ratio);
    auto count = static_cast<int>(std::ceil(k));
    // ceil can land one too high when k is integral up to rounding; take the
    // smallest K actually satisfying 1-(1-e)^K >= p.
    while (count > 1 &&
           1.0 - std::pow(1.0 - inlier_ratio, count - 1) >= confidence)
        --count;
    while (1.0 - std::pow(1.0 - inlier_ratio, count) < confidence) ++count;
    return count;
}

Thresholds default_thresholds(int n_points, const RigidityParams& params) {
    if (n_points < 1) throw std::invalid_argument("default_thresholds: n_points < 1");
    const double rf = params.target_rms_f.value_or(0.75 * params.sigma_f);
    const double rh = params.target_rms_h.value_or(0.75 * params.sigma_h);
    Thresholds t;
    t.tau_f = std::exp(-n_points * rf * rf / (params.sigma_f * params.sigma_f));
    t.tau_h = std::exp(-n_points * rh * rh / (params.sigma_h * params.sigma_h));
    return t;
}

std::uint64_t binomial(int n, int k) {
    if (n < 0 || k < 0 || k > n) throw std::invalid_argument("binomial: need 0 <= k <= n");
    if (k > n - k) k = n - k;
    unsigned __int128 c = 1;
    for (int i = 1; i <= k; ++i) {
        c = c * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
        if (c > std::numeric_limits<std::uint64_t>::max())
            throw std::overflow_error("binomial: result exceeds 64 bits");
    }
    return static_cast<std::uint64_t>(c);
}

}  // namespace rsfm
