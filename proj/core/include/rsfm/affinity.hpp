#pragma once

#include "rsfm/rigidity.hpp"
#include "rsfm/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace rsfm {

/// Complete N-frame, M-landmark observation table: every landmark is visible
/// in every frame and entry (f, p) is landmark p's pixel position in frame f.
struct TrackSet {
    int n_frames = 0;
    int n_points = 0;
    std::vector<Vec2> obs;  // row-major, frame f landmark p at f * n_points + p

    const Vec2& at(int frame, int point) const {
        return obs[static_cast<std::size_t>(frame) * static_cast<std::size_t>(n_points) +
                   static_cast<std::size_t>(point)];
    }
    Vec2& at(int frame, int point) {
        return obs[static_cast<std::size_t>(frame) * static_cast<std::size_t>(n_points) +
                   static_cast<std::size_t>(point)];
    }
    void validate() const;  // finite entries, N >= 2, M >= 8, size consistent
};

struct AffinityMatrix {
    Eigen::MatrixXd a;  // N x N, symmetric, unit diagonal, entries in [0,1]
    std::uint64_t params_digest = 0;
};

struct PairDiagnostic {
    int i = 0;
    int j = 0;
    std::string message;
};

struct AffinityBuildResult {
    AffinityMatrix affinity;
    Eigen::MatrixXd p_f;  // per-pair epipolar scores, same layout as a
    Eigen::MatrixXd p_h;  // per-pair homography scores
    std::vector<PairDiagnostic> failures;  // pairs recorded as 0 due to errors
};

/// Landmark-order-preserving pairing of frame i's and frame j's observations.
CorrespondenceSet correspondences_between(const TrackSet& tracks, int i, int j);

/// Run the rigidity test over every unordered frame pair. Each pair draws its
/// randomness from (params.rng_seed, i, j), so the result is independent of
/// evaluation order and of n_workers. Per-pair failures score 0 and land in
/// the diagnostics list instead of aborting the build.
AffinityBuildResult build_affinity(const TrackSet& tracks, const RigidityParams& params,
                                   int n_workers = 1);

/// Stable 64-bit FNV-1a digest of every parameter that affects scores.
std::uint64_t params_digest(const RigidityParams& params);

/// Re-check the AffinityMatrix invariants (symmetry, unit diagonal, range);
/// throws std::invalid_argument naming the first violation.
void validate_affinity(const Eigen::MatrixXd& a);

}  // namespace rsfm
