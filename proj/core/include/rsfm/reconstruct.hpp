#pragma once

#include "rsfm/affinity.hpp"
#include "rsfm/rigidity.hpp"
#include "rsfm/types.hpp"

#include <Eigen/Core>

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rsfm {

struct BundleConfig {
    int max_iterations = 50;
    double initial_damping = 1e-4;
    double convergence_tol = 1e-10;  // relative cost decrease on an accepted step
    double huber_delta = 1.0;        // px

    void validate() const;
};

struct ReconstructConfig {
    // Drives in-cluster pair scoring for seed selection; per-pair seeds are
    // derived from (rng_seed, frame i, frame j) exactly as in build_affinity,
    // so a cluster reconstructs identically with or without a prebuilt
    // affinity matrix at hand.
    RigidityParams rigidity;
    BundleConfig bundle;
    int seed_retry_cap = 5;          // candidate seed pairs to try
    double min_cheirality_fraction = 0.75;  // seed acceptance bar
};

struct ClusterReconstruction {
    int cluster_id = -1;
    std::vector<Vec3> shape;          // M landmarks, seed-pair gauge
    std::map<int, CameraPose> poses;  // registered frame -> pose
    std::map<int, double> frame_reproj;  // per-frame mean residual, px
    double mean_reproj_error = 0.0;      // over all registered observations
    bool success = false;
    std::string failure;              // populated when success is false
    std::vector<int> dropped_frames;  // frames whose registration failed
    std::vector<int> cheirality_violations;  // landmark ids, see below
    bool scale_normalized = false;    // set by normalize_scale
    int seed_i = -1;
    int seed_j = -1;
};

struct BundleResult {
    double initial_cost = 0.0;
    double final_cost = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// The in-cluster pair maximizing a(i,j) * (1 - p_h(i,j)): strongest rigidity
/// evidence with the least homography ambiguity. Ties break to the smaller
/// (i, j). Throws DegenerateError for clusters of fewer than 2 frames.
std::pair<int, int> select_seed_pair(std::span<const int> frames,
                                     const Eigen::MatrixXd& affinity,
                                     const Eigen::MatrixXd& p_h);

/// Incremental rigid reconstruction of one cluster: two-view initialization
/// from the best seed pair (F, then E, then the cheirality-best decomposition,
/// then triangulation), PnP registration of the remaining frames in
/// descending affinity-to-seed order with bundle adjustment after each
/// addition, and a final gauge fix (seed camera at identity, unit seed
/// baseline). Frames failing PnP are dropped, not fatal; seed failures fall
/// through to the next candidate pair up to config.seed_retry_cap.
ClusterReconstruction reconstruct_cluster(const TrackSet& tracks,
                                          std::span<const int> frames,
                                          const CameraIntrinsics& k,
                                          const ReconstructConfig& config,
                                          int cluster_id = 0);

/// Stacked reprojection residuals (2 per observation) for the given frames,
/// ordered frame-major then landmark-major then (x, y).
Eigen::VectorXd ba_residuals(const std::vector<Vec3>& structure,
                             const std::vector<CameraPose>& poses,
                             const TrackSet& tracks, std::span<const int> frames,
                             const CameraIntrinsics& k);

/// Dense analytic Jacobian of ba_residuals. Parameter layout: 6 per pose for
/// every frame except frames[0] (which is gauge-fixed), as (w, dt) with the
/// rotation updated by R <- exp([w]x) R, followed by 3 per landmark.
Eigen::MatrixXd ba_jacobian(const std::vector<Vec3>& structure,
                            const std::vector<CameraPose>& poses,
                            const TrackSet& tracks, std::span<const int> frames,
                            const CameraIntrinsics& k);

/// Levenberg-Marquardt over poses (frames[0] held fixed) and structure,
/// minimizing the Huber-robustified reprojection cost. Robust cost never
/// increases across accepted steps; a step that cannot be made to decrease
/// the cost ends the optimization with converged=false.
BundleResult bundle_adjust(std::vector<Vec3>& structure, std::vector<CameraPose>& poses,
                           const TrackSet& tracks, std::span<const int> frames,
                           const CameraIntrinsics& k, const BundleConfig& config);

struct LandmarkPair {
    int a = -1;
    int b = -1;  // a < 0 selects the pair automatically
};

/// Rescale every successful reconstruction so the chosen landmark pair sits
/// at unit distance; automatic selection takes the pair with the largest
/// mean distance across clusters. Reprojection errors are unaffected.
/// Clusters where the pair distance is zero keep their scale and stay
/// flagged (scale_normalized == false).
std::vector<ClusterReconstruction> normalize_scale(std::vector<ClusterReconstruction> recs,
                                                   LandmarkPair pair = {});

}  // namespace rsfm
