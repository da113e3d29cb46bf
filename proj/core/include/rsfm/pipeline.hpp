#pragma once

#include "rsfm/affinity.hpp"
#include "rsfm/reconstruct.hpp"
#include "rsfm/spectral.hpp"
#include "rsfm/types.hpp"

namespace rsfm {

struct PipelineOptions {
    RigidityParams rigidity;  // drives affinity and in-cluster seed scoring
    SpectralConfig spectral;  // n_clusters is the K of the whole pipeline
    BundleConfig bundle;
    LandmarkPair landmark_pair;  // cross-cluster scale unit; auto by default
    int n_workers = 1;
    int seed_retry_cap = 5;
};

struct PipelineRun {
    AffinityBuildResult affinity;
    ClusterViewsResult clustering;
    std::vector<ClusterReconstruction> reconstructions;  // indexed by cluster id
    double t_affinity_s = 0.0;
    double t_cluster_s = 0.0;
    double t_reconstruct_s = 0.0;
};

/// affinity -> spectral clustering -> per-cluster rigid reconstruction ->
/// cross-cluster scale normalization, all in memory. Deterministic given the
/// seeds in the options; wall times are measured per stage.
PipelineRun run_pipeline(const TrackSet& tracks, const CameraIntrinsics& k,
                         const PipelineOptions& opts);

}  // namespace rsfm
