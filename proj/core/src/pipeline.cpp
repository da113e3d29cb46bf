#include "rsfm/pipeline.hpp"

#include <chrono>

namespace rsfm {
namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

PipelineRun run_pipeline(const TrackSet& tracks, const CameraIntrinsics& k,
                         const PipelineOptions& opts) {
    PipelineRun run;

    auto t0 = std::chrono::steady_clock::now();
    run.affinity = build_affinity(tracks, opts.rigidity, opts.n_workers);
    run.t_affinity_s = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    run.clustering = cluster_views(run.affinity.affinity.a, opts.spectral);
    run.t_cluster_s = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    ReconstructConfig rc;
    rc.rigidity = opts.rigidity;
    rc.bundle = opts.bundle;
    rc.seed_retry_cap = opts.seed_retry_cap;
    const auto& labels = run.clustering.assignment.labels;
    run.reconstructions.reserve(static_cast<std::size_t>(opts.spectral.n_clusters));
    for (int c = 0; c < opts.spectral.n_clusters; ++c) {
        std::vector<int> frames;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) frames.push_back(static_cast<int>(i));
        run.reconstructions.push_back(reconstruct_cluster(tracks, frames, k, rc, c));
    }
    bool any_success = false;
    for (const auto& rec : run.reconstructions) any_success |= rec.success;
    if (any_success)
        run.reconstructions = normalize_scale(std::move(run.reconstructions),
                                              opts.landmark_pair);
    run.t_reconstruct_s = seconds_since(t0);
    return run;
}

}  // namespace rsfm
