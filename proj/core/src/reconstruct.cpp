#include "rsfm/reconstruct.hpp"

#include "rsfm/geometry.hpp"
#include "rsfm/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rsfm {
namespace {

constexpr double kDepthTol = 1e-9;

double huber_cost(double s, double delta) {
    return s <= delta ? 0.5 * s * s : delta * (s - 0.5 * delta);
}

double huber_weight(double s, double delta) { return s <= delta ? 1.0 : delta / s; }

double robust_cost(const Eigen::VectorXd& residuals, double delta) {
    double cost = 0.0;
    for (Eigen::Index i = 0; i < residuals.size(); i += 2)
        cost += huber_cost(residuals.segment<2>(i).norm(), delta);
    return cost;
}

/// d(pixel)/d(camera-frame point) for proj = K pc.
Eigen::Matrix<double, 2, 3> pixel_jacobian(const CameraIntrinsics& k, const Vec3& pc) {
    const double iz = 1.0 / pc.z();
    const double u = (k.fx * pc.x() + k.skew * pc.y() + k.cx * pc.z()) * iz;
    const double v = (k.fy * pc.y() + k.cy * pc.z()) * iz;
    Eigen::Matrix<double, 2, 3> j;
    j << k.fx * iz, k.skew * iz, (k.cx - u) * iz,
         0.0, k.fy * iz, (k.cy - v) * iz;
    return j;
}

struct PairScore {
    int ci, cj;     // indices into the sorted cluster frame list
    double p;       // rigidity verdict
    double margin;  // p_f * (1 - p_h), the fallback ordering key
};

void rescale(std::vector<Vec3>& structure, std::vector<CameraPose>& poses, double s) {
    for (Vec3& x : structure) x *= s;
    for (CameraPose& pose : poses) pose.t *= s;
}

}  // namespace

void BundleConfig::validate() const {
    if (max_iterations < 1 || !(initial_damping > 0.0) || !(convergence_tol > 0.0) ||
        !(huber_delta > 0.0))
        throw std::invalid_argument("bundle config: all knobs must be positive");
}

std::pair<int, int> select_seed_pair(std::span<const int> frames,
                                     const Eigen::MatrixXd& affinity,
                                     const Eigen::MatrixXd& p_h) {
    if (frames.size() < 2)
        throw DegenerateError("select_seed_pair: cluster has fewer than 2 frames");
    std::pair<int, int> best{-1, -1};
    double best_score = -1.0;
    for (std::size_t a = 0; a < frames.size(); ++a) {
        for (std::size_t b = a + 1; b < frames.size(); ++b) {
            int i = frames[a], j = frames[b];
            if (i > j) std::swap(i, j);
            const double score = affinity(i, j) * (1.0 - p_h(i, j));
            if (score > best_score) {
                best_score = score;
                best = {i, j};
            }
        }
    }
    return best;
}

Eigen::VectorXd ba_residuals(const std::vector<Vec3>& structure,
                             const std::vector<CameraPose>& poses,
                             const TrackSet& tracks, std::span<const int> frames,
                             const CameraIntrinsics& k) {
    if (poses.size() != frames.size())
        throw std::invalid_argument("ba_residuals: poses/frames size mismatch");
    const auto m = structure.size();
    Eigen::VectorXd r(2 * static_cast<Eigen::Index>(frames.size() * m));
    Eigen::Index row = 0;
    for (std::size_t f = 0; f < frames.size(); ++f) {
        for (std::size_t p = 0; p < m; ++p) {
            const Vec2 res = project(poses[f], k, structure[p]) -
                             tracks.at(frames[f], static_cast<int>(p));
            r.segment<2>(row) = res;
            row += 2;
        }
    }
    return r;
}

Eigen::MatrixXd ba_jacobian(const std::vector<Vec3>& structure,
                            const std::vector<CameraPose>& poses,
                            const TrackSet& tracks, std::span<const int> frames,
                            const CameraIntrinsics& k) {
    (void)tracks;  // residual offsets do not enter the Jacobian
    const auto m = structure.size();
    const auto nf = frames.size();
    const Eigen::Index n_params =
        6 * static_cast<Eigen::Index>(nf - 1) + 3 * static_cast<Eigen::Index>(m);
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2 * static_cast<Eigen::Index>(nf * m), n_params);

    Eigen::Index row = 0;
    for (std::size_t f = 0; f < nf; ++f) {
        for (std::size_t p = 0; p < m; ++p) {
            const Vec3 pc = poses[f].to_camera(structure[p]);
            const Eigen::Matrix<double, 2, 3> dpix = pixel_jacobian(k, pc);
            if (f > 0) {
                const Eigen::Index c = 6 * static_cast<Eigen::Index>(f - 1);
                j.block<2, 3>(row, c) = dpix * (-skew3(pc - poses[f].t));
                j.block<2, 3>(row, c + 3) = dpix;
            }
            j.block<2, 3>(row, 6 * static_cast<Eigen::Index>(nf - 1) +
                                   3 * static_cast<Eigen::Index>(p)) = dpix * poses[f].R;
            row += 2;
        }
    }
    return j;
}

BundleResult bundle_adjust(std::vector<Vec3>& structure, std::vector<CameraPose>& poses,
                           const TrackSet& tracks, std::span<const int> frames,
                           const CameraIntrinsics& k, const BundleConfig& config) {
    config.validate();
    if (frames.size() < 2) throw std::invalid_argument("bundle_adjust: needs >= 2 poses");
    if (poses.size() != frames.size())
        throw std::invalid_argument("bundle_adjust: poses/frames size mismatch");
    if (structure.empty()) throw std::invalid_argument("bundle_adjust: empty structure");

    const auto apply_step = [&](const Eigen::VectorXd& delta, std::vector<Vec3>& s,
                                std::vector<CameraPose>& ps) {
        for (std::size_t f = 1; f < ps.size(); ++f) {
            const Eigen::Index c = 6 * static_cast<Eigen::Index>(f - 1);
            ps[f].R = so3_exp(delta.segment<3>(c)) * ps[f].R;
            ps[f].t += delta.segment<3>(c + 3);
        }
        const Eigen::Index base = 6 * static_cast<Eigen::Index>(ps.size() - 1);
        for (std::size_t p = 0; p < s.size(); ++p)
            s[p] += delta.segment<3>(base + 3 * static_cast<Eigen::Index>(p));
    };

    BundleResult result;
    Eigen::VectorXd r = ba_residuals(structure, poses, tracks, frames, k);
    double cost = robust_cost(r, config.huber_delta);
    result.initial_cost = cost;
    double lambda = config.initial_damping;

    for (int iter = 0; iter < config.max_iterations; ++iter) {
        result.iterations = iter + 1;
        const Eigen::MatrixXd j = ba_jacobian(structure, poses, tracks, frames, k);

        Eigen::VectorXd w(r.size());
        for (Eigen::Index i = 0; i < r.size(); i += 2) {
            const double wi = huber_weight(r.segment<2>(i).norm(), config.huber_delta);
            w(i) = w(i + 1) = wi;
        }
        const Eigen::MatrixXd h = j.transpose() * w.asDiagonal() * j;
        const Eigen::VectorXd g = j.transpose() * (w.asDiagonal() * r);
        result.gradient_norm = g.norm();
        if (result.gradient_norm <= 1e-14 * std::max(1.0, cost)) {
            result.converged = true;
            break;
        }

        bool accepted = false;
        for (int attempt = 0; attempt < 12; ++attempt) {
            Eigen::VectorXd damping = lambda * h.diagonal().cwiseMax(1e-12);
            const Eigen::VectorXd delta =
                (h + Eigen::MatrixXd(damping.asDiagonal())).ldlt().solve(-g);
            if (!delta.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            std::vector<Vec3> s_new = structure;
            std::vector<CameraPose> p_new = poses;
            apply_step(delta, s_new, p_new);
            const Eigen::VectorXd r_new = ba_residuals(s_new, p_new, tracks, frames, k);
            const double cost_new = robust_cost(r_new, config.huber_delta);
            if (std::isfinite(cost_new) && cost_new < cost) {
                structure = std::move(s_new);
                poses = std::move(p_new);
                r = r_new;
                const double rel_drop = (cost - cost_new) / std::max(cost, 1e-300);
                cost = cost_new;
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                if (rel_drop < config.convergence_tol) result.converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted) {
            // No damping level decreased the robust cost: keep the last
            // accepted state. Converged only if we are at a flat optimum.
            result.converged = cost <= 1e-20;
            break;
        }
        if (result.converged) break;
    }
    result.final_cost = cost;
    return result;
}

ClusterReconstruction reconstruct_cluster(const TrackSet& tracks,
                                          std::span<const int> frames_in,
                                          const CameraIntrinsics& k,
                                          const ReconstructConfig& config,
                                          int cluster_id) {
    tracks.validate();
    config.bundle.validate();

    ClusterReconstruction rec;
    rec.cluster_id = cluster_id;

    std::vector<int> frames(frames_in.begin(), frames_in.end());
    std::sort(frames.begin(), frames.end());
    frames.erase(std::unique(frames.begin(), frames.end()), frames.end());
    for (int f : frames)
        if (f < 0 || f >= tracks.n_frames)
            throw std::invalid_argument("reconstruct_cluster: frame id out of range");
    if (frames.size() < 2) {
        rec.failure = "cluster has fewer than 2 frames";
        return rec;
    }

    const auto nc = frames.size();
    const int m = tracks.n_points;

    // In-cluster rigidity scores, seeded per pair exactly as build_affinity
    // seeds them, so seed selection agrees with a prebuilt affinity matrix.
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(nc),
                                                  static_cast<Eigen::Index>(nc));
    Eigen::MatrixXd pf = a, ph = a;
    std::vector<PairScore> candidates;
    for (std::size_t ci = 0; ci < nc; ++ci) {
        for (std::size_t cj = ci + 1; cj < nc; ++cj) {
            RigidityParams pair_params = config.rigidity;
            pair_params.rng_seed = mix_seed(config.rigidity.rng_seed,
                                            static_cast<std::uint64_t>(frames[ci]),
                                            static_cast<std::uint64_t>(frames[cj]));
            RigidityScore s;
            try {
                s = modified_epipolar_test(
                    correspondences_between(tracks, frames[ci], frames[cj]), pair_params);
            } catch (const std::exception&) {
                s = RigidityScore{};
            }
            const auto i = static_cast<Eigen::Index>(ci);
            const auto j = static_cast<Eigen::Index>(cj);
            a(i, j) = a(j, i) = s.p;
            pf(i, j) = pf(j, i) = s.p_f;
            ph(i, j) = ph(j, i) = s.p_h;
            candidates.push_back({static_cast<int>(ci), static_cast<int>(cj),
                                  s.p * (1.0 - s.p_h), s.p_f * (1.0 - s.p_h)});
        }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const PairScore& x, const PairScore& y) {
                         if (x.p != y.p) return x.p > y.p;
                         return x.margin > y.margin;
                     });

    // Two-view initialization, falling through the candidate list.
    std::vector<Vec3> structure;
    std::vector<CameraPose> poses;
    std::vector<int> reg_frames;
    std::string last_error = "no candidate seed pair";
    const int tries = std::min<int>(config.seed_retry_cap, static_cast<int>(candidates.size()));
    for (int c = 0; c < tries; ++c) {
        const int si = frames[static_cast<std::size_t>(candidates[static_cast<std::size_t>(c)].ci)];
        const int sj = frames[static_cast<std::size_t>(candidates[static_cast<std::size_t>(c)].cj)];
        const CorrespondenceSet corrs = correspondences_between(tracks, si, sj);

        const auto f = fit_fundamental_all(corrs.x, corrs.x_prime);
        if (!f) {
            last_error = "degenerate seed-pair geometry";
            continue;
        }
        const Mat3 e = essential_from_fundamental(*f, k, k);
        const std::array<CameraPose, 4> cands = decompose_essential(e);
        const CameraPose identity{Mat3::Identity(), Vec3::Zero()};

        int best = -1, best_count = -1, second = -1;
        for (int d = 0; d < 4; ++d) {
            const int count =
                cheirality_count(identity, cands[static_cast<std::size_t>(d)], k, k, corrs);
            if (count > best_count) {
                second = best_count;
                best_count = count;
                best = d;
            } else if (count > second) {
                second = count;
            }
        }
        if (best_count < static_cast<int>(config.min_cheirality_fraction * m) ||
            best_count == second) {
            last_error = "cheirality-ambiguous seed pair";
            continue;
        }

        std::vector<Vec3> pts;
        pts.reserve(static_cast<std::size_t>(m));
        bool ok = true;
        for (int p = 0; p < m && ok; ++p) {
            try {
                pts.push_back(triangulate(identity, cands[static_cast<std::size_t>(best)], k,
                                          k, corrs.x[static_cast<std::size_t>(p)],
                                          corrs.x_prime[static_cast<std::size_t>(p)]));
            } catch (const ZeroParallaxError& ex) {
                last_error = ex.what();
                ok = false;
            }
        }
        if (!ok) continue;

        structure = std::move(pts);
        poses = {identity, cands[static_cast<std::size_t>(best)]};
        reg_frames = {si, sj};
        rec.seed_i = si;
        rec.seed_j = sj;
        break;
    }
    if (reg_frames.empty()) {
        rec.failure = "seed initialization failed: " + last_error;
        return rec;
    }

    bundle_adjust(structure, poses, tracks, reg_frames, k, config.bundle);

    // Register the rest in descending affinity-to-seed order.
    std::vector<std::size_t> rest;
    for (std::size_t ci = 0; ci < nc; ++ci)
        if (frames[ci] != rec.seed_i && frames[ci] != rec.seed_j) rest.push_back(ci);
    auto local_of = [&](int frame) {
        return static_cast<Eigen::Index>(
            std::lower_bound(frames.begin(), frames.end(), frame) - frames.begin());
    };
    const Eigen::Index li = local_of(rec.seed_i), lj = local_of(rec.seed_j);
    std::stable_sort(rest.begin(), rest.end(), [&](std::size_t x, std::size_t y) {
        const double ax = std::max(a(static_cast<Eigen::Index>(x), li),
                                   a(static_cast<Eigen::Index>(x), lj));
        const double ay = std::max(a(static_cast<Eigen::Index>(y), li),
                                   a(static_cast<Eigen::Index>(y), lj));
        return ax > ay;
    });

    std::vector<Vec2> frame_obs(static_cast<std::size_t>(m));
    for (std::size_t idx : rest) {
        const int fid = frames[idx];
        for (int p = 0; p < m; ++p) frame_obs[static_cast<std::size_t>(p)] = tracks.at(fid, p);
        CameraPose pose;
        try {
            pose = pnp(structure, frame_obs, k);
        } catch (const std::exception&) {
            rec.dropped_frames.push_back(fid);
            continue;
        }
        poses.push_back(pose);
        reg_frames.push_back(fid);
        bundle_adjust(structure, poses, tracks, reg_frames, k, config.bundle);
    }

    // Gauge: seed camera already at identity; pin the seed baseline to 1.
    // Scaling structure and translations together leaves reprojections
    // unchanged, so this cannot disturb the optimum.
    const double baseline = (poses[0].center() - poses[1].center()).norm();
    if (baseline < 1e-12) {
        rec.failure = "collapsed seed baseline";
        return rec;
    }
    rescale(structure, poses, 1.0 / baseline);

    // Reprojection bookkeeping and the cheirality audit.
    double total = 0.0;
    std::vector<int> positive_views(static_cast<std::size_t>(m), 0);
    std::vector<bool> violated(static_cast<std::size_t>(m), false);
    for (std::size_t f = 0; f < reg_frames.size(); ++f) {
        double frame_total = 0.0;
        for (int p = 0; p < m; ++p) {
            const Vec3& x = structure[static_cast<std::size_t>(p)];
            const double d = depth(poses[f], x);
            if (d > kDepthTol) ++positive_views[static_cast<std::size_t>(p)];
            if (d <= -kDepthTol) violated[static_cast<std::size_t>(p)] = true;
            frame_total += (project(poses[f], k, x) - tracks.at(reg_frames[f], p)).norm();
        }
        rec.frame_reproj[reg_frames[f]] = frame_total / m;
        total += frame_total;
    }
    rec.mean_reproj_error = total / (static_cast<double>(reg_frames.size()) * m);

    rec.shape = std::move(structure);
    for (std::size_t f = 0; f < reg_frames.size(); ++f) rec.poses[reg_frames[f]] = poses[f];

    for (int p = 0; p < m; ++p)
        if (violated[static_cast<std::size_t>(p)]) rec.cheirality_violations.push_back(p);
    for (int p = 0; p < m; ++p) {
        if (positive_views[static_cast<std::size_t>(p)] < 2) {
            rec.failure = "landmark behind cameras after refinement";
            return rec;
        }
    }
    rec.success = true;
    return rec;
}

std::vector<ClusterReconstruction> normalize_scale(std::vector<ClusterReconstruction> recs,
                                                   LandmarkPair pair) {
    std::vector<std::size_t> ok;
    for (std::size_t i = 0; i < recs.size(); ++i)
        if (recs[i].success) ok.push_back(i);
    if (ok.empty())
        throw std::invalid_argument("normalize_scale: no successful reconstruction");

    const auto m = recs[ok[0]].shape.size();
    for (std::size_t i : ok)
        if (recs[i].shape.size() != m)
            throw std::invalid_argument("normalize_scale: landmark count mismatch");

    if (pair.a < 0) {
        // The pair with the largest mean separation across clusters gives the
        // most stable unit; ties keep the lexicographically first pair.
        double best = -1.0;
        for (std::size_t x = 0; x < m; ++x) {
            for (std::size_t y = x + 1; y < m; ++y) {
                double mean = 0.0;
                for (std::size_t i : ok)
                    mean += (recs[i].shape[x] - recs[i].shape[y]).norm();
                mean /= static_cast<double>(ok.size());
                if (mean > best) {
                    best = mean;
                    pair = {static_cast<int>(x), static_cast<int>(y)};
                }
            }
        }
    }
    if (pair.a < 0 || pair.b < 0 || pair.a == pair.b ||
        static_cast<std::size_t>(pair.a) >= m || static_cast<std::size_t>(pair.b) >= m)
        throw std::invalid_argument("normalize_scale: invalid landmark pair");

    for (std::size_t i : ok) {
        ClusterReconstruction& rec = recs[i];
        const double d = (rec.shape[static_cast<std::size_t>(pair.a)] -
                          rec.shape[static_cast<std::size_t>(pair.b)])
                             .norm();
        if (d < 1e-12) continue;  // flagged by scale_normalized staying false
        const double s = 1.0 / d;
        for (Vec3& x : rec.shape) x *= s;
        for (auto& [fid, pose] : rec.poses) pose.t *= s;
        rec.scale_normalized = true;
    }
    return recs;
}

}  // namespace rsfm
