#include "rsfm/synthetic.hpp"

#include "rsfm/geometry.hpp"
#include "rsfm/pipeline.hpp"
#include "rsfm/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace rsfm {
namespace {

constexpr std::uint64_t kShapeStream = 0x73686170651a2c3full;
constexpr std::uint64_t kCameraStream = 0x63616d65726910b3ull;
constexpr std::uint64_t kNoiseStream = 0x6e6f6973651877f1ull;

// Every generated shape is centered and scaled to this max landmark norm.
// With the default camera distances (>= 6) and 600 px focal lengths, any
// camera looking at the origin then keeps the whole shape inside 640x480:
// the image offset is at most f * 1.4 / (6 - 1.4) = 183 px from center.
constexpr double kShapeRadius = 1.4;

double quiet_nan() { return std::numeric_limits<double>::quiet_NaN(); }

Vec3 random_unit(Rng& rng) {
    for (;;) {
        const Vec3 v(rng.normal(), rng.normal(), rng.normal());
        const double n = v.norm();
        if (n > 1e-9) return v / n;
    }
}

std::vector<Vec3> draw_blob(int m, Rng& rng) {
    std::vector<Vec3> pts(static_cast<std::size_t>(m));
    for (Vec3& p : pts)
        p = Vec3(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    return pts;
}

std::vector<Vec3> draw_chain(int m, int segments, Rng& rng) {
    std::vector<Vec3> nodes(static_cast<std::size_t>(segments) + 1, Vec3::Zero());
    double yaw = 0.0, pitch = 0.0;
    for (int s = 0; s < segments; ++s) {
        yaw += rng.uniform(-0.8, 0.8);
        pitch += rng.uniform(-0.6, 0.6);
        const Vec3 dir(std::cos(pitch) * std::cos(yaw), std::sin(pitch),
                       std::cos(pitch) * std::sin(yaw));
        nodes[static_cast<std::size_t>(s) + 1] = nodes[static_cast<std::size_t>(s)] + dir;
    }
    std::vector<Vec3> pts(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        const auto s = static_cast<std::size_t>(i % segments);
        const double u = rng.uniform();
        // Lateral jitter keeps chain landmarks off a common line or plane.
        const Vec3 jitter(rng.normal(), rng.normal(), rng.normal());
        pts[static_cast<std::size_t>(i)] =
            nodes[s] + u * (nodes[s + 1] - nodes[s]) + 0.08 * jitter;
    }
    return pts;
}

void center_and_normalize(std::vector<Vec3>& pts) {
    Vec3 c = Vec3::Zero();
    for (const Vec3& p : pts) c += p;
    c /= static_cast<double>(pts.size());
    double max_norm = 0.0;
    for (Vec3& p : pts) {
        p -= c;
        max_norm = std::max(max_norm, p.norm());
    }
    if (max_norm < 1e-12) throw GeneratorError("degenerate shape draw");
    for (Vec3& p : pts) p *= kShapeRadius / max_norm;
}

bool generic_enough(const std::vector<Vec3>& pts) {
    Mat3 cov = Mat3::Zero();
    for (const Vec3& p : pts) cov += p * p.transpose();
    Eigen::SelfAdjointEigenSolver<Mat3> ev(cov);
    return ev.eigenvalues()(0) >= 1e-4 * ev.eigenvalues()(2);
}

double shape_diameter(const std::vector<Vec3>& pts) {
    double d = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j)
            d = std::max(d, (pts[i] - pts[j]).norm());
    return d;
}

bool separated(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double min_frac) {
    return procrustes_rmse(a, b) >= min_frac * shape_diameter(b) &&
           procrustes_rmse(b, a) >= min_frac * shape_diameter(a);
}

std::vector<std::vector<Vec3>> draw_shapes(const SceneConfig& cfg, int n_states, Rng& rng) {
    std::vector<std::vector<Vec3>> shapes;
    shapes.reserve(static_cast<std::size_t>(n_states));
    for (int s = 0; s < n_states; ++s) {
        bool ok = false;
        for (int attempt = 0; attempt < cfg.max_retries && !ok; ++attempt) {
            std::vector<Vec3> pts = cfg.shape_model == ShapeModel::kRandomBlob
                                        ? draw_blob(cfg.n_points, rng)
                                        : draw_chain(cfg.n_points, cfg.chain_segments, rng);
            center_and_normalize(pts);
            if (!generic_enough(pts)) continue;
            ok = true;
            for (const auto& other : shapes) {
                if (!separated(pts, other, cfg.min_state_separation)) {
                    ok = false;
                    break;
                }
            }
            if (ok) shapes.push_back(std::move(pts));
        }
        if (!ok)
            throw GeneratorError("state " + std::to_string(s) +
                                 ": no sufficiently distinct shape within retry budget");
    }
    return shapes;
}

bool projects_inside(const CameraPose& pose, const SceneConfig& cfg,
                     const std::vector<Vec3>& shape) {
    for (const Vec3& x : shape) {
        if (depth(pose, x) <= 0.0) return false;
        const Vec2 px = project(pose, cfg.intrinsics, x);
        if (!(px.x() >= 0.0 && px.x() <= cfg.image_width && px.y() >= 0.0 &&
              px.y() <= cfg.image_height))
            return false;
    }
    return true;
}

std::vector<CameraPose> draw_cameras(const SceneConfig& cfg, const std::vector<int>& states,
                                     const std::vector<std::vector<Vec3>>& shapes,
                                     Rng& rng) {
    const int n = cfg.n_frames;
    const double cos_floor = std::cos(cfg.min_parallax_deg * kPi / 180.0);
    std::vector<Vec3> centers(static_cast<std::size_t>(n));
    std::vector<CameraPose> poses(static_cast<std::size_t>(n));

    auto parallax_ok = [&](int f, const Vec3& center) {
        const Vec3 dir = center.normalized();
        for (int g = 0; g < f; ++g) {
            if (states[static_cast<std::size_t>(g)] != states[static_cast<std::size_t>(f)])
                continue;
            if (dir.dot(centers[static_cast<std::size_t>(g)].normalized()) > cos_floor)
                return false;
        }
        return true;
    };

    if (cfg.camera_path == CameraPath::kOrbit) {
        const double radius = 0.5 * (cfg.radius_min + cfg.radius_max);
        const double elevation = 0.3;
        for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
            const double phase = rng.uniform(0.0, 2.0 * kPi);
            bool ok = true;
            for (int f = 0; f < n && ok; ++f) {
                const double alpha = phase + 2.0 * kPi * f / n;
                const Vec3 center =
                    radius * Vec3(std::cos(alpha) * std::cos(elevation), std::sin(elevation),
                                  std::sin(alpha) * std::cos(elevation));
                ok = parallax_ok(f, center);
                if (!ok) break;
                centers[static_cast<std::size_t>(f)] = center;
                poses[static_cast<std::size_t>(f)] = look_at(center, Vec3::Zero());
                ok = projects_inside(poses[static_cast<std::size_t>(f)], cfg,
                                     shapes[static_cast<std::size_t>(
                                         states[static_cast<std::size_t>(f)])]);
            }
            if (ok) return poses;
        }
        throw GeneratorError("orbit path cannot satisfy parallax/visibility constraints");
    }

    for (int f = 0; f < n; ++f) {
        bool ok = false;
        for (int attempt = 0; attempt < cfg.max_retries && !ok; ++attempt) {
            const Vec3 center = rng.uniform(cfg.radius_min, cfg.radius_max) * random_unit(rng);
            if (!parallax_ok(f, center)) continue;
            const CameraPose pose = look_at(center, Vec3::Zero());
            if (!projects_inside(pose, cfg,
                                 shapes[static_cast<std::size_t>(
                                     states[static_cast<std::size_t>(f)])]))
                continue;
            centers[static_cast<std::size_t>(f)] = center;
            poses[static_cast<std::size_t>(f)] = pose;
            ok = true;
        }
        if (!ok)
            throw GeneratorError("frame " + std::to_string(f) +
                                 ": camera constraints unsatisfied within retry budget");
    }
    return poses;
}

}  // namespace

void SceneConfig::validate() const {
    if (n_frames < 2) throw std::invalid_argument("scene config: n_frames must be >= 2");
    if (n_points < 8) throw std::invalid_argument("scene config: n_points must be >= 8");
    if (schedule == Schedule::kPeriodic && (period < 2 || period > n_frames))
        throw std::invalid_argument("scene config: period must lie in [2, n_frames]");
    if (schedule == Schedule::kRecurrent) {
        if (static_cast<int>(state_ids.size()) != n_frames)
            throw std::invalid_argument("scene config: state_ids must list one state per frame");
        int max_id = -1;
        for (int s : state_ids) {
            if (s < 0) throw std::invalid_argument("scene config: negative state id");
            max_id = std::max(max_id, s);
        }
        std::vector<bool> seen(static_cast<std::size_t>(max_id) + 1, false);
        for (int s : state_ids) seen[static_cast<std::size_t>(s)] = true;
        for (bool b : seen)
            if (!b) throw std::invalid_argument("scene config: unused state id in range");
    }
    if (chain_segments < 1)
        throw std::invalid_argument("scene config: chain_segments must be >= 1");
    if (!(radius_min > 2.0) || radius_min > radius_max)
        throw std::invalid_argument("scene config: camera radii must satisfy 2 < min <= max");
    if (!(intrinsics.fx > 0.0) || !(intrinsics.fy > 0.0))
        throw std::invalid_argument("scene config: focal lengths must be positive");
    if (image_width < 1 || image_height < 1)
        throw std::invalid_argument("scene config: image size must be positive");
    if (noise_sigma < 0.0) throw std::invalid_argument("scene config: negative noise sigma");
    if (!(min_parallax_deg >= 0.0 && min_parallax_deg < 180.0))
        throw std::invalid_argument("scene config: parallax floor outside [0, 180)");
    if (max_retries < 1) throw std::invalid_argument("scene config: max_retries must be >= 1");
}

std::vector<int> SceneConfig::schedule_states() const {
    std::vector<int> states(static_cast<std::size_t>(n_frames), 0);
    switch (schedule) {
        case Schedule::kRigid:
            break;
        case Schedule::kPeriodic:
            for (int i = 0; i < n_frames; ++i) states[static_cast<std::size_t>(i)] = i % period;
            break;
        case Schedule::kRecurrent:
            states = state_ids;
            break;
        case Schedule::kNonrecurrent:
            for (int i = 0; i < n_frames; ++i) states[static_cast<std::size_t>(i)] = i;
            break;
    }
    return states;
}

CameraPose look_at(const Vec3& center, const Vec3& target) {
    Vec3 z = target - center;
    const double n = z.norm();
    if (n < 1e-12) throw std::invalid_argument("look_at: camera placed at the target");
    z /= n;
    Vec3 up(0.0, 1.0, 0.0);
    if (std::abs(z.dot(up)) > 0.99) up = Vec3(1.0, 0.0, 0.0);
    const Vec3 x = up.cross(z).normalized();
    const Vec3 y = z.cross(x);
    Mat3 r;
    r.row(0) = x;
    r.row(1) = y;
    r.row(2) = z;
    return {r, -r * center};
}

SceneGroundTruth generate_scene(const SceneConfig& config) {
    config.validate();
    SceneGroundTruth truth;
    truth.config = config;
    truth.state_of_frame = config.schedule_states();
    const int n_states = 1 + *std::max_element(truth.state_of_frame.begin(),
                                               truth.state_of_frame.end());

    Rng shape_rng(mix_seed(config.rng_seed, kShapeStream));
    truth.shapes = draw_shapes(config, n_states, shape_rng);

    Rng cam_rng(mix_seed(config.rng_seed, kCameraStream));
    truth.poses = draw_cameras(config, truth.state_of_frame, truth.shapes, cam_rng);

    truth.tracks.n_frames = config.n_frames;
    truth.tracks.n_points = config.n_points;
    truth.tracks.obs.resize(static_cast<std::size_t>(config.n_frames) *
                            static_cast<std::size_t>(config.n_points));
    for (int f = 0; f < config.n_frames; ++f) {
        const auto& shape =
            truth.shapes[static_cast<std::size_t>(truth.state_of_frame[static_cast<std::size_t>(f)])];
        for (int p = 0; p < config.n_points; ++p)
            truth.tracks.at(f, p) =
                project(truth.poses[static_cast<std::size_t>(f)], config.intrinsics,
                        shape[static_cast<std::size_t>(p)]);
    }
    truth.noisy_tracks =
        add_noise(truth.tracks, config.noise_sigma, mix_seed(config.rng_seed, kNoiseStream));
    return truth;
}

TrackSet add_noise(const TrackSet& tracks, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw std::invalid_argument("add_noise: negative sigma");
    if (sigma == 0.0) return tracks;
    TrackSet out = tracks;
    Rng rng(seed);
    for (Vec2& p : out.obs) {
        p.x() += sigma * rng.normal();
        p.y() += sigma * rng.normal();
    }
    return out;
}

double clustering_purity(const std::vector<int>& labels, const std::vector<int>& states) {
    if (labels.empty() || labels.size() != states.size())
        throw std::invalid_argument("clustering_purity: label/state size mismatch");
    int max_label = 0, max_state = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || states[i] < 0)
            throw std::invalid_argument("clustering_purity: negative id");
        max_label = std::max(max_label, labels[i]);
        max_state = std::max(max_state, states[i]);
    }
    const int ns = max_state + 1;
    std::vector<long long> counts(static_cast<std::size_t>((max_label + 1) * ns), 0);
    for (std::size_t i = 0; i < labels.size(); ++i)
        ++counts[static_cast<std::size_t>(labels[i] * ns + states[i])];
    long long total = 0;
    for (int c = 0; c <= max_label; ++c) {
        long long best = 0;
        for (int s = 0; s < ns; ++s)
            best = std::max(best, counts[static_cast<std::size_t>(c * ns + s)]);
        total += best;
    }
    return static_cast<double>(total) / static_cast<double>(labels.size());
}

double scene_diameter(const SceneGroundTruth& truth) {
    double d = 0.0;
    for (const auto& shape : truth.shapes) d = std::max(d, shape_diameter(shape));
    return d;
}

double success_reproj_limit(double noise_sigma) { return 5.0 * noise_sigma + 1.0; }

EvalReport evaluate(const std::vector<ClusterReconstruction>& recs,
                    const ClusterAssignment& assign, const SceneGroundTruth& truth,
                    double success_limit_px) {
    const int n = truth.tracks.n_frames;
    if (static_cast<int>(assign.labels.size()) != n)
        throw std::invalid_argument("evaluate: assignment does not cover the scene frames");

    EvalReport report;
    report.purity = clustering_purity(assign.labels, truth.state_of_frame);
    const double diam = scene_diameter(truth);
    const CameraIntrinsics& k = truth.config.intrinsics;

    std::vector<double> residuals;
    int success_frames = 0;
    double rmse_acc = 0.0;
    int rmse_count = 0;

    for (int c = 0; c < assign.n_clusters; ++c) {
        ClusterEval ce;
        ce.cluster_id = c;
        ce.shape_rmse = quiet_nan();
        ce.mean_reproj_px = quiet_nan();

        std::vector<int> members;
        for (int f = 0; f < n; ++f)
            if (assign.labels[static_cast<std::size_t>(f)] == c) members.push_back(f);
        ce.n_frames = static_cast<int>(members.size());

        std::vector<int> state_count(truth.shapes.size(), 0);
        for (int f : members)
            ++state_count[static_cast<std::size_t>(
                truth.state_of_frame[static_cast<std::size_t>(f)])];
        int majority = -1, majority_n = 0;
        for (std::size_t s = 0; s < state_count.size(); ++s) {
            if (state_count[s] > majority_n) {
                majority_n = state_count[s];
                majority = static_cast<int>(s);
            }
        }
        ce.majority_state = majority;

        const ClusterReconstruction* rec = nullptr;
        for (const auto& r : recs)
            if (r.cluster_id == c) rec = &r;

        if (rec == nullptr) {
            ce.note = "no reconstruction";
        } else if (!rec->success) {
            ce.n_registered = static_cast<int>(rec->poses.size());
            ce.note = rec->failure;
        } else {
            ce.n_registered = static_cast<int>(rec->poses.size());
            ce.mean_reproj_px = rec->mean_reproj_error;
            if (majority >= 0)
                ce.shape_rmse =
                    procrustes_rmse(rec->shape,
                                    truth.shapes[static_cast<std::size_t>(majority)]) /
                    diam;
            if (rec->mean_reproj_error <= success_limit_px) {
                ce.success = true;
                success_frames += ce.n_registered;
                if (std::isfinite(ce.shape_rmse)) {
                    rmse_acc += ce.shape_rmse;
                    ++rmse_count;
                }
                for (const auto& [fid, pose] : rec->poses)
                    for (int p = 0; p < truth.tracks.n_points; ++p)
                        residuals.push_back(
                            (project(pose, k, rec->shape[static_cast<std::size_t>(p)]) -
                             truth.noisy_tracks.at(fid, p))
                                .norm());
            } else {
                ce.note = "mean reprojection above the success limit";
            }
        }
        report.clusters.push_back(std::move(ce));
    }

    report.success_ratio = static_cast<double>(success_frames) / static_cast<double>(n);
    report.mean_shape_rmse = rmse_count > 0 ? rmse_acc / rmse_count : quiet_nan();

    if (!residuals.empty()) {
        constexpr int kBins = 20;
        const double max_r =
            std::max(*std::max_element(residuals.begin(), residuals.end()), 1e-12);
        const double width = max_r / kBins;
        report.hist_counts.assign(kBins, 0);
        for (int b = 0; b <= kBins; ++b) report.hist_edges.push_back(b * width);
        for (double r : residuals) {
            auto bin = static_cast<int>(r / width);
            if (bin >= kBins) bin = kBins - 1;  // right edge inclusive
            ++report.hist_counts[static_cast<std::size_t>(bin)];
        }
    }
    return report;
}

RigidityParams noise_calibrated_params(double noise_sigma, RigidityParams base) {
    if (!(noise_sigma >= 0.0))
        throw std::invalid_argument("noise_calibrated_params: noise_sigma must be >= 0");
    RigidityParams p = base;
    const double rf = 2.0 + 12.0 * noise_sigma;
    const double rh = 5.0 + 15.0 * noise_sigma;
    p.target_rms_f = rf;
    p.target_rms_h = rh;
    p.sigma_f = 2.0 * rf;
    p.sigma_h = 2.0 * rh;
    p.tau_f.reset();
    p.tau_h.reset();
    p.aggregation = Aggregation::kQuantile;
    p.quantile = 0.5;
    return p;
}

std::vector<NoiseSweepRow> noise_sweep(const SceneConfig& base,
                                       std::span<const double> sigmas, int n_seeds,
                                       const RigidityParams& rigidity, int n_clusters) {
    if (n_seeds < 1) throw std::invalid_argument("noise_sweep: n_seeds must be >= 1");
    std::vector<NoiseSweepRow> rows;
    rows.reserve(sigmas.size());
    for (const double sigma : sigmas) {
        NoiseSweepRow row;
        row.sigma = sigma;
        double rmse_acc = 0.0;
        int rmse_n = 0;
        for (int s = 0; s < n_seeds; ++s) {
            SceneConfig cfg = base;
            cfg.noise_sigma = sigma;
            // Same per-seed scene geometry and noise direction across sigma
            // values: the sweep compares noise LEVELS, nothing else.
            cfg.rng_seed = mix_seed(base.rng_seed, static_cast<std::uint64_t>(s));

            PipelineOptions opts;
            // Residuals grow with the injected noise; the accept bar and
            // kernels must follow or every pair would be rejected at high
            // sigma.
            opts.rigidity = noise_calibrated_params(sigma, rigidity);
            opts.rigidity.rng_seed = cfg.rng_seed;
            opts.spectral.n_clusters = n_clusters;
            opts.spectral.rng_seed = cfg.rng_seed;

            const SceneGroundTruth truth = generate_scene(cfg);
            const PipelineRun run = run_pipeline(truth.noisy_tracks, cfg.intrinsics, opts);
            const EvalReport rep = evaluate(run.reconstructions, run.clustering.assignment,
                                            truth, success_reproj_limit(sigma));
            row.success_ratio += rep.success_ratio;
            if (std::isfinite(rep.mean_shape_rmse)) {
                rmse_acc += rep.mean_shape_rmse;
                ++rmse_n;
            }
        }
        row.success_ratio /= n_seeds;
        row.mean_rmse = rmse_n > 0 ? rmse_acc / rmse_n : quiet_nan();
        rows.push_back(row);
    }
    return rows;
}

TimingSweepResult timing_sweep(TimingAxis axis, std::span<const double> values,
                               const SceneConfig& base, const RigidityParams& params) {
    TimingSweepResult result;
    for (const double v : values) {
        SceneConfig cfg = base;
        RigidityParams p = params;
        switch (axis) {
            case TimingAxis::kSamples:
                p.n_samples_f = p.n_samples_h = static_cast<int>(v);
                break;
            case TimingAxis::kPoints:
                cfg.n_points = static_cast<int>(v);
                break;
            case TimingAxis::kFrames:
                cfg.n_frames = static_cast<int>(v);
                break;
        }
        const SceneGroundTruth truth = generate_scene(cfg);
        const auto t0 = std::chrono::steady_clock::now();
        build_affinity(truth.noisy_tracks, p, 1);
        const double dt =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.rows.push_back({v, dt});
    }

    // Least-squares slope of log t against log v.
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const auto n = static_cast<double>(result.rows.size());
    for (const TimingRow& row : result.rows) {
        const double x = std::log(row.value);
        const double y = std::log(std::max(row.seconds, 1e-9));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double denom = n * sxx - sx * sx;
    result.loglog_slope = denom != 0.0 ? (n * sxy - sx * sy) / denom : 0.0;
    return result;
}

}  // namespace rsfm
