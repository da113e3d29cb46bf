#include "rsfm/affinity.hpp"

#include "rsfm/random.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <thread>

namespace rsfm {
namespace {

void fnv_append(std::uint64_t& h, const char* s) {
    for (; *s; ++s) {
        h ^= static_cast<unsigned char>(*s);
        h *= 0x100000001b3ull;
    }
}

void fnv_append_f(std::uint64_t& h, const char* key, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s=%.17g;", key, v);
    fnv_append(h, buf);
}

void fnv_append_i(std::uint64_t& h, const char* key, long long v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s=%lld;", key, v);
    fnv_append(h, buf);
}

}  // namespace

void TrackSet::validate() const {
    if (n_frames < 2) throw std::invalid_argument("tracks: need at least 2 frames");
    if (n_points < 8) throw std::invalid_argument("tracks: need at least 8 landmarks");
    const auto expected =
        static_cast<std::size_t>(n_frames) * static_cast<std::size_t>(n_points);
    if (obs.size() != expected)
        throw std::invalid_argument("tracks: observation table size mismatch");
    for (const Vec2& p : obs)
        if (!p.allFinite()) throw std::invalid_argument("tracks: non-finite observation");
}

CorrespondenceSet correspondences_between(const TrackSet& tracks, int i, int j) {
    if (i < 0 || i >= tracks.n_frames || j < 0 || j >= tracks.n_frames)
        throw std::invalid_argument("correspondences_between: frame index out of range");
    CorrespondenceSet out;
    out.frame_i = i;
    out.frame_j = j;
    out.x.reserve(static_cast<std::size_t>(tracks.n_points));
    out.x_prime.reserve(static_cast<std::size_t>(tracks.n_points));
    for (int p = 0; p < tracks.n_points; ++p) {
        out.x.push_back(tracks.at(i, p));
        out.x_prime.push_back(tracks.at(j, p));
    }
    return out;
}

AffinityBuildResult build_affinity(const TrackSet& tracks, const RigidityParams& params,
                                   int n_workers) {
    tracks.validate();
    params.validate();
    if (n_workers < 1) throw std::invalid_argument("build_affinity: n_workers < 1");

    const int n = tracks.n_frames;
    AffinityBuildResult out;
    out.affinity.a = Eigen::MatrixXd::Identity(n, n);
    out.affinity.params_digest = params_digest(params);
    out.p_f = Eigen::MatrixXd::Identity(n, n);
    out.p_h = Eigen::MatrixXd::Identity(n, n);

    struct Pair {
        int i, j;
    };
    std::vector<Pair> pairs;
    pairs.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) pairs.push_back({i, j});

    std::vector<RigidityScore> scores(pairs.size());
    std::vector<std::string> errors(pairs.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1, std::memory_order_relaxed);
            if (k >= pairs.size()) return;
            const auto [i, j] = pairs[k];
            RigidityParams pair_params = params;
            pair_params.rng_seed = mix_seed(params.rng_seed,
                                            static_cast<std::uint64_t>(i),
                                            static_cast<std::uint64_t>(j));
            try {
                scores[k] = modified_epipolar_test(correspondences_between(tracks, i, j),
                                                   pair_params);
            } catch (const std::exception& e) {
                scores[k] = RigidityScore{};  // p = 0
                errors[k] = e.what();
            }
        }
    };

    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(n_workers));
        for (int w = 0; w < n_workers; ++w) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto [i, j] = pairs[k];
        const RigidityScore& s = scores[k];
        out.affinity.a(i, j) = out.affinity.a(j, i) = s.p;
        out.p_f(i, j) = out.p_f(j, i) = s.p_f;
        out.p_h(i, j) = out.p_h(j, i) = s.p_h;
        if (errors[k].empty() && s.fundamental_degenerate)
            errors[k] = "every epipolar minimal subset was degenerate";
        else if (errors[k].empty() && s.homography_degenerate)
            errors[k] = "every homography minimal subset was degenerate";
        if (!errors[k].empty()) out.failures.push_back({i, j, errors[k]});
    }
    return out;
}

std::uint64_t params_digest(const RigidityParams& params) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    fnv_append_f(h, "sigma_f", params.sigma_f);
    fnv_append_f(h, "sigma_h", params.sigma_h);
    fnv_append_f(h, "tau_f", params.tau_f.value_or(-1.0));
    fnv_append_f(h, "tau_h", params.tau_h.value_or(-1.0));
    fnv_append_f(h, "target_rms_f", params.target_rms_f.value_or(-1.0));
    fnv_append_f(h, "target_rms_h", params.target_rms_h.value_or(-1.0));
    fnv_append_i(h, "sampling", params.sampling_mode == SamplingMode::kExhaustive ? 0 : 1);
    fnv_append_i(h, "n_samples_f", params.n_samples_f);
    fnv_append_i(h, "n_samples_h", params.n_samples_h);
    fnv_append_i(h, "seed", static_cast<long long>(params.rng_seed));
    fnv_append_i(h, "aggregation", params.aggregation == Aggregation::kStrictMin ? 0 : 1);
    fnv_append_f(h, "quantile", params.quantile);
    fnv_append_i(h, "symmetric", params.symmetric_epipolar ? 1 : 0);
    fnv_append_i(h, "cap", static_cast<long long>(params.exhaustive_cap));
    return h;
}

void validate_affinity(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("affinity: not square");
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        if (a(i, i) != 1.0) throw std::invalid_argument("affinity: diagonal entry not 1");
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            const double v = a(i, j);
            if (!std::isfinite(v) || v < 0.0 || v > 1.0)
                throw std::invalid_argument("affinity: entry outside [0,1]");
            if (a(i, j) != a(j, i)) throw std::invalid_argument("affinity: not symmetric");
        }
    }
}

}  // namespace rsfm
