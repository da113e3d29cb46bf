// Command-line front end: scene generation, affinity construction, spectral
// clustering, per-cluster rigid reconstruction, evaluation, the full
// pipeline, and timing sweeps. Every stage is a pure function of its input
// files, so running `pipeline` equals running the stages by hand.
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid input or config.

#include "rsfm/io.hpp"
#include "rsfm/pipeline.hpp"
#include "rsfm/rigidity.hpp"
#include "rsfm/spectral.hpp"
#include "rsfm/synthetic.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace {

using namespace rsfm;

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string join_path(const std::string& dir, const char* name) {
    return (std::filesystem::path(dir) / name).string();
}

int parse_workers(const std::string& text) {
    if (text == "auto") {
        const unsigned n = std::thread::hardware_concurrency();
        return n == 0 ? 1 : static_cast<int>(n);
    }
    const long long n = io::to_int(text, "workers");
    if (n < 1 || n > 4096) throw io::ParseError("workers must be in [1, 4096] or 'auto'");
    return static_cast<int>(n);
}

// Flag-level overrides applied on top of config-file values.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> samples;
    bool exhaustive = false;
};

std::uint64_t resolve_seed(const io::KeyValues& kv, const Overrides& ov) {
    if (ov.seed) return *ov.seed;
    if (const std::string* v = io::find(kv, "seed")) return io::to_u64(*v, "seed");
    return 0;
}

RigidityParams rigidity_from_kv(const io::KeyValues& kv, const Overrides& ov) {
    RigidityParams p;
    if (const std::string* v = io::find(kv, "sigma_f")) p.sigma_f = io::to_double(*v, "sigma_f");
    if (const std::string* v = io::find(kv, "sigma_h")) p.sigma_h = io::to_double(*v, "sigma_h");
    if (const std::string* v = io::find(kv, "tau_f")) p.tau_f = io::to_double(*v, "tau_f");
    if (const std::string* v = io::find(kv, "tau_h")) p.tau_h = io::to_double(*v, "tau_h");
    if (const std::string* v = io::find(kv, "target_rms_f"))
        p.target_rms_f = io::to_double(*v, "target_rms_f");
    if (const std::string* v = io::find(kv, "target_rms_h"))
        p.target_rms_h = io::to_double(*v, "target_rms_h");
    if (const std::string* v = io::find(kv, "sampling")) {
        if (*v == "randomized")
            p.sampling_mode = SamplingMode::kRandomized;
        else if (*v == "exhaustive")
            p.sampling_mode = SamplingMode::kExhaustive;
        else
            throw io::ParseError("sampling: expected randomized|exhaustive, got '" + *v + "'");
    }
    if (const std::string* v = io::find(kv, "n_samples_f"))
        p.n_samples_f = static_cast<int>(io::to_int(*v, "n_samples_f"));
    if (const std::string* v = io::find(kv, "n_samples_h"))
        p.n_samples_h = static_cast<int>(io::to_int(*v, "n_samples_h"));
    if (const std::string* v = io::find(kv, "aggregation")) {
        if (*v == "quantile")
            p.aggregation = Aggregation::kQuantile;
        else if (*v == "strict_min")
            p.aggregation = Aggregation::kStrictMin;
        else
            throw io::ParseError("aggregation: expected quantile|strict_min, got '" + *v + "'");
    }
    if (const std::string* v = io::find(kv, "quantile")) p.quantile = io::to_double(*v, "quantile");
    if (const std::string* v = io::find(kv, "symmetric_epipolar"))
        p.symmetric_epipolar = io::to_bool(*v, "symmetric_epipolar");
    if (const std::string* v = io::find(kv, "exhaustive_cap"))
        p.exhaustive_cap = io::to_u64(*v, "exhaustive_cap");

    p.rng_seed = resolve_seed(kv, ov);
    if (ov.samples) {
        p.n_samples_f = *ov.samples;
        p.n_samples_h = *ov.samples;
    }
    if (ov.exhaustive) p.sampling_mode = SamplingMode::kExhaustive;
    return p;
}

SpectralConfig spectral_from_kv(const io::KeyValues& kv) {
    SpectralConfig c;
    if (const std::string* v = io::find(kv, "n_eigenvectors"))
        c.n_eigenvectors = static_cast<int>(io::to_int(*v, "n_eigenvectors"));
    if (const std::string* v = io::find(kv, "eigen_tolerance"))
        c.eigen_tolerance = io::to_double(*v, "eigen_tolerance");
    if (const std::string* v = io::find(kv, "kmeans_restarts"))
        c.kmeans_restarts = static_cast<int>(io::to_int(*v, "kmeans_restarts"));
    if (const std::string* v = io::find(kv, "kmeans_max_iters"))
        c.kmeans_max_iters = static_cast<int>(io::to_int(*v, "kmeans_max_iters"));
    if (const std::string* v = io::find(kv, "literal_eigencount"))
        c.literal_eigencount = io::to_bool(*v, "literal_eigencount");
    return c;
}

BundleConfig bundle_from_kv(const io::KeyValues& kv) {
    BundleConfig c;
    if (const std::string* v = io::find(kv, "ba_max_iterations"))
        c.max_iterations = static_cast<int>(io::to_int(*v, "ba_max_iterations"));
    if (const std::string* v = io::find(kv, "ba_initial_damping"))
        c.initial_damping = io::to_double(*v, "ba_initial_damping");
    if (const std::string* v = io::find(kv, "ba_convergence_tol"))
        c.convergence_tol = io::to_double(*v, "ba_convergence_tol");
    if (const std::string* v = io::find(kv, "ba_huber_delta"))
        c.huber_delta = io::to_double(*v, "ba_huber_delta");
    return c;
}

LandmarkPair landmark_pair_from_kv(const io::KeyValues& kv) {
    const std::string* v = io::find(kv, "landmark_pair");
    if (!v || *v == "auto") return {};
    const std::vector<int> ids = io::to_int_list(*v, "landmark_pair");
    if (ids.size() != 2) throw io::ParseError("landmark_pair: expected 'auto' or 'a,b'");
    return LandmarkPair{ids[0], ids[1]};
}

io::KeyValues load_config(const std::string& path) {
    if (path.empty()) return {};
    return io::read_key_values(path);
}

// ---- stage entry points ----------------------------------------------------

void run_gen(const std::string& config_path, const std::string& out,
             std::optional<std::uint64_t> seed, bool verbose) {
    SceneConfig config = io::scene_config_from_kv(io::read_key_values(config_path));
    if (seed) config.rng_seed = *seed;
    const SceneGroundTruth truth = generate_scene(config);
    io::write_scene(out, truth);
    if (verbose)
        std::cout << "gen: frames=" << config.n_frames << " points=" << config.n_points
                  << " states=" << truth.shapes.size() << " noise_sigma=" << config.noise_sigma
                  << " seed=" << config.rng_seed << " out=" << out << '\n';
}

void run_affinity(const std::string& tracks_path, const io::KeyValues& kv, const std::string& out,
                  const Overrides& ov, int workers, bool verbose) {
    const TrackSet tracks = io::read_tracks(tracks_path);
    const RigidityParams params = rigidity_from_kv(kv, ov);
    params.validate();

    const auto start = std::chrono::steady_clock::now();
    const AffinityBuildResult result = build_affinity(tracks, params, workers);
    const double elapsed = seconds_since(start);

    io::write_affinity(join_path(out, "affinity.txt"), result.affinity, params.rng_seed);
    if (verbose) {
        const Eigen::Index n = result.affinity.a.rows();
        long long nonzero = 0;
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                if (i != j && result.affinity.a(i, j) > 0.0) ++nonzero;
        const double frac =
            n > 1 ? static_cast<double>(nonzero) / static_cast<double>(n * (n - 1)) : 0.0;
        std::cout << "affinity: N=" << n << " nonzero_offdiag=" << frac
                  << " pair_failures=" << result.failures.size() << " seed=" << params.rng_seed
                  << " elapsed_s=" << elapsed << '\n';
        for (const auto& f : result.failures)
            std::cerr << "affinity: pair (" << f.i << "," << f.j << ") scored 0: " << f.message
                      << '\n';
    }
}

void run_cluster(const std::string& affinity_path, int k, const io::KeyValues& kv,
                 const std::string& out, std::optional<std::uint64_t> seed, bool verbose) {
    const io::AffinityFile file = io::read_affinity(affinity_path);
    SpectralConfig config = spectral_from_kv(kv);
    config.n_clusters = k;
    config.rng_seed = resolve_seed(kv, Overrides{seed, {}, false});

    const ClusterViewsResult result = cluster_views(file.affinity.a, config);
    io::write_clusters(join_path(out, "clusters.txt"), result.assignment.labels, k,
                       config.rng_seed);
    if (verbose) {
        std::vector<int> sizes(static_cast<std::size_t>(k), 0);
        for (int label : result.assignment.labels) ++sizes[static_cast<std::size_t>(label)];
        std::cout << "cluster: N=" << result.assignment.labels.size() << " K=" << k << " sizes=";
        for (std::size_t c = 0; c < sizes.size(); ++c) std::cout << (c ? "," : "") << sizes[c];
        std::cout << " empty=" << result.assignment.empty_clusters.size()
                  << " distortion=" << result.assignment.distortion << " seed=" << config.rng_seed
                  << '\n';
    }
}

void run_reconstruct(const std::string& tracks_path, const std::string& clusters_path,
                     const std::string& intrinsics_path, const io::KeyValues& kv,
                     const std::string& out, const Overrides& ov, bool verbose) {
    const TrackSet tracks = io::read_tracks(tracks_path);
    const io::ClusterFile clusters = io::read_clusters(clusters_path);
    const CameraIntrinsics intr = io::read_intrinsics(intrinsics_path);
    if (static_cast<int>(clusters.labels.size()) != tracks.n_frames)
        throw io::ParseError("clusters file N=" + std::to_string(clusters.labels.size()) +
                             " does not match tracks N=" + std::to_string(tracks.n_frames));

    ReconstructConfig config;
    config.rigidity = rigidity_from_kv(kv, ov);
    config.bundle = bundle_from_kv(kv);
    if (const std::string* v = io::find(kv, "seed_retry_cap"))
        config.seed_retry_cap = static_cast<int>(io::to_int(*v, "seed_retry_cap"));
    if (const std::string* v = io::find(kv, "min_cheirality_fraction"))
        config.min_cheirality_fraction = io::to_double(*v, "min_cheirality_fraction");

    std::vector<ClusterReconstruction> recs;
    for (int c = 0; c < clusters.n_clusters; ++c) {
        std::vector<int> frames;
        for (std::size_t f = 0; f < clusters.labels.size(); ++f)
            if (clusters.labels[f] == c) frames.push_back(static_cast<int>(f));
        if (frames.size() < 2) {
            ClusterReconstruction rec;
            rec.cluster_id = c;
            rec.failure = "cluster has fewer than 2 frames";
            recs.push_back(std::move(rec));
            continue;
        }
        recs.push_back(reconstruct_cluster(tracks, frames, intr, config, c));
    }
    recs = normalize_scale(std::move(recs), landmark_pair_from_kv(kv));
    io::write_reconstruction(out, recs);

    if (verbose)
        for (const auto& rec : recs) {
            std::cout << "reconstruct: cluster=" << rec.cluster_id
                      << " registered=" << rec.poses.size()
                      << " mean_reproj_px=" << rec.mean_reproj_error
                      << " success=" << (rec.success ? 1 : 0);
            if (!rec.success) std::cout << " reason=\"" << rec.failure << '"';
            std::cout << '\n';
        }
}

/// Reads just the seed/digest header of an affinity file, if present.
void append_affinity_meta(const std::string& results_dir, io::KeyValues& meta) {
    const std::string path = join_path(results_dir, "affinity.txt");
    if (!std::filesystem::exists(path)) return;
    std::ifstream in(path);
    std::string line;
    if (!std::getline(in, line)) return;
    std::istringstream ss(line);
    std::string token;
    while (ss >> token) {
        if (token.rfind("seed=", 0) == 0) meta.emplace_back("affinity_seed", token.substr(5));
        if (token.rfind("digest=", 0) == 0) meta.emplace_back("affinity_digest", token.substr(7));
    }
}

void run_eval(const std::string& truth_dir, const std::string& results_dir, const std::string& out,
              bool verbose) {
    const SceneGroundTruth truth = io::read_scene(truth_dir);
    const io::ClusterFile clusters = io::read_clusters(join_path(results_dir, "clusters.txt"));
    if (static_cast<int>(clusters.labels.size()) != truth.config.n_frames)
        throw io::ParseError("clusters file N=" + std::to_string(clusters.labels.size()) +
                             " does not match truth n_frames=" +
                             std::to_string(truth.config.n_frames));
    const std::vector<ClusterReconstruction> recs =
        io::read_reconstruction(results_dir, clusters.n_clusters);

    ClusterAssignment assign;
    assign.labels = clusters.labels;
    assign.n_clusters = clusters.n_clusters;

    const double limit = success_reproj_limit(truth.config.noise_sigma);
    const EvalReport report = evaluate(recs, assign, truth, limit);

    io::KeyValues meta;
    meta.emplace_back("n_frames", std::to_string(truth.config.n_frames));
    meta.emplace_back("n_points", std::to_string(truth.config.n_points));
    meta.emplace_back("k", std::to_string(clusters.n_clusters));
    meta.emplace_back("noise_sigma", io::format_double(truth.config.noise_sigma));
    meta.emplace_back("success_limit_px", io::format_double(limit));
    meta.emplace_back("scene_seed", std::to_string(truth.config.rng_seed));
    meta.emplace_back("cluster_seed", std::to_string(clusters.seed));
    append_affinity_meta(results_dir, meta);

    io::write_report(join_path(out, "report.txt"), report, meta);
    io::write_cluster_table(join_path(out, "cluster_report.txt"), report);
    io::write_histogram(join_path(out, "histogram.txt"), report);
    if (verbose)
        std::cout << "eval: purity=" << report.purity << " success_ratio=" << report.success_ratio
                  << " mean_shape_rmse=" << report.mean_shape_rmse << " out=" << out << '\n';
}

void run_pipeline(const io::KeyValues& kv, const std::string& out_flag, std::optional<int> k_flag,
                  const Overrides& ov, std::optional<int> workers_flag) {
    const std::string tracks = io::get_required(kv, "tracks");
    const std::string intrinsics = io::get_required(kv, "intrinsics");
    const std::string out = out_flag.empty() ? io::get_required(kv, "out") : out_flag;
    const std::string truth = io::get_or(kv, "truth", "");
    const bool verbose = io::get_or(kv, "log_level", "info") != "quiet";

    int k = 0;
    if (k_flag)
        k = *k_flag;
    else
        k = static_cast<int>(io::to_int(io::get_required(kv, "k"), "k"));

    int workers = 1;
    if (workers_flag)
        workers = *workers_flag;
    else if (const std::string* v = io::find(kv, "workers"))
        workers = parse_workers(*v);

    std::filesystem::create_directories(out);

    // Each stage reads the files the previous stage wrote; `pipeline` is the
    // manual stage sequence, nothing more.
    auto t0 = std::chrono::steady_clock::now();
    run_affinity(tracks, kv, out, ov, workers, verbose);
    const double t_affinity = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    run_cluster(join_path(out, "affinity.txt"), k, kv, out, ov.seed, verbose);
    const double t_cluster = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    run_reconstruct(tracks, join_path(out, "clusters.txt"), intrinsics, kv, out, ov, verbose);
    const double t_reconstruct = seconds_since(t0);

    io::write_timings(join_path(out, "timings.txt"), t_affinity, t_cluster, t_reconstruct);
    if (!truth.empty()) run_eval(truth, out, out, verbose);
}

void run_bench(const std::string& axis_name, const std::string& out,
               std::optional<std::uint64_t> seed, std::optional<int> samples) {
    TimingAxis axis;
    std::vector<double> values;
    if (axis_name == "samples") {
        axis = TimingAxis::kSamples;
        values = {50, 100, 200, 400};
    } else if (axis_name == "points") {
        axis = TimingAxis::kPoints;
        values = {200, 400, 800, 1600};
    } else if (axis_name == "frames") {
        axis = TimingAxis::kFrames;
        values = {20, 40, 80};
    } else {
        throw io::ParseError("axis: expected samples|points|frames, got '" + axis_name + "'");
    }

    SceneConfig base;
    base.schedule = Schedule::kRigid;
    base.n_frames = 6;
    base.n_points = 100;
    base.min_parallax_deg = 5.0;  // timing only; easier camera placement at large N
    base.rng_seed = seed.value_or(0);

    RigidityParams params;
    params.rng_seed = seed.value_or(0);
    if (samples) {
        params.n_samples_f = *samples;
        params.n_samples_h = *samples;
    }

    const TimingSweepResult result = timing_sweep(axis, values, base, params);
    std::cout << "# col " << axis_name << " seconds\n";
    for (const auto& row : result.rows)
        std::cout << row.value << ' ' << row.seconds << '\n';
    std::cout << "bench: axis=" << axis_name << " loglog_slope=" << result.loglog_slope << '\n';

    if (!out.empty()) {
        auto path = join_path(out, ("timing_" + axis_name + ".txt").c_str());
        std::ofstream file(path);
        if (!file) throw std::runtime_error("cannot write " + path);
        file << "# col value seconds\n";
        for (const auto& row : result.rows)
            file << io::format_double(row.value) << ' ' << io::format_double(row.seconds) << '\n';
        file << "# slope " << io::format_double(result.loglog_slope) << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rigidity-clustered structure from motion for recurrent deforming scenes"};
    app.require_subcommand(1);

    std::string config_path, out, tracks, affinity, clusters, intrinsics, truth, results;
    std::string workers_text = "1", axis = "frames";
    std::uint64_t seed = 0;
    int k = 0, samples = 0;
    bool exhaustive = false;

    auto* gen = app.add_subcommand("gen", "generate a synthetic scene directory");
    gen->add_option("--config", config_path, "scene config (key=value)")->required();
    gen->add_option("--out", out, "output scene directory")->required();
    gen->add_option("--seed", seed, "override the config rng seed");

    auto* aff = app.add_subcommand("affinity", "pairwise rigidity scores for a tracks file");
    aff->add_option("--tracks", tracks, "tracks file")->required();
    aff->add_option("--out", out, "output directory")->required();
    aff->add_option("--config", config_path, "rigidity params (key=value)");
    aff->add_option("--seed", seed, "rng seed");
    aff->add_option("--workers", workers_text, "worker threads or 'auto'");
    aff->add_option("--samples", samples, "subset samples per model");
    aff->add_flag("--exhaustive", exhaustive, "enumerate all minimal subsets");

    auto* clu = app.add_subcommand("cluster", "spectral clustering of an affinity matrix");
    clu->add_option("--affinity", affinity, "affinity file")->required();
    clu->add_option("-k", k, "number of clusters")->required();
    clu->add_option("--out", out, "output directory")->required();
    clu->add_option("--config", config_path, "spectral config (key=value)");
    clu->add_option("--seed", seed, "rng seed");

    auto* rec = app.add_subcommand("reconstruct", "rigid reconstruction per cluster");
    rec->add_option("--tracks", tracks, "tracks file")->required();
    rec->add_option("--clusters", clusters, "cluster assignment file")->required();
    rec->add_option("--intrinsics", intrinsics, "intrinsics file")->required();
    rec->add_option("--out", out, "output directory")->required();
    rec->add_option("--config", config_path, "reconstruction params (key=value)");
    rec->add_option("--seed", seed, "rng seed");
    rec->add_option("--samples", samples, "subset samples per model");
    rec->add_flag("--exhaustive", exhaustive, "enumerate all minimal subsets");

    auto* eva = app.add_subcommand("eval", "score results against a generated scene");
    eva->add_option("--truth", truth, "scene directory from gen")->required();
    eva->add_option("--results", results, "directory with clusters + reconstruction")->required();
    eva->add_option("--out", out, "report output directory")->required();

    auto* pip = app.add_subcommand("pipeline", "affinity -> cluster -> reconstruct [-> eval]");
    pip->add_option("--config", config_path, "pipeline config (key=value)")->required();
    pip->add_option("--out", out, "output directory (overrides config)");
    pip->add_option("-k", k, "number of clusters (overrides config)");
    pip->add_option("--seed", seed, "rng seed (overrides config)");
    pip->add_option("--workers", workers_text, "worker threads or 'auto' (overrides config)");
    pip->add_option("--samples", samples, "subset samples per model");
    pip->add_flag("--exhaustive", exhaustive, "enumerate all minimal subsets");

    auto* ben = app.add_subcommand("bench", "affinity-stage timing sweep");
    ben->add_option("--axis", axis, "samples|points|frames");
    ben->add_option("--out", out, "optional output directory");
    ben->add_option("--seed", seed, "rng seed");
    ben->add_option("--samples", samples, "subset samples per model");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const auto flag_given = [](const CLI::App* sub, const std::string& name) {
        const CLI::Option* opt = sub->get_option_no_throw(name);
        return opt != nullptr && opt->count() > 0;
    };

    try {
        const CLI::App* sub = app.get_subcommands().at(0);
        Overrides ov;
        if (flag_given(sub, "--seed")) ov.seed = seed;
        if (flag_given(sub, "--samples")) ov.samples = samples;
        ov.exhaustive = exhaustive;

        if (gen->parsed()) {
            run_gen(config_path, out, ov.seed, true);
        } else if (aff->parsed()) {
            run_affinity(tracks, load_config(config_path), out, ov, parse_workers(workers_text),
                         true);
        } else if (clu->parsed()) {
            run_cluster(affinity, k, load_config(config_path), out, ov.seed, true);
        } else if (rec->parsed()) {
            run_reconstruct(tracks, clusters, intrinsics, load_config(config_path), out, ov, true);
        } else if (eva->parsed()) {
            run_eval(truth, results, out, true);
        } else if (pip->parsed()) {
            run_pipeline(io::read_key_values(config_path), out,
                         flag_given(pip, "-k") ? std::optional<int>(k) : std::nullopt, ov,
                         flag_given(pip, "--workers")
                             ? std::optional<int>(parse_workers(workers_text))
                             : std::nullopt);
        } else if (ben->parsed()) {
            run_bench(axis, out, ov.seed, ov.samples);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
