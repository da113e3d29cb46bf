#pragma once

#include "rsfm/affinity.hpp"
#include "rsfm/reconstruct.hpp"
#include "rsfm/spectral.hpp"
#include "rsfm/synthetic.hpp"
#include "rsfm/types.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rsfm::io {

/// Malformed or missing input. Derives from std::invalid_argument so the
/// CLI's exit-code mapping (invalid input -> 2) catches both.
class ParseError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// 17 significant digits: exact round-trip for IEEE doubles.
std::string format_double(double v);

// ---- key=value files (configs, manifests) ---------------------------------

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Blank lines and lines starting with '#' are skipped; everything else must
/// contain '='. Keys and values are trimmed.
KeyValues read_key_values(const std::string& path);
void write_key_values(const std::string& path, const KeyValues& kv);

/// First match or nullptr.
const std::string* find(const KeyValues& kv, const std::string& key);
const std::string& get_required(const KeyValues& kv, const std::string& key);
std::string get_or(const KeyValues& kv, const std::string& key, const std::string& fallback);

/// Strict scalar parsing; `what` names the offending field in the error.
double to_double(const std::string& text, const std::string& what);
long long to_int(const std::string& text, const std::string& what);
std::uint64_t to_u64(const std::string& text, const std::string& what);
bool to_bool(const std::string& text, const std::string& what);
std::vector<int> to_int_list(const std::string& text, const std::string& what);

// ---- tracks ----------------------------------------------------------------

/// Header `# tracks N=<frames> M=<points>`, then one `frame,point,x,y` line
/// per observation. Every (frame, point) cell must appear exactly once.
void write_tracks(const std::string& path, const TrackSet& tracks);
TrackSet read_tracks(const std::string& path);

// ---- intrinsics -------------------------------------------------------------

/// Single line `fx fy cx cy skew`, shared by all frames.
void write_intrinsics(const std::string& path, const CameraIntrinsics& k);
CameraIntrinsics read_intrinsics(const std::string& path);

// ---- affinity ---------------------------------------------------------------

struct AffinityFile {
    AffinityMatrix affinity;
    std::uint64_t seed = 0;
};

/// Header `# affinity N=<N> seed=<seed> digest=<hex>`, then N rows of N
/// space-separated values at full double precision.
void write_affinity(const std::string& path, const AffinityMatrix& a, std::uint64_t seed);
AffinityFile read_affinity(const std::string& path);

// ---- cluster assignment -----------------------------------------------------

struct ClusterFile {
    std::vector<int> labels;
    int n_clusters = 0;
    std::uint64_t seed = 0;
};

/// Header `# clusters N=<N> K=<K> seed=<seed>`, then `frame_id,cluster_id`
/// lines covering every frame exactly once.
void write_clusters(const std::string& path, const std::vector<int>& labels, int n_clusters,
                    std::uint64_t seed);
ClusterFile read_clusters(const std::string& path);

// ---- geometry files ----------------------------------------------------------

/// ASCII PLY vertex list (double x, y, z).
void write_ply(const std::string& path, const std::vector<Vec3>& vertices);
std::vector<Vec3> read_ply(const std::string& path);

/// Header `# col frame_id r00..r22 t0 t1 t2`, comma-separated rows, one per
/// frame in index order.
void write_poses(const std::string& path, const std::vector<CameraPose>& poses);
std::vector<CameraPose> read_poses(const std::string& path);

// ---- reconstruction results ---------------------------------------------------

/// Writes `cluster_<id>.ply` per successful cluster and `registrations.txt`
/// with rows `frame_id,cluster_id,R(9 row-major),t(3),reproj_px`.
void write_reconstruction(const std::string& dir, const std::vector<ClusterReconstruction>& recs);

/// Rebuilds per-cluster results from the files above; clusters without an
/// output are returned as failed. Poses, per-frame errors, and shapes round
/// trip; diagnostics that only matter in memory (seed pair, dropped-frame
/// lists) do not.
std::vector<ClusterReconstruction> read_reconstruction(const std::string& dir, int n_clusters);

// ---- scene directories ---------------------------------------------------------

KeyValues scene_config_to_kv(const SceneConfig& config);
SceneConfig scene_config_from_kv(const KeyValues& kv);

/// Directory layout: manifest.txt (config + realized per-frame states),
/// tracks.txt (noisy observations), tracks_clean.txt (exact projections),
/// poses.txt, intrinsics.txt, shape_<state>.ply per distinct state.
void write_scene(const std::string& dir, const SceneGroundTruth& truth);
SceneGroundTruth read_scene(const std::string& dir);

// ---- reports --------------------------------------------------------------------

/// `# col key value` table: scores plus any caller-provided metadata rows
/// (seeds, digests). Deterministic: no timestamps, no wall times.
void write_report(const std::string& path, const EvalReport& report, const KeyValues& meta);

/// `# col cluster_id n_frames n_registered majority_state shape_rmse
/// mean_reproj_px success note` rows, one per cluster.
void write_cluster_table(const std::string& path, const EvalReport& report);

/// `# col bin_left bin_right count` rows; header only when the histogram is
/// empty.
void write_histogram(const std::string& path, const EvalReport& report);

/// `# col stage seconds`; wall-clock, deliberately kept out of report.txt so
/// reports stay byte-reproducible.
void write_timings(const std::string& path, double t_affinity_s, double t_cluster_s,
                   double t_reconstruct_s);

}  // namespace rsfm::io
