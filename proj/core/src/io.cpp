#include "rsfm/io.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace rsfm::io {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string::size_type start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    return in;
}

std::ofstream open_output(const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

void finish_output(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + path);
}

/// Next line that is neither blank nor a comment; false at EOF.
bool next_data_line(std::istream& in, std::string& line) {
    while (std::getline(in, line)) {
        line = trim(line);
        if (!line.empty() && line[0] != '#') return true;
    }
    return false;
}

/// First line of the file, which must start with `# <tag>`; returns the rest.
std::string read_header(std::istream& in, const std::string& tag, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    line = trim(line);
    const std::string prefix = "# " + tag;
    if (line.compare(0, prefix.size(), prefix) != 0)
        throw ParseError(path + ": expected header '" + prefix + " ...'");
    return trim(line.substr(prefix.size()));
}

/// Parses `key=value` tokens from a header remainder.
KeyValues header_fields(const std::string& rest, const std::string& path) {
    KeyValues kv;
    std::istringstream ss(rest);
    std::string token;
    while (ss >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) throw ParseError(path + ": bad header token '" + token + "'");
        kv.emplace_back(token.substr(0, eq), token.substr(eq + 1));
    }
    return kv;
}

int to_bounded_int(const std::string& text, const std::string& what, long long lo, long long hi) {
    const long long v = to_int(text, what);
    if (v < lo || v > hi) throw ParseError(what + " out of range: " + text);
    return static_cast<int>(v);
}

std::string shape_path(const std::string& dir, int state) {
    char name[32];
    std::snprintf(name, sizeof(name), "shape_%03d.ply", state);
    return (std::filesystem::path(dir) / name).string();
}

std::string cluster_ply_path(const std::string& dir, int cluster_id) {
    char name[32];
    std::snprintf(name, sizeof(name), "cluster_%03d.ply", cluster_id);
    return (std::filesystem::path(dir) / name).string();
}

std::string join_path(const std::string& dir, const char* name) {
    return (std::filesystem::path(dir) / name).string();
}

std::string schedule_name(Schedule s) {
    switch (s) {
        case Schedule::kRigid: return "rigid";
        case Schedule::kPeriodic: return "periodic";
        case Schedule::kRecurrent: return "recurrent";
        case Schedule::kNonrecurrent: return "nonrecurrent";
    }
    throw std::logic_error("unknown schedule");
}

Schedule schedule_from_name(const std::string& name) {
    if (name == "rigid") return Schedule::kRigid;
    if (name == "periodic") return Schedule::kPeriodic;
    if (name == "recurrent") return Schedule::kRecurrent;
    if (name == "nonrecurrent") return Schedule::kNonrecurrent;
    throw ParseError("unknown schedule '" + name + "'");
}

std::string shape_model_name(ShapeModel m) {
    return m == ShapeModel::kRandomBlob ? "blob" : "chain";
}

ShapeModel shape_model_from_name(const std::string& name) {
    if (name == "blob") return ShapeModel::kRandomBlob;
    if (name == "chain") return ShapeModel::kArticulatedChain;
    throw ParseError("unknown shape_model '" + name + "'");
}

std::string camera_path_name(CameraPath p) {
    return p == CameraPath::kRandomSphere ? "sphere" : "orbit";
}

CameraPath camera_path_from_name(const std::string& name) {
    if (name == "sphere") return CameraPath::kRandomSphere;
    if (name == "orbit") return CameraPath::kOrbit;
    throw ParseError("unknown camera_path '" + name + "'");
}

std::string int_list_to_string(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

/// Sanitized single-token form of a free-text note for space-separated tables.
std::string table_token(const std::string& text) {
    if (text.empty()) return "-";
    std::string out = text;
    std::replace(out.begin(), out.end(), ' ', '_');
    std::replace(out.begin(), out.end(), '\n', '_');
    return out;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---- key=value files ---------------------------------------------------------

KeyValues read_key_values(const std::string& path) {
    auto in = open_input(path);
    KeyValues kv;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(path + ": expected key=value, got '" + line + "'");
        kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
}

void write_key_values(const std::string& path, const KeyValues& kv) {
    auto out = open_output(path);
    for (const auto& [key, value] : kv) out << key << '=' << value << '\n';
    finish_output(out, path);
}

const std::string* find(const KeyValues& kv, const std::string& key) {
    for (const auto& [k, v] : kv)
        if (k == key) return &v;
    return nullptr;
}

const std::string& get_required(const KeyValues& kv, const std::string& key) {
    const std::string* v = find(kv, key);
    if (!v) throw ParseError("missing required key '" + key + "'");
    return *v;
}

std::string get_or(const KeyValues& kv, const std::string& key, const std::string& fallback) {
    const std::string* v = find(kv, key);
    return v ? *v : fallback;
}

double to_double(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    if (t.empty()) throw ParseError(what + ": empty value");
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size() || errno == ERANGE)
        throw ParseError(what + ": not a number: '" + text + "'");
    return v;
}

long long to_int(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    if (t.empty()) throw ParseError(what + ": empty value");
    errno = 0;
    char* end = nullptr;
    const long long v = std::strtoll(t.c_str(), &end, 10);
    if (end != t.c_str() + t.size() || errno == ERANGE)
        throw ParseError(what + ": not an integer: '" + text + "'");
    return v;
}

std::uint64_t to_u64(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    if (t.empty()) throw ParseError(what + ": empty value");
    if (t[0] == '-') throw ParseError(what + ": must be non-negative: '" + text + "'");
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(t.c_str(), &end, 10);
    if (end != t.c_str() + t.size() || errno == ERANGE)
        throw ParseError(what + ": not an unsigned integer: '" + text + "'");
    return static_cast<std::uint64_t>(v);
}

bool to_bool(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    if (t == "1" || t == "true") return true;
    if (t == "0" || t == "false") return false;
    throw ParseError(what + ": expected 0/1/true/false, got '" + text + "'");
}

std::vector<int> to_int_list(const std::string& text, const std::string& what) {
    std::vector<int> out;
    const std::string t = trim(text);
    if (t.empty()) return out;
    for (const auto& part : split(t, ','))
        out.push_back(to_bounded_int(part, what, std::numeric_limits<int>::min(),
                                     std::numeric_limits<int>::max()));
    return out;
}

// ---- tracks --------------------------------------------------------------------

void write_tracks(const std::string& path, const TrackSet& tracks) {
    auto out = open_output(path);
    out << "# tracks N=" << tracks.n_frames << " M=" << tracks.n_points << '\n';
    for (int f = 0; f < tracks.n_frames; ++f)
        for (int p = 0; p < tracks.n_points; ++p) {
            const Vec2& x = tracks.at(f, p);
            out << f << ',' << p << ',' << format_double(x.x()) << ',' << format_double(x.y())
                << '\n';
        }
    finish_output(out, path);
}

TrackSet read_tracks(const std::string& path) {
    auto in = open_input(path);
    const auto fields = header_fields(read_header(in, "tracks", path), path);
    const int n = to_bounded_int(get_required(fields, "N"), path + ": N", 1, 1 << 24);
    const int m = to_bounded_int(get_required(fields, "M"), path + ": M", 1, 1 << 24);

    TrackSet tracks;
    tracks.n_frames = n;
    tracks.n_points = m;
    tracks.obs.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(m), Vec2::Zero());
    std::vector<char> seen(tracks.obs.size(), 0);

    std::string line;
    while (next_data_line(in, line)) {
        const auto parts = split(line, ',');
        if (parts.size() != 4) throw ParseError(path + ": expected frame,point,x,y: '" + line + "'");
        const int f = to_bounded_int(parts[0], path + ": frame", 0, n - 1);
        const int p = to_bounded_int(parts[1], path + ": point", 0, m - 1);
        const double x = to_double(parts[2], path + ": x");
        const double y = to_double(parts[3], path + ": y");
        if (!std::isfinite(x) || !std::isfinite(y))
            throw ParseError(path + ": non-finite observation at frame " + std::to_string(f));
        const std::size_t idx =
            static_cast<std::size_t>(f) * static_cast<std::size_t>(m) + static_cast<std::size_t>(p);
        if (seen[idx])
            throw ParseError(path + ": duplicate entry for frame " + std::to_string(f) + " point " +
                             std::to_string(p));
        seen[idx] = 1;
        tracks.obs[idx] = Vec2(x, y);
    }
    for (std::size_t i = 0; i < seen.size(); ++i)
        if (!seen[i])
            throw ParseError(path + ": missing entry for frame " +
                             std::to_string(i / static_cast<std::size_t>(m)) + " point " +
                             std::to_string(i % static_cast<std::size_t>(m)) +
                             " (complete visibility required)");
    return tracks;
}

// ---- intrinsics -------------------------------------------------------------------

void write_intrinsics(const std::string& path, const CameraIntrinsics& k) {
    auto out = open_output(path);
    out << format_double(k.fx) << ' ' << format_double(k.fy) << ' ' << format_double(k.cx) << ' '
        << format_double(k.cy) << ' ' << format_double(k.skew) << '\n';
    finish_output(out, path);
}

CameraIntrinsics read_intrinsics(const std::string& path) {
    auto in = open_input(path);
    std::string line;
    if (!next_data_line(in, line)) throw ParseError(path + ": no intrinsics line");
    std::istringstream ss(line);
    std::string fx, fy, cx, cy, skew, extra;
    if (!(ss >> fx >> fy >> cx >> cy >> skew) || (ss >> extra))
        throw ParseError(path + ": expected 'fx fy cx cy skew'");
    CameraIntrinsics k;
    k.fx = to_double(fx, path + ": fx");
    k.fy = to_double(fy, path + ": fy");
    k.cx = to_double(cx, path + ": cx");
    k.cy = to_double(cy, path + ": cy");
    k.skew = to_double(skew, path + ": skew");
    if (!(k.fx > 0.0) || !(k.fy > 0.0) || !std::isfinite(k.cx) || !std::isfinite(k.cy) ||
        !std::isfinite(k.skew))
        throw ParseError(path + ": focal lengths must be positive and all entries finite");
    return k;
}

// ---- affinity ----------------------------------------------------------------------

void write_affinity(const std::string& path, const AffinityMatrix& a, std::uint64_t seed) {
    validate_affinity(a.a);
    auto out = open_output(path);
    char digest[32];
    std::snprintf(digest, sizeof(digest), "%016llx", static_cast<unsigned long long>(a.params_digest));
    out << "# affinity N=" << a.a.rows() << " seed=" << seed << " digest=" << digest << '\n';
    for (Eigen::Index i = 0; i < a.a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.a.cols(); ++j) {
            if (j) out << ' ';
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.16e", a.a(i, j));
            out << buf;
        }
        out << '\n';
    }
    finish_output(out, path);
}

AffinityFile read_affinity(const std::string& path) {
    auto in = open_input(path);
    const auto fields = header_fields(read_header(in, "affinity", path), path);
    const int n = to_bounded_int(get_required(fields, "N"), path + ": N", 1, 1 << 20);
    AffinityFile file;
    file.seed = to_u64(get_required(fields, "seed"), path + ": seed");
    const std::string& digest = get_required(fields, "digest");
    errno = 0;
    char* end = nullptr;
    file.affinity.params_digest =
        static_cast<std::uint64_t>(std::strtoull(digest.c_str(), &end, 16));
    if (end != digest.c_str() + digest.size() || errno == ERANGE)
        throw ParseError(path + ": bad digest '" + digest + "'");

    file.affinity.a.resize(n, n);
    std::string line;
    for (int i = 0; i < n; ++i) {
        if (!next_data_line(in, line)) throw ParseError(path + ": expected " + std::to_string(n) +
                                                        " matrix rows, got " + std::to_string(i));
        std::istringstream ss(line);
        std::string token;
        for (int j = 0; j < n; ++j) {
            if (!(ss >> token))
                throw ParseError(path + ": row " + std::to_string(i) + " has fewer than " +
                                 std::to_string(n) + " entries");
            file.affinity.a(i, j) = to_double(token, path + ": a(" + std::to_string(i) + "," +
                                                         std::to_string(j) + ")");
        }
        std::string extra;
        if (ss >> extra)
            throw ParseError(path + ": row " + std::to_string(i) + " has more than " +
                             std::to_string(n) + " entries");
    }
    if (next_data_line(in, line)) throw ParseError(path + ": trailing data after matrix");
    try {
        validate_affinity(file.affinity.a);
    } catch (const std::invalid_argument& e) {
        throw ParseError(path + ": " + e.what());
    }
    return file;
}

// ---- cluster assignment ---------------------------------------------------------------

void write_clusters(const std::string& path, const std::vector<int>& labels, int n_clusters,
                    std::uint64_t seed) {
    auto out = open_output(path);
    out << "# clusters N=" << labels.size() << " K=" << n_clusters << " seed=" << seed << '\n';
    for (std::size_t f = 0; f < labels.size(); ++f) out << f << ',' << labels[f] << '\n';
    finish_output(out, path);
}

ClusterFile read_clusters(const std::string& path) {
    auto in = open_input(path);
    const auto fields = header_fields(read_header(in, "clusters", path), path);
    const int n = to_bounded_int(get_required(fields, "N"), path + ": N", 1, 1 << 24);
    ClusterFile file;
    file.n_clusters = to_bounded_int(get_required(fields, "K"), path + ": K", 1, 1 << 24);
    file.seed = to_u64(get_required(fields, "seed"), path + ": seed");
    file.labels.assign(static_cast<std::size_t>(n), -1);

    std::string line;
    while (next_data_line(in, line)) {
        const auto parts = split(line, ',');
        if (parts.size() != 2)
            throw ParseError(path + ": expected frame_id,cluster_id: '" + line + "'");
        const int f = to_bounded_int(parts[0], path + ": frame_id", 0, n - 1);
        const int c = to_bounded_int(parts[1], path + ": cluster_id", 0, file.n_clusters - 1);
        if (file.labels[static_cast<std::size_t>(f)] != -1)
            throw ParseError(path + ": duplicate frame_id " + std::to_string(f));
        file.labels[static_cast<std::size_t>(f)] = c;
    }
    for (int f = 0; f < n; ++f)
        if (file.labels[static_cast<std::size_t>(f)] == -1)
            throw ParseError(path + ": missing frame_id " + std::to_string(f));
    return file;
}

// ---- geometry files ---------------------------------------------------------------------

void write_ply(const std::string& path, const std::vector<Vec3>& vertices) {
    auto out = open_output(path);
    out << "ply\nformat ascii 1.0\nelement vertex " << vertices.size()
        << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
    for (const Vec3& v : vertices)
        out << format_double(v.x()) << ' ' << format_double(v.y()) << ' ' << format_double(v.z())
            << '\n';
    finish_output(out, path);
}

std::vector<Vec3> read_ply(const std::string& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line) || trim(line) != "ply") throw ParseError(path + ": not a PLY file");
    long long n_vertices = -1;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line == "end_header") break;
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        if (word == "element") {
            std::string kind;
            ss >> kind;
            if (kind != "vertex") throw ParseError(path + ": unsupported element '" + kind + "'");
            std::string count;
            ss >> count;
            n_vertices = to_int(count, path + ": vertex count");
        } else if (word == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt != "ascii") throw ParseError(path + ": only ascii PLY is supported");
        }
    }
    if (n_vertices < 0) throw ParseError(path + ": missing 'element vertex' line");
    std::vector<Vec3> vertices;
    vertices.reserve(static_cast<std::size_t>(n_vertices));
    for (long long i = 0; i < n_vertices; ++i) {
        if (!next_data_line(in, line))
            throw ParseError(path + ": expected " + std::to_string(n_vertices) + " vertices, got " +
                             std::to_string(i));
        std::istringstream ss(line);
        std::string x, y, z;
        if (!(ss >> x >> y >> z)) throw ParseError(path + ": bad vertex line '" + line + "'");
        vertices.emplace_back(to_double(x, path + ": x"), to_double(y, path + ": y"),
                              to_double(z, path + ": z"));
    }
    return vertices;
}

namespace {

void write_pose_row(std::ofstream& out, int frame_id, const CameraPose& pose) {
    out << frame_id;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out << ',' << format_double(pose.R(r, c));
    for (int r = 0; r < 3; ++r) out << ',' << format_double(pose.t(static_cast<Eigen::Index>(r)));
}

CameraPose parse_pose_fields(const std::vector<std::string>& parts, std::size_t offset,
                             const std::string& path) {
    CameraPose pose;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            pose.R(r, c) = to_double(parts[offset + static_cast<std::size_t>(3 * r + c)],
                                     path + ": rotation entry");
    for (int r = 0; r < 3; ++r)
        pose.t(static_cast<Eigen::Index>(r)) =
            to_double(parts[offset + 9 + static_cast<std::size_t>(r)], path + ": translation entry");
    return pose;
}

}  // namespace

void write_poses(const std::string& path, const std::vector<CameraPose>& poses) {
    auto out = open_output(path);
    out << "# col frame_id r00 r01 r02 r10 r11 r12 r20 r21 r22 t0 t1 t2\n";
    for (std::size_t f = 0; f < poses.size(); ++f) {
        write_pose_row(out, static_cast<int>(f), poses[f]);
        out << '\n';
    }
    finish_output(out, path);
}

std::vector<CameraPose> read_poses(const std::string& path) {
    auto in = open_input(path);
    std::vector<CameraPose> poses;
    std::string line;
    while (next_data_line(in, line)) {
        const auto parts = split(line, ',');
        if (parts.size() != 13)
            throw ParseError(path + ": expected 13 comma-separated fields: '" + line + "'");
        const int f = to_bounded_int(parts[0], path + ": frame_id", 0, 1 << 24);
        if (f != static_cast<int>(poses.size()))
            throw ParseError(path + ": frame ids must be 0..N-1 in order, got " +
                             std::to_string(f));
        poses.push_back(parse_pose_fields(parts, 1, path));
    }
    if (poses.empty()) throw ParseError(path + ": no poses");
    return poses;
}

// ---- reconstruction results ------------------------------------------------------------------

void write_reconstruction(const std::string& dir, const std::vector<ClusterReconstruction>& recs) {
    std::filesystem::create_directories(dir);
    auto out = open_output(join_path(dir, "registrations.txt"));
    out << "# col frame_id cluster_id r00 r01 r02 r10 r11 r12 r20 r21 r22 t0 t1 t2 reproj_px\n";
    for (const auto& rec : recs) {
        if (!rec.success) continue;
        for (const auto& [frame, pose] : rec.poses) {
            out << frame << ',' << rec.cluster_id;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) out << ',' << format_double(pose.R(r, c));
            for (int r = 0; r < 3; ++r)
                out << ',' << format_double(pose.t(static_cast<Eigen::Index>(r)));
            const auto it = rec.frame_reproj.find(frame);
            out << ',' << format_double(it == rec.frame_reproj.end() ? 0.0 : it->second) << '\n';
        }
    }
    finish_output(out, join_path(dir, "registrations.txt"));
    for (const auto& rec : recs)
        if (rec.success) write_ply(cluster_ply_path(dir, rec.cluster_id), rec.shape);
}

std::vector<ClusterReconstruction> read_reconstruction(const std::string& dir, int n_clusters) {
    const std::string reg_path = join_path(dir, "registrations.txt");
    std::map<int, std::map<int, std::pair<CameraPose, double>>> by_cluster;
    if (std::filesystem::exists(reg_path)) {
        auto in = open_input(reg_path);
        std::string line;
        while (next_data_line(in, line)) {
            const auto parts = split(line, ',');
            if (parts.size() != 15)
                throw ParseError(reg_path + ": expected 15 comma-separated fields: '" + line + "'");
            const int frame = to_bounded_int(parts[0], reg_path + ": frame_id", 0, 1 << 24);
            const int cluster =
                to_bounded_int(parts[1], reg_path + ": cluster_id", 0, n_clusters - 1);
            const CameraPose pose = parse_pose_fields(parts, 2, reg_path);
            const double reproj = to_double(parts[14], reg_path + ": reproj_px");
            if (!by_cluster[cluster].emplace(frame, std::make_pair(pose, reproj)).second)
                throw ParseError(reg_path + ": duplicate frame " + std::to_string(frame) +
                                 " in cluster " + std::to_string(cluster));
        }
    }

    std::vector<ClusterReconstruction> recs(static_cast<std::size_t>(n_clusters));
    for (int c = 0; c < n_clusters; ++c) {
        ClusterReconstruction& rec = recs[static_cast<std::size_t>(c)];
        rec.cluster_id = c;
        const std::string ply = cluster_ply_path(dir, c);
        const auto rows = by_cluster.find(c);
        if (!std::filesystem::exists(ply) || rows == by_cluster.end()) {
            rec.failure = "no reconstruction output";
            continue;
        }
        rec.shape = read_ply(ply);
        double total = 0.0;
        for (const auto& [frame, entry] : rows->second) {
            rec.poses[frame] = entry.first;
            rec.frame_reproj[frame] = entry.second;
            total += entry.second;
        }
        rec.mean_reproj_error = total / static_cast<double>(rows->second.size());
        rec.success = !rec.shape.empty() && rec.poses.size() >= 2;
        if (!rec.success) rec.failure = "incomplete reconstruction output";
    }
    return recs;
}

// ---- scene directories --------------------------------------------------------------------------

KeyValues scene_config_to_kv(const SceneConfig& config) {
    KeyValues kv;
    kv.emplace_back("n_frames", std::to_string(config.n_frames));
    kv.emplace_back("n_points", std::to_string(config.n_points));
    kv.emplace_back("schedule", schedule_name(config.schedule));
    kv.emplace_back("period", std::to_string(config.period));
    if (!config.state_ids.empty()) kv.emplace_back("state_ids", int_list_to_string(config.state_ids));
    kv.emplace_back("shape_model", shape_model_name(config.shape_model));
    kv.emplace_back("chain_segments", std::to_string(config.chain_segments));
    kv.emplace_back("camera_path", camera_path_name(config.camera_path));
    kv.emplace_back("radius_min", format_double(config.radius_min));
    kv.emplace_back("radius_max", format_double(config.radius_max));
    kv.emplace_back("fx", format_double(config.intrinsics.fx));
    kv.emplace_back("fy", format_double(config.intrinsics.fy));
    kv.emplace_back("cx", format_double(config.intrinsics.cx));
    kv.emplace_back("cy", format_double(config.intrinsics.cy));
    kv.emplace_back("skew", format_double(config.intrinsics.skew));
    kv.emplace_back("image_width", std::to_string(config.image_width));
    kv.emplace_back("image_height", std::to_string(config.image_height));
    kv.emplace_back("noise_sigma", format_double(config.noise_sigma));
    kv.emplace_back("rng_seed", std::to_string(config.rng_seed));
    kv.emplace_back("min_state_separation", format_double(config.min_state_separation));
    kv.emplace_back("min_parallax_deg", format_double(config.min_parallax_deg));
    kv.emplace_back("max_retries", std::to_string(config.max_retries));
    return kv;
}

SceneConfig scene_config_from_kv(const KeyValues& kv) {
    SceneConfig config;
    const auto geti = [&](const char* key, int fallback) {
        const std::string* v = find(kv, key);
        return v ? to_bounded_int(*v, key, std::numeric_limits<int>::min(),
                                  std::numeric_limits<int>::max())
                 : fallback;
    };
    const auto getd = [&](const char* key, double fallback) {
        const std::string* v = find(kv, key);
        return v ? to_double(*v, key) : fallback;
    };
    config.n_frames = geti("n_frames", config.n_frames);
    config.n_points = geti("n_points", config.n_points);
    if (const std::string* v = find(kv, "schedule")) config.schedule = schedule_from_name(*v);
    config.period = geti("period", config.period);
    if (const std::string* v = find(kv, "state_ids"))
        config.state_ids = to_int_list(*v, "state_ids");
    if (const std::string* v = find(kv, "shape_model"))
        config.shape_model = shape_model_from_name(*v);
    config.chain_segments = geti("chain_segments", config.chain_segments);
    if (const std::string* v = find(kv, "camera_path"))
        config.camera_path = camera_path_from_name(*v);
    config.radius_min = getd("radius_min", config.radius_min);
    config.radius_max = getd("radius_max", config.radius_max);
    config.intrinsics.fx = getd("fx", config.intrinsics.fx);
    config.intrinsics.fy = getd("fy", config.intrinsics.fy);
    config.intrinsics.cx = getd("cx", config.intrinsics.cx);
    config.intrinsics.cy = getd("cy", config.intrinsics.cy);
    config.intrinsics.skew = getd("skew", config.intrinsics.skew);
    config.image_width = geti("image_width", config.image_width);
    config.image_height = geti("image_height", config.image_height);
    config.noise_sigma = getd("noise_sigma", config.noise_sigma);
    if (const std::string* v = find(kv, "rng_seed")) config.rng_seed = to_u64(*v, "rng_seed");
    config.min_state_separation = getd("min_state_separation", config.min_state_separation);
    config.min_parallax_deg = getd("min_parallax_deg", config.min_parallax_deg);
    config.max_retries = geti("max_retries", config.max_retries);
    return config;
}

void write_scene(const std::string& dir, const SceneGroundTruth& truth) {
    std::filesystem::create_directories(dir);
    KeyValues manifest = scene_config_to_kv(truth.config);
    manifest.emplace_back("n_states", std::to_string(truth.shapes.size()));
    manifest.emplace_back("states", int_list_to_string(truth.state_of_frame));
    write_key_values(join_path(dir, "manifest.txt"), manifest);
    write_intrinsics(join_path(dir, "intrinsics.txt"), truth.config.intrinsics);
    write_tracks(join_path(dir, "tracks.txt"), truth.noisy_tracks);
    write_tracks(join_path(dir, "tracks_clean.txt"), truth.tracks);
    write_poses(join_path(dir, "poses.txt"), truth.poses);
    for (std::size_t s = 0; s < truth.shapes.size(); ++s)
        write_ply(shape_path(dir, static_cast<int>(s)), truth.shapes[s]);
}

SceneGroundTruth read_scene(const std::string& dir) {
    const auto manifest = read_key_values(join_path(dir, "manifest.txt"));
    SceneGroundTruth truth;
    truth.config = scene_config_from_kv(manifest);
    const int n_states =
        to_bounded_int(get_required(manifest, "n_states"), "n_states", 1, 1 << 20);
    truth.state_of_frame = to_int_list(get_required(manifest, "states"), "states");
    if (static_cast<int>(truth.state_of_frame.size()) != truth.config.n_frames)
        throw ParseError(dir + ": manifest states length != n_frames");
    for (int s : truth.state_of_frame)
        if (s < 0 || s >= n_states) throw ParseError(dir + ": state id out of range");

    truth.shapes.resize(static_cast<std::size_t>(n_states));
    for (int s = 0; s < n_states; ++s) {
        truth.shapes[static_cast<std::size_t>(s)] = read_ply(shape_path(dir, s));
        if (static_cast<int>(truth.shapes[static_cast<std::size_t>(s)].size()) !=
            truth.config.n_points)
            throw ParseError(dir + ": shape " + std::to_string(s) + " has wrong vertex count");
    }
    truth.poses = read_poses(join_path(dir, "poses.txt"));
    if (static_cast<int>(truth.poses.size()) != truth.config.n_frames)
        throw ParseError(dir + ": poses file frame count != n_frames");
    truth.tracks = read_tracks(join_path(dir, "tracks_clean.txt"));
    truth.noisy_tracks = read_tracks(join_path(dir, "tracks.txt"));
    for (const TrackSet* t : {&truth.tracks, &truth.noisy_tracks})
        if (t->n_frames != truth.config.n_frames || t->n_points != truth.config.n_points)
            throw ParseError(dir + ": tracks dimensions disagree with manifest");
    return truth;
}

// ---- reports ----------------------------------------------------------------------------------------

void write_report(const std::string& path, const EvalReport& report, const KeyValues& meta) {
    auto out = open_output(path);
    out << "# col key value\n";
    out << "purity " << format_double(report.purity) << '\n';
    out << "success_ratio " << format_double(report.success_ratio) << '\n';
    out << "mean_shape_rmse " << format_double(report.mean_shape_rmse) << '\n';
    out << "n_clusters " << report.clusters.size() << '\n';
    long long n_success = 0;
    for (const auto& c : report.clusters) n_success += c.success ? 1 : 0;
    out << "n_successful_clusters " << n_success << '\n';
    for (const auto& [key, value] : meta) out << key << ' ' << table_token(value) << '\n';
    finish_output(out, path);
}

void write_cluster_table(const std::string& path, const EvalReport& report) {
    auto out = open_output(path);
    out << "# col cluster_id n_frames n_registered majority_state shape_rmse mean_reproj_px "
           "success note\n";
    for (const auto& c : report.clusters)
        out << c.cluster_id << ' ' << c.n_frames << ' ' << c.n_registered << ' '
            << c.majority_state << ' ' << format_double(c.shape_rmse) << ' '
            << format_double(c.mean_reproj_px) << ' ' << (c.success ? 1 : 0) << ' '
            << table_token(c.note) << '\n';
    finish_output(out, path);
}

void write_histogram(const std::string& path, const EvalReport& report) {
    auto out = open_output(path);
    out << "# col bin_left bin_right count\n";
    for (std::size_t b = 0; b + 1 < report.hist_edges.size(); ++b)
        out << format_double(report.hist_edges[b]) << ' ' << format_double(report.hist_edges[b + 1])
            << ' ' << report.hist_counts[b] << '\n';
    finish_output(out, path);
}

void write_timings(const std::string& path, double t_affinity_s, double t_cluster_s,
                   double t_reconstruct_s) {
    auto out = open_output(path);
    out << "# col stage seconds\n";
    out << "affinity " << format_double(t_affinity_s) << '\n';
    out << "cluster " << format_double(t_cluster_s) << '\n';
    out << "reconstruct " << format_double(t_reconstruct_s) << '\n';
    out << "total " << format_double(t_affinity_s + t_cluster_s + t_reconstruct_s) << '\n';
    finish_output(out, path);
}

}  // namespace rsfm::io
