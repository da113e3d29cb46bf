#include "rsfm/geometry.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace rsfm {
namespace {

Vec3 homog(const Vec2& p) { return {p.x(), p.y(), 1.0}; }

/// Rank check shared by the minimal fits: the 9-column design pins down a
/// unique model only when its rank is 8, so a sample is unusable whenever
/// the 8th singular value vanishes (the nullspace is then at least
/// two-dimensional and V's last column is arbitrary within it).
bool rank_deficient(const Eigen::JacobiSVD<Eigen::MatrixXd>& svd) {
    const auto& sv = svd.singularValues();
    if (sv(0) <= 0.0 || sv.size() < 8) return true;
    return sv(7) < kDegenerateSvRatio * sv(0);
}

Mat3 vec_to_mat3(const Eigen::VectorXd& v) {
    Mat3 m;
    m << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8);
    return m;
}

Eigen::MatrixXd epipolar_design(std::span<const Vec2> x, std::span<const Vec2> x_prime) {
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd a(n, 9);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = x[i].x(), v = x[i].y();
        const double up = x_prime[i].x(), vp = x_prime[i].y();
        a.row(i) << up * u, up * v, up, vp * u, vp * v, vp, u, v, 1.0;
    }
    return a;
}

std::optional<FundamentalMatrix> fit_fundamental_impl(std::span<const Vec2> x,
                                                      std::span<const Vec2> x_prime,
                                                      bool check_rank) {
    if (x.size() != x_prime.size() || x.size() < 8)
        throw std::invalid_argument("fundamental fit needs >= 8 paired correspondences");

    NormalizedPoints n1, n2;
    try {
        n1 = normalize_points(x);
        n2 = normalize_points(x_prime);
    } catch (const DegenerateError&) {
        return std::nullopt;
    }

    Eigen::MatrixXd a = epipolar_design(n1.points, n2.points);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    if (check_rank && rank_deficient(svd)) return std::nullopt;

    Mat3 fn = vec_to_mat3(svd.matrixV().col(8));

    // Enforce rank 2 in the normalized frame, then undo the conditioning.
    Eigen::JacobiSVD<Mat3> fsvd(fn, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vec3 s = fsvd.singularValues();
    s(2) = 0.0;
    fn = fsvd.matrixU() * s.asDiagonal() * fsvd.matrixV().transpose();

    Mat3 f = n2.transform.transpose() * fn * n1.transform;
    const double norm = f.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) return std::nullopt;
    return FundamentalMatrix{f / norm};
}

double dehomog_distance(const Vec3& mapped, const Vec2& target, double max_distance) {
    constexpr double kWEps = 1e-12;
    if (std::abs(mapped.z()) < kWEps * mapped.head<2>().norm() || mapped.z() == 0.0)
        return max_distance;
    const Vec2 p = mapped.head<2>() / mapped.z();
    return std::min((p - target).norm(), max_distance);
}

Eigen::Matrix<double, 3, 4> projection_matrix(const CameraPose& pose,
                                              const CameraIntrinsics& k) {
    Eigen::Matrix<double, 3, 4> p;
    p.leftCols<3>() = pose.R;
    p.col(3) = pose.t;
    return k.matrix() * p;
}

}  // namespace

Mat3 skew3(const Vec3& w) {
    Mat3 m;
    m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
    return m;
}

Mat3 so3_exp(const Vec3& w) {
    const double theta = w.norm();
    if (theta < 1e-12) return Mat3::Identity() + skew3(w);
    const Mat3 k = skew3(w / theta);
    return Mat3::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * k * k;
}

NormalizedPoints normalize_points(std::span<const Vec2> pts) {
    if (pts.empty()) throw std::invalid_argument("normalize_points: empty input");

    Vec2 centroid = Vec2::Zero();
    for (const Vec2& p : pts) centroid += p;
    centroid /= static_cast<double>(pts.size());

    double mean_dist = 0.0;
    for (const Vec2& p : pts) mean_dist += (p - centroid).norm();
    mean_dist /= static_cast<double>(pts.size());
    if (mean_dist <= 0.0 || !std::isfinite(mean_dist))
        throw DegenerateError("normalize_points: coincident points");

    const double scale = std::sqrt(2.0) / mean_dist;
    NormalizedPoints out;
    out.transform << scale, 0.0, -scale * centroid.x(),
                     0.0, scale, -scale * centroid.y(),
                     0.0, 0.0, 1.0;
    out.points.reserve(pts.size());
    for (const Vec2& p : pts) out.points.push_back(scale * (p - centroid));
    return out;
}

std::optional<FundamentalMatrix> fit_fundamental_8pt(std::span<const Vec2> x,
                                                     std::span<const Vec2> x_prime) {
    if (x.size() != 8 || x_prime.size() != 8)
        throw std::invalid_argument("fit_fundamental_8pt: exactly 8 correspondences");
    return fit_fundamental_impl(x, x_prime, /*check_rank=*/true);
}

std::optional<FundamentalMatrix> fit_fundamental_all(std::span<const Vec2> x,
                                                     std::span<const Vec2> x_prime) {
    return fit_fundamental_impl(x, x_prime, /*check_rank=*/false);
}

std::optional<Homography> fit_homography_4pt(std::span<const Vec2> x,
                                             std::span<const Vec2> x_prime) {
    if (x.size() != 4 || x_prime.size() != 4)
        throw std::invalid_argument("fit_homography_4pt: exactly 4 correspondences");

    NormalizedPoints n1, n2;
    try {
        n1 = normalize_points(x);
        n2 = normalize_points(x_prime);
    } catch (const DegenerateError&) {
        return std::nullopt;
    }

    Eigen::MatrixXd a(8, 9);
    for (int i = 0; i < 4; ++i) {
        const double u = n1.points[i].x(), v = n1.points[i].y();
        const double up = n2.points[i].x(), vp = n2.points[i].y();
        a.row(2 * i) << -u, -v, -1.0, 0.0, 0.0, 0.0, up * u, up * v, up;
        a.row(2 * i + 1) << 0.0, 0.0, 0.0, -u, -v, -1.0, vp * u, vp * v, vp;
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    if (rank_deficient(svd)) return std::nullopt;

    Mat3 hn = vec_to_mat3(svd.matrixV().col(8));
    Mat3 h = n2.transform.inverse() * hn * n1.transform;
    const double norm = h.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) return std::nullopt;
    return Homography{h / norm};
}

double epipolar_distance(const FundamentalMatrix& f, const Vec2& x, const Vec2& x_prime,
                         double max_distance) {
    const Vec3 line = f.m * homog(x);
    const double len = line.head<2>().norm();
    if (len < 1e-15) return max_distance;
    return std::min(std::abs(homog(x_prime).dot(line)) / len, max_distance);
}

double symmetric_epipolar_distance(const FundamentalMatrix& f, const Vec2& x,
                                   const Vec2& x_prime, double max_distance) {
    const FundamentalMatrix ft{f.m.transpose().eval()};
    return std::max(epipolar_distance(f, x, x_prime, max_distance),
                    epipolar_distance(ft, x_prime, x, max_distance));
}

double homography_distance(const Homography& h, const Vec2& x, const Vec2& x_prime,
                           double max_distance) {
    return dehomog_distance(h.m * homog(x), x_prime, max_distance);
}

Mat3 essential_from_fundamental(const FundamentalMatrix& f, const CameraIntrinsics& k1,
                                const CameraIntrinsics& k2) {
    const Mat3 e_raw = k2.matrix().transpose() * f.m * k1.matrix();
    Eigen::JacobiSVD<Mat3> svd(e_raw, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3 sv = svd.singularValues();
    const double s = 0.5 * (sv(0) + sv(1));
    const Vec3 projected(s, s, 0.0);
    return svd.matrixU() * projected.asDiagonal() * svd.matrixV().transpose();
}

std::array<CameraPose, 4> decompose_essential(const Mat3& e) {
    Eigen::JacobiSVD<Mat3> svd(e, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU();
    Mat3 v = svd.matrixV();
    if (u.determinant() < 0.0) u = -u;
    if (v.determinant() < 0.0) v = -v;

    Mat3 w;
    w << 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0;

    const Mat3 r1 = u * w * v.transpose();
    const Mat3 r2 = u * w.transpose() * v.transpose();
    Vec3 t = u.col(2);
    const double tn = t.norm();
    if (tn > 0.0) t /= tn;

    return {CameraPose{r1, t}, CameraPose{r1, -t}, CameraPose{r2, t}, CameraPose{r2, -t}};
}

Vec3 triangulate(const CameraPose& pose1, const CameraPose& pose2,
                 const CameraIntrinsics& k1, const CameraIntrinsics& k2,
                 const Vec2& x1, const Vec2& x2) {
    if ((pose1.center() - pose2.center()).norm() < 1e-12)
        throw ZeroParallaxError("triangulate: coincident camera centers");

    const Eigen::Matrix<double, 3, 4> p1 = projection_matrix(pose1, k1);
    const Eigen::Matrix<double, 3, 4> p2 = projection_matrix(pose2, k2);

    Eigen::Matrix4d a;
    a.row(0) = x1.x() * p1.row(2) - p1.row(0);
    a.row(1) = x1.y() * p1.row(2) - p1.row(1);
    a.row(2) = x2.x() * p2.row(2) - p2.row(0);
    a.row(3) = x2.y() * p2.row(2) - p2.row(1);

    Eigen::JacobiSVD<Eigen::Matrix4d> svd(a, Eigen::ComputeFullV);
    const Eigen::Vector4d xh = svd.matrixV().col(3);
    if (std::abs(xh(3)) < 1e-15)
        throw ZeroParallaxError("triangulate: point at infinity");
    return xh.head<3>() / xh(3);
}

int cheirality_count(const CameraPose& pose1, const CameraPose& pose2,
                     const CameraIntrinsics& k1, const CameraIntrinsics& k2,
                     const CorrespondenceSet& corrs) {
    if (corrs.size() == 0) return 0;
    if ((pose1.center() - pose2.center()).norm() < 1e-12) return 0;

    int count = 0;
    for (std::size_t i = 0; i < corrs.size(); ++i) {
        Vec3 p;
        try {
            p = triangulate(pose1, pose2, k1, k2, corrs.x[i], corrs.x_prime[i]);
        } catch (const ZeroParallaxError&) {
            continue;
        }
        if (depth(pose1, p) > 0.0 && depth(pose2, p) > 0.0) ++count;
    }
    return count;
}

CameraPose pnp(std::span<const Vec3> points3, std::span<const Vec2> points2,
               const CameraIntrinsics& k) {
    if (points3.size() != points2.size() || points3.size() < 6)
        throw std::invalid_argument("pnp: needs >= 6 paired points");

    // Work in normalized camera coordinates so the DLT recovers [R|t] directly.
    const Mat3 kinv = k.matrix().inverse();
    const auto n = static_cast<Eigen::Index>(points3.size());

    Eigen::MatrixXd a(2 * n, 12);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3 xn = kinv * homog(points2[static_cast<std::size_t>(i)]);
        const double u = xn.x() / xn.z(), v = xn.y() / xn.z();
        const Vec3& p = points3[static_cast<std::size_t>(i)];
        Eigen::RowVector4d ph(p.x(), p.y(), p.z(), 1.0);
        a.row(2 * i) << ph, Eigen::RowVector4d::Zero(), -u * ph;
        a.row(2 * i + 1) << Eigen::RowVector4d::Zero(), ph, -v * ph;
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (sv(0) <= 0.0 || sv(10) < kDegenerateSvRatio * sv(0))
        throw DegenerateError("pnp: coplanar or otherwise underconstrained points");

    const Eigen::VectorXd sol = svd.matrixV().col(11);
    Eigen::Matrix<double, 3, 4> p;
    p << sol(0), sol(1), sol(2), sol(3),
         sol(4), sol(5), sol(6), sol(7),
         sol(8), sol(9), sol(10), sol(11);

    // Majority of the scene must sit in front of the camera.
    int positive = 0;
    for (const Vec3& q : points3) {
        const double w = p.row(2).dot(Eigen::Vector4d(q.x(), q.y(), q.z(), 1.0));
        if (w > 0.0) ++positive;
    }
    if (2 * positive < static_cast<int>(points3.size())) p = -p;

    Eigen::JacobiSVD<Mat3> msvd(p.leftCols<3>(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    const double scale = msvd.singularValues().mean();
    if (scale < 1e-15) throw DegenerateError("pnp: singular rotation block");

    Mat3 r = msvd.matrixU() * msvd.matrixV().transpose();
    if (r.determinant() < 0.0) r = -r;
    Vec3 t = p.col(3) / scale;

    // Gauss-Newton refinement of (w, t), rotation updated on the left.
    CameraPose pose{r, t};
    for (int iter = 0; iter < 20; ++iter) {
        Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
        double err2 = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const Vec3& q = points3[static_cast<std::size_t>(i)];
            const Vec3 pc = pose.R * q + pose.t;
            if (pc.z() <= 1e-12) continue;
            const Vec3 proj = k.matrix() * pc;
            const Vec2 res = proj.head<2>() / proj.z() - points2[static_cast<std::size_t>(i)];
            err2 += res.squaredNorm();

            Eigen::Matrix<double, 2, 3> dproj;  // d(pixel)/d(camera point)
            const double iz = 1.0 / proj.z();
            dproj << k.fx * iz, k.skew * iz, (k.cx - proj.x() * iz) * iz,
                     0.0, k.fy * iz, (k.cy - proj.y() * iz) * iz;
            // proj = K pc, z-row of K is (0,0,1) so proj.z() == pc.z().
            // Left-perturbed rotation: d(exp(w) R q)/dw at 0 is -[R q]x.
            Eigen::Matrix<double, 2, 6> j;
            j.leftCols<3>() = dproj * (-skew3(pc - pose.t));
            j.rightCols<3>() = dproj;
            h += j.transpose() * j;
            g += j.transpose() * res;
        }
        const Eigen::Matrix<double, 6, 1> delta =
            (h + 1e-9 * Eigen::Matrix<double, 6, 6>::Identity()).ldlt().solve(-g);
        if (!delta.allFinite()) break;
        pose.R = so3_exp(delta.head<3>()) * pose.R;
        pose.t += delta.tail<3>();
        if (delta.norm() < 1e-12) break;
        (void)err2;
    }
    return pose;
}

SimilarityTransform procrustes_similarity(std::span<const Vec3> source,
                                          std::span<const Vec3> target) {
    if (source.size() != target.size() || source.size() < 3)
        throw std::invalid_argument("procrustes_similarity: needs >= 3 paired points");
    const auto n = static_cast<double>(source.size());

    Vec3 mu_s = Vec3::Zero(), mu_t = Vec3::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) {
        mu_s += source[i];
        mu_t += target[i];
    }
    mu_s /= n;
    mu_t /= n;

    Mat3 cov = Mat3::Zero();
    double var_s = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
        const Vec3 ds = source[i] - mu_s;
        cov += (target[i] - mu_t) * ds.transpose();
        var_s += ds.squaredNorm();
    }
    cov /= n;
    var_s /= n;
    if (var_s < 1e-24) throw DegenerateError("procrustes_similarity: coincident source");

    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3 d = svd.singularValues();
    if (d(1) < 1e-12 * std::max(d(0), 1e-300))
        throw DegenerateError("procrustes_similarity: collinear source");

    Vec3 s_diag = Vec3::Ones();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s_diag(2) = -1.0;

    SimilarityTransform out;
    out.R = svd.matrixU() * s_diag.asDiagonal() * svd.matrixV().transpose();
    out.s = d.dot(s_diag) / var_s;
    out.t = mu_t - out.s * (out.R * mu_s);
    return out;
}

double procrustes_rmse(std::span<const Vec3> source, std::span<const Vec3> target) {
    const SimilarityTransform sim = procrustes_similarity(source, target);
    double acc = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i)
        acc += (sim.apply(source[i]) - target[i]).squaredNorm();
    return std::sqrt(acc / static_cast<double>(source.size()));
}

}  // namespace rsfm
