#pragma once

// Hand-built two-view scenes for testing. Everything here is computed from
// the projective equations directly (own look-at, own F = K2^-T [t]x R K1^-1)
// so library results can be checked against an independent construction.

#include "rsfm/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <vector>

namespace fixtures {

using rsfm::CameraIntrinsics;
using rsfm::CameraPose;
using rsfm::CorrespondenceSet;
using rsfm::Mat3;
using rsfm::Vec2;
using rsfm::Vec3;

// xorshift-based generator local to the fixtures so they never share streams
// with the library under test.
class Lcg {
public:
    explicit Lcg(std::uint64_t seed) : state_(seed ? seed : 0x2545f4914f6cdd1dULL) {}

    std::uint64_t next() {
        state_ ^= state_ << 13;
        state_ ^= state_ >> 7;
        state_ ^= state_ << 17;
        return state_;
    }

    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * rsfm::kPi * u2);
    }

private:
    std::uint64_t state_;
};

inline Mat3 cross_matrix(const Vec3& w) {
    Mat3 m;
    m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
    return m;
}

// World-to-camera pose with the optical axis pointing from `center` to
// `target`. Built by orthonormalizing against world up (or world x when the
// axis is vertical), independent of the library's look_at.
inline CameraPose pose_looking_at(const Vec3& center, const Vec3& target) {
    const Vec3 forward = (target - center).normalized();
    Vec3 up(0.0, 1.0, 0.0);
    if (std::abs(forward.dot(up)) > 0.99) up = Vec3(1.0, 0.0, 0.0);
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right).normalized();
    Mat3 r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    CameraPose pose;
    pose.R = r;
    pose.t = -r * center;
    return pose;
}

// F such that x2^T F x1 = 0 for projections (x1, x2) of any world point,
// assembled from the relative pose: F = K2^-T [t_rel]x R_rel K1^-1 with
// R_rel = R2 R1^T and t_rel = t2 - R_rel t1. Scaled to unit Frobenius norm
// with a sign convention matching the library (largest |entry| positive).
inline Mat3 true_fundamental(const CameraPose& p1, const CameraPose& p2,
                             const CameraIntrinsics& k1, const CameraIntrinsics& k2) {
    const Mat3 r_rel = p2.R * p1.R.transpose();
    const Vec3 t_rel = p2.t - r_rel * p1.t;
    Mat3 f = k2.matrix().inverse().transpose() * cross_matrix(t_rel) * r_rel *
             k1.matrix().inverse();
    f /= f.norm();
    int mi = 0, mj = 0;
    f.cwiseAbs().maxCoeff(&mi, &mj);
    if (f(mi, mj) < 0.0) f = -f;
    return f;
}

struct TwoViewScene {
    std::vector<Vec3> points;        // world points seen by view 1
    std::vector<Vec3> points_view2;  // world points seen by view 2 (may deform)
    CameraPose pose1;
    CameraPose pose2;
    CameraIntrinsics k{600.0, 600.0, 320.0, 240.0, 0.0};
    CorrespondenceSet corrs;
    Mat3 f_true = Mat3::Zero();  // valid only when the pair is rigid

    void project() {
        corrs.frame_i = 0;
        corrs.frame_j = 1;
        corrs.x.clear();
        corrs.x_prime.clear();
        for (std::size_t i = 0; i < points.size(); ++i) {
            corrs.x.push_back(rsfm::project(pose1, k, points[i]));
            corrs.x_prime.push_back(rsfm::project(pose2, k, points_view2[i]));
        }
    }
};

// Generic 3D point cloud seen from two distinct viewpoints: a valid F exists
// and no homography explains the correspondences.
inline TwoViewScene rigid_pair(std::uint64_t seed, int n_points = 20) {
    Lcg rng(seed);
    TwoViewScene s;
    for (int i = 0; i < n_points; ++i) {
        s.points.emplace_back(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                              rng.uniform(-1.0, 1.0));
    }
    s.points_view2 = s.points;
    const double az1 = rng.uniform(0.0, 2.0 * rsfm::kPi);
    const double az2 = az1 + rng.uniform(0.6, 1.4);  // guaranteed wide baseline
    const double el1 = rng.uniform(-0.5, 0.5);
    const double el2 = rng.uniform(-0.5, 0.5);
    const double rad = rng.uniform(6.0, 8.0);
    const Vec3 c1(rad * std::cos(el1) * std::cos(az1), rad * std::sin(el1),
                  rad * std::cos(el1) * std::sin(az1));
    const Vec3 c2(rad * std::cos(el2) * std::cos(az2), rad * std::sin(el2),
                  rad * std::cos(el2) * std::sin(az2));
    s.pose1 = pose_looking_at(c1, Vec3::Zero());
    s.pose2 = pose_looking_at(c2, Vec3::Zero());
    s.f_true = true_fundamental(s.pose1, s.pose2, s.k, s.k);
    s.project();
    return s;
}

// Points on a single world plane: a homography maps view 1 to view 2 even
// though the baseline is wide, so F is not uniquely determined.
inline TwoViewScene planar_pair(std::uint64_t seed, int n_points = 20) {
    Lcg rng(seed);
    TwoViewScene s;
    const Vec3 normal = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    Vec3 u = normal.cross(Vec3(0.0, 1.0, 0.0));
    if (u.norm() < 1e-6) u = normal.cross(Vec3(1.0, 0.0, 0.0));
    u.normalize();
    const Vec3 v = normal.cross(u).normalized();
    for (int i = 0; i < n_points; ++i) {
        s.points.push_back(rng.uniform(-1.2, 1.2) * u + rng.uniform(-1.2, 1.2) * v);
    }
    s.points_view2 = s.points;
    const double az1 = rng.uniform(0.0, 2.0 * rsfm::kPi);
    const double az2 = az1 + rng.uniform(0.6, 1.2);
    Vec3 c1(7.0 * std::cos(az1), rng.uniform(-2.0, 2.0), 7.0 * std::sin(az1));
    Vec3 c2(7.0 * std::cos(az2), rng.uniform(-2.0, 2.0), 7.0 * std::sin(az2));
    // Keep both cameras clearly off the plane so projections stay bounded.
    if (std::abs((c1).dot(normal)) < 2.0) c1 += 4.0 * normal;
    if (std::abs((c2).dot(normal)) < 2.0) c2 += 4.0 * normal;
    s.pose1 = pose_looking_at(c1, Vec3::Zero());
    s.pose2 = pose_looking_at(c2, Vec3::Zero());
    s.project();
    return s;
}

// Same camera center, different orientation: zero baseline, all
// correspondences explained by the infinite homography K R_rel K^-1.
inline TwoViewScene rotation_only_pair(std::uint64_t seed, int n_points = 20) {
    Lcg rng(seed);
    TwoViewScene s;
    for (int i = 0; i < n_points; ++i) {
        s.points.emplace_back(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                              rng.uniform(-1.0, 1.0));
    }
    s.points_view2 = s.points;
    const double az = rng.uniform(0.0, 2.0 * rsfm::kPi);
    const Vec3 c(7.0 * std::cos(az), rng.uniform(-1.5, 1.5), 7.0 * std::sin(az));
    s.pose1 = pose_looking_at(c, Vec3::Zero());
    // Second view: same center, axis nudged toward a shifted target. The
    // shift is small enough that all points stay in front of the camera.
    const Vec3 target(rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8),
                      rng.uniform(-0.8, 0.8));
    s.pose2 = pose_looking_at(c, target);
    s.project();
    return s;
}

// Each point gets its own 3D displacement between the views: no single rigid
// motion (hence no F) explains the pair.
inline TwoViewScene nonrigid_pair(std::uint64_t seed, int n_points = 20,
                                  double deform = 0.45) {
    TwoViewScene s = rigid_pair(seed, n_points);
    Lcg rng(seed ^ 0xdeadbeefULL);
    for (auto& p : s.points_view2) {
        p += deform * Vec3(rng.normal(), rng.normal(), rng.normal());
    }
    s.f_true = Mat3::Zero();
    s.project();
    return s;
}

}  // namespace fixtures
