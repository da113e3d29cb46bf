#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rsfm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

/// Thrown when a point configuration cannot support the requested fit
/// (coincident points, collinear Procrustes input, coplanar PnP set, ...).
class DegenerateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown by triangulation when the two camera centers coincide.
class ZeroParallaxError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown by the sampling scores when every drawn minimal subset was degenerate.
class NoValidSampleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown by the scene generator when visibility/parallax constraints cannot
/// be satisfied within the retry cap.
class GeneratorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown on numeric failures (eigensolver non-convergence and similar).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 3x3 rank-2 matrix encoding two-view epipolar geometry, unit Frobenius norm.
struct FundamentalMatrix {
    Mat3 m = Mat3::Zero();
};

/// Invertible 3x3 plane-projective mapping, unit Frobenius norm.
struct Homography {
    Mat3 m = Mat3::Identity();
};

/// Pinhole intrinsics. Skew defaults to zero.
struct CameraIntrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    double skew = 0.0;

    Mat3 matrix() const {
        Mat3 k;
        k << fx, skew, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
        return k;
    }
};

/// World-to-camera rigid transform: x_cam = R * X + t.
struct CameraPose {
    Mat3 R = Mat3::Identity();
    Vec3 t = Vec3::Zero();

    Vec3 center() const { return -R.transpose() * t; }
    Vec3 to_camera(const Vec3& x) const { return R * x + t; }
};

/// target = s * R * source + t.
struct SimilarityTransform {
    double s = 1.0;
    Mat3 R = Mat3::Identity();
    Vec3 t = Vec3::Zero();

    Vec3 apply(const Vec3& x) const { return s * (R * x) + t; }
};

/// Matched 2D points between two frames. pairs[k] is the same physical
/// landmark observed in frame_i and frame_j.
struct CorrespondenceSet {
    int frame_i = -1;
    int frame_j = -1;
    std::vector<Vec2> x;        // observations in frame_i
    std::vector<Vec2> x_prime;  // observations in frame_j

    std::size_t size() const { return x.size(); }
};

/// Pixel projection of a world point.
inline Vec2 project(const CameraPose& pose, const CameraIntrinsics& k, const Vec3& point) {
    const Vec3 xc = pose.to_camera(point);
    const double inv_z = 1.0 / xc.z();
    return {k.fx * xc.x() * inv_z + k.skew * xc.y() * inv_z + k.cx,
            k.fy * xc.y() * inv_z + k.cy};
}

/// Depth of a world point in a camera (z of the camera-frame coordinates).
inline double depth(const CameraPose& pose, const Vec3& point) {
    return pose.to_camera(point).z();
}

/// Geodesic distance between two rotations, in radians.
inline double rotation_geodesic(const Mat3& a, const Mat3& b) {
    const double c = ((a.transpose() * b).trace() - 1.0) * 0.5;
    return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace rsfm
