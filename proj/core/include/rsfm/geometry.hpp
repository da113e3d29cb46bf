#pragma once

#include "rsfm/types.hpp"

#include <array>
#include <optional>
#include <span>

namespace rsfm {

/// Distance reported when a geometric distance is undefined (point maps to
/// the epipole, homography sends a point to infinity). Large enough that the
/// Gaussian kernel of any sane sigma evaluates to zero in log space.
inline constexpr double kMaxGeomDistance = 1e6;

/// Relative singular-value floor below which a DLT design matrix is treated
/// as rank-deficient (minimal sample degenerate, PnP underconstrained).
inline constexpr double kDegenerateSvRatio = 1e-8;

struct NormalizedPoints {
    std::vector<Vec2> points;
    Mat3 transform;  // maps original homogeneous points to normalized ones
};

/// [w]x, the cross-product matrix.
Mat3 skew3(const Vec3& w);

/// Rodrigues exponential map; exact identity treatment near zero.
Mat3 so3_exp(const Vec3& w);

/// Hartley conditioning: translate centroid to the origin and scale so the
/// mean distance from the origin is sqrt(2).
/// Throws DegenerateError when all points coincide.
NormalizedPoints normalize_points(std::span<const Vec2> pts);

/// Linear 8-point fit from exactly 8 correspondences, with Hartley
/// conditioning, rank-2 projection and unit Frobenius norm.
/// Returns nullopt when the 8-tuple is degenerate (design matrix rank < 8);
/// callers skip such samples.
std::optional<FundamentalMatrix> fit_fundamental_8pt(std::span<const Vec2> x,
                                                     std::span<const Vec2> x_prime);

/// Least-squares DLT fit over all given correspondences (M >= 8). Used by the
/// naive rigidity test and for two-view seeding inside a rigid cluster.
std::optional<FundamentalMatrix> fit_fundamental_all(std::span<const Vec2> x,
                                                     std::span<const Vec2> x_prime);

/// Exact DLT homography from 4 correspondences, unit Frobenius norm.
/// Returns nullopt for degenerate samples (3 collinear points etc.).
std::optional<Homography> fit_homography_4pt(std::span<const Vec2> x,
                                             std::span<const Vec2> x_prime);

/// Point-to-epipolar-line distance d(x', F x) in the second image, pixels.
/// One-sided, following the scoring kernel's literal form.
double epipolar_distance(const FundamentalMatrix& f, const Vec2& x, const Vec2& x_prime,
                         double max_distance = kMaxGeomDistance);

/// max(d(x', F x), d(x, F^T x')): the optional symmetric variant.
double symmetric_epipolar_distance(const FundamentalMatrix& f, const Vec2& x,
                                   const Vec2& x_prime,
                                   double max_distance = kMaxGeomDistance);

/// Euclidean transfer distance |x' - dehomog(H x)| in pixels.
double homography_distance(const Homography& h, const Vec2& x, const Vec2& x_prime,
                           double max_distance = kMaxGeomDistance);

/// E = K2^T F K1 with singular values projected to (s, s, 0).
Mat3 essential_from_fundamental(const FundamentalMatrix& f, const CameraIntrinsics& k1,
                                const CameraIntrinsics& k2);

/// The four (R, +-t) candidates of an essential matrix, |t| = 1,
/// det(R) = +1 for every candidate.
std::array<CameraPose, 4> decompose_essential(const Mat3& e);

/// Homogeneous-DLT triangulation of one correspondence.
/// Throws ZeroParallaxError when the camera centers coincide.
Vec3 triangulate(const CameraPose& pose1, const CameraPose& pose2,
                 const CameraIntrinsics& k1, const CameraIntrinsics& k2,
                 const Vec2& x1, const Vec2& x2);

/// Number of correspondences whose triangulation has positive depth in both
/// views. Returns 0 for an empty set or coincident camera centers.
int cheirality_count(const CameraPose& pose1, const CameraPose& pose2,
                     const CameraIntrinsics& k1, const CameraIntrinsics& k2,
                     const CorrespondenceSet& corrs);

/// DLT-PnP from >= 6 non-coplanar points, followed by rotation
/// orthonormalization and iterative reprojection refinement.
/// Throws DegenerateError when underconstrained.
CameraPose pnp(std::span<const Vec3> points3, std::span<const Vec2> points2,
               const CameraIntrinsics& k);

/// Least-squares similarity transform mapping source onto target (Umeyama).
/// Throws DegenerateError for < 3 points or a collinear source.
SimilarityTransform procrustes_similarity(std::span<const Vec3> source,
                                          std::span<const Vec3> target);

/// RMS of |s R x + t - y| residuals after Procrustes alignment of source
/// onto target. Convenience used by the evaluator and the generator.
double procrustes_rmse(std::span<const Vec3> source, std::span<const Vec3> target);

}  // namespace rsfm
