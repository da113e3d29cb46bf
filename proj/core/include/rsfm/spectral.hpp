#pragma once

#include "rsfm/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace rsfm {

struct SpectralConfig {
    int n_clusters = 1;
    // 0 means "derive": n_clusters normally, ceil(log2(n_clusters)) in
    // literal_eigencount mode.
    int n_eigenvectors = 0;
    double eigen_tolerance = 1e-8;
    int kmeans_restarts = 10;
    int kmeans_max_iters = 100;
    std::uint64_t rng_seed = 0;
    // Embed with the eigenvectors of the second-smallest and higher
    // eigenvalues (ascending), ceil(log2 K) of them, instead of the K
    // largest. Kept as an alternative; the default follows standard
    // normalized-cut practice.
    bool literal_eigencount = false;

    void validate(int n_frames) const;
};

struct SpectralEmbedding {
    Eigen::MatrixXd rows;         // N x d, rows normalized to unit length
    Eigen::VectorXd eigenvalues;  // the d eigenvalues behind the columns
};

struct ClusterAssignment {
    std::vector<int> labels;  // length N, values in [0, K)
    int n_clusters = 0;
    // Frame order that block-diagonalizes the affinity matrix: sorted by
    // label, ties by frame index.
    std::vector<int> permutation;
    std::vector<int> empty_clusters;  // cluster ids no frame ended up in
    double distortion = 0.0;          // k-means objective of the kept restart
};

struct ClusterViewsResult {
    ClusterAssignment assignment;
    Eigen::MatrixXd rearranged;  // P^T A P for the permutation above
};

/// L = D^{-1/2} A D^{-1/2} with D the diagonal of row sums.
/// Throws std::invalid_argument on a zero row sum (isolated node).
Eigen::MatrixXd normalized_laplacian(const Eigen::MatrixXd& a);

/// Eigenvector embedding of L. Columns are chosen per config (see
/// literal_eigencount), each satisfying |L v - lambda v| <= tol |L|; signs
/// canonicalized so the first nonzero component is positive; rows normalized
/// to unit length, zero rows left zero.
SpectralEmbedding spectral_embed(const Eigen::MatrixXd& laplacian,
                                 const SpectralConfig& config);

/// Plain k-means on the embedding rows: k-means++ seeding, best of
/// kmeans_restarts restarts (ties to the earlier restart), nearest-centroid
/// ties to the lower centroid id, empty clusters reseeded from the farthest
/// point. Labels are canonicalized by first occurrence, so identical inputs
/// give identical labels. Deterministic given rng_seed.
ClusterAssignment kmeans(const Eigen::MatrixXd& rows, int n_clusters,
                         const SpectralConfig& config);

/// normalized_laplacian + spectral_embed + kmeans, plus the rearranged
/// affinity matrix for inspection.
ClusterViewsResult cluster_views(const Eigen::MatrixXd& affinity,
                                 const SpectralConfig& config);

/// Differences of consecutive descending Laplacian eigenvalues; a large gap
/// after position k suggests k clusters. Diagnostic only.
std::vector<double> eigengap_sequence(const Eigen::MatrixXd& affinity);

}  // namespace rsfm
