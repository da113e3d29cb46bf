#include "rsfm/spectral.hpp"

#include "rsfm/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rsfm {
namespace {

void canonicalize_labels(std::vector<int>& labels) {
    std::vector<int> remap(labels.size(), -1);
    int next = 0;
    for (int& l : labels) {
        if (remap[static_cast<std::size_t>(l)] < 0) remap[static_cast<std::size_t>(l)] = next++;
        l = remap[static_cast<std::size_t>(l)];
    }
}

std::vector<int> label_permutation(const std::vector<int>& labels) {
    std::vector<int> perm(labels.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
    std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) {
        return labels[static_cast<std::size_t>(a)] < labels[static_cast<std::size_t>(b)];
    });
    return perm;
}

struct KmeansRun {
    std::vector<int> labels;
    double distortion = std::numeric_limits<double>::infinity();
};

KmeansRun kmeans_once(const Eigen::MatrixXd& rows, int k, int max_iters, Rng& rng) {
    const auto n = rows.rows();
    Eigen::MatrixXd centroids(k, rows.cols());

    // k-means++ seeding: squared-distance-weighted draws never pick a point
    // coincident with an existing centroid unless everything coincides.
    centroids.row(0) = rows.row(static_cast<Eigen::Index>(rng.uniform_int(static_cast<int>(n))));
    Eigen::VectorXd d2 = (rows.rowwise() - centroids.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index pick;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2(i);
                if (acc > target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Eigen::Index>(rng.uniform_int(static_cast<int>(n)));
        }
        centroids.row(c) = rows.row(pick);
        d2 = d2.cwiseMin((rows.rowwise() - centroids.row(c)).rowwise().squaredNorm());
    }

    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    auto assign = [&]() {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = (rows.row(i) - centroids.row(0)).squaredNorm();
            for (int c = 1; c < k; ++c) {
                const double d = (rows.row(i) - centroids.row(c)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (labels[static_cast<std::size_t>(i)] != best) {
                labels[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        return changed;
    };

    assign();
    for (int iter = 0; iter < max_iters; ++iter) {
        centroids.setZero();
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            centroids.row(labels[static_cast<std::size_t>(i)]) += rows.row(i);
            ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
        }
        for (int c = 0; c < k; ++c)
            if (counts[static_cast<std::size_t>(c)] > 0)
                centroids.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
        // Empty clusters restart at the point farthest from its own centroid
        // (lowest index on ties, each point taken at most once per pass).
        // A point's own cluster is never empty, so its centroid is valid.
        bool reseeded = false;
        std::vector<bool> taken(static_cast<std::size_t>(n), false);
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) continue;
            Eigen::Index far = -1;
            double far_d = -1.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (taken[static_cast<std::size_t>(i)]) continue;
                const double d =
                    (rows.row(i) - centroids.row(labels[static_cast<std::size_t>(i)]))
                        .squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            if (far < 0) break;
            taken[static_cast<std::size_t>(far)] = true;
            centroids.row(c) = rows.row(far);
            reseeded = true;
        }
        if (!assign() && !reseeded) break;
    }

    KmeansRun run;
    run.labels = std::move(labels);
    run.distortion = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        run.distortion +=
            (rows.row(i) - centroids.row(run.labels[static_cast<std::size_t>(i)])).squaredNorm();
    return run;
}

}  // namespace

void SpectralConfig::validate(int n_frames) const {
    if (n_clusters < 1 || n_clusters > n_frames)
        throw std::invalid_argument("spectral config: n_clusters must lie in [1, N]");
    if (n_eigenvectors < 0 || n_eigenvectors > n_frames)
        throw std::invalid_argument("spectral config: n_eigenvectors must lie in [0, N]");
    if (kmeans_restarts < 1 || kmeans_max_iters < 1)
        throw std::invalid_argument("spectral config: k-means knobs must be positive");
    if (!(eigen_tolerance > 0.0))
        throw std::invalid_argument("spectral config: eigen_tolerance must be positive");
}

Eigen::MatrixXd normalized_laplacian(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("laplacian: matrix not square");
    Eigen::VectorXd row_sums = a.rowwise().sum();
    for (Eigen::Index i = 0; i < row_sums.size(); ++i)
        if (!(row_sums(i) > 0.0))
            throw std::invalid_argument("laplacian: isolated node with zero row sum");
    const Eigen::VectorXd inv_sqrt = row_sums.cwiseSqrt().cwiseInverse();
    return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

SpectralEmbedding spectral_embed(const Eigen::MatrixXd& laplacian,
                                 const SpectralConfig& config) {
    const auto n = laplacian.rows();
    config.validate(static_cast<int>(n));

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(laplacian);
    if (solver.info() != Eigen::Success)
        throw NumericalError("spectral_embed: eigendecomposition did not converge");

    int d = config.n_eigenvectors;
    if (d == 0) {
        d = config.literal_eigencount
                ? std::max(1, static_cast<int>(std::ceil(std::log2(config.n_clusters))))
                : config.n_clusters;
    }
    d = std::min(d, static_cast<int>(n));

    // Eigenvalues come back ascending. The default takes the d largest;
    // the literal variant takes ascending positions 1..d (skipping only the
    // very smallest eigenvalue).
    std::vector<Eigen::Index> cols;
    if (config.literal_eigencount) {
        for (int c = 0; c < d; ++c)
            cols.push_back(std::min<Eigen::Index>(1 + c, n - 1));
    } else {
        for (int c = 0; c < d; ++c) cols.push_back(n - d + c);
    }

    SpectralEmbedding out;
    out.rows.resize(n, d);
    out.eigenvalues.resize(d);
    const double l_norm = laplacian.norm();
    for (int c = 0; c < d; ++c) {
        Eigen::VectorXd v = solver.eigenvectors().col(cols[static_cast<std::size_t>(c)]);
        const double lambda = solver.eigenvalues()(cols[static_cast<std::size_t>(c)]);
        if ((laplacian * v - lambda * v).norm() > config.eigen_tolerance * l_norm)
            throw NumericalError("spectral_embed: eigenpair residual above tolerance");
        for (Eigen::Index i = 0; i < n; ++i) {
            if (v(i) != 0.0) {
                if (v(i) < 0.0) v = -v;
                break;
            }
        }
        out.rows.col(c) = v;
        out.eigenvalues(c) = lambda;
    }

    for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = out.rows.row(i).norm();
        if (norm > 0.0) out.rows.row(i) /= norm;
    }
    return out;
}

ClusterAssignment kmeans(const Eigen::MatrixXd& rows, int n_clusters,
                         const SpectralConfig& config) {
    const auto n = rows.rows();
    if (n_clusters < 1 || n_clusters > n)
        throw std::invalid_argument("kmeans: n_clusters must lie in [1, N]");
    if (rows.cols() < 1) throw std::invalid_argument("kmeans: empty embedding");

    KmeansRun best;
    for (int r = 0; r < config.kmeans_restarts; ++r) {
        Rng rng(mix_seed(config.rng_seed, static_cast<std::uint64_t>(r)));
        KmeansRun run = kmeans_once(rows, n_clusters, config.kmeans_max_iters, rng);
        if (run.distortion < best.distortion) best = std::move(run);
    }

    canonicalize_labels(best.labels);

    ClusterAssignment out;
    out.labels = std::move(best.labels);
    out.n_clusters = n_clusters;
    out.distortion = best.distortion;
    out.permutation = label_permutation(out.labels);
    std::vector<bool> used(static_cast<std::size_t>(n_clusters), false);
    for (int l : out.labels) used[static_cast<std::size_t>(l)] = true;
    for (int c = 0; c < n_clusters; ++c)
        if (!used[static_cast<std::size_t>(c)]) out.empty_clusters.push_back(c);
    return out;
}

ClusterViewsResult cluster_views(const Eigen::MatrixXd& affinity,
                                 const SpectralConfig& config) {
    config.validate(static_cast<int>(affinity.rows()));
    const Eigen::MatrixXd laplacian = normalized_laplacian(affinity);
    const SpectralEmbedding embedding = spectral_embed(laplacian, config);

    ClusterViewsResult out;
    out.assignment = kmeans(embedding.rows, config.n_clusters, config);

    const auto n = affinity.rows();
    out.rearranged.resize(n, n);
    const auto& perm = out.assignment.permutation;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            out.rearranged(i, j) = affinity(perm[static_cast<std::size_t>(i)],
                                            perm[static_cast<std::size_t>(j)]);
    return out;
}

std::vector<double> eigengap_sequence(const Eigen::MatrixXd& affinity) {
    const Eigen::MatrixXd laplacian = normalized_laplacian(affinity);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(laplacian);
    if (solver.info() != Eigen::Success)
        throw NumericalError("eigengap_sequence: eigendecomposition did not converge");
    const auto& ev = solver.eigenvalues();  // ascending
    std::vector<double> gaps;
    gaps.reserve(static_cast<std::size_t>(ev.size()) - 1);
    for (Eigen::Index i = ev.size() - 1; i > 0; --i) gaps.push_back(ev(i) - ev(i - 1));
    return gaps;
}

}  // namespace rsfm
