#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "rsfm/spectral.hpp"
#include "rsfm/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

using namespace rsfm;

namespace {

// Block-diagonal affinity: `sizes[b]` frames per block, intra-block weight
// `w`, unit diagonal, zero across blocks. Ground-truth labels returned too.
std::pair<Eigen::MatrixXd, std::vector<int>> block_affinity(
    const std::vector<int>& sizes, double w) {
    int n = 0;
    for (int s : sizes) n += s;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    std::vector<int> labels;
    int offset = 0;
    for (std::size_t b = 0; b < sizes.size(); ++b) {
        for (int i = 0; i < sizes[b]; ++i) {
            labels.push_back(static_cast<int>(b));
            for (int j = 0; j < sizes[b]; ++j) {
                a(offset + i, offset + j) = (i == j) ? 1.0 : w;
            }
        }
        offset += sizes[b];
    }
    return {a, labels};
}

// Two labelings describe the same partition iff co-membership matches on
// every pair.
bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            if ((a[i] == a[j]) != (b[i] == b[j])) return false;
        }
    }
    return true;
}

SpectralConfig config_for(int k, std::uint64_t seed = 1) {
    SpectralConfig c;
    c.n_clusters = k;
    c.rng_seed = seed;
    return c;
}

}  // namespace

TEST_CASE("normalized laplacian matches the closed form") {
    // A = [[1, .5], [.5, 1]]: both row sums 1.5, so L = A / 1.5.
    Eigen::MatrixXd a(2, 2);
    a << 1.0, 0.5, 0.5, 1.0;
    const Eigen::MatrixXd l = normalized_laplacian(a);
    CHECK((l - a / 1.5).norm() < 1e-14);

    SUBCASE("asymmetric row sums") {
        // L(i,j) = a(i,j) / sqrt(d_i d_j), checked entry-wise.
        Eigen::MatrixXd b(3, 3);
        b << 1.0, 0.2, 0.0, 0.2, 1.0, 0.7, 0.0, 0.7, 1.0;
        const Eigen::VectorXd d = b.rowwise().sum();
        const Eigen::MatrixXd lb = normalized_laplacian(b);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                CHECK(lb(i, j) ==
                      doctest::Approx(b(i, j) / std::sqrt(d(i) * d(j))).epsilon(1e-14));
            }
        }
    }
    SUBCASE("isolated node is an error") {
        Eigen::MatrixXd z = Eigen::MatrixXd::Zero(2, 2);
        CHECK_THROWS_AS((void)normalized_laplacian(z), std::invalid_argument);
    }
}

TEST_CASE("embedding separates disconnected blocks exactly") {
    const auto [a, truth] = block_affinity({4, 3}, 0.8);
    const Eigen::MatrixXd l = normalized_laplacian(a);
    const SpectralEmbedding emb = spectral_embed(l, config_for(2));

    REQUIRE(emb.rows.rows() == 7);
    REQUIRE(emb.rows.cols() == 2);
    // Disconnected blocks: eigenvalue 1 has multiplicity 2.
    CHECK(emb.eigenvalues(0) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(emb.eigenvalues(1) == doctest::Approx(1.0).epsilon(1e-10));

    for (int i = 0; i < 7; ++i) {
        CHECK(emb.rows.row(i).norm() == doctest::Approx(1.0).epsilon(1e-10));
    }
    // Rows within a block coincide; rows across blocks are orthogonal.
    for (int i = 1; i < 4; ++i) CHECK((emb.rows.row(i) - emb.rows.row(0)).norm() < 1e-8);
    for (int i = 5; i < 7; ++i) CHECK((emb.rows.row(i) - emb.rows.row(4)).norm() < 1e-8);
    CHECK(std::abs(emb.rows.row(0).dot(emb.rows.row(4))) < 1e-8);
}

TEST_CASE("kmeans recovers tight groups with canonical labels") {
    Eigen::MatrixXd rows(6, 2);
    rows << 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0;
    const ClusterAssignment asg = kmeans(rows, 2, config_for(2));

    REQUIRE(asg.labels.size() == 6);
    // First occurrence order: row 0 opens label 0, row 2 opens label 1.
    CHECK(asg.labels == std::vector<int>({0, 0, 1, 1, 0, 1}));
    CHECK(asg.distortion == doctest::Approx(0.0));
    CHECK(asg.empty_clusters.empty());

    SUBCASE("permutation lists label-0 frames first") {
        CHECK(asg.permutation == std::vector<int>({0, 1, 4, 2, 3, 5}));
    }
    SUBCASE("distortion is the summed squared distance to centroids") {
        Eigen::MatrixXd jittered = rows;
        jittered(1, 0) = 1.2;  // centroid of {1.0, 1.2, 1.0} is x = 1.0666..
        const ClusterAssignment j = kmeans(jittered, 2, config_for(2));
        const double mean_x = (1.0 + 1.2 + 1.0) / 3.0;
        double expected = 0.0;
        for (double x : {1.0, 1.2, 1.0}) {
            expected += (x - mean_x) * (x - mean_x);
        }
        CHECK(j.distortion == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("cluster views recovers planted blocks") {
    const auto [a, truth] = block_affinity({5, 4, 3}, 0.7);
    const ClusterViewsResult res = cluster_views(a, config_for(3, 17));

    CHECK(res.assignment.n_clusters == 3);
    CHECK(same_partition(res.assignment.labels, truth));
    CHECK(res.assignment.empty_clusters.empty());

    SUBCASE("rearranged matrix is the permuted affinity") {
        const auto& perm = res.assignment.permutation;
        REQUIRE(perm.size() == 12);
        for (int r = 0; r < 12; ++r) {
            for (int c = 0; c < 12; ++c) {
                CHECK(res.rearranged(r, c) ==
                      a(perm[static_cast<std::size_t>(r)], perm[static_cast<std::size_t>(c)]));
            }
        }
    }
    SUBCASE("on an already block-ordered input the permuted matrix is block diagonal") {
        for (int r = 0; r < 12; ++r) {
            for (int c = 0; c < 12; ++c) {
                const int lr = truth[static_cast<std::size_t>(
                    res.assignment.permutation[static_cast<std::size_t>(r)])];
                const int lc = truth[static_cast<std::size_t>(
                    res.assignment.permutation[static_cast<std::size_t>(c)])];
                if (lr != lc) CHECK(res.rearranged(r, c) == 0.0);
            }
        }
    }
}

TEST_CASE("clustering commutes with frame relabeling") {
    const auto [a, truth] = block_affinity({4, 4, 4}, 0.6);
    const int n = 12;
    // Deterministic shuffle of frame identities.
    std::vector<int> perm = {7, 2, 9, 0, 11, 4, 1, 8, 3, 10, 5, 6};
    Eigen::MatrixXd shuffled(n, n);
    std::vector<int> shuffled_truth(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        shuffled_truth[static_cast<std::size_t>(i)] =
            truth[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
        for (int j = 0; j < n; ++j) {
            shuffled(i, j) = a(perm[static_cast<std::size_t>(i)],
                               perm[static_cast<std::size_t>(j)]);
        }
    }

    const ClusterViewsResult res = cluster_views(shuffled, config_for(3, 5));
    CHECK(same_partition(res.assignment.labels, shuffled_truth));
}

TEST_CASE("edge cluster counts behave") {
    const auto [a, truth] = block_affinity({3, 3}, 0.5);

    SUBCASE("one cluster takes everything") {
        const ClusterViewsResult res = cluster_views(a, config_for(1));
        for (int l : res.assignment.labels) CHECK(l == 0);
    }
    SUBCASE("as many clusters as frames isolates each") {
        // Identity affinity: every frame is its own connected component.
        Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(5, 5);
        const ClusterViewsResult res = cluster_views(eye, config_for(5, 3));
        std::vector<int> sorted = res.assignment.labels;
        std::sort(sorted.begin(), sorted.end());
        CHECK(sorted == std::vector<int>({0, 1, 2, 3, 4}));
        CHECK(res.assignment.distortion == doctest::Approx(0.0));
    }
    SUBCASE("more clusters than frames is a config error") {
        SpectralConfig c = config_for(7);
        CHECK_THROWS_AS(c.validate(6), std::invalid_argument);
        CHECK_THROWS_AS((void)cluster_views(a, config_for(7)), std::invalid_argument);
    }
    SUBCASE("requesting duplicate rows leaves some clusters empty") {
        Eigen::MatrixXd rows(4, 2);
        rows << 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0;
        const ClusterAssignment asg = kmeans(rows, 3, config_for(3));
        // All rows coincide: the extra clusters cannot be filled, and the
        // report must list exactly the labels that never occur.
        std::vector<bool> used(3, false);
        for (int l : asg.labels) {
            REQUIRE(l >= 0);
            REQUIRE(l < 3);
            used[static_cast<std::size_t>(l)] = true;
        }
        for (int c = 0; c < 3; ++c) {
            const bool listed =
                std::find(asg.empty_clusters.begin(), asg.empty_clusters.end(), c) !=
                asg.empty_clusters.end();
            CHECK(listed == !used[static_cast<std::size_t>(c)]);
        }
    }
}

TEST_CASE("determinism and restart behavior") {
    const auto [a, truth] = block_affinity({4, 3, 5}, 0.55);

    const ClusterViewsResult r1 = cluster_views(a, config_for(3, 123));
    const ClusterViewsResult r2 = cluster_views(a, config_for(3, 123));
    CHECK(r1.assignment.labels == r2.assignment.labels);
    CHECK(r1.assignment.distortion == r2.assignment.distortion);

    SUBCASE("different seed, same partition on a well-separated problem") {
        const ClusterViewsResult r3 = cluster_views(a, config_for(3, 999));
        CHECK(same_partition(r1.assignment.labels, r3.assignment.labels));
    }
}

TEST_CASE("literal eigencount mode uses a logarithmic embedding width") {
    const auto [a, truth] = block_affinity({4, 4, 4, 4}, 0.8);
    SpectralConfig c = config_for(4, 2);
    c.literal_eigencount = true;
    const Eigen::MatrixXd l = normalized_laplacian(a);
    const SpectralEmbedding emb = spectral_embed(l, c);
    CHECK(emb.rows.cols() == 2);  // ceil(log2(4))

    SpectralConfig c5 = config_for(5, 2);
    c5.literal_eigencount = true;
    const auto [a5, t5] = block_affinity({3, 3, 3, 3, 3}, 0.8);
    const SpectralEmbedding emb5 = spectral_embed(normalized_laplacian(a5), c5);
    CHECK(emb5.rows.cols() == 3);  // ceil(log2(5))
}

TEST_CASE("eigengap sequence peaks at the block count") {
    const auto [a, truth] = block_affinity({5, 5, 5}, 0.75);
    const std::vector<double> gaps = eigengap_sequence(a);
    REQUIRE(gaps.size() >= 4);
    // Disconnected blocks: top 3 eigenvalues are all 1, then a drop.
    const std::size_t argmax = static_cast<std::size_t>(
        std::max_element(gaps.begin(), gaps.end()) - gaps.begin());
    CHECK(argmax == 2);  // gap after the third eigenvalue, zero-indexed
}
