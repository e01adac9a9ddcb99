#include "helpers.hpp"

using namespace rbtest;

namespace
{

RowMatrix blobs(int n_blobs, int per_blob, double separation, std::uint64_t seed, std::vector<int> *truth)
{
    Rng rng = make_rng(seed);
    NormalSampler normal;
    RowMatrix x(n_blobs * per_blob, 4);
    for (int b = 0; b < n_blobs; ++b)
        for (int i = 0; i < per_blob; ++i) {
            for (int k = 0; k < 4; ++k)
                x(b * per_blob + i, k) = normal(rng) + (k == b % 4 ? separation : 0.0) * (b < 4 ? 1 : -1);
            if (truth)
                truth->push_back(b);
        }
    return x;
}

/// Pair-counting ARI straight from the definition.
double ari_oracle(const std::vector<int> &a, const std::vector<int> &b)
{
    const std::size_t n = a.size();
    double both = 0, in_a = 0, in_b = 0, pairs = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool sa = a[i] == a[j], sb = b[i] == b[j];
            both += sa && sb;
            in_a += sa;
            in_b += sb;
            ++pairs;
        }
    const double expected = in_a * in_b / pairs;
    const double max_index = 0.5 * (in_a + in_b);
    if (max_index == expected)
        return 1.0;
    return (both - expected) / (max_index - expected);
}

} // namespace

TEST(Clustering, PointMassesAndKEqualsN)
{
    RowMatrix x(6, 2);
    x << 0, 0, 0, 0, 0, 0, 5, 5, 5, 5, 5, 5;
    const auto a = kmeans(x, 2, 3, 100, 1);
    EXPECT_EQ(a.inertia, 0.0);
    EXPECT_EQ(a.labels[0], a.labels[2]);
    EXPECT_NE(a.labels[0], a.labels[3]);
    EXPECT_EQ(silhouette_from_distances(pairwise_distances(x), a.labels, 2), 1.0);

    RowMatrix y(4, 1);
    y << 0, 1, 2, 7;
    EXPECT_NEAR(kmeans(y, 4, 2, 50, 3).inertia, 0.0, 1e-12);
    EXPECT_THROW(kmeans(y, 5, 1, 10, 0), RangeError);
    EXPECT_THROW(kmeans(y, 0, 1, 10, 0), RangeError);
}

TEST(Clustering, ThreeSeparatedBlobs)
{
    std::vector<int> truth;
    const RowMatrix x = blobs(3, 40, 10.0, 4, &truth);
    const auto a = kmeans(x, 3, 5, 300, 2);
    EXPECT_EQ(adjusted_rand_index(a.labels, truth), 1.0);
    const auto sel = select_k_silhouette(x, {2, 6}, 5, 300, 1);
    EXPECT_EQ(sel.K_star, 3);
    std::vector<int> t2;
    EXPECT_EQ(select_k_silhouette(blobs(2, 40, 10.0, 5, &t2), {2, 6}, 5, 300, 1).K_star, 2);
}

TEST(Clustering, InertiaMonotoneAndBestOfInits)
{
    const RowMatrix x = blobs(4, 30, 2.0, 7, nullptr);
    const auto a = kmeans(x, 4, 8, 300, 3);
    for (std::size_t i = 1; i < a.inertia_history.size(); ++i)
        EXPECT_LE(a.inertia_history[i], a.inertia_history[i - 1] + 1e-9);
    for (double v : a.init_inertias)
        EXPECT_LE(a.inertia, v + 1e-12);
    const auto b = kmeans(x, 4, 8, 300, 3);
    EXPECT_EQ(a.labels, b.labels);
}

TEST(Clustering, SilhouetteConventions)
{
    RowMatrix same = RowMatrix::Zero(6, 2);
    const std::vector<int> lab{0, 0, 0, 1, 1, 1};
    EXPECT_EQ(silhouette_from_distances(pairwise_distances(same), lab, 2), 0.0);
    RowMatrix x(3, 1);
    x << 0, 1, 10;
    const std::vector<int> singleton{0, 0, 1};
    // s(0) = 0.9, s(1) = 8/9, singleton s(2) = 0
    EXPECT_NEAR(silhouette_from_distances(pairwise_distances(x), singleton, 2), (0.9 + 8.0 / 9.0) / 3.0, 1e-12);
    const std::vector<int> one_cluster{0, 0, 0};
    EXPECT_THROW(silhouette_from_distances(pairwise_distances(x), one_cluster, 1), RangeError);
    EXPECT_THROW(silhouette_from_distances(pairwise_distances(x), one_cluster, 2), DegenerateInputError);
}

TEST(Clustering, SilhouetteCorrectBeatsShuffled)
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::vector<int> truth;
        const RowMatrix x = blobs(2, 30, 4.0, seed, &truth);
        auto shuffled = truth;
        Rng rng = make_rng(seed, 1);
        shuffle_in_place(shuffled, rng);
        const RowMatrix d = pairwise_distances(x);
        EXPECT_GT(silhouette_from_distances(d, truth, 2), silhouette_from_distances(d, shuffled, 2));
    }
}

TEST(Clustering, AriExamplesAndProperties)
{
    const std::vector<int> a{1, 1, 2, 2}, b{2, 2, 1, 1}, c{1, 1, 1, 1};
    EXPECT_EQ(adjusted_rand_index(a, b), 1.0);
    EXPECT_EQ(adjusted_rand_index(c, a), 0.0);
    EXPECT_THROW(adjusted_rand_index(a, std::vector<int>{1, 2}), DimensionMismatchError);
    Rng rng = make_rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<int> x(30), y(30);
        for (auto &v : x)
            v = static_cast<int>(uniform_index(rng, 4));
        for (auto &v : y)
            v = static_cast<int>(uniform_index(rng, 3));
        EXPECT_NEAR(adjusted_rand_index(x, y), ari_oracle(x, y), 1e-12);
        EXPECT_NEAR(adjusted_rand_index(x, y), adjusted_rand_index(y, x), 1e-15);
        EXPECT_EQ(adjusted_rand_index(x, x), 1.0);
    }
}

TEST(Clustering, LowSilhouetteFlag)
{
    const RowMatrix x = blobs(1, 200, 0.0, 2, nullptr);
    const auto sel = select_k_silhouette(x, {2, 8}, 5, 300, 1);
    EXPECT_EQ(sel.low_silhouette, sel.silhouette < kLowSilhouette);
    EXPECT_EQ(sel.silhouette_by_K.size(), 7u);
    EXPECT_EQ(sel.silhouette, sel.silhouette_by_K.at(sel.K_star));
    std::vector<int> truth;
    EXPECT_FALSE(select_k_silhouette(blobs(3, 40, 10.0, 4, &truth), {2, 6}, 5, 300, 1).low_silhouette);
}

TEST(Clustering, ScoreExtremesAndSwap)
{
    ClusteringConfig cfg;
    cfg.k_range = {2, 6};
    cfg.trials = 10;
    cfg.seed = 3;
    const auto bio_only = gaussian(2, 2, 60, 5.0, 0.0, 0.5, 1);
    const auto s = clustering_score(bio_only, cfg);
    EXPECT_GE(s.mean, 0.95);
    EXPECT_LT(s.std, 0.05);
    const auto swapped = clustering_score(bio_only.swap_label_roles(), cfg);
    ASSERT_EQ(s.trial_scores.size(), swapped.trial_scores.size());
    for (std::size_t t = 0; t < s.trial_scores.size(); ++t)
        EXPECT_EQ(s.trial_scores[t], -swapped.trial_scores[t]);
    EXPECT_LE(clustering_score(gaussian(2, 2, 60, 0.0, 5.0, 0.5, 1), cfg).mean, -0.95);
}

TEST(Clustering, UpperBoundDominatesSelected)
{
    ClusteringConfig cfg;
    cfg.k_range = {2, 5};
    cfg.trials = 4;
    const auto ds = gaussian(2, 2, 40, 2.0, 1.5, 1.0, 6);
    const auto sel = clustering_score(ds, cfg);
    const auto ub = clustering_score_upper_bound(ds, {2, 5}, cfg);
    EXPECT_GE(ub.best_score, sel.mean - 1e-12);
    EXPECT_EQ(ub.score_by_K.size(), 4u);
    double best = -10;
    int arg = 0;
    for (const auto &[K, v] : ub.score_by_K)
        if (v > best) {
            best = v;
            arg = K;
        }
    EXPECT_EQ(ub.best_K, arg);
}

TEST(Clustering, SmallInputsAreNotSubsampled)
{
    RowMatrix x = RowMatrix::Random(50, 2);
    const auto in = prepare_silhouette(x, 1);
    EXPECT_EQ(in.rows.size(), 50u);
    EXPECT_FALSE(in.subsampled);
}
