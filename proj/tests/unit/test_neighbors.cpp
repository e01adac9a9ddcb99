#include "helpers.hpp"

using namespace rbtest;

namespace
{

/// Full sort of all pairwise distances with index tie-breaking.
std::vector<std::uint32_t> oracle_row(const EmbeddingDataset &ds, std::size_t i, std::size_t k, bool exclude_case)
{
    std::vector<std::pair<double, std::uint32_t>> all;
    const RowMatrix x = to_double(ds.embeddings());
    for (std::size_t j = 0; j < ds.size(); ++j) {
        if (j == i || (exclude_case && ds.case_ids()[j] == ds.case_ids()[i]))
            continue;
        const double d = (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).squaredNorm();
        all.emplace_back(d, static_cast<std::uint32_t>(j));
    }
    std::sort(all.begin(), all.end());
    std::vector<std::uint32_t> out;
    for (std::size_t r = 0; r < k; ++r)
        out.push_back(all[r].second);
    return out;
}

} // namespace

TEST(Neighbors, LineExampleOrdering)
{
    const auto ds = make_dataset({{0}, {1}, {3}}, {"a", "a", "a"}, {"x", "x", "x"});
    const auto t = build_neighbor_table(ds, 2, true);
    EXPECT_EQ(t.at(1, 0), 0u);
    EXPECT_EQ(t.at(1, 1), 2u);
    EXPECT_EQ(t.at(2, 0), 1u);
}

TEST(Neighbors, SingleCaseCannotSatisfyExclusion)
{
    const auto ds = make_dataset({{0}, {1}}, {"a", "a"}, {"x", "x"}, {"case", "case"});
    EXPECT_THROW(build_neighbor_table(ds, 1, true), InsufficientNeighborsError);
    EXPECT_NO_THROW(build_neighbor_table(ds, 1, false));
}

TEST(Neighbors, DuplicateVectorsTieBreakByIndex)
{
    const auto ds = make_dataset({{0, 1}, {1, 0}, {1, 0}, {1, 0}}, {"a", "a", "b", "b"}, {"x", "y", "x", "y"});
    const auto t = build_neighbor_table(ds, 3, true);
    EXPECT_EQ(t.at(0, 0), 1u);
    EXPECT_EQ(t.at(0, 1), 2u);
    EXPECT_EQ(t.at(0, 2), 3u);
    EXPECT_EQ(t.at(2, 0), 1u);
    EXPECT_EQ(t.at(2, 1), 3u);
}

TEST(Neighbors, MatchesBruteForceOracle)
{
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto ds = l2_normalize(gaussian(2, 3, 30, 1.0, 1.0, 1.0, seed));
        for (bool excl : {true, false}) {
            const auto t = build_neighbor_table(ds, 25, excl);
            for (std::size_t i = 0; i < ds.size(); ++i) {
                const auto row = t.row(i);
                EXPECT_EQ(std::vector<std::uint32_t>(row.begin(), row.end()), oracle_row(ds, i, 25, excl));
                for (std::size_t j = 1; j < 25; ++j)
                    EXPECT_LE(t.distance(i, j - 1), t.distance(i, j));
            }
        }
    }
}

TEST(Neighbors, CosineRankingInvariance)
{
    const auto raw = gaussian(2, 2, 20, 2.0, 1.0, 1.0, 4);
    const auto t = build_neighbor_table(l2_normalize(raw), 10, true);
    const RowMatrix x = to_double(raw.embeddings());
    for (std::size_t i = 0; i < raw.size(); i += 7) {
        auto cos = [&](std::size_t j) {
            return x.row(static_cast<Eigen::Index>(i)).dot(x.row(static_cast<Eigen::Index>(j))) /
                   (x.row(static_cast<Eigen::Index>(i)).norm() * x.row(static_cast<Eigen::Index>(j)).norm());
        };
        for (std::size_t j = 1; j < 10; ++j)
            EXPECT_GE(cos(t.at(i, j - 1)) + 1e-7, cos(t.at(i, j)));
    }
}

TEST(Neighbors, PrefixProperty)
{
    const auto ds = l2_normalize(gaussian(2, 2, 20, 1, 1, 1, 1));
    const auto big = build_neighbor_table(ds, 30, true);
    const auto small = build_neighbor_table(ds, 12, true);
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t j = 0; j < 12; ++j)
            EXPECT_EQ(big.at(i, j), small.at(i, j));
}

TEST(Neighbors, KnnBalancedAccuracyExamples)
{
    // Two tight clusters: all neighbors share the bio label.
    const auto ds = make_dataset({{0, 1}, {0.01f, 1}, {0.02f, 1}, {1, 0}, {1, 0.01f}, {1, 0.02f}},
                                 {"a", "a", "a", "b", "b", "b"}, {"x", "y", "x", "y", "x", "y"});
    const auto t = build_neighbor_table(ds, 2, true);
    EXPECT_EQ(knn_predict_bio(t, ds, 2).balanced_accuracy, 1.0);
    EXPECT_THROW(knn_predict_bio(t, ds, 3), RangeError);
    EXPECT_THROW(knn_predict_bio(t, ds, 0), RangeError);

    // Every sample surrounded by class "a": predictions all "a", labels half/half.
    const auto skew = make_dataset({{0, 1}, {0, 1}, {0, 1}, {0, 1}, {1, 0}, {1, 0}},
                                   {"a", "a", "a", "a", "b", "b"}, {"x", "x", "x", "x", "x", "x"});
    NeighborTable forced;
    forced.n_queries = 6;
    forced.k_max = 1;
    forced.indices = {1, 0, 0, 0, 0, 1};
    forced.distances.assign(6, 0.0);
    EXPECT_DOUBLE_EQ(knn_predict_bio(forced, skew, 1).balanced_accuracy, 0.5);
}

TEST(Neighbors, ConfFreeSynthPredictsBio)
{
    const auto ds = l2_normalize(gaussian(2, 2, 100, 5.0, 0.0, 1.0, 2));
    const auto t = build_neighbor_table(ds, 11, true);
    EXPECT_GE(knn_predict_bio(t, ds, 11).balanced_accuracy, 0.99);
}

TEST(Neighbors, VoteTieGoesToNearestClass)
{
    const auto ds = make_dataset({{0}, {1}, {2}, {4}}, {"a", "b", "a", "b"}, {"x", "x", "x", "x"});
    NeighborTable t;
    t.n_queries = 4;
    t.k_max = 2;
    t.indices = {1, 2, 0, 2, 1, 3, 2, 1};
    t.distances.assign(8, 0.0);
    const auto p = knn_predict_bio(t, ds, 2);
    EXPECT_EQ(p.predicted[0], ds.bio().find("b"));
    EXPECT_EQ(p.predicted[2], ds.bio().find("b"));
    EXPECT_EQ(p.predicted[3], ds.bio().find("a"));
}

TEST(Neighbors, OptimalKMatchesBruteForceArgmax)
{
    const auto ds = l2_normalize(gaussian(3, 2, 40, 1.0, 0.8, 1.5, 6));
    const auto t = build_neighbor_table(ds, 40, true);
    const int k = optimal_k_for_prediction(t, ds, {1, 40});
    double best = -1;
    int arg = 0;
    for (int kk = 1; kk <= 40; ++kk) {
        const double acc = knn_predict_bio(t, ds, static_cast<std::size_t>(kk)).balanced_accuracy;
        if (acc > best) {
            best = acc;
            arg = kk;
        }
    }
    EXPECT_EQ(k, arg);
    EXPECT_GT(k, 1);
    EXPECT_EQ(optimal_k_for_prediction(t, ds, {5, 5}), 5);
    EXPECT_THROW(optimal_k_for_prediction(t, ds, {6, 5}), RangeError);
    EXPECT_THROW(optimal_k_for_prediction(t, ds, {1, 41}), RangeError);
}

TEST(Neighbors, FlatAccuracyPicksSmallestK)
{
    const auto ds = make_dataset({{0, 1}, {0.01f, 1}, {0.02f, 1}, {1, 0}, {1, 0.01f}, {1, 0.02f}},
                                 {"a", "a", "a", "b", "b", "b"}, {"x", "y", "x", "y", "x", "y"});
    const auto t = build_neighbor_table(ds, 2, true);
    EXPECT_EQ(optimal_k_for_prediction(t, ds, {1, 2}), 1);
}

TEST(Neighbors, CommonKIsLowerMedian)
{
    EXPECT_EQ(select_common_k({11, 61, 46}), 46);
    EXPECT_EQ(select_common_k({11}), 11);
    EXPECT_EQ(select_common_k({10, 40, 20, 30}), 20);
    EXPECT_THROW(select_common_k({}), RangeError);
}

TEST(Neighbors, CacheRoundTripAndChecksumGuard)
{
    TempDir tmp;
    const auto ds = l2_normalize(gaussian(2, 2, 15, 1, 1, 1, 2));
    const auto t = build_neighbor_table(ds, 8, true);
    save_neighbor_table(t, tmp.path() / "nb.u32", dataset_checksum(ds));
    const auto back = load_neighbor_table(tmp.path() / "nb.u32", ds);
    EXPECT_EQ(back.indices, t.indices);
    EXPECT_EQ(back.distances, t.distances);
    const auto other = l2_normalize(gaussian(2, 2, 15, 1, 1, 1, 3));
    EXPECT_THROW(load_neighbor_table(tmp.path() / "nb.u32", other), ChecksumMismatchError);
}

TEST(Neighbors, CrossTableQueriesDatabase)
{
    const auto db = make_dataset({{1, 0}, {0, 1}, {-1, 0}}, {"a", "b", "c"}, {"x", "x", "x"});
    const auto q = make_dataset({{0.9f, 0.1f}, {-1, 0.2f}}, {"a", "c"}, {"y", "y"});
    const auto t = build_cross_neighbor_table(q, db, 2);
    EXPECT_EQ(t.at(0, 0), 0u);
    EXPECT_EQ(t.at(0, 1), 1u);
    EXPECT_EQ(t.at(1, 0), 2u);
}
