#include "helpers.hpp"

using namespace rbtest;

namespace
{

/// Builds categories where column j has the given numbers of SO, OS and SS entries.
CategoryMatrices columns(const std::vector<std::array<int, 3>> &so_os_ss)
{
    std::size_t n = 0;
    for (const auto &c : so_os_ss)
        n = std::max<std::size_t>(n, static_cast<std::size_t>(c[0] + c[1] + c[2]));
    CategoryMatrices cats(n, so_os_ss.size());
    for (std::size_t j = 0; j < so_os_ss.size(); ++j) {
        std::size_t i = 0;
        for (int r = 0; r < so_os_ss[j][0]; ++r)
            cats.set(i++, j, Category::SO);
        for (int r = 0; r < so_os_ss[j][1]; ++r)
            cats.set(i++, j, Category::OS);
        for (; i < n; ++i)
            cats.set(i, j, Category::OO);
    }
    return cats;
}

/// Direct recount of R_k from the neighbor table and labels.
std::optional<double> recount(const NeighborTable &t, const EmbeddingDataset &ds, std::size_t k)
{
    std::uint64_t so = 0, os = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const auto nb = t.at(i, j);
            const bool sb = ds.bio().label(i) == ds.bio().label(nb);
            const bool sc = ds.conf().label(i) == ds.conf().label(nb);
            so += sb && !sc;
            os += !sb && sc;
        }
    if (so + os == 0)
        return std::nullopt;
    return static_cast<double>(so) / static_cast<double>(so + os);
}

double ri_at(const EmbeddingDataset &raw, std::size_t k)
{
    const auto ds = l2_normalize(raw);
    return robustness_index_at(robustness_curve(categorize_neighbors(build_neighbor_table(ds, k, true), ds)), k);
}

} // namespace

TEST(Robustness, CategoryDefinitions)
{
    EXPECT_EQ(categorize(0, 0, 0, 0), Category::SS);
    EXPECT_EQ(categorize(0, 0, 0, 1), Category::SO);
    EXPECT_EQ(categorize(0, 0, 1, 0), Category::OS);
    EXPECT_EQ(categorize(0, 0, 1, 1), Category::OO);
}

TEST(Robustness, CategoriesPartitionEachColumn)
{
    const auto ds = l2_normalize(gaussian(3, 3, 20, 1, 1, 1, 2));
    const auto cats = categorize_neighbors(build_neighbor_table(ds, 15, true), ds);
    for (const auto &col : cats.column_sums())
        EXPECT_EQ(col[0] + col[1] + col[2] + col[3], ds.size());
    for (std::size_t i = 0; i < cats.rows(); ++i)
        for (std::size_t j = 0; j < cats.k_max(); ++j)
            EXPECT_EQ(int(cats.ss(i, j)) + cats.so(i, j) + cats.os(i, j) + cats.oo(i, j), 1);
}

TEST(Robustness, CurveHandExample)
{
    const auto curve = robustness_curve(columns({{30, 10, 0}, {10, 30, 0}}));
    ASSERT_EQ(curve.k_max(), 2u);
    EXPECT_DOUBLE_EQ(*curve.r_of_k[0], 0.75);
    EXPECT_DOUBLE_EQ(*curve.r_of_k[1], 0.5);
    EXPECT_EQ(curve.so_cum, (std::vector<std::uint64_t>{30, 40}));
    EXPECT_DOUBLE_EQ(robustness_index_at(curve, 2), 0.5);
    EXPECT_THROW(robustness_index_at(curve, 0), RangeError);
    EXPECT_THROW(robustness_index_at(curve, 3), RangeError);
}

TEST(Robustness, AllSoAllOsAndUndefined)
{
    const auto so = robustness_curve(columns({{5, 0, 0}, {5, 0, 0}}));
    const auto os = robustness_curve(columns({{0, 5, 0}, {0, 5, 0}}));
    for (std::size_t k = 1; k <= 2; ++k) {
        EXPECT_EQ(robustness_index_at(so, k), 1.0);
        EXPECT_EQ(robustness_index_at(os, k), 0.0);
    }
    const auto none = robustness_curve(columns({{0, 0, 5}, {1, 0, 4}}));
    EXPECT_FALSE(none.r_of_k[0].has_value());
    EXPECT_THROW(robustness_index_at(none, 1), UndefinedValueError);
    EXPECT_EQ(robustness_index_at(none, 2), 1.0);
}

TEST(Robustness, CumulativeSumEqualsRecount)
{
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const auto ds = l2_normalize(gaussian(2, 3, 25, 1.0, 1.2, 1.0, seed));
        const auto t = build_neighbor_table(ds, 30, true);
        const auto curve = robustness_curve(categorize_neighbors(t, ds));
        for (std::size_t k = 1; k <= 30; ++k)
            EXPECT_EQ(curve.r_of_k[k - 1], recount(t, ds, k));
        for (std::size_t j = 1; j < 30; ++j) {
            EXPECT_LE(curve.so_cum[j - 1], curve.so_cum[j]);
            EXPECT_LE(curve.os_cum[j - 1], curve.os_cum[j]);
        }
    }
}

TEST(Robustness, LabelSwapComplements)
{
    const auto ds = l2_normalize(gaussian(2, 2, 30, 1.0, 1.0, 1.0, 3));
    const auto t = build_neighbor_table(ds, 20, true);
    const auto a = robustness_curve(categorize_neighbors(t, ds));
    const auto b = robustness_curve(categorize_neighbors(t, ds.swap_label_roles()));
    for (std::size_t j = 0; j < 20; ++j)
        if (a.r_of_k[j]) {
            EXPECT_NEAR(*a.r_of_k[j], 1.0 - *b.r_of_k[j], 1e-12);
        }
}

TEST(Robustness, SynthExtremes)
{
    EXPECT_GE(ri_at(gaussian(2, 2, 100, 10, 0, 0.1, 1), 10), 0.99);
    EXPECT_LE(ri_at(gaussian(2, 2, 100, 0, 10, 0.1, 1), 10), 0.01);
    // Separated cells have no cross-cell neighbors, so the balanced case needs noise.
    const double mid = ri_at(gaussian(2, 2, 400, 5, 5, 2.0, 1), 10);
    EXPECT_GE(mid, 0.4);
    EXPECT_LE(mid, 0.6);
}

TEST(Robustness, BootstrapDegenerateAndDeterministic)
{
    const auto all_so = columns({{6, 0, 0}, {6, 0, 0}});
    const auto b = bootstrap_robustness(all_so, 2, 200, 1);
    EXPECT_EQ(b.mean, 1.0);
    EXPECT_EQ(b.std, 0.0);

    const auto ds = l2_normalize(gaussian(2, 2, 50, 1.0, 1.0, 1.0, 4));
    const auto cats = categorize_neighbors(build_neighbor_table(ds, 10, true), ds);
    const auto x = bootstrap_robustness(cats, 10, 300, 9);
    const auto y = bootstrap_robustness(cats, 10, 300, 9);
    EXPECT_EQ(x.mean, y.mean);
    EXPECT_EQ(x.std, y.std);
    const double point = robustness_index_at(robustness_curve(cats), 10);
    EXPECT_LT(std::abs(x.mean - point), 2 * x.std);
    EXPECT_GT(x.std, 0.0);
}

TEST(Robustness, BootstrapStdMatchesIndependentReplicates)
{
    const auto ds = l2_normalize(gaussian(2, 2, 20, 1.0, 1.0, 1.0, 5));
    const auto cats = categorize_neighbors(build_neighbor_table(ds, 5, true), ds);
    const auto b = bootstrap_robustness(cats, 5, 100, 2);
    // Same replicate stream, recomputed here from the category matrices.
    double s = 0, s2 = 0;
    for (std::size_t r = 0; r < 100; ++r) {
        Rng rng = make_rng(2, r);
        std::uint64_t so = 0, os = 0;
        for (std::size_t i = 0; i < cats.rows(); ++i) {
            const auto row = uniform_index(rng, cats.rows());
            for (std::size_t j = 0; j < 5; ++j) {
                so += cats.so(row, j);
                os += cats.os(row, j);
            }
        }
        const double v = double(so) / double(so + os);
        s += v;
        s2 += v * v;
    }
    EXPECT_NEAR(b.mean, s / 100, 1e-12);
    EXPECT_NEAR(b.std, std::sqrt(std::max(0.0, s2 / 100 - (s / 100) * (s / 100))), 1e-9);
}

TEST(Robustness, PerClassRestriction)
{
    // Class "a" queries see only SO neighbors, class "b" queries only OS.
    const auto ds = make_dataset({{0}, {0}, {0}, {0}}, {"a", "a", "b", "b"}, {"x", "y", "x", "y"});
    NeighborTable t;
    t.n_queries = 4;
    t.k_max = 1;
    t.indices = {1, 0, 0, 1};
    t.distances.assign(4, 0.0);
    const auto cats = categorize_neighbors(t, ds);
    const auto per = robustness_per_class(cats, ds, 1, LabelAxis::bio);
    EXPECT_EQ(*per.at("a"), 1.0);
    EXPECT_EQ(*per.at("b"), 0.0);
    EXPECT_EQ(robustness_index_at(robustness_curve(cats), 1), 0.5);
}

TEST(Robustness, PerClassRecombinesToGlobal)
{
    const auto ds = l2_normalize(gaussian(3, 2, 30, 1.0, 1.0, 1.0, 7));
    const auto cats = categorize_neighbors(build_neighbor_table(ds, 12, true), ds);
    const auto per = robustness_per_class(cats, ds, 12, LabelAxis::bio);
    double so = 0, denom = 0;
    for (std::size_t c = 0; c < ds.bio().num_classes(); ++c) {
        std::uint64_t so_c = 0, os_c = 0;
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (ds.bio().code(i) == static_cast<int>(c))
                for (std::size_t j = 0; j < 12; ++j) {
                    so_c += cats.so(i, j);
                    os_c += cats.os(i, j);
                }
        EXPECT_NEAR(*per.at(ds.bio().vocab()[c]), double(so_c) / double(so_c + os_c), 1e-15);
        so += *per.at(ds.bio().vocab()[c]) * double(so_c + os_c);
        denom += double(so_c + os_c);
    }
    EXPECT_NEAR(so / denom, robustness_index_at(robustness_curve(cats), 12), 1e-12);

    const auto single = make_dataset({{0}, {1}, {2}, {3}}, {"a", "a", "a", "a"}, {"x", "y", "x", "y"});
    const auto sc = categorize_neighbors(build_neighbor_table(single, 2, true), single);
    const auto sp = robustness_per_class(sc, single, 2, LabelAxis::bio);
    EXPECT_EQ(*sp.at("a"), robustness_index_at(robustness_curve(sc), 2));
}

TEST(Robustness, PairedAggregation)
{
    RobustnessCurve a = RobustnessCurve::from_cumulative({30}, {10});
    RobustnessCurve b = RobustnessCurve::from_cumulative({10}, {30});
    const std::vector<RobustnessCurve> both{a, b};
    EXPECT_DOUBLE_EQ(*aggregate_curves(both).r_of_k[0], 0.5);

    const auto block = gaussian(2, 2, 20, 1.0, 1.0, 1.0, 8);
    const std::vector<EmbeddingDataset> one{block}, two{block, block};
    const auto single = paired_robustness(one, 10);
    const auto twice = paired_robustness(two, 10);
    const auto direct = robustness_curve(
        categorize_neighbors(build_neighbor_table(l2_normalize(block), 10, true), block));
    EXPECT_EQ(single.r_of_k, direct.r_of_k);
    EXPECT_EQ(twice.r_of_k, direct.r_of_k);

    const std::vector<EmbeddingDataset> bad{gaussian(3, 2, 20, 1, 1, 1, 1)};
    EXPECT_THROW(paired_robustness(bad, 5), InvariantError);
}

TEST(Robustness, GeneralizationIndexExamples)
{
    EXPECT_NEAR(generalization_index(CategoryCounts{50, 30, 10, 10}), 0.9, 1e-12);
    EXPECT_NEAR(generalization_index(CategoryCounts{40, 20, 10, 5}), 1.0, 1e-12);
    EXPECT_EQ(generalization_index(CategoryCounts{40, 0, 10, 5}), 0.0);
    EXPECT_THROW(generalization_index(CategoryCounts{0, 3, 0, 0}), UndefinedValueError);
}

TEST(Robustness, MaxOverK)
{
    const auto inc = RobustnessCurve::from_cumulative({1, 3, 6, 10}, {4, 5, 6, 6});
    EXPECT_EQ(max_robustness_over_k(inc, {1, 4}).k_star, 4);
    const auto flat = RobustnessCurve::from_cumulative({1, 2, 3}, {1, 2, 3});
    EXPECT_EQ(max_robustness_over_k(flat, {2, 3}).k_star, 2);
    const auto undefined = RobustnessCurve::from_cumulative({0, 0}, {0, 0});
    EXPECT_THROW(max_robustness_over_k(undefined, {1, 2}), UndefinedValueError);

    const auto ds = l2_normalize(gaussian(2, 2, 40, 1.0, 1.5, 1.0, 3));
    const auto curve = robustness_curve(categorize_neighbors(build_neighbor_table(ds, 40, true), ds));
    int arg = 0;
    double best = -1;
    for (int k = 1; k <= 40; ++k)
        if (*curve.r_of_k[k - 1] > best) {
            best = *curve.r_of_k[k - 1];
            arg = k;
        }
    EXPECT_EQ(max_robustness_over_k(curve, {1, 40}).k_star, arg);
}

TEST(Robustness, CurveCsvHeaderAndAbsentPoints)
{
    const auto c = RobustnessCurve::from_cumulative({0, 1}, {0, 1});
    const auto rows = io::parse_csv(curve_csv(c).str());
    EXPECT_EQ(rows[0], (io::CsvRow{"k", "so_cum", "os_cum", "robustness_index"}));
    EXPECT_EQ(rows[1][3], "");
    EXPECT_EQ(rows[2][3], "0.5");
}
