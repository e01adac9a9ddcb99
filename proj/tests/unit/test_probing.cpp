#include "helpers.hpp"

#include <cmath>

using namespace rbtest;

TEST(Probing, DefaultGrid)
{
    const auto g = default_c_grid();
    ASSERT_EQ(g.size(), 15u);
    EXPECT_NEAR(g.front(), 1e-8, 1e-20);
    EXPECT_NEAR(g.back(), 1e4, 1e-8);
    for (std::size_t i = 1; i < g.size(); ++i)
        EXPECT_NEAR(std::log10(g[i]) - std::log10(g[i - 1]), 12.0 / 14.0, 1e-9);
}

TEST(Probing, SeparableDataReachesPerfectAccuracy)
{
    const auto [train, val] = split_draw(gaussian(2, 2, 70, 6.0, 0.0, 0.5, 1), 4);
    const auto model = fit_probe(train, val, LabelAxis::bio);
    EXPECT_EQ(evaluate_probe(model, val).accuracy, 1.0);
    EXPECT_EQ(evaluate_probe(model, train).accuracy, 1.0);
    EXPECT_EQ(model.val_accuracy_by_C.size(), 15u);
    EXPECT_TRUE(model.weights.allFinite());
    const auto g = default_c_grid();
    EXPECT_NE(std::find(g.begin(), g.end(), model.chosen_C), g.end());
}

TEST(Probing, NoiseLabelsStayNearChance)
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto train = gaussian(2, 2, 100, 0.0, 0.0, 1.0, seed);
        const auto val = gaussian(2, 2, 100, 0.0, 0.0, 1.0, seed + 100);
        const double acc = evaluate_probe(fit_probe(train, val, LabelAxis::bio), val).accuracy;
        EXPECT_GE(acc, 0.35);
        EXPECT_LE(acc, 0.65);
    }
}

TEST(Probing, SingletonGridAndTiesPreferSmallerC)
{
    const auto train = gaussian(2, 2, 30, 6.0, 0.0, 0.5, 3);
    EXPECT_EQ(fit_probe(train, train, LabelAxis::bio, {0.37}).chosen_C, 0.37);
    // Every value separates the data perfectly, so the smallest wins.
    EXPECT_EQ(fit_probe(train, train, LabelAxis::bio, {100.0, 1.0, 10.0}).chosen_C, 1.0);
}

TEST(Probing, ErrorsOnDegenerateInputs)
{
    const auto one = make_dataset({{0, 1}, {1, 0}}, {"a", "a"}, {"x", "y"});
    EXPECT_THROW(fit_probe(one, one, LabelAxis::bio), DegenerateInputError);
    const auto train = gaussian(2, 2, 10, 1, 1, 1, 1, 8);
    const auto other = gaussian(2, 2, 10, 1, 1, 1, 1, 4);
    EXPECT_THROW(fit_probe(train, other, LabelAxis::bio), DimensionMismatchError);
    EXPECT_THROW(fit_probe(train, train, LabelAxis::bio, {}), RangeError);
    const auto model = fit_probe(train, train, LabelAxis::bio, {1.0});
    EXPECT_THROW(evaluate_probe(model, other), DimensionMismatchError);
}

TEST(Probing, ZeroWeightsPickFirstClass)
{
    ProbeModel m;
    m.weights = RowMatrix::Zero(2, 4);
    m.biases = Eigen::VectorXd::Zero(4);
    m.class_vocab = {"a", "b", "c", "d"};
    const auto test = make_dataset({{1, 2}, {3, 4}, {5, 6}, {7, 8}}, {"a", "b", "c", "d"}, {"x", "x", "y", "y"});
    const auto ev = evaluate_probe(m, test);
    EXPECT_EQ(ev.accuracy, 0.25);
    for (const auto &p : ev.predictions)
        EXPECT_EQ(p, "a");
    for (Eigen::Index i = 0; i < 4; ++i)
        EXPECT_NEAR(ev.softmax.row(i).sum(), 1.0, 1e-12);
}

TEST(Probing, UnseenLabelsScoreIncorrect)
{
    ProbeModel m;
    m.weights = RowMatrix::Zero(1, 2);
    m.biases = Eigen::VectorXd::Zero(2);
    m.class_vocab = {"a", "b"};
    const auto test = make_dataset({{0}, {0}}, {"a", "z"}, {"x", "x"});
    WarningCapture warn;
    const auto ev = evaluate_probe(m, test);
    EXPECT_EQ(ev.unseen_labels, 1u);
    EXPECT_EQ(ev.accuracy, 0.5);
    EXPECT_FALSE(warn.messages.empty());
}

TEST(Probing, ObjectiveDecreasesMonotonically)
{
    const auto ds = gaussian(3, 2, 40, 1.0, 1.0, 1.0, 5);
    const RowMatrix x = to_double(ds.embeddings());
    for (double C : {1e-2, 1.0, 1e3}) {
        const auto fit = fit_logistic(x, ds.bio().codes(), 3, C);
        ASSERT_GE(fit.trace.objective.size(), 2u);
        for (std::size_t i = 1; i < fit.trace.objective.size(); ++i)
            EXPECT_LE(fit.trace.objective[i], fit.trace.objective[i - 1]);
    }
}

TEST(Probing, LbfgsPathAlsoMonotone)
{
    // 60 dims x 10 classes exceeds the Newton parameter cap.
    const auto ds = gaussian(10, 2, 15, 2.0, 1.0, 1.0, 6, 60);
    const RowMatrix x = to_double(ds.embeddings());
    const auto fit = fit_logistic(x, ds.bio().codes(), 10, 1.0);
    for (std::size_t i = 1; i < fit.trace.objective.size(); ++i)
        EXPECT_LE(fit.trace.objective[i], fit.trace.objective[i - 1]);
    EXPECT_TRUE(fit.weights.allFinite());
}

TEST(Probing, DeterministicAndPersistable)
{
    const auto train = gaussian(3, 2, 30, 1.5, 1.0, 1.0, 7);
    const auto val = gaussian(3, 2, 10, 1.5, 1.0, 1.0, 8);
    const auto a = fit_probe(train, val, LabelAxis::conf);
    const auto b = fit_probe(train, val, LabelAxis::conf);
    EXPECT_LE((a.weights - b.weights).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_EQ(a.chosen_C, b.chosen_C);

    TempDir dir;
    save_probe(a, dir.path() / "probe.json");
    const auto c = load_probe(dir.path() / "probe.json");
    EXPECT_EQ(c.class_vocab, a.class_vocab);
    EXPECT_EQ(c.chosen_C, a.chosen_C);
    EXPECT_EQ(c.target_axis, LabelAxis::conf);
    EXPECT_LE((c.weights - a.weights).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_NEAR(evaluate_probe(c, val).accuracy, evaluate_probe(a, val).accuracy, 1e-12);
}

TEST(Probing, OvoAurocExamples)
{
    const std::vector<double> ordered{0, 1, 2, 3, 4, 5};
    const std::vector<int> lab{0, 0, 1, 1, 2, 2};
    EXPECT_EQ(ovo_auroc(ordered, lab), 1.0);
    const std::vector<double> reversed{5, 4, 3, 2, 1, 0};
    EXPECT_EQ(ovo_auroc(reversed, lab), 1.0);
    const std::vector<double> same{1, 2, 1, 2};
    const std::vector<int> two{0, 0, 1, 1};
    EXPECT_EQ(ovo_auroc(same, two), 0.5);
    const std::vector<int> single{0, 0, 0, 0};
    EXPECT_THROW(ovo_auroc(same, single), DegenerateInputError);
}

TEST(Probing, OvoAurocNoiseAndMonotoneInvariance)
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng = make_rng(seed);
        NormalSampler normal;
        std::vector<double> s(2000), t(2000);
        std::vector<int> lab(2000);
        for (std::size_t i = 0; i < 2000; ++i) {
            s[i] = normal(rng);
            lab[i] = static_cast<int>(uniform_index(rng, 3));
            t[i] = std::exp(3.0 * s[i]) - 7.0;
        }
        const double v = ovo_auroc(s, lab);
        EXPECT_GE(v, 0.5);
        EXPECT_LE(v, 0.55);
        EXPECT_EQ(ovo_auroc(t, lab), v);
    }
}

TEST(Probing, AurocMatchesPairCount)
{
    Rng rng = make_rng(11);
    NormalSampler normal;
    std::vector<double> pos(37), neg(23);
    for (auto &v : pos)
        v = std::round(normal(rng) * 3) + 1;
    for (auto &v : neg)
        v = std::round(normal(rng) * 3);
    double wins = 0;
    for (double p : pos)
        for (double n : neg)
            wins += p > n ? 1.0 : p == n ? 0.5 : 0.0;
    EXPECT_NEAR(auroc(pos, neg), wins / (37.0 * 23.0), 1e-12);
}

TEST(Probing, WithinDatasetCiTrivialCases)
{
    std::map<std::pair<std::string, int>, double> same, offset;
    for (int r = 0; r < 5; ++r)
        for (const char *d : {"a", "b"}) {
            same[{d, r}] = 0.7;
            offset[{d, r}] = std::string(d) == "a" ? 0.6 : 0.9;
        }
    EXPECT_NEAR(*within_dataset_ci(same).half_width, 0.0, 1e-15);
    const auto ci = within_dataset_ci(offset);
    EXPECT_NEAR(*ci.half_width, 0.0, 1e-12);
    EXPECT_NEAR(ci.mean, 0.75, 1e-12);
    EXPECT_FALSE(within_dataset_ci({{{"a", 0}, 0.3}}).half_width.has_value());
    offset.erase({"a", 4});
    EXPECT_THROW(within_dataset_ci(offset), InvariantError);
}

TEST(Probing, WithinDatasetCiMatchesRecomputation)
{
    // 3 datasets x 20 repetitions; t(0.975, 59) = 2.000995378 from tables.
    std::map<std::pair<std::string, int>, double> values;
    double table[3][20];
    Rng rng = make_rng(21);
    NormalSampler normal;
    for (int d = 0; d < 3; ++d)
        for (int r = 0; r < 20; ++r) {
            table[d][r] = 0.5 + 0.1 * d + 0.05 * normal(rng);
            values[{"ds" + std::to_string(d), r}] = table[d][r];
        }
    double grand = 0, dmean[3] = {0, 0, 0};
    for (int d = 0; d < 3; ++d) {
        for (int r = 0; r < 20; ++r)
            dmean[d] += table[d][r] / 20.0;
        grand += dmean[d] / 3.0;
    }
    double ss = 0;
    for (int d = 0; d < 3; ++d)
        for (int r = 0; r < 20; ++r) {
            const double c = table[d][r] - dmean[d] + grand;
            ss += (c - grand) * (c - grand);
        }
    const double half = 2.000995378 * std::sqrt(ss / 59.0) / std::sqrt(60.0);
    const auto ci = within_dataset_ci(values);
    EXPECT_NEAR(ci.mean, grand, 1e-12);
    EXPECT_NEAR(*ci.half_width, half, 1e-8);
    EXPECT_EQ(ci.n, 60u);
}
