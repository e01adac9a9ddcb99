#include "helpers.hpp"

using namespace rbtest;

namespace
{

double total_loss(const DannParams &p, const RowMatrix &x, const std::vector<int> &yb, const std::vector<int> &yc,
                  bool extractor, double lambda)
{
    DannParams scratch;
    const auto l = dann_gradients(p, x, yb, yc, lambda, true, scratch);
    return extractor ? l.cl - lambda * l.da : l.cl + l.da;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3}); }

} // namespace

TEST(Dann, GradientsMatchFiniteDifferences)
{
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Rng rng = make_rng(seed, 7);
        NormalSampler normal;
        RowMatrix x(12, 6);
        for (Eigen::Index i = 0; i < x.size(); ++i)
            x.data()[i] = normal(rng);
        std::vector<int> yb, yc;
        for (int i = 0; i < 12; ++i) {
            yb.push_back(i % 3);
            yc.push_back((i / 3) % 2);
        }
        DannParams p = dann_init(6, 3, 2, 4, seed);
        const double lambda = 0.7;
        DannParams grad;
        dann_gradients(p, x, yb, yc, lambda, true, grad);

        const double h = 1e-4;
        int checked = 0;
        auto check = [&](auto member, bool extractor) {
            auto &w = p.*member;
            const auto &g = grad.*member;
            for (Eigen::Index i = 0; i < w.size(); ++i) {
                const double orig = w.data()[i];
                w.data()[i] = orig + h;
                const double up = total_loss(p, x, yb, yc, extractor, lambda);
                w.data()[i] = orig - h;
                const double down = total_loss(p, x, yb, yc, extractor, lambda);
                w.data()[i] = orig;
                EXPECT_LT(rel_err(g.data()[i], (up - down) / (2 * h)), 1e-4);
                ++checked;
            }
        };
        check(&DannParams::w1, true);
        check(&DannParams::b1, true);
        check(&DannParams::wc, false);
        check(&DannParams::bc, false);
        check(&DannParams::wd1, false);
        check(&DannParams::bd1, false);
        check(&DannParams::wd2, false);
        check(&DannParams::bd2, false);
        EXPECT_GT(checked, 50);
    }
}

TEST(Dann, ZeroLambdaEqualsPlainClassifier)
{
    const auto ds = gaussian(2, 2, 40, 2.0, 2.0, 1.0, 3, 8);
    DannConfig zero;
    zero.epochs = 5;
    zero.fixed_lambda = 0.0;
    zero.seed = 11;
    DannConfig plain = zero;
    plain.use_discriminator = false;
    plain.fixed_lambda.reset();
    const auto a = dann_train(ds, ds, zero);
    const auto b = dann_train(ds, ds, plain);
    EXPECT_EQ(a.params.w1, b.params.w1);
    EXPECT_EQ(a.params.b1, b.params.b1);
    EXPECT_EQ(a.params.wc, b.params.wc);
    EXPECT_EQ(a.params.bc, b.params.bc);
}

TEST(Dann, LambdaScheduleAndLog)
{
    const auto ds = gaussian(2, 2, 20, 2.0, 2.0, 1.0, 1, 8);
    DannConfig cfg;
    cfg.epochs = 4;
    const auto m = dann_train(ds, ds, cfg);
    ASSERT_EQ(m.training_log.size(), 4u);
    for (int e = 0; e < 4; ++e) {
        EXPECT_EQ(m.training_log[static_cast<std::size_t>(e)].epoch, e);
        EXPECT_DOUBLE_EQ(m.training_log[static_cast<std::size_t>(e)].lambda, e / 4.0);
    }
    EXPECT_EQ(m.hidden_dim(), 4u);
    const auto again = dann_train(ds, ds, cfg);
    EXPECT_EQ(m.params.w1, again.params.w1);
}

TEST(Dann, PreservesBiologicalSignal)
{
    DannConfig cfg;
    const std::vector<double> grid{1e-2, 1.0, 1e2};
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        cfg.seed = seed;
        const auto all = gaussian(2, 2, 150, 5.0, 5.0, 0.5, seed);
        std::vector<std::size_t> tr, te;
        for (std::size_t i = 0; i < all.size(); ++i)
            (i % 3 < 2 ? tr : te).push_back(i);
        const auto train = all.subset(tr), test = all.subset(te);
        const auto model = dann_train(train, test, cfg);
        for (const auto &e : model.training_log) {
            EXPECT_TRUE(std::isfinite(e.loss_cl));
            EXPECT_TRUE(std::isfinite(e.loss_da));
        }
        EXPECT_GE(model.training_log.back().val_accuracy, 0.95);
        const auto et = dann_embed(model, train), es = dann_embed(model, test);
        EXPECT_GE(evaluate_probe(fit_probe(et, et, LabelAxis::bio, grid), es).accuracy, 0.90) << "seed " << seed;
    }
}

TEST(Dann, EmbedHandExample)
{
    DannModel m;
    m.params.w1 = RowMatrix(2, 1);
    m.params.w1 << 1.0, -2.0;
    m.params.b1 = Eigen::VectorXd::Constant(1, 0.5);
    const auto ds = make_dataset({{1, 0}, {0, 1}, {2, 1}}, {"a", "b", "a"}, {"x", "y", "y"});
    const auto out = dann_embed(m, ds);
    ASSERT_EQ(out.dim(), 1u);
    EXPECT_FLOAT_EQ(out.embeddings()(0, 0), 1.5f);
    EXPECT_FLOAT_EQ(out.embeddings()(1, 0), 0.0f);
    EXPECT_FLOAT_EQ(out.embeddings()(2, 0), 0.5f);
    EXPECT_EQ(out.bio().labels(), ds.bio().labels());

    m.params.w1.setZero();
    m.params.b1.setZero();
    EXPECT_TRUE((dann_embed(m, ds).embeddings().array() == 0.0f).all());
    EXPECT_THROW(dann_embed(m, gaussian(2, 2, 5, 1, 1, 1, 1, 4)), DimensionMismatchError);
}

TEST(Dann, RejectsDegenerateTraining)
{
    const auto one = make_dataset({{0, 1}, {1, 0}}, {"a", "a"}, {"x", "y"});
    EXPECT_THROW(dann_train(one, one), DegenerateInputError);
    const auto ds = gaussian(2, 2, 5, 1, 1, 1, 1, 4);
    DannConfig bad;
    bad.epochs = 0;
    EXPECT_THROW(dann_train(ds, ds, bad), RangeError);
}

TEST(Dann, ModelRoundTrip)
{
    const auto ds = gaussian(2, 2, 20, 2.0, 2.0, 1.0, 1, 8);
    DannConfig cfg;
    cfg.epochs = 2;
    const auto m = dann_train(ds, ds, cfg);
    TempDir dir;
    save_dann(m, dir.path() / "dann.json");
    const auto back = load_dann(dir.path() / "dann.json");
    EXPECT_EQ(back.bio_vocab, m.bio_vocab);
    EXPECT_LE((back.params.w1 - m.params.w1).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_EQ(back.training_log.size(), m.training_log.size());
}
