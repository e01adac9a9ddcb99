#ifndef ROBUSTBENCH_ROBUSTIFY_DANN_HPP
#define ROBUSTBENCH_ROBUSTIFY_DANN_HPP

#include <cmath>
#include <filesystem>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "robustbench/common.hpp"
#include "robustbench/dataset.hpp"
#include "robustbench/io.hpp"

namespace robustbench
{

/// Extractor x -> relu(x W1 + b1) (h = floor(d / 2)), linear biological head,
/// and a one-hidden-layer discriminator over the confounding classes.
struct DannParams
{
    RowMatrix w1; // d x h
    Eigen::VectorXd b1;
    RowMatrix wc; // h x C_bio
    Eigen::VectorXd bc;
    RowMatrix wd1; // h x hd
    Eigen::VectorXd bd1;
    RowMatrix wd2; // hd x C_conf
    Eigen::VectorXd bd2;

    template <class Fn> void for_each(Fn &&fn)
    {
        fn(w1), fn(b1), fn(wc), fn(bc), fn(wd1), fn(bd1), fn(wd2), fn(bd2);
    }
    template <class Fn> void for_each_pair(DannParams &other, Fn &&fn)
    {
        fn(w1, other.w1), fn(b1, other.b1), fn(wc, other.wc), fn(bc, other.bc);
        fn(wd1, other.wd1), fn(bd1, other.bd1), fn(wd2, other.wd2), fn(bd2, other.bd2);
    }

    [[nodiscard]] DannParams zeros_like() const
    {
        DannParams z = *this;
        z.for_each([](auto &m) { m.setZero(); });
        return z;
    }
};

struct DannEpochLog
{
    int epoch = 0;
    double lambda = 0.0;
    double loss_cl = 0.0;
    double loss_da = 0.0;
    double val_accuracy = 0.0;
};

struct DannModel
{
    DannParams params;
    std::vector<std::string> bio_vocab;
    std::vector<std::string> conf_vocab;
    std::vector<DannEpochLog> training_log;

    [[nodiscard]] std::size_t input_dim() const { return static_cast<std::size_t>(params.w1.rows()); }
    [[nodiscard]] std::size_t hidden_dim() const { return static_cast<std::size_t>(params.w1.cols()); }
};

struct DannConfig
{
    int epochs = 20;
    int batch_size = 64;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    int discriminator_hidden = 0; // 0 = same width as the extractor output
    std::optional<double> fixed_lambda; // overrides the e / E schedule
    bool use_discriminator = true;       // false = plain classifier training
    std::uint64_t seed = 0;
};

inline void to_json(io::json &j, const DannConfig &c)
{
    j = {{"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"momentum", c.momentum},
         {"discriminator_hidden", c.discriminator_hidden},
         {"use_discriminator", c.use_discriminator},
         {"seed", c.seed}};
    j["fixed_lambda"] = c.fixed_lambda ? io::json(*c.fixed_lambda) : io::json(nullptr);
}

inline void from_json(const io::json &j, DannConfig &c)
{
    DannConfig d;
    c.epochs = j.value("epochs", d.epochs);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.momentum = j.value("momentum", d.momentum);
    c.discriminator_hidden = j.value("discriminator_hidden", d.discriminator_hidden);
    c.use_discriminator = j.value("use_discriminator", d.use_discriminator);
    c.seed = j.value("seed", d.seed);
    if (j.contains("fixed_lambda") && !j["fixed_lambda"].is_null())
        c.fixed_lambda = j["fixed_lambda"].get<double>();
}

namespace detail
{

inline RowMatrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng &rng)
{
    RowMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            m(i, j) = (2.0 * NormalSampler::unit(rng) - 1.0) * bound;
    return m;
}

inline Eigen::VectorXd uniform_init(Eigen::Index n, double bound, Rng &rng)
{
    return uniform_init(n, 1, bound, rng).col(0);
}

/// Softmax cross-entropy mean over rows; writes d(loss)/d(logits) into `grad`.
inline double softmax_ce(const RowMatrix &logits, std::span<const int> y, RowMatrix &grad)
{
    const auto n = static_cast<double>(logits.rows());
    grad.resize(logits.rows(), logits.cols());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        grad.row(i) = (logits.row(i).array() - m).exp();
        const double z = grad.row(i).sum();
        grad.row(i) /= z;
        const int yi = y[static_cast<std::size_t>(i)];
        loss -= logits(i, yi) - m - std::log(z);
        grad(i, yi) -= 1.0;
    }
    grad /= n;
    return loss / n;
}

} // namespace detail

inline DannParams dann_init(std::size_t d, std::size_t n_bio, std::size_t n_conf, int disc_hidden,
                            std::uint64_t seed)
{
    const auto h = static_cast<Eigen::Index>(d / 2);
    if (h < 1)
        throw RangeError("DANN needs input dimension >= 2");
    const Eigen::Index hd = disc_hidden > 0 ? disc_hidden : h;
    DannParams p;
    {
        Rng rng = make_rng(seed, 0xDA01);
        const double bound = 1.0 / std::sqrt(static_cast<double>(d));
        p.w1 = detail::uniform_init(static_cast<Eigen::Index>(d), h, bound, rng);
        p.b1 = detail::uniform_init(h, bound, rng);
    }
    {
        Rng rng = make_rng(seed, 0xDA02);
        const double bound = 1.0 / std::sqrt(static_cast<double>(h));
        p.wc = detail::uniform_init(h, static_cast<Eigen::Index>(n_bio), bound, rng);
        p.bc = detail::uniform_init(static_cast<Eigen::Index>(n_bio), bound, rng);
    }
    {
        Rng rng = make_rng(seed, 0xDA03);
        const double b1 = 1.0 / std::sqrt(static_cast<double>(h));
        const double b2 = 1.0 / std::sqrt(static_cast<double>(hd));
        p.wd1 = detail::uniform_init(h, hd, b1, rng);
        p.bd1 = detail::uniform_init(hd, b1, rng);
        p.wd2 = detail::uniform_init(hd, static_cast<Eigen::Index>(n_conf), b2, rng);
        p.bd2 = detail::uniform_init(static_cast<Eigen::Index>(n_conf), b2, rng);
    }
    return p;
}

struct DannLosses
{
    double cl = 0.0;
    double da = 0.0;
};

/// Forward and backward pass on one batch. Classifier parameters receive
/// dL_CL, discriminator parameters dL_DA, and the extractor
/// dL_CL - lambda * dL_DA (the reversed domain gradient).
inline DannLosses dann_gradients(const DannParams &p, const RowMatrix &x, std::span<const int> y_bio,
                                 std::span<const int> y_conf, double lambda, bool use_discriminator,
                                 DannParams &grad)
{
    grad = p.zeros_like();
    RowMatrix pre = x * p.w1;
    pre.rowwise() += p.b1.transpose();
    const RowMatrix z = pre.cwiseMax(0.0);

    RowMatrix logits_c = z * p.wc;
    logits_c.rowwise() += p.bc.transpose();
    RowMatrix d_logits_c;
    DannLosses losses;
    losses.cl = detail::softmax_ce(logits_c, y_bio, d_logits_c);
    grad.wc = z.transpose() * d_logits_c;
    grad.bc = d_logits_c.colwise().sum().transpose();
    RowMatrix dz_cl = d_logits_c * p.wc.transpose();

    RowMatrix dz = dz_cl;
    if (use_discriminator) {
        RowMatrix pre_d = z * p.wd1;
        pre_d.rowwise() += p.bd1.transpose();
        const RowMatrix a = pre_d.cwiseMax(0.0);
        RowMatrix logits_d = a * p.wd2;
        logits_d.rowwise() += p.bd2.transpose();
        RowMatrix d_logits_d;
        losses.da = detail::softmax_ce(logits_d, y_conf, d_logits_d);
        grad.wd2 = a.transpose() * d_logits_d;
        grad.bd2 = d_logits_d.colwise().sum().transpose();
        RowMatrix da = d_logits_d * p.wd2.transpose();
        da = (pre_d.array() > 0.0).select(da, 0.0);
        grad.wd1 = z.transpose() * da;
        grad.bd1 = da.colwise().sum().transpose();
        const RowMatrix dz_da = da * p.wd1.transpose();
        if (lambda != 0.0)
            dz = dz_cl - lambda * dz_da;
    }
    dz = (pre.array() > 0.0).select(dz, 0.0);
    grad.w1 = x.transpose() * dz;
    grad.b1 = dz.colwise().sum().transpose();
    return losses;
}

/// Rectified extractor output for raw features.
inline RowMatrix dann_features(const DannParams &p, const RowMatrix &x)
{
    RowMatrix pre = x * p.w1;
    pre.rowwise() += p.b1.transpose();
    return pre.cwiseMax(0.0);
}

inline double dann_accuracy(const DannParams &p, const RowMatrix &x, std::span<const int> y)
{
    RowMatrix logits = dann_features(p, x) * p.wc;
    logits.rowwise() += p.bc.transpose();
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index best = 0;
        logits.row(i).maxCoeff(&best);
        correct += static_cast<int>(best) == y[static_cast<std::size_t>(i)];
    }
    return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

namespace detail
{

/// Codes of `col` re-expressed in the vocabulary `vocab`; -1 when absent.
inline std::vector<int> recode(const LabelColumn &col, const std::vector<std::string> &vocab)
{
    std::vector<int> map(col.num_classes(), -1);
    for (std::size_t k = 0; k < col.num_classes(); ++k) {
        const auto it = std::lower_bound(vocab.begin(), vocab.end(), col.vocab()[k]);
        if (it != vocab.end() && *it == col.vocab()[k])
            map[k] = static_cast<int>(it - vocab.begin());
    }
    std::vector<int> out;
    out.reserve(col.size());
    for (int c : col.codes())
        out.push_back(map[static_cast<std::size_t>(c)]);
    return out;
}

} // namespace detail

/// Mini-batch SGD with momentum for a fixed number of epochs; lambda_e = e / E
/// for epoch e = 0 .. E-1 unless fixed. The batch order comes from its own
/// random stream, independent of the parameter initialization streams.
inline DannModel dann_train(const EmbeddingDataset &train, const EmbeddingDataset &val, const DannConfig &cfg = {})
{
    if (train.bio().num_classes() < 2 || train.conf().num_classes() < 2)
        throw DegenerateInputError("DANN needs at least two biological and two confounding classes");
    if (train.dim() != val.dim())
        throw DimensionMismatchError("DANN train and validation dimensions differ");
    if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.learning_rate > 0))
        throw RangeError("DANN needs epochs >= 1, batch_size >= 1 and a positive learning rate");
    DannModel model;
    model.bio_vocab = train.bio().vocab();
    model.conf_vocab = train.conf().vocab();
    model.params = dann_init(train.dim(), model.bio_vocab.size(), model.conf_vocab.size(),
                             cfg.discriminator_hidden, cfg.seed);
    const RowMatrix x = to_double(train.embeddings());
    const RowMatrix xv = to_double(val.embeddings());
    const auto val_bio = detail::recode(val.bio(), model.bio_vocab);
    const auto &y_bio = train.bio().codes();
    const auto &y_conf = train.conf().codes();

    DannParams velocity = model.params.zeros_like();
    DannParams grad;
    Rng shuffle_rng = make_rng(cfg.seed, 0xDA04);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int e = 0; e < cfg.epochs; ++e) {
        const double lambda = cfg.fixed_lambda ? *cfg.fixed_lambda : static_cast<double>(e) / cfg.epochs;
        shuffle_in_place(order, shuffle_rng);
        DannEpochLog log{e, lambda, 0.0, 0.0, 0.0};
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            RowMatrix xb(static_cast<Eigen::Index>(stop - start), x.cols());
            std::vector<int> yb, cb;
            for (std::size_t k = start; k < stop; ++k) {
                xb.row(static_cast<Eigen::Index>(k - start)) = x.row(static_cast<Eigen::Index>(order[k]));
                yb.push_back(y_bio[order[k]]);
                cb.push_back(y_conf[order[k]]);
            }
            const auto losses = dann_gradients(model.params, xb, yb, cb, lambda, cfg.use_discriminator, grad);
            if (!std::isfinite(losses.cl) || !std::isfinite(losses.da))
                throw NumericalError("DANN loss became non-finite in epoch " + std::to_string(e));
            log.loss_cl += losses.cl;
            log.loss_da += losses.da;
            ++batches;
            velocity.for_each_pair(grad, [&](auto &v, auto &g) { v = cfg.momentum * v + g; });
            model.params.for_each_pair(velocity, [&](auto &w, auto &v) { w -= cfg.learning_rate * v; });
        }
        log.loss_cl /= static_cast<double>(batches);
        log.loss_da /= static_cast<double>(batches);
        log.val_accuracy = dann_accuracy(model.params, xv, val_bio);
        model.training_log.push_back(log);
    }
    return model;
}

/// phi(x) with all labels carried over; output dimension h.
inline EmbeddingDataset dann_embed(const DannModel &model, const EmbeddingDataset &ds)
{
    if (ds.dim() != model.input_dim())
        throw DimensionMismatchError("DANN model expects dimension " + std::to_string(model.input_dim()) +
                                     ", dataset has " + std::to_string(ds.dim()));
    const RowMatrix f = dann_features(model.params, to_double(ds.embeddings()));
    return EmbeddingDataset(f.cast<float>(), ds.sample_ids(), ds.case_ids(), ds.slide_ids(), ds.bio().labels(),
                            ds.conf().labels());
}

// ---------------------------------------------------------------------------
// Persistence: JSON (shapes, vocabularies, log) plus one float64 blob with the
// parameters in declaration order, each row-major.

inline void save_dann(const DannModel &m, const std::filesystem::path &json_path)
{
    std::vector<double> blob;
    DannParams p = m.params;
    io::json shapes = io::json::array();
    p.for_each([&](const auto &a) {
        shapes.push_back({a.rows(), a.cols()});
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = 0; j < a.cols(); ++j)
                blob.push_back(a(i, j));
    });
    auto blob_path = json_path;
    blob_path.replace_extension(".f64");
    io::write_blob<double>(blob_path, blob);
    io::json log = io::json::array();
    for (const auto &e : m.training_log)
        log.push_back({{"epoch", e.epoch},
                       {"lambda", e.lambda},
                       {"loss_cl", e.loss_cl},
                       {"loss_da", e.loss_da},
                       {"val_accuracy", e.val_accuracy}});
    io::write_json(json_path, {{"kind", "dann"},
                               {"bio_vocab", m.bio_vocab},
                               {"conf_vocab", m.conf_vocab},
                               {"shapes", shapes},
                               {"training_log", log},
                               {"params", blob_path.filename().string()}});
}

inline DannModel load_dann(const std::filesystem::path &json_path)
{
    const io::json j = io::read_json(json_path);
    DannModel m;
    try {
        m.bio_vocab = j.at("bio_vocab").get<std::vector<std::string>>();
        m.conf_vocab = j.at("conf_vocab").get<std::vector<std::string>>();
        const auto blob = io::read_blob<double>(io::resolve_relative(json_path, j.at("params").get<std::string>()));
        const auto &shapes = j.at("shapes");
        if (shapes.size() != 8)
            throw FormatError("DANN model needs 8 parameter arrays");
        std::size_t k = 0, s = 0;
        m.params.for_each([&](auto &a) {
            const auto r = shapes[s].at(0).get<Eigen::Index>(), c = shapes[s].at(1).get<Eigen::Index>();
            ++s;
            if (k + static_cast<std::size_t>(r * c) > blob.size())
                throw FormatError("DANN parameter blob is too short");
            a.resize(r, c);
            for (Eigen::Index i = 0; i < r; ++i)
                for (Eigen::Index jj = 0; jj < c; ++jj)
                    a(i, jj) = blob[k++];
        });
        if (k != blob.size())
            throw FormatError("DANN parameter blob has trailing values");
        for (const auto &e : j.at("training_log"))
            m.training_log.push_back({e.at("epoch").get<int>(), e.at("lambda").get<double>(),
                                      e.at("loss_cl").get<double>(), e.at("loss_da").get<double>(),
                                      e.at("val_accuracy").get<double>()});
    } catch (const io::json::exception &e) {
        throw FormatError("malformed DANN model " + json_path.string() + ": " + e.what());
    }
    return m;
}

} // namespace robustbench

#endif
