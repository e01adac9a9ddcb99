#ifndef ROBUSTBENCH_ROBUSTIFY_COMBAT_HPP
#define ROBUSTBENCH_ROBUSTIFY_COMBAT_HPP

#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "robustbench/common.hpp"
#include "robustbench/dataset.hpp"
#include "robustbench/io.hpp"

namespace robustbench
{

/// Parametric empirical-Bayes location/scale model, batch only (no covariates).
struct CombatModel
{
    Eigen::VectorXd grand_mean;  // d
    Eigen::VectorXd var_pooled;  // d
    RowMatrix gamma_star;        // batches x d
    RowMatrix delta_star;        // batches x d
    std::vector<std::string> batch_vocab;
    std::vector<bool> uncorrected; // zero pooled variance features, left as they are
    std::optional<std::size_t> reference_batch;
    std::vector<int> iterations; // EB iterations per batch

    [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(grand_mean.size()); }
    [[nodiscard]] std::size_t flagged_features() const
    {
        return static_cast<std::size_t>(std::count(uncorrected.begin(), uncorrected.end(), true));
    }

    /// Applies the fitted adjustment to rows whose batch index is known.
    [[nodiscard]] RowMatrix transform(const RowMatrix &x, std::span<const int> batch) const
    {
        if (static_cast<std::size_t>(x.cols()) != dim())
            throw DimensionMismatchError("ComBat model expects dimension " + std::to_string(dim()));
        RowMatrix out = x;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const int b = batch[static_cast<std::size_t>(i)];
            if (reference_batch && static_cast<std::size_t>(b) == *reference_batch)
                continue;
            for (Eigen::Index g = 0; g < x.cols(); ++g) {
                if (uncorrected[static_cast<std::size_t>(g)])
                    continue;
                const double sd = std::sqrt(var_pooled(g));
                const double s = (x(i, g) - grand_mean(g)) / sd;
                out(i, g) = (s - gamma_star(b, g)) / std::sqrt(delta_star(b, g)) * sd + grand_mean(g);
            }
        }
        return out;
    }
};

inline constexpr double kCombatTolerance = 1e-4;

namespace detail
{

inline double sample_var(const Eigen::VectorXd &v)
{
    if (v.size() < 2)
        return 0.0;
    const double m = v.mean();
    return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

/// Shrinks one batch's location/scale estimates toward their across-feature priors.
inline int eb_iterate(const RowMatrix &s_batch, const Eigen::VectorXd &g_hat, const Eigen::VectorXd &d_hat,
                      const std::vector<Eigen::Index> &features, Eigen::VectorXd &g_star, Eigen::VectorXd &d_star)
{
    const auto nf = static_cast<Eigen::Index>(features.size());
    Eigen::VectorXd gh(nf), dh(nf);
    for (Eigen::Index k = 0; k < nf; ++k) {
        gh(k) = g_hat(features[static_cast<std::size_t>(k)]);
        dh(k) = d_hat(features[static_cast<std::size_t>(k)]);
    }
    const double g_bar = gh.mean();
    const double t2 = sample_var(gh);
    const double m = dh.mean();
    const double s2 = sample_var(dh);
    const bool shrink_delta = s2 > 0.0;
    const double a = shrink_delta ? (2.0 * s2 + m * m) / s2 : 0.0;
    const double b = shrink_delta ? (m * s2 + m * m * m) / s2 : 0.0;
    const auto n = static_cast<double>(s_batch.rows());

    Eigen::VectorXd g_old = gh, d_old = dh, g_new(nf), d_new(nf);
    int it = 0;
    for (; it < 10000; ++it) {
        for (Eigen::Index k = 0; k < nf; ++k)
            g_new(k) = t2 > 0.0 ? (n * t2 * gh(k) + d_old(k) * g_bar) / (n * t2 + d_old(k)) : g_bar;
        for (Eigen::Index k = 0; k < nf; ++k) {
            if (!shrink_delta) {
                d_new(k) = dh(k);
                continue;
            }
            const double sum2 = (s_batch.col(features[static_cast<std::size_t>(k)]).array() - g_new(k)).square().sum();
            d_new(k) = (0.5 * sum2 + b) / (n / 2.0 + a - 1.0);
        }
        double change = 0.0;
        for (Eigen::Index k = 0; k < nf; ++k) {
            if (g_old(k) != 0.0)
                change = std::max(change, std::abs(g_new(k) - g_old(k)) / std::abs(g_old(k)));
            else
                change = std::max(change, std::abs(g_new(k)));
            if (d_old(k) != 0.0)
                change = std::max(change, std::abs(d_new(k) - d_old(k)) / std::abs(d_old(k)));
        }
        g_old = g_new;
        d_old = d_new;
        if (change < kCombatTolerance)
            break;
    }
    g_star = Eigen::VectorXd::Zero(g_hat.size());
    d_star = Eigen::VectorXd::Ones(g_hat.size());
    for (Eigen::Index k = 0; k < nf; ++k) {
        g_star(features[static_cast<std::size_t>(k)]) = g_new(k);
        d_star(features[static_cast<std::size_t>(k)]) = d_new(k);
    }
    return it + 1;
}

} // namespace detail

struct CombatResult
{
    CombatModel model;
    RowMatrix corrected;
};

/// Core routine on a raw matrix with batch codes in [0, n_batches).
inline CombatResult combat(const RowMatrix &x, std::span<const int> batch, std::vector<std::string> batch_vocab,
                           std::optional<std::size_t> reference = std::nullopt)
{
    const auto n_batches = batch_vocab.size();
    const Eigen::Index d = x.cols();
    if (static_cast<std::size_t>(x.rows()) != batch.size())
        throw RowCountMismatchError("batch labels and data rows differ in count");
    if (!x.allFinite())
        throw NonFiniteValueError("ComBat input contains non-finite values");
    std::vector<std::vector<Eigen::Index>> rows_of(n_batches);
    for (std::size_t i = 0; i < batch.size(); ++i)
        rows_of[static_cast<std::size_t>(batch[i])].push_back(static_cast<Eigen::Index>(i));
    for (std::size_t b = 0; b < n_batches; ++b)
        if (rows_of[b].size() < 2)
            throw InsufficientCellError("ComBat batch '" + batch_vocab[b] + "' has " +
                                        std::to_string(rows_of[b].size()) + " sample(s); at least 2 required");
    if (reference && *reference >= n_batches)
        throw RangeError("reference batch index out of range");

    CombatResult res;
    CombatModel &m = res.model;
    m.batch_vocab = std::move(batch_vocab);
    m.reference_batch = reference;
    if (n_batches == 1) {
        m.grand_mean = x.colwise().mean().transpose();
        m.var_pooled = ((x.rowwise() - m.grand_mean.transpose()).array().square().colwise().sum() /
                        static_cast<double>(x.rows()))
                           .transpose();
        m.gamma_star = RowMatrix::Zero(1, d);
        m.delta_star = RowMatrix::Ones(1, d);
        m.uncorrected.assign(static_cast<std::size_t>(d), false);
        m.iterations = {0};
        res.corrected = x;
        return res;
    }

    RowMatrix batch_mean(static_cast<Eigen::Index>(n_batches), d);
    for (std::size_t b = 0; b < n_batches; ++b) {
        batch_mean.row(static_cast<Eigen::Index>(b)).setZero();
        for (auto r : rows_of[b])
            batch_mean.row(static_cast<Eigen::Index>(b)) += x.row(r);
        batch_mean.row(static_cast<Eigen::Index>(b)) /= static_cast<double>(rows_of[b].size());
    }
    if (reference) {
        const auto rb = static_cast<Eigen::Index>(*reference);
        m.grand_mean = batch_mean.row(rb).transpose();
        m.var_pooled = Eigen::VectorXd::Zero(d);
        for (auto r : rows_of[*reference])
            m.var_pooled += (x.row(r) - batch_mean.row(rb)).array().square().matrix().transpose();
        m.var_pooled /= static_cast<double>(rows_of[*reference].size());
    } else {
        m.grand_mean = Eigen::VectorXd::Zero(d);
        for (std::size_t b = 0; b < n_batches; ++b)
            m.grand_mean += batch_mean.row(static_cast<Eigen::Index>(b)).transpose() *
                            (static_cast<double>(rows_of[b].size()) / static_cast<double>(x.rows()));
        m.var_pooled = Eigen::VectorXd::Zero(d);
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            m.var_pooled += (x.row(i) - batch_mean.row(batch[static_cast<std::size_t>(i)])).array().square().matrix().transpose();
        m.var_pooled /= static_cast<double>(x.rows());
    }

    m.uncorrected.assign(static_cast<std::size_t>(d), false);
    std::vector<Eigen::Index> active;
    for (Eigen::Index g = 0; g < d; ++g) {
        if (m.var_pooled(g) > 0.0)
            active.push_back(g);
        else
            m.uncorrected[static_cast<std::size_t>(g)] = true;
    }
    if (m.flagged_features() > 0)
        log_warning("ComBat: " + std::to_string(m.flagged_features()) +
                    " zero-variance feature(s) left uncorrected");

    RowMatrix s = x;
    for (Eigen::Index g : active) {
        const double sd = std::sqrt(m.var_pooled(g));
        s.col(g) = (x.col(g).array() - m.grand_mean(g)) / sd;
    }

    m.gamma_star = RowMatrix::Zero(static_cast<Eigen::Index>(n_batches), d);
    m.delta_star = RowMatrix::Ones(static_cast<Eigen::Index>(n_batches), d);
    m.iterations.assign(n_batches, 0);
    if (!active.empty()) {
        for (std::size_t b = 0; b < n_batches; ++b) {
            if (reference && b == *reference)
                continue;
            RowMatrix sb(static_cast<Eigen::Index>(rows_of[b].size()), d);
            for (std::size_t k = 0; k < rows_of[b].size(); ++k)
                sb.row(static_cast<Eigen::Index>(k)) = s.row(rows_of[b][k]);
            const Eigen::VectorXd g_hat = sb.colwise().mean().transpose();
            Eigen::VectorXd d_hat(d);
            for (Eigen::Index g = 0; g < d; ++g)
                d_hat(g) = detail::sample_var(sb.col(g));
            Eigen::VectorXd gs, ds;
            m.iterations[b] = detail::eb_iterate(sb, g_hat, d_hat, active, gs, ds);
            m.gamma_star.row(static_cast<Eigen::Index>(b)) = gs.transpose();
            m.delta_star.row(static_cast<Eigen::Index>(b)) = ds.transpose();
        }
    }
    if (!m.gamma_star.allFinite() || !m.delta_star.allFinite() || (m.delta_star.array() <= 0).any())
        throw NumericalError("ComBat empirical-Bayes estimates are not finite and positive");
    res.corrected = m.transform(x, batch);
    return res;
}

struct CombatDatasetResult
{
    CombatModel model;
    EmbeddingDataset corrected;
};

/// Batches are the confounding classes unless `batch_axis` says otherwise.
inline CombatDatasetResult combat_fit_transform(const EmbeddingDataset &ds, LabelAxis batch_axis = LabelAxis::conf)
{
    const auto &labels = ds.labels(batch_axis);
    auto res = combat(to_double(ds.embeddings()), labels.codes(), labels.vocab());
    return {std::move(res.model), ds.with_embeddings(res.corrected.cast<float>())};
}

/// `corrected_train` is held fixed as the reference batch and all of
/// `new_data` is adjusted toward it as one batch. Returns the adjusted new data.
inline EmbeddingDataset combat_apply_reference(const EmbeddingDataset &corrected_train,
                                               const EmbeddingDataset &new_data)
{
    if (corrected_train.dim() != new_data.dim())
        throw DimensionMismatchError("reference has dimension " + std::to_string(corrected_train.dim()) +
                                     ", new data " + std::to_string(new_data.dim()));
    const auto nr = static_cast<Eigen::Index>(corrected_train.size());
    RowMatrix x(nr + static_cast<Eigen::Index>(new_data.size()), static_cast<Eigen::Index>(new_data.dim()));
    x.topRows(nr) = to_double(corrected_train.embeddings());
    x.bottomRows(x.rows() - nr) = to_double(new_data.embeddings());
    std::vector<int> batch(static_cast<std::size_t>(x.rows()), 1);
    std::fill(batch.begin(), batch.begin() + nr, 0);
    const auto res = combat(x, batch, {"reference", "new"}, 0);
    return new_data.with_embeddings(res.corrected.bottomRows(x.rows() - nr).cast<float>());
}

// ---------------------------------------------------------------------------
// Persistence: JSON metadata plus a float64 blob
// [grand_mean | var_pooled | gamma_star rows | delta_star rows].

inline void save_combat(const CombatModel &m, const std::filesystem::path &json_path)
{
    std::vector<double> blob(m.grand_mean.data(), m.grand_mean.data() + m.grand_mean.size());
    blob.insert(blob.end(), m.var_pooled.data(), m.var_pooled.data() + m.var_pooled.size());
    blob.insert(blob.end(), m.gamma_star.data(), m.gamma_star.data() + m.gamma_star.size());
    blob.insert(blob.end(), m.delta_star.data(), m.delta_star.data() + m.delta_star.size());
    auto blob_path = json_path;
    blob_path.replace_extension(".f64");
    io::write_blob<double>(blob_path, blob);
    io::json j = {{"kind", "combat"},
                  {"dim", m.dim()},
                  {"batch_vocab", m.batch_vocab},
                  {"uncorrected", m.uncorrected},
                  {"iterations", m.iterations},
                  {"covariates", io::json::array()},
                  {"params", blob_path.filename().string()}};
    j["reference_batch"] = m.reference_batch ? io::json(*m.reference_batch) : io::json(nullptr);
    io::write_json(json_path, j);
}

inline CombatModel load_combat(const std::filesystem::path &json_path)
{
    const io::json j = io::read_json(json_path);
    CombatModel m;
    try {
        const auto d = static_cast<Eigen::Index>(j.at("dim").get<std::size_t>());
        m.batch_vocab = j.at("batch_vocab").get<std::vector<std::string>>();
        m.uncorrected = j.at("uncorrected").get<std::vector<bool>>();
        m.iterations = j.at("iterations").get<std::vector<int>>();
        if (!j.at("reference_batch").is_null())
            m.reference_batch = j.at("reference_batch").get<std::size_t>();
        const auto nb = static_cast<Eigen::Index>(m.batch_vocab.size());
        const auto blob = io::read_blob<double>(io::resolve_relative(json_path, j.at("params").get<std::string>()));
        if (static_cast<Eigen::Index>(blob.size()) != 2 * d + 2 * nb * d)
            throw FormatError("ComBat parameter blob has the wrong size");
        const double *p = blob.data();
        m.grand_mean = Eigen::Map<const Eigen::VectorXd>(p, d);
        m.var_pooled = Eigen::Map<const Eigen::VectorXd>(p + d, d);
        m.gamma_star = Eigen::Map<const RowMatrix>(p + 2 * d, nb, d);
        m.delta_star = Eigen::Map<const RowMatrix>(p + 2 * d + nb * d, nb, d);
    } catch (const io::json::exception &e) {
        throw FormatError("malformed ComBat model " + json_path.string() + ": " + e.what());
    }
    return m;
}

} // namespace robustbench

#endif
