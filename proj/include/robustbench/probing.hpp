#ifndef ROBUSTBENCH_PROBING_HPP
#define ROBUSTBENCH_PROBING_HPP

#include <cmath>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "robustbench/common.hpp"
#include "robustbench/dataset.hpp"
#include "robustbench/io.hpp"

namespace robustbench
{

struct ProbeModel
{
    RowMatrix weights; // d x C
    Eigen::VectorXd biases;
    double chosen_C = 1.0;
    LabelAxis target_axis = LabelAxis::bio;
    std::vector<std::string> class_vocab;
    std::map<double, double> val_accuracy_by_C;

    [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(weights.rows()); }
    [[nodiscard]] std::size_t num_classes() const { return class_vocab.size(); }
};

/// `count` values log-spaced over [lo, hi].
inline std::vector<double> log_grid(double lo, double hi, int count)
{
    if (!(lo > 0) || !(hi >= lo) || count < 1)
        throw RangeError("log grid needs 0 < lo <= hi and count >= 1");
    std::vector<double> out;
    const double a = std::log10(lo), b = std::log10(hi);
    for (int i = 0; i < count; ++i)
        out.push_back(count == 1 ? lo : std::pow(10.0, a + (b - a) * i / (count - 1)));
    return out;
}

inline std::vector<double> default_c_grid() { return log_grid(1e-8, 1e4, 15); }

namespace detail
{

/// Multinomial logistic regression with an L2 penalty on the weights:
/// f(W, b) = (1/n) sum CE + ||W||^2 / (2 C n). Parameters are stacked class by
/// class, each block holding d weights followed by the bias.
class SoftmaxObjective
{
  public:
    SoftmaxObjective(const RowMatrix &x, const std::vector<int> &y, int n_classes, double C)
        : x_(x), y_(y), C_(n_classes), d_(static_cast<int>(x.cols())), inv_n_(1.0 / static_cast<double>(x.rows())),
          lambda_(1.0 / (C * static_cast<double>(x.rows())))
    {
    }

    [[nodiscard]] int size() const { return C_ * (d_ + 1); }

    void unpack(const Eigen::VectorXd &theta, RowMatrix &w, Eigen::VectorXd &b) const
    {
        w.resize(d_, C_);
        b.resize(C_);
        for (int c = 0; c < C_; ++c) {
            w.col(c) = theta.segment(c * (d_ + 1), d_);
            b(c) = theta(c * (d_ + 1) + d_);
        }
    }

    /// Row-wise softmax probabilities; returns the objective value.
    double probabilities(const Eigen::VectorXd &theta, RowMatrix &p) const
    {
        RowMatrix w;
        Eigen::VectorXd b;
        unpack(theta, w, b);
        p = x_ * w;
        p.rowwise() += b.transpose();
        double loss = 0.0;
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            const double m = p.row(i).maxCoeff();
            p.row(i).array() -= m;
            const double lse = std::log(p.row(i).array().exp().sum());
            loss -= p(i, y_[static_cast<std::size_t>(i)]) - lse;
            p.row(i) = (p.row(i).array() - lse).exp();
        }
        return loss * inv_n_ + 0.5 * lambda_ * w.squaredNorm();
    }

    double value(const Eigen::VectorXd &theta) const
    {
        RowMatrix p;
        return probabilities(theta, p);
    }

    double value_and_gradient(const Eigen::VectorXd &theta, Eigen::VectorXd &grad, RowMatrix *probs = nullptr) const
    {
        RowMatrix p;
        const double f = probabilities(theta, p);
        RowMatrix r = p;
        for (Eigen::Index i = 0; i < r.rows(); ++i)
            r(i, y_[static_cast<std::size_t>(i)]) -= 1.0;
        const RowMatrix gw = x_.transpose() * r * inv_n_;
        const Eigen::VectorXd gb = r.colwise().sum().transpose() * inv_n_;
        grad.resize(size());
        for (int c = 0; c < C_; ++c) {
            grad.segment(c * (d_ + 1), d_) = gw.col(c) + lambda_ * theta.segment(c * (d_ + 1), d_);
            grad(c * (d_ + 1) + d_) = gb(c);
        }
        if (probs)
            *probs = std::move(p);
        return f;
    }

    [[nodiscard]] Eigen::MatrixXd hessian(const RowMatrix &p) const
    {
        const int q = d_ + 1;
        Eigen::MatrixXd xt(x_.rows(), q);
        xt.leftCols(d_) = x_;
        xt.col(d_).setOnes();
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(size(), size());
        for (int c = 0; c < C_; ++c)
            for (int e = c; e < C_; ++e) {
                Eigen::VectorXd wts = -(p.col(c).array() * p.col(e).array()).matrix();
                if (c == e)
                    wts += p.col(c);
                const Eigen::MatrixXd block = xt.transpose() * wts.asDiagonal() * xt * inv_n_;
                h.block(c * q, e * q, q, q) = block;
                if (e != c)
                    h.block(e * q, c * q, q, q) = block.transpose();
            }
        for (int c = 0; c < C_; ++c)
            for (int j = 0; j < d_; ++j)
                h(c * q + j, c * q + j) += lambda_;
        return h;
    }

  private:
    const RowMatrix &x_;
    const std::vector<int> &y_;
    int C_;
    int d_;
    double inv_n_;
    double lambda_;
};

struct SolverTrace
{
    std::vector<double> objective; // value after every accepted step, starting at theta0
    int iterations = 0;
    bool converged = false;
};

inline constexpr double kProbeGradTol = 1e-6;
inline constexpr int kProbeMaxIter = 1000;
inline constexpr int kNewtonMaxParams = 512;

/// Backtracking (Armijo) line search along `dir`; returns the accepted step or 0.
inline double armijo(const SoftmaxObjective &obj, const Eigen::VectorXd &theta, double f,
                     const Eigen::VectorXd &grad, const Eigen::VectorXd &dir, double &f_new)
{
    const double slope = grad.dot(dir);
    if (!(slope < 0))
        return 0.0;
    double t = 1.0;
    for (int i = 0; i < 60; ++i, t *= 0.5) {
        f_new = obj.value(theta + t * dir);
        if (f_new <= f + 1e-4 * t * slope)
            return t;
    }
    return 0.0;
}

inline Eigen::VectorXd minimize_newton(const SoftmaxObjective &obj, Eigen::VectorXd theta, SolverTrace &trace)
{
    Eigen::VectorXd g;
    RowMatrix p;
    double f = obj.value_and_gradient(theta, g, &p);
    trace.objective.push_back(f);
    for (int it = 0; it < kProbeMaxIter; ++it) {
        if (g.lpNorm<Eigen::Infinity>() < kProbeGradTol) {
            trace.converged = true;
            break;
        }
        Eigen::MatrixXd h = obj.hessian(p);
        // The unpenalized biases leave one flat direction; a small ridge keeps LDLT well posed.
        h.diagonal().array() += 1e-10 + 1e-8 * h.diagonal().cwiseAbs().maxCoeff();
        Eigen::VectorXd dir = -h.ldlt().solve(g);
        if (!dir.allFinite() || g.dot(dir) >= 0)
            dir = -g;
        double f_new = f;
        double t = armijo(obj, theta, f, g, dir, f_new);
        if (t == 0.0 && dir != -g) {
            dir = -g;
            t = armijo(obj, theta, f, g, dir, f_new);
        }
        trace.iterations = it + 1;
        if (t == 0.0)
            break; // no further decrease representable
        theta += t * dir;
        f = obj.value_and_gradient(theta, g, &p);
        trace.objective.push_back(f);
    }
    return theta;
}

inline Eigen::VectorXd minimize_lbfgs(const SoftmaxObjective &obj, Eigen::VectorXd theta, SolverTrace &trace,
                                      int memory = 10)
{
    Eigen::VectorXd g;
    double f = obj.value_and_gradient(theta, g);
    trace.objective.push_back(f);
    std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> hist;
    for (int it = 0; it < kProbeMaxIter; ++it) {
        if (g.lpNorm<Eigen::Infinity>() < kProbeGradTol) {
            trace.converged = true;
            break;
        }
        // Two-loop recursion.
        Eigen::VectorXd q = g;
        std::vector<double> alpha(hist.size());
        for (std::size_t i = hist.size(); i-- > 0;) {
            const auto &[s, y] = hist[i];
            alpha[i] = s.dot(q) / y.dot(s);
            q -= alpha[i] * y;
        }
        if (!hist.empty()) {
            const auto &[s, y] = hist.back();
            q *= s.dot(y) / y.squaredNorm();
        }
        for (std::size_t i = 0; i < hist.size(); ++i) {
            const auto &[s, y] = hist[i];
            const double beta = y.dot(q) / y.dot(s);
            q += (alpha[i] - beta) * s;
        }
        Eigen::VectorXd dir = -q;
        double f_new = f;
        double t = armijo(obj, theta, f, g, dir, f_new);
        if (t == 0.0) {
            hist.clear();
            dir = -g;
            t = armijo(obj, theta, f, g, dir, f_new);
        }
        trace.iterations = it + 1;
        if (t == 0.0)
            break;
        const Eigen::VectorXd step = t * dir;
        theta += step;
        Eigen::VectorXd g_new;
        f = obj.value_and_gradient(theta, g_new);
        trace.objective.push_back(f);
        const Eigen::VectorXd y = g_new - g;
        if (y.dot(step) > 1e-12) {
            hist.emplace_back(step, y);
            if (static_cast<int>(hist.size()) > memory)
                hist.pop_front();
        }
        g = std::move(g_new);
    }
    return theta;
}

} // namespace detail

struct ProbeFit
{
    RowMatrix weights;
    Eigen::VectorXd biases;
    detail::SolverTrace trace;
};

/// Single regularized fit with class codes y in [0, n_classes).
inline ProbeFit fit_logistic(const RowMatrix &x, const std::vector<int> &y, int n_classes, double C)
{
    if (!(C > 0) || !std::isfinite(C))
        throw RangeError("inverse regularization C must be positive and finite");
    if (!x.allFinite())
        throw NonFiniteValueError("probe features contain non-finite values");
    detail::SoftmaxObjective obj(x, y, n_classes, C);
    ProbeFit fit;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(obj.size());
    theta = obj.size() <= detail::kNewtonMaxParams ? detail::minimize_newton(obj, theta, fit.trace)
                                                   : detail::minimize_lbfgs(obj, theta, fit.trace);
    obj.unpack(theta, fit.weights, fit.biases);
    return fit;
}

/// Class index per row: argmax of the logits, ties to the lowest index.
inline std::vector<int> argmax_rows(const RowMatrix &scores)
{
    std::vector<int> out(static_cast<std::size_t>(scores.rows()));
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        int best = 0;
        for (Eigen::Index c = 1; c < scores.cols(); ++c)
            if (scores(i, c) > scores(i, best))
                best = static_cast<int>(c);
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

struct ProbeEvaluation
{
    double accuracy = 0.0;
    std::vector<std::string> predictions;
    RowMatrix softmax; // n x C, columns in class_vocab order
    std::size_t unseen_labels = 0;
};

inline ProbeEvaluation evaluate_probe(const ProbeModel &model, const EmbeddingDataset &test)
{
    if (test.dim() != model.dim())
        throw DimensionMismatchError("probe expects dimension " + std::to_string(model.dim()) + ", test has " +
                                     std::to_string(test.dim()));
    RowMatrix logits = to_double(test.embeddings()) * model.weights;
    logits.rowwise() += model.biases.transpose();
    const auto pred = argmax_rows(logits);
    ProbeEvaluation ev;
    ev.softmax = logits;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        ev.softmax.row(i).array() -= logits.row(i).maxCoeff();
        ev.softmax.row(i) = ev.softmax.row(i).array().exp();
        ev.softmax.row(i) /= ev.softmax.row(i).sum();
    }
    const LabelColumn &truth = test.labels(model.target_axis);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const std::string &p = model.class_vocab[static_cast<std::size_t>(pred[i])];
        ev.predictions.push_back(p);
        const std::string &t = truth.label(i);
        if (!std::binary_search(model.class_vocab.begin(), model.class_vocab.end(), t))
            ++ev.unseen_labels;
        else if (p == t)
            ++correct;
    }
    if (ev.unseen_labels > 0)
        log_warning("evaluate_probe: " + std::to_string(ev.unseen_labels) +
                    " test sample(s) carry labels unseen in training; scored as incorrect");
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
    return ev;
}

/// Fits one probe per grid value and keeps the one with the best validation
/// accuracy (smaller C on ties).
inline ProbeModel fit_probe(const EmbeddingDataset &train, const EmbeddingDataset &val, LabelAxis target_axis,
                            std::vector<double> c_grid = default_c_grid())
{
    if (c_grid.empty())
        throw RangeError("probe C grid is empty");
    if (train.dim() != val.dim())
        throw DimensionMismatchError("train and validation dimensions differ");
    const LabelColumn &labels = train.labels(target_axis);
    if (labels.num_classes() < 2)
        throw DegenerateInputError("probe training data has a single " + std::string(to_string(target_axis)) +
                                   " class");
    std::sort(c_grid.begin(), c_grid.end());
    const RowMatrix x = to_double(train.embeddings());
    const int n_classes = static_cast<int>(labels.num_classes());

    std::vector<ProbeModel> models(c_grid.size());
    std::vector<double> accs(c_grid.size());
    parallel_for(c_grid.size(), [&](std::size_t g) {
        ProbeFit fit = fit_logistic(x, labels.codes(), n_classes, c_grid[g]);
        ProbeModel &m = models[g];
        m.weights = std::move(fit.weights);
        m.biases = std::move(fit.biases);
        m.chosen_C = c_grid[g];
        m.target_axis = target_axis;
        m.class_vocab = labels.vocab();
        accs[g] = evaluate_probe(m, val).accuracy;
    });
    std::size_t best = 0;
    for (std::size_t g = 1; g < accs.size(); ++g)
        if (accs[g] > accs[best])
            best = g;
    ProbeModel out = std::move(models[best]);
    for (std::size_t g = 0; g < accs.size(); ++g)
        out.val_accuracy_by_C[c_grid[g]] = accs[g];
    return out;
}

// ---------------------------------------------------------------------------
// Persistence: JSON metadata plus a little-endian float32 blob of weights then biases.

inline void save_probe(const ProbeModel &m, const std::filesystem::path &json_path)
{
    std::vector<float> blob;
    for (Eigen::Index i = 0; i < m.weights.rows(); ++i)
        for (Eigen::Index c = 0; c < m.weights.cols(); ++c)
            blob.push_back(static_cast<float>(m.weights(i, c)));
    for (Eigen::Index c = 0; c < m.biases.size(); ++c)
        blob.push_back(static_cast<float>(m.biases(c)));
    auto blob_path = json_path;
    blob_path.replace_extension(".f32");
    io::write_blob<float>(blob_path, blob);
    io::json j = {{"kind", "probe"},
                  {"dim", m.dim()},
                  {"num_classes", m.num_classes()},
                  {"chosen_C", m.chosen_C},
                  {"target_axis", to_string(m.target_axis)},
                  {"class_vocab", m.class_vocab},
                  {"weights", blob_path.filename().string()}};
    io::write_json(json_path, j);
}

inline ProbeModel load_probe(const std::filesystem::path &json_path)
{
    const io::json j = io::read_json(json_path);
    ProbeModel m;
    try {
        const auto d = j.at("dim").get<std::size_t>();
        const auto c = j.at("num_classes").get<std::size_t>();
        m.chosen_C = j.at("chosen_C").get<double>();
        m.target_axis = parse_axis(j.at("target_axis").get<std::string>());
        m.class_vocab = j.at("class_vocab").get<std::vector<std::string>>();
        const auto blob = io::read_blob<float>(io::resolve_relative(json_path, j.at("weights").get<std::string>()));
        if (blob.size() != d * c + c || m.class_vocab.size() != c)
            throw FormatError("probe blob size does not match dim x classes");
        m.weights.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(c));
        m.biases.resize(static_cast<Eigen::Index>(c));
        std::size_t k = 0;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t cc = 0; cc < c; ++cc)
                m.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(cc)) = blob[k++];
        for (std::size_t cc = 0; cc < c; ++cc)
            m.biases(static_cast<Eigen::Index>(cc)) = blob[k++];
    } catch (const io::json::exception &e) {
        throw FormatError("malformed probe file " + json_path.string() + ": " + e.what());
    }
    return m;
}

// ---------------------------------------------------------------------------
// AUROC

/// Mann-Whitney AUROC of `scores` for positives vs negatives, ties counted half.
inline double auroc(std::span<const double> pos, std::span<const double> neg)
{
    if (pos.empty() || neg.empty())
        throw DegenerateInputError("AUROC needs both classes present");
    std::vector<std::pair<double, int>> all;
    all.reserve(pos.size() + neg.size());
    for (double s : pos)
        all.emplace_back(s, 1);
    for (double s : neg)
        all.emplace_back(s, 0);
    std::sort(all.begin(), all.end(), [](const auto &a, const auto &b) { return a.first < b.first; });
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j].first == all[i].first)
            ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (all[k].second == 1)
                rank_sum += avg_rank;
        i = j;
    }
    const auto np = static_cast<double>(pos.size()), nn = static_cast<double>(neg.size());
    return (rank_sum - np * (np + 1) / 2) / (np * nn);
}

/// Unweighted mean over class pairs of max(AUROC, 1 - AUROC).
inline double ovo_auroc(std::span<const double> scores, std::span<const int> labels)
{
    if (scores.size() != labels.size())
        throw DimensionMismatchError("scores and labels differ in length");
    std::map<int, std::vector<double>> by_class;
    for (std::size_t i = 0; i < scores.size(); ++i)
        by_class[labels[i]].push_back(scores[i]);
    if (by_class.size() < 2)
        throw DegenerateInputError("one-vs-one AUROC needs at least two classes");
    double total = 0.0;
    int pairs = 0;
    for (auto a = by_class.begin(); a != by_class.end(); ++a)
        for (auto b = std::next(a); b != by_class.end(); ++b) {
            const double v = auroc(a->second, b->second);
            total += std::max(v, 1.0 - v);
            ++pairs;
        }
    return total / pairs;
}

// ---------------------------------------------------------------------------
// Within-dataset confidence interval

struct ConfidenceInterval
{
    double mean = 0.0;
    std::optional<double> half_width; // absent with a single observation
    std::size_t n = 0;
};

/// Values keyed by (dataset, repetition). Each value is shifted by its
/// dataset's offset from the grand mean before the t interval is taken,
/// with df = total observations - 1.
inline ConfidenceInterval within_dataset_ci(const std::map<std::pair<std::string, int>, double> &values,
                                            double confidence = 0.95)
{
    if (values.empty())
        throw DegenerateInputError("confidence interval over no values");
    if (!(confidence > 0 && confidence < 1))
        throw RangeError("confidence must lie in (0, 1)");
    std::map<std::string, std::pair<double, std::size_t>> per_ds;
    double grand = 0.0;
    for (const auto &[key, v] : values) {
        auto &[sum, count] = per_ds[key.first];
        sum += v;
        ++count;
        grand += v;
    }
    const std::size_t reps = per_ds.begin()->second.second;
    for (const auto &[ds, sc] : per_ds)
        if (sc.second != reps)
            throw InvariantError("dataset '" + ds + "' has " + std::to_string(sc.second) + " repetitions, expected " +
                                 std::to_string(reps));
    const auto n = values.size();
    grand /= static_cast<double>(n);
    ConfidenceInterval ci;
    ci.mean = grand;
    ci.n = n;
    if (n <= 1)
        return ci;
    std::vector<double> corrected;
    for (const auto &[key, v] : values) {
        const auto &[sum, count] = per_ds[key.first];
        corrected.push_back(v - sum / static_cast<double>(count) + grand);
    }
    double ss = 0.0;
    for (double v : corrected)
        ss += (v - grand) * (v - grand);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    const boost::math::students_t dist(static_cast<double>(n - 1));
    const double t = boost::math::quantile(dist, 0.5 + confidence / 2.0);
    ci.half_width = t * sd / std::sqrt(static_cast<double>(n));
    return ci;
}

} // namespace robustbench

#endif
