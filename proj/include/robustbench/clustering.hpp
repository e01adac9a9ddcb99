#ifndef ROBUSTBENCH_CLUSTERING_HPP
#define ROBUSTBENCH_CLUSTERING_HPP

#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "robustbench/common.hpp"
#include "robustbench/dataset.hpp"

namespace robustbench
{

struct ClusterAssignment
{
    std::vector<int> labels;
    int K = 0;
    double inertia = 0.0;
    std::vector<double> inertia_history; // after every assignment step of the winning run
    std::vector<double> init_inertias;   // final inertia of each initialization
    int iterations = 0;

    [[nodiscard]] std::vector<std::size_t> cluster_sizes() const
    {
        std::vector<std::size_t> sizes(static_cast<std::size_t>(K), 0);
        for (int l : labels)
            ++sizes[static_cast<std::size_t>(l)];
        return sizes;
    }
};

namespace detail
{

inline double row_sq_dist(const RowMatrix &x, Eigen::Index i, const RowMatrix &c, Eigen::Index k)
{
    return (x.row(i) - c.row(k)).squaredNorm();
}

/// k-means++ seeding: first center uniform, then proportional to D^2.
inline RowMatrix kmeanspp_init(const RowMatrix &x, int K, Rng &rng)
{
    const Eigen::Index n = x.rows();
    RowMatrix centers(K, x.cols());
    centers.row(0) = x.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n))));
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        d2[static_cast<std::size_t>(i)] = row_sq_dist(x, i, centers, 0);
    for (int k = 1; k < K; ++k) {
        double total = 0.0;
        for (double v : d2)
            total += v;
        Eigen::Index pick = 0;
        if (total <= 0.0) {
            pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n)));
        } else {
            const double target = NormalSampler::unit(rng) * total;
            double acc = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2[static_cast<std::size_t>(i)];
                if (acc > target) {
                    pick = i;
                    break;
                }
            }
        }
        centers.row(k) = x.row(pick);
        for (Eigen::Index i = 0; i < n; ++i)
            d2[static_cast<std::size_t>(i)] =
                std::min(d2[static_cast<std::size_t>(i)], row_sq_dist(x, i, centers, k));
    }
    return centers;
}

struct LloydRun
{
    std::vector<int> labels;
    double inertia = 0.0;
    std::vector<double> history;
    int iterations = 0;
};

inline LloydRun lloyd(const RowMatrix &x, int K, int max_iter, Rng &rng)
{
    const Eigen::Index n = x.rows();
    RowMatrix centers = kmeanspp_init(x, K, rng);
    LloydRun run;
    run.labels.assign(static_cast<std::size_t>(n), -1);
    std::vector<double> dist(static_cast<std::size_t>(n));

    for (int it = 0; it < std::max(1, max_iter); ++it) {
        bool changed = false;
        double inertia = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = row_sq_dist(x, i, centers, 0);
            for (int k = 1; k < K; ++k) {
                const double d = row_sq_dist(x, i, centers, k);
                if (d < best_d) {
                    best_d = d;
                    best = k;
                }
            }
            if (run.labels[static_cast<std::size_t>(i)] != best)
                changed = true;
            run.labels[static_cast<std::size_t>(i)] = best;
            dist[static_cast<std::size_t>(i)] = best_d;
            inertia += best_d;
        }

        // Empty clusters take the point farthest from its centroid.
        std::vector<std::size_t> sizes(static_cast<std::size_t>(K), 0);
        for (int l : run.labels)
            ++sizes[static_cast<std::size_t>(l)];
        for (int k = 0; k < K; ++k) {
            if (sizes[static_cast<std::size_t>(k)] > 0)
                continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i)
                if (sizes[static_cast<std::size_t>(run.labels[i])] > 1 && dist[i] > far_d) {
                    far_d = dist[i];
                    far = i;
                }
            if (far_d < 0.0)
                break; // fewer distinct points than clusters
            --sizes[static_cast<std::size_t>(run.labels[far])];
            run.labels[far] = k;
            ++sizes[static_cast<std::size_t>(k)];
            inertia -= dist[far];
            dist[far] = 0.0;
            changed = true;
        }
        run.history.push_back(inertia);
        run.inertia = inertia;
        run.iterations = it + 1;
        if (!changed && it > 0)
            break;

        centers.setZero();
        for (Eigen::Index i = 0; i < n; ++i)
            centers.row(run.labels[static_cast<std::size_t>(i)]) += x.row(i);
        for (int k = 0; k < K; ++k)
            if (sizes[static_cast<std::size_t>(k)] > 0)
                centers.row(k) /= static_cast<double>(sizes[static_cast<std::size_t>(k)]);
    }
    return run;
}

} // namespace detail

/// Lloyd's algorithm with k-means++ seeding; the best of n_init
/// initializations by inertia is returned (lowest init index on ties).
/// Initialization r uses random stream (seed, r).
inline ClusterAssignment kmeans(const RowMatrix &x, int K, int n_init, int max_iter, std::uint64_t seed)
{
    if (K < 1 || K > x.rows())
        throw RangeError("K = " + std::to_string(K) + " outside [1, " + std::to_string(x.rows()) + "]");
    if (n_init < 1)
        throw RangeError("n_init must be at least 1");
    std::vector<detail::LloydRun> runs(static_cast<std::size_t>(n_init));
    for (int r = 0; r < n_init; ++r) {
        Rng rng = make_rng(seed, static_cast<std::uint64_t>(r));
        runs[static_cast<std::size_t>(r)] = detail::lloyd(x, K, max_iter, rng);
    }
    std::size_t best = 0;
    for (std::size_t r = 1; r < runs.size(); ++r)
        if (runs[r].inertia < runs[best].inertia)
            best = r;
    ClusterAssignment out;
    out.K = K;
    out.labels = std::move(runs[best].labels);
    out.inertia = runs[best].inertia;
    out.inertia_history = std::move(runs[best].history);
    out.iterations = runs[best].iterations;
    for (const auto &r : runs)
        out.init_inertias.push_back(r.inertia);
    return out;
}

inline ClusterAssignment kmeans(const EmbeddingDataset &ds, int K, int n_init, int max_iter,
                                std::uint64_t seed)
{
    return kmeans(to_double(ds.embeddings()), K, n_init, max_iter, seed);
}

// ---------------------------------------------------------------------------
// Silhouette

/// Full Euclidean distance matrix, reused across candidate K values.
inline RowMatrix pairwise_distances(const RowMatrix &x)
{
    const Eigen::Index n = x.rows();
    RowMatrix d(n, n);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t ui) {
        const auto i = static_cast<Eigen::Index>(ui);
        d(i, i) = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i)
                d(i, j) = (x.row(i) - x.row(j)).norm();
    });
    return d;
}

/// Mean silhouette (b - a) / max(a, b). Singleton-cluster samples contribute 0,
/// as do samples with a = b = 0.
inline double silhouette_from_distances(const RowMatrix &dist, std::span<const int> labels, int K)
{
    if (K < 2)
        throw RangeError("silhouette needs K >= 2");
    const std::size_t n = labels.size();
    std::vector<std::size_t> sizes(static_cast<std::size_t>(K), 0);
    for (int l : labels)
        ++sizes[static_cast<std::size_t>(l)];
    std::size_t non_empty = 0;
    for (auto s : sizes)
        non_empty += s > 0;
    if (non_empty < 2)
        throw DegenerateInputError("silhouette needs at least two non-empty clusters");

    std::vector<double> s(n, 0.0);
    parallel_for(n, [&](std::size_t i) {
        const int own = labels[i];
        if (sizes[static_cast<std::size_t>(own)] <= 1)
            return;
        std::vector<double> sum(static_cast<std::size_t>(K), 0.0);
        for (std::size_t j = 0; j < n; ++j)
            sum[static_cast<std::size_t>(labels[j])] +=
                dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        const double a = sum[static_cast<std::size_t>(own)] /
                         static_cast<double>(sizes[static_cast<std::size_t>(own)] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (int k = 0; k < K; ++k)
            if (k != own && sizes[static_cast<std::size_t>(k)] > 0)
                b = std::min(b, sum[static_cast<std::size_t>(k)] /
                                    static_cast<double>(sizes[static_cast<std::size_t>(k)]));
        const double m = std::max(a, b);
        s[i] = m > 0.0 ? (b - a) / m : 0.0;
    });
    double total = 0.0;
    for (double v : s)
        total += v;
    return total / static_cast<double>(n);
}

inline constexpr std::size_t kSilhouetteMaxSamples = 20000;

struct SilhouetteInput
{
    RowMatrix distances;
    std::vector<std::size_t> rows; // rows of the data used (all, or a seeded subsample)
    bool subsampled = false;
};

inline SilhouetteInput prepare_silhouette(const RowMatrix &x, std::uint64_t seed)
{
    SilhouetteInput in;
    const auto n = static_cast<std::size_t>(x.rows());
    in.rows.resize(n);
    std::iota(in.rows.begin(), in.rows.end(), std::size_t{0});
    if (n > kSilhouetteMaxSamples) {
        Rng rng = make_rng(seed, 0x5117);
        shuffle_in_place(in.rows, rng);
        in.rows.resize(kSilhouetteMaxSamples);
        std::sort(in.rows.begin(), in.rows.end());
        in.subsampled = true;
        RowMatrix sub(static_cast<Eigen::Index>(in.rows.size()), x.cols());
        for (std::size_t r = 0; r < in.rows.size(); ++r)
            sub.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(in.rows[r]));
        in.distances = pairwise_distances(sub);
    } else {
        in.distances = pairwise_distances(x);
    }
    return in;
}

inline double silhouette_score(const SilhouetteInput &in, const ClusterAssignment &a)
{
    std::vector<int> labels;
    labels.reserve(in.rows.size());
    for (auto r : in.rows)
        labels.push_back(a.labels[r]);
    return silhouette_from_distances(in.distances, labels, a.K);
}

inline double silhouette_score(const EmbeddingDataset &ds, const ClusterAssignment &a)
{
    if (a.labels.size() != ds.size())
        throw DimensionMismatchError("assignment length differs from dataset size");
    return silhouette_score(prepare_silhouette(to_double(ds.embeddings()), 0), a);
}

// ---------------------------------------------------------------------------
// Adjusted Rand index (pair counting via the contingency table)

inline std::vector<int> dense_codes(std::span<const int> labels)
{
    std::map<int, int> code;
    std::vector<int> out;
    out.reserve(labels.size());
    for (int l : labels)
        out.push_back(code.try_emplace(l, static_cast<int>(code.size())).first->second);
    return out;
}

inline double adjusted_rand_index(std::span<const int> a, std::span<const int> b)
{
    if (a.size() != b.size())
        throw DimensionMismatchError("ARI inputs have lengths " + std::to_string(a.size()) + " and " +
                                     std::to_string(b.size()));
    const auto ca = dense_codes(a);
    const auto cb = dense_codes(b);
    const int ra = ca.empty() ? 0 : *std::max_element(ca.begin(), ca.end()) + 1;
    const int rb = cb.empty() ? 0 : *std::max_element(cb.begin(), cb.end()) + 1;
    std::vector<std::int64_t> table(static_cast<std::size_t>(ra) * rb, 0), row(ra, 0), col(rb, 0);
    for (std::size_t i = 0; i < ca.size(); ++i) {
        ++table[static_cast<std::size_t>(ca[i]) * rb + cb[i]];
        ++row[ca[i]];
        ++col[cb[i]];
    }
    auto pairs = [](std::int64_t m) { return m * (m - 1) / 2; };
    const auto n = static_cast<std::int64_t>(a.size());
    std::int64_t sum_ij = 0, sum_a = 0, sum_b = 0;
    for (auto v : table)
        sum_ij += pairs(v);
    for (auto v : row)
        sum_a += pairs(v);
    for (auto v : col)
        sum_b += pairs(v);
    // Pair confusion: same/same, same-in-a only, same-in-b only, different/different.
    const std::int64_t tp = sum_ij;
    const std::int64_t fn = sum_a - sum_ij;
    const std::int64_t fp = sum_b - sum_ij;
    const std::int64_t tn = pairs(n) - tp - fn - fp;
    if (fn == 0 && fp == 0)
        return 1.0;
    const double num = 2.0 * (static_cast<double>(tp) * static_cast<double>(tn) -
                              static_cast<double>(fn) * static_cast<double>(fp));
    const double den = static_cast<double>(tp + fn) * static_cast<double>(fn + tn) +
                       static_cast<double>(tp + fp) * static_cast<double>(fp + tn);
    return num / den;
}

// ---------------------------------------------------------------------------
// Model selection and the clustering score

struct KSelection
{
    int K_star = 0;
    double silhouette = 0.0;
    ClusterAssignment assignment;
    std::map<int, double> silhouette_by_K;
    bool silhouette_subsampled = false;
    bool low_silhouette = false; // best silhouette below kLowSilhouette
};

/// Silhouette below this is reported as "no substantial structure".
inline constexpr double kLowSilhouette = 0.25;

/// K in the range maximizing the silhouette of the best-inertia clustering
/// (n_init initializations per K); smaller K on ties.
inline KSelection select_k_silhouette(const RowMatrix &x, IntRange k_range, int n_init, int max_iter,
                                      std::uint64_t seed)
{
    if (k_range.empty() || k_range.lo < 2)
        throw RangeError("silhouette K range must start at 2 or above");
    if (k_range.hi > x.rows() - 1)
        throw RangeError("K up to " + std::to_string(k_range.hi) + " needs more than " +
                         std::to_string(x.rows()) + " samples");
    const SilhouetteInput sil = prepare_silhouette(x, seed);
    const auto n_k = static_cast<std::size_t>(k_range.size());
    std::vector<ClusterAssignment> fits(n_k);
    std::vector<double> scores(n_k);
    parallel_for(n_k, [&](std::size_t t) {
        const int K = k_range.lo + static_cast<int>(t);
        fits[t] = kmeans(x, K, n_init, max_iter, seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(K)));
        scores[t] = silhouette_score(sil, fits[t]);
    });
    KSelection out;
    std::size_t best = 0;
    for (std::size_t t = 0; t < n_k; ++t) {
        out.silhouette_by_K[k_range.lo + static_cast<int>(t)] = scores[t];
        if (scores[t] > scores[best])
            best = t;
    }
    out.K_star = k_range.lo + static_cast<int>(best);
    out.silhouette = scores[best];
    out.assignment = std::move(fits[best]);
    out.silhouette_subsampled = sil.subsampled;
    out.low_silhouette = out.silhouette < kLowSilhouette;
    return out;
}

inline KSelection select_k_silhouette(const EmbeddingDataset &ds, IntRange k_range = {2, 30},
                                      int n_init = 20, std::uint64_t seed = 0, int max_iter = 300)
{
    return select_k_silhouette(to_double(l2_normalize(ds).embeddings()), k_range, n_init, max_iter, seed);
}

struct ClusteringConfig
{
    IntRange k_range{2, 30};
    int select_inits = 20;
    int final_inits = 5;
    int trials = 50;
    int max_iter = 300;
    std::uint64_t seed = 0;
};

struct ClusteringScore
{
    int K_star = 0;
    double silhouette = 0.0;
    bool low_silhouette = false;
    bool silhouette_subsampled = false;
    double ari_bio = 0.0;  // mean over trials
    double ari_conf = 0.0; // mean over trials
    double mean = 0.0;
    double std = 0.0;
    std::vector<double> trial_scores;
    std::vector<double> trial_ari_bio;
    std::vector<double> trial_ari_conf;
};

namespace detail
{

inline std::uint64_t trial_seed(std::uint64_t seed, int trial)
{
    return seed * 0x100000001B3ull + 0xC0FFEEull + static_cast<std::uint64_t>(trial) * 0x9E3779B97F4A7C15ull;
}

inline void score_trials(const RowMatrix &x, const EmbeddingDataset &ds, int K, const ClusteringConfig &cfg,
                         ClusteringScore &out)
{
    const auto trials = static_cast<std::size_t>(cfg.trials);
    out.trial_scores.assign(trials, 0.0);
    out.trial_ari_bio.assign(trials, 0.0);
    out.trial_ari_conf.assign(trials, 0.0);
    parallel_for(trials, [&](std::size_t t) {
        const auto fit = kmeans(x, K, cfg.final_inits, cfg.max_iter, trial_seed(cfg.seed, static_cast<int>(t)));
        out.trial_ari_bio[t] = adjusted_rand_index(fit.labels, ds.bio().codes());
        out.trial_ari_conf[t] = adjusted_rand_index(fit.labels, ds.conf().codes());
        out.trial_scores[t] = out.trial_ari_bio[t] - out.trial_ari_conf[t];
    });
    double sum = 0.0, sb = 0.0, sc = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        sum += out.trial_scores[t];
        sb += out.trial_ari_bio[t];
        sc += out.trial_ari_conf[t];
    }
    const auto nt = static_cast<double>(trials);
    out.mean = sum / nt;
    out.ari_bio = sb / nt;
    out.ari_conf = sc / nt;
    double ss = 0.0;
    for (double v : out.trial_scores)
        ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / nt);
}

} // namespace detail

/// ARI(clusters, bio) - ARI(clusters, conf). K is chosen by silhouette, then
/// the final clustering is repeated `trials` times with distinct seeds.
/// Embeddings are l2-normalized first.
inline ClusteringScore clustering_score(const EmbeddingDataset &ds, const ClusteringConfig &cfg = {})
{
    if (cfg.trials < 1)
        throw RangeError("clustering score needs at least one trial");
    if (ds.bio().num_classes() != ds.conf().num_classes())
        log_warning("clustering score: unequal numbers of biological (" +
                    std::to_string(ds.bio().num_classes()) + ") and confounding (" +
                    std::to_string(ds.conf().num_classes()) + ") classes; ARIs are not comparable");
    const RowMatrix x = to_double(l2_normalize(ds).embeddings());
    const KSelection sel = select_k_silhouette(x, cfg.k_range, cfg.select_inits, cfg.max_iter, cfg.seed);
    ClusteringScore out;
    out.K_star = sel.K_star;
    out.silhouette = sel.silhouette;
    out.low_silhouette = sel.low_silhouette;
    out.silhouette_subsampled = sel.silhouette_subsampled;
    detail::score_trials(x, ds, sel.K_star, cfg, out);
    return out;
}

struct UpperBoundScore
{
    double best_score = 0.0;
    int best_K = 0;
    std::map<int, double> score_by_K;
};

/// Clustering score for every K in the range, maximum returned (smaller K on ties).
inline UpperBoundScore clustering_score_upper_bound(const EmbeddingDataset &ds, IntRange k_range = {2, 100},
                                                    const ClusteringConfig &cfg = {})
{
    if (k_range.empty() || k_range.lo < 1)
        throw RangeError("invalid K range for the clustering upper bound");
    const RowMatrix x = to_double(l2_normalize(ds).embeddings());
    const int hi = std::min<int>(k_range.hi, static_cast<int>(x.rows()));
    UpperBoundScore out;
    bool found = false;
    for (int K = k_range.lo; K <= hi; ++K) {
        // Same trial seeds as clustering_score, so the selected K reproduces its score.
        ClusteringScore s;
        detail::score_trials(x, ds, K, cfg, s);
        out.score_by_K[K] = s.mean;
        if (!found || s.mean > out.best_score) {
            out.best_score = s.mean;
            out.best_K = K;
            found = true;
        }
    }
    if (!found)
        throw RangeError("K range is empty after clipping to the sample count");
    return out;
}

} // namespace robustbench

#endif
