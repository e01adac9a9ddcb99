#ifndef ROBUSTBENCH_NEIGHBORS_HPP
#define ROBUSTBENCH_NEIGHBORS_HPP

#include <cstdint>
#include <filesystem>
#include <numeric>
#include <vector>

#include "robustbench/common.hpp"
#include "robustbench/dataset.hpp"
#include "robustbench/io.hpp"

namespace robustbench
{

/// Per-query ordered neighbor lists. Row i, column j holds the (j+1)-th
/// nearest neighbor of query i.
struct NeighborTable
{
    std::size_t n_queries = 0;
    std::size_t k_max = 0;
    bool excluded_same_case = false;
    std::vector<std::uint32_t> indices; // n_queries * k_max
    std::vector<double> distances;      // squared Euclidean, same layout

    [[nodiscard]] std::uint32_t at(std::size_t i, std::size_t j) const { return indices[i * k_max + j]; }
    [[nodiscard]] double distance(std::size_t i, std::size_t j) const { return distances[i * k_max + j]; }
    [[nodiscard]] std::span<const std::uint32_t> row(std::size_t i) const
    {
        return {indices.data() + i * k_max, k_max};
    }
};

namespace detail
{

inline double squared_distance(const float *a, const float *b, std::size_t d)
{
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double diff = static_cast<double>(a[k]) - static_cast<double>(b[k]);
        s += diff * diff;
    }
    return s;
}

struct Candidate
{
    double dist;
    std::uint32_t index;

    bool operator<(const Candidate &o) const
    {
        return dist < o.dist || (dist == o.dist && index < o.index);
    }
};

template <class Eligible>
NeighborTable search(const FloatMatrix &queries, const FloatMatrix &database, std::size_t k_max,
                     bool excluded_same_case, Eligible &&eligible)
{
    const std::size_t nq = static_cast<std::size_t>(queries.rows());
    const std::size_t nd = static_cast<std::size_t>(database.rows());
    const std::size_t d = static_cast<std::size_t>(queries.cols());
    NeighborTable table;
    table.n_queries = nq;
    table.k_max = k_max;
    table.excluded_same_case = excluded_same_case;
    table.indices.resize(nq * k_max);
    table.distances.resize(nq * k_max);
    std::vector<std::size_t> short_rows(nq, 0);

    parallel_for(nq, [&](std::size_t i) {
        std::vector<Candidate> cand;
        cand.reserve(nd);
        const float *q = queries.data() + i * d;
        for (std::size_t j = 0; j < nd; ++j)
            if (eligible(i, j))
                cand.push_back({squared_distance(q, database.data() + j * d, d),
                                static_cast<std::uint32_t>(j)});
        if (cand.size() < k_max) {
            short_rows[i] = 1;
            return;
        }
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k_max), cand.end());
        for (std::size_t j = 0; j < k_max; ++j) {
            table.indices[i * k_max + j] = cand[j].index;
            table.distances[i * k_max + j] = cand[j].dist;
        }
    });
    for (std::size_t i = 0; i < nq; ++i)
        if (short_rows[i])
            throw InsufficientNeighborsError("sample " + std::to_string(i) + " has fewer than " +
                                             std::to_string(k_max) + " eligible neighbors");
    return table;
}

} // namespace detail

/// Exact k_max-nearest-neighbor lists within one dataset (Euclidean distance;
/// on l2-normalized rows this ranks like cosine distance). The query itself is
/// never its own neighbor; with exclude_same_case, neither is any sample of the
/// same case. Ties go to the lower sample index.
inline NeighborTable build_neighbor_table(const EmbeddingDataset &ds, std::size_t k_max,
                                          bool exclude_same_case)
{
    if (k_max == 0)
        throw RangeError("k_max must be at least 1");
    const std::vector<int> cases = ds.case_codes();
    return detail::search(ds.embeddings(), ds.embeddings(), k_max, exclude_same_case,
                          [&](std::size_t i, std::size_t j) {
                              return i != j && !(exclude_same_case && cases[i] == cases[j]);
                          });
}

/// Neighbors of each query row among the rows of a separate database.
inline NeighborTable build_cross_neighbor_table(const EmbeddingDataset &queries,
                                                const EmbeddingDataset &database, std::size_t k_max)
{
    if (queries.dim() != database.dim())
        throw DimensionMismatchError("query dimension " + std::to_string(queries.dim()) +
                                     " differs from database dimension " +
                                     std::to_string(database.dim()));
    if (k_max == 0)
        throw RangeError("k_max must be at least 1");
    return detail::search(queries.embeddings(), database.embeddings(), k_max, false,
                          [](std::size_t, std::size_t) { return true; });
}

// ---------------------------------------------------------------------------
// kNN classification

namespace detail
{

/// Majority vote over the first k neighbor labels; ties go to the tied class
/// whose first occurrence is nearest.
inline int vote(std::span<const std::uint32_t> row, std::size_t k, const std::vector<int> &labels,
                std::size_t n_classes, std::vector<int> &counts, std::vector<std::size_t> &first_rank)
{
    std::fill(counts.begin(), counts.end(), 0);
    std::fill(first_rank.begin(), first_rank.end(), std::numeric_limits<std::size_t>::max());
    for (std::size_t j = 0; j < k; ++j) {
        const int c = labels[row[j]];
        if (counts[c]++ == 0)
            first_rank[c] = j;
    }
    int best = -1;
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (counts[c] == 0)
            continue;
        if (best < 0 || counts[c] > counts[best] ||
            (counts[c] == counts[best] && first_rank[c] < first_rank[best]))
            best = static_cast<int>(c);
    }
    return best;
}

} // namespace detail

/// Mean of per-class recalls over the classes present in `truth`.
inline double balanced_accuracy(std::span<const int> truth, std::span<const int> predicted,
                                std::size_t n_classes)
{
    std::vector<std::size_t> total(n_classes, 0), hit(n_classes, 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ++total[truth[i]];
        if (predicted[i] == truth[i])
            ++hit[truth[i]];
    }
    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < n_classes; ++c)
        if (total[c] > 0) {
            sum += static_cast<double>(hit[c]) / static_cast<double>(total[c]);
            ++present;
        }
    return present == 0 ? 0.0 : sum / static_cast<double>(present);
}

struct KnnPrediction
{
    std::vector<int> predicted; // bio codes
    double balanced_accuracy = 0.0;
};

inline KnnPrediction knn_predict_bio(const NeighborTable &table, const EmbeddingDataset &ds,
                                     std::size_t k)
{
    if (k == 0 || k > table.k_max)
        throw RangeError("k = " + std::to_string(k) + " outside [1, " + std::to_string(table.k_max) + "]");
    if (table.n_queries != ds.size())
        throw DimensionMismatchError("neighbor table does not belong to this dataset");
    const auto &labels = ds.bio().codes();
    const std::size_t n_classes = ds.bio().num_classes();
    std::vector<int> counts(n_classes);
    std::vector<std::size_t> first_rank(n_classes);
    KnnPrediction out;
    out.predicted.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i)
        out.predicted[i] = detail::vote(table.row(i), k, labels, n_classes, counts, first_rank);
    out.balanced_accuracy = balanced_accuracy(labels, out.predicted, n_classes);
    return out;
}

struct KSweep
{
    int best_k = 0;
    std::vector<double> balanced_accuracy; // index k - range.lo
};

/// Balanced accuracy for every k in the range from a single pass over the
/// neighbor lists (vote counts grow incrementally with k).
inline KSweep sweep_k_for_prediction(const NeighborTable &table, const EmbeddingDataset &ds,
                                     IntRange k_range)
{
    if (k_range.empty())
        throw RangeError("empty k range");
    if (k_range.lo < 1 || static_cast<std::size_t>(k_range.hi) > table.k_max)
        throw RangeError("k range [" + std::to_string(k_range.lo) + ", " + std::to_string(k_range.hi) +
                         "] outside [1, " + std::to_string(table.k_max) + "]");
    const auto &labels = ds.bio().codes();
    const std::size_t n_classes = ds.bio().num_classes();
    const std::size_t n = ds.size();
    const auto n_k = static_cast<std::size_t>(k_range.size());

    // hits[k][class], totals[class]
    std::vector<std::vector<std::size_t>> hits(n_k, std::vector<std::size_t>(n_classes, 0));
    std::vector<std::size_t> totals(n_classes, 0);
    std::vector<int> counts(n_classes);
    std::vector<std::size_t> first_rank(n_classes);
    for (std::size_t i = 0; i < n; ++i) {
        ++totals[labels[i]];
        std::fill(counts.begin(), counts.end(), 0);
        std::fill(first_rank.begin(), first_rank.end(), std::numeric_limits<std::size_t>::max());
        int best = -1;
        const auto row = table.row(i);
        for (std::size_t j = 0; j < static_cast<std::size_t>(k_range.hi); ++j) {
            const int c = labels[row[j]];
            if (counts[c]++ == 0)
                first_rank[c] = j;
            if (best < 0 || counts[c] > counts[best] ||
                (counts[c] == counts[best] && first_rank[c] < first_rank[best]))
                best = c;
            const std::size_t k = j + 1;
            if (k >= static_cast<std::size_t>(k_range.lo) && best == labels[i])
                ++hits[k - static_cast<std::size_t>(k_range.lo)][labels[i]];
        }
    }
    KSweep out;
    out.balanced_accuracy.resize(n_k);
    double best_acc = -1.0;
    for (std::size_t t = 0; t < n_k; ++t) {
        double sum = 0.0;
        std::size_t present = 0;
        for (std::size_t c = 0; c < n_classes; ++c)
            if (totals[c] > 0) {
                sum += static_cast<double>(hits[t][c]) / static_cast<double>(totals[c]);
                ++present;
            }
        out.balanced_accuracy[t] = sum / static_cast<double>(present);
        if (out.balanced_accuracy[t] > best_acc) {
            best_acc = out.balanced_accuracy[t];
            out.best_k = k_range.lo + static_cast<int>(t);
        }
    }
    return out;
}

/// k in the range with the highest balanced accuracy; smallest k on ties.
inline int optimal_k_for_prediction(const NeighborTable &table, const EmbeddingDataset &ds,
                                    IntRange k_range)
{
    return sweep_k_for_prediction(table, ds, k_range).best_k;
}

/// Lower median of the per-model optimal k values.
inline int select_common_k(std::vector<int> ks)
{
    if (ks.empty())
        throw RangeError("select_common_k needs at least one value");
    std::sort(ks.begin(), ks.end());
    return ks[(ks.size() - 1) / 2];
}

// ---------------------------------------------------------------------------
// Cache file: raw little-endian uint32 indices plus a JSON sidecar.

inline void save_neighbor_table(const NeighborTable &table, const std::filesystem::path &path,
                                const std::string &dataset_checksum)
{
    io::write_blob<std::uint32_t>(path, table.indices);
    io::json meta = {{"n", table.n_queries},
                     {"k_max", table.k_max},
                     {"excluded_same_case", table.excluded_same_case},
                     {"dataset_checksum", dataset_checksum}};
    io::write_json(path.string() + ".json", meta);
}

/// Loads a cached table; distances are recomputed from the dataset, and the
/// cache is rejected if it was built for different data.
inline NeighborTable load_neighbor_table(const std::filesystem::path &path, const EmbeddingDataset &ds)
{
    const io::json meta = io::read_json(path.string() + ".json");
    if (meta.at("dataset_checksum").get<std::string>() != dataset_checksum(ds))
        throw ChecksumMismatchError("neighbor cache " + path.string() + " was built for other data");
    NeighborTable table;
    table.n_queries = meta.at("n").get<std::size_t>();
    table.k_max = meta.at("k_max").get<std::size_t>();
    table.excluded_same_case = meta.at("excluded_same_case").get<bool>();
    table.indices = io::read_blob<std::uint32_t>(path);
    if (table.indices.size() != table.n_queries * table.k_max || table.n_queries != ds.size())
        throw FormatError("neighbor cache size does not match its sidecar");
    table.distances.resize(table.indices.size());
    const std::size_t d = ds.dim();
    for (std::size_t i = 0; i < table.n_queries; ++i)
        for (std::size_t j = 0; j < table.k_max; ++j)
            table.distances[i * table.k_max + j] = detail::squared_distance(
                ds.embeddings().data() + i * d, ds.embeddings().data() + table.at(i, j) * d, d);
    return table;
}

} // namespace robustbench

#endif
