#ifndef ROBUSTBENCH_ROBUSTNESS_HPP
#define ROBUSTBENCH_ROBUSTNESS_HPP

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "robustbench/common.hpp"
#include "robustbench/dataset.hpp"
#include "robustbench/io.hpp"
#include "robustbench/neighbors.hpp"

namespace robustbench
{

/// Neighbor category relative to the query: Same/Other biological class,
/// then Same/Other confounding class.
enum class Category : std::uint8_t { SS = 0, SO = 1, OS = 2, OO = 3 };

inline Category categorize(int bio_q, int conf_q, int bio_n, int conf_n)
{
    const bool same_bio = bio_q == bio_n;
    const bool same_conf = conf_q == conf_n;
    if (same_bio)
        return same_conf ? Category::SS : Category::SO;
    return same_conf ? Category::OS : Category::OO;
}

/// One category per (sample, neighbor rank). Storing a single code per entry
/// makes the four boolean views mutually exclusive by construction.
class CategoryMatrices
{
  public:
    CategoryMatrices() = default;
    CategoryMatrices(std::size_t n, std::size_t k_max)
        : n_(n), k_max_(k_max), codes_(n * k_max, Category::SS)
    {
    }

    [[nodiscard]] std::size_t rows() const { return n_; }
    [[nodiscard]] std::size_t k_max() const { return k_max_; }
    [[nodiscard]] Category at(std::size_t i, std::size_t j) const { return codes_[i * k_max_ + j]; }
    void set(std::size_t i, std::size_t j, Category c) { codes_[i * k_max_ + j] = c; }

    [[nodiscard]] bool ss(std::size_t i, std::size_t j) const { return at(i, j) == Category::SS; }
    [[nodiscard]] bool so(std::size_t i, std::size_t j) const { return at(i, j) == Category::SO; }
    [[nodiscard]] bool os(std::size_t i, std::size_t j) const { return at(i, j) == Category::OS; }
    [[nodiscard]] bool oo(std::size_t i, std::size_t j) const { return at(i, j) == Category::OO; }

    /// Per-rank counts of each category, indexed by Category.
    [[nodiscard]] std::vector<std::array<std::uint64_t, 4>> column_sums() const
    {
        std::vector<std::array<std::uint64_t, 4>> sums(k_max_, {0, 0, 0, 0});
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < k_max_; ++j)
                ++sums[j][static_cast<std::size_t>(at(i, j))];
        return sums;
    }

  private:
    std::size_t n_ = 0;
    std::size_t k_max_ = 0;
    std::vector<Category> codes_;
};

inline CategoryMatrices categorize_neighbors(const NeighborTable &table, const EmbeddingDataset &ds)
{
    if (table.n_queries != ds.size())
        throw DimensionMismatchError("neighbor table has " + std::to_string(table.n_queries) +
                                     " rows but dataset has " + std::to_string(ds.size()));
    CategoryMatrices cats(ds.size(), table.k_max);
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t j = 0; j < table.k_max; ++j) {
            const std::size_t nb = table.at(i, j);
            if (nb >= ds.size())
                throw RangeError("neighbor index " + std::to_string(nb) + " out of range");
            cats.set(i, j,
                     categorize(ds.bio().code(i), ds.conf().code(i), ds.bio().code(nb),
                                ds.conf().code(nb)));
        }
    return cats;
}

/// Cumulative category counts over the first k neighbors.
struct CategoryCounts
{
    std::uint64_t ss = 0, so = 0, os = 0, oo = 0;
};

/// R_k = SO_k / (SO_k + OS_k) for k = 1..k_max. Points with a zero
/// denominator are absent rather than 0.
struct RobustnessCurve
{
    std::vector<std::optional<double>> r_of_k;
    std::vector<std::uint64_t> so_cum;
    std::vector<std::uint64_t> os_cum;

    [[nodiscard]] std::size_t k_max() const { return r_of_k.size(); }

    static RobustnessCurve from_cumulative(std::vector<std::uint64_t> so, std::vector<std::uint64_t> os)
    {
        RobustnessCurve c;
        c.r_of_k.resize(so.size());
        for (std::size_t j = 0; j < so.size(); ++j) {
            const std::uint64_t denom = so[j] + os[j];
            if (denom > 0)
                c.r_of_k[j] = static_cast<double>(so[j]) / static_cast<double>(denom);
        }
        c.so_cum = std::move(so);
        c.os_cum = std::move(os);
        return c;
    }

    /// Curve from per-rank (non-cumulative) SO and OS counts.
    static RobustnessCurve from_column_sums(std::span<const std::uint64_t> so_cols,
                                            std::span<const std::uint64_t> os_cols)
    {
        std::vector<std::uint64_t> so(so_cols.size()), os(os_cols.size());
        std::uint64_t a = 0, b = 0;
        for (std::size_t j = 0; j < so_cols.size(); ++j) {
            so[j] = a += so_cols[j];
            os[j] = b += os_cols[j];
        }
        return from_cumulative(std::move(so), std::move(os));
    }
};

/// Cumulative sum of the SO / OS column sums.
inline RobustnessCurve robustness_curve(const CategoryMatrices &cats)
{
    const auto sums = cats.column_sums();
    std::vector<std::uint64_t> so(sums.size()), os(sums.size());
    for (std::size_t j = 0; j < sums.size(); ++j) {
        so[j] = sums[j][1];
        os[j] = sums[j][2];
    }
    return RobustnessCurve::from_column_sums(so, os);
}

inline double robustness_index_at(const RobustnessCurve &curve, std::size_t k)
{
    if (k == 0 || k > curve.k_max())
        throw RangeError("k = " + std::to_string(k) + " outside [1, " + std::to_string(curve.k_max()) + "]");
    const auto &r = curve.r_of_k[k - 1];
    if (!r)
        throw UndefinedValueError("robustness index undefined at k = " + std::to_string(k) +
                                  " (no SO or OS neighbors)");
    return *r;
}

inline CategoryCounts cumulative_counts(const CategoryMatrices &cats, std::size_t k)
{
    if (k == 0 || k > cats.k_max())
        throw RangeError("k = " + std::to_string(k) + " outside [1, " + std::to_string(cats.k_max()) + "]");
    CategoryCounts c;
    for (std::size_t i = 0; i < cats.rows(); ++i)
        for (std::size_t j = 0; j < k; ++j)
            switch (cats.at(i, j)) {
            case Category::SS: ++c.ss; break;
            case Category::SO: ++c.so; break;
            case Category::OS: ++c.os; break;
            case Category::OO: ++c.oo; break;
            }
    return c;
}

struct BootstrapResult
{
    double mean = 0.0;
    double std = 0.0;
    std::size_t replicates = 0;        // replicates with a defined index
    std::size_t undefined_replicates = 0;
};

/// Resamples query rows with replacement (keeping each row's neighbor list)
/// and recomputes R_k per replicate. Replicate r draws from stream (seed, r).
inline BootstrapResult bootstrap_robustness(const CategoryMatrices &cats, std::size_t k,
                                            std::size_t n_boot, std::uint64_t seed)
{
    if (k == 0 || k > cats.k_max())
        throw RangeError("k = " + std::to_string(k) + " outside [1, " + std::to_string(cats.k_max()) + "]");
    const std::size_t n = cats.rows();
    std::vector<std::uint32_t> so_row(n, 0), os_row(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            so_row[i] += cats.so(i, j);
            os_row[i] += cats.os(i, j);
        }
    std::vector<std::optional<double>> values(n_boot);
    parallel_for(n_boot, [&](std::size_t r) {
        Rng rng = make_rng(seed, r);
        std::uint64_t so = 0, os = 0;
        for (std::size_t t = 0; t < n; ++t) {
            const std::size_t i = uniform_index(rng, n);
            so += so_row[i];
            os += os_row[i];
        }
        if (so + os > 0)
            values[r] = static_cast<double>(so) / static_cast<double>(so + os);
    });
    BootstrapResult out;
    double sum = 0.0;
    for (const auto &v : values)
        if (v) {
            sum += *v;
            ++out.replicates;
        }
    out.undefined_replicates = n_boot - out.replicates;
    if (out.replicates == 0)
        throw UndefinedValueError("robustness index undefined in every bootstrap replicate");
    out.mean = sum / static_cast<double>(out.replicates);
    double ss = 0.0;
    for (const auto &v : values)
        if (v)
            ss += (*v - out.mean) * (*v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(out.replicates));
    return out;
}

/// R_k restricted to query samples of each class along `axis`. Classes whose
/// denominator is zero map to an absent value.
inline std::map<std::string, std::optional<double>>
robustness_per_class(const CategoryMatrices &cats, const EmbeddingDataset &ds, std::size_t k,
                     LabelAxis axis)
{
    if (k == 0 || k > cats.k_max())
        throw RangeError("k = " + std::to_string(k) + " outside [1, " + std::to_string(cats.k_max()) + "]");
    if (cats.rows() != ds.size())
        throw DimensionMismatchError("category matrices do not belong to this dataset");
    const LabelColumn &col = ds.labels(axis);
    std::vector<std::uint64_t> so(col.num_classes(), 0), os(col.num_classes(), 0);
    for (std::size_t i = 0; i < cats.rows(); ++i)
        for (std::size_t j = 0; j < k; ++j) {
            so[col.code(i)] += cats.so(i, j);
            os[col.code(i)] += cats.os(i, j);
        }
    std::map<std::string, std::optional<double>> out;
    for (std::size_t c = 0; c < col.num_classes(); ++c) {
        std::optional<double> r;
        if (so[c] + os[c] > 0)
            r = static_cast<double>(so[c]) / static_cast<double>(so[c] + os[c]);
        out.emplace(col.vocab()[c], r);
    }
    return out;
}

/// Sums SO/OS cumulative counts of several curves before normalizing.
inline RobustnessCurve aggregate_curves(std::span<const RobustnessCurve> curves)
{
    if (curves.empty())
        throw RangeError("no curves to aggregate");
    std::size_t k_max = curves.front().k_max();
    for (const auto &c : curves)
        k_max = std::min(k_max, c.k_max());
    std::vector<std::uint64_t> so(k_max, 0), os(k_max, 0);
    for (const auto &c : curves)
        for (std::size_t j = 0; j < k_max; ++j) {
            so[j] += c.so_cum[j];
            os[j] += c.os_cum[j];
        }
    return RobustnessCurve::from_cumulative(std::move(so), std::move(os));
}

/// Throws unless the dataset is a balanced 2 bio x 2 conf block.
inline void require_balanced_2x2(const EmbeddingDataset &ds)
{
    if (ds.bio().num_classes() != 2 || ds.conf().num_classes() != 2)
        throw InvariantError("paired robustness needs 2 biological x 2 confounding classes, got " +
                             std::to_string(ds.bio().num_classes()) + " x " +
                             std::to_string(ds.conf().num_classes()));
    const auto cells = cell_index(ds);
    std::size_t size = cells.begin()->second.size();
    if (cells.size() != 4)
        throw InvariantError("paired robustness block has an empty cell");
    for (const auto &[key, members] : cells)
        if (members.size() != size)
            throw InvariantError("paired robustness block is not balanced");
}

/// Paired variant: SO/OS frequencies per 2x2 block, summed over blocks.
inline RobustnessCurve paired_robustness(std::span<const EmbeddingDataset> blocks, std::size_t k_max,
                                         bool exclude_same_case = true)
{
    if (blocks.empty())
        throw RangeError("paired robustness needs at least one block");
    std::vector<RobustnessCurve> curves;
    curves.reserve(blocks.size());
    for (const auto &block : blocks) {
        require_balanced_2x2(block);
        const auto table = build_neighbor_table(l2_normalize(block), k_max, exclude_same_case);
        curves.push_back(robustness_curve(categorize_neighbors(table, block)));
    }
    return aggregate_curves(curves);
}

/// OOD-to-ID ratio of same-biology neighbor rates:
/// (SO / (SO + OO)) / (SS / (SS + OS)).
inline double generalization_index(const CategoryCounts &c)
{
    if (c.so + c.oo == 0 || c.ss + c.os == 0 || c.ss == 0)
        throw UndefinedValueError("generalization index undefined: zero denominator");
    const double ss = static_cast<double>(c.ss), so = static_cast<double>(c.so),
                 os = static_cast<double>(c.os), oo = static_cast<double>(c.oo);
    return (ss * so + so * os) / (ss * so + ss * oo);
}

inline double generalization_index(const CategoryMatrices &cats, std::size_t k)
{
    return generalization_index(cumulative_counts(cats, k));
}

struct MaxOverK
{
    int k_star = 0;
    double r_star = 0.0;
};

/// Argmax of the curve over a k range, smallest k on ties.
inline MaxOverK max_robustness_over_k(const RobustnessCurve &curve, IntRange k_range)
{
    if (k_range.empty() || k_range.lo < 1 || static_cast<std::size_t>(k_range.hi) > curve.k_max())
        throw RangeError("k range outside [1, " + std::to_string(curve.k_max()) + "]");
    MaxOverK best;
    bool found = false;
    for (int k = k_range.lo; k <= k_range.hi; ++k) {
        const auto &r = curve.r_of_k[static_cast<std::size_t>(k - 1)];
        if (r && (!found || *r > best.r_star)) {
            best = {k, *r};
            found = true;
        }
    }
    if (!found)
        throw UndefinedValueError("robustness index undefined at every k in range");
    return best;
}

inline io::CsvWriter curve_csv(const RobustnessCurve &curve)
{
    io::CsvWriter w({"k", "so_cum", "os_cum", "robustness_index"});
    for (std::size_t j = 0; j < curve.k_max(); ++j)
        w.add({std::to_string(j + 1), std::to_string(curve.so_cum[j]), std::to_string(curve.os_cum[j]),
               format_optional(curve.r_of_k[j])});
    return w;
}

} // namespace robustbench

#endif
