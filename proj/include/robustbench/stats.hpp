#ifndef ROBUSTBENCH_STATS_HPP
#define ROBUSTBENCH_STATS_HPP

#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "robustbench/common.hpp"

namespace robustbench
{

/// 1-based ranks with ties sharing their average rank.
inline std::vector<double> average_ranks(std::span<const double> x)
{
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && x[order[j]] == x[order[i]])
            ++j;
        const double r = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            ranks[order[k]] = r;
        i = j;
    }
    return ranks;
}

/// Pearson correlation; absent when either series is constant.
inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw DimensionMismatchError("correlated series differ in length");
    const auto n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0)
        return std::nullopt;
    return sab / std::sqrt(saa * sbb);
}

/// Pearson correlation of average ranks.
inline std::optional<double> spearman(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw DimensionMismatchError("correlated series differ in length");
    if (a.size() < 3)
        throw RangeError("Spearman correlation needs at least 3 pairs");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    return pearson(ra, rb);
}

struct CorrelationTest
{
    std::optional<double> rho;
    std::optional<double> p_value;
    std::size_t permutations = 0;
};

inline constexpr std::size_t kDefaultPermutations = 50000;

/// Two-sided permutation test of Spearman's rho: b is shuffled against a and
/// p = (#{|rho_perm| >= |rho_obs|} + 1) / (permutations + 1).
inline CorrelationTest spearman_permutation_test(std::span<const double> a, std::span<const double> b,
                                                 std::size_t permutations = kDefaultPermutations,
                                                 std::uint64_t seed = 0)
{
    CorrelationTest out;
    out.permutations = permutations;
    out.rho = spearman(a, b);
    if (!out.rho)
        return out;
    const auto ra = average_ranks(a);
    std::vector<double> rb = average_ranks(b);
    const double observed = std::abs(*out.rho);
    Rng rng = make_rng(seed, 0x5EA7);
    std::size_t extreme = 0;
    for (std::size_t p = 0; p < permutations; ++p) {
        shuffle_in_place(rb, rng);
        const auto r = pearson(ra, rb);
        if (r && std::abs(*r) >= observed - 1e-12)
            ++extreme;
    }
    out.p_value = static_cast<double>(extreme + 1) / static_cast<double>(permutations + 1);
    return out;
}

} // namespace robustbench

#endif
