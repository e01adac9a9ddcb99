#ifndef ROBUSTBENCH_ANALYSIS_HPP
#define ROBUSTBENCH_ANALYSIS_HPP

#include <cmath>
#include <string>
#include <vector>

#include "robustbench/common.hpp"
#include "robustbench/dataset.hpp"
#include "robustbench/io.hpp"
#include "robustbench/neighbors.hpp"
#include "robustbench/probing.hpp"

namespace robustbench
{

struct PcaBasis
{
    Eigen::VectorXd mean;             // d
    RowMatrix components;             // d x p, orthonormal columns
    Eigen::VectorXd explained_variance; // p, non-increasing

    [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(components.cols()); }

    [[nodiscard]] RowMatrix project(const RowMatrix &x, std::size_t count) const
    {
        if (static_cast<std::size_t>(x.cols()) != dim())
            throw DimensionMismatchError("PCA basis has dimension " + std::to_string(dim()) + ", data " +
                                         std::to_string(x.cols()));
        if (count > size())
            throw RangeError("requested " + std::to_string(count) + " components, basis has " +
                             std::to_string(size()));
        return (x.rowwise() - mean.transpose()) * components.leftCols(static_cast<Eigen::Index>(count));
    }

    [[nodiscard]] RowMatrix reconstruct(const RowMatrix &scores) const
    {
        RowMatrix out = scores * components.leftCols(scores.cols()).transpose();
        out.rowwise() += mean.transpose();
        return out;
    }
};

/// Thin SVD of the centered data; variances use n - 1. Each component's
/// largest-magnitude entry is made positive.
inline PcaBasis pca_fit(const EmbeddingDataset &ds, std::size_t p)
{
    const RowMatrix x = to_double(ds.embeddings());
    const auto limit = std::min<std::size_t>(ds.size(), ds.dim());
    if (p == 0 || p > limit)
        throw RangeError("number of components " + std::to_string(p) + " outside [1, " + std::to_string(limit) + "]");
    PcaBasis basis;
    basis.mean = x.colwise().mean().transpose();
    const Eigen::MatrixXd centered = x.rowwise() - basis.mean.transpose();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    const auto pp = static_cast<Eigen::Index>(p);
    basis.components = svd.matrixV().leftCols(pp);
    const double denom = ds.size() > 1 ? static_cast<double>(ds.size() - 1) : 1.0;
    basis.explained_variance = svd.singularValues().head(pp).array().square() / denom;
    for (Eigen::Index k = 0; k < pp; ++k) {
        Eigen::Index arg = 0;
        basis.components.col(k).cwiseAbs().maxCoeff(&arg);
        if (basis.components(arg, k) < 0)
            basis.components.col(k) *= -1.0;
    }
    return basis;
}

/// ceil(fraction * d) components.
inline std::size_t top_fraction_count(std::size_t d, double fraction)
{
    if (!(fraction > 0) || fraction > 1)
        throw RangeError("fraction must lie in (0, 1]");
    return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(d) - 1e-9));
}

/// Coordinates on the first ceil(fraction * d) components; labels carried over.
inline EmbeddingDataset project_top_fraction(const EmbeddingDataset &ds, const PcaBasis &basis,
                                             double fraction = 0.10)
{
    if (ds.dim() != basis.dim())
        throw DimensionMismatchError("PCA basis has dimension " + std::to_string(basis.dim()) + ", dataset " +
                                     std::to_string(ds.dim()));
    const std::size_t count = top_fraction_count(ds.dim(), fraction);
    if (count == 0)
        throw RangeError("fraction yields zero components");
    const RowMatrix proj = basis.project(to_double(ds.embeddings()), count);
    return EmbeddingDataset(proj.cast<float>(), ds.sample_ids(), ds.case_ids(), ds.slide_ids(), ds.bio().labels(),
                            ds.conf().labels());
}

struct PcSeparability
{
    std::size_t pc = 0; // 1-based
    double auroc_bio = 0.5;
    double auroc_conf = 0.5;
    bool polysemantic = false;
};

inline constexpr double kPolysemyThreshold = 0.6;

/// One-vs-one AUROC of each single component against both label axes.
inline std::vector<PcSeparability> per_pc_separability(const EmbeddingDataset &ds, const PcaBasis &basis,
                                                       std::size_t max_pcs)
{
    if (max_pcs > basis.size())
        throw RangeError("max_pcs exceeds the fitted components");
    const RowMatrix proj = basis.project(to_double(ds.embeddings()), max_pcs);
    std::vector<PcSeparability> out(max_pcs);
    parallel_for(max_pcs, [&](std::size_t k) {
        std::vector<double> scores(ds.size());
        for (std::size_t i = 0; i < ds.size(); ++i)
            scores[i] = proj(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        PcSeparability &r = out[k];
        r.pc = k + 1;
        r.auroc_bio = ovo_auroc(scores, ds.bio().codes());
        r.auroc_conf = ovo_auroc(scores, ds.conf().codes());
        r.polysemantic = r.auroc_bio > kPolysemyThreshold && r.auroc_conf > kPolysemyThreshold;
    });
    return out;
}

inline std::string separability_csv(const std::vector<PcSeparability> &rows)
{
    io::CsvWriter w({"pc", "auroc_bio", "auroc_conf", "polysemantic"});
    for (const auto &r : rows)
        w.add({std::to_string(r.pc), format_double(r.auroc_bio), format_double(r.auroc_conf),
               r.polysemantic ? "true" : "false"});
    return w.str();
}

struct RetrievalResult
{
    double accuracy = 0.0;
    std::vector<std::uint32_t> retrieved; // database row per query
};

/// 1-NN retrieval on l2-normalized vectors; a hit when the retrieved
/// biological label equals the query's.
inline RetrievalResult retrieval_eval(const EmbeddingDataset &database, const EmbeddingDataset &queries)
{
    if (database.size() == 0)
        throw DegenerateInputError("retrieval database is empty");
    if (queries.size() == 0)
        throw DegenerateInputError("retrieval query set is empty");
    const auto table = build_cross_neighbor_table(l2_normalize(queries), l2_normalize(database), 1);
    RetrievalResult out;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const auto j = table.at(i, 0);
        out.retrieved.push_back(j);
        hits += database.bio().label(j) == queries.bio().label(i);
    }
    out.accuracy = static_cast<double>(hits) / static_cast<double>(queries.size());
    return out;
}

} // namespace robustbench

#endif
