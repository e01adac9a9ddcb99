#ifndef ROBUSTBENCH_ROBUSTIFY_REINHARD_HPP
#define ROBUSTBENCH_ROBUSTIFY_REINHARD_HPP

#include <array>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "robustbench/common.hpp"
#include "robustbench/image.hpp"
#include "robustbench/io.hpp"

namespace robustbench
{

/// Per-channel statistics in the decorrelated log-opponent (l, alpha, beta) space.
struct ReinhardTarget
{
    std::array<double, 3> means{};
    std::array<double, 3> stds{1.0, 1.0, 1.0};
};

inline constexpr double kReinhardStdFloor = 1e-6;
inline constexpr double kReinhardLmsFloor = 1e-3;

namespace detail
{

inline const Eigen::Matrix3d &rgb_to_lms()
{
    static const Eigen::Matrix3d m = (Eigen::Matrix3d() << 0.3811, 0.5783, 0.0402, //
                                      0.1967, 0.7244, 0.0782,                       //
                                      0.0241, 0.1288, 0.8444)
                                         .finished();
    return m;
}

inline const Eigen::Matrix3d &lms_to_rgb()
{
    static const Eigen::Matrix3d m = rgb_to_lms().inverse();
    return m;
}

inline const Eigen::Matrix3d &log_lms_to_lab()
{
    static const Eigen::Matrix3d m = [] {
        Eigen::Matrix3d scale = Eigen::Vector3d(1.0 / std::sqrt(3.0), 1.0 / std::sqrt(6.0), 1.0 / std::sqrt(2.0))
                                    .asDiagonal();
        Eigen::Matrix3d mix;
        mix << 1, 1, 1, 1, 1, -2, 1, -1, 0;
        return Eigen::Matrix3d(scale * mix);
    }();
    return m;
}

inline const Eigen::Matrix3d &lab_to_log_lms()
{
    static const Eigen::Matrix3d m = log_lms_to_lab().inverse();
    return m;
}

} // namespace detail

inline Eigen::Vector3d rgb_to_lab(const Eigen::Vector3d &rgb)
{
    Eigen::Vector3d lms = detail::rgb_to_lms() * rgb;
    for (int c = 0; c < 3; ++c)
        lms(c) = std::log10(std::max(lms(c), kReinhardLmsFloor));
    return detail::log_lms_to_lab() * lms;
}

inline Eigen::Vector3d lab_to_rgb(const Eigen::Vector3d &lab)
{
    Eigen::Vector3d lms = detail::lab_to_log_lms() * lab;
    for (int c = 0; c < 3; ++c)
        lms(c) = std::pow(10.0, lms(c));
    return detail::lms_to_rgb() * lms;
}

/// All pixels of a patch in l-alpha-beta, one row per pixel.
inline RowMatrix patch_to_lab(const RgbImage &img)
{
    RowMatrix out(static_cast<Eigen::Index>(img.pixel_count()), 3);
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        const Eigen::Vector3d rgb(img.pixels[p * 3], img.pixels[p * 3 + 1], img.pixels[p * 3 + 2]);
        out.row(static_cast<Eigen::Index>(p)) = rgb_to_lab(rgb).transpose();
    }
    return out;
}

namespace detail
{

/// Population moments of one patch.
inline ReinhardTarget patch_stats(const RowMatrix &lab)
{
    ReinhardTarget t;
    for (int c = 0; c < 3; ++c) {
        t.means[c] = lab.col(c).mean();
        t.stds[c] = std::sqrt((lab.col(c).array() - t.means[c]).square().mean());
    }
    return t;
}

} // namespace detail

/// Pooled per-channel mean and std over every pixel of up to n_sample patches
/// drawn without replacement.
inline ReinhardTarget reinhard_fit_target(const PatchSet &patches, std::size_t n_sample = 500, std::uint64_t seed = 0)
{
    if (patches.size() == 0)
        throw DegenerateInputError("cannot fit a Reinhard target on an empty patch set");
    std::vector<std::size_t> idx(patches.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (n_sample < idx.size()) {
        Rng rng = make_rng(seed, 0x4E1);
        shuffle_in_place(idx, rng);
        idx.resize(n_sample);
        std::sort(idx.begin(), idx.end());
    }
    double count = 0.0;
    std::array<double, 3> mean{}, m2{};
    for (auto i : idx) {
        const RowMatrix lab = patch_to_lab(patches.patches[i]);
        const auto n_b = static_cast<double>(lab.rows());
        for (int c = 0; c < 3; ++c) {
            const double mean_b = lab.col(c).mean();
            const double m2_b = (lab.col(c).array() - mean_b).square().sum();
            const double delta = mean_b - mean[c];
            const double n = count + n_b;
            mean[c] += delta * n_b / n;
            m2[c] += m2_b + delta * delta * count * n_b / n;
        }
        count += n_b;
    }
    ReinhardTarget t;
    for (int c = 0; c < 3; ++c) {
        t.means[c] = mean[c];
        t.stds[c] = std::max(std::sqrt(m2[c] / count), kReinhardStdFloor);
    }
    return t;
}

/// Channel-wise (x - mean_src) * std_tgt / std_src + mean_tgt in l-alpha-beta,
/// back to RGB with clipping and rounding. A source std below the floor
/// counts as 1, which reduces the map to a mean shift.
inline RgbImage reinhard_apply(const RgbImage &patch, const ReinhardTarget &target)
{
    const RowMatrix lab = patch_to_lab(patch);
    const ReinhardTarget src = detail::patch_stats(lab);
    RgbImage out(patch.height, patch.width);
    for (Eigen::Index p = 0; p < lab.rows(); ++p) {
        Eigen::Vector3d v;
        for (int c = 0; c < 3; ++c) {
            const double s = src.stds[c] < kReinhardStdFloor ? 1.0 : src.stds[c];
            v(c) = (lab(p, c) - src.means[c]) * (std::max(target.stds[c], kReinhardStdFloor) / s) + target.means[c];
        }
        const Eigen::Vector3d rgb = lab_to_rgb(v);
        for (int c = 0; c < 3; ++c)
            out.pixels[static_cast<std::size_t>(p) * 3 + c] =
                static_cast<std::uint8_t>(std::lround(std::clamp(rgb(c), 0.0, 255.0)));
    }
    return out;
}

inline PatchSet reinhard_apply(const PatchSet &set, const ReinhardTarget &target)
{
    PatchSet out = set;
    parallel_for(set.size(), [&](std::size_t i) { out.patches[i] = reinhard_apply(set.patches[i], target); });
    return out;
}

inline io::json reinhard_target_to_json(const ReinhardTarget &t) { return {{"means", t.means}, {"stds", t.stds}}; }

inline ReinhardTarget reinhard_target_from_json(const io::json &j)
{
    ReinhardTarget t;
    try {
        t.means = j.at("means").get<std::array<double, 3>>();
        t.stds = j.at("stds").get<std::array<double, 3>>();
    } catch (const io::json::exception &e) {
        throw FormatError(std::string("malformed Reinhard target: ") + e.what());
    }
    for (double s : t.stds)
        if (!(s > 0))
            throw InvariantError("Reinhard target stds must be positive");
    return t;
}

} // namespace robustbench

#endif
