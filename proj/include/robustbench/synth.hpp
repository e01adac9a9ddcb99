#ifndef ROBUSTBENCH_SYNTH_HPP
#define ROBUSTBENCH_SYNTH_HPP

#include <array>
#include <cstdio>
#include <string>
#include <vector>

#include "robustbench/common.hpp"
#include "robustbench/dataset.hpp"
#include "robustbench/image.hpp"
#include "robustbench/io.hpp"

namespace robustbench::synth
{

/// x = bio_strength * u(b) + conf_strength * v(c) + noise_sigma * eps
struct ConfoundedGaussianSpec
{
    std::size_t n_bio_classes = 2;
    std::size_t n_conf_classes = 2;
    std::size_t per_cell = 100;
    std::size_t dim = 16;
    double bio_strength = 1.0;
    double conf_strength = 1.0;
    double noise_sigma = 1.0;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (n_bio_classes == 0 || n_conf_classes == 0 || per_cell == 0)
            throw SpecError("class counts and per_cell must be positive");
        if (dim < n_bio_classes + n_conf_classes)
            throw SpecError("dim must be at least n_bio_classes + n_conf_classes");
        if (!std::isfinite(bio_strength) || !std::isfinite(conf_strength) || bio_strength < 0 ||
            conf_strength < 0)
            throw SpecError("strengths must be finite and non-negative");
        if (!std::isfinite(noise_sigma) || noise_sigma <= 0)
            throw SpecError("noise_sigma must be finite and positive");
    }
};

inline void to_json(io::json &j, const ConfoundedGaussianSpec &s)
{
    j = {{"n_bio_classes", s.n_bio_classes}, {"n_conf_classes", s.n_conf_classes},
         {"per_cell", s.per_cell},           {"dim", s.dim},
         {"bio_strength", s.bio_strength},   {"conf_strength", s.conf_strength},
         {"noise_sigma", s.noise_sigma},     {"seed", s.seed}};
}

inline void from_json(const io::json &j, ConfoundedGaussianSpec &s)
{
    ConfoundedGaussianSpec d;
    s.n_bio_classes = j.value("n_bio_classes", d.n_bio_classes);
    s.n_conf_classes = j.value("n_conf_classes", d.n_conf_classes);
    s.per_cell = j.value("per_cell", d.per_cell);
    s.dim = j.value("dim", d.dim);
    s.bio_strength = j.value("bio_strength", d.bio_strength);
    s.conf_strength = j.value("conf_strength", d.conf_strength);
    s.noise_sigma = j.value("noise_sigma", d.noise_sigma);
    s.seed = j.value("seed", d.seed);
}

/// Zero-padded names so lexicographic interning matches numeric order.
inline std::string class_name(const char *prefix, std::size_t i, std::size_t count)
{
    const int width = count > 100 ? 3 : 2;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%0*zu", prefix, width, i);
    return buf;
}

inline std::string bio_name(std::size_t i, std::size_t count = 2) { return class_name("bio", i, count); }
inline std::string conf_name(std::size_t i, std::size_t count = 2) { return class_name("center", i, count); }

/// `count` orthonormal columns in R^dim from QR of a seeded Gaussian matrix.
inline Eigen::MatrixXd orthonormal_directions(std::size_t dim, std::size_t count, std::uint64_t seed)
{
    Rng rng = make_rng(seed, 0xD1);
    NormalSampler normal;
    Eigen::MatrixXd g(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(count));
    for (Eigen::Index j = 0; j < g.cols(); ++j)
        for (Eigen::Index i = 0; i < g.rows(); ++i)
            g(i, j) = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(g.rows(), g.cols());
    return q;
}

/// Samples are laid out cell by cell (bio major, conf minor). Every 10
/// consecutive samples of a cell form one case with one slide.
inline EmbeddingDataset generate_confounded_gaussian(const ConfoundedGaussianSpec &spec)
{
    spec.validate();
    const std::size_t n_dirs = spec.n_bio_classes + spec.n_conf_classes;
    const Eigen::MatrixXd dirs = orthonormal_directions(spec.dim, n_dirs, spec.seed);
    const std::size_t n = spec.n_bio_classes * spec.n_conf_classes * spec.per_cell;

    Rng rng = make_rng(spec.seed, 0xE5);
    NormalSampler normal;
    FloatMatrix emb(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.dim));
    std::vector<std::string> ids, cases, slides, bio, conf;
    ids.reserve(n);
    std::size_t row = 0;
    for (std::size_t b = 0; b < spec.n_bio_classes; ++b) {
        for (std::size_t c = 0; c < spec.n_conf_classes; ++c) {
            const Eigen::VectorXd mean =
                spec.bio_strength * dirs.col(static_cast<Eigen::Index>(b)) +
                spec.conf_strength * dirs.col(static_cast<Eigen::Index>(spec.n_bio_classes + c));
            const std::string b_name = bio_name(b, spec.n_bio_classes);
            const std::string c_name = conf_name(c, spec.n_conf_classes);
            for (std::size_t i = 0; i < spec.per_cell; ++i, ++row) {
                for (std::size_t k = 0; k < spec.dim; ++k)
                    emb(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(k)) =
                        static_cast<float>(mean(static_cast<Eigen::Index>(k)) +
                                           spec.noise_sigma * normal(rng));
                const std::string case_id = b_name + "/" + c_name + "/case" + std::to_string(i / 10);
                ids.push_back("s" + std::to_string(row));
                cases.push_back(case_id);
                slides.push_back(case_id + "/slide0");
                bio.push_back(b_name);
                conf.push_back(c_name);
            }
        }
    }
    return EmbeddingDataset(std::move(emb), std::move(ids), std::move(cases), std::move(slides),
                            bio, conf);
}

struct StainCenter
{
    std::array<double, 3> mean_rgb{};
    std::array<double, 3> std_rgb{};
};

/// Gaussian pixel noise per center with the given channel statistics,
/// clipped to [0, 255] and rounded.
inline PatchSet generate_stain_patches(std::size_t n_per_center, const std::vector<StainCenter> &centers,
                                       int height, int width, std::uint64_t seed)
{
    if (centers.empty() || n_per_center == 0 || height <= 0 || width <= 0)
        throw SpecError("stain patch generator needs centers, patches and a positive size");
    for (const auto &c : centers)
        for (int ch = 0; ch < 3; ++ch) {
            if (!(c.mean_rgb[ch] >= 0 && c.mean_rgb[ch] <= 255))
                throw SpecError("center mean must lie in [0, 255]");
            if (!(c.std_rgb[ch] > 0) || !std::isfinite(c.std_rgb[ch]))
                throw SpecError("center std must be positive");
        }
    PatchSet set;
    for (std::size_t c = 0; c < centers.size(); ++c) {
        Rng rng = make_rng(seed, c);
        NormalSampler normal;
        for (std::size_t p = 0; p < n_per_center; ++p) {
            RgbImage img(height, width);
            for (std::size_t px = 0; px < img.pixel_count(); ++px)
                for (int ch = 0; ch < 3; ++ch) {
                    const double v = centers[c].mean_rgb[ch] + centers[c].std_rgb[ch] * normal(rng);
                    img.pixels[px * 3 + ch] =
                        static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
                }
            set.patches.push_back(std::move(img));
            set.center_labels.push_back(conf_name(c, centers.size()));
            set.patch_ids.push_back(conf_name(c, centers.size()) + "_p" + std::to_string(p));
        }
    }
    return set;
}

} // namespace robustbench::synth

#endif
