#ifndef ROBUSTBENCH_TESTS_HELPERS_HPP
#define ROBUSTBENCH_TESTS_HELPERS_HPP

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <gtest/gtest.h>

#include "robustbench/robustbench.hpp"

namespace rbtest
{

using namespace robustbench;

/// Dataset from explicit rows; every sample gets its own case and slide
/// unless case ids are given.
inline EmbeddingDataset make_dataset(const std::vector<std::vector<float>> &rows, const std::vector<std::string> &bio,
                                     const std::vector<std::string> &conf, std::vector<std::string> cases = {})
{
    FloatMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    std::vector<std::string> ids, slides;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        ids.push_back("s" + std::to_string(i));
        if (cases.size() < rows.size())
            cases.push_back("c" + std::to_string(i));
        slides.push_back(cases[i] + "/slide");
    }
    return EmbeddingDataset(std::move(m), ids, cases, slides, bio, conf);
}

inline EmbeddingDataset gaussian(std::size_t n_bio, std::size_t n_conf, std::size_t per_cell, double s_bio,
                                 double s_conf, double sigma, std::uint64_t seed, std::size_t dim = 16)
{
    synth::ConfoundedGaussianSpec s;
    s.n_bio_classes = n_bio;
    s.n_conf_classes = n_conf;
    s.per_cell = per_cell;
    s.dim = dim;
    s.bio_strength = s_bio;
    s.conf_strength = s_conf;
    s.noise_sigma = sigma;
    s.seed = seed;
    return synth::generate_confounded_gaussian(s);
}

/// Splits one draw by row index: every `every`-th row goes to the second part.
/// Separate draws would not share class directions.
inline std::pair<EmbeddingDataset, EmbeddingDataset> split_draw(const EmbeddingDataset &ds, std::size_t every)
{
    std::vector<std::size_t> a, b;
    for (std::size_t i = 0; i < ds.size(); ++i)
        (i % every == every - 1 ? b : a).push_back(i);
    return {ds.subset(a), ds.subset(b)};
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
  public:
    TempDir()
    {
        const auto *info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = std::filesystem::temp_directory_path() /
                ("robustbench_" + std::string(info->test_suite_name()) + "_" + info->name());
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir &) = delete;
    TempDir &operator=(const TempDir &) = delete;
    [[nodiscard]] const std::filesystem::path &path() const { return path_; }

  private:
    std::filesystem::path path_;
};

/// Collects warnings for the lifetime of the object.
class WarningCapture
{
  public:
    WarningCapture() : previous_(log_sink())
    {
        log_sink() = [this](std::string_view m) { messages.emplace_back(m); };
    }
    ~WarningCapture() { log_sink() = previous_; }
    std::vector<std::string> messages;

  private:
    LogSink previous_;
};

} // namespace rbtest

#endif
