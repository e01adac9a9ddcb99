// Reinhard normalization of two synthetic staining centers to a shared target.

#include <filesystem>
#include <iomanip>
#include <iostream>

#include "robustbench/robustbench.hpp"

using namespace robustbench;

namespace
{

std::array<double, 3> mean_rgb(const PatchSet &set, const std::string &center)
{
    std::array<double, 3> sum{};
    double count = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (set.center_labels[i] != center)
            continue;
        const auto &p = set.patches[i];
        for (std::size_t px = 0; px < p.pixel_count(); ++px)
            for (int c = 0; c < 3; ++c)
                sum[c] += p.pixels[px * 3 + c];
        count += static_cast<double>(p.pixel_count());
    }
    for (auto &s : sum)
        s /= count;
    return sum;
}

void report(const char *title, const PatchSet &set)
{
    std::cout << title << '\n';
    for (const char *center : {"center_00", "center_01"}) {
        const auto m = mean_rgb(set, center);
        std::cout << "  " << center << "  R " << m[0] << "  G " << m[1] << "  B " << m[2] << '\n';
    }
}

} // namespace

int main(int argc, char **argv)
{
    const std::vector<synth::StainCenter> centers{{{205, 130, 175}, {18, 22, 16}}, {{165, 95, 200}, {14, 18, 20}}};
    const auto patches = synth::generate_stain_patches(12, centers, 24, 24, 5);
    const auto target = reinhard_fit_target(patches, 500, 5);
    const auto normalized = reinhard_apply(patches, target);

    std::cout << std::fixed << std::setprecision(2);
    report("before", patches);
    report("after", normalized);
    if (argc > 1) {
        save_patch_set(normalized, argv[1]);
        std::cout << "normalized patches written to " << argv[1] << '\n';
    }
}
