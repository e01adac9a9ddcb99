#ifndef ROBUSTBENCH_IMAGE_HPP
#define ROBUSTBENCH_IMAGE_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_set>
#include <vector>

#include <png.h>

#include "robustbench/common.hpp"
#include "robustbench/io.hpp"

namespace robustbench
{

/// Interleaved 8-bit RGB image, row-major.
struct RgbImage
{
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels; // height * width * 3

    RgbImage() = default;
    RgbImage(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0) {}

    [[nodiscard]] std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
    std::uint8_t &at(int y, int x, int ch) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + ch]; }
    [[nodiscard]] std::uint8_t at(int y, int x, int ch) const
    {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
    }

    friend bool operator==(const RgbImage &, const RgbImage &) = default;
};

struct PatchSet
{
    std::vector<RgbImage> patches;
    std::vector<std::string> center_labels;
    std::vector<std::string> patch_ids;

    [[nodiscard]] std::size_t size() const { return patches.size(); }

    void validate() const
    {
        if (center_labels.size() != patches.size() || patch_ids.size() != patches.size())
            throw RowCountMismatchError("patch set lists have inconsistent lengths");
        std::unordered_set<std::string> seen;
        for (const auto &id : patch_ids)
            if (!seen.insert(id).second)
                throw DuplicateSampleIdError("duplicate patch_id '" + id + "'");
        for (const auto &p : patches) {
            if (p.height != patches.front().height || p.width != patches.front().width)
                throw InvariantError("patches in one set must share height and width");
            if (p.pixels.size() != p.pixel_count() * 3)
                throw InvariantError("patch pixel buffer has wrong size");
        }
    }
};

inline RgbImage read_png(const std::filesystem::path &path)
{
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str()))
        throw FormatError("cannot read PNG " + path.string() + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    RgbImage out(static_cast<int>(image.height), static_cast<int>(image.width));
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        png_image_free(&image);
        throw FormatError("cannot decode PNG " + path.string() + ": " + image.message);
    }
    return out;
}

inline void write_png(const std::filesystem::path &path, const RgbImage &img)
{
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.pixels.data(), 0, nullptr))
        throw IoError("cannot write PNG " + path.string() + ": " + image.message);
}

/// Directory layout: `patches.csv` (patch_id,center_label,filename) plus one PNG per patch.
inline void save_patch_set(const PatchSet &set, const std::filesystem::path &dir)
{
    set.validate();
    io::ensure_directory(dir);
    io::CsvWriter index({"patch_id", "center_label", "filename"});
    for (std::size_t i = 0; i < set.size(); ++i) {
        const std::string file = "patch_" + std::to_string(i) + ".png";
        write_png(dir / file, set.patches[i]);
        index.add({set.patch_ids[i], set.center_labels[i], file});
    }
    index.save(dir / "patches.csv");
}

inline PatchSet load_patch_set(const std::filesystem::path &dir)
{
    const auto index_path = dir / "patches.csv";
    if (!std::filesystem::exists(index_path))
        throw MissingFileError("patch index not found: " + index_path.string());
    auto rows = io::parse_csv(io::read_text(index_path));
    if (rows.empty() || rows.front() != io::CsvRow{"patch_id", "center_label", "filename"})
        throw FormatError("patch index must start with header patch_id,center_label,filename");
    PatchSet set;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != 3)
            throw FormatError("patch index row " + std::to_string(r) + " malformed");
        set.patch_ids.push_back(rows[r][0]);
        set.center_labels.push_back(rows[r][1]);
        const auto file = dir / rows[r][2];
        if (!std::filesystem::exists(file))
            throw MissingFileError("patch image not found: " + file.string());
        set.patches.push_back(read_png(file));
    }
    set.validate();
    return set;
}

} // namespace robustbench

#endif
