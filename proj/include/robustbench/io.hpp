#ifndef ROBUSTBENCH_IO_HPP
#define ROBUSTBENCH_IO_HPP

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "robustbench/common.hpp"

namespace robustbench::io
{

namespace fs = std::filesystem;
using json = nlohmann::json;

inline std::string read_text(const fs::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw MissingFileError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const fs::path &path, std::string_view text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write file: " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out)
        throw IoError("write failed: " + path.string());
}

inline json read_json(const fs::path &path)
{
    const std::string text = read_text(path);
    try {
        return json::parse(text);
    } catch (const json::exception &e) {
        throw FormatError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

inline void write_json(const fs::path &path, const json &j) { write_text(path, j.dump(2) + "\n"); }

inline void ensure_directory(const fs::path &dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

// ---------------------------------------------------------------------------
// Little-endian blobs of 4- or 8-byte scalars

template <class T> std::vector<char> to_little_endian_bytes(std::span<const T> values)
{
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    std::vector<char> bytes(values.size() * sizeof(T));
    std::memcpy(bytes.data(), values.data(), bytes.size());
    if constexpr (std::endian::native == std::endian::big)
        for (std::size_t i = 0; i < bytes.size(); i += sizeof(T))
            std::reverse(bytes.begin() + static_cast<std::ptrdiff_t>(i),
                         bytes.begin() + static_cast<std::ptrdiff_t>(i + sizeof(T)));
    return bytes;
}

template <class T> std::vector<T> from_little_endian_bytes(std::string_view bytes)
{
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    if (bytes.size() % sizeof(T) != 0)
        throw FormatError("blob size is not a multiple of " + std::to_string(sizeof(T)) + " bytes");
    std::vector<T> values(bytes.size() / sizeof(T));
    std::string buf(bytes);
    if constexpr (std::endian::native == std::endian::big)
        for (std::size_t i = 0; i < buf.size(); i += sizeof(T))
            std::reverse(buf.begin() + static_cast<std::ptrdiff_t>(i),
                         buf.begin() + static_cast<std::ptrdiff_t>(i + sizeof(T)));
    std::memcpy(values.data(), buf.data(), buf.size());
    return values;
}

template <class T> void write_blob(const fs::path &path, std::span<const T> values)
{
    const auto bytes = to_little_endian_bytes(values);
    write_text(path, std::string_view(bytes.data(), bytes.size()));
}

template <class T> std::vector<T> read_blob(const fs::path &path)
{
    return from_little_endian_bytes<T>(read_text(path));
}

// ---------------------------------------------------------------------------
// SHA-256 (OpenSSL EVP)

class Sha256
{
  public:
    Sha256() : ctx_(EVP_MD_CTX_new())
    {
        if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1)
            throw Error("SHA-256 initialisation failed");
    }
    Sha256(const Sha256 &) = delete;
    Sha256 &operator=(const Sha256 &) = delete;
    ~Sha256() { EVP_MD_CTX_free(ctx_); }

    void update(std::string_view data)
    {
        EVP_DigestUpdate(ctx_, data.data(), data.size());
    }

    std::string hex_digest()
    {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx_, md.data(), &len);
        static constexpr char digits[] = "0123456789abcdef";
        std::string out;
        out.reserve(2 * len);
        for (unsigned int i = 0; i < len; ++i) {
            out.push_back(digits[md[i] >> 4]);
            out.push_back(digits[md[i] & 0xF]);
        }
        return out;
    }

  private:
    EVP_MD_CTX *ctx_;
};

inline std::string sha256_hex(std::string_view data)
{
    Sha256 h;
    h.update(data);
    return h.hex_digest();
}

// ---------------------------------------------------------------------------
// CSV: RFC 4180 quoting, LF line endings on output.

using CsvRow = std::vector<std::string>;

inline std::vector<CsvRow> parse_csv(std::string_view text)
{
    std::vector<CsvRow> rows;
    CsvRow row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            in_quotes = true;
            field_started = true;
            break;
        case ',':
            row.push_back(std::move(field));
            field.clear();
            field_started = true;
            break;
        case '\r':
            break;
        case '\n':
            if (field_started || !field.empty() || !row.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            field.clear();
            row.clear();
            field_started = false;
            break;
        default:
            field.push_back(c);
            field_started = true;
        }
    }
    if (in_quotes)
        throw FormatError("unterminated quoted CSV field");
    if (field_started || !field.empty() || !row.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string csv_escape(std::string_view field)
{
    if (field.find_first_of(",\"\n\r") == std::string_view::npos)
        return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"')
            out += "\"\"";
        else
            out.push_back(c);
    }
    out.push_back('"');
    return out;
}

class CsvWriter
{
  public:
    explicit CsvWriter(CsvRow header) : columns_(header.size()) { add(header); }

    void add(const CsvRow &row)
    {
        if (row.size() != columns_)
            throw Error("CSV row has " + std::to_string(row.size()) + " fields, expected " +
                        std::to_string(columns_));
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i)
                text_.push_back(',');
            text_ += csv_escape(row[i]);
        }
        text_.push_back('\n');
    }

    [[nodiscard]] const std::string &str() const { return text_; }
    void save(const fs::path &path) const { write_text(path, text_); }

  private:
    std::size_t columns_;
    std::string text_;
};

/// Resolve a path stored in a manifest relative to the manifest's directory.
inline fs::path resolve_relative(const fs::path &base_file, const std::string &stored)
{
    fs::path p(stored);
    if (p.is_absolute())
        return p;
    return base_file.parent_path() / p;
}

} // namespace robustbench::io

#endif
