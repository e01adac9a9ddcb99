#ifndef ROBUSTBENCH_DATASET_HPP
#define ROBUSTBENCH_DATASET_HPP

#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "robustbench/common.hpp"
#include "robustbench/io.hpp"

namespace robustbench
{

enum class LabelAxis { bio, conf };

inline const char *to_string(LabelAxis axis) { return axis == LabelAxis::bio ? "bio" : "conf"; }

inline LabelAxis parse_axis(std::string_view s)
{
    if (s == "bio")
        return LabelAxis::bio;
    if (s == "conf")
        return LabelAxis::conf;
    throw SpecError("unknown label axis '" + std::string(s) + "' (expected bio or conf)");
}

/// Categorical column interned to dense codes. Codes follow lexicographic
/// order of the vocabulary.
class LabelColumn
{
  public:
    LabelColumn() = default;

    explicit LabelColumn(std::span<const std::string> values)
    {
        std::set<std::string> distinct(values.begin(), values.end());
        vocab_.assign(distinct.begin(), distinct.end());
        std::unordered_map<std::string, int> code_of;
        for (std::size_t i = 0; i < vocab_.size(); ++i)
            code_of.emplace(vocab_[i], static_cast<int>(i));
        codes_.reserve(values.size());
        for (const auto &v : values)
            codes_.push_back(code_of.at(v));
    }

    explicit LabelColumn(const std::vector<std::string> &values)
        : LabelColumn(std::span<const std::string>(values))
    {
    }

    [[nodiscard]] std::size_t size() const { return codes_.size(); }
    [[nodiscard]] std::size_t num_classes() const { return vocab_.size(); }
    [[nodiscard]] int code(std::size_t i) const { return codes_[i]; }
    [[nodiscard]] const std::string &label(std::size_t i) const { return vocab_[codes_[i]]; }
    [[nodiscard]] const std::vector<int> &codes() const { return codes_; }
    [[nodiscard]] const std::vector<std::string> &vocab() const { return vocab_; }

    [[nodiscard]] std::vector<std::string> labels() const
    {
        std::vector<std::string> out;
        out.reserve(codes_.size());
        for (int c : codes_)
            out.push_back(vocab_[c]);
        return out;
    }

    /// Code of a label, or -1 if it is not in the vocabulary.
    [[nodiscard]] int find(std::string_view label) const
    {
        auto it = std::lower_bound(vocab_.begin(), vocab_.end(), label);
        if (it == vocab_.end() || *it != label)
            return -1;
        return static_cast<int>(it - vocab_.begin());
    }

    friend bool operator==(const LabelColumn &, const LabelColumn &) = default;

  private:
    std::vector<std::string> vocab_;
    std::vector<int> codes_;
};

/// n feature vectors with their biological / confounding labels and the
/// case and slide each one came from. Immutable once built.
class EmbeddingDataset
{
  public:
    EmbeddingDataset() = default;

    /// Validates every invariant; throws a DataError subclass on violation.
    EmbeddingDataset(FloatMatrix embeddings, std::vector<std::string> sample_ids,
                     std::vector<std::string> case_ids, std::vector<std::string> slide_ids,
                     const std::vector<std::string> &bio_labels,
                     const std::vector<std::string> &conf_labels)
        : embeddings_(std::move(embeddings)), sample_ids_(std::move(sample_ids)),
          case_ids_(std::move(case_ids)), slide_ids_(std::move(slide_ids)), bio_(bio_labels),
          conf_(conf_labels)
    {
        validate();
    }

    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(embeddings_.rows()); }
    [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(embeddings_.cols()); }
    [[nodiscard]] const FloatMatrix &embeddings() const { return embeddings_; }
    [[nodiscard]] const std::vector<std::string> &sample_ids() const { return sample_ids_; }
    [[nodiscard]] const std::vector<std::string> &case_ids() const { return case_ids_; }
    [[nodiscard]] const std::vector<std::string> &slide_ids() const { return slide_ids_; }
    [[nodiscard]] const LabelColumn &bio() const { return bio_; }
    [[nodiscard]] const LabelColumn &conf() const { return conf_; }
    [[nodiscard]] const LabelColumn &labels(LabelAxis axis) const
    {
        return axis == LabelAxis::bio ? bio_ : conf_;
    }

    /// Dense integer case codes (first-appearance order), for fast equality tests.
    [[nodiscard]] std::vector<int> case_codes() const
    {
        std::unordered_map<std::string, int> code_of;
        std::vector<int> out;
        out.reserve(case_ids_.size());
        for (const auto &c : case_ids_)
            out.push_back(code_of.try_emplace(c, static_cast<int>(code_of.size())).first->second);
        return out;
    }

    /// Same metadata, new feature matrix (row count must match).
    [[nodiscard]] EmbeddingDataset with_embeddings(FloatMatrix embeddings) const
    {
        if (static_cast<std::size_t>(embeddings.rows()) != size())
            throw RowCountMismatchError("replacement embeddings have " +
                                        std::to_string(embeddings.rows()) + " rows, dataset has " +
                                        std::to_string(size()));
        EmbeddingDataset out = *this;
        out.embeddings_ = std::move(embeddings);
        out.validate();
        return out;
    }

    /// Rows selected by index, in the given order.
    [[nodiscard]] EmbeddingDataset subset(std::span<const std::size_t> rows) const
    {
        FloatMatrix emb(static_cast<Eigen::Index>(rows.size()), embeddings_.cols());
        std::vector<std::string> ids, cases, slides, bio, conf;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const std::size_t i = rows[r];
            if (i >= size())
                throw RangeError("subset index " + std::to_string(i) + " out of range");
            emb.row(static_cast<Eigen::Index>(r)) = embeddings_.row(static_cast<Eigen::Index>(i));
            ids.push_back(sample_ids_[i]);
            cases.push_back(case_ids_[i]);
            slides.push_back(slide_ids_[i]);
            bio.push_back(bio_.label(i));
            conf.push_back(conf_.label(i));
        }
        return EmbeddingDataset(std::move(emb), std::move(ids), std::move(cases),
                                std::move(slides), bio, conf);
    }

    /// Copy with the roles of the biological and confounding labels exchanged.
    [[nodiscard]] EmbeddingDataset swap_label_roles() const
    {
        EmbeddingDataset out = *this;
        std::swap(out.bio_, out.conf_);
        return out;
    }

    friend bool operator==(const EmbeddingDataset &a, const EmbeddingDataset &b)
    {
        return a.embeddings_.rows() == b.embeddings_.rows() &&
               a.embeddings_.cols() == b.embeddings_.cols() &&
               std::memcmp(a.embeddings_.data(), b.embeddings_.data(),
                           sizeof(float) * static_cast<std::size_t>(a.embeddings_.size())) == 0 &&
               a.sample_ids_ == b.sample_ids_ && a.case_ids_ == b.case_ids_ &&
               a.slide_ids_ == b.slide_ids_ && a.bio_ == b.bio_ && a.conf_ == b.conf_;
    }

  private:
    void validate() const
    {
        const std::size_t n = size();
        if (n == 0)
            throw InvariantError("dataset has no rows");
        if (embeddings_.cols() == 0)
            throw InvariantError("embedding dimension must be at least 1");
        for (auto len : {sample_ids_.size(), case_ids_.size(), slide_ids_.size(), bio_.size(),
                         conf_.size()})
            if (len != n)
                throw RowCountMismatchError("label table has " + std::to_string(len) +
                                            " rows but embedding matrix has " + std::to_string(n));
        for (Eigen::Index i = 0; i < embeddings_.rows(); ++i)
            for (Eigen::Index j = 0; j < embeddings_.cols(); ++j)
                if (!std::isfinite(embeddings_(i, j)))
                    throw NonFiniteValueError("non-finite embedding value at row " +
                                              std::to_string(i) + ", column " + std::to_string(j));
        std::unordered_set<std::string> seen;
        for (const auto &id : sample_ids_)
            if (!seen.insert(id).second)
                throw DuplicateSampleIdError("duplicate sample_id '" + id + "'");
        std::unordered_map<std::string, std::string> case_of_slide;
        for (std::size_t i = 0; i < n; ++i) {
            auto [it, inserted] = case_of_slide.emplace(slide_ids_[i], case_ids_[i]);
            if (!inserted && it->second != case_ids_[i])
                throw InvariantError("slide '" + slide_ids_[i] + "' maps to cases '" + it->second +
                                     "' and '" + case_ids_[i] + "'");
        }
    }

    FloatMatrix embeddings_;
    std::vector<std::string> sample_ids_;
    std::vector<std::string> case_ids_;
    std::vector<std::string> slide_ids_;
    LabelColumn bio_;
    LabelColumn conf_;
};

// ---------------------------------------------------------------------------
// Persistence

inline const io::CsvRow kLabelHeader{"sample_id", "case_id", "slide_id", "bio_label", "conf_label"};

inline std::string label_table_csv(const EmbeddingDataset &ds)
{
    io::CsvWriter w(kLabelHeader);
    for (std::size_t i = 0; i < ds.size(); ++i)
        w.add({ds.sample_ids()[i], ds.case_ids()[i], ds.slide_ids()[i], ds.bio().label(i),
               ds.conf().label(i)});
    return w.str();
}

inline std::vector<char> embedding_blob_bytes(const EmbeddingDataset &ds)
{
    const auto &m = ds.embeddings();
    return io::to_little_endian_bytes(
        std::span<const float>(m.data(), static_cast<std::size_t>(m.size())));
}

/// SHA-256 over the embedding blob followed by the canonical label table.
inline std::string dataset_checksum(const EmbeddingDataset &ds)
{
    io::Sha256 h;
    const auto blob = embedding_blob_bytes(ds);
    h.update(std::string_view(blob.data(), blob.size()));
    h.update(label_table_csv(ds));
    return h.hex_digest();
}

/// Writes `<stem>.f32` and `<stem>.labels.csv` next to the manifest.
inline void save_dataset(const EmbeddingDataset &ds, const std::filesystem::path &manifest_path)
{
    namespace fs = std::filesystem;
    if (manifest_path.has_parent_path())
        io::ensure_directory(manifest_path.parent_path());
    const std::string stem = manifest_path.stem().string();
    const fs::path blob_name = stem + ".f32";
    const fs::path labels_name = stem + ".labels.csv";
    const fs::path dir = manifest_path.parent_path();

    const auto blob = embedding_blob_bytes(ds);
    io::write_text(dir / blob_name, std::string_view(blob.data(), blob.size()));
    const std::string labels = label_table_csv(ds);
    io::write_text(dir / labels_name, labels);

    io::Sha256 h;
    h.update(std::string_view(blob.data(), blob.size()));
    h.update(labels);
    io::json manifest = {{"n", ds.size()},
                         {"d", ds.dim()},
                         {"dtype", "float32"},
                         {"endianness", "little"},
                         {"embeddings", blob_name.string()},
                         {"labels", labels_name.string()},
                         {"checksum", h.hex_digest()}};
    io::write_json(manifest_path, manifest);
}

inline EmbeddingDataset load_dataset(const std::filesystem::path &manifest_path)
{
    if (!std::filesystem::exists(manifest_path))
        throw MissingFileError("manifest not found: " + manifest_path.string());
    const io::json m = io::read_json(manifest_path);
    for (const char *key : {"n", "d", "embeddings", "labels"})
        if (!m.contains(key))
            throw FormatError("manifest " + manifest_path.string() + " lacks field '" + key + "'");
    if (m.contains("endianness") && m["endianness"] != "little")
        throw FormatError("only little-endian embedding blobs are supported");

    const auto n = m["n"].get<std::size_t>();
    const auto d = m["d"].get<std::size_t>();
    if (d == 0)
        throw InvariantError("manifest declares d = 0");
    const auto blob_path = io::resolve_relative(manifest_path, m["embeddings"].get<std::string>());
    const auto labels_path = io::resolve_relative(manifest_path, m["labels"].get<std::string>());
    if (!std::filesystem::exists(blob_path))
        throw MissingFileError("embedding blob not found: " + blob_path.string());
    if (!std::filesystem::exists(labels_path))
        throw MissingFileError("label table not found: " + labels_path.string());

    const std::string blob = io::read_text(blob_path);
    const std::string label_text = io::read_text(labels_path);
    if (blob.size() % (4 * d) != 0)
        throw FormatError("embedding blob size " + std::to_string(blob.size()) +
                          " is not a multiple of 4*d");
    const std::size_t blob_rows = blob.size() / (4 * d);

    auto rows = io::parse_csv(label_text);
    if (rows.empty() || rows.front() != kLabelHeader)
        throw FormatError("label table must start with header "
                          "sample_id,case_id,slide_id,bio_label,conf_label");
    const std::size_t label_rows = rows.size() - 1;
    if (blob_rows != label_rows)
        throw RowCountMismatchError("embedding blob has " + std::to_string(blob_rows) +
                                    " rows but label table has " + std::to_string(label_rows));
    if (label_rows != n)
        throw RowCountMismatchError("manifest declares n = " + std::to_string(n) + " but files have " +
                                    std::to_string(label_rows) + " rows");

    std::vector<std::string> ids, cases, slides, bio, conf;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        auto &row = rows[r];
        if (row.size() != 5)
            throw FormatError("label table row " + std::to_string(r) + " has " +
                              std::to_string(row.size()) + " fields");
        ids.push_back(std::move(row[0]));
        cases.push_back(std::move(row[1]));
        slides.push_back(std::move(row[2]));
        bio.push_back(std::move(row[3]));
        conf.push_back(std::move(row[4]));
    }
    const auto values = io::from_little_endian_bytes<float>(blob);
    FloatMatrix emb(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    std::memcpy(emb.data(), values.data(), values.size() * sizeof(float));
    EmbeddingDataset ds(std::move(emb), std::move(ids), std::move(cases), std::move(slides), bio,
                        conf);

    if (m.contains("checksum")) {
        io::Sha256 h;
        h.update(blob);
        h.update(label_text);
        if (h.hex_digest() != m["checksum"].get<std::string>())
            throw ChecksumMismatchError("checksum mismatch for " + manifest_path.string() +
                                        ": blob or labels changed since the manifest was written");
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Transformations

struct NormalizeStats
{
    std::size_t zero_rows = 0;
};

/// Scales every row to unit Euclidean norm. All-zero rows are passed through
/// and counted.
inline EmbeddingDataset l2_normalize(const EmbeddingDataset &ds, NormalizeStats *stats = nullptr)
{
    FloatMatrix out = ds.embeddings();
    std::size_t zero_rows = 0;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double norm = out.row(i).cast<double>().norm();
        if (norm == 0.0) {
            ++zero_rows;
            continue;
        }
        out.row(i) = (out.row(i).cast<double>() / norm).cast<float>();
    }
    if (zero_rows > 0)
        log_warning("l2_normalize: " + std::to_string(zero_rows) +
                    " all-zero row(s) left unnormalized");
    if (stats)
        stats->zero_rows = zero_rows;
    return ds.with_embeddings(std::move(out));
}

/// Indices of each (bio, conf) cell, keyed by (bio code, conf code), in row order.
inline std::map<std::pair<int, int>, std::vector<std::size_t>>
cell_index(const EmbeddingDataset &ds)
{
    std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < ds.size(); ++i)
        cells[{ds.bio().code(i), ds.conf().code(i)}].push_back(i);
    return cells;
}

/// Draws exactly per_cell samples without replacement from every
/// (bio, conf) combination of the two vocabularies. Output keeps original row order.
inline EmbeddingDataset subsample_balanced(const EmbeddingDataset &ds, std::size_t per_cell,
                                           std::uint64_t seed)
{
    auto cells = cell_index(ds);
    std::vector<std::string> deficient;
    for (std::size_t b = 0; b < ds.bio().num_classes(); ++b)
        for (std::size_t c = 0; c < ds.conf().num_classes(); ++c) {
            const auto it = cells.find({static_cast<int>(b), static_cast<int>(c)});
            const std::size_t have = it == cells.end() ? 0 : it->second.size();
            if (have < per_cell)
                deficient.push_back("(" + ds.bio().vocab()[b] + ", " + ds.conf().vocab()[c] +
                                    "): " + std::to_string(have));
        }
    if (!deficient.empty()) {
        std::string msg = "cells with fewer than " + std::to_string(per_cell) + " samples:";
        for (const auto &d : deficient)
            msg += " " + d;
        throw InsufficientCellError(msg);
    }
    std::vector<std::size_t> chosen;
    std::uint64_t stream = 0;
    for (auto &[key, members] : cells) {
        Rng rng = make_rng(seed, stream++);
        shuffle_in_place(members, rng);
        chosen.insert(chosen.end(), members.begin(),
                      members.begin() + static_cast<std::ptrdiff_t>(per_cell));
    }
    std::sort(chosen.begin(), chosen.end());
    return ds.subset(chosen);
}

/// Row-wise concatenation; sample ids must stay unique.
inline EmbeddingDataset concatenate(const EmbeddingDataset &a, const EmbeddingDataset &b)
{
    if (a.dim() != b.dim())
        throw DimensionMismatchError("cannot concatenate datasets of dimension " +
                                     std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
    FloatMatrix emb(static_cast<Eigen::Index>(a.size() + b.size()), a.embeddings().cols());
    emb.topRows(static_cast<Eigen::Index>(a.size())) = a.embeddings();
    emb.bottomRows(static_cast<Eigen::Index>(b.size())) = b.embeddings();
    auto cat = [](auto x, const auto &y) {
        x.insert(x.end(), y.begin(), y.end());
        return x;
    };
    return EmbeddingDataset(std::move(emb), cat(a.sample_ids(), b.sample_ids()),
                            cat(a.case_ids(), b.case_ids()), cat(a.slide_ids(), b.slide_ids()),
                            cat(a.bio().labels(), b.bio().labels()),
                            cat(a.conf().labels(), b.conf().labels()));
}

inline RowMatrix to_double(const FloatMatrix &m) { return m.cast<double>(); }

} // namespace robustbench

#endif
