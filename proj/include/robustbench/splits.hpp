#ifndef ROBUSTBENCH_SPLITS_HPP
#define ROBUSTBENCH_SPLITS_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "robustbench/common.hpp"
#include "robustbench/dataset.hpp"
#include "robustbench/io.hpp"
#include "robustbench/synth.hpp"

namespace robustbench
{

/// Counts with rows = confounding classes (centers) and columns = biological classes.
struct ContingencyTable
{
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::vector<std::vector<std::int64_t>> counts;

    ContingencyTable() = default;
    ContingencyTable(std::vector<std::string> rows, std::vector<std::string> cols)
        : row_labels(std::move(rows)), col_labels(std::move(cols)),
          counts(row_labels.size(), std::vector<std::int64_t>(col_labels.size(), 0))
    {
    }
    ContingencyTable(std::vector<std::string> rows, std::vector<std::string> cols,
                     std::vector<std::vector<std::int64_t>> c)
        : row_labels(std::move(rows)), col_labels(std::move(cols)), counts(std::move(c))
    {
        validate();
    }

    [[nodiscard]] std::size_t rows() const { return row_labels.size(); }
    [[nodiscard]] std::size_t cols() const { return col_labels.size(); }
    [[nodiscard]] bool empty() const { return rows() == 0; }

    [[nodiscard]] std::int64_t total() const
    {
        std::int64_t t = 0;
        for (const auto &r : counts)
            for (auto v : r)
                t += v;
        return t;
    }
    [[nodiscard]] std::vector<std::int64_t> row_sums() const
    {
        std::vector<std::int64_t> out;
        for (const auto &r : counts) {
            std::int64_t s = 0;
            for (auto v : r)
                s += v;
            out.push_back(s);
        }
        return out;
    }
    [[nodiscard]] std::vector<std::int64_t> col_sums() const
    {
        std::vector<std::int64_t> out(cols(), 0);
        for (const auto &r : counts)
            for (std::size_t j = 0; j < r.size(); ++j)
                out[j] += r[j];
        return out;
    }
    /// Count for (center, class) by label; 0 when either label is absent.
    [[nodiscard]] std::int64_t at(const std::string &row, const std::string &col) const
    {
        const auto r = std::find(row_labels.begin(), row_labels.end(), row);
        const auto c = std::find(col_labels.begin(), col_labels.end(), col);
        if (r == row_labels.end() || c == col_labels.end())
            return 0;
        return counts[static_cast<std::size_t>(r - row_labels.begin())][static_cast<std::size_t>(c - col_labels.begin())];
    }

    void validate() const
    {
        if (counts.size() != rows())
            throw InvariantError("contingency table row count differs from its labels");
        for (const auto &r : counts) {
            if (r.size() != cols())
                throw InvariantError("contingency table column count differs from its labels");
            for (auto v : r)
                if (v < 0)
                    throw InvariantError("contingency table has a negative count");
        }
    }

    friend bool operator==(const ContingencyTable &, const ContingencyTable &) = default;
};

/// sqrt(chi2 / (N (min(r, c) - 1))) against independence, no bias correction.
/// All-zero rows and columns are dropped first.
inline double cramers_v(const ContingencyTable &table)
{
    table.validate();
    const auto rs = table.row_sums();
    const auto cs = table.col_sums();
    std::vector<std::size_t> keep_r, keep_c;
    for (std::size_t i = 0; i < rs.size(); ++i)
        if (rs[i] > 0)
            keep_r.push_back(i);
    for (std::size_t j = 0; j < cs.size(); ++j)
        if (cs[j] > 0)
            keep_c.push_back(j);
    if (keep_r.size() < 2 || keep_c.size() < 2)
        throw DegenerateInputError("Cramer's V needs at least two non-empty rows and columns");
    const auto n = static_cast<double>(table.total());
    double chi2 = 0.0;
    for (auto i : keep_r)
        for (auto j : keep_c) {
            const double expected = static_cast<double>(rs[i]) * static_cast<double>(cs[j]) / n;
            const double diff = static_cast<double>(table.counts[i][j]) - expected;
            chi2 += diff * diff / expected;
        }
    const double k = static_cast<double>(std::min(keep_r.size(), keep_c.size()) - 1);
    return std::min(1.0, std::sqrt(chi2 / (n * k)));
}

struct SplitPlan
{
    ContingencyTable train;
    ContingencyTable val;
    ContingencyTable id_test;
    ContingencyTable ood_test; // rows are held-out centers; may be empty
    double target_v = 0.0;
};

using SplitSchedule = std::vector<SplitPlan>;

/// Row and column sums of every train table agree with the first plan's.
inline void check_constant_marginals(const SplitSchedule &plans)
{
    for (std::size_t t = 1; t < plans.size(); ++t)
        if (plans[t].train.row_sums() != plans[0].train.row_sums() ||
            plans[t].train.col_sums() != plans[0].train.col_sums())
            throw InvariantError("split " + std::to_string(t + 1) + " changes the training marginals");
}

namespace detail
{

/// Integer table close to `target` whose rows sum to `row_tot` and columns to
/// `col_tot` (both integral and consistent). Entries stay within one unit of
/// the target wherever a swap allows it.
inline std::vector<std::vector<std::int64_t>> controlled_round(const std::vector<std::vector<double>> &target,
                                                               const std::vector<std::int64_t> &row_tot,
                                                               const std::vector<std::int64_t> &col_tot)
{
    const std::size_t r = target.size(), c = col_tot.size();
    std::vector<std::vector<std::int64_t>> x(r, std::vector<std::int64_t>(c));
    for (std::size_t i = 0; i < r; ++i) {
        std::int64_t s = 0;
        std::vector<std::pair<double, std::size_t>> frac;
        for (std::size_t j = 0; j < c; ++j) {
            x[i][j] = static_cast<std::int64_t>(std::floor(target[i][j] + 1e-9));
            s += x[i][j];
            // Rotating start breaks ties differently per row so columns stay balanced.
            frac.emplace_back(target[i][j] - static_cast<double>(x[i][j]), (j + c - i % c) % c);
        }
        std::sort(frac.begin(), frac.end(), [](const auto &a, const auto &b) {
            return a.first > b.first + 1e-12 || (std::abs(a.first - b.first) <= 1e-12 && a.second < b.second);
        });
        for (std::int64_t k = 0; k < row_tot[i] - s; ++k)
            ++x[i][(frac[static_cast<std::size_t>(k)].second + i % c) % c];
    }
    for (int guard = 0; guard < 100000; ++guard) {
        std::vector<std::int64_t> cs(c, 0);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
                cs[j] += x[i][j];
        std::size_t over = c, under = c;
        for (std::size_t j = 0; j < c; ++j) {
            if (cs[j] > col_tot[j] && over == c)
                over = j;
            if (cs[j] < col_tot[j] && under == c)
                under = j;
        }
        if (over == c)
            return x;
        std::size_t best = r;
        double best_cost = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < r; ++i) {
            if (x[i][over] == 0)
                continue;
            const double cost = (target[i][over] - static_cast<double>(x[i][over] - 1)) +
                                (static_cast<double>(x[i][under] + 1) - target[i][under]);
            if (cost < best_cost) {
                best_cost = cost;
                best = i;
            }
        }
        if (best == r)
            break;
        --x[best][over];
        ++x[best][under];
    }
    throw InvariantError("controlled rounding failed to match column totals");
}

inline ContingencyTable scaled_table(const ContingencyTable &train, const std::vector<std::int64_t> &row_tot,
                                     const std::vector<std::int64_t> &col_tot)
{
    const auto rs = train.row_sums();
    std::vector<std::vector<double>> target(train.rows(), std::vector<double>(train.cols()));
    for (std::size_t i = 0; i < train.rows(); ++i)
        for (std::size_t j = 0; j < train.cols(); ++j)
            target[i][j] = rs[i] == 0 ? 0.0
                                      : static_cast<double>(train.counts[i][j]) * static_cast<double>(row_tot[i]) /
                                            static_cast<double>(rs[i]);
    return ContingencyTable(train.row_labels, train.col_labels, controlled_round(target, row_tot, col_tot));
}

inline ContingencyTable uniform_table(std::vector<std::string> rows, std::vector<std::string> cols, std::int64_t v)
{
    ContingencyTable t(std::move(rows), std::move(cols));
    for (auto &r : t.counts)
        std::fill(r.begin(), r.end(), v);
    return t;
}

/// Validation table with the train table's association pattern and the
/// requested per-center / per-class totals.
inline ContingencyTable validation_like(const ContingencyTable &train, std::int64_t per_row, std::int64_t per_col)
{
    return scaled_table(train, std::vector<std::int64_t>(train.rows(), per_row),
                        std::vector<std::int64_t>(train.cols(), per_col));
}

inline SplitSchedule finish_schedule(std::vector<ContingencyTable> trains, std::int64_t val_row, std::int64_t val_col,
                                     const ContingencyTable &id_test, const ContingencyTable &ood)
{
    SplitSchedule plans;
    for (auto &t : trains) {
        SplitPlan p;
        p.val = val_row > 0 ? validation_like(t, val_row, val_col)
                            : ContingencyTable(t.row_labels, t.col_labels);
        p.train = std::move(t);
        p.id_test = id_test;
        p.ood_test = ood;
        p.target_v = cramers_v(p.train);
        plans.push_back(std::move(p));
    }
    check_constant_marginals(plans);
    return plans;
}

} // namespace detail

struct ScheduleExtras
{
    std::vector<std::string> bio_vocab;  // default: synthetic bio names
    std::vector<std::string> conf_vocab; // default: synthetic center names
    std::int64_t val_per_center = 0;     // 0 = no validation table
    std::int64_t id_test_per_cell = 0;
    std::vector<std::string> ood_centers;
    std::int64_t ood_per_cell = 0;
};

/// Center c over-represents the block of n_bio / n_conf classes with index
/// (c + 1) mod n_conf. Plan t moves t / (n_splits - 1) of every suppressed
/// cell into the over-represented cells of the same center.
inline SplitSchedule build_split_schedule(std::size_t n_bio, std::size_t n_conf, std::int64_t cell_total,
                                          std::size_t n_splits, ScheduleExtras extras = {})
{
    if (n_conf < 2 || n_bio < n_conf || n_bio % n_conf != 0)
        throw SpecError("n_bio must be a positive multiple of n_conf >= 2");
    if (n_splits < 2)
        throw SpecError("a schedule needs at least two splits");
    if (cell_total <= 0 || cell_total % static_cast<std::int64_t>(n_splits - 1) != 0)
        throw SpecError("cell_total must be a positive multiple of n_splits - 1");
    if (extras.bio_vocab.empty())
        for (std::size_t b = 0; b < n_bio; ++b)
            extras.bio_vocab.push_back(synth::bio_name(b, n_bio));
    if (extras.conf_vocab.empty())
        for (std::size_t c = 0; c < n_conf; ++c)
            extras.conf_vocab.push_back(synth::conf_name(c, n_conf + extras.ood_centers.size()));
    if (extras.bio_vocab.size() != n_bio || extras.conf_vocab.size() != n_conf)
        throw SpecError("vocabulary sizes do not match n_bio / n_conf");
    const std::size_t m = n_bio / n_conf;
    const std::int64_t step = cell_total / static_cast<std::int64_t>(n_splits - 1);
    std::vector<ContingencyTable> trains;
    for (std::size_t t = 0; t < n_splits; ++t) {
        ContingencyTable tab(extras.conf_vocab, extras.bio_vocab);
        const auto moved = step * static_cast<std::int64_t>(t);
        for (std::size_t c = 0; c < n_conf; ++c) {
            const std::size_t block = (c + 1) % n_conf;
            for (std::size_t b = 0; b < n_bio; ++b)
                tab.counts[c][b] = b / m == block ? cell_total + static_cast<std::int64_t>(n_conf - 1) * moved
                                                  : cell_total - moved;
        }
        trains.push_back(std::move(tab));
    }
    const ContingencyTable id_test = detail::uniform_table(extras.conf_vocab, extras.bio_vocab, extras.id_test_per_cell);
    ContingencyTable ood = extras.ood_centers.empty()
                               ? ContingencyTable({}, extras.bio_vocab)
                               : detail::uniform_table(extras.ood_centers, extras.bio_vocab, extras.ood_per_cell);
    const auto val_col = extras.val_per_center * static_cast<std::int64_t>(n_conf) / static_cast<std::int64_t>(n_bio);
    if (extras.val_per_center > 0 && val_col * static_cast<std::int64_t>(n_bio) !=
                                         extras.val_per_center * static_cast<std::int64_t>(n_conf))
        throw SpecError("val_per_center * n_conf must be divisible by n_bio");
    return detail::finish_schedule(std::move(trains), extras.val_per_center, val_col, id_test, ood);
}

/// The Camelyon (8 splits), TCGA 4x4 (7 splits) and Tolkach (4 splits) templates.
inline std::map<std::string, SplitSchedule> canonical_schedules()
{
    std::map<std::string, SplitSchedule> out;
    {
        const std::vector<std::string> centers{"RUMC", "UMCU"}, classes{"Normal", "Tumor"};
        std::vector<ContingencyTable> trains;
        for (std::int64_t t = 0; t < 8; ++t)
            trains.emplace_back(centers, classes,
                                std::vector<std::vector<std::int64_t>>{{2100 - 300 * t, 2100 + 300 * t},
                                                                       {2100 + 300 * t, 2100 - 300 * t}});
        const ContingencyTable ood({"CWZ", "RST", "LPON"}, classes, {{335, 327}, {335, 335}, {335, 335}});
        out["camelyon"] = detail::finish_schedule(std::move(trains), 300, 300,
                                                  detail::uniform_table(centers, classes, 600), ood);
    }
    {
        const std::vector<std::string> centers{"AST", "CH", "RP", "UP"}, classes{"BRCA", "COAD", "LUAD", "LUSC"};
        const std::int64_t pattern[7][3] = {{60, 60, 60},   {90, 30, 60}, {120, 60, 30}, {150, 30, 30},
                                            {180, 0, 30},   {210, 30, 0}, {240, 0, 0}};
        std::vector<ContingencyTable> trains;
        for (const auto &p : pattern) {
            ContingencyTable tab(centers, classes);
            for (std::size_t i = 0; i < 4; ++i)
                for (std::size_t j = 0; j < 4; ++j)
                    tab.counts[i][j] = i == j ? p[0] : (i + j == 3 ? p[1] : p[2]);
            trains.push_back(std::move(tab));
        }
        const ContingencyTable ood({"CU", "GPCC", "IGC", "JH"}, classes,
                                   {{300, 0, 0, 300}, {300, 300, 0, 0}, {0, 300, 300, 0}, {0, 0, 300, 300}});
        out["tcga"] = detail::finish_schedule(std::move(trains), 30, 30,
                                              detail::uniform_table(centers, classes, 90), ood);
    }
    {
        const std::vector<std::string> centers{"WNS", "CHA"}, classes{"TU", "MP", "SO", "SM", "RT", "AD"};
        std::vector<ContingencyTable> trains;
        for (std::int64_t t = 0; t < 4; ++t) {
            ContingencyTable tab(centers, classes);
            for (std::size_t j = 0; j < 6; ++j) {
                tab.counts[0][j] = j < 3 ? 300 - 100 * t : 300 + 100 * t;
                tab.counts[1][j] = j < 3 ? 300 + 100 * t : 300 - 100 * t;
            }
            trains.push_back(std::move(tab));
        }
        ContingencyTable ood = detail::uniform_table({"UKK", "TCGA"}, classes, 500);
        ood.counts[1][4] = 0; // no RT patches at the TCGA center
        out["tolkach"] = detail::finish_schedule(std::move(trains), 300, 100,
                                                 detail::uniform_table(centers, classes, 200), ood);
    }
    return out;
}

inline SplitSchedule canonical_schedule(const std::string &name)
{
    auto all = canonical_schedules();
    const auto it = all.find(name);
    if (it == all.end())
        throw SpecError("unknown schedule '" + name + "' (expected camelyon, tcga or tolkach)");
    return it->second;
}

// ---------------------------------------------------------------------------
// Materialization

struct SplitIndices
{
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> id_test;
    std::vector<std::size_t> ood_test;
};

namespace detail
{

enum class SlideRole { none, id_test, val, train };

inline void require_cell(std::size_t have, std::int64_t need, const std::string &what, const std::string &bio,
                         const std::string &conf)
{
    if (static_cast<std::int64_t>(have) < need)
        throw InsufficientCellError(what + " cell (" + bio + ", " + conf + ") needs " + std::to_string(need) +
                                    " samples, only " + std::to_string(have) + " available");
}

} // namespace detail

/// Slides are assigned to ID-test, validation or training pools per cell in a
/// seeded order that does not depend on the plan; the plan then takes
/// prefixes of each pool. Plans of one schedule materialized with one seed
/// therefore reuse the same samples wherever their counts overlap.
inline SplitIndices materialize_split(const EmbeddingDataset &ds, const SplitPlan &plan, std::uint64_t seed)
{
    const auto &bio = ds.bio();
    const auto &conf = ds.conf();
    const auto cells = cell_index(ds);
    auto members = [&](const std::string &b, const std::string &c) -> std::vector<std::size_t> {
        const int bc = bio.find(b), cc = conf.find(c);
        if (bc < 0 || cc < 0)
            return {};
        const auto it = cells.find({bc, cc});
        return it == cells.end() ? std::vector<std::size_t>{} : it->second;
    };

    std::unordered_map<std::string, detail::SlideRole> role;
    SplitIndices out;
    const auto val_rows = plan.val.row_sums();
    std::uint64_t stream = 0;
    for (std::size_t ci = 0; ci < plan.train.rows(); ++ci) {
        const std::string &center = plan.train.row_labels[ci];
        const std::int64_t val_budget = plan.val.empty() ? 0 : val_rows[ci];
        for (std::size_t bi = 0; bi < plan.train.cols(); ++bi) {
            const std::string &cls = plan.train.col_labels[bi];
            Rng rng = make_rng(seed, stream++);
            auto rows = members(cls, center);
            // Group by slide in a seeded slide order, seeded sample order within.
            std::map<std::string, std::vector<std::size_t>> by_slide;
            for (auto r : rows)
                by_slide[ds.slide_ids()[r]].push_back(r);
            std::vector<std::string> slides;
            for (auto &[s, v] : by_slide) {
                slides.push_back(s);
                shuffle_in_place(v, rng);
            }
            shuffle_in_place(slides, rng);

            std::vector<std::size_t> pool_id, pool_val, pool_train;
            auto place = [&](detail::SlideRole r, const std::vector<std::size_t> &v) {
                auto &dst = r == detail::SlideRole::id_test ? pool_id : r == detail::SlideRole::val ? pool_val : pool_train;
                dst.insert(dst.end(), v.begin(), v.end());
            };
            const std::int64_t id_need = plan.id_test.at(center, cls);
            for (const auto &s : slides) {
                auto &r = role[s];
                if (r == detail::SlideRole::none) {
                    if (static_cast<std::int64_t>(pool_id.size()) < id_need)
                        r = detail::SlideRole::id_test;
                    else if (static_cast<std::int64_t>(pool_val.size()) < val_budget)
                        r = detail::SlideRole::val;
                    else
                        r = detail::SlideRole::train;
                }
                place(r, by_slide[s]);
            }
            const std::int64_t val_need = plan.val.empty() ? 0 : plan.val.at(center, cls);
            const std::int64_t train_need = plan.train.counts[ci][bi];
            detail::require_cell(pool_id.size(), id_need, "ID-test", cls, center);
            detail::require_cell(pool_val.size(), val_need, "validation", cls, center);
            detail::require_cell(pool_train.size(), train_need, "training", cls, center);
            out.id_test.insert(out.id_test.end(), pool_id.begin(), pool_id.begin() + id_need);
            out.val.insert(out.val.end(), pool_val.begin(), pool_val.begin() + val_need);
            out.train.insert(out.train.end(), pool_train.begin(), pool_train.begin() + train_need);
        }
    }
    for (std::size_t ci = 0; ci < plan.ood_test.rows(); ++ci)
        for (std::size_t bi = 0; bi < plan.ood_test.cols(); ++bi) {
            const std::int64_t need = plan.ood_test.counts[ci][bi];
            Rng rng = make_rng(seed, 0x00D00000ull + ci * 1000 + bi);
            auto rows = members(plan.ood_test.col_labels[bi], plan.ood_test.row_labels[ci]);
            detail::require_cell(rows.size(), need, "OOD-test", plan.ood_test.col_labels[bi],
                                 plan.ood_test.row_labels[ci]);
            if (need == 0)
                continue;
            shuffle_in_place(rows, rng);
            out.ood_test.insert(out.ood_test.end(), rows.begin(), rows.begin() + need);
        }
    for (auto *v : {&out.train, &out.val, &out.id_test, &out.ood_test})
        std::sort(v->begin(), v->end());

    // Slide disjointness between training and evaluation sets.
    std::set<std::string> train_slides;
    for (auto r : out.train)
        train_slides.insert(ds.slide_ids()[r]);
    for (const auto *v : {&out.val, &out.id_test, &out.ood_test})
        for (auto r : *v)
            if (train_slides.count(ds.slide_ids()[r]))
                throw InvariantError("slide '" + ds.slide_ids()[r] + "' appears in training and evaluation sets");
    return out;
}

// ---------------------------------------------------------------------------
// Average performance drop

enum class ApdMode { standard, prime };

/// standard: mean over i >= 2 of (acc_i - acc_1) / acc_1;
/// prime: the same against an external baseline.
inline double average_performance_drop(std::span<const double> accs, ApdMode mode = ApdMode::standard,
                                       std::optional<double> baseline = std::nullopt)
{
    if (accs.size() < 2)
        throw RangeError("APD needs at least two accuracies");
    double base = accs[0];
    if (mode == ApdMode::prime) {
        if (!baseline)
            throw RangeError("APD' needs an external baseline accuracy");
        base = *baseline;
    }
    if (base == 0.0)
        throw UndefinedValueError("APD baseline accuracy is zero");
    double sum = 0.0;
    for (std::size_t i = 1; i < accs.size(); ++i)
        sum += (accs[i] - base) / base;
    return sum / static_cast<double>(accs.size() - 1);
}

// ---------------------------------------------------------------------------
// JSON and display

inline void to_json(io::json &j, const ContingencyTable &t)
{
    j = {{"rows", t.row_labels}, {"cols", t.col_labels}, {"counts", t.counts}};
}

inline void from_json(const io::json &j, ContingencyTable &t)
{
    t = ContingencyTable(j.at("rows").get<std::vector<std::string>>(), j.at("cols").get<std::vector<std::string>>(),
                         j.at("counts").get<std::vector<std::vector<std::int64_t>>>());
}

inline io::json schedule_to_json(const std::string &name, const SplitSchedule &plans)
{
    io::json arr = io::json::array();
    for (const auto &p : plans)
        arr.push_back({{"v", p.target_v},
                       {"train", p.train},
                       {"val", p.val},
                       {"id_test", p.id_test},
                       {"ood_test", p.ood_test}});
    return {{"name", name}, {"plans", arr}};
}

inline SplitSchedule schedule_from_json(const io::json &j)
{
    SplitSchedule plans;
    try {
        for (const auto &p : j.at("plans")) {
            SplitPlan plan;
            plan.train = p.at("train").get<ContingencyTable>();
            plan.val = p.at("val").get<ContingencyTable>();
            plan.id_test = p.at("id_test").get<ContingencyTable>();
            plan.ood_test = p.at("ood_test").get<ContingencyTable>();
            plan.target_v = cramers_v(plan.train);
            plans.push_back(std::move(plan));
        }
    } catch (const io::json::exception &e) {
        throw FormatError(std::string("malformed schedule JSON: ") + e.what());
    }
    if (plans.empty())
        throw FormatError("schedule JSON has no plans");
    check_constant_marginals(plans);
    return plans;
}

/// Fixed-width text rendering for terminals.
inline std::string format_table(const ContingencyTable &t)
{
    std::size_t w = 6;
    for (const auto &l : t.row_labels)
        w = std::max(w, l.size() + 1);
    for (const auto &l : t.col_labels)
        w = std::max(w, l.size() + 1);
    auto pad = [w](const std::string &s) { return std::string(w - std::min(w, s.size()), ' ') + s; };
    std::string out = pad("");
    for (const auto &c : t.col_labels)
        out += pad(c);
    out += "\n";
    for (std::size_t i = 0; i < t.rows(); ++i) {
        out += pad(t.row_labels[i]);
        for (auto v : t.counts[i])
            out += pad(std::to_string(v));
        out += "\n";
    }
    return out;
}

} // namespace robustbench

#endif
