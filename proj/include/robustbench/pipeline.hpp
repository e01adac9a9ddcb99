#ifndef ROBUSTBENCH_PIPELINE_HPP
#define ROBUSTBENCH_PIPELINE_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "robustbench/analysis.hpp"
#include "robustbench/clustering.hpp"
#include "robustbench/common.hpp"
#include "robustbench/dataset.hpp"
#include "robustbench/io.hpp"
#include "robustbench/neighbors.hpp"
#include "robustbench/probing.hpp"
#include "robustbench/robustify/combat.hpp"
#include "robustbench/robustify/dann.hpp"
#include "robustbench/robustness.hpp"
#include "robustbench/splits.hpp"
#include "robustbench/stats.hpp"
#include "robustbench/synth.hpp"

namespace robustbench
{

// ---------------------------------------------------------------------------
// Configuration

/// DR = Reinhard-normalized patches (an alternate embedding manifest),
/// RR = ComBat on embeddings, TR = DANN training.
enum class Robustification { none, DR, RR, TR, DR_RR, DR_TR };

inline const char *to_string(Robustification r)
{
    switch (r) {
    case Robustification::none: return "none";
    case Robustification::DR: return "DR";
    case Robustification::RR: return "RR";
    case Robustification::TR: return "TR";
    case Robustification::DR_RR: return "DR+RR";
    case Robustification::DR_TR: return "DR+TR";
    }
    return "none";
}

inline Robustification parse_robustification(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
    static const std::map<std::string, Robustification> names{
        {"NONE", Robustification::none},        {"DR", Robustification::DR},
        {"REINHARD", Robustification::DR},      {"RR", Robustification::RR},
        {"COMBAT", Robustification::RR},        {"TR", Robustification::TR},
        {"DANN", Robustification::TR},          {"DR+RR", Robustification::DR_RR},
        {"REINHARD+COMBAT", Robustification::DR_RR}, {"DR+TR", Robustification::DR_TR},
        {"REINHARD+DANN", Robustification::DR_TR}};
    const auto it = names.find(s);
    if (it == names.end())
        throw SpecError("unknown robustification '" + s + "' (expected none, DR, RR, TR, DR+RR or DR+TR)");
    return it->second;
}

inline bool uses_dr(Robustification r)
{
    return r == Robustification::DR || r == Robustification::DR_RR || r == Robustification::DR_TR;
}

struct DatasetSource
{
    std::string name;
    std::optional<std::filesystem::path> manifest;
    std::optional<synth::ConfoundedGaussianSpec> synth;
    std::optional<std::filesystem::path> dr_manifest;

    [[nodiscard]] EmbeddingDataset load(bool image_normalized = false) const
    {
        if (image_normalized) {
            if (!dr_manifest)
                throw SpecError("dataset '" + name + "' has no dr_manifest for Reinhard-normalized embeddings");
            return load_dataset(*dr_manifest);
        }
        if (manifest)
            return load_dataset(*manifest);
        if (synth)
            return synth::generate_confounded_gaussian(*synth);
        throw SpecError("dataset '" + name + "' needs a manifest or a synth spec");
    }
};

struct ScheduleConfig
{
    std::string name = "generic"; // generic | camelyon | tcga | tolkach | file
    std::optional<std::filesystem::path> file;
    std::size_t n_splits = 8;
    std::int64_t cell_total = 70;
    std::int64_t val_per_center = 40;
    std::int64_t id_test_per_cell = 40;
    std::int64_t ood_per_cell = 0;
    std::size_t n_ood_centers = 0; // the last n centers of the dataset vocabulary
};

struct RobustnessStudyConfig
{
    std::size_t k_max = 100;
    IntRange k_range{1, 100};
    std::optional<int> k; // fixed k instead of the common optimal k
    std::size_t bootstrap = 1000;
    bool exclude_same_case = true;
};

enum class StudyKind { downstream, robustness, clustering, retrieval };

inline const char *to_string(StudyKind s)
{
    switch (s) {
    case StudyKind::downstream: return "downstream";
    case StudyKind::robustness: return "robustness";
    case StudyKind::clustering: return "clustering";
    case StudyKind::retrieval: return "retrieval";
    }
    return "downstream";
}

inline StudyKind parse_study(const std::string &s)
{
    if (s == "downstream")
        return StudyKind::downstream;
    if (s == "robustness")
        return StudyKind::robustness;
    if (s == "clustering")
        return StudyKind::clustering;
    if (s == "retrieval")
        return StudyKind::retrieval;
    throw SpecError("unknown study '" + s + "' (expected downstream, robustness, clustering or retrieval)");
}

struct ExperimentConfig
{
    StudyKind study = StudyKind::downstream;
    std::vector<DatasetSource> datasets;
    ScheduleConfig schedule;
    int repetitions = 20;
    std::uint64_t seed = 0;
    Robustification robustification = Robustification::none;
    bool metric_id = true;
    bool metric_ood = true;
    std::vector<double> c_grid = default_c_grid();
    DannConfig dann;
    RobustnessStudyConfig robustness;
    ClusteringConfig clustering;

    void validate() const
    {
        if (datasets.empty())
            throw SpecError("experiment has no datasets");
        if (repetitions < 1)
            throw SpecError("repetitions must be at least 1");
        std::set<std::string> names;
        for (const auto &d : datasets)
            if (!names.insert(d.name).second)
                throw SpecError("duplicate dataset name '" + d.name + "'");
        if (c_grid.empty())
            throw SpecError("probe C grid is empty");
    }
};

inline io::json to_json(const ExperimentConfig &c)
{
    io::json ds = io::json::array();
    for (const auto &d : c.datasets) {
        io::json e = {{"name", d.name}};
        if (d.manifest)
            e["manifest"] = d.manifest->string();
        if (d.synth)
            e["synth"] = *d.synth;
        if (d.dr_manifest)
            e["dr_manifest"] = d.dr_manifest->string();
        ds.push_back(e);
    }
    io::json sched = {{"name", c.schedule.name},
                      {"n_splits", c.schedule.n_splits},
                      {"cell_total", c.schedule.cell_total},
                      {"val_per_center", c.schedule.val_per_center},
                      {"id_test_per_cell", c.schedule.id_test_per_cell},
                      {"ood_per_cell", c.schedule.ood_per_cell},
                      {"n_ood_centers", c.schedule.n_ood_centers}};
    if (c.schedule.file)
        sched["file"] = c.schedule.file->string();
    io::json rob = {{"k_max", c.robustness.k_max},
                    {"k_range", {c.robustness.k_range.lo, c.robustness.k_range.hi}},
                    {"bootstrap", c.robustness.bootstrap},
                    {"exclude_same_case", c.robustness.exclude_same_case}};
    rob["k"] = c.robustness.k ? io::json(*c.robustness.k) : io::json(nullptr);
    io::json clu = {{"k_range", {c.clustering.k_range.lo, c.clustering.k_range.hi}},
                    {"select_inits", c.clustering.select_inits},
                    {"final_inits", c.clustering.final_inits},
                    {"trials", c.clustering.trials},
                    {"max_iter", c.clustering.max_iter}};
    return {{"study", to_string(c.study)},
            {"datasets", ds},
            {"schedule", sched},
            {"repetitions", c.repetitions},
            {"seed", c.seed},
            {"robustification", to_string(c.robustification)},
            {"metrics", {{"id", c.metric_id}, {"ood", c.metric_ood}}},
            {"probe", {{"c_grid", c.c_grid}}},
            {"dann", c.dann},
            {"robustness", rob},
            {"clustering", clu}};
}

namespace detail
{

inline IntRange parse_range(const io::json &j)
{
    if (!j.is_array() || j.size() != 2)
        throw SpecError("a range must be a two-element array");
    return {j[0].get<int>(), j[1].get<int>()};
}

inline void reject_unknown_keys(const io::json &j, std::initializer_list<const char *> allowed, const std::string &where)
{
    for (const auto &[key, _] : j.items())
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char *a) { return key == a; }))
            throw SpecError("unknown key '" + key + "' in " + where);
}

} // namespace detail

/// Paths inside the JSON are resolved against `base_dir`.
inline ExperimentConfig experiment_from_json(const io::json &j, const std::filesystem::path &base_dir = {})
{
    ExperimentConfig c;
    try {
        detail::reject_unknown_keys(j,
                                    {"study", "datasets", "schedule", "repetitions", "seed", "robustification",
                                     "metrics", "probe", "dann", "robustness", "clustering"},
                                    "experiment config");
        auto path = [&](const std::string &p) {
            const std::filesystem::path q(p);
            return q.is_absolute() || base_dir.empty() ? q : base_dir / q;
        };
        if (j.contains("study"))
            c.study = parse_study(j["study"].get<std::string>());
        for (const auto &d : j.value("datasets", io::json::array())) {
            detail::reject_unknown_keys(d, {"name", "manifest", "synth", "dr_manifest"}, "dataset entry");
            DatasetSource s;
            s.name = d.at("name").get<std::string>();
            if (d.contains("manifest"))
                s.manifest = path(d["manifest"].get<std::string>());
            if (d.contains("synth"))
                s.synth = d["synth"].get<synth::ConfoundedGaussianSpec>();
            if (d.contains("dr_manifest"))
                s.dr_manifest = path(d["dr_manifest"].get<std::string>());
            c.datasets.push_back(std::move(s));
        }
        if (j.contains("schedule")) {
            const auto &s = j["schedule"];
            detail::reject_unknown_keys(s,
                                        {"name", "file", "n_splits", "cell_total", "val_per_center",
                                         "id_test_per_cell", "ood_per_cell", "n_ood_centers"},
                                        "schedule");
            ScheduleConfig d;
            c.schedule.name = s.value("name", d.name);
            if (s.contains("file")) {
                c.schedule.file = path(s["file"].get<std::string>());
                c.schedule.name = "file";
            }
            c.schedule.n_splits = s.value("n_splits", d.n_splits);
            c.schedule.cell_total = s.value("cell_total", d.cell_total);
            c.schedule.val_per_center = s.value("val_per_center", d.val_per_center);
            c.schedule.id_test_per_cell = s.value("id_test_per_cell", d.id_test_per_cell);
            c.schedule.ood_per_cell = s.value("ood_per_cell", d.ood_per_cell);
            c.schedule.n_ood_centers = s.value("n_ood_centers", d.n_ood_centers);
        }
        c.repetitions = j.value("repetitions", c.repetitions);
        c.seed = j.value("seed", c.seed);
        if (j.contains("robustification"))
            c.robustification = parse_robustification(j["robustification"].get<std::string>());
        if (j.contains("metrics")) {
            detail::reject_unknown_keys(j["metrics"], {"id", "ood"}, "metrics");
            c.metric_id = j["metrics"].value("id", true);
            c.metric_ood = j["metrics"].value("ood", true);
        }
        if (j.contains("probe"))
            detail::reject_unknown_keys(j["probe"], {"c_grid"}, "probe");
        if (j.contains("probe") && j["probe"].contains("c_grid"))
            c.c_grid = j["probe"]["c_grid"].get<std::vector<double>>();
        if (j.contains("dann"))
            c.dann = j["dann"].get<DannConfig>();
        if (j.contains("robustness")) {
            const auto &r = j["robustness"];
            detail::reject_unknown_keys(r, {"k_max", "k_range", "k", "bootstrap", "exclude_same_case"}, "robustness");
            c.robustness.k_max = r.value("k_max", c.robustness.k_max);
            if (r.contains("k_range"))
                c.robustness.k_range = detail::parse_range(r["k_range"]);
            if (r.contains("k") && !r["k"].is_null())
                c.robustness.k = r["k"].get<int>();
            c.robustness.bootstrap = r.value("bootstrap", c.robustness.bootstrap);
            c.robustness.exclude_same_case = r.value("exclude_same_case", c.robustness.exclude_same_case);
        }
        if (j.contains("clustering")) {
            const auto &k = j["clustering"];
            detail::reject_unknown_keys(k, {"k_range", "select_inits", "final_inits", "trials", "max_iter"},
                                        "clustering");
            if (k.contains("k_range"))
                c.clustering.k_range = detail::parse_range(k["k_range"]);
            c.clustering.select_inits = k.value("select_inits", c.clustering.select_inits);
            c.clustering.final_inits = k.value("final_inits", c.clustering.final_inits);
            c.clustering.trials = k.value("trials", c.clustering.trials);
            c.clustering.max_iter = k.value("max_iter", c.clustering.max_iter);
        }
    } catch (const io::json::exception &e) {
        throw SpecError(std::string("malformed experiment config: ") + e.what());
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Report bundle

struct Record
{
    std::string dataset;
    int split = 0; // 1-based; 0 = not split-specific
    std::optional<double> v;
    int repetition = -1; // -1 = not repetition-specific
    std::string method;
    std::string metric;
    std::optional<double> value;
    std::string status = "ok";
};

struct Aggregate
{
    std::string metric;
    int split = 0;
    std::string method;
    double mean = 0.0;
    std::optional<double> half_width;
    std::size_t n = 0;
    std::size_t excluded = 0; // records left out (failed, undefined or unbalanced)
};

struct ReportBundle
{
    std::string study;
    std::vector<Record> records;
    std::vector<Aggregate> aggregates;
    io::json provenance;
    std::map<std::string, std::string> figures; // file name -> CSV text

    [[nodiscard]] std::string raw_csv() const
    {
        io::CsvWriter w({"dataset", "split", "v", "repetition", "method", "metric", "value", "status"});
        for (const auto &r : records)
            w.add({r.dataset, std::to_string(r.split), format_optional(r.v), std::to_string(r.repetition), r.method,
                   r.metric, format_optional(r.value), r.status});
        return w.str();
    }

    [[nodiscard]] io::json to_json() const
    {
        io::json aggs = io::json::array();
        for (const auto &a : aggregates) {
            io::json e = {{"metric", a.metric}, {"split", a.split},  {"method", a.method},
                          {"mean", a.mean},     {"n", a.n},          {"excluded", a.excluded}};
            e["ci_half_width"] = a.half_width ? io::json(*a.half_width) : io::json(nullptr);
            aggs.push_back(e);
        }
        std::size_t failed = 0;
        for (const auto &r : records)
            failed += r.status != "ok";
        return {{"study", study},
                {"aggregates", aggs},
                {"records", records.size()},
                {"failed_records", failed},
                {"provenance", provenance}};
    }

    /// Finds an aggregate; throws when missing.
    [[nodiscard]] const Aggregate &aggregate(const std::string &metric, int split = 0) const
    {
        for (const auto &a : aggregates)
            if (a.metric == metric && a.split == split)
                return a;
        throw RangeError("no aggregate for metric '" + metric + "' split " + std::to_string(split));
    }

    void save(const std::filesystem::path &dir) const
    {
        io::ensure_directory(dir);
        io::write_json(dir / "bundle.json", to_json());
        io::write_text(dir / "raw.csv", raw_csv());
        for (const auto &[name, text] : figures)
            io::write_text(dir / name, text);
    }
};

namespace detail
{

inline io::json provenance(const ExperimentConfig &cfg)
{
    const io::json c = to_json(cfg);
    return {{"config", c},
            {"config_hash", io::sha256_hex(c.dump())},
            {"seed", cfg.seed},
            {"toolkit_version", kVersion}};
}

/// Groups ok records by (metric, split, method) and computes the
/// dataset-corrected CI over the repetitions every dataset completed.
inline std::vector<Aggregate> aggregate_records(const std::vector<Record> &records)
{
    using Key = std::tuple<std::string, int, std::string>;
    std::map<Key, std::vector<const Record *>> groups;
    for (const auto &r : records)
        groups[{r.metric, r.split, r.method}].push_back(&r);
    std::vector<Aggregate> out;
    for (const auto &[key, recs] : groups) {
        std::map<std::string, std::map<int, double>> by_ds;
        std::set<std::string> datasets;
        for (const auto *r : recs) {
            datasets.insert(r->dataset);
            if (r->status == "ok" && r->value)
                by_ds[r->dataset][r->repetition] = *r->value;
        }
        Aggregate a;
        std::tie(a.metric, a.split, a.method) = key;
        if (by_ds.size() != datasets.size()) {
            a.excluded = recs.size();
            out.push_back(a);
            continue;
        }
        std::set<int> common;
        for (const auto &[rep, v] : by_ds.begin()->second)
            common.insert(rep);
        for (const auto &[ds, reps] : by_ds)
            for (auto it = common.begin(); it != common.end();)
                it = reps.count(*it) ? std::next(it) : common.erase(it);
        std::map<std::pair<std::string, int>, double> values;
        for (const auto &[ds, reps] : by_ds)
            for (int rep : common)
                values[{ds, rep}] = reps.at(rep);
        a.excluded = recs.size() - values.size();
        if (!values.empty()) {
            const auto ci = within_dataset_ci(values);
            a.mean = ci.mean;
            a.half_width = ci.half_width;
            a.n = ci.n;
        }
        out.push_back(a);
    }
    return out;
}

struct Prepared
{
    EmbeddingDataset train, val;
    std::vector<EmbeddingDataset> evals;
};

/// Feature-space or training-time robustification of one split. Evaluation
/// sets never influence the fitted correction.
inline Prepared robustify_split(Robustification method, EmbeddingDataset train, EmbeddingDataset val,
                                std::vector<EmbeddingDataset> evals, const DannConfig &dann, std::uint64_t seed)
{
    Prepared p;
    if (method == Robustification::RR || method == Robustification::DR_RR) {
        p.train = combat_fit_transform(train).corrected;
        p.val = combat_apply_reference(p.train, val);
        for (auto &e : evals)
            p.evals.push_back(combat_apply_reference(p.train, e));
    } else if (method == Robustification::TR || method == Robustification::DR_TR) {
        DannConfig cfg = dann;
        cfg.seed = seed;
        const DannModel model = dann_train(train, val, cfg);
        p.train = dann_embed(model, train);
        p.val = dann_embed(model, val);
        for (auto &e : evals)
            p.evals.push_back(dann_embed(model, e));
    } else {
        p.train = std::move(train);
        p.val = std::move(val);
        p.evals = std::move(evals);
    }
    return p;
}

/// Whole-dataset robustification for the neighborhood and clustering studies.
inline EmbeddingDataset robustify_dataset(Robustification method, const EmbeddingDataset &ds, const DannConfig &dann,
                                          std::uint64_t seed)
{
    if (method == Robustification::RR || method == Robustification::DR_RR)
        return combat_fit_transform(ds).corrected;
    if (method == Robustification::TR || method == Robustification::DR_TR) {
        DannConfig cfg = dann;
        cfg.seed = seed;
        return dann_embed(dann_train(ds, ds, cfg), ds);
    }
    return ds;
}

inline SplitSchedule schedule_for(const ScheduleConfig &sc, const EmbeddingDataset &ds)
{
    if (sc.file)
        return schedule_from_json(io::read_json(*sc.file));
    if (sc.name != "generic")
        return canonical_schedule(sc.name);
    const auto &conf_vocab = ds.conf().vocab();
    if (sc.n_ood_centers >= conf_vocab.size())
        throw SpecError("n_ood_centers leaves no training centers");
    ScheduleExtras ex;
    ex.bio_vocab = ds.bio().vocab();
    ex.conf_vocab.assign(conf_vocab.begin(), conf_vocab.end() - static_cast<std::ptrdiff_t>(sc.n_ood_centers));
    ex.ood_centers.assign(conf_vocab.end() - static_cast<std::ptrdiff_t>(sc.n_ood_centers), conf_vocab.end());
    ex.val_per_center = sc.val_per_center;
    ex.id_test_per_cell = sc.id_test_per_cell;
    ex.ood_per_cell = sc.ood_per_cell;
    return build_split_schedule(ex.bio_vocab.size(), ex.conf_vocab.size(), sc.cell_total, sc.n_splits, ex);
}

inline std::string failure(const std::exception &e) { return std::string("failed: ") + e.what(); }

inline std::vector<EmbeddingDataset> load_all(const ExperimentConfig &cfg)
{
    std::vector<EmbeddingDataset> out;
    for (const auto &d : cfg.datasets)
        out.push_back(d.load(uses_dr(cfg.robustification)));
    return out;
}

/// Per-split relative change against split 1 and the APD, appended for one
/// (dataset, repetition) series of a metric.
inline void append_drops(std::vector<Record> &out, const std::vector<Record> &series, const std::string &metric)
{
    std::vector<const Record *> rs;
    for (const auto &r : series)
        if (r.metric == metric)
            rs.push_back(&r);
    if (rs.size() < 2)
        return;
    const Record &first = *rs.front();
    bool complete = true;
    std::vector<double> accs;
    for (const auto *r : rs) {
        if (r->status != "ok" || !r->value) {
            complete = false;
            continue;
        }
        accs.push_back(*r->value);
        Record d = *r;
        d.metric = "drop_" + metric;
        if (first.status == "ok" && first.value && *first.value != 0.0)
            d.value = (*r->value - *first.value) / *first.value;
        else {
            d.value.reset();
            d.status = "failed: baseline split unavailable";
        }
        out.push_back(d);
    }
    Record apd = first;
    apd.split = 0;
    apd.v.reset();
    apd.metric = "apd_" + metric;
    if (complete) {
        try {
            apd.value = average_performance_drop(accs);
        } catch (const Error &e) {
            apd.value.reset();
            apd.status = failure(e);
        }
    } else {
        apd.value.reset();
        apd.status = "failed: incomplete splits";
    }
    out.push_back(apd);
}

inline void add_split_figure(ReportBundle &b, const SplitSchedule &plans, const std::string &file)
{
    io::CsvWriter w({"split", "v", "method", "metric", "mean", "ci_half_width", "n"});
    for (const auto &a : b.aggregates)
        if (a.split > 0)
            w.add({std::to_string(a.split), format_double(plans[static_cast<std::size_t>(a.split - 1)].target_v),
                   a.method, a.metric, format_double(a.mean), format_optional(a.half_width), std::to_string(a.n)});
    b.figures[file] = w.str();
    io::CsvWriter s({"method", "metric", "mean", "ci_half_width", "n"});
    for (const auto &a : b.aggregates)
        if (a.split == 0)
            s.add({a.method, a.metric, format_double(a.mean), format_optional(a.half_width), std::to_string(a.n)});
    b.figures["summary.csv"] = s.str();
}

/// Runs fn(dataset index, repetition) for every unit in parallel and
/// concatenates the per-unit records in unit order.
template <class Fn>
std::vector<Record> run_units(std::size_t n_datasets, int repetitions, Fn &&fn)
{
    const std::size_t units = n_datasets * static_cast<std::size_t>(repetitions);
    std::vector<std::vector<Record>> slots(units);
    parallel_for(units, [&](std::size_t u) {
        slots[u] = fn(u / static_cast<std::size_t>(repetitions), static_cast<int>(u % static_cast<std::size_t>(repetitions)));
    });
    std::vector<Record> out;
    for (auto &s : slots)
        out.insert(out.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Studies

/// Probe accuracy across a spurious-correlation schedule, repeated with
/// fresh split materializations.
inline ReportBundle run_downstream_study(const ExperimentConfig &cfg)
{
    cfg.validate();
    const auto data = detail::load_all(cfg);
    std::vector<SplitSchedule> schedules;
    for (const auto &ds : data)
        schedules.push_back(detail::schedule_for(cfg.schedule, ds));
    const std::string method = to_string(cfg.robustification);

    ReportBundle bundle;
    bundle.study = "downstream";
    bundle.records = detail::run_units(data.size(), cfg.repetitions, [&](std::size_t d, int rep) {
        const auto &ds = data[d];
        const auto &plans = schedules[d];
        const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(rep);
        std::vector<Record> series;
        for (std::size_t t = 0; t < plans.size(); ++t) {
            Record base{cfg.datasets[d].name, static_cast<int>(t + 1), plans[t].target_v, rep, method, "", {}, "ok"};
            const bool has_ood = cfg.metric_ood && !plans[t].ood_test.empty() && plans[t].ood_test.total() > 0;
            try {
                const auto idx = materialize_split(ds, plans[t], seed);
                std::vector<EmbeddingDataset> evals{ds.subset(idx.id_test)};
                if (has_ood)
                    evals.push_back(ds.subset(idx.ood_test));
                auto prep = detail::robustify_split(cfg.robustification, ds.subset(idx.train), ds.subset(idx.val),
                                                    std::move(evals), cfg.dann, seed);
                const ProbeModel probe = fit_probe(prep.train, prep.val, LabelAxis::bio, cfg.c_grid);
                if (cfg.metric_id) {
                    Record r = base;
                    r.metric = "id_accuracy";
                    r.value = evaluate_probe(probe, prep.evals[0]).accuracy;
                    series.push_back(r);
                }
                if (has_ood) {
                    Record r = base;
                    r.metric = "ood_accuracy";
                    r.value = evaluate_probe(probe, prep.evals[1]).accuracy;
                    series.push_back(r);
                }
            } catch (const Error &e) {
                for (const char *m : {"id_accuracy", "ood_accuracy"}) {
                    if ((m[0] == 'i' && !cfg.metric_id) || (m[0] == 'o' && !has_ood))
                        continue;
                    Record r = base;
                    r.metric = m;
                    r.status = detail::failure(e);
                    series.push_back(r);
                }
            }
        }
        std::vector<Record> out = series;
        detail::append_drops(out, series, "id_accuracy");
        detail::append_drops(out, series, "ood_accuracy");
        return out;
    });
    bundle.aggregates = detail::aggregate_records(bundle.records);
    bundle.provenance = detail::provenance(cfg);
    detail::add_split_figure(bundle, schedules.front(), "accuracy_by_split.csv");
    return bundle;
}

/// 1-NN retrieval with the training split as database and the ID test split as queries.
inline ReportBundle run_retrieval_study(const ExperimentConfig &cfg)
{
    cfg.validate();
    const auto data = detail::load_all(cfg);
    std::vector<SplitSchedule> schedules;
    for (const auto &ds : data)
        schedules.push_back(detail::schedule_for(cfg.schedule, ds));
    const std::string method = to_string(cfg.robustification);
    ReportBundle bundle;
    bundle.study = "retrieval";
    bundle.records = detail::run_units(data.size(), cfg.repetitions, [&](std::size_t d, int rep) {
        const auto &ds = data[d];
        const auto &plans = schedules[d];
        const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(rep);
        std::vector<Record> series;
        for (std::size_t t = 0; t < plans.size(); ++t) {
            Record r{cfg.datasets[d].name, static_cast<int>(t + 1), plans[t].target_v, rep, method,
                     "retrieval_accuracy", {}, "ok"};
            try {
                const auto idx = materialize_split(ds, plans[t], seed);
                auto prep = detail::robustify_split(cfg.robustification, ds.subset(idx.train), ds.subset(idx.val),
                                                    {ds.subset(idx.id_test)}, cfg.dann, seed);
                r.value = retrieval_eval(prep.train, prep.evals[0]).accuracy;
            } catch (const Error &e) {
                r.status = detail::failure(e);
            }
            series.push_back(r);
        }
        std::vector<Record> out = series;
        detail::append_drops(out, series, "retrieval_accuracy");
        return out;
    });
    bundle.aggregates = detail::aggregate_records(bundle.records);
    bundle.provenance = detail::provenance(cfg);
    detail::add_split_figure(bundle, schedules.front(), "retrieval_by_split.csv");
    return bundle;
}

/// Neighborhood robustness per dataset at a common k (the lower median of the
/// per-dataset optimal k unless fixed), with bootstrap, per-class and
/// generalization index; the aggregate is the unweighted dataset mean.
inline ReportBundle run_robustness_study(const ExperimentConfig &cfg)
{
    cfg.validate();
    const auto raw = detail::load_all(cfg);
    const std::string method = to_string(cfg.robustification);
    const auto &rc = cfg.robustness;
    ReportBundle bundle;
    bundle.study = "robustness";

    std::vector<EmbeddingDataset> data;
    std::vector<NeighborTable> tables;
    std::vector<int> optimal;
    for (std::size_t d = 0; d < raw.size(); ++d) {
        data.push_back(l2_normalize(detail::robustify_dataset(cfg.robustification, raw[d], cfg.dann, cfg.seed)));
        tables.push_back(build_neighbor_table(data.back(), rc.k_max, rc.exclude_same_case));
        const IntRange range{std::max(1, rc.k_range.lo), std::min<int>(rc.k_range.hi, static_cast<int>(rc.k_max))};
        optimal.push_back(optimal_k_for_prediction(tables.back(), data.back(), range));
        bundle.records.push_back({cfg.datasets[d].name, 0, {}, -1, method, "optimal_k", optimal.back(), "ok"});
    }
    const int k = rc.k ? *rc.k : select_common_k(optimal);
    std::vector<double> indices;
    io::CsvWriter curves({"dataset", "k", "so_cum", "os_cum", "robustness_index"});
    for (std::size_t d = 0; d < data.size(); ++d) {
        const std::string &name = cfg.datasets[d].name;
        auto rec = [&](const std::string &metric) { return Record{name, 0, {}, -1, method, metric, {}, "ok"}; };
        bundle.records.push_back(rec("common_k"));
        bundle.records.back().value = k;
        const auto cats = categorize_neighbors(tables[d], data[d]);
        const auto curve = robustness_curve(cats);
        for (std::size_t j = 0; j < curve.k_max(); ++j)
            curves.add({name, std::to_string(j + 1), std::to_string(curve.so_cum[j]), std::to_string(curve.os_cum[j]),
                        format_optional(curve.r_of_k[j])});
        Record ri = rec("robustness_index");
        try {
            ri.value = robustness_index_at(curve, static_cast<std::size_t>(k));
            indices.push_back(*ri.value);
        } catch (const Error &e) {
            ri.status = detail::failure(e);
        }
        bundle.records.push_back(ri);
        Record bm = rec("bootstrap_mean"), bs = rec("bootstrap_std");
        try {
            const auto boot = bootstrap_robustness(cats, static_cast<std::size_t>(k), rc.bootstrap, cfg.seed);
            bm.value = boot.mean;
            bs.value = boot.std;
        } catch (const Error &e) {
            bm.status = bs.status = detail::failure(e);
        }
        bundle.records.push_back(bm);
        bundle.records.push_back(bs);
        for (const auto &[cls, v] : robustness_per_class(cats, data[d], static_cast<std::size_t>(k), LabelAxis::bio)) {
            Record r = rec("robustness_index_class:" + cls);
            r.value = v;
            if (!v)
                r.status = "undefined";
            bundle.records.push_back(r);
        }
        Record g = rec("generalization_index");
        try {
            g.value = generalization_index(cats, static_cast<std::size_t>(k));
        } catch (const Error &e) {
            g.status = detail::failure(e);
        }
        bundle.records.push_back(g);
    }
    for (const char *metric : {"robustness_index", "generalization_index", "bootstrap_mean"}) {
        Aggregate a;
        a.metric = metric;
        a.method = method;
        double sum = 0.0;
        for (const auto &r : bundle.records)
            if (r.metric == metric) {
                if (r.status == "ok" && r.value) {
                    sum += *r.value;
                    ++a.n;
                } else {
                    ++a.excluded;
                }
            }
        if (a.n > 0)
            a.mean = sum / static_cast<double>(a.n);
        bundle.aggregates.push_back(a);
    }
    bundle.provenance = detail::provenance(cfg);
    bundle.figures["robustness_curves.csv"] = curves.str();
    io::CsvWriter s({"dataset", "metric", "value"});
    for (const auto &r : bundle.records)
        s.add({r.dataset, r.metric, format_optional(r.value)});
    bundle.figures["robustness_summary.csv"] = s.str();
    return bundle;
}

/// Clustering score per dataset; the trials play the role of repetitions.
inline ReportBundle run_clustering_study(const ExperimentConfig &cfg)
{
    cfg.validate();
    const auto raw = detail::load_all(cfg);
    const std::string method = to_string(cfg.robustification);
    ReportBundle bundle;
    bundle.study = "clustering";
    io::CsvWriter fig({"dataset", "K_star", "silhouette", "ari_bio", "ari_conf", "mean", "std"});
    for (std::size_t d = 0; d < raw.size(); ++d) {
        const std::string &name = cfg.datasets[d].name;
        ClusteringConfig cc = cfg.clustering;
        cc.seed = cfg.seed;
        try {
            const auto ds = detail::robustify_dataset(cfg.robustification, raw[d], cfg.dann, cfg.seed);
            const auto score = clustering_score(ds, cc);
            for (std::size_t t = 0; t < score.trial_scores.size(); ++t) {
                const int rep = static_cast<int>(t);
                bundle.records.push_back({name, 0, {}, rep, method, "clustering_score", score.trial_scores[t], "ok"});
                bundle.records.push_back({name, 0, {}, rep, method, "ari_bio", score.trial_ari_bio[t], "ok"});
                bundle.records.push_back({name, 0, {}, rep, method, "ari_conf", score.trial_ari_conf[t], "ok"});
            }
            bundle.records.push_back({name, 0, {}, -1, method, "K_star", score.K_star, "ok"});
            bundle.records.push_back({name, 0, {}, -1, method, "silhouette", score.silhouette,
                                      score.low_silhouette ? "ok" : "ok"});
            fig.add({name, std::to_string(score.K_star), format_double(score.silhouette), format_double(score.ari_bio),
                     format_double(score.ari_conf), format_double(score.mean), format_double(score.std)});
            if (score.low_silhouette)
                log_warning("dataset '" + name + "': silhouette " + format_double(score.silhouette) +
                            " below 0.25, no substantial cluster structure");
        } catch (const Error &e) {
            bundle.records.push_back({name, 0, {}, -1, method, "clustering_score", {}, detail::failure(e)});
        }
    }
    std::vector<Record> trial_records;
    for (const auto &r : bundle.records)
        if (r.repetition >= 0 || r.status != "ok")
            trial_records.push_back(r);
    bundle.aggregates = detail::aggregate_records(trial_records);
    bundle.provenance = detail::provenance(cfg);
    bundle.figures["clustering_scores.csv"] = fig.str();
    return bundle;
}

inline ReportBundle run_study(const ExperimentConfig &cfg)
{
    switch (cfg.study) {
    case StudyKind::downstream: return run_downstream_study(cfg);
    case StudyKind::robustness: return run_robustness_study(cfg);
    case StudyKind::clustering: return run_clustering_study(cfg);
    case StudyKind::retrieval: return run_retrieval_study(cfg);
    }
    throw SpecError("unknown study");
}

// ---------------------------------------------------------------------------
// Correlation between two bundles

/// Mean of the ok values of `metric` per "dataset/method" key.
inline std::map<std::string, double> metric_series(const std::vector<Record> &records, const std::string &metric)
{
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (const auto &r : records)
        if (r.metric == metric && r.status == "ok" && r.value) {
            auto &[s, n] = acc[r.dataset + "/" + r.method];
            s += *r.value;
            ++n;
        }
    std::map<std::string, double> out;
    for (const auto &[k, sn] : acc)
        out[k] = sn.first / static_cast<double>(sn.second);
    return out;
}

/// Reads the records of a saved bundle back from raw.csv.
inline std::vector<Record> load_records(const std::filesystem::path &bundle_dir)
{
    const auto rows = io::parse_csv(io::read_text(bundle_dir / "raw.csv"));
    const io::CsvRow header{"dataset", "split", "v", "repetition", "method", "metric", "value", "status"};
    if (rows.empty() || rows.front() != header)
        throw FormatError("raw.csv in " + bundle_dir.string() + " has an unexpected header");
    auto opt = [](const std::string &s) -> std::optional<double> {
        if (s.empty() || s == "NA")
            return std::nullopt;
        return std::stod(s);
    };
    std::vector<Record> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto &r = rows[i];
        if (r.size() != header.size())
            throw FormatError("raw.csv row " + std::to_string(i) + " malformed");
        out.push_back({r[0], std::stoi(r[1]), opt(r[2]), std::stoi(r[3]), r[4], r[5], opt(r[6]), r[7]});
    }
    return out;
}

struct CorrelationReport
{
    std::vector<std::string> keys;
    std::vector<double> x, y;
    CorrelationTest test;
};

/// Spearman rho between two metric series matched by key, with a seeded
/// two-sided permutation p-value.
inline CorrelationReport run_correlation_report(const std::map<std::string, double> &a,
                                                const std::map<std::string, double> &b,
                                                std::size_t permutations = kDefaultPermutations,
                                                std::uint64_t seed = 0)
{
    if (a.size() != b.size() || !std::equal(a.begin(), a.end(), b.begin(),
                                            [](const auto &p, const auto &q) { return p.first == q.first; }))
        throw InvariantError("correlation inputs have different keys");
    if (a.size() < 3)
        throw RangeError("correlation needs at least 3 matched keys");
    CorrelationReport rep;
    for (const auto &[k, v] : a) {
        rep.keys.push_back(k);
        rep.x.push_back(v);
        rep.y.push_back(b.at(k));
    }
    rep.test = spearman_permutation_test(rep.x, rep.y, permutations, seed);
    return rep;
}

} // namespace robustbench

#endif
