#include "helpers.hpp"

#include <algorithm>
#include <numeric>

using namespace rbtest;

namespace
{

DatasetSource synth_source(const std::string &name, double s_bio, double s_conf, double sigma, std::size_t per_cell,
                           std::uint64_t seed, std::size_t n_conf = 2)
{
    synth::ConfoundedGaussianSpec s;
    s.n_bio_classes = 2;
    s.n_conf_classes = n_conf;
    s.per_cell = per_cell;
    s.bio_strength = s_bio;
    s.conf_strength = s_conf;
    s.noise_sigma = sigma;
    s.seed = seed;
    DatasetSource d;
    d.name = name;
    d.synth = s;
    return d;
}

ExperimentConfig downstream_config(int reps)
{
    ExperimentConfig c;
    c.study = StudyKind::downstream;
    c.datasets = {synth_source("a", 2.0, 3.0, 1.0, 160, 1), synth_source("b", 2.5, 2.0, 1.0, 160, 2)};
    c.schedule.n_splits = 3;
    c.schedule.cell_total = 60;
    c.schedule.val_per_center = 20;
    c.schedule.id_test_per_cell = 20;
    c.repetitions = reps;
    c.seed = 4;
    c.c_grid = {1e-2, 1.0, 1e2};
    return c;
}

ExperimentConfig robustness_config(std::vector<DatasetSource> sources)
{
    ExperimentConfig c;
    c.study = StudyKind::robustness;
    c.datasets = std::move(sources);
    c.robustness.k_max = 10;
    c.robustness.k_range = {1, 10};
    c.robustness.k = 5;
    c.robustness.bootstrap = 20;
    return c;
}

} // namespace

TEST(Pipeline, RobustificationNames)
{
    EXPECT_EQ(parse_robustification("none"), Robustification::none);
    EXPECT_EQ(parse_robustification("combat"), Robustification::RR);
    EXPECT_EQ(parse_robustification("DANN"), Robustification::TR);
    EXPECT_EQ(parse_robustification("reinhard+combat"), Robustification::DR_RR);
    for (auto r : {Robustification::none, Robustification::DR, Robustification::RR, Robustification::TR,
                   Robustification::DR_RR, Robustification::DR_TR})
        EXPECT_EQ(parse_robustification(to_string(r)), r);
    EXPECT_TRUE(uses_dr(Robustification::DR_TR));
    EXPECT_FALSE(uses_dr(Robustification::RR));
    EXPECT_THROW(parse_robustification("magic"), SpecError);
    EXPECT_THROW(parse_study("nope"), SpecError);
}

TEST(Pipeline, ConfigJsonRoundTripAndValidation)
{
    auto c = downstream_config(3);
    c.robustness.k = 7;
    c.dann.epochs = 3;
    const auto back = experiment_from_json(to_json(c));
    EXPECT_EQ(to_json(back).dump(), to_json(c).dump());

    auto j = to_json(c);
    j["surprise"] = 1;
    EXPECT_THROW(experiment_from_json(j), SpecError);
    j = to_json(c);
    j["schedule"]["n_splitz"] = 3;
    EXPECT_THROW(experiment_from_json(j), SpecError);
    j = to_json(c);
    j["robustness"]["kk"] = 3;
    EXPECT_THROW(experiment_from_json(j), SpecError);
    j = to_json(c);
    j["repetitions"] = 0;
    EXPECT_THROW(experiment_from_json(j), SpecError);
    j = to_json(c);
    j["datasets"][1]["name"] = "a";
    EXPECT_THROW(experiment_from_json(j), SpecError);
    j = to_json(c);
    j["repetitions"] = "many";
    EXPECT_THROW(experiment_from_json(j), SpecError);

    io::json rel = {{"datasets", {{{"name", "x"}, {"manifest", "data/x.json"}}}}};
    const auto r = experiment_from_json(rel, "/base");
    EXPECT_EQ(*r.datasets[0].manifest, std::filesystem::path("/base/data/x.json"));
}

TEST(Pipeline, AggregatesMatchRecomputation)
{
    const auto bundle = run_study(downstream_config(3));
    ASSERT_FALSE(bundle.aggregates.empty());
    for (const auto &a : bundle.aggregates) {
        std::map<std::string, std::vector<double>> by_ds;
        for (const auto &r : bundle.records)
            if (r.metric == a.metric && r.split == a.split && r.method == a.method && r.status == "ok" && r.value)
                by_ds[r.dataset].push_back(*r.value);
        ASSERT_EQ(by_ds.size(), 2u) << a.metric;
        std::vector<double> corrected;
        double grand = 0;
        std::size_t n = 0;
        for (const auto &[ds, v] : by_ds) {
            grand += std::accumulate(v.begin(), v.end(), 0.0);
            n += v.size();
        }
        grand /= double(n);
        for (const auto &[ds, v] : by_ds) {
            const double m = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
            for (double x : v)
                corrected.push_back(x - m + grand);
        }
        double ss = 0;
        for (double x : corrected)
            ss += (x - grand) * (x - grand);
        // t(0.975, 5) = 2.570581836 from tables.
        const double half = 2.570581836 * std::sqrt(ss / 5.0) / std::sqrt(6.0);
        EXPECT_EQ(a.n, 6u);
        EXPECT_NEAR(a.mean, grand, 1e-9) << a.metric;
        ASSERT_TRUE(a.half_width.has_value());
        EXPECT_NEAR(*a.half_width, half, 1e-9) << a.metric;
    }
    EXPECT_NO_THROW((void)bundle.aggregate("id_accuracy", 1));
    EXPECT_NO_THROW((void)bundle.aggregate("apd_id_accuracy"));
    EXPECT_THROW((void)bundle.aggregate("nonexistent"), RangeError);
}

TEST(Pipeline, DropRecordsFollowDefinition)
{
    const auto bundle = run_study(downstream_config(2));
    for (const auto &r : bundle.records) {
        if (r.metric != "apd_id_accuracy")
            continue;
        std::vector<double> accs(3);
        for (const auto &q : bundle.records)
            if (q.metric == "id_accuracy" && q.dataset == r.dataset && q.repetition == r.repetition)
                accs[static_cast<std::size_t>(q.split - 1)] = *q.value;
        EXPECT_NEAR(*r.value, average_performance_drop(accs), 1e-12);
    }
}

TEST(Pipeline, SingleRepetitionHasNoHalfWidth)
{
    auto c = downstream_config(1);
    c.datasets.pop_back();
    const auto bundle = run_study(c);
    EXPECT_FALSE(bundle.aggregate("id_accuracy", 1).half_width.has_value());
    EXPECT_TRUE(bundle.to_json()["aggregates"][0]["ci_half_width"].is_null());
}

TEST(Pipeline, BundlesAreDeterministic)
{
    const auto a = run_study(downstream_config(2));
    const auto b = run_study(downstream_config(2));
    EXPECT_EQ(a.raw_csv(), b.raw_csv());
    EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
    set_thread_count(3);
    const auto c = run_study(downstream_config(2));
    set_thread_count(0);
    EXPECT_EQ(a.raw_csv(), c.raw_csv());
}

TEST(Pipeline, FailedUnitsAreMarkedNotFatal)
{
    auto c = downstream_config(2);
    c.datasets[1] = synth_source("b", 2.5, 2.0, 1.0, 30, 2); // too small for the schedule
    const auto bundle = run_study(c);
    bool failed = false;
    for (const auto &r : bundle.records)
        if (r.dataset == "b" && r.metric == "id_accuracy") {
            EXPECT_EQ(r.status.rfind("failed: ", 0), 0u);
            failed = true;
        }
    EXPECT_TRUE(failed);
    EXPECT_GT(bundle.aggregate("id_accuracy", 1).excluded, 0u);
    EXPECT_GT(bundle.to_json()["failed_records"].get<int>(), 0);
}

TEST(Pipeline, SaveAndReloadRecords)
{
    const auto bundle = run_study(downstream_config(2));
    TempDir dir;
    bundle.save(dir.path() / "bundle");
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "bundle" / "bundle.json"));
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "bundle" / "accuracy_by_split.csv"));
    const auto records = load_records(dir.path() / "bundle");
    ASSERT_EQ(records.size(), bundle.records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        EXPECT_EQ(records[i].metric, bundle.records[i].metric);
        EXPECT_EQ(records[i].value, bundle.records[i].value);
        EXPECT_EQ(records[i].v, bundle.records[i].v);
    }
    const auto prov = bundle.provenance;
    EXPECT_EQ(prov["toolkit_version"], kVersion);
    EXPECT_EQ(prov["config_hash"].get<std::string>().size(), 64u);
}

TEST(Pipeline, RobustnessAggregateIsDatasetMean)
{
    const auto bundle = run_study(robustness_config(
        {synth_source("bio", 10.0, 0.0, 0.1, 60, 1), synth_source("conf", 0.0, 10.0, 0.1, 60, 2)}));
    std::map<std::string, double> ri;
    for (const auto &r : bundle.records)
        if (r.metric == "robustness_index")
            ri[r.dataset] = *r.value;
    EXPECT_EQ(ri.at("bio"), 1.0);
    EXPECT_EQ(ri.at("conf"), 0.0);
    EXPECT_DOUBLE_EQ(bundle.aggregate("robustness_index").mean, 0.5);
    EXPECT_TRUE(bundle.figures.count("robustness_curves.csv"));
}

TEST(Pipeline, CombatRaisesRobustnessOnConfHeavyData)
{
    auto c = robustness_config({synth_source("heavy", 1.5, 4.0, 1.0, 80, 3, 3)});
    c.robustness.k = std::nullopt;
    const double before = run_study(c).aggregate("robustness_index").mean;
    c.robustification = Robustification::RR;
    const double after = run_study(c).aggregate("robustness_index").mean;
    EXPECT_GT(after, before);
}

TEST(Pipeline, ClusteringAndRetrievalStudiesRun)
{
    auto c = robustness_config({synth_source("x", 5.0, 0.0, 0.5, 40, 1)});
    c.study = StudyKind::clustering;
    c.clustering.k_range = {2, 4};
    c.clustering.trials = 3;
    c.clustering.select_inits = 3;
    const auto cl = run_study(c);
    EXPECT_GT(cl.aggregate("clustering_score").mean, 0.9);
    EXPECT_EQ(cl.aggregate("clustering_score").n, 3u);

    auto r = downstream_config(2);
    r.study = StudyKind::retrieval;
    const auto rb = run_study(r);
    EXPECT_NO_THROW((void)rb.aggregate("retrieval_accuracy", 1));
    EXPECT_NO_THROW((void)rb.aggregate("apd_retrieval_accuracy"));
}

TEST(Pipeline, CorrelationReport)
{
    const std::map<std::string, double> a{{"p", 1}, {"q", 2}, {"r", 3}, {"s", 4}};
    const std::map<std::string, double> up{{"p", 10}, {"q", 20}, {"r", 35}, {"s", 90}};
    const std::map<std::string, double> down{{"p", 4}, {"q", 3}, {"r", 2}, {"s", 1}};
    EXPECT_EQ(*run_correlation_report(a, up, 100).test.rho, 1.0);
    EXPECT_EQ(*run_correlation_report(a, down, 100).test.rho, -1.0);
    const std::map<std::string, double> other{{"p", 1}, {"q", 2}, {"r", 3}, {"t", 4}};
    EXPECT_THROW(run_correlation_report(a, other), InvariantError);
    const std::map<std::string, double> flat{{"p", 1}, {"q", 1}, {"r", 1}, {"s", 1}};
    EXPECT_FALSE(run_correlation_report(a, flat, 100).test.rho.has_value());

    std::vector<Record> recs{{"d1", 0, {}, -1, "none", "m", 0.5, "ok"},
                             {"d1", 0, {}, -1, "none", "m", 0.7, "ok"},
                             {"d2", 0, {}, -1, "none", "m", 0.1, "ok"},
                             {"d2", 0, {}, -1, "none", "m", {}, "failed: x"}};
    const auto series = metric_series(recs, "m");
    EXPECT_NEAR(series.at("d1/none"), 0.6, 1e-12);
    EXPECT_EQ(series.at("d2/none"), 0.1);
}

TEST(Pipeline, PermutationPValueMatchesExactEnumeration)
{
    const std::vector<double> x{0.3, 0.9, 0.1, 0.5, 0.7, 0.2, 0.8, 0.4};
    const std::vector<double> y{0.2, 0.6, 0.3, 0.4, 0.9, 0.1, 0.5, 0.8};
    const double obs = std::abs(*spearman(x, y));
    std::vector<double> perm = y;
    std::sort(perm.begin(), perm.end());
    std::size_t hit = 0, total = 0;
    do {
        hit += std::abs(*spearman(x, perm)) >= obs - 1e-12;
        ++total;
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_EQ(total, 40320u);
    const auto t = spearman_permutation_test(x, y, 50000, 1);
    EXPECT_NEAR(*t.p_value, double(hit) / double(total), 0.01);
}
