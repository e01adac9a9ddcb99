// robustbench command-line tool.
//
// Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 runtime failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "robustbench/robustbench.hpp"

namespace fs = std::filesystem;
using namespace robustbench;

namespace
{

struct Common
{
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    std::size_t threads = 0;
};

void add_common(CLI::App *sub, Common &c, bool with_out = true)
{
    sub->add_option("--config", c.config, "JSON file with flag values (flags on the command line win)");
    sub->add_option("--seed", c.seed, "Seed for all randomness");
    if (with_out)
        sub->add_option("--out", c.out, "Output directory (created if absent)");
    sub->add_option("--threads", c.threads, "Worker threads (default: ROBUSTBENCH_THREADS or all cores)");
}

using Row = std::vector<std::string>;

void print_table(const Row &header, const std::vector<Row> &rows)
{
    std::vector<std::size_t> w(header.size());
    for (std::size_t c = 0; c < header.size(); ++c)
        w[c] = header[c].size();
    for (const auto &r : rows)
        for (std::size_t c = 0; c < r.size() && c < w.size(); ++c)
            w[c] = std::max(w[c], r[c].size());
    auto line = [&](const Row &r) {
        for (std::size_t c = 0; c < r.size(); ++c)
            std::cout << (c ? "  " : "") << std::left << std::setw(static_cast<int>(w[c])) << r[c];
        std::cout << '\n';
    };
    line(header);
    Row rule;
    for (auto n : w)
        rule.emplace_back(n, '-');
    line(rule);
    for (const auto &r : rows)
        line(r);
}

std::string fmt(double x)
{
    std::ostringstream s;
    s << std::setprecision(4) << std::fixed << x;
    return s.str();
}

std::string fmt(const std::optional<double> &x) { return x ? fmt(*x) : "NA"; }

fs::path out_dir(const Common &c)
{
    const fs::path p = c.out.empty() ? fs::path(".") : fs::path(c.out);
    io::ensure_directory(p);
    return p;
}

/// Effective values of every option of the selected subcommand chain.
io::json effective_config(CLI::App *app)
{
    io::json j = io::json::object();
    for (const CLI::Option *opt : app->get_options()) {
        const std::string name = opt->get_name(false, true);
        if (name == "--help" || name.empty())
            continue;
        const std::string key = name.substr(name.find_first_not_of('-'));
        if (opt->count() > 0) {
            const auto &res = opt->results();
            j[key] = res.size() == 1 ? io::json(res.front()) : io::json(res);
        } else if (opt->get_type_size() == 0) {
            j[key] = false;
        } else {
            j[key] = opt->get_default_str();
        }
    }
    return j;
}

/// Flat JSON config -> command-line tokens.
std::vector<std::string> config_tokens(const fs::path &path)
{
    const io::json j = io::read_json(path);
    if (!j.is_object())
        throw FormatError("config " + path.string() + " must be a JSON object");
    std::vector<std::string> out;
    for (const auto &[key, value] : j.items()) {
        if (key == "config")
            continue;
        const std::string flag = "--" + key;
        if (value.is_boolean()) {
            if (value.get<bool>())
                out.push_back(flag);
        } else if (value.is_array()) {
            for (const auto &v : value) {
                out.push_back(flag);
                out.push_back(v.is_string() ? v.get<std::string>() : v.dump());
            }
        } else {
            out.push_back(flag);
            out.push_back(value.is_string() ? value.get<std::string>() : value.dump());
        }
    }
    return out;
}

EmbeddingDataset load(const std::string &manifest)
{
    if (manifest.empty())
        throw SpecError("a dataset manifest is required");
    return load_dataset(manifest);
}

std::vector<Row> cell_rows(const EmbeddingDataset &ds)
{
    const auto cells = cell_index(ds);
    std::vector<Row> rows;
    for (const auto &[key, idx] : cells)
        rows.push_back({ds.bio().vocab()[static_cast<std::size_t>(key.first)],
                        ds.conf().vocab()[static_cast<std::size_t>(key.second)], std::to_string(idx.size())});
    return rows;
}

SplitSchedule schedule_by_name(const std::string &name, const ScheduleConfig &generic,
                               const EmbeddingDataset *ds)
{
    if (name.size() > 5 && name.substr(name.size() - 5) == ".json")
        return schedule_from_json(io::read_json(name));
    if (name != "generic")
        return canonical_schedule(name);
    if (ds)
        return detail::schedule_for(generic, *ds);
    ScheduleExtras ex;
    ex.val_per_center = generic.val_per_center;
    ex.id_test_per_cell = generic.id_test_per_cell;
    return build_split_schedule(2, 2, generic.cell_total, generic.n_splits, ex);
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"robustbench: robustness analysis of pathology foundation-model embeddings"};
    app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    // dataset ---------------------------------------------------------------
    Common c_dataset;
    std::string ds_manifest;
    std::size_t ds_per_cell = 0;
    bool ds_normalize = false;
    auto *dataset = app.add_subcommand("dataset", "Validate a dataset; optionally subsample or l2-normalize it");
    dataset->add_option("--manifest", ds_manifest, "Dataset manifest JSON")->required();
    dataset->add_option("--per-cell", ds_per_cell, "Balanced subsample size per (bio, conf) cell; 0 = off");
    dataset->add_flag("--normalize", ds_normalize, "Write the l2-normalized dataset");
    add_common(dataset, c_dataset);

    // synth -----------------------------------------------------------------
    Common c_synth;
    auto *synth_cmd = app.add_subcommand("synth", "Generate synthetic data");
    synth_cmd->require_subcommand(1);
    synth::ConfoundedGaussianSpec sg;
    auto *gaussian = synth_cmd->add_subcommand("gaussian", "Confounded Gaussian embeddings");
    gaussian->add_option("--n-bio", sg.n_bio_classes, "Biological classes");
    gaussian->add_option("--n-conf", sg.n_conf_classes, "Confounding classes");
    gaussian->add_option("--per-cell", sg.per_cell, "Samples per (bio, conf) cell");
    gaussian->add_option("--dim", sg.dim, "Embedding dimension");
    gaussian->add_option("--s-bio", sg.bio_strength, "Biological signal strength");
    gaussian->add_option("--s-conf", sg.conf_strength, "Confounding signal strength");
    gaussian->add_option("--sigma", sg.noise_sigma, "Noise standard deviation");
    add_common(gaussian, c_synth);
    std::size_t st_n = 20;
    int st_size = 32;
    std::vector<std::string> st_centers{"200,120,170,20,20,20", "170,100,200,20,20,20"};
    auto *stain = synth_cmd->add_subcommand("stain", "Stain-shifted RGB patches per center");
    stain->add_option("--n-per-center", st_n, "Patches per center");
    stain->add_option("--size", st_size, "Patch height and width");
    stain->add_option("--center", st_centers, "Center as R,G,B,SR,SG,SB (repeatable)")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    add_common(stain, c_synth);

    // knn -------------------------------------------------------------------
    Common c_knn;
    std::string knn_manifest;
    std::size_t knn_kmax = 100;
    int knn_klo = 1, knn_khi = 100;
    bool knn_no_excl = false;
    auto *knn = app.add_subcommand("knn", "Build a neighbor table and sweep k for biological prediction");
    knn->add_option("--manifest", knn_manifest, "Dataset manifest JSON")->required();
    knn->add_option("--k-max", knn_kmax, "Neighbors per query");
    knn->add_option("--k-min-sweep", knn_klo, "Smallest k in the sweep");
    knn->add_option("--k-max-sweep", knn_khi, "Largest k in the sweep (clipped to --k-max)");
    knn->add_flag("--no-case-exclusion", knn_no_excl, "Allow neighbors from the query's own case");
    add_common(knn, c_knn);

    // ri --------------------------------------------------------------------
    Common c_ri;
    std::string ri_manifest;
    int ri_k = 0;
    std::size_t ri_kmax = 100, ri_boot = 1000;
    bool ri_no_excl = false;
    auto *ri = app.add_subcommand("ri", "Robustness index curve, point value, bootstrap and per-class values");
    ri->add_option("--manifest", ri_manifest, "Dataset manifest JSON")->required();
    ri->add_option("--k", ri_k, "k for the point estimate; 0 = optimal k for prediction");
    ri->add_option("--k-max", ri_kmax, "Curve length");
    ri->add_option("--bootstrap", ri_boot, "Bootstrap replicates");
    ri->add_flag("--no-case-exclusion", ri_no_excl, "Allow neighbors from the query's own case");
    add_common(ri, c_ri);

    // cluster ---------------------------------------------------------------
    Common c_cluster;
    std::string cl_manifest;
    ClusteringConfig cl_cfg;
    bool cl_upper = false;
    auto *cluster = app.add_subcommand("cluster", "Clustering score with silhouette model selection");
    cluster->add_option("--manifest", cl_manifest, "Dataset manifest JSON")->required();
    cluster->add_option("--k-min", cl_cfg.k_range.lo, "Smallest K");
    cluster->add_option("--k-max", cl_cfg.k_range.hi, "Largest K");
    cluster->add_option("--select-inits", cl_cfg.select_inits, "k-means restarts during K selection");
    cluster->add_option("--final-inits", cl_cfg.final_inits, "k-means restarts per trial");
    cluster->add_option("--trials", cl_cfg.trials, "Clustering trials");
    cluster->add_option("--max-iter", cl_cfg.max_iter, "Lloyd iterations");
    cluster->add_flag("--upper-bound", cl_upper, "Also report the best score over K in [k-min, k-max]");
    add_common(cluster, c_cluster);

    // probe -----------------------------------------------------------------
    Common c_probe;
    std::string pr_train, pr_val, pr_test, pr_axis = "bio";
    auto *probe = app.add_subcommand("probe", "Fit a logistic-regression probe and evaluate it");
    probe->add_option("--train", pr_train, "Training manifest")->required();
    probe->add_option("--val", pr_val, "Validation manifest")->required();
    probe->add_option("--test", pr_test, "Test manifest");
    probe->add_option("--axis", pr_axis, "Target label axis (bio or conf)");
    add_common(probe, c_probe);

    // splits ----------------------------------------------------------------
    Common c_splits;
    auto *splits = app.add_subcommand("splits", "Spurious-correlation split schedules");
    splits->require_subcommand(1);
    std::string sp_schedule = "camelyon", sp_manifest;
    ScheduleConfig sp_generic;
    std::size_t sp_split = 1;
    auto add_schedule_opts = [&](CLI::App *s) {
        s->add_option("--schedule", sp_schedule, "camelyon, tcga, tolkach, generic or a schedule JSON file");
        s->add_option("--n-splits", sp_generic.n_splits, "Generic: number of splits");
        s->add_option("--cell-total", sp_generic.cell_total, "Generic: training samples per cell");
        s->add_option("--val-per-center", sp_generic.val_per_center, "Generic: validation samples per center");
        s->add_option("--id-test-per-cell", sp_generic.id_test_per_cell, "Generic: ID test samples per cell");
        s->add_option("--ood-per-cell", sp_generic.ood_per_cell, "Generic: OOD test samples per cell");
        s->add_option("--n-ood-centers", sp_generic.n_ood_centers, "Generic: trailing centers held out as OOD");
    };
    auto *show = splits->add_subcommand("show", "Print the contingency tables and their Cramer's V");
    add_schedule_opts(show);
    add_common(show, c_splits);
    auto *materialize = splits->add_subcommand("materialize", "Draw sample indices for one split");
    add_schedule_opts(materialize);
    materialize->add_option("--manifest", sp_manifest, "Dataset manifest JSON")->required();
    materialize->add_option("--split", sp_split, "1-based split number");
    add_common(materialize, c_splits);

    // robustify -------------------------------------------------------------
    Common c_rob;
    auto *robustify = app.add_subcommand("robustify", "Robustification methods");
    robustify->require_subcommand(1);
    std::string cb_manifest, cb_apply;
    auto *combat_cmd = robustify->add_subcommand("combat", "ComBat across confounding classes");
    combat_cmd->add_option("--manifest", cb_manifest, "Dataset manifest JSON")->required();
    combat_cmd->add_option("--apply", cb_apply, "Manifest adjusted against the corrected data as reference");
    add_common(combat_cmd, c_rob);
    std::string dn_train, dn_val, dn_apply;
    DannConfig dn_cfg;
    auto *dann_cmd = robustify->add_subcommand("dann", "Domain-adversarial training on embeddings");
    dann_cmd->add_option("--train", dn_train, "Training manifest")->required();
    dann_cmd->add_option("--val", dn_val, "Validation manifest")->required();
    dann_cmd->add_option("--apply", dn_apply, "Manifest to embed with the trained extractor");
    dann_cmd->add_option("--epochs", dn_cfg.epochs, "Epochs");
    dann_cmd->add_option("--batch-size", dn_cfg.batch_size, "Minibatch size");
    dann_cmd->add_option("--lr", dn_cfg.learning_rate, "Learning rate");
    dann_cmd->add_option("--momentum", dn_cfg.momentum, "SGD momentum");
    add_common(dann_cmd, c_rob);
    std::string rh_patches, rh_target;
    std::size_t rh_n = 500;
    auto *reinhard_cmd = robustify->add_subcommand("reinhard", "Reinhard stain normalization of patches");
    reinhard_cmd->add_option("--patches", rh_patches, "Patch set directory to normalize")->required();
    reinhard_cmd->add_option("--target", rh_target, "Patch set directory the target statistics are fitted on");
    reinhard_cmd->add_option("--n-sample", rh_n, "Patches sampled for the target");
    add_common(reinhard_cmd, c_rob);

    // pca -------------------------------------------------------------------
    Common c_pca;
    std::string pca_manifest;
    std::size_t pca_components = 0, pca_max = 10;
    double pca_fraction = 0.10;
    auto *pca = app.add_subcommand("pca", "Principal components and per-component separability");
    pca->add_option("--manifest", pca_manifest, "Dataset manifest JSON")->required();
    pca->add_option("--components", pca_components, "Components to fit; 0 = min(n, d)");
    pca->add_option("--fraction", pca_fraction, "Fraction of dimensions kept in the projection");
    pca->add_option("--max-pcs", pca_max, "Components scored for separability");
    add_common(pca, c_pca);

    // retrieve --------------------------------------------------------------
    Common c_ret;
    std::string rt_db, rt_q;
    auto *retrieve = app.add_subcommand("retrieve", "1-NN retrieval accuracy");
    retrieve->add_option("--database", rt_db, "Database manifest")->required();
    retrieve->add_option("--queries", rt_q, "Query manifest")->required();
    add_common(retrieve, c_ret);

    // study -----------------------------------------------------------------
    Common c_study;
    std::optional<int> st_reps;
    std::string st_rob, st_kind;
    auto *study = app.add_subcommand("study", "Run a full study from an experiment config");
    study->add_option("--config", c_study.config, "Experiment config JSON")->required();
    study->add_option("--seed", c_study.seed, "Base seed (overrides the config)");
    study->add_option("--repetitions", st_reps, "Repetitions (overrides the config)");
    study->add_option("--robustification", st_rob, "none, DR, RR, TR, DR+RR or DR+TR (overrides the config)");
    study->add_option("--study", st_kind, "downstream, robustness, clustering or retrieval (overrides the config)");
    study->add_option("--out", c_study.out, "Bundle directory (created if absent)");
    study->add_option("--threads", c_study.threads, "Worker threads");

    // report ----------------------------------------------------------------
    Common c_report;
    std::string rp_a, rp_b, rp_ma = "robustness_index", rp_mb = "apd_id_accuracy";
    std::size_t rp_perm = kDefaultPermutations;
    auto *report = app.add_subcommand("report", "Spearman correlation between metrics of two bundles");
    report->add_option("--bundle-a", rp_a, "First bundle directory")->required();
    report->add_option("--metric-a", rp_ma, "Metric taken from the first bundle");
    report->add_option("--bundle-b", rp_b, "Second bundle directory")->required();
    report->add_option("--metric-b", rp_mb, "Metric taken from the second bundle");
    report->add_option("--permutations", rp_perm, "Permutations for the p-value");
    add_common(report, c_report);

    // Expand a flat --config file into tokens placed before the user's flags.
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        std::size_t pos = 0;
        CLI::App *cur = &app;
        while (pos < args.size()) {
            CLI::App *next = cur->get_subcommand_no_throw(args[pos]);
            if (!next)
                break;
            cur = next;
            ++pos;
        }
        if (cur != study) {
            for (std::size_t i = pos; i < args.size(); ++i) {
                std::string path;
                if (args[i] == "--config" && i + 1 < args.size())
                    path = args[i + 1];
                else if (args[i].rfind("--config=", 0) == 0)
                    path = args[i].substr(9);
                if (!path.empty()) {
                    const auto extra = config_tokens(path);
                    args.insert(args.begin() + static_cast<std::ptrdiff_t>(pos), extra.begin(), extra.end());
                    break;
                }
            }
        }
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return dynamic_cast<const DataError *>(&e) ? 2 : 3;
    }

    try {
        std::vector<char *> cargv{argv[0]};
        for (auto &a : args)
            cargv.push_back(a.data());
        app.parse(static_cast<int>(cargv.size()), cargv.data());
    } catch (const CLI::Success &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return 1;
    }

    CLI::App *selected = &app;
    while (!selected->get_subcommands().empty())
        selected = selected->get_subcommands().front();
    std::cerr << "effective config (" << selected->get_name() << "): " << effective_config(selected).dump() << '\n';

    auto apply_threads = [](const Common &c) {
        if (c.threads > 0)
            set_thread_count(c.threads);
    };

    try {
        if (dataset->parsed()) {
            apply_threads(c_dataset);
            EmbeddingDataset ds = load(ds_manifest);
            print_table({"field", "value"}, {{"samples", std::to_string(ds.size())},
                                             {"dim", std::to_string(ds.dim())},
                                             {"bio classes", std::to_string(ds.bio().num_classes())},
                                             {"conf classes", std::to_string(ds.conf().num_classes())},
                                             {"checksum", dataset_checksum(ds)}});
            std::cout << '\n';
            print_table({"bio", "conf", "count"}, cell_rows(ds));
            if (ds_per_cell > 0 || ds_normalize) {
                if (ds_per_cell > 0)
                    ds = subsample_balanced(ds, ds_per_cell, c_dataset.seed);
                if (ds_normalize)
                    ds = l2_normalize(ds);
                const fs::path m = out_dir(c_dataset) / "dataset.json";
                save_dataset(ds, m);
                std::cout << "\nwrote " << m.string() << " (" << ds.size() << " samples)\n";
            }
        } else if (gaussian->parsed()) {
            apply_threads(c_synth);
            sg.seed = c_synth.seed;
            const auto ds = synth::generate_confounded_gaussian(sg);
            const fs::path m = out_dir(c_synth) / "dataset.json";
            save_dataset(ds, m);
            print_table({"field", "value"}, {{"manifest", m.string()},
                                             {"samples", std::to_string(ds.size())},
                                             {"dim", std::to_string(ds.dim())},
                                             {"checksum", dataset_checksum(ds)}});
        } else if (stain->parsed()) {
            apply_threads(c_synth);
            std::vector<synth::StainCenter> centers;
            for (const auto &s : st_centers) {
                std::vector<double> v;
                std::stringstream ss(s);
                for (std::string tok; std::getline(ss, tok, ',');)
                    v.push_back(std::stod(tok));
                if (v.size() != 6)
                    throw SpecError("--center needs six comma-separated values, got '" + s + "'");
                centers.push_back({{v[0], v[1], v[2]}, {v[3], v[4], v[5]}});
            }
            const auto set = synth::generate_stain_patches(st_n, centers, st_size, st_size, c_synth.seed);
            const fs::path dir = out_dir(c_synth);
            save_patch_set(set, dir);
            print_table({"field", "value"}, {{"directory", dir.string()},
                                             {"patches", std::to_string(set.size())},
                                             {"centers", std::to_string(centers.size())}});
        } else if (knn->parsed()) {
            apply_threads(c_knn);
            const auto ds = l2_normalize(load(knn_manifest));
            const auto table = build_neighbor_table(ds, knn_kmax, !knn_no_excl);
            const IntRange range{knn_klo, std::min<int>(knn_khi, static_cast<int>(table.k_max))};
            const auto sweep = sweep_k_for_prediction(table, ds, range);
            const fs::path dir = out_dir(c_knn);
            save_neighbor_table(table, dir / "neighbors.u32", dataset_checksum(ds));
            io::CsvWriter w({"k", "balanced_accuracy"});
            for (std::size_t i = 0; i < sweep.balanced_accuracy.size(); ++i)
                w.add({std::to_string(range.lo + static_cast<int>(i)), format_double(sweep.balanced_accuracy[i])});
            io::write_text(dir / "k_sweep.csv", w.str());
            print_table({"field", "value"},
                        {{"k_max", std::to_string(table.k_max)},
                         {"best k", std::to_string(sweep.best_k)},
                         {"balanced accuracy",
                          fmt(sweep.balanced_accuracy[static_cast<std::size_t>(sweep.best_k - range.lo)])}});
        } else if (ri->parsed()) {
            apply_threads(c_ri);
            const auto ds = l2_normalize(load(ri_manifest));
            const auto table = build_neighbor_table(ds, ri_kmax, !ri_no_excl);
            const int k = ri_k > 0 ? ri_k
                                   : optimal_k_for_prediction(table, ds, {1, static_cast<int>(table.k_max)});
            const auto cats = categorize_neighbors(table, ds);
            const auto curve = robustness_curve(cats);
            const double point = robustness_index_at(curve, static_cast<std::size_t>(k));
            const auto boot = bootstrap_robustness(cats, static_cast<std::size_t>(k), ri_boot, c_ri.seed);
            std::optional<double> g;
            try {
                g = generalization_index(cats, static_cast<std::size_t>(k));
            } catch (const DataError &e) {
                log_warning(std::string("generalization index unavailable: ") + e.what());
            }
            io::json per_class = io::json::object();
            for (const auto &[cls, v] : robustness_per_class(cats, ds, static_cast<std::size_t>(k), LabelAxis::bio))
                per_class[cls] = v ? io::json(*v) : io::json(nullptr);
            const fs::path dir = out_dir(c_ri);
            io::write_text(dir / "curve.csv", curve_csv(curve).str());
            io::json res = {{"k", k},          {"robustness_index", point}, {"mean", boot.mean},
                            {"std", boot.std}, {"bootstrap", ri_boot},      {"per_class", per_class}};
            res["generalization_index"] = g ? io::json(*g) : io::json(nullptr);
            io::write_json(dir / "ri.json", res);
            print_table({"k", "robustness_index", "bootstrap_mean", "bootstrap_std", "generalization_index"},
                        {{std::to_string(k), fmt(point), fmt(boot.mean), fmt(boot.std), fmt(g)}});
        } else if (cluster->parsed()) {
            apply_threads(c_cluster);
            const auto ds = load(cl_manifest);
            cl_cfg.seed = c_cluster.seed;
            const auto score = clustering_score(ds, cl_cfg);
            const fs::path dir = out_dir(c_cluster);
            io::CsvWriter w({"trial", "score", "ari_bio", "ari_conf"});
            for (std::size_t t = 0; t < score.trial_scores.size(); ++t)
                w.add({std::to_string(t), format_double(score.trial_scores[t]), format_double(score.trial_ari_bio[t]),
                       format_double(score.trial_ari_conf[t])});
            io::write_text(dir / "trials.csv", w.str());
            io::json res = {{"K_star", score.K_star},         {"silhouette", score.silhouette},
                            {"low_silhouette", score.low_silhouette}, {"ari_bio", score.ari_bio},
                            {"ari_conf", score.ari_conf},     {"mean", score.mean},
                            {"std", score.std}};
            std::vector<Row> rows{{std::to_string(score.K_star), fmt(score.silhouette), fmt(score.ari_bio),
                                   fmt(score.ari_conf), fmt(score.mean), fmt(score.std)}};
            if (cl_upper) {
                const auto ub = clustering_score_upper_bound(ds, cl_cfg.k_range, cl_cfg);
                res["upper_bound"] = {{"best_score", ub.best_score}, {"best_K", ub.best_K}};
                rows.push_back({std::to_string(ub.best_K), "-", "-", "-", fmt(ub.best_score), "upper bound"});
            }
            io::write_json(dir / "clustering.json", res);
            print_table({"K", "silhouette", "ari_bio", "ari_conf", "score", "std"}, rows);
        } else if (probe->parsed()) {
            apply_threads(c_probe);
            const auto axis = parse_axis(pr_axis);
            const auto model = fit_probe(load(pr_train), load(pr_val), axis);
            const fs::path dir = out_dir(c_probe);
            save_probe(model, dir / "probe.json");
            std::vector<Row> rows;
            for (const auto &[C, acc] : model.val_accuracy_by_C)
                rows.push_back({format_double(C), fmt(acc), C == model.chosen_C ? "*" : ""});
            print_table({"C", "val_accuracy", "chosen"}, rows);
            if (!pr_test.empty()) {
                const auto eval = evaluate_probe(model, load(pr_test));
                io::write_json(dir / "evaluation.json",
                               {{"accuracy", eval.accuracy}, {"unseen_labels", eval.unseen_labels}});
                io::CsvWriter w({"row", "prediction"});
                for (std::size_t i = 0; i < eval.predictions.size(); ++i)
                    w.add({std::to_string(i), eval.predictions[i]});
                io::write_text(dir / "predictions.csv", w.str());
                std::cout << "\ntest accuracy " << fmt(eval.accuracy) << '\n';
            }
        } else if (show->parsed()) {
            const auto plans = schedule_by_name(sp_schedule, sp_generic, nullptr);
            std::vector<Row> rows;
            for (std::size_t t = 0; t < plans.size(); ++t) {
                std::cout << "split " << t + 1 << "  V = " << fmt(cramers_v(plans[t].train)) << '\n'
                          << format_table(plans[t].train) << '\n';
                rows.push_back({std::to_string(t + 1), fmt(cramers_v(plans[t].train)),
                                std::to_string(plans[t].train.total())});
            }
            print_table({"split", "V", "train_total"}, rows);
            if (!c_splits.out.empty())
                io::write_json(out_dir(c_splits) / "schedule.json", schedule_to_json(sp_schedule, plans));
        } else if (materialize->parsed()) {
            const auto ds = load(sp_manifest);
            const auto plans = schedule_by_name(sp_schedule, sp_generic, &ds);
            if (sp_split < 1 || sp_split > plans.size())
                throw RangeError("--split must lie in [1, " + std::to_string(plans.size()) + "]");
            const auto idx = materialize_split(ds, plans[sp_split - 1], c_splits.seed);
            io::write_json(out_dir(c_splits) / "split.json", {{"split", sp_split},
                                                              {"v", plans[sp_split - 1].target_v},
                                                              {"train", idx.train},
                                                              {"val", idx.val},
                                                              {"id_test", idx.id_test},
                                                              {"ood_test", idx.ood_test}});
            print_table({"part", "samples"}, {{"train", std::to_string(idx.train.size())},
                                              {"val", std::to_string(idx.val.size())},
                                              {"id_test", std::to_string(idx.id_test.size())},
                                              {"ood_test", std::to_string(idx.ood_test.size())}});
        } else if (combat_cmd->parsed()) {
            apply_threads(c_rob);
            const auto res = combat_fit_transform(load(cb_manifest));
            const fs::path dir = out_dir(c_rob);
            save_dataset(res.corrected, dir / "corrected.json");
            save_combat(res.model, dir / "combat.json");
            std::vector<Row> rows{{"corrected", std::to_string(res.corrected.size())},
                                  {"batches", std::to_string(res.model.batch_vocab.size())},
                                  {"max EB iterations", std::to_string(*std::max_element(res.model.iterations.begin(),
                                                                                           res.model.iterations.end()))},
                                  {"uncorrected features", std::to_string(res.model.flagged_features())}};
            if (!cb_apply.empty()) {
                const auto adj = combat_apply_reference(res.corrected, load(cb_apply));
                save_dataset(adj, dir / "applied.json");
                rows.push_back({"applied", std::to_string(adj.size())});
            }
            print_table({"field", "value"}, rows);
        } else if (dann_cmd->parsed()) {
            apply_threads(c_rob);
            dn_cfg.seed = c_rob.seed;
            const auto train = load(dn_train);
            const auto model = dann_train(train, load(dn_val), dn_cfg);
            const fs::path dir = out_dir(c_rob);
            save_dann(model, dir / "dann.json");
            save_dataset(dann_embed(model, train), dir / "train_embedded.json");
            if (!dn_apply.empty())
                save_dataset(dann_embed(model, load(dn_apply)), dir / "applied.json");
            std::vector<Row> rows;
            for (const auto &e : model.training_log)
                rows.push_back({std::to_string(e.epoch), fmt(e.lambda), fmt(e.loss_cl), fmt(e.loss_da),
                                fmt(e.val_accuracy)});
            print_table({"epoch", "lambda", "loss_cl", "loss_da", "val_accuracy"}, rows);
        } else if (reinhard_cmd->parsed()) {
            apply_threads(c_rob);
            const auto patches = load_patch_set(rh_patches);
            const auto target = reinhard_fit_target(rh_target.empty() ? patches : load_patch_set(rh_target), rh_n,
                                                    c_rob.seed);
            const auto normalized = reinhard_apply(patches, target);
            const fs::path dir = out_dir(c_rob);
            save_patch_set(normalized, dir);
            io::write_json(dir / "target.json", reinhard_target_to_json(target));
            print_table({"channel", "target_mean", "target_std"}, {{"l", fmt(target.means[0]), fmt(target.stds[0])},
                                                                  {"alpha", fmt(target.means[1]), fmt(target.stds[1])},
                                                                  {"beta", fmt(target.means[2]), fmt(target.stds[2])}});
        } else if (pca->parsed()) {
            apply_threads(c_pca);
            const auto ds = load(pca_manifest);
            const std::size_t p = pca_components > 0 ? pca_components : std::min(ds.size(), ds.dim());
            const auto basis = pca_fit(ds, p);
            const auto sep = per_pc_separability(ds, basis, std::min(pca_max, basis.size()));
            const fs::path dir = out_dir(c_pca);
            io::write_text(dir / "separability.csv", separability_csv(sep));
            std::vector<double> ev(basis.explained_variance.data(),
                                   basis.explained_variance.data() + basis.explained_variance.size());
            io::write_json(dir / "pca.json", {{"components", p}, {"explained_variance", ev}});
            save_dataset(project_top_fraction(ds, basis, pca_fraction), dir / "projected.json");
            std::vector<Row> rows;
            for (const auto &s : sep)
                rows.push_back({std::to_string(s.pc), fmt(s.auroc_bio), fmt(s.auroc_conf),
                                s.polysemantic ? "yes" : "no"});
            print_table({"pc", "auroc_bio", "auroc_conf", "polysemantic"}, rows);
        } else if (retrieve->parsed()) {
            apply_threads(c_ret);
            const auto res = retrieval_eval(load(rt_db), load(rt_q));
            io::write_json(out_dir(c_ret) / "retrieval.json",
                           {{"accuracy", res.accuracy}, {"queries", res.retrieved.size()}});
            print_table({"queries", "accuracy"}, {{std::to_string(res.retrieved.size()), fmt(res.accuracy)}});
        } else if (study->parsed()) {
            apply_threads(c_study);
            const fs::path cfg_path(c_study.config);
            io::json j = io::read_json(cfg_path);
            if (study->count("--seed"))
                j["seed"] = c_study.seed;
            if (st_reps)
                j["repetitions"] = *st_reps;
            if (!st_rob.empty())
                j["robustification"] = st_rob;
            if (!st_kind.empty())
                j["study"] = st_kind;
            const auto cfg = experiment_from_json(j, cfg_path.parent_path());
            std::cerr << "experiment: " << to_json(cfg).dump() << '\n';
            const auto bundle = run_study(cfg);
            bundle.save(out_dir(c_study));
            std::vector<Row> rows;
            for (const auto &a : bundle.aggregates)
                rows.push_back({a.metric, a.split ? std::to_string(a.split) : "-", a.method, fmt(a.mean),
                                fmt(a.half_width), std::to_string(a.n)});
            print_table({"metric", "split", "method", "mean", "ci_half_width", "n"}, rows);
        } else if (report->parsed()) {
            apply_threads(c_report);
            const auto a = metric_series(load_records(rp_a), rp_ma);
            const auto b = metric_series(load_records(rp_b), rp_mb);
            const auto rep = run_correlation_report(a, b, rp_perm, c_report.seed);
            io::json res = {{"keys", rep.keys}, {"x", rep.x}, {"y", rep.y}, {"permutations", rp_perm}};
            res["spearman_rho"] = rep.test.rho ? io::json(*rep.test.rho) : io::json(nullptr);
            res["p_value"] = rep.test.p_value ? io::json(*rep.test.p_value) : io::json(nullptr);
            io::write_json(out_dir(c_report) / "correlation.json", res);
            print_table({"n", "spearman_rho", "p_value"},
                        {{std::to_string(rep.keys.size()), fmt(rep.test.rho), fmt(rep.test.p_value)}});
        }
    } catch (const DataError &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
