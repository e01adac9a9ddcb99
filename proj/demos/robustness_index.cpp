// Robustness index of synthetic embeddings as the confounding signal grows.

#include <iomanip>
#include <iostream>

#include "robustbench/robustbench.hpp"

using namespace robustbench;

int main()
{
    std::cout << std::fixed << std::setprecision(3);
    std::cout << "s_conf  optimal_k  R(k=10)  R(opt)  bootstrap_std  clustering\n";
    for (double s_conf : {0.0, 1.0, 2.0, 3.0, 4.0, 6.0}) {
        synth::ConfoundedGaussianSpec spec;
        spec.n_bio_classes = 2;
        spec.n_conf_classes = 2;
        spec.per_cell = 150;
        spec.bio_strength = 3.0;
        spec.conf_strength = s_conf;
        spec.seed = 11;
        const auto ds = l2_normalize(synth::generate_confounded_gaussian(spec));
        const auto table = build_neighbor_table(ds, 50, true);
        const int k = optimal_k_for_prediction(table, ds, {1, 50});
        const auto cats = categorize_neighbors(table, ds);
        const auto curve = robustness_curve(cats);
        const auto boot = bootstrap_robustness(cats, static_cast<std::size_t>(k), 200, 1);
        ClusteringConfig cc;
        cc.k_range = {2, 6};
        cc.trials = 10;
        const auto score = clustering_score(ds, cc);
        std::cout << std::setw(6) << s_conf << "  " << std::setw(9) << k << "  " << std::setw(7)
                  << robustness_index_at(curve, 10) << "  " << std::setw(6)
                  << robustness_index_at(curve, static_cast<std::size_t>(k)) << "  " << std::setw(13) << boot.std
                  << "  " << std::setw(10) << score.mean << '\n';
    }
}
