#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ssr/experiment.hpp"
#include "ssr/theorem.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> out_dir;
    bool force = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool needs_config) {
    auto* config = cmd->add_option("--config", flags.config_path, "experiment config file (JSON)");
    if (needs_config) config->required();
    cmd->add_option("--seed", flags.seed, "override the pipeline seed");
    cmd->add_option("--workers", flags.workers, "worker thread count")->check(CLI::PositiveNumber);
    cmd->add_option("--out", flags.out_dir, "output directory");
    cmd->add_flag("--force", flags.force, "overwrite existing outputs");
}

ssr::ExperimentConfig load_with_overrides(const CommonFlags& flags) {
    ssr::ExperimentConfig config = ssr::load_experiment_config(flags.config_path);
    if (flags.seed.has_value()) config.seed = ssr::RngSeed{*flags.seed};
    if (flags.workers.has_value()) config.workers = *flags.workers;
    if (flags.out_dir.has_value()) config.out_dir = *flags.out_dir;
    return config;
}

int cmd_gen_data(const CommonFlags& flags) {
    ssr::ExperimentConfig config = load_with_overrides(flags);
    if (config.out_dir.empty()) throw std::runtime_error("gen-data: pass --out or set \"out\" in the config");
    auto paths = ssr::write_generated_data(config, config.out_dir, flags.force);
    for (const auto& path : paths) std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_run_selection(const CommonFlags& flags) {
    ssr::ExperimentConfig config = load_with_overrides(flags);
    if (config.out_dir.empty()) throw std::runtime_error("run-selection: pass --out or set \"out\" in the config");
    ssr::ExperimentResult result = ssr::run_experiment(config, flags.force);
    std::cout << "strategy=" << result.summary.strategy << " estimator=" << result.summary.estimator << "\n";
    std::cout << "chosen=" << result.summary.chosen_label << " aggregate=" << ssr::format_g17(result.summary.aggregate)
              << "\n";
    std::cout << "true_value=" << ssr::format_g17(*result.summary.true_value);
    if (result.true_value_se.has_value()) std::cout << " se=" << ssr::format_g17(*result.true_value_se);
    std::cout << "\n";
    for (const auto& path : result.artifact_paths) std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_eval_policy(const CommonFlags& flags, const std::string& policy_path, int mc_episodes) {
    ssr::ExperimentConfig config = load_with_overrides(flags);
    ssr::TabularPolicy policy = ssr::load_policy_csv(policy_path);
    if (config.env.type == "tutorbot") {
        const int episodes = mc_episodes > 0 ? mc_episodes : config.mc_episodes;
        auto [value, se] = ssr::tutorbot_policy_value_mc(config.env.tutorbot, policy, episodes,
                                                         ssr::derive(config.seed, "true-value"));
        std::cout << "value=" << ssr::format_g17(value) << " se=" << ssr::format_g17(se) << " (mc, " << episodes
                  << " episodes)\n";
        return 0;
    }
    ssr::TabularEnv env = ssr::build_tabular_env(config);
    std::cout << "value=" << ssr::format_g17(ssr::exact_policy_value(env, policy)) << " (exact dp)\n";
    return 0;
}

int cmd_rank_report(const std::string& scores_path, const std::string& truth_path) {
    ssr::ScoreTable table = ssr::load_score_table_csv(scores_path);

    std::map<std::string, double> truth;
    {
        std::ifstream in(truth_path);
        if (!in) throw std::runtime_error("cannot open " + truth_path);
        std::string line;
        if (!std::getline(in, line)) throw std::runtime_error(truth_path + ": missing header line");
        long line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (ssr::detail::trim(line).empty()) continue;
            const std::string where = truth_path + ":" + std::to_string(line_no);
            auto fields = ssr::detail::split_csv(line);
            if (fields.size() != 2) throw std::runtime_error(where + ": expected ah_label,true_value");
            truth[ssr::detail::trim(fields[0])] = ssr::detail::parse_double(fields[1], where);
        }
    }

    std::vector<double> estimated;
    std::vector<double> actual;
    for (int i = 0; i < table.n_ahs(); ++i) {
        const std::string label = ssr::ah_label(table.ahs[static_cast<std::size_t>(i)]);
        const auto& aggregate = table.aggregates[static_cast<std::size_t>(i)];
        if (!aggregate.has_value()) throw std::runtime_error("rank-report: AH '" + label + "' has no defined score");
        auto it = truth.find(label);
        if (it == truth.end()) throw std::runtime_error("rank-report: no true value for AH '" + label + "'");
        estimated.push_back(*aggregate);
        actual.push_back(it->second);
    }
    std::cout << "n_ahs=" << estimated.size() << " kendall_tau=" << ssr::format_g17(ssr::kendall_tau(estimated, actual))
              << "\n";
    return 0;
}

int cmd_theorem_check(const CommonFlags& flags, ssr::TheoremConfig config, bool uniform) {
    if (flags.seed.has_value()) config.seed = ssr::RngSeed{*flags.seed};
    if (flags.workers.has_value()) config.n_workers = *flags.workers;
    std::sort(config.K_values.begin(), config.K_values.end());

    const auto model = uniform ? ssr::PartitionModel::Uniform : ssr::PartitionModel::Hypergeometric;
    const int copies = config.n_copies >= 0 ? config.n_copies
                                            : ssr::theorem_default_copies(config.H, config.n_episodes);
    const double failure = ssr::single_split_failure_prob(copies, config.n_episodes, model);
    const double success = ssr::successful_split_prob(copies, config.n_episodes, model);
    std::cout << "analytic: n_copies=" << copies << " single_split_failure=" << ssr::format_g17(failure)
              << " successful_split=" << ssr::format_g17(success) << "\n";
    for (int K : config.K_values) {
        std::cout << "analytic: K=" << K << " majority_success_bound="
                  << ssr::format_g17(ssr::binomial_majority_bound(K, success)) << "\n";
    }

    ssr::TheoremResult result = ssr::run_mc_experiment(config);
    for (const auto& row : result.per_k) {
        std::cout << "mc: K=" << row.K << " failure_rate=" << ssr::format_g17(row.rate) << " se="
                  << ssr::format_g17(row.se) << " (" << row.failures << "/" << row.trials << ")\n";
    }
    std::cout << "mc: e_ss_fraction=" << ssr::format_g17(result.e_ss_fraction) << "\n";

    // Tolerances are scaled from their 20k-trial baselines so the implied
    // sigma multiple stays constant at any --trials value.
    const double scale = std::sqrt(20000.0 / std::max(1, config.n_trials));
    bool ok = true;
    for (const auto& row : result.per_k) {
        if (row.K != 1) continue;
        const double tolerance = 0.015 * scale;
        if (std::abs(row.rate - result.analytic.failure) > tolerance) {
            std::cout << "FAIL: K=1 failure rate deviates from analytic by "
                      << ssr::format_g17(std::abs(row.rate - result.analytic.failure)) << " (tolerance "
                      << ssr::format_g17(tolerance) << ")\n";
            ok = false;
        }
    }
    {
        const double tolerance = 0.01 * scale;
        if (std::abs(result.e_ss_fraction - result.analytic.success) > tolerance) {
            std::cout << "FAIL: successful-split fraction deviates from analytic by "
                      << ssr::format_g17(std::abs(result.e_ss_fraction - result.analytic.success)) << " (tolerance "
                      << ssr::format_g17(tolerance) << ")\n";
            ok = false;
        }
    }
    for (std::size_t i = 0; i + 1 < result.per_k.size(); ++i) {
        double mean_diff = 0.0;
        double sum_sq = 0.0;
        const auto& lo = result.trial_failures[i];
        const auto& hi = result.trial_failures[i + 1];
        const auto n = static_cast<double>(lo.size());
        for (std::size_t t = 0; t < lo.size(); ++t) mean_diff += lo[t] - hi[t];
        mean_diff /= n;
        for (std::size_t t = 0; t < lo.size(); ++t) {
            const double d = lo[t] - hi[t] - mean_diff;
            sum_sq += d * d;
        }
        const double paired_se = std::sqrt(sum_sq / (n - 1.0) / n);
        if (mean_diff < -2.0 * paired_se) {
            std::cout << "FAIL: failure rate increases from K=" << result.per_k[i].K << " to K="
                      << result.per_k[i + 1].K << " by " << ssr::format_g17(-mean_diff) << " (2 paired se = "
                      << ssr::format_g17(2.0 * paired_se) << ")\n";
            ok = false;
        }
    }
    std::cout << (ok ? "theorem-check: OK\n" : "theorem-check: FAILED\n");
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ssr: offline model selection laboratory"};
    app.require_subcommand(1);

    CommonFlags gen_flags;
    auto* gen = app.add_subcommand("gen-data", "generate a logged dataset");
    add_common(gen, gen_flags, true);

    CommonFlags run_flags;
    auto* run = app.add_subcommand("run-selection", "run the full split-select-retrain pipeline");
    add_common(run, run_flags, true);

    CommonFlags eval_flags;
    std::string policy_path;
    int eval_episodes = 0;
    auto* eval = app.add_subcommand("eval-policy", "evaluate a policy file against an environment");
    add_common(eval, eval_flags, true);
    eval->add_option("--policy", policy_path, "policy CSV file")->required();
    eval->add_option("--episodes", eval_episodes, "Monte-Carlo episode count (tutorbot only)");

    CommonFlags theorem_flags;
    ssr::TheoremConfig theorem_config;
    bool uniform = false;
    auto* theorem = app.add_subcommand("theorem-check", "analytic vs Monte-Carlo split-failure rates");
    add_common(theorem, theorem_flags, false);
    theorem->add_option("--horizon", theorem_config.H, "chain horizon H")->check(CLI::PositiveNumber);
    theorem->add_option("--episodes", theorem_config.n_episodes, "dataset size per trial")->check(CLI::PositiveNumber);
    theorem->add_option("--copies", theorem_config.n_copies, "optimal-trajectory copies (default n/2^H)");
    theorem->add_option("--trials", theorem_config.n_trials, "Monte-Carlo trial count")->check(CLI::PositiveNumber);
    theorem->add_option("--k", theorem_config.K_values, "split counts to compare")->delimiter(',');
    theorem->add_option("--ratio", theorem_config.ratio, "train fraction");
    theorem->add_flag("--rollout", theorem_config.use_rollout, "sample datasets by rollout instead of composition");
    theorem->add_flag("--uniform", uniform, "use the uniform partition model for the analytic side");

    std::string scores_path;
    std::string truth_path;
    auto* rank = app.add_subcommand("rank-report", "Kendall tau between a score table and true values");
    rank->add_option("--scores", scores_path, "ScoreTable CSV")->required();
    rank->add_option("--true-values", truth_path, "CSV with header ah_label,true_value")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(gen_flags);
        if (run->parsed()) return cmd_run_selection(run_flags);
        if (eval->parsed()) return cmd_eval_policy(eval_flags, policy_path, eval_episodes);
        if (theorem->parsed()) return cmd_theorem_check(theorem_flags, theorem_config, uniform);
        if (rank->parsed()) return cmd_rank_report(scores_path, truth_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
