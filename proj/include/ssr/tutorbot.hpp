#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ssr/core.hpp"
#include "ssr/io.hpp"
#include "ssr/rng.hpp"

namespace ssr {

inline constexpr int kTutorBotStates = 72;
inline constexpr int kTutorBotActions = 3;

struct TutorBotConfig {
    double mu_improv = 2.0;
    double mu_base = 1.0;
    std::vector<double> pretest_dist = std::vector<double>(9, 1.0 / 9.0);
    std::array<double, 2> anxiety_edges = {-2.0 / 3.0, -1.0 / 3.0};
    std::array<double, 2> thinking_edges = {1.0 / 3.0, 2.0 / 3.0};
};

// Continuous per-step payload carried alongside the discretized core Step.
struct TutorBotStep {
    int pretest = 0;
    double anxiety = 0.0;
    double thinking = 0.0;
    int pre_termination = 0;
};

inline void validate_tutorbot_config(const TutorBotConfig& config) {
    if (!(config.mu_improv > config.mu_base)) {
        throw std::invalid_argument("tutorbot: mu_improv must exceed mu_base");
    }
    if (config.pretest_dist.size() != 9) throw std::invalid_argument("tutorbot: pretest_dist must have 9 entries");
    double total = 0.0;
    for (double p : config.pretest_dist) {
        if (p < 0.0) throw std::invalid_argument("tutorbot: pretest_dist entries must be nonnegative");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("tutorbot: pretest_dist must sum to 1");
    if (!(config.anxiety_edges[0] < config.anxiety_edges[1])) {
        throw std::invalid_argument("tutorbot: anxiety edges must increase");
    }
    if (!(config.thinking_edges[0] < config.thinking_edges[1])) {
        throw std::invalid_argument("tutorbot: thinking edges must increase");
    }
}

// 4 pretest buckets x 3 anxiety x 3 thinking x 2 termination flags = 72 cells.
inline int tutorbot_cell(const TutorBotConfig& config, int pretest, double anxiety, double thinking,
                         int pre_termination) {
    int pb = pretest <= 2 ? 0 : pretest <= 4 ? 1 : pretest <= 6 ? 2 : 3;
    int ab = anxiety < config.anxiety_edges[0] ? 0 : anxiety < config.anxiety_edges[1] ? 1 : 2;
    int tb = thinking < config.thinking_edges[0] ? 0 : thinking < config.thinking_edges[1] ? 1 : 2;
    return ((pb * 3 + ab) * 3 + tb) * 2 + pre_termination;
}

namespace detail {

// One episode per the appendix recurrences: T = round(7 - 0.46*pretest + l)
// with l ~ U([-1,2]) clamped to T >= 1; fourth-order lag updates with
// zero-padded history; reward only at the final step.
inline std::pair<Trajectory, std::vector<TutorBotStep>> tutorbot_episode(const TutorBotConfig& config,
                                                                         const TabularPolicy& behavior, Rng& rng) {
    const int pretest = rng.categorical(config.pretest_dist);
    const double l = rng.uniform_real(-1.0, 2.0);
    const auto T = static_cast<int>(std::max<long long>(1, std::llround(7.0 - 0.46 * pretest + l)));
    std::array<double, 4> x = {rng.uniform_real(-1.0, 0.0), 0.0, 0.0, 0.0};
    std::array<double, 4> h = {rng.uniform_real(0.0, 1.0), 0.0, 0.0, 0.0};

    Trajectory traj;
    std::vector<TutorBotStep> aux;
    traj.steps.reserve(static_cast<std::size_t>(T));
    aux.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        const int flag = t == T - 1 ? 1 : 0;
        const int state = tutorbot_cell(config, pretest, x[0], h[0], flag);
        const int action = rng.categorical(behavior.probs[static_cast<std::size_t>(state)]);

        const double x_next = 0.5 * x[0] + 0.2 * x[1] + 0.05 * x[2];
        const double h_next = 0.2 * h[1] + 0.3 * h[2] + 0.5 * h[3];

        double reward = 0.0;
        if (t == T - 1) {
            const double p = std::min(std::max(x_next + h_next, 0.0), 1.0);
            const bool improved = rng.uniform01() < p;
            reward = improved ? rng.normal(config.mu_improv, 1.0) : rng.normal(config.mu_base, std::sqrt(0.4));
        }
        const int next_flag = t + 1 == T - 1 ? 1 : 0;
        const int next_state = tutorbot_cell(config, pretest, x_next, h_next, next_flag);

        Step step;
        step.state = state;
        step.action = action;
        step.reward = reward;
        step.next_state = next_state;
        step.behavior_propensity = behavior.prob(state, action);
        traj.steps.push_back(step);
        aux.push_back({pretest, x[0], h[0], flag});

        x = {x_next, x[0], x[1], x[2]};
        h = {h_next, h[0], h[1], h[2]};
    }
    return {std::move(traj), std::move(aux)};
}

}  // namespace detail

struct TutorBotRollout {
    Dataset dataset;
    std::vector<std::vector<TutorBotStep>> aux;
};

inline TutorBotRollout tutorbot_rollout(const TutorBotConfig& config, const TabularPolicy& behavior, int n_episodes,
                                        RngSeed seed) {
    validate_tutorbot_config(config);
    if (behavior.n_states() != kTutorBotStates || behavior.n_actions() != kTutorBotActions) {
        throw std::invalid_argument("tutorbot_rollout: behavior policy must be 72 x 3");
    }
    if (n_episodes < 1) throw std::invalid_argument("tutorbot_rollout: n_episodes must be positive");
    TutorBotRollout out;
    out.dataset.gamma = 1.0;
    out.dataset.n_states = kTutorBotStates;
    out.dataset.n_actions = kTutorBotActions;
    out.dataset.env_tag = "tutorbot";
    out.dataset.trajectories.reserve(static_cast<std::size_t>(n_episodes));
    out.aux.reserve(static_cast<std::size_t>(n_episodes));
    for (int e = 0; e < n_episodes; ++e) {
        Rng rng(derive(seed, "episode", static_cast<std::uint64_t>(e)));
        auto [traj, aux] = detail::tutorbot_episode(config, behavior, rng);
        out.dataset.trajectories.push_back(std::move(traj));
        out.aux.push_back(std::move(aux));
    }
    return out;
}

// State-independent behavior distribution over the 3 actions.
inline TutorBotRollout tutorbot_rollout(const TutorBotConfig& config, const std::vector<double>& action_probs,
                                        int n_episodes, RngSeed seed) {
    if (action_probs.size() != kTutorBotActions) {
        throw std::invalid_argument("tutorbot_rollout: behavior distribution must have 3 entries");
    }
    TabularPolicy behavior;
    behavior.probs.assign(kTutorBotStates, action_probs);
    validate_policy(behavior);
    return tutorbot_rollout(config, behavior, n_episodes, seed);
}

// Seeded Monte-Carlo true value of a discretized policy (no exact DP exists
// for the continuous simulator). Returns (mean, standard error).
inline std::pair<double, double> tutorbot_policy_value_mc(const TutorBotConfig& config, const TabularPolicy& policy,
                                                          int n_episodes, RngSeed seed) {
    validate_tutorbot_config(config);
    if (policy.n_states() != kTutorBotStates || policy.n_actions() != kTutorBotActions) {
        throw std::invalid_argument("tutorbot_policy_value_mc: policy must be 72 x 3");
    }
    if (n_episodes < 2) throw std::invalid_argument("tutorbot_policy_value_mc: need n_episodes >= 2");
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int e = 0; e < n_episodes; ++e) {
        Rng rng(derive(seed, "episode", static_cast<std::uint64_t>(e)));
        auto [traj, aux] = detail::tutorbot_episode(config, policy, rng);
        double g = return_of(traj, 1.0);
        sum += g;
        sum_sq += g * g;
    }
    const double mean = sum / n_episodes;
    const double variance = std::max(0.0, (sum_sq - n_episodes * mean * mean) / (n_episodes - 1));
    return {mean, std::sqrt(variance / n_episodes)};
}

inline void write_tutorbot_aux(const std::vector<std::vector<TutorBotStep>>& aux, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "traj_id,t,pretest,anxiety,thinking,pre_termination\n";
    for (std::size_t i = 0; i < aux.size(); ++i) {
        for (std::size_t t = 0; t < aux[i].size(); ++t) {
            const TutorBotStep& s = aux[i][t];
            out << i << ',' << t << ',' << s.pretest << ',' << format_g17(s.anxiety) << ',' << format_g17(s.thinking)
                << ',' << s.pre_termination << '\n';
        }
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

inline std::vector<std::vector<TutorBotStep>> load_tutorbot_aux(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": missing header line");
    long line_no = 1;
    std::vector<std::vector<TutorBotStep>> aux;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        auto fields = detail::split_csv(line);
        if (fields.size() != 6) throw std::runtime_error(where + ": expected 6 fields");
        auto traj_id = static_cast<std::size_t>(detail::parse_long(fields[0], where));
        auto t = static_cast<std::size_t>(detail::parse_long(fields[1], where));
        if (traj_id >= aux.size()) aux.resize(traj_id + 1);
        if (t != aux[traj_id].size()) throw std::runtime_error(where + ": steps out of order");
        TutorBotStep s;
        s.pretest = static_cast<int>(detail::parse_long(fields[2], where));
        s.anxiety = detail::parse_double(fields[3], where);
        s.thinking = detail::parse_double(fields[4], where);
        s.pre_termination = static_cast<int>(detail::parse_long(fields[5], where));
        aux[traj_id].push_back(s);
    }
    return aux;
}

}  // namespace ssr
