#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssr/rng.hpp"

namespace ssr {

inline constexpr const char* kVersion = "0.1.0";

// One logged environment interaction. behavior_propensity is the behavior
// policy's probability of the logged action, recorded at logging time so
// importance sampling never needs the behavior policy object.
struct Step {
    int state = 0;
    int action = 0;
    double reward = 0.0;
    int next_state = 0;
    double behavior_propensity = 1.0;
};

struct Trajectory {
    std::vector<Step> steps;

    int length() const { return static_cast<int>(steps.size()); }
};

struct Dataset {
    std::vector<Trajectory> trajectories;
    double gamma = 1.0;
    int n_states = 0;
    int n_actions = 0;
    std::string env_tag;

    int size() const { return static_cast<int>(trajectories.size()); }
    int max_length() const {
        int m = 0;
        for (const auto& t : trajectories) m = std::max(m, t.length());
        return m;
    }
};

// Stochastic Markov policy as an explicit per-state distribution table.
struct TabularPolicy {
    std::vector<std::vector<double>> probs;

    int n_states() const { return static_cast<int>(probs.size()); }
    int n_actions() const { return probs.empty() ? 0 : static_cast<int>(probs[0].size()); }
    double prob(int s, int a) const { return probs[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]; }
};

struct TabularQ {
    std::vector<std::vector<double>> values;

    int n_states() const { return static_cast<int>(values.size()); }
    int n_actions() const { return values.empty() ? 0 : static_cast<int>(values[0].size()); }
};

// An algorithm plus a complete hyperparameter assignment; the unit the
// selection strategies rank. `display_label` defaults to a canonical
// `id[key=value;...]` rendering (semicolons keep labels CSV-safe).
struct AHSpec {
    std::string algorithm_id;
    std::map<std::string, double> params;
    std::string display_label;
};

inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf, ptr);
}

inline std::string ah_label(const AHSpec& spec) {
    if (!spec.display_label.empty()) return spec.display_label;
    std::string out = spec.algorithm_id;
    if (spec.params.empty()) return out;
    out += '[';
    bool first = true;
    for (const auto& [key, value] : spec.params) {
        if (!first) out += ';';
        first = false;
        out += key;
        out += '=';
        out += format_double(value);
    }
    out += ']';
    return out;
}

inline double return_of(const Trajectory& trajectory, double gamma) {
    if (!(gamma > 0.0) || gamma > 1.0) throw std::invalid_argument("return_of: gamma must be in (0,1]");
    double total = 0.0;
    double discount = 1.0;
    for (const Step& step : trajectory.steps) {
        total += discount * step.reward;
        discount *= gamma;
    }
    return total;
}

struct ValidationReport {
    std::vector<std::string> violations;

    bool ok() const { return violations.empty(); }
};

inline ValidationReport validate_dataset(const Dataset& dataset) {
    ValidationReport report;
    auto flag = [&report](const std::string& msg) { report.violations.push_back(msg); };

    if (dataset.trajectories.empty()) flag("dataset is empty");
    if (!(dataset.gamma > 0.0) || dataset.gamma > 1.0) flag("gamma must be in (0,1]");
    if (dataset.n_states <= 0) flag("n_states must be positive");
    if (dataset.n_actions <= 0) flag("n_actions must be positive");

    for (std::size_t i = 0; i < dataset.trajectories.size(); ++i) {
        const auto& steps = dataset.trajectories[i].steps;
        const std::string where = "trajectory " + std::to_string(i);
        if (steps.empty()) {
            flag(where + " has no steps");
            continue;
        }
        for (std::size_t t = 0; t < steps.size(); ++t) {
            const Step& s = steps[t];
            const std::string at = where + " step " + std::to_string(t);
            if (s.state < 0 || s.state >= dataset.n_states) flag(at + ": state index out of range");
            if (s.next_state < 0 || s.next_state >= dataset.n_states) flag(at + ": next_state index out of range");
            if (s.action < 0 || s.action >= dataset.n_actions) flag(at + ": action index out of range");
            if (!(s.behavior_propensity > 0.0) || s.behavior_propensity > 1.0) flag(at + ": propensity must be in (0,1]");
            if (!std::isfinite(s.reward)) flag(at + ": reward is not finite");
            if (t + 1 < steps.size() && s.next_state != steps[t + 1].state) {
                flag(where + ": broken chaining between step " + std::to_string(t) + " and step " +
                     std::to_string(t + 1));
            }
        }
    }
    return report;
}

inline void validate_policy(const TabularPolicy& policy) {
    for (std::size_t s = 0; s < policy.probs.size(); ++s) {
        double sum = 0.0;
        for (double p : policy.probs[s]) {
            if (p < 0.0 || p > 1.0 || !std::isfinite(p)) {
                throw std::invalid_argument("policy row " + std::to_string(s) + " has entry outside [0,1]");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw std::invalid_argument("policy row " + std::to_string(s) + " does not sum to 1");
        }
    }
}

inline TabularPolicy make_uniform_policy(int n_states, int n_actions) {
    if (n_states < 1 || n_actions < 1) throw std::invalid_argument("make_uniform_policy: sizes must be positive");
    TabularPolicy policy;
    policy.probs.assign(static_cast<std::size_t>(n_states),
                        std::vector<double>(static_cast<std::size_t>(n_actions), 1.0 / n_actions));
    return policy;
}

inline TabularPolicy make_deterministic_policy(int n_states, int n_actions, const std::vector<int>& actions) {
    if (static_cast<int>(actions.size()) != n_states) {
        throw std::invalid_argument("make_deterministic_policy: one action per state required");
    }
    TabularPolicy policy;
    policy.probs.assign(static_cast<std::size_t>(n_states),
                        std::vector<double>(static_cast<std::size_t>(n_actions), 0.0));
    for (int s = 0; s < n_states; ++s) {
        if (actions[static_cast<std::size_t>(s)] < 0 || actions[static_cast<std::size_t>(s)] >= n_actions) {
            throw std::invalid_argument("make_deterministic_policy: action index out of range");
        }
        policy.probs[static_cast<std::size_t>(s)][static_cast<std::size_t>(actions[static_cast<std::size_t>(s)])] = 1.0;
    }
    return policy;
}

// Constant-action policy, e.g. the chain's always-down / always-up policies.
inline TabularPolicy make_constant_policy(int n_states, int n_actions, int action) {
    return make_deterministic_policy(n_states, n_actions, std::vector<int>(static_cast<std::size_t>(n_states), action));
}

}  // namespace ssr
