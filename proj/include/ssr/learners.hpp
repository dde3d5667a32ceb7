#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssr/core.hpp"
#include "ssr/opl.hpp"

namespace ssr {

using LearnerFn = std::function<TabularPolicy(const Dataset&, RngSeed)>;

inline const std::map<std::string, std::vector<std::string>>& learner_schemas() {
    static const std::map<std::string, std::vector<std::string>> schemas = {
        {"horizon-mle", {"h"}},
        {"bc", {"safety_alpha"}},
        {"bcq", {"delta", "n_iterations"}},
        {"mbs-qi", {"delta", "count_beta", "n_iterations"}},
        {"pmdp", {"n_ensembles", "penalty_beta", "confidence_delta", "temperature", "n_iterations"}},
        {"pois", {"learning_rate", "epochs", "lambda_ess", "safety_alpha", "minibatch", "objective"}},
        {"bc-pois", {"learning_rate", "epochs", "lambda_ess", "safety_alpha", "minibatch", "objective"}},
        {"bc-mini-pois", {"learning_rate", "epochs", "lambda_ess", "safety_alpha", "minibatch", "objective"}},
    };
    return schemas;
}

namespace detail {

inline const std::set<std::string>& learner_integer_params() {
    static const std::set<std::string> keys = {"h", "n_iterations", "n_ensembles", "epochs", "minibatch",
                                               "objective"};
    return keys;
}

inline double ah_param(const AHSpec& spec, const std::string& key) { return spec.params.at(key); }

inline int ah_int_param(const AHSpec& spec, const std::string& key) {
    double v = spec.params.at(key);
    if (std::floor(v) != v) {
        throw std::invalid_argument("learner '" + spec.algorithm_id + "': parameter '" + key +
                                    "' must be an integer, got " + format_double(v));
    }
    return static_cast<int>(v);
}

inline PoisParams ah_pois_params(const AHSpec& spec) {
    PoisParams params;
    params.learning_rate = ah_param(spec, "learning_rate");
    params.epochs = ah_int_param(spec, "epochs");
    params.lambda_ess = ah_param(spec, "lambda_ess");
    params.safety_alpha = ah_param(spec, "safety_alpha");
    params.minibatch_size = ah_int_param(spec, "minibatch");
    return params;
}

inline PoisObjective ah_pois_objective(const AHSpec& spec) {
    int v = ah_int_param(spec, "objective");
    if (v == 0) return PoisObjective::IS;
    if (v == 1) return PoisObjective::WIS;
    throw std::invalid_argument("learner '" + spec.algorithm_id + "': parameter 'objective' must be 0 (IS) or 1 (WIS)");
}

}  // namespace detail

inline void validate_ah(const AHSpec& spec) {
    auto it = learner_schemas().find(spec.algorithm_id);
    if (it == learner_schemas().end()) {
        std::string valid;
        for (const auto& [id, keys] : learner_schemas()) {
            if (!valid.empty()) valid += ", ";
            valid += id;
        }
        throw std::invalid_argument("unknown learner id '" + spec.algorithm_id + "' (valid: " + valid + ")");
    }
    const std::set<std::string> allowed(it->second.begin(), it->second.end());
    for (const auto& [key, value] : spec.params) {
        if (allowed.count(key) == 0) {
            throw std::invalid_argument("learner '" + spec.algorithm_id + "': unknown parameter '" + key + "'");
        }
    }
    for (const auto& key : it->second) {
        if (spec.params.count(key) == 0) {
            throw std::invalid_argument("learner '" + spec.algorithm_id + "': missing parameter '" + key + "'");
        }
        if (detail::learner_integer_params().count(key) != 0) detail::ah_int_param(spec, key);
    }
    const std::string label = ah_label(spec);
    if (label.find(',') != std::string::npos || label.find('\n') != std::string::npos) {
        throw std::invalid_argument("AH label '" + label + "' contains a comma or newline");
    }
}

inline LearnerFn make_learner(const AHSpec& spec) {
    validate_ah(spec);
    const std::string id = spec.algorithm_id;
    if (id == "horizon-mle") {
        int h = detail::ah_int_param(spec, "h");
        return [h](const Dataset& d, RngSeed) {
            return plan_horizon_h(fit_mle_mdp(d), h, d.max_length());
        };
    }
    if (id == "bc") {
        double alpha = detail::ah_param(spec, "safety_alpha");
        return [alpha](const Dataset& d, RngSeed) { return fit_bc(d, alpha); };
    }
    if (id == "bcq") {
        double delta = detail::ah_param(spec, "delta");
        int iters = detail::ah_int_param(spec, "n_iterations");
        return [delta, iters](const Dataset& d, RngSeed seed) {
            return fit_bcq_tabular(d, delta, d.gamma, iters, seed).first;
        };
    }
    if (id == "mbs-qi") {
        double delta = detail::ah_param(spec, "delta");
        int beta = detail::ah_int_param(spec, "count_beta");
        int iters = detail::ah_int_param(spec, "n_iterations");
        return [delta, beta, iters](const Dataset& d, RngSeed) {
            return fit_mbs_tabular(d, delta, beta, d.gamma, iters).first;
        };
    }
    if (id == "pmdp") {
        int n_ensembles = detail::ah_int_param(spec, "n_ensembles");
        double beta = detail::ah_param(spec, "penalty_beta");
        double delta = detail::ah_param(spec, "confidence_delta");
        double temperature = detail::ah_param(spec, "temperature");
        int iters = detail::ah_int_param(spec, "n_iterations");
        return [n_ensembles, beta, delta, temperature, iters](const Dataset& d, RngSeed seed) {
            return fit_pmdp_ensemble(d, n_ensembles, beta, delta, temperature, iters, seed);
        };
    }
    if (id == "pois" || id == "bc-pois" || id == "bc-mini-pois") {
        PoisParams params = detail::ah_pois_params(spec);
        PoisObjective objective = detail::ah_pois_objective(spec);
        bool bc_init = id != "pois";
        return [params, objective, bc_init](const Dataset& d, RngSeed seed) {
            std::optional<TabularPolicy> init;
            if (bc_init) init = fit_bc(d, params.safety_alpha);
            return fit_pois(d, params, objective, seed, init);
        };
    }
    throw std::logic_error("make_learner: unhandled id '" + id + "'");
}

}  // namespace ssr
