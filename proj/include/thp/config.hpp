#pragma once

#include <cstdint>
#include <json.hpp>
#include <string>

#include "thp/errors.hpp"

namespace thp {

enum class IntegralEstimator { monte_carlo, trapezoidal };

// Every knob of the model, loss, and training loop. Serialized inside the
// model manifest so evaluation reconstructs the exact training setup.
struct ThpConfig {
    // data
    int num_types = 1;      // K; the reserved padding type is K itself
    int num_vertices = 0;   // |V|; 0 = no vertex dimension (plain streams)
    double time_scale = 1.0;  // raw stamps are divided by this before use

    // model dimensions
    int model_dim = 16;   // M, even
    int key_dim = 8;      // M_K
    int value_dim = 8;    // M_V
    int hidden_dim = 64;  // M_H (position-wise feed-forward width)
    int num_heads = 2;    // H
    int num_layers = 2;   // N
    double dropout = 0.1;
    bool tie_fc2_columns = false;   // constrain the second FFN matrix to identical columns
    bool freeze_similarity = false; // keep vertex-similarity matrices at their (zero) init

    // likelihood
    IntegralEstimator integral_estimator = IntegralEstimator::monte_carlo;
    int mc_samples = 20;            // per-interval draws for the Monte Carlo integral
    double graph_reg_weight = 0.01; // mu

    // training
    double learning_rate = 1e-3;
    int epochs = 50;
    int batch_size = 4;
    int patience = 10;    // early-stopping epochs without dev improvement
    double dev_ratio = 0.1;
    std::uint64_t seed = 1;

    // density-based prediction
    double density_horizon_gaps = 20.0;  // horizon = this many mean training gaps
    int density_grid = 1000;             // quadrature points over the horizon

    bool structured() const { return num_vertices > 0; }

    void validate() const;  // throws ConfigError

    // Named presets fill the architecture block (heads/layers/dims/dropout);
    // everything else keeps defaults.
    static ThpConfig preset(const std::string& name);

    // Accepts {"preset": "..."} plus per-field overrides; unknown keys are
    // rejected. Also reads simulator-agnostic training keys.
    static ThpConfig from_json(const nlohmann::json& j);
    static ThpConfig from_file(const std::string& path);
    nlohmann::ordered_json to_json() const;

    // THP_SEED environment variable, when set, wins over the config seed.
    void apply_env_seed();
};

std::string to_string(IntegralEstimator e);
IntegralEstimator integral_estimator_from_string(const std::string& s);

}  // namespace thp
