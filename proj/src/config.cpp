#include "thp/config.hpp"

#include <cstdlib>
#include <fstream>

namespace thp {

std::string to_string(IntegralEstimator e) {
    return e == IntegralEstimator::monte_carlo ? "monte-carlo" : "trapezoidal";
}

IntegralEstimator integral_estimator_from_string(const std::string& s) {
    if (s == "monte-carlo") return IntegralEstimator::monte_carlo;
    if (s == "trapezoidal") return IntegralEstimator::trapezoidal;
    throw ConfigError("unknown integral estimator \"" + s +
                      "\" (expected monte-carlo or trapezoidal)");
}

void ThpConfig::validate() const {
    if (num_types < 1) throw ConfigError("num_types must be at least 1");
    if (num_vertices < 0) throw ConfigError("num_vertices must be non-negative");
    if (!(time_scale > 0.0)) throw ConfigError("time_scale must be positive");
    if (model_dim < 2 || model_dim % 2 != 0) {
        throw ConfigError("model_dim must be even and at least 2 (temporal encoding pairs "
                          "sine/cosine channels)");
    }
    if (key_dim < 1 || value_dim < 1 || hidden_dim < 1) {
        throw ConfigError("key_dim, value_dim and hidden_dim must be at least 1");
    }
    if (num_heads < 1) throw ConfigError("num_heads must be at least 1");
    if (num_layers < 0) throw ConfigError("num_layers must be non-negative");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (mc_samples < 1) throw ConfigError("mc_samples must be at least 1");
    if (!(graph_reg_weight >= 0.0)) throw ConfigError("graph_reg_weight must be non-negative");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (!(dev_ratio >= 0.0 && dev_ratio < 1.0)) throw ConfigError("dev_ratio must lie in [0, 1)");
    if (!(density_horizon_gaps > 0.0)) {
        throw ConfigError("density_horizon_gaps must be positive");
    }
    if (density_grid < 10) throw ConfigError("density_grid must be at least 10");
}

ThpConfig ThpConfig::preset(const std::string& name) {
    ThpConfig c;
    if (name == "desk") {
        return c;  // the defaults above
    }
    if (name == "set1") {
        c.num_heads = 3;
        c.num_layers = 3;
        c.model_dim = 64;
        c.key_dim = 16;
        c.value_dim = 16;
        c.hidden_dim = 256;
        c.dropout = 0.1;
        return c;
    }
    if (name == "set2") {
        c.num_heads = 6;
        c.num_layers = 6;
        c.model_dim = 128;
        c.key_dim = 64;
        c.value_dim = 64;
        c.hidden_dim = 2048;
        c.dropout = 0.1;
        return c;
    }
    if (name == "set3") {
        c.num_heads = 4;
        c.num_layers = 4;
        c.model_dim = 512;
        c.key_dim = 512;
        c.value_dim = 512;
        c.hidden_dim = 1024;
        c.dropout = 0.1;
        return c;
    }
    throw ConfigError("unknown preset \"" + name + "\" (expected desk, set1, set2 or set3)");
}

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, bool& consumed) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(std::string("config key \"") + key + "\" has the wrong type");
        }
        consumed = true;
    }
}

}  // namespace

ThpConfig ThpConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    ThpConfig c;
    std::size_t known = 0;
    if (j.contains("preset")) {
        c = preset(j.at("preset").get<std::string>());
        ++known;
    }
    auto field = [&](const char* key, auto& out) {
        bool consumed = false;
        read_field(j, key, out, consumed);
        if (consumed) ++known;
    };
    field("num_types", c.num_types);
    field("num_vertices", c.num_vertices);
    field("time_scale", c.time_scale);
    field("model_dim", c.model_dim);
    field("key_dim", c.key_dim);
    field("value_dim", c.value_dim);
    field("hidden_dim", c.hidden_dim);
    field("num_heads", c.num_heads);
    field("num_layers", c.num_layers);
    field("dropout", c.dropout);
    field("tie_fc2_columns", c.tie_fc2_columns);
    field("freeze_similarity", c.freeze_similarity);
    if (j.contains("integral_estimator")) {
        c.integral_estimator =
            integral_estimator_from_string(j.at("integral_estimator").get<std::string>());
        ++known;
    }
    field("mc_samples", c.mc_samples);
    field("graph_reg_weight", c.graph_reg_weight);
    field("learning_rate", c.learning_rate);
    field("epochs", c.epochs);
    field("batch_size", c.batch_size);
    field("patience", c.patience);
    field("dev_ratio", c.dev_ratio);
    field("seed", c.seed);
    field("density_horizon_gaps", c.density_horizon_gaps);
    field("density_grid", c.density_grid);

    if (known != j.size()) {
        for (const auto& [key, value] : j.items()) {
            (void)value;
            static const char* accepted[] = {
                "preset",          "num_types",     "num_vertices",      "time_scale",
                "model_dim",       "key_dim",       "value_dim",         "hidden_dim",
                "num_heads",       "num_layers",    "dropout",           "tie_fc2_columns",
                "freeze_similarity", "integral_estimator", "mc_samples", "graph_reg_weight",
                "learning_rate",   "epochs",        "batch_size",        "patience",
                "dev_ratio",       "seed",          "density_horizon_gaps", "density_grid",
            };
            bool ok = false;
            for (const char* a : accepted) {
                if (key == a) {
                    ok = true;
                    break;
                }
            }
            if (!ok) throw ConfigError("unknown config key \"" + key + "\"");
        }
    }
    c.validate();
    return c;
}

ThpConfig ThpConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return from_json(j);
}

nlohmann::ordered_json ThpConfig::to_json() const {
    nlohmann::ordered_json j;
    j["num_types"] = num_types;
    j["num_vertices"] = num_vertices;
    j["time_scale"] = time_scale;
    j["model_dim"] = model_dim;
    j["key_dim"] = key_dim;
    j["value_dim"] = value_dim;
    j["hidden_dim"] = hidden_dim;
    j["num_heads"] = num_heads;
    j["num_layers"] = num_layers;
    j["dropout"] = dropout;
    j["tie_fc2_columns"] = tie_fc2_columns;
    j["freeze_similarity"] = freeze_similarity;
    j["integral_estimator"] = to_string(integral_estimator);
    j["mc_samples"] = mc_samples;
    j["graph_reg_weight"] = graph_reg_weight;
    j["learning_rate"] = learning_rate;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["patience"] = patience;
    j["dev_ratio"] = dev_ratio;
    j["seed"] = seed;
    j["density_horizon_gaps"] = density_horizon_gaps;
    j["density_grid"] = density_grid;
    return j;
}

void ThpConfig::apply_env_seed() {
    const char* env = std::getenv("THP_SEED");
    if (!env || *env == '\0') return;
    char* end = nullptr;
    const unsigned long long parsed = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') {
        throw ConfigError("THP_SEED must be an unsigned integer, got \"" + std::string(env) +
                          "\"");
    }
    seed = static_cast<std::uint64_t>(parsed);
}

}  // namespace thp
