#include <memory>
#include "thp/thp.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "thp/dataset.hpp"
#include "thp/errors.hpp"
#include "thp/hawkes.hpp"
#include "thp/trainer.hpp"

using nlohmann::json;
using nlohmann::ordered_json;

struct thp_dataset {
    std::vector<thp::EventSequence> seqs;
};

struct thp_model {
    thp::TrainedModel m;
};

namespace {

thread_local std::string g_last_error;

thp_status fail(thp_status code, const std::string& message) {
    g_last_error = message;
    return code;
}

// Runs the body and maps exceptions onto the C status codes.
template <typename Fn>
thp_status guarded(Fn&& body) {
    try {
        body();
        g_last_error.clear();
        return THP_OK;
    } catch (const thp::ConfigError& e) {
        return fail(THP_ERR_USAGE, e.what());
    } catch (const thp::ShapeError& e) {
        return fail(THP_ERR_USAGE, e.what());
    } catch (const thp::DataError& e) {
        return fail(THP_ERR_DATA, e.what());
    } catch (const thp::NumericError& e) {
        return fail(THP_ERR_NUMERIC, e.what());
    } catch (const json::exception& e) {
        return fail(THP_ERR_USAGE, e.what());
    } catch (const std::exception& e) {
        return fail(THP_ERR_NUMERIC, e.what());
    }
}

char* copy_out(const std::string& s) {
    char* buf = static_cast<char*>(std::malloc(s.size() + 1));
    if (buf != nullptr) std::memcpy(buf, s.c_str(), s.size() + 1);
    return buf;
}

void require(bool ok, const std::string& what) {
    if (!ok) throw thp::ConfigError(what);
}

std::uint64_t env_or_config_seed(std::uint64_t config_seed) {
    const char* env = std::getenv("THP_SEED");
    if (!env || *env == '\0') return config_seed;
    char* end = nullptr;
    const unsigned long long parsed = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
        throw thp::ConfigError("THP_SEED must be an unsigned integer, got \"" +
                               std::string(env) + "\"");
    return static_cast<std::uint64_t>(parsed);
}

thp::RelationalGraph graph_from_json(const json& g) {
    require(g.is_object(), "graph must be a JSON object");
    require(g.contains("num_vertices") && g.at("num_vertices").is_number_integer(),
            "graph needs an integer num_vertices");
    require(g.contains("edges") && g.at("edges").is_array(),
            "graph needs an edges array of [a, b] pairs");
    std::vector<std::pair<int, int>> edges;
    for (const json& e : g.at("edges")) {
        require(e.is_array() && e.size() == 2 && e.at(0).is_number_integer() &&
                    e.at(1).is_number_integer(),
                "each graph edge must be an [a, b] integer pair");
        edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    }
    return thp::RelationalGraph(g.at("num_vertices").get<int>(), std::move(edges));
}

std::vector<thp::EventSequence> simulate_from_json(const json& cfg) {
    require(cfg.is_object(), "simulator config must be a JSON object");
    for (const auto& item : cfg.items()) {
        static const char* known[] = {"K",     "mu",          "alpha", "beta",
                                      "T",     "n_sequences", "seed",  "graph"};
        bool ok = false;
        for (const char* k : known) ok = ok || item.key() == k;
        require(ok, "unknown simulator config key \"" + item.key() + "\"");
    }
    require(cfg.contains("T") && cfg.at("T").is_number(), "simulator config needs a number T");
    require(cfg.contains("n_sequences") && cfg.at("n_sequences").is_number_integer(),
            "simulator config needs an integer n_sequences");
    require(cfg.contains("seed") && cfg.at("seed").is_number_integer(),
            "simulator config needs an integer seed");
    const double window = cfg.at("T").get<double>();
    const long long n = cfg.at("n_sequences").get<long long>();
    require(window > 0.0, "T must be positive");
    require(n >= 1, "n_sequences must be at least 1");
    const std::uint64_t seed = env_or_config_seed(cfg.at("seed").get<std::uint64_t>());

    std::vector<thp::EventSequence> out;
    out.reserve(static_cast<size_t>(n));
    if (cfg.contains("graph")) {
        const json& g = cfg.at("graph");
        thp::StructuredHawkesSpec spec;
        spec.graph = graph_from_json(g);
        spec.num_types = cfg.value("K", 1);
        spec.mu = g.value("mu", spec.mu);
        spec.alpha_self = g.value("alpha_self", spec.alpha_self);
        spec.alpha_edge = g.value("alpha_edge", spec.alpha_edge);
        spec.beta = g.value("beta", spec.beta);
        for (long long i = 0; i < n; ++i) {
            thp::UniformRng rng(thp::mix_seed(seed, static_cast<std::uint64_t>(i)));
            out.push_back(thp::simulate_structured(spec, window, rng));
        }
    } else {
        require(cfg.contains("K") && cfg.at("K").is_number_integer(),
                "simulator config needs an integer K (or a graph section)");
        require(cfg.contains("mu") && cfg.contains("alpha") && cfg.contains("beta"),
                "simulator config needs mu, alpha, and beta");
        thp::HawkesParams hp;
        hp.mu = cfg.at("mu").get<std::vector<double>>();
        hp.alpha = cfg.at("alpha").get<std::vector<std::vector<double>>>();
        hp.beta = cfg.at("beta").get<std::vector<std::vector<double>>>();
        require(static_cast<int>(hp.mu.size()) == cfg.at("K").get<int>(),
                "mu length must equal K");
        hp.validate();
        for (long long i = 0; i < n; ++i) {
            thp::UniformRng rng(thp::mix_seed(seed, static_cast<std::uint64_t>(i)));
            out.push_back(thp::ogata_simulate(hp, window, rng));
        }
    }
    return out;
}

ordered_json report_to_json(const thp::EvalReport& rep) {
    ordered_json j;
    j["per_event_ll"] = rep.per_event_ll;
    j["accuracy"] = rep.accuracy;
    j["time_rmse"] = rep.time_rmse;
    j["scored_events"] = rep.scored_events;
    j["sequences"] = rep.sequences;
    if (rep.resamples > 0) {
        j["resamples"] = rep.resamples;
        j["per_event_ll_std"] = rep.per_event_ll_std;
        j["accuracy_std"] = rep.accuracy_std;
        j["time_rmse_std"] = rep.time_rmse_std;
    }
    return j;
}

}  // namespace

extern "C" {

const char* thp_last_error(void) { return g_last_error.c_str(); }

thp_status thp_dataset_load(const char* path, thp_dataset** out) {
    if (path == nullptr || out == nullptr)
        return fail(THP_ERR_USAGE, "thp_dataset_load: path and out must be non-NULL");
    *out = nullptr;
    return guarded([&] {
        auto data = std::make_unique<thp_dataset>();
        data->seqs = thp::load_dataset(path);
        *out = data.release();
    });
}

thp_status thp_dataset_simulate(const char* config_json, thp_dataset** out) {
    if (config_json == nullptr || out == nullptr)
        return fail(THP_ERR_USAGE, "thp_dataset_simulate: config_json and out must be non-NULL");
    *out = nullptr;
    return guarded([&] {
        const json cfg = json::parse(config_json);
        auto data = std::make_unique<thp_dataset>();
        data->seqs = simulate_from_json(cfg);
        *out = data.release();
    });
}

thp_status thp_dataset_save(const thp_dataset* data, const char* path) {
    if (data == nullptr || path == nullptr)
        return fail(THP_ERR_USAGE, "thp_dataset_save: data and path must be non-NULL");
    return guarded([&] { thp::save_dataset(path, data->seqs); });
}

long long thp_dataset_size(const thp_dataset* data) {
    return data == nullptr ? -1 : static_cast<long long>(data->seqs.size());
}

void thp_dataset_free(thp_dataset* data) { delete data; }

thp_status thp_train(const thp_dataset* data, const char* config_json, const char* graph_json,
                     const char* model_dir, const char* loss_log_path) {
    if (data == nullptr || config_json == nullptr || model_dir == nullptr)
        return fail(THP_ERR_USAGE, "thp_train: data, config_json, and model_dir must be non-NULL");
    return guarded([&] {
        thp::ThpConfig cfg = thp::ThpConfig::from_json(json::parse(config_json));
        cfg.apply_env_seed();
        cfg.validate();

        std::unique_ptr<thp::RelationalGraph> graph;
        if (graph_json != nullptr)
            graph = std::make_unique<thp::RelationalGraph>(
                graph_from_json(json::parse(graph_json)));

        thp::UniformRng init_rng(cfg.seed);
        thp::ParamStore store = thp::init_params(cfg, init_rng);
        const thp::TrainResult result = thp::train(store, data->seqs, cfg, graph.get());
        thp::save_model(model_dir, store, cfg, graph.get(), result.mean_gap_scaled);

        if (loss_log_path != nullptr) {
            std::ofstream log(loss_log_path, std::ios::binary | std::ios::trunc);
            if (!log) throw thp::DataError(std::string("cannot write loss log: ") + loss_log_path);
            for (const thp::EpochRecord& rec : result.log) {
                ordered_json line;
                line["epoch"] = rec.epoch;
                line["event_ll"] = rec.event_ll;
                line["nonevent"] = rec.nonevent;
                line["type_loss"] = rec.type_loss;
                line["time_loss"] = rec.time_loss;
                line["graph_reg"] = rec.graph_reg;
                line["total"] = rec.total;
                line["per_event_ll"] = rec.per_event_ll;
                log << line.dump() << "\n";
            }
        }
    });
}

thp_status thp_model_load(const char* model_dir, thp_model** out) {
    if (model_dir == nullptr || out == nullptr)
        return fail(THP_ERR_USAGE, "thp_model_load: model_dir and out must be non-NULL");
    *out = nullptr;
    return guarded([&] {
        auto model = std::make_unique<thp_model>(thp_model{thp::load_model(model_dir)});
        *out = model.release();
    });
}

void thp_model_free(thp_model* model) { delete model; }

thp_status thp_evaluate(const thp_model* model, const thp_dataset* data, int density_prediction,
                        int resamples, char** report_json_out) {
    if (model == nullptr || data == nullptr || report_json_out == nullptr)
        return fail(THP_ERR_USAGE,
                    "thp_evaluate: model, data, and report_json_out must be non-NULL");
    *report_json_out = nullptr;
    return guarded([&] {
        if (resamples < 0) throw thp::ConfigError("thp_evaluate: resamples must be >= 0");
        // evaluate() binds parameters into scoring graphs but never writes them
        thp::ParamStore& store = const_cast<thp_model*>(model)->m.store;
        const thp::EvalReport rep =
            thp::evaluate(store, data->seqs, model->m.config, density_prediction != 0, resamples,
                          model->m.mean_gap_scaled);
        *report_json_out = copy_out(report_to_json(rep).dump());
        if (*report_json_out == nullptr) throw std::bad_alloc();
    });
}

thp_status thp_attention_dump(const thp_model* model, const thp_dataset* data,
                              long long seq_index, char** dump_json_out) {
    if (model == nullptr || data == nullptr || dump_json_out == nullptr)
        return fail(THP_ERR_USAGE,
                    "thp_attention_dump: model, data, and dump_json_out must be non-NULL");
    *dump_json_out = nullptr;
    return guarded([&] {
        if (seq_index < 0 || seq_index >= static_cast<long long>(data->seqs.size()))
            throw thp::DataError("sequence index " + std::to_string(seq_index) +
                                 " out of range for " + std::to_string(data->seqs.size()) +
                                 " sequences");
        thp::ParamStore& store = const_cast<thp_model*>(model)->m.store;
        const thp::AttentionDump dump = thp::attention_weights(
            store, data->seqs[static_cast<size_t>(seq_index)], model->m.config);

        ordered_json j;
        j["num_layers"] = dump.num_layers;
        j["num_heads"] = dump.num_heads;
        j["length"] = dump.length;
        ordered_json layers = ordered_json::array();
        const int L = dump.length;
        for (int layer = 0; layer < dump.num_layers; ++layer) {
            ordered_json heads = ordered_json::array();
            for (int head = 0; head < dump.num_heads; ++head) {
                const std::vector<double>& w =
                    dump.weights[static_cast<size_t>(layer * dump.num_heads + head)];
                ordered_json rows = ordered_json::array();
                for (int r = 0; r < L; ++r) {
                    ordered_json row = ordered_json::array();
                    for (int c = 0; c < L; ++c) row.push_back(w[static_cast<size_t>(r * L + c)]);
                    rows.push_back(std::move(row));
                }
                heads.push_back(std::move(rows));
            }
            layers.push_back(std::move(heads));
        }
        j["weights"] = std::move(layers);
        *dump_json_out = copy_out(j.dump());
        if (*dump_json_out == nullptr) throw std::bad_alloc();
    });
}

void thp_string_free(char* s) { std::free(s); }

}  // extern "C"
