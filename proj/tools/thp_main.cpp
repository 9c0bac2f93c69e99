// Command-line front end for the event-sequence engine. Talks to the engine
// exclusively through the C API so the binary doubles as a smoke test of the
// shared-library surface.
#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "thp/thp.h"

namespace {

// Exit codes mirror thp_status: 0 ok, 1 usage, 2 data validation, 3 numeric.
int report_failure(thp_status status) {
    std::fprintf(stderr, "error: %s\n", thp_last_error());
    return static_cast<int>(status);
}

bool read_file(const std::string& path, std::string& out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    std::ostringstream buf;
    buf << in.rdbuf();
    out = buf.str();
    return true;
}

struct DatasetHandle {
    thp_dataset* ptr = nullptr;
    ~DatasetHandle() { thp_dataset_free(ptr); }
};

struct ModelHandle {
    thp_model* ptr = nullptr;
    ~ModelHandle() { thp_model_free(ptr); }
};

int run_simulate(const std::string& config_path, const std::string& out_path) {
    std::string config;
    if (!read_file(config_path, config)) {
        std::fprintf(stderr, "error: cannot read config file %s\n", config_path.c_str());
        return 1;
    }
    DatasetHandle data;
    thp_status status = thp_dataset_simulate(config.c_str(), &data.ptr);
    if (status != THP_OK) return report_failure(status);
    status = thp_dataset_save(data.ptr, out_path.c_str());
    if (status != THP_OK) return report_failure(status);
    return 0;
}

int run_train(const std::string& data_path, const std::string& config_path,
              const std::string& graph_path, const std::string& model_dir) {
    std::string config;
    if (!read_file(config_path, config)) {
        std::fprintf(stderr, "error: cannot read config file %s\n", config_path.c_str());
        return 1;
    }
    std::string graph;
    if (!graph_path.empty() && !read_file(graph_path, graph)) {
        std::fprintf(stderr, "error: cannot read graph file %s\n", graph_path.c_str());
        return 1;
    }
    DatasetHandle data;
    thp_status status = thp_dataset_load(data_path.c_str(), &data.ptr);
    if (status != THP_OK) return report_failure(status);

    const std::string loss_log = model_dir + "/loss_log.jsonl";
    status = thp_train(data.ptr, config.c_str(), graph.empty() ? nullptr : graph.c_str(),
                       model_dir.c_str(), loss_log.c_str());
    if (status != THP_OK) return report_failure(status);
    return 0;
}

int run_eval(const std::string& data_path, const std::string& model_dir, bool density,
             int resamples) {
    DatasetHandle data;
    thp_status status = thp_dataset_load(data_path.c_str(), &data.ptr);
    if (status != THP_OK) return report_failure(status);
    ModelHandle model;
    status = thp_model_load(model_dir.c_str(), &model.ptr);
    if (status != THP_OK) return report_failure(status);

    char* report = nullptr;
    status = thp_evaluate(model.ptr, data.ptr, density ? 1 : 0, resamples, &report);
    if (status != THP_OK) return report_failure(status);
    std::printf("%s\n", report);
    thp_string_free(report);
    return 0;
}

int run_attention_dump(const std::string& data_path, const std::string& model_dir,
                       long long seq_index, const std::string& out_path) {
    DatasetHandle data;
    thp_status status = thp_dataset_load(data_path.c_str(), &data.ptr);
    if (status != THP_OK) return report_failure(status);
    ModelHandle model;
    status = thp_model_load(model_dir.c_str(), &model.ptr);
    if (status != THP_OK) return report_failure(status);

    char* dump = nullptr;
    status = thp_attention_dump(model.ptr, data.ptr, seq_index, &dump);
    if (status != THP_OK) return report_failure(status);
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) {
        thp_string_free(dump);
        std::fprintf(stderr, "error: cannot write %s\n", out_path.c_str());
        return 1;
    }
    out << dump << "\n";
    thp_string_free(dump);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-attentive point-process engine: simulate, train, evaluate"};
    app.require_subcommand(1);

    std::string sim_config, sim_out;
    CLI::App* simulate = app.add_subcommand("simulate", "Draw event sequences from a classical "
                                                        "self-exciting process");
    simulate->add_option("--config", sim_config, "simulator config JSON file")->required();
    simulate->add_option("--out", sim_out, "output dataset (JSON lines)")->required();

    std::string train_data, train_config, train_graph, train_out;
    CLI::App* train = app.add_subcommand("train", "Fit a model by maximum likelihood");
    train->add_option("--data", train_data, "training dataset (JSON lines)")->required();
    train->add_option("--config", train_config, "model/training config JSON file")->required();
    train->add_option("--graph", train_graph, "relational graph JSON file (structured mode)");
    train->add_option("--out", train_out, "output model directory")->required();

    std::string eval_data, eval_model;
    bool eval_density = false;
    int eval_resamples = 0;
    CLI::App* eval = app.add_subcommand("eval", "Score a dataset with a trained model");
    eval->add_option("--data", eval_data, "dataset to score (JSON lines)")->required();
    eval->add_option("--model", eval_model, "model directory")->required();
    eval->add_flag("--density-prediction", eval_density,
                   "predict via the intensity's density instead of the linear heads");
    eval->add_option("--resample", eval_resamples,
                     "bootstrap resamples over sequences for error bars")
        ->check(CLI::NonNegativeNumber);

    std::string att_data, att_model, att_out;
    long long att_seq = 0;
    CLI::App* att = app.add_subcommand("attention-dump",
                                       "Write one sequence's attention weights as JSON");
    att->add_option("--data", att_data, "dataset (JSON lines)")->required();
    att->add_option("--model", att_model, "model directory")->required();
    att->add_option("--seq", att_seq, "sequence index within the dataset")->required();
    att->add_option("--out", att_out, "output JSON file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (simulate->parsed()) return run_simulate(sim_config, sim_out);
    if (train->parsed()) return run_train(train_data, train_config, train_graph, train_out);
    if (eval->parsed()) return run_eval(eval_data, eval_model, eval_density, eval_resamples);
    if (att->parsed()) return run_attention_dump(att_data, att_model, att_seq, att_out);
    return 1;
}
