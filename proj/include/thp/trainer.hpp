#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "thp/config.hpp"
#include "thp/dataset.hpp"
#include "thp/likelihood.hpp"
#include "thp/model.hpp"
#include "thp/parameters.hpp"

namespace thp {

// ---- optimizer ----

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One Adam update over every trainable tensor, using the store's accumulated
// gradients (missing gradients count as zero). step is 1-based and drives
// the bias correction. Non-finite gradients raise an error naming the tensor.
void adam_step(ParamStore& store, const AdamOptions& opt, long long step);

// ---- training ----

// One line of the training log, mirrored verbatim into the JSONL loss log.
// Values are sums over the epoch's training split; per_event_ll is in raw
// (unscaled) time units.
struct EpochRecord {
    int epoch = 0;
    double event_ll = 0.0;
    double nonevent = 0.0;
    double type_loss = 0.0;
    double time_loss = 0.0;
    double graph_reg = 0.0;
    double total = 0.0;
    double per_event_ll = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> log;
    int epochs_run = 0;
    int best_epoch = 0;                // epoch whose dev score the final params carry
    double best_dev_per_event_ll = 0.0;  // raw units; 0 when no dev split
    double mean_gap_scaled = 0.0;      // mean inter-event gap of the training split
};

// Full training loop: internal train/dev split, shuffled minibatches, Adam,
// early stopping on dev per-event log-likelihood, best-dev parameters
// restored at the end. graph enables the structured regularizer and must be
// null for a plain config.
TrainResult train(ParamStore& store, const std::vector<EventSequence>& data,
                  const ThpConfig& cfg, const RelationalGraph* graph);

// ---- prediction & evaluation ----

// One next-event prediction per scored event (events 2..L), estimated from
// the hidden state of the predecessor. time is in scaled units.
struct EventPrediction {
    int type = 0;
    double time_scaled = 0.0;
};

// Linear read-outs: type = argmax of the type head, time = time-head value.
std::vector<EventPrediction> predict_heads(ParamStore& store, const EventSequence& seq,
                                           const ThpConfig& cfg);

// Density read-outs: expected next time under p(t) = lambda(t) exp(-int
// lambda), integrated on a fixed grid over a horizon of
// density_horizon_gaps mean gaps; type = argmax intensity at that time.
std::vector<EventPrediction> predict_density(ParamStore& store, const EventSequence& seq,
                                             const ThpConfig& cfg, double mean_gap_scaled);

struct EvalReport {
    double per_event_ll = 0.0;  // raw time units
    double accuracy = 0.0;
    double time_rmse = 0.0;  // raw time units
    long long scored_events = 0;
    int sequences = 0;
    // bootstrap spread over resampled sequence sets (0 resamples = absent)
    int resamples = 0;
    double per_event_ll_std = 0.0;
    double accuracy_std = 0.0;
    double time_rmse_std = 0.0;
};

// Scores held-out data: per-event log-likelihood (config's integral
// estimator, deterministic seeds), next-type accuracy, next-time RMSE.
// density_prediction switches the head read-outs for the density ones;
// resamples > 0 adds a seeded bootstrap over sequences.
EvalReport evaluate(ParamStore& store, const std::vector<EventSequence>& data,
                    const ThpConfig& cfg, bool density_prediction = false, int resamples = 0,
                    double mean_gap_scaled = 0.0);

// Post-softmax attention weights of every (layer, head) for one sequence,
// evaluation mode, layer-major order; each matrix is L x L row-major.
struct AttentionDump {
    int num_layers = 0;
    int num_heads = 0;
    int length = 0;
    std::vector<std::vector<double>> weights;
};

AttentionDump attention_weights(ParamStore& store, const EventSequence& seq,
                                const ThpConfig& cfg);

// ---- gradient checking ----

// Compares the analytic gradient of a scalar objective against central
// finite differences. objective(true) must accumulate gradients into the
// store exactly once and return the value; objective(false) must only
// return the value. Relative error |a - n| / max(|a|, |n|, 1e-8), maximized
// over every element of every trainable tensor.
struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_param;
    int worst_index = -1;
};

GradCheckResult grad_check(ParamStore& store,
                           const std::function<double(bool accumulate)>& objective,
                           double step = 1e-5);

// ---- model directory ----

// A trained model as stored on disk: tensor archive + manifest carrying the
// config, the optional relational graph, and summary statistics.
struct TrainedModel {
    ThpConfig config;
    ParamStore store;
    std::optional<RelationalGraph> graph;
    double mean_gap_scaled = 0.0;
};

void save_model(const std::string& dir, const ParamStore& store, const ThpConfig& cfg,
                const RelationalGraph* graph, double mean_gap_scaled);
TrainedModel load_model(const std::string& dir);

}  // namespace thp
