#include "thp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "thp/errors.hpp"

namespace thp {

namespace {

std::vector<std::vector<double>> snapshot_values(const ParamStore& store) {
    std::vector<std::vector<double>> out;
    out.reserve(store.tensors().size());
    for (const ParamTensor& t : store.tensors()) out.push_back(t.value);
    return out;
}

void restore_values(ParamStore& store, const std::vector<std::vector<double>>& values) {
    for (size_t i = 0; i < store.tensors().size(); ++i) store.tensors()[i].value = values[i];
}

int argmax_row(const double* row, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (row[i] > row[best]) best = i;
    return best;
}

// Mean inter-event gap of the data in the config's scaled units.
double mean_gap(const std::vector<EventSequence>& data, double time_scale) {
    double sum = 0.0;
    long long n = 0;
    for (const EventSequence& seq : data) {
        for (size_t j = 1; j < seq.events.size(); ++j) {
            sum += seq.events[j].t - seq.events[j - 1].t;
            ++n;
        }
    }
    return n == 0 ? 0.0 : (sum / static_cast<double>(n)) / time_scale;
}

AttentionMode mode_for(const ThpConfig& cfg) {
    return cfg.structured() ? AttentionMode::structured : AttentionMode::plain;
}

}  // namespace

void adam_step(ParamStore& store, const AdamOptions& opt, long long step) {
    if (step < 1) throw ConfigError("adam_step: step must be 1-based");
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
    for (ParamTensor& t : store.tensors()) {
        if (!t.trainable) continue;
        const size_t n = t.value.size();
        if (t.m.empty()) t.m.assign(n, 0.0);
        if (t.v.empty()) t.v.assign(n, 0.0);
        const bool has_grad = !t.grad.empty();
        for (size_t i = 0; i < n; ++i) {
            const double g = has_grad ? t.grad[i] : 0.0;
            if (!std::isfinite(g))
                throw NumericError("adam_step: non-finite gradient in parameter " + t.name);
            t.m[i] = opt.beta1 * t.m[i] + (1.0 - opt.beta1) * g;
            t.v[i] = opt.beta2 * t.v[i] + (1.0 - opt.beta2) * g * g;
            const double mhat = t.m[i] / bc1;
            const double vhat = t.v[i] / bc2;
            t.value[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
        }
    }
}

TrainResult train(ParamStore& store, const std::vector<EventSequence>& data,
                  const ThpConfig& cfg, const RelationalGraph* graph) {
    cfg.validate();
    if (graph != nullptr && !cfg.structured())
        throw ConfigError("train: a relational graph needs a config with vertices");
    if (data.empty()) throw DataError("train: dataset is empty");
    for (size_t i = 0; i < data.size(); ++i)
        if (data[i].events.size() < 2)
            throw DataError("train: sequence " + std::to_string(i) +
                            " has fewer than two events and cannot be scored");

    // Internal train/dev split; too little data for a dev part disables
    // early stopping rather than failing.
    std::vector<EventSequence> train_set;
    std::vector<EventSequence> dev_set;
    const long long dev_n =
        static_cast<long long>(cfg.dev_ratio * static_cast<double>(data.size()) + 1e-9);
    if (cfg.dev_ratio > 0.0 && dev_n >= 1) {
        DatasetSplit split = split_dataset(data, 1.0 - cfg.dev_ratio, cfg.dev_ratio, 0.0,
                                           mix_seed(cfg.seed, 11));
        train_set = std::move(split.train);
        dev_set = std::move(split.dev);
    } else {
        train_set = data;
    }

    TrainResult result;
    result.mean_gap_scaled = mean_gap(train_set, cfg.time_scale);

    const bool use_reg = graph != nullptr && cfg.graph_reg_weight != 0.0;
    const double reg_weight = use_reg ? cfg.graph_reg_weight : 0.0;
    AdamOptions adam;
    adam.lr = cfg.learning_rate;

    UniformRng shuffle_rng(mix_seed(cfg.seed, 101));
    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    long long step = 0;
    double best_dev = -std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int epochs_since_best = 0;
    std::vector<std::vector<double>> best_values;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        LossBreakdown sums;

        const size_t batch_size = static_cast<size_t>(cfg.batch_size);
        for (size_t begin = 0, batch = 0; begin < order.size(); begin += batch_size, ++batch) {
            const size_t end = std::min(begin + batch_size, order.size());
            store.zero_grads();
            int pad_to = 0;
            for (size_t i = begin; i < end; ++i)
                pad_to = std::max(pad_to,
                                  static_cast<int>(train_set[static_cast<size_t>(order[i])]
                                                       .events.size()));
            try {
                for (size_t i = begin; i < end; ++i) {
                    const std::uint64_t slot = static_cast<std::uint64_t>(i - begin);
                    const EventSequence& seq = train_set[static_cast<size_t>(order[i])];
                    PreparedSequence ps = prepare_sequence(seq, cfg, pad_to);

                    UniformRng dropout_rng(mix_seed(
                        mix_seed(mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)),
                                 batch),
                        slot));
                    UniformRng mc_rng(mix_seed(
                        mix_seed(mix_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(epoch)),
                                 batch),
                        slot));

                    ad::Graph g;
                    GraphBinding p(g, store);
                    EncodeOptions opt;
                    opt.mode = mode_for(cfg);
                    opt.dropout_rng = cfg.dropout > 0.0 ? &dropout_rng : nullptr;
                    SequenceLoss sl;
                    const ad::Var objective =
                        sequence_objective(g, p, ps, cfg, opt, &mc_rng, &sl);
                    g.backward(objective);
                    p.harvest();
                    sums.add(sl);
                }
                if (use_reg) {
                    ad::Graph g;
                    GraphBinding p(g, store);
                    const ad::Var reg = graph_regularizer(g, p, *graph, cfg);
                    g.backward(ad::scale(reg, -cfg.graph_reg_weight));
                    p.harvest();
                    sums.graph_reg += reg.value()[0];
                }
                adam_step(store, adam, ++step);
            } catch (const NumericError& e) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batch) + ": " + e.what());
            }
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.event_ll = sums.event_ll;
        rec.nonevent = sums.nonevent;
        rec.type_loss = sums.type_loss;
        rec.time_loss = sums.time_loss;
        rec.graph_reg = sums.graph_reg;
        rec.total = sums.total(reg_weight);
        rec.per_event_ll =
            sums.scored_events == 0
                ? 0.0
                : (sums.event_ll - sums.nonevent) / sums.scored_events -
                      std::log(cfg.time_scale);
        result.log.push_back(rec);
        result.epochs_run = epoch;

        if (!dev_set.empty()) {
            const EvalReport dev = evaluate(store, dev_set, cfg, false, 0,
                                            result.mean_gap_scaled);
            if (dev.per_event_ll > best_dev) {
                best_dev = dev.per_event_ll;
                best_epoch = epoch;
                best_values = snapshot_values(store);
                epochs_since_best = 0;
            } else if (++epochs_since_best >= cfg.patience) {
                break;
            }
        }
    }

    if (!dev_set.empty() && !best_values.empty()) {
        restore_values(store, best_values);
        result.best_epoch = best_epoch;
        result.best_dev_per_event_ll = best_dev;
    } else {
        result.best_epoch = result.epochs_run;
    }
    return result;
}

std::vector<EventPrediction> predict_heads(ParamStore& store, const EventSequence& seq,
                                           const ThpConfig& cfg) {
    const PreparedSequence ps = prepare_sequence(seq, cfg);
    if (ps.real_len < 2) throw DataError("predict: sequence needs at least two events");
    ad::Graph g;
    GraphBinding p(g, store);
    EncodeOptions opt;
    opt.mode = mode_for(cfg);
    const ad::Var hidden = encode(g, p, ps, cfg, opt);

    std::vector<int> anchors(static_cast<size_t>(ps.real_len - 1));
    std::iota(anchors.begin(), anchors.end(), 0);
    const ad::Var anchored = g.gather_rows(hidden, anchors);
    const ad::Var type_scores = ad::matmul(anchored, ad::transpose(p["head.type.w"]));
    const ad::Var time_values = ad::matmul(anchored, ad::transpose(p["head.time.w"]));

    const std::vector<double>& scores = type_scores.value();
    const std::vector<double>& times = time_values.value();
    std::vector<EventPrediction> out(static_cast<size_t>(ps.real_len - 1));
    for (int q = 0; q < ps.real_len - 1; ++q) {
        out[static_cast<size_t>(q)].type =
            argmax_row(scores.data() + static_cast<size_t>(q) * cfg.num_types, cfg.num_types);
        out[static_cast<size_t>(q)].time_scaled = times[static_cast<size_t>(q)];
    }
    return out;
}

std::vector<EventPrediction> predict_density(ParamStore& store, const EventSequence& seq,
                                             const ThpConfig& cfg, double mean_gap_scaled) {
    const PreparedSequence ps = prepare_sequence(seq, cfg);
    if (ps.real_len < 2) throw DataError("predict: sequence needs at least two events");
    ad::Graph g;
    GraphBinding p(g, store);
    EncodeOptions opt;
    opt.mode = mode_for(cfg);
    const ad::Var hidden = encode(g, p, ps, cfg, opt);
    const std::vector<double>& h = hidden.value();

    // Horizon in scaled units: the training-set mean gap when known,
    // otherwise the sequence's own mean gap.
    double horizon_gap = mean_gap_scaled;
    if (!(horizon_gap > 0.0)) {
        double sum = 0.0;
        for (int j = 1; j < ps.real_len; ++j)
            sum += ps.times[static_cast<size_t>(j)] - ps.times[static_cast<size_t>(j - 1)];
        horizon_gap = sum / (ps.real_len - 1);
    }
    const double horizon = cfg.density_horizon_gaps * horizon_gap;
    if (!(horizon > 0.0)) throw NumericError("predict_density: no usable time horizon");

    const int grid = std::max(cfg.density_grid, 2);
    const IntensityView view = intensity_view(store, cfg);
    const int num_types = cfg.num_types;

    std::vector<EventPrediction> out(static_cast<size_t>(ps.real_len - 1));
    std::vector<double> lam(static_cast<size_t>(grid));
    for (int q = 0; q < ps.real_len - 1; ++q) {
        IntervalContext ctx;
        ctx.anchor_time = ps.times[static_cast<size_t>(q)];
        ctx.hidden = h.data() + static_cast<size_t>(q) * cfg.model_dim;
        ctx.interval_end = std::numeric_limits<double>::infinity();

        const double dt = horizon / (grid - 1);
        double cumulative = 0.0;
        double mass = 0.0;
        double first_moment = 0.0;
        double prev_density = 0.0;
        double prev_t = ctx.anchor_time;
        for (int i = 0; i < grid; ++i) {
            const double t = ctx.anchor_time + i * dt;
            const double intensity = total_intensity(t, ctx, view);
            if (i > 0) cumulative += 0.5 * (lam[static_cast<size_t>(i - 1)] + intensity) * dt;
            lam[static_cast<size_t>(i)] = intensity;
            const double density = intensity * std::exp(-cumulative);
            if (i > 0) {
                mass += 0.5 * (prev_density + density) * dt;
                first_moment += 0.5 * (prev_density * prev_t + density * t) * dt;
            }
            prev_density = density;
            prev_t = t;
        }
        if (!std::isfinite(mass) || mass <= 0.0 || !std::isfinite(first_moment))
            throw NumericError("predict_density: density integration failed at event " +
                               std::to_string(q + 1));
        const double expected_t = first_moment / mass;
        out[static_cast<size_t>(q)].time_scaled = expected_t;

        int best_type = 0;
        double best_value = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < num_types; ++k) {
            const double value = type_intensity(expected_t, ctx, k, view);
            if (value > best_value) {
                best_value = value;
                best_type = k;
            }
        }
        out[static_cast<size_t>(q)].type = best_type;
    }
    return out;
}

EvalReport evaluate(ParamStore& store, const std::vector<EventSequence>& data,
                    const ThpConfig& cfg, bool density_prediction, int resamples,
                    double mean_gap_scaled) {
    if (data.empty()) throw DataError("evaluate: dataset is empty");

    struct SeqStat {
        double ll = 0.0;  // scaled units
        long long scored = 0;
        long long correct = 0;
        double sq_err = 0.0;  // raw units
    };
    std::vector<SeqStat> stats(data.size());

    for (size_t idx = 0; idx < data.size(); ++idx) {
        const EventSequence& seq = data[idx];
        if (seq.events.size() < 2)
            throw DataError("evaluate: sequence " + std::to_string(idx) +
                            " has fewer than two events");
        const PreparedSequence ps = prepare_sequence(seq, cfg);

        ad::Graph g;
        GraphBinding p(g, store);
        EncodeOptions opt;
        opt.mode = mode_for(cfg);
        const ad::Var hidden = encode(g, p, ps, cfg, opt);
        const ad::Var events = event_term(g, p, hidden, ps, cfg);
        ad::Var integral;
        if (cfg.integral_estimator == IntegralEstimator::monte_carlo) {
            UniformRng mc_rng(mix_seed(mix_seed(cfg.seed, 9001), idx));
            integral = nonevent_mc(g, p, hidden, ps, cfg, cfg.mc_samples, mc_rng);
        } else {
            integral = nonevent_trapezoidal(g, p, hidden, ps, cfg);
        }

        SeqStat& s = stats[idx];
        s.ll = events.value()[0] - integral.value()[0];
        s.scored = ps.real_len - 1;

        const std::vector<EventPrediction> preds =
            density_prediction ? predict_density(store, seq, cfg, mean_gap_scaled)
                               : predict_heads(store, seq, cfg);
        for (size_t q = 0; q < preds.size(); ++q) {
            const Event& target = seq.events[q + 1];
            if (preds[q].type == target.type) ++s.correct;
            const double predicted_raw = preds[q].time_scaled * cfg.time_scale;
            s.sq_err += (predicted_raw - target.t) * (predicted_raw - target.t);
        }
    }

    const auto aggregate = [&](const std::vector<const SeqStat*>& chosen, EvalReport& r) {
        double ll = 0.0, sq = 0.0;
        long long scored = 0, correct = 0;
        for (const SeqStat* s : chosen) {
            ll += s->ll;
            sq += s->sq_err;
            scored += s->scored;
            correct += s->correct;
        }
        r.scored_events = scored;
        r.per_event_ll = ll / static_cast<double>(scored) - std::log(cfg.time_scale);
        r.accuracy = static_cast<double>(correct) / static_cast<double>(scored);
        r.time_rmse = std::sqrt(sq / static_cast<double>(scored));
    };

    EvalReport report;
    report.sequences = static_cast<int>(data.size());
    std::vector<const SeqStat*> all;
    all.reserve(stats.size());
    for (const SeqStat& s : stats) all.push_back(&s);
    aggregate(all, report);

    if (resamples > 0) {
        UniformRng rng(mix_seed(cfg.seed, 7007));
        std::vector<double> lls, accs, rmses;
        lls.reserve(static_cast<size_t>(resamples));
        for (int b = 0; b < resamples; ++b) {
            std::vector<const SeqStat*> chosen(stats.size());
            for (size_t i = 0; i < stats.size(); ++i) chosen[i] = &stats[rng.index(stats.size())];
            EvalReport r;
            aggregate(chosen, r);
            lls.push_back(r.per_event_ll);
            accs.push_back(r.accuracy);
            rmses.push_back(r.time_rmse);
        }
        const auto stddev = [](const std::vector<double>& xs) {
            double mean = 0.0;
            for (double x : xs) mean += x;
            mean /= static_cast<double>(xs.size());
            double var = 0.0;
            for (double x : xs) var += (x - mean) * (x - mean);
            return std::sqrt(var / static_cast<double>(xs.size()));
        };
        report.resamples = resamples;
        report.per_event_ll_std = stddev(lls);
        report.accuracy_std = stddev(accs);
        report.time_rmse_std = stddev(rmses);
    }
    return report;
}

AttentionDump attention_weights(ParamStore& store, const EventSequence& seq,
                                const ThpConfig& cfg) {
    const PreparedSequence ps = prepare_sequence(seq, cfg);
    AttentionDump dump;
    dump.num_layers = cfg.num_layers;
    dump.num_heads = cfg.num_heads;
    dump.length = ps.total_len();

    ad::Graph g;
    GraphBinding p(g, store);
    EncodeOptions opt;
    opt.mode = mode_for(cfg);
    opt.attention_out = &dump.weights;
    (void)encode(g, p, ps, cfg, opt);
    return dump;
}

GradCheckResult grad_check(ParamStore& store,
                           const std::function<double(bool accumulate)>& objective,
                           double step) {
    store.zero_grads();
    (void)objective(true);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(store.tensors().size());
    for (const ParamTensor& t : store.tensors())
        analytic.push_back(t.grad.empty() ? std::vector<double>(t.value.size(), 0.0) : t.grad);

    GradCheckResult result;
    for (size_t ti = 0; ti < store.tensors().size(); ++ti) {
        ParamTensor& t = store.tensors()[ti];
        if (!t.trainable) continue;
        for (size_t i = 0; i < t.value.size(); ++i) {
            const double saved = t.value[i];
            t.value[i] = saved + step;
            const double up = objective(false);
            t.value[i] = saved - step;
            const double down = objective(false);
            t.value[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[ti][i];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                result.worst_param = t.name;
                result.worst_index = static_cast<int>(i);
            }
        }
    }
    store.zero_grads();
    return result;
}

void save_model(const std::string& dir, const ParamStore& store, const ThpConfig& cfg,
                const RelationalGraph* graph, double mean_gap_scaled) {
    nlohmann::ordered_json extra;
    extra["config"] = cfg.to_json();
    if (graph != nullptr) {
        extra["graph"] = {{"num_vertices", graph->num_vertices()}, {"edges", graph->edges()}};
    } else {
        extra["graph"] = nullptr;
    }
    extra["stats"] = {{"mean_gap_scaled", mean_gap_scaled}};
    store.save(dir, extra);
}

TrainedModel load_model(const std::string& dir) {
    nlohmann::json manifest;
    ParamStore store = ParamStore::load(dir, &manifest);
    TrainedModel model{ThpConfig::from_json(manifest.at("config")), std::move(store),
                       std::nullopt, 0.0};
    const nlohmann::json& gj = manifest.at("graph");
    if (!gj.is_null()) {
        std::vector<std::pair<int, int>> edges;
        for (const nlohmann::json& e : gj.at("edges"))
            edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
        model.graph.emplace(gj.at("num_vertices").get<int>(), std::move(edges));
    }
    model.mean_gap_scaled = manifest.at("stats").at("mean_gap_scaled").get<double>();
    return model;
}

}  // namespace thp
