#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include "thp/errors.hpp"
#include "thp/hawkes.hpp"
#include "thp/likelihood.hpp"
#include "thp/trainer.hpp"

using namespace thp;

namespace {

EventSequence make_seq(const std::vector<double>& times, const std::vector<int>& types,
                       const std::vector<int>& vertices = {}) {
    EventSequence seq;
    for (size_t i = 0; i < times.size(); ++i) {
        Event e;
        e.t = times[i];
        e.type = types[i];
        if (!vertices.empty()) e.vertex = vertices[i];
        seq.events.push_back(e);
    }
    return seq;
}

ThpConfig small_config(int num_types, int num_vertices = 0) {
    ThpConfig cfg;
    cfg.num_types = num_types;
    cfg.num_vertices = num_vertices;
    cfg.model_dim = 4;
    cfg.key_dim = 2;
    cfg.value_dim = 2;
    cfg.hidden_dim = 4;
    cfg.num_heads = 2;
    cfg.num_layers = 1;
    cfg.dropout = 0.0;
    cfg.integral_estimator = IntegralEstimator::trapezoidal;
    return cfg;
}

// Sets every component intensity to the constant softplus(0) = log 2 and
// silences both prediction heads, regardless of the encoder output.
void neutralize_heads(ParamStore& store) {
    for (double& v : store.at("intensity.alpha").value) v = 0.0;
    for (double& v : store.at("intensity.w").value) v = 0.0;
    for (double& v : store.at("intensity.b").value) v = 0.0;
    for (double& v : store.at("intensity.log_beta").value) v = 0.0;
    for (double& v : store.at("head.type.w").value) v = 0.0;
    for (double& v : store.at("head.time.w").value) v = 0.0;
}

bool stores_equal(const ParamStore& a, const ParamStore& b) {
    if (a.tensors().size() != b.tensors().size()) return false;
    for (size_t i = 0; i < a.tensors().size(); ++i) {
        const ParamTensor& x = a.tensors()[i];
        const ParamTensor& y = b.tensors()[i];
        if (x.name != y.name || x.value != y.value || x.trainable != y.trainable) return false;
    }
    return true;
}

std::vector<EventSequence> hawkes_dataset(int n, double window, std::uint64_t seed) {
    HawkesParams hp;
    hp.mu = {0.5};
    hp.alpha = {{0.5}};
    hp.beta = {{1.0}};
    std::vector<EventSequence> data;
    UniformRng rng(seed);
    while (static_cast<int>(data.size()) < n) {
        EventSequence seq = ogata_simulate(hp, window, rng);
        if (seq.events.size() >= 3) data.push_back(std::move(seq));
    }
    return data;
}

}  // namespace

// ---- optimizer ----

TEST_CASE("Adam: first-step size, quadratic convergence, frozen and gradless tensors") {
    ParamStore store;
    store.create("w", {1, 1}, {1.0});
    store.create("frozen", {1, 1}, {0.5}).trainable = false;
    store.create_zeros("idle", {1, 1});

    AdamOptions opt;
    opt.lr = 0.05;

    // minimize f(w) = w^2 / 2, gradient w
    store.at("w").grad = {store.at("w").value[0]};
    store.at("frozen").grad = {123.0};  // must be ignored
    adam_step(store, opt, 1);
    // bias-corrected first step moves by lr / (1 + eps)
    CHECK(store.at("w").value[0] == doctest::Approx(1.0 - opt.lr).epsilon(1e-6));
    CHECK(store.at("frozen").value[0] == 0.5);
    CHECK(store.at("idle").value[0] == 0.0);

    for (long long step = 2; step <= 500; ++step) {
        store.at("w").grad = {store.at("w").value[0]};
        adam_step(store, opt, step);
    }
    CHECK(std::abs(store.at("w").value[0]) < 1e-2);

    store.at("w").grad = {std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(adam_step(store, opt, 501), NumericError);
    CHECK_THROWS_AS(adam_step(store, opt, 0), ConfigError);
}

// ---- train loop mechanics ----

TEST_CASE("zero learning rate: parameters frozen, constant dev metric stops on patience") {
    ThpConfig cfg = small_config(2);
    cfg.learning_rate = 0.0;
    cfg.epochs = 50;
    cfg.patience = 3;
    cfg.dev_ratio = 0.5;
    cfg.batch_size = 4;
    cfg.seed = 42;

    const std::vector<EventSequence> data = {
        make_seq({0.5, 1.2, 2.0}, {0, 1, 0}),
        make_seq({0.4, 1.5, 2.2, 3.3}, {1, 0, 0, 1}),
        make_seq({0.9, 1.3, 2.8}, {1, 1, 0}),
        make_seq({0.3, 0.8, 1.6, 2.4}, {0, 1, 1, 0}),
    };

    UniformRng rng(cfg.seed);
    ParamStore store = init_params(cfg, rng);
    const ParamStore before = store;
    const TrainResult result = train(store, data, cfg, nullptr);

    CHECK(stores_equal(store, before));
    // epoch 1 sets the best dev metric; three flat epochs then stop
    CHECK(result.epochs_run == 1 + cfg.patience);
    CHECK(result.best_epoch == 1);
    CHECK(static_cast<int>(result.log.size()) == result.epochs_run);
    for (const EpochRecord& rec : result.log) {
        CHECK(rec.per_event_ll ==
              doctest::Approx(result.log.front().per_event_ll).epsilon(1e-10));
    }
}

TEST_CASE("training is reproducible from the seed, including dropout and MC draws") {
    ThpConfig cfg = small_config(2);
    cfg.dropout = 0.1;
    cfg.integral_estimator = IntegralEstimator::monte_carlo;
    cfg.mc_samples = 4;
    cfg.learning_rate = 0.01;
    cfg.epochs = 3;
    cfg.batch_size = 2;
    cfg.dev_ratio = 0.25;
    cfg.patience = 10;
    cfg.seed = 99;

    std::vector<EventSequence> data;
    for (int i = 0; i < 8; ++i) {
        const double base = 0.3 + 0.1 * i;
        data.push_back(make_seq({base, base + 0.7, base + 1.1, base + 2.0},
                                {i % 2, (i + 1) % 2, i % 2, 0}));
    }

    const auto run = [&](const ThpConfig& c) {
        UniformRng rng(c.seed);
        ParamStore store = init_params(c, rng);
        TrainResult r = train(store, data, c, nullptr);
        return std::make_pair(std::move(store), std::move(r));
    };

    auto [store_a, res_a] = run(cfg);
    auto [store_b, res_b] = run(cfg);
    CHECK(stores_equal(store_a, store_b));
    REQUIRE(res_a.log.size() == res_b.log.size());
    for (size_t i = 0; i < res_a.log.size(); ++i) {
        CHECK(res_a.log[i].total == res_b.log[i].total);
        CHECK(res_a.log[i].per_event_ll == res_b.log[i].per_event_ll);
    }

    ThpConfig other = cfg;
    other.seed = 100;
    auto [store_c, res_c] = run(other);
    CHECK_FALSE(stores_equal(store_a, store_c));
}

TEST_CASE("epoch records are internally consistent and mean gap matches the data") {
    ThpConfig cfg = small_config(1);
    cfg.learning_rate = 1e-3;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.dev_ratio = 0.0;  // keep every sequence in the train split
    cfg.time_scale = 2.0;
    cfg.seed = 7;

    const std::vector<EventSequence> data = {
        make_seq({1.0, 2.5, 4.0}, {0, 0, 0}),
        make_seq({0.8, 1.4, 3.0, 3.8}, {0, 0, 0, 0}),
    };

    UniformRng rng(cfg.seed);
    ParamStore store = init_params(cfg, rng);
    const TrainResult result = train(store, data, cfg, nullptr);

    CHECK(result.epochs_run == 2);
    CHECK(result.best_epoch == 2);  // no dev set: last epoch stands
    // gaps: (1.5, 1.5) and (0.6, 1.6, 0.8), scaled by 1/2
    const double gap = (1.5 + 1.5 + 0.6 + 1.6 + 0.8) / 5.0 / 2.0;
    CHECK(result.mean_gap_scaled == doctest::Approx(gap).epsilon(1e-12));

    for (const EpochRecord& rec : result.log) {
        CHECK(rec.total ==
              doctest::Approx(-(rec.event_ll - rec.nonevent) + rec.type_loss + rec.time_loss)
                  .epsilon(1e-12));
        CHECK(rec.per_event_ll ==
              doctest::Approx((rec.event_ll - rec.nonevent) / 5.0 - std::log(2.0))
                  .epsilon(1e-12));
    }
}

TEST_CASE("structured training applies the graph regularizer once per batch") {
    ThpConfig cfg = small_config(1, 3);
    cfg.learning_rate = 1e-3;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    cfg.dev_ratio = 0.0;
    cfg.graph_reg_weight = 0.1;
    cfg.freeze_similarity = true;  // keeps every similarity logit at zero
    cfg.seed = 13;

    const RelationalGraph graph(3, {{0, 1}, {1, 2}});
    const std::vector<EventSequence> data = {
        make_seq({0.5, 1.0, 1.7}, {0, 0, 0}, {0, 1, 2}),
        make_seq({0.4, 1.2, 2.1}, {0, 0, 0}, {2, 0, 1}),
        make_seq({0.6, 1.1, 1.9}, {0, 0, 0}, {1, 1, 0}),
        make_seq({0.3, 0.9, 1.5}, {0, 0, 0}, {0, 2, 2}),
    };

    UniformRng rng(cfg.seed);
    ParamStore store = init_params(cfg, rng);
    const TrainResult result = train(store, data, cfg, &graph);

    // frozen zero similarities: each batch contributes exactly -(3*4/2) log 2
    const double per_batch = -6.0 * std::log(2.0);
    for (const EpochRecord& rec : result.log) {
        CHECK(rec.graph_reg == doctest::Approx(2.0 * per_batch).epsilon(1e-12));
        CHECK(rec.total == doctest::Approx(-(rec.event_ll - rec.nonevent) + rec.type_loss +
                                           rec.time_loss - 0.1 * rec.graph_reg)
                               .epsilon(1e-12));
    }
    for (int h = 0; h < cfg.num_heads; ++h)
        for (double v : store.at("sim." + std::to_string(h)).value) CHECK(v == 0.0);
}

TEST_CASE("training improves the fit on classical Hawkes data") {
    ThpConfig cfg = small_config(1);
    cfg.num_heads = 1;
    cfg.key_dim = 4;
    cfg.value_dim = 4;
    cfg.hidden_dim = 8;
    cfg.learning_rate = 0.01;
    cfg.epochs = 12;
    cfg.batch_size = 8;
    cfg.dev_ratio = 0.25;
    cfg.patience = 12;
    cfg.seed = 5;
    cfg.time_scale = 10.0;  // window is 20 raw units; keep squared-time targets O(1)

    const std::vector<EventSequence> data = hawkes_dataset(24, 20.0, 31337);
    UniformRng rng(cfg.seed);
    ParamStore store = init_params(cfg, rng);
    const TrainResult result = train(store, data, cfg, nullptr);

    REQUIRE(result.log.size() >= 2);
    CHECK(result.log.back().per_event_ll - result.log.front().per_event_ll > 0.5);
    CHECK(result.best_dev_per_event_ll >
          -std::numeric_limits<double>::infinity());
}

TEST_CASE("train rejects unusable inputs") {
    ThpConfig cfg = small_config(1);
    UniformRng rng(1);
    ParamStore store = init_params(cfg, rng);

    CHECK_THROWS_AS(train(store, {}, cfg, nullptr), DataError);

    const std::vector<EventSequence> data = {make_seq({0.5, 1.0}, {0, 0}),
                                             make_seq({0.7}, {0})};
    CHECK_THROWS_WITH_AS(train(store, data, cfg, nullptr),
                         doctest::Contains("sequence 1"), DataError);

    const RelationalGraph graph(3, {{0, 1}});
    const std::vector<EventSequence> ok = {make_seq({0.5, 1.0}, {0, 0})};
    CHECK_THROWS_AS(train(store, ok, cfg, &graph), ConfigError);
}

// ---- prediction and evaluation ----

TEST_CASE("evaluate matches a closed form when intensities and heads are neutralized") {
    ThpConfig cfg = small_config(2);
    cfg.time_scale = 2.0;
    cfg.seed = 3;
    UniformRng rng(cfg.seed);
    ParamStore store = init_params(cfg, rng);
    neutralize_heads(store);

    const std::vector<EventSequence> data = {
        make_seq({1.0, 2.5, 4.0, 5.5}, {0, 1, 0, 1}),
        make_seq({0.8, 1.4, 3.0}, {1, 1, 0}),
    };

    const EvalReport rep = evaluate(store, data, cfg, false, 0, 0.0);
    CHECK(rep.sequences == 2);
    CHECK(rep.scored_events == 5);

    // every component intensity is log 2, so the total is 2 log 2
    const double lam = 2.0 * std::log(2.0);
    const double ll1 = 3.0 * std::log(lam) - lam * (5.5 - 1.0) / 2.0;
    const double ll2 = 2.0 * std::log(lam) - lam * (3.0 - 0.8) / 2.0;
    CHECK(rep.per_event_ll ==
          doctest::Approx((ll1 + ll2) / 5.0 - std::log(2.0)).epsilon(1e-12));

    // zero heads predict type 0 and time 0 everywhere
    const double correct = 2.0;  // targets: {1,0,1} and {1,0}
    CHECK(rep.accuracy == doctest::Approx(correct / 5.0).epsilon(1e-12));
    const double sq =
        2.5 * 2.5 + 4.0 * 4.0 + 5.5 * 5.5 + 1.4 * 1.4 + 3.0 * 3.0;
    CHECK(rep.time_rmse == doctest::Approx(std::sqrt(sq / 5.0)).epsilon(1e-12));

    const std::vector<EventPrediction> preds = predict_heads(store, data[0], cfg);
    REQUIRE(preds.size() == 3);
    for (const EventPrediction& p : preds) {
        CHECK(p.type == 0);
        CHECK(p.time_scaled == 0.0);
    }
}

TEST_CASE("density prediction recovers the truncated-exponential mean for constant intensity") {
    ThpConfig cfg = small_config(1);
    cfg.density_grid = 2000;
    cfg.density_horizon_gaps = 10.0 / std::log(2.0);  // horizon H with cH = 10
    UniformRng rng(4);
    ParamStore store = init_params(cfg, rng);
    neutralize_heads(store);

    const EventSequence seq = make_seq({1.0, 2.0, 3.5}, {0, 0, 0});
    const std::vector<EventPrediction> preds = predict_density(store, seq, cfg, 1.0);
    REQUIRE(preds.size() == 2);

    // constant total intensity c = log 2; window [t_a, t_a + H], cH = 10
    const double c = std::log(2.0);
    const double ch = 10.0;
    const double mean_in_window =
        (1.0 - std::exp(-ch) * (1.0 + ch)) / (1.0 - std::exp(-ch)) / c;
    CHECK(preds[0].time_scaled == doctest::Approx(1.0 + mean_in_window).epsilon(1e-4));
    CHECK(preds[1].time_scaled == doctest::Approx(2.0 + mean_in_window).epsilon(1e-4));
    CHECK(preds[0].type == 0);

    // density-based evaluation flows through the same path
    const EvalReport rep = evaluate(store, {seq}, cfg, true, 0, 1.0);
    CHECK(rep.time_rmse > 0.0);
}

TEST_CASE("bootstrap resampling is deterministic and reports spreads") {
    ThpConfig cfg = small_config(2);
    cfg.seed = 21;
    UniformRng rng(cfg.seed);
    ParamStore store = init_params(cfg, rng);

    std::vector<EventSequence> data;
    for (int i = 0; i < 6; ++i) {
        const double base = 0.4 + 0.15 * i;
        data.push_back(
            make_seq({base, base + 0.6, base + 1.3, base + 2.1}, {i % 2, 0, 1, (i / 2) % 2}));
    }

    const EvalReport a = evaluate(store, data, cfg, false, 50, 0.0);
    const EvalReport b = evaluate(store, data, cfg, false, 50, 0.0);
    CHECK(a.resamples == 50);
    CHECK(a.per_event_ll_std == b.per_event_ll_std);
    CHECK(a.accuracy_std == b.accuracy_std);
    CHECK(a.time_rmse_std == b.time_rmse_std);
    CHECK(a.per_event_ll_std >= 0.0);
    CHECK(a.per_event_ll == b.per_event_ll);  // point estimates unaffected

    const EvalReport plain = evaluate(store, data, cfg, false, 0, 0.0);
    CHECK(plain.per_event_ll == a.per_event_ll);
    CHECK(plain.resamples == 0);
}

TEST_CASE("attention dump exposes one stochastic matrix per layer and head") {
    ThpConfig cfg = small_config(2);
    cfg.num_layers = 2;
    UniformRng rng(8);
    ParamStore store = init_params(cfg, rng);

    const EventSequence seq = make_seq({0.5, 1.1, 1.8, 2.6, 3.1}, {0, 1, 1, 0, 1});
    const AttentionDump dump = attention_weights(store, seq, cfg);
    CHECK(dump.num_layers == 2);
    CHECK(dump.num_heads == 2);
    CHECK(dump.length == 5);
    REQUIRE(dump.weights.size() == 4);
    for (const std::vector<double>& w : dump.weights) {
        REQUIRE(w.size() == 25);
        for (int j = 0; j < 5; ++j) {
            double row = 0.0;
            for (int i = 0; i < 5; ++i) {
                row += w[j * 5 + i];
                if (i > j) CHECK(w[j * 5 + i] == 0.0);
            }
            CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

// ---- persistence ----

TEST_CASE("model save/load round trip preserves parameters, config, graph, and stats") {
    ThpConfig cfg = small_config(2, 3);
    cfg.freeze_similarity = true;
    cfg.time_scale = 1.5;
    UniformRng rng(17);
    ParamStore store = init_params(cfg, rng);
    const RelationalGraph graph(3, {{0, 1}, {1, 2}});

    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "thp-test-model-roundtrip";
    std::filesystem::remove_all(dir);
    save_model(dir.string(), store, cfg, &graph, 0.37);

    TrainedModel model = load_model(dir.string());
    CHECK(stores_equal(model.store, store));
    CHECK(model.config.to_json() == cfg.to_json());
    REQUIRE(model.graph.has_value());
    CHECK(model.graph->num_vertices() == 3);
    CHECK(model.graph->has_edge(0, 1));
    CHECK(model.graph->has_edge(1, 2));
    CHECK_FALSE(model.graph->has_edge(0, 2));
    CHECK(model.mean_gap_scaled == 0.37);

    // identical evaluation before and after the round trip
    const std::vector<EventSequence> data = {
        make_seq({0.5, 1.3, 2.2}, {0, 1, 0}, {0, 2, 1}),
        make_seq({0.7, 1.6, 2.8}, {1, 0, 1}, {2, 1, 0}),
    };
    const EvalReport before = evaluate(store, data, cfg, false, 0, 0.0);
    const EvalReport after = evaluate(model.store, data, model.config, false, 0, 0.0);
    CHECK(before.per_event_ll == after.per_event_ll);
    CHECK(before.accuracy == after.accuracy);
    CHECK(before.time_rmse == after.time_rmse);

    // a plain model stores a null graph
    ThpConfig plain = small_config(1);
    UniformRng rng2(18);
    ParamStore pstore = init_params(plain, rng2);
    const std::filesystem::path dir2 =
        std::filesystem::temp_directory_path() / "thp-test-model-plain";
    std::filesystem::remove_all(dir2);
    save_model(dir2.string(), pstore, plain, nullptr, 0.0);
    TrainedModel pmodel = load_model(dir2.string());
    CHECK_FALSE(pmodel.graph.has_value());
    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(dir2);
}
