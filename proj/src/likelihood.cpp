#include "thp/likelihood.hpp"

#include <string>

#include "thp/errors.hpp"

namespace thp {

namespace {

void require_scorable(const PreparedSequence& seq, const char* op) {
    if (seq.real_len < 2)
        throw DataError(std::string(op) + ": sequence needs at least two events to score");
}

// Hidden-state rows that anchor the scored events 2..L.
std::vector<int> anchor_rows(const PreparedSequence& seq) {
    std::vector<int> rows(static_cast<size_t>(seq.real_len - 1));
    for (int j = 1; j < seq.real_len; ++j) rows[static_cast<size_t>(j - 1)] = j - 1;
    return rows;
}

}  // namespace

ad::Var event_term(ad::Graph& g, GraphBinding& p, ad::Var hidden, const PreparedSequence& seq,
                   const ThpConfig& cfg) {
    require_scorable(seq, "event_term");
    IntensityQuery query;
    for (int j = 1; j < seq.real_len; ++j) {
        const double prev = seq.times[static_cast<size_t>(j - 1)];
        query.anchor.push_back(j - 1);
        query.current.push_back((seq.times[static_cast<size_t>(j)] - prev) / prev);
    }
    const ad::Var lambda = component_intensities(g, p, hidden, query, cfg);
    return ad::sum_all(ad::log(ad::sum_rows(lambda)));
}

ad::Var nonevent_mc(ad::Graph& g, GraphBinding& p, ad::Var hidden, const PreparedSequence& seq,
                    const ThpConfig& cfg, int n_samples, UniformRng& rng) {
    require_scorable(seq, "nonevent_mc");
    if (n_samples < 1) throw ConfigError("nonevent_mc: n_samples must be positive");
    IntensityQuery query;
    std::vector<double> weights;
    for (int j = 1; j < seq.real_len; ++j) {
        const double lo = seq.times[static_cast<size_t>(j - 1)];
        const double hi = seq.times[static_cast<size_t>(j)];
        const double width = hi - lo;
        for (int s = 0; s < n_samples; ++s) {
            const double u = lo + width * rng.uniform01();
            query.anchor.push_back(j - 1);
            query.current.push_back((u - lo) / lo);
            weights.push_back(width / n_samples);
        }
    }
    const ad::Var lambda = component_intensities(g, p, hidden, query, cfg);
    const ad::Var w = g.constant({static_cast<int>(weights.size()), 1}, weights);
    return ad::sum_all(ad::mul(ad::sum_rows(lambda), w));
}

ad::Var nonevent_trapezoidal(ad::Graph& g, GraphBinding& p, ad::Var hidden,
                             const PreparedSequence& seq, const ThpConfig& cfg) {
    require_scorable(seq, "nonevent_trapezoidal");
    IntensityQuery query;
    std::vector<double> weights;
    for (int j = 1; j < seq.real_len; ++j) {
        const double lo = seq.times[static_cast<size_t>(j - 1)];
        const double hi = seq.times[static_cast<size_t>(j)];
        const double width = hi - lo;
        // left endpoint of the interval
        query.anchor.push_back(j - 1);
        query.current.push_back(0.0);
        weights.push_back(width / 2.0);
        // right endpoint, still anchored within the interval
        query.anchor.push_back(j - 1);
        query.current.push_back(width / lo);
        weights.push_back(width / 2.0);
    }
    const ad::Var lambda = component_intensities(g, p, hidden, query, cfg);
    const ad::Var w = g.constant({static_cast<int>(weights.size()), 1}, weights);
    return ad::sum_all(ad::mul(ad::sum_rows(lambda), w));
}

ad::Var type_loss(ad::Graph& g, GraphBinding& p, ad::Var hidden, const PreparedSequence& seq,
                  const ThpConfig& cfg) {
    require_scorable(seq, "type_loss");
    const ad::Var anchored = g.gather_rows(hidden, anchor_rows(seq));
    const ad::Var logits = ad::matmul(anchored, ad::transpose(p["head.type.w"]));
    const ad::Var log_probs = ad::row_log_softmax(logits);

    const int scored = seq.real_len - 1;
    std::vector<double> onehot(static_cast<size_t>(scored) * cfg.num_types, 0.0);
    for (int j = 1; j < seq.real_len; ++j)
        onehot[static_cast<size_t>(j - 1) * cfg.num_types +
               seq.types[static_cast<size_t>(j)]] = 1.0;
    const ad::Var targets = g.constant({scored, cfg.num_types}, onehot);
    return ad::scale(ad::sum_all(ad::mul(log_probs, targets)), -1.0);
}

ad::Var time_loss(ad::Graph& g, GraphBinding& p, ad::Var hidden, const PreparedSequence& seq,
                  const ThpConfig& cfg) {
    require_scorable(seq, "time_loss");
    (void)cfg;
    const ad::Var anchored = g.gather_rows(hidden, anchor_rows(seq));
    const ad::Var predicted = ad::matmul(anchored, ad::transpose(p["head.time.w"]));

    const int scored = seq.real_len - 1;
    std::vector<double> target_times(static_cast<size_t>(scored));
    for (int j = 1; j < seq.real_len; ++j)
        target_times[static_cast<size_t>(j - 1)] = seq.times[static_cast<size_t>(j)];
    const ad::Var targets = g.constant({scored, 1}, target_times);
    const ad::Var diff = ad::sub(predicted, targets);
    return ad::sum_all(ad::mul(diff, diff));
}

ad::Var graph_regularizer(ad::Graph& g, GraphBinding& p, const RelationalGraph& graph,
                          const ThpConfig& cfg) {
    if (!cfg.structured())
        throw ConfigError("graph_regularizer: config has no vertex dimension");
    const int nv = cfg.num_vertices;
    if (graph.num_vertices() != nv)
        throw ConfigError("graph_regularizer: graph has " +
                          std::to_string(graph.num_vertices()) + " vertices but the config says " +
                          std::to_string(nv));

    // Unordered pairs (j, k) with j <= k, as an upper-triangular 0/1 mask.
    std::vector<double> upper(static_cast<size_t>(nv) * nv, 0.0);
    std::vector<double> edges(static_cast<size_t>(nv) * nv, 0.0);
    for (int j = 0; j < nv; ++j) {
        for (int k = j; k < nv; ++k) {
            upper[static_cast<size_t>(j) * nv + k] = 1.0;
            if (graph.has_edge(j, k)) edges[static_cast<size_t>(j) * nv + k] = 1.0;
        }
    }
    const ad::Var upper_mask = g.constant({nv, nv}, upper);
    const ad::Var edge_mask = g.constant({nv, nv}, edges);
    const ad::Var unit_beta = g.ones({1, nv});

    // Only the real vertex rows of the embedding table take part.
    const ad::Var rows = g.slice_rows(p["embed.vertex"], 0, nv);
    ad::Var acc;
    for (int h = 0; h < cfg.num_heads; ++h) {
        const ad::Var sim = vertex_similarity(g, rows, p["sim." + std::to_string(h)]);
        const ad::Var fit = ad::sub(ad::mul(edge_mask, sim), ad::softplus(sim, unit_beta));
        const ad::Var term = ad::sum_all(ad::mul(upper_mask, fit));
        acc = acc.valid() ? ad::add(acc, term) : term;
    }
    return ad::scale(acc, 1.0 / cfg.num_heads);
}

ad::Var sequence_objective(ad::Graph& g, GraphBinding& p, const PreparedSequence& seq,
                           const ThpConfig& cfg, const EncodeOptions& enc_opt,
                           UniformRng* mc_rng, SequenceLoss* breakdown) {
    require_scorable(seq, "sequence_objective");
    const ad::Var hidden = encode(g, p, seq, cfg, enc_opt);

    const ad::Var events = event_term(g, p, hidden, seq, cfg);
    ad::Var integral;
    if (cfg.integral_estimator == IntegralEstimator::monte_carlo) {
        if (mc_rng == nullptr)
            throw ConfigError("sequence_objective: Monte Carlo estimator needs a sampler");
        integral = nonevent_mc(g, p, hidden, seq, cfg, cfg.mc_samples, *mc_rng);
    } else {
        integral = nonevent_trapezoidal(g, p, hidden, seq, cfg);
    }
    const ad::Var types = type_loss(g, p, hidden, seq, cfg);
    const ad::Var times = time_loss(g, p, hidden, seq, cfg);

    const ad::Var objective =
        ad::add(ad::sub(integral, events), ad::add(types, times));
    if (breakdown != nullptr) {
        breakdown->event_term = events.value()[0];
        breakdown->nonevent = integral.value()[0];
        breakdown->type_loss = types.value()[0];
        breakdown->time_loss = times.value()[0];
        breakdown->scored = seq.real_len - 1;
    }
    return objective;
}

}  // namespace thp
