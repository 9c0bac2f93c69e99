#include "thp/hawkes.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace thp {

double HawkesParams::spectral_radius() const {
    const int k = num_types();
    if (k == 0) return 0.0;
    // Power iteration on the (elementwise non-negative) branching matrix.
    std::vector<double> x(k, 1.0), y(k);
    double radius = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
        for (int i = 0; i < k; ++i) {
            double acc = 0.0;
            for (int j = 0; j < k; ++j) acc += alpha[i][j] / beta[i][j] * x[j];
            y[i] = acc;
        }
        double norm = 0.0;
        for (double v : y) norm = std::max(norm, std::abs(v));
        if (norm == 0.0) return 0.0;
        for (int i = 0; i < k; ++i) x[i] = y[i] / norm;
        radius = norm;
    }
    return radius;
}

void HawkesParams::validate() const {
    const int k = num_types();
    if (k == 0) {
        throw ConfigError("hawkes: at least one event type required");
    }
    for (int i = 0; i < k; ++i) {
        if (!(mu[i] > 0.0) || !std::isfinite(mu[i])) {
            throw ConfigError("hawkes: base rate for type " + std::to_string(i) +
                              " must be positive and finite");
        }
    }
    if (static_cast<int>(alpha.size()) != k || static_cast<int>(beta.size()) != k) {
        throw ConfigError("hawkes: alpha and beta must be " + std::to_string(k) + "x" +
                          std::to_string(k));
    }
    for (int i = 0; i < k; ++i) {
        if (static_cast<int>(alpha[i].size()) != k || static_cast<int>(beta[i].size()) != k) {
            throw ConfigError("hawkes: alpha and beta must be " + std::to_string(k) + "x" +
                              std::to_string(k));
        }
        for (int j = 0; j < k; ++j) {
            if (!(alpha[i][j] >= 0.0) || !std::isfinite(alpha[i][j])) {
                throw ConfigError("hawkes: excitation alpha[" + std::to_string(i) + "][" +
                                  std::to_string(j) + "] must be non-negative");
            }
            if (!(beta[i][j] > 0.0) || !std::isfinite(beta[i][j])) {
                throw ConfigError("hawkes: decay beta[" + std::to_string(i) + "][" +
                                  std::to_string(j) + "] must be positive");
            }
        }
    }
    const double radius = spectral_radius();
    if (!(radius < 1.0)) {
        throw ConfigError("hawkes: unstable parameters, branching spectral radius " +
                          std::to_string(radius) + " >= 1");
    }
}

namespace {

// Total and per-type intensity with an inclusive/strict history cutoff.
// The right limit (inclusive) is the thinning upper bound: between events the
// exponential kernels only decay.
void intensities_at(double t, const EventSequence& history, const HawkesParams& params,
                    bool include_t, std::vector<double>& out) {
    const int k = params.num_types();
    out.assign(k, 0.0);
    for (int i = 0; i < k; ++i) out[i] = params.mu[i];
    for (const Event& e : history.events) {
        if (include_t ? (e.t > t) : (e.t >= t)) break;
        const double dt = t - e.t;
        for (int i = 0; i < k; ++i) {
            const double a = params.alpha[i][e.type];
            if (a == 0.0) continue;
            out[i] += a * std::exp(-params.beta[i][e.type] * dt);
        }
    }
}

}  // namespace

double hawkes_intensity(double t, const EventSequence& history, const HawkesParams& params,
                        int k) {
    if (k < 0 || k >= params.num_types()) {
        throw ConfigError("hawkes: type index " + std::to_string(k) + " out of range");
    }
    double acc = params.mu[k];
    for (const Event& e : history.events) {
        if (e.t >= t) break;
        acc += params.alpha[k][e.type] * std::exp(-params.beta[k][e.type] * (t - e.t));
    }
    return acc;
}

EventSequence ogata_simulate(const HawkesParams& params, double window, UniformRng& rng) {
    params.validate();
    if (!(window > 0.0)) {
        throw ConfigError("hawkes: simulation window must be positive");
    }
    const int k = params.num_types();
    EventSequence seq;
    std::vector<double> lam(k);
    double t = 0.0;
    while (true) {
        // Upper bound: total intensity just after t (includes an event at t).
        intensities_at(t, seq, params, /*include_t=*/true, lam);
        double bound = 0.0;
        for (double v : lam) bound += v;
        const double wait = rng.exponential(bound);
        const double cand = t + wait;
        if (cand > window) break;
        intensities_at(cand, seq, params, /*include_t=*/false, lam);
        double total = 0.0;
        for (double v : lam) total += v;
        if (total > bound * (1.0 + 1e-9)) {
            throw NumericError("hawkes: thinning bound exceeded (" + std::to_string(total) +
                               " > " + std::to_string(bound) + ")");
        }
        t = cand;
        if (rng.uniform01() * bound > total) continue;  // rejected candidate
        // Accepted: assign the type proportionally to the per-type intensities.
        double u = rng.uniform01() * total;
        int type = k - 1;
        for (int i = 0; i < k; ++i) {
            u -= lam[i];
            if (u <= 0.0) {
                type = i;
                break;
            }
        }
        if (!seq.events.empty() && cand <= seq.events.back().t) continue;
        seq.events.push_back({cand, type, -1});
    }
    return seq;
}

double hawkes_loglik_oracle(const EventSequence& seq, const HawkesParams& params,
                            const OracleOptions& opt) {
    params.validate();
    if (!(opt.t_end >= opt.t_begin)) {
        throw ConfigError("hawkes: integration window is empty or reversed");
    }
    const int k = params.num_types();
    std::vector<double> lam(k);
    double event_term = 0.0;
    for (std::size_t j = 0; j < seq.events.size(); ++j) {
        if (j == 0 && !opt.include_first_event) continue;
        intensities_at(seq.events[j].t, seq, params, /*include_t=*/false, lam);
        double total = 0.0;
        for (double v : lam) total += v;
        event_term += std::log(total);
    }

    // Exact integral of the total intensity over [t_begin, t_end]: the base
    // rates integrate linearly, and each past event contributes a truncated
    // exponential tail per target type.
    double integral = 0.0;
    for (int i = 0; i < k; ++i) integral += params.mu[i] * (opt.t_end - opt.t_begin);
    for (const Event& e : seq.events) {
        if (e.t >= opt.t_end) break;
        const double lo = std::max(opt.t_begin, e.t);
        for (int i = 0; i < k; ++i) {
            const double a = params.alpha[i][e.type];
            if (a == 0.0) continue;
            const double b = params.beta[i][e.type];
            integral += a / b * (std::exp(-b * (lo - e.t)) - std::exp(-b * (opt.t_end - e.t)));
        }
    }
    return event_term - integral;
}

HawkesParams flatten(const StructuredHawkesSpec& spec) {
    const int nv = spec.graph.num_vertices();
    if (spec.num_types < 1 || nv < 1) {
        throw ConfigError("structured hawkes: need at least one type and one vertex");
    }
    const int n = spec.num_types * nv;
    HawkesParams p;
    p.mu.assign(n, spec.mu);
    p.alpha.assign(n, std::vector<double>(n, 0.0));
    p.beta.assign(n, std::vector<double>(n, spec.beta));
    for (int c1 = 0; c1 < n; ++c1) {
        const int v1 = c1 % nv;
        for (int c2 = 0; c2 < n; ++c2) {
            const int v2 = c2 % nv;
            if (v1 == v2) {
                p.alpha[c1][c2] = spec.alpha_self;
            } else if (spec.graph.has_edge(v1, v2)) {
                p.alpha[c1][c2] = spec.alpha_edge;
            }
        }
    }
    return p;
}

EventSequence simulate_structured(const StructuredHawkesSpec& spec, double window,
                                  UniformRng& rng) {
    const HawkesParams flat = flatten(spec);
    EventSequence merged = ogata_simulate(flat, window, rng);
    const int nv = spec.graph.num_vertices();
    for (Event& e : merged.events) {
        const int composite = e.type;
        e.type = composite / nv;
        e.vertex = composite % nv;
    }
    return merged;
}

}  // namespace thp
