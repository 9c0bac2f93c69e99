#pragma once

#include <vector>

#include "thp/dataset.hpp"
#include "thp/errors.hpp"
#include "thp/rng.hpp"

namespace thp {

// Multivariate Hawkes process with exponential kernels:
//   lambda_k(t) = mu[k] + sum_{t_j < t} alpha[k][k_j] * exp(-beta[k][k_j] (t - t_j))
// Stable when the spectral radius of alpha ./ beta is below one.
struct HawkesParams {
    std::vector<double> mu;                   // K, each > 0
    std::vector<std::vector<double>> alpha;   // K x K, >= 0
    std::vector<std::vector<double>> beta;    // K x K, > 0

    int num_types() const { return static_cast<int>(mu.size()); }
    double spectral_radius() const;  // of the branching matrix alpha ./ beta
    void validate() const;           // throws ConfigError
};

// Conditional intensity of type k at time t given the strict past
// (events with t_j < t contribute).
double hawkes_intensity(double t, const EventSequence& history, const HawkesParams& params,
                        int k);

// Draws one sequence on (0, window] by thinning: bound the total intensity
// by its right limit at the current time (non-increasing between events for
// exponential kernels), propose exponentially, accept proportionally.
EventSequence ogata_simulate(const HawkesParams& params, double window, UniformRng& rng);

struct OracleOptions {
    double t_begin = 0.0;            // non-event integral lower bound
    double t_end = 0.0;              // upper bound (observation window end)
    bool include_first_event = true; // score log lambda(t_1)?
};

// Closed-form log-likelihood of a sequence under the classical process:
//   sum_j log lambda_total(t_j) - integral of lambda_total over the window,
// the integral evaluated exactly for exponential kernels. The event sum uses
// the total intensity, and both the first-event term and the integration
// bounds are configurable so the score can mirror engines that only score
// events from the second one onward over [t_1, t_L].
double hawkes_loglik_oracle(const EventSequence& seq, const HawkesParams& params,
                            const OracleOptions& opt);

// Per-vertex processes on a graph: composite type index c = k * |V| + v.
// Same-vertex excitation alpha_self for every type pair, cross-vertex
// excitation alpha_edge only along graph edges.
struct StructuredHawkesSpec {
    int num_types = 1;
    RelationalGraph graph;
    double mu = 0.1;
    double alpha_self = 0.15;
    double alpha_edge = 0.1;
    double beta = 1.0;
};

HawkesParams flatten(const StructuredHawkesSpec& spec);
EventSequence simulate_structured(const StructuredHawkesSpec& spec, double window,
                                  UniformRng& rng);

}  // namespace thp
