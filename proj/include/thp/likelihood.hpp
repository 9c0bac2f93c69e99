#pragma once

#include "thp/config.hpp"
#include "thp/dataset.hpp"
#include "thp/model.hpp"
#include "thp/parameters.hpp"
#include "thp/tensor.hpp"

namespace thp {

// Every term scores events 2..L anchored at their predecessor; the first
// event of a sequence has no history and is conditioned on, not scored.

// Sum of log total intensities at the observed event times. Scalar {1,1}.
ad::Var event_term(ad::Graph& g, GraphBinding& p, ad::Var hidden, const PreparedSequence& seq,
                   const ThpConfig& cfg);

// Monte Carlo estimate of the integral of the total intensity over the
// observed span: per interval, n_samples uniform draws (treated as
// constants) weighted by interval width / n_samples.
ad::Var nonevent_mc(ad::Graph& g, GraphBinding& p, ad::Var hidden, const PreparedSequence& seq,
                    const ThpConfig& cfg, int n_samples, UniformRng& rng);

// Trapezoidal estimate: both endpoints of each interval evaluated within the
// interval (anchored at its left event), exact when the intensity is linear
// on every interval.
ad::Var nonevent_trapezoidal(ad::Graph& g, GraphBinding& p, ad::Var hidden,
                             const PreparedSequence& seq, const ThpConfig& cfg);

// Cross-entropy of the type head against the observed next types. Scalar.
ad::Var type_loss(ad::Graph& g, GraphBinding& p, ad::Var hidden, const PreparedSequence& seq,
                  const ThpConfig& cfg);

// Squared error of the time head against the observed (scaled) next times.
ad::Var time_loss(ad::Graph& g, GraphBinding& p, ad::Var hidden, const PreparedSequence& seq,
                  const ThpConfig& cfg);

// Structured similarity regularizer over unordered vertex pairs (including
// v = v'): edge indicator times the similarity logit minus its softplus,
// averaged across heads. Zero similarity gives -(V(V+1)/2) * ln 2.
ad::Var graph_regularizer(ad::Graph& g, GraphBinding& p, const RelationalGraph& graph,
                          const ThpConfig& cfg);

// Value-level pieces of one scored sequence.
struct SequenceLoss {
    double event_term = 0.0;
    double nonevent = 0.0;
    double type_loss = 0.0;
    double time_loss = 0.0;
    int scored = 0;  // number of scored events (L - 1)
};

// Builds the full per-sequence objective -(event - nonevent) + type + time
// as one scalar node; the breakdown (when requested) reports the pieces.
// mc_rng supplies the integral samples and is required for the Monte Carlo
// estimator.
ad::Var sequence_objective(ad::Graph& g, GraphBinding& p, const PreparedSequence& seq,
                           const ThpConfig& cfg, const EncodeOptions& enc_opt,
                           UniformRng* mc_rng, SequenceLoss* breakdown);

// Aggregated pieces of a batch (or epoch); total() applies the sign
// convention of the training objective.
struct LossBreakdown {
    double event_ll = 0.0;    // sum of event terms
    double nonevent = 0.0;    // sum of integral estimates
    double type_loss = 0.0;
    double time_loss = 0.0;
    double graph_reg = 0.0;   // regularizer value (not yet weighted)
    int scored_events = 0;

    double total(double graph_reg_weight) const {
        return -(event_ll - nonevent) + type_loss + time_loss -
               graph_reg_weight * graph_reg;
    }

    void add(const SequenceLoss& s) {
        event_ll += s.event_term;
        nonevent += s.nonevent;
        type_loss += s.type_loss;
        time_loss += s.time_loss;
        scored_events += s.scored;
    }
};

}  // namespace thp
