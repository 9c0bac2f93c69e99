#pragma once

#include <vector>

#include "thp/config.hpp"
#include "thp/dataset.hpp"
#include "thp/parameters.hpp"
#include "thp/tensor.hpp"

namespace thp {

// Which attention variant encode() runs. Structured adds the learned
// vertex-similarity bias to every head's logits; everything else (vertex
// embeddings, per-vertex intensities) follows the config alone, so a
// structured model run in plain mode is the exact zero-bias degenerate case.
enum class AttentionMode { plain, structured };

// An event sequence after time scaling and optional right-padding, ready for
// the encoder. Padding rows carry the reserved type (num_types) and vertex
// (num_vertices) indices plus the last real time stamp; they are excluded
// from attention and from every loss.
struct PreparedSequence {
    std::vector<double> times;  // scaled
    std::vector<int> types;
    std::vector<int> vertices;  // empty when the config has no vertex dimension
    int real_len = 0;

    int total_len() const { return static_cast<int>(times.size()); }
};

PreparedSequence prepare_sequence(const EventSequence& seq, const ThpConfig& cfg, int pad_to = 0);

// Deterministic sinusoidal channels for one (scaled) time stamp: entry i
// (1-based) is cos(t / 10000^((i-1)/M)) for odd i, sin(t / 10000^(i/M)) for
// even i.
std::vector<double> temporal_encode(double t, int model_dim);

// Creates every learned tensor of the model in a fixed order (embeddings,
// encoder stack, vertex-similarity, intensity table, prediction heads).
ParamStore init_params(const ThpConfig& cfg, UniformRng& rng);

// ---- graph builders (autodiff side) ----

// Event stream to encoder input: type embedding + optional vertex embedding
// + temporal encoding, one row per event.
ad::Var embed_sequence(ad::Graph& g, GraphBinding& p, const PreparedSequence& seq,
                       const ThpConfig& cfg);

// Additive attention mask: entry (j, i) is 0 when i <= j and i is a real
// event, -1e9 otherwise. valid_len == L gives the pure causal mask.
std::vector<double> attention_mask_values(int length, int valid_len);

struct AttentionHeadOut {
    ad::Var out;      // {L, M_V}
    ad::Var weights;  // {L, L} post-softmax
};

// One masked scaled-dot-product head; bias (vertex similarity) is optional.
AttentionHeadOut attention_head(ad::Graph& g, ad::Var x, ad::Var wq, ad::Var wk, ad::Var wv,
                                ad::Var mask, const ad::Var* bias);

// Concatenate head outputs along features and aggregate through W^O.
ad::Var multi_head(ad::Graph& g, const std::vector<ad::Var>& head_outs, ad::Var wo);

// Row-wise two-layer feed-forward with ReLU.
ad::Var position_ffn(ad::Graph& g, ad::Var s, ad::Var w1, ad::Var b1, ad::Var w2, ad::Var b2);

// Vertex-similarity logit matrix for one head: A(j,i) = e(v_j)^T Omega e(v_i).
ad::Var vertex_similarity(ad::Graph& g, ad::Var vertex_rows, ad::Var omega);

struct EncodeOptions {
    AttentionMode mode = AttentionMode::plain;
    UniformRng* dropout_rng = nullptr;  // null = evaluation mode, dropout off
    // when set, receives the post-softmax weights of every (layer, head) in
    // layer-major order
    std::vector<std::vector<double>>* attention_out = nullptr;
};

// Full encoder stack: N pre-norm blocks of masked multi-head attention and
// position-wise feed-forward, residual connections throughout. N = 0 returns
// the embedding unchanged. Row j of the result depends only on events 1..j.
ad::Var encode(ad::Graph& g, GraphBinding& p, const PreparedSequence& seq, const ThpConfig& cfg,
               const EncodeOptions& opt);

// ---- intensity ----

// Query points for the intensity: row q is evaluated at a time inside the
// interval anchored at event anchor[q], with current[q] = (t - t_a) / t_a.
struct IntensityQuery {
    std::vector<double> current;
    std::vector<int> anchor;
};

// Softplus intensities per component, {Q, C} with C = K (plain config) or
// K * |V| (structured; column index k * |V| + v).
ad::Var component_intensities(ad::Graph& g, GraphBinding& p, ad::Var hidden,
                              const IntensityQuery& query, const ThpConfig& cfg);

// ---- plain-double evaluators (prediction and tests; no gradients) ----

// Borrowed view of the intensity table as flat arrays.
struct IntensityView {
    int components = 0;
    int num_vertices = 0;  // 0 = plain
    int model_dim = 0;
    const double* alpha = nullptr;     // [C]
    const double* w = nullptr;         // [C * M] row-major
    const double* b = nullptr;         // [C]
    const double* log_beta = nullptr;  // [C]
};

IntensityView intensity_view(const ParamStore& store, const ThpConfig& cfg);

// The interval an intensity query lives on: anchored at the most recent
// event, valid until the next one (or forever when none is observed yet).
struct IntervalContext {
    double anchor_time = 0.0;  // scaled, > 0
    const double* hidden = nullptr;  // anchor row of H, length model_dim
    double interval_end = 0.0;       // query t must satisfy anchor_time <= t < interval_end
};

double component_intensity(double t, const IntervalContext& ctx, int component,
                           const IntensityView& view);
// Marginal intensity of an event type (sums vertices in structured mode).
double type_intensity(double t, const IntervalContext& ctx, int k, const IntensityView& view);
double total_intensity(double t, const IntervalContext& ctx, const IntensityView& view);

}  // namespace thp
