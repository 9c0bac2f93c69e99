#include "thp/model.hpp"

#include <cmath>
#include <string>

#include "thp/errors.hpp"

namespace thp {

namespace {

std::string layer_prefix(int layer) { return "enc." + std::to_string(layer) + "."; }

std::string head_name(int head) { return "sim." + std::to_string(head); }

}  // namespace

PreparedSequence prepare_sequence(const EventSequence& seq, const ThpConfig& cfg, int pad_to) {
    const int n = static_cast<int>(seq.events.size());
    if (n == 0) throw DataError("prepare_sequence: sequence has no events");
    if (cfg.structured() && !seq.has_vertices())
        throw DataError("prepare_sequence: config expects vertex labels but the sequence has none");

    PreparedSequence out;
    out.real_len = n;
    const int total = pad_to > n ? pad_to : n;
    out.times.reserve(total);
    out.types.reserve(total);
    if (cfg.structured()) out.vertices.reserve(total);

    for (int j = 0; j < n; ++j) {
        const Event& ev = seq.events[j];
        if (ev.t <= 0.0)
            throw DataError("prepare_sequence: event " + std::to_string(j) +
                            " has non-positive time " + std::to_string(ev.t));
        if (ev.type < 0 || ev.type >= cfg.num_types)
            throw DataError("prepare_sequence: event " + std::to_string(j) + " has type " +
                            std::to_string(ev.type) + " outside [0, " +
                            std::to_string(cfg.num_types) + ")");
        out.times.push_back(ev.t / cfg.time_scale);
        out.types.push_back(ev.type);
        if (cfg.structured()) {
            if (ev.vertex < 0 || ev.vertex >= cfg.num_vertices)
                throw DataError("prepare_sequence: event " + std::to_string(j) + " has vertex " +
                                std::to_string(ev.vertex) + " outside [0, " +
                                std::to_string(cfg.num_vertices) + ")");
            out.vertices.push_back(ev.vertex);
        }
    }
    // Padding rows reuse the last real time stamp and the reserved indices;
    // the attention mask and the losses never look at them.
    for (int j = n; j < total; ++j) {
        out.times.push_back(out.times[n - 1]);
        out.types.push_back(cfg.num_types);
        if (cfg.structured()) out.vertices.push_back(cfg.num_vertices);
    }
    return out;
}

std::vector<double> temporal_encode(double t, int model_dim) {
    if (model_dim < 2 || model_dim % 2 != 0)
        throw ConfigError("temporal_encode: model_dim must be a positive even number");
    std::vector<double> z(static_cast<size_t>(model_dim));
    for (int i = 1; i <= model_dim; ++i) {
        if (i % 2 == 1) {
            const double denom = std::pow(10000.0, static_cast<double>(i - 1) / model_dim);
            z[static_cast<size_t>(i - 1)] = std::cos(t / denom);
        } else {
            const double denom = std::pow(10000.0, static_cast<double>(i) / model_dim);
            z[static_cast<size_t>(i - 1)] = std::sin(t / denom);
        }
    }
    return z;
}

ParamStore init_params(const ThpConfig& cfg, UniformRng& rng) {
    ParamStore store;
    const int m = cfg.model_dim;

    // Embedding tables carry one extra reserved row for padding.
    store.create_uniform("embed.type", {cfg.num_types + 1, m}, cfg.num_types, rng);
    if (cfg.structured())
        store.create_uniform("embed.vertex", {cfg.num_vertices + 1, m}, cfg.num_vertices, rng);

    for (int layer = 0; layer < cfg.num_layers; ++layer) {
        const std::string pre = layer_prefix(layer);
        store.create_constant(pre + "ln1.gain", {1, m}, 1.0);
        store.create_zeros(pre + "ln1.bias", {1, m});
        for (int h = 0; h < cfg.num_heads; ++h) {
            const std::string hp = pre + "head." + std::to_string(h) + ".";
            store.create_uniform(hp + "wq", {m, cfg.key_dim}, m, rng);
            store.create_uniform(hp + "wk", {m, cfg.key_dim}, m, rng);
            store.create_uniform(hp + "wv", {m, cfg.value_dim}, m, rng);
        }
        store.create_uniform(pre + "wo", {cfg.num_heads * cfg.value_dim, m},
                             cfg.num_heads * cfg.value_dim, rng);
        store.create_constant(pre + "ln2.gain", {1, m}, 1.0);
        store.create_zeros(pre + "ln2.bias", {1, m});
        store.create_uniform(pre + "fc1.w", {m, cfg.hidden_dim}, m, rng);
        store.create_zeros(pre + "fc1.b", {1, cfg.hidden_dim});
        if (cfg.tie_fc2_columns) {
            store.create_uniform(pre + "fc2.col", {cfg.hidden_dim, 1}, cfg.hidden_dim, rng);
        } else {
            store.create_uniform(pre + "fc2.w", {cfg.hidden_dim, m}, cfg.hidden_dim, rng);
        }
        store.create_zeros(pre + "fc2.b", {1, m});
    }

    if (cfg.structured()) {
        // One similarity matrix per head, shared by every layer. Zero start:
        // the bias begins neutral and the regularizer shapes it from there.
        for (int h = 0; h < cfg.num_heads; ++h) {
            ParamTensor& omega = store.create_zeros(head_name(h), {m, m});
            if (cfg.freeze_similarity) omega.trainable = false;
        }
    }

    const int components = cfg.structured() ? cfg.num_types * cfg.num_vertices : cfg.num_types;
    store.create_constant("intensity.alpha", {1, components}, 0.1);
    store.create_uniform("intensity.w", {components, m}, m, rng);
    store.create_zeros("intensity.b", {1, components});
    store.create_zeros("intensity.log_beta", {1, components});

    store.create_uniform("head.type.w", {cfg.num_types, m}, m, rng);
    store.create_uniform("head.time.w", {1, m}, m, rng);
    return store;
}

ad::Var embed_sequence(ad::Graph& g, GraphBinding& p, const PreparedSequence& seq,
                       const ThpConfig& cfg) {
    const int length = seq.total_len();
    std::vector<double> z_values(static_cast<size_t>(length) * cfg.model_dim);
    for (int j = 0; j < length; ++j) {
        const std::vector<double> row = temporal_encode(seq.times[static_cast<size_t>(j)],
                                                        cfg.model_dim);
        std::copy(row.begin(), row.end(),
                  z_values.begin() + static_cast<size_t>(j) * cfg.model_dim);
    }
    const ad::Var z = g.constant({length, cfg.model_dim}, z_values);

    ad::Var x = ad::add(g.gather_rows(p["embed.type"], seq.types), z);
    if (cfg.structured()) x = ad::add(x, g.gather_rows(p["embed.vertex"], seq.vertices));
    return x;
}

std::vector<double> attention_mask_values(int length, int valid_len) {
    std::vector<double> mask(static_cast<size_t>(length) * length, 0.0);
    for (int j = 0; j < length; ++j)
        for (int i = 0; i < length; ++i)
            if (i > j || i >= valid_len) mask[static_cast<size_t>(j) * length + i] = -1e9;
    return mask;
}

AttentionHeadOut attention_head(ad::Graph& g, ad::Var x, ad::Var wq, ad::Var wk, ad::Var wv,
                                ad::Var mask, const ad::Var* bias) {
    (void)g;
    const int key_dim = wq.shape()[1];
    const ad::Var q = ad::matmul(x, wq);
    const ad::Var k = ad::matmul(x, wk);
    const ad::Var v = ad::matmul(x, wv);
    ad::Var logits = ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(key_dim));
    if (bias != nullptr) logits = ad::add(logits, *bias);
    logits = ad::add(logits, mask);
    AttentionHeadOut out{ad::Var{}, ad::row_softmax(logits)};
    out.out = ad::matmul(out.weights, v);
    return out;
}

ad::Var multi_head(ad::Graph& g, const std::vector<ad::Var>& head_outs, ad::Var wo) {
    (void)g;
    return ad::matmul(ad::concat_cols(head_outs), wo);
}

ad::Var position_ffn(ad::Graph& g, ad::Var s, ad::Var w1, ad::Var b1, ad::Var w2, ad::Var b2) {
    (void)g;
    const ad::Var hidden = ad::relu(ad::add_row(ad::matmul(s, w1), b1));
    return ad::add_row(ad::matmul(hidden, w2), b2);
}

ad::Var vertex_similarity(ad::Graph& g, ad::Var vertex_rows, ad::Var omega) {
    (void)g;
    return ad::matmul(ad::matmul(vertex_rows, omega), ad::transpose(vertex_rows));
}

ad::Var encode(ad::Graph& g, GraphBinding& p, const PreparedSequence& seq, const ThpConfig& cfg,
               const EncodeOptions& opt) {
    if (opt.mode == AttentionMode::structured && !cfg.structured())
        throw ConfigError("encode: structured attention requires a vertex dimension");

    ad::Var x = embed_sequence(g, p, seq, cfg);
    const int length = seq.total_len();
    const ad::Var mask =
        g.constant({length, length}, attention_mask_values(length, seq.real_len));

    // The similarity bias of each head is layer-independent, so build it once.
    std::vector<ad::Var> bias;
    if (opt.mode == AttentionMode::structured) {
        const ad::Var rows = g.gather_rows(p["embed.vertex"], seq.vertices);
        bias.reserve(static_cast<size_t>(cfg.num_heads));
        for (int h = 0; h < cfg.num_heads; ++h)
            bias.push_back(vertex_similarity(g, rows, p[head_name(h)]));
    }

    ad::Var hidden = x;
    for (int layer = 0; layer < cfg.num_layers; ++layer) {
        const std::string pre = layer_prefix(layer);
        const ad::Var normed = ad::layer_norm(hidden, p[pre + "ln1.gain"], p[pre + "ln1.bias"]);
        std::vector<ad::Var> head_outs;
        head_outs.reserve(static_cast<size_t>(cfg.num_heads));
        for (int h = 0; h < cfg.num_heads; ++h) {
            const std::string hp = pre + "head." + std::to_string(h) + ".";
            const ad::Var* head_bias = bias.empty() ? nullptr : &bias[static_cast<size_t>(h)];
            AttentionHeadOut head =
                attention_head(g, normed, p[hp + "wq"], p[hp + "wk"], p[hp + "wv"], mask,
                               head_bias);
            if (opt.attention_out != nullptr)
                opt.attention_out->push_back(head.weights.value());
            head_outs.push_back(head.out);
        }
        ad::Var attn = multi_head(g, head_outs, p[pre + "wo"]);
        if (opt.dropout_rng != nullptr && cfg.dropout > 0.0)
            attn = ad::dropout(attn, cfg.dropout, *opt.dropout_rng);
        hidden = ad::add(hidden, attn);

        const ad::Var normed2 = ad::layer_norm(hidden, p[pre + "ln2.gain"], p[pre + "ln2.bias"]);
        ad::Var fc2_w;
        if (cfg.tie_fc2_columns) {
            // One learned column broadcast across features.
            fc2_w = ad::matmul(p[pre + "fc2.col"],
                               g.ones({1, cfg.model_dim}));
        } else {
            fc2_w = p[pre + "fc2.w"];
        }
        ad::Var ffn = position_ffn(g, normed2, p[pre + "fc1.w"], p[pre + "fc1.b"], fc2_w,
                                   p[pre + "fc2.b"]);
        if (opt.dropout_rng != nullptr && cfg.dropout > 0.0)
            ffn = ad::dropout(ffn, cfg.dropout, *opt.dropout_rng);
        hidden = ad::add(hidden, ffn);
    }
    return hidden;
}

ad::Var component_intensities(ad::Graph& g, GraphBinding& p, ad::Var hidden,
                              const IntensityQuery& query, const ThpConfig& cfg) {
    if (query.current.size() != query.anchor.size())
        throw ShapeError("component_intensities: query arrays disagree in length");
    const int rows = static_cast<int>(query.anchor.size());
    if (rows == 0) throw ShapeError("component_intensities: empty query");

    const ad::Var anchored = g.gather_rows(hidden, query.anchor);  // {Q, M}
    ad::Var logits = ad::add_row(ad::matmul(anchored, ad::transpose(p["intensity.w"])),
                                 p["intensity.b"]);
    const ad::Var current = g.constant({rows, 1}, query.current);
    logits = ad::add(logits, ad::matmul(current, p["intensity.alpha"]));
    return ad::softplus(logits, ad::exp(p["intensity.log_beta"]));
}

IntensityView intensity_view(const ParamStore& store, const ThpConfig& cfg) {
    IntensityView view;
    view.components = cfg.structured() ? cfg.num_types * cfg.num_vertices : cfg.num_types;
    view.num_vertices = cfg.structured() ? cfg.num_vertices : 0;
    view.model_dim = cfg.model_dim;
    view.alpha = store.at("intensity.alpha").value.data();
    view.w = store.at("intensity.w").value.data();
    view.b = store.at("intensity.b").value.data();
    view.log_beta = store.at("intensity.log_beta").value.data();
    return view;
}

double component_intensity(double t, const IntervalContext& ctx, int component,
                           const IntensityView& view) {
    if (component < 0 || component >= view.components)
        throw ShapeError("component_intensity: component index out of range");
    if (ctx.anchor_time <= 0.0)
        throw NumericError("component_intensity: anchor time must be positive");
    if (t < ctx.anchor_time || !(t < ctx.interval_end))
        throw NumericError("component_intensity: query time outside the anchored interval");

    double inner = view.alpha[component] * (t - ctx.anchor_time) / ctx.anchor_time +
                   view.b[component];
    const double* wrow = view.w + static_cast<size_t>(component) * view.model_dim;
    for (int i = 0; i < view.model_dim; ++i) inner += wrow[i] * ctx.hidden[i];
    return ad::softplus_beta(inner, std::exp(view.log_beta[component]));
}

double type_intensity(double t, const IntervalContext& ctx, int k, const IntensityView& view) {
    if (view.num_vertices == 0) return component_intensity(t, ctx, k, view);
    const int num_types = view.components / view.num_vertices;
    if (k < 0 || k >= num_types) throw ShapeError("type_intensity: type index out of range");
    double total = 0.0;
    for (int v = 0; v < view.num_vertices; ++v)
        total += component_intensity(t, ctx, k * view.num_vertices + v, view);
    return total;
}

double total_intensity(double t, const IntervalContext& ctx, const IntensityView& view) {
    double total = 0.0;
    for (int c = 0; c < view.components; ++c) total += component_intensity(t, ctx, c, view);
    return total;
}

}  // namespace thp
