#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "thp/errors.hpp"
#include "thp/rng.hpp"

namespace thp::ad {

// Shapes are dimension lists; almost everything in this engine is rank-2
// (rows x cols) with scalars stored as {1,1}.
using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t numel(const Shape& s);

class Graph;

// Lightweight handle to a node inside a Graph. Values are immutable once
// created; gradients accumulate across backward() calls until reset.
class Var {
public:
    Var() = default;

    const Shape& shape() const;
    const std::vector<double>& value() const;
    const std::vector<double>& grad() const;
    double scalar() const;
    int id() const { return id_; }
    Graph* graph() const { return graph_; }
    bool valid() const { return graph_ != nullptr; }

private:
    friend class Graph;
    Var(Graph* g, int id) : graph_(g), id_(id) {}

    Graph* graph_ = nullptr;
    int id_ = -1;
};

// Reverse-mode tape over dense row-major tensors of 64-bit floats.
// Nodes are appended in topological order by construction; backward walks
// them once in reverse. A Graph is single-threaded; distinct Graphs over
// shared read-only inputs may run concurrently.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // leaves
    Var constant(Shape shape, std::vector<double> data);   // no gradient
    Var leaf(Shape shape, std::vector<double> data);        // differentiable
    Var scalar_constant(double v) { return constant({1, 1}, {v}); }
    Var zeros(Shape shape) { return constant(shape, std::vector<double>(numel(shape), 0.0)); }
    Var ones(Shape shape) { return constant(shape, std::vector<double>(numel(shape), 1.0)); }

    // primitives
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var add_row(Var a, Var row);            // broadcast row vector over rows
    Var row_softmax(Var a);                 // stable, with row-max subtraction
    Var row_log_softmax(Var a);
    Var relu(Var a);
    Var softplus(Var x, Var beta);          // f(x;b) = b*log1p(exp(x/b)), beta is {1,C}
    Var log(Var a);
    Var exp(Var a);
    Var sum_all(Var a);
    Var mean_all(Var a);
    Var sum_rows(Var a);                    // {R,C} -> {R,1}
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_rows(Var a, int r0, int r1);
    Var slice_cols(Var a, int c0, int c1);
    Var gather_rows(Var a, std::vector<int> rows);
    Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);
    Var dropout(Var a, double p, UniformRng& rng);

    // Accumulates d(loss)/d(node) into every gradient buffer reachable from
    // loss. Repeated calls without reset_gradients() accumulate.
    void backward(Var loss);
    void reset_gradients();

    const Shape& shape(int id) const { return nodes_[id].shape; }
    const std::vector<double>& value(int id) const { return nodes_[id].value; }
    const std::vector<double>& grad(int id) const { return nodes_[id].grad; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Backprop;
    using BackwardFn = std::function<void(Backprop&)>;

    struct Node {
        const char* op;
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad;   // materialized on first accumulation
        std::vector<int> inputs;
        BackwardFn backward;
        bool requires_grad = false;
    };

    Var emplace(const char* op, Shape shape, std::vector<double> value,
                std::vector<int> inputs, BackwardFn fn);
    void require_same_graph(const char* op, std::initializer_list<Var> vars) const;
    const Node& node(int id) const { return nodes_[id]; }

    std::vector<Node> nodes_;
};

// free-function spellings used by model code
inline Var matmul(Var a, Var b) { return a.graph()->matmul(a, b); }
inline Var transpose(Var a) { return a.graph()->transpose(a); }
inline Var add(Var a, Var b) { return a.graph()->add(a, b); }
inline Var sub(Var a, Var b) { return a.graph()->sub(a, b); }
inline Var mul(Var a, Var b) { return a.graph()->mul(a, b); }
inline Var scale(Var a, double c) { return a.graph()->scale(a, c); }
inline Var add_row(Var a, Var row) { return a.graph()->add_row(a, row); }
inline Var row_softmax(Var a) { return a.graph()->row_softmax(a); }
inline Var row_log_softmax(Var a) { return a.graph()->row_log_softmax(a); }
inline Var relu(Var a) { return a.graph()->relu(a); }
inline Var softplus(Var x, Var beta) { return x.graph()->softplus(x, beta); }
inline Var log(Var a) { return a.graph()->log(a); }
inline Var exp(Var a) { return a.graph()->exp(a); }
inline Var sum_all(Var a) { return a.graph()->sum_all(a); }
inline Var mean_all(Var a) { return a.graph()->mean_all(a); }
inline Var sum_rows(Var a) { return a.graph()->sum_rows(a); }
inline Var concat_cols(const std::vector<Var>& parts) {
    return parts.at(0).graph()->concat_cols(parts);
}
inline Var slice_rows(Var a, int r0, int r1) { return a.graph()->slice_rows(a, r0, r1); }
inline Var slice_cols(Var a, int c0, int c1) { return a.graph()->slice_cols(a, c0, c1); }
inline Var gather_rows(Var a, std::vector<int> rows) {
    return a.graph()->gather_rows(a, std::move(rows));
}
inline Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5) {
    return a.graph()->layer_norm(a, gain, bias, eps);
}
inline Var dropout(Var a, double p, UniformRng& rng) { return a.graph()->dropout(a, p, rng); }

// scalar helpers used throughout model code and tests
double stable_softplus(double x);                   // log(1 + e^x)
double stable_sigmoid(double x);
double softplus_beta(double x, double beta);        // beta * log(1 + e^(x/beta))

}  // namespace thp::ad
