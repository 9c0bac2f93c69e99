#include "thp/tensor.hpp"

#include <cmath>
#include <cstddef>
#include <sstream>
#include <utility>

namespace thp::ad {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "{";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "}";
    return os.str();
}

std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

double stable_softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus_beta(double x, double beta) {
    return beta * stable_softplus(x / beta);
}

namespace {

void check_rank2(const char* op, const Shape& s) {
    if (s.size() != 2) {
        throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(s));
    }
}

void check_finite(const char* op, const std::vector<double>& data) {
    for (double v : data) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(op) + ": non-finite value encountered");
        }
    }
}

}  // namespace

const Shape& Var::shape() const { return graph_->shape(id_); }
const std::vector<double>& Var::value() const { return graph_->value(id_); }
const std::vector<double>& Var::grad() const { return graph_->grad(id_); }

double Var::scalar() const {
    const auto& v = value();
    if (v.size() != 1) {
        throw ShapeError("scalar(): tensor has " + std::to_string(v.size()) + " elements");
    }
    return v[0];
}

// Per-call context handed to backward rules: dout is this node's adjoint,
// at(id) materializes the input's adjoint buffer.
struct Graph::Backprop {
    Graph& g;
    std::vector<std::vector<double>>& adj;
    const std::vector<double>& dout;

    std::vector<double>& at(int id) {
        auto& buf = adj[id];
        if (buf.empty()) buf.assign(numel(g.nodes_[id].shape), 0.0);
        return buf;
    }
    bool needed(int id) const { return g.nodes_[id].requires_grad; }
    const std::vector<double>& val(int id) const { return g.nodes_[id].value; }
};

Var Graph::emplace(const char* op, Shape shape, std::vector<double> value,
                   std::vector<int> inputs, BackwardFn fn) {
    if (value.size() != numel(shape)) {
        throw ShapeError(std::string(op) + ": data length " + std::to_string(value.size()) +
                         " does not match shape " + shape_str(shape));
    }
    check_finite(op, value);
    Node n;
    n.op = op;
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.backward = std::move(fn);
    for (int in : n.inputs) {
        if (nodes_[in].requires_grad) n.requires_grad = true;
    }
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Graph::require_same_graph(const char* op, std::initializer_list<Var> vars) const {
    for (const Var& v : vars) {
        if (v.graph() != this) {
            throw ShapeError(std::string(op) + ": operand belongs to a different graph");
        }
    }
}

Var Graph::constant(Shape shape, std::vector<double> data) {
    return emplace("constant", std::move(shape), std::move(data), {}, nullptr);
}

Var Graph::leaf(Shape shape, std::vector<double> data) {
    Var v = emplace("leaf", std::move(shape), std::move(data), {}, nullptr);
    nodes_[v.id()].requires_grad = true;
    return v;
}

Var Graph::matmul(Var a, Var b) {
    require_same_graph("matmul", {a, b});
    const Shape& sa = shape(a.id());
    const Shape& sb = shape(b.id());
    check_rank2("matmul", sa);
    check_rank2("matmul", sb);
    if (sa[1] != sb[0]) {
        throw ShapeError("matmul: inner dimensions do not match: " + shape_str(sa) + " vs " +
                         shape_str(sb));
    }
    const int m = sa[0], k = sa[1], n = sb[1];
    const auto& A = value(a.id());
    const auto& B = value(b.id());
    std::vector<double> C(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        const double* arow = &A[static_cast<std::size_t>(i) * k];
        double* crow = &C[static_cast<std::size_t>(i) * n];
        for (int p = 0; p < k; ++p) {
            const double aip = arow[p];
            if (aip == 0.0) continue;
            const double* brow = &B[static_cast<std::size_t>(p) * n];
            for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    const int aid = a.id(), bid = b.id();
    return emplace("matmul", {m, n}, std::move(C), {aid, bid}, [aid, bid, m, k, n](Backprop& bp) {
        const auto& A = bp.val(aid);
        const auto& B = bp.val(bid);
        if (bp.needed(aid)) {
            auto& dA = bp.at(aid);
            for (int i = 0; i < m; ++i) {
                const double* drow = &bp.dout[static_cast<std::size_t>(i) * n];
                double* darow = &dA[static_cast<std::size_t>(i) * k];
                for (int p = 0; p < k; ++p) {
                    const double* brow = &B[static_cast<std::size_t>(p) * n];
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j) acc += drow[j] * brow[j];
                    darow[p] += acc;
                }
            }
        }
        if (bp.needed(bid)) {
            auto& dB = bp.at(bid);
            for (int p = 0; p < k; ++p) {
                double* dbrow = &dB[static_cast<std::size_t>(p) * n];
                for (int i = 0; i < m; ++i) {
                    const double aip = A[static_cast<std::size_t>(i) * k + p];
                    if (aip == 0.0) continue;
                    const double* drow = &bp.dout[static_cast<std::size_t>(i) * n];
                    for (int j = 0; j < n; ++j) dbrow[j] += aip * drow[j];
                }
            }
        }
    });
}

Var Graph::transpose(Var a) {
    require_same_graph("transpose", {a});
    const Shape& s = shape(a.id());
    check_rank2("transpose", s);
    const int r = s[0], c = s[1];
    const auto& A = value(a.id());
    std::vector<double> T(A.size());
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            T[static_cast<std::size_t>(j) * r + i] = A[static_cast<std::size_t>(i) * c + j];
    const int aid = a.id();
    return emplace("transpose", {c, r}, std::move(T), {aid}, [aid, r, c](Backprop& bp) {
        if (!bp.needed(aid)) return;
        auto& dA = bp.at(aid);
        for (int j = 0; j < c; ++j)
            for (int i = 0; i < r; ++i)
                dA[static_cast<std::size_t>(i) * c + j] += bp.dout[static_cast<std::size_t>(j) * r + i];
    });
}

namespace {
void check_same_shape(const char* op, const Shape& sa, const Shape& sb) {
    if (sa != sb) {
        throw ShapeError(std::string(op) + ": shape mismatch: " + shape_str(sa) + " vs " +
                         shape_str(sb));
    }
}
}  // namespace

Var Graph::add(Var a, Var b) {
    require_same_graph("add", {a, b});
    check_same_shape("add", shape(a.id()), shape(b.id()));
    const auto& A = value(a.id());
    const auto& B = value(b.id());
    std::vector<double> C(A.size());
    for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] + B[i];
    const int aid = a.id(), bid = b.id();
    return emplace("add", shape(a.id()), std::move(C), {aid, bid}, [aid, bid](Backprop& bp) {
        if (bp.needed(aid)) {
            auto& dA = bp.at(aid);
            for (std::size_t i = 0; i < bp.dout.size(); ++i) dA[i] += bp.dout[i];
        }
        if (bp.needed(bid)) {
            auto& dB = bp.at(bid);
            for (std::size_t i = 0; i < bp.dout.size(); ++i) dB[i] += bp.dout[i];
        }
    });
}

Var Graph::sub(Var a, Var b) {
    require_same_graph("sub", {a, b});
    check_same_shape("sub", shape(a.id()), shape(b.id()));
    const auto& A = value(a.id());
    const auto& B = value(b.id());
    std::vector<double> C(A.size());
    for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] - B[i];
    const int aid = a.id(), bid = b.id();
    return emplace("sub", shape(a.id()), std::move(C), {aid, bid}, [aid, bid](Backprop& bp) {
        if (bp.needed(aid)) {
            auto& dA = bp.at(aid);
            for (std::size_t i = 0; i < bp.dout.size(); ++i) dA[i] += bp.dout[i];
        }
        if (bp.needed(bid)) {
            auto& dB = bp.at(bid);
            for (std::size_t i = 0; i < bp.dout.size(); ++i) dB[i] -= bp.dout[i];
        }
    });
}

Var Graph::mul(Var a, Var b) {
    require_same_graph("mul", {a, b});
    check_same_shape("mul", shape(a.id()), shape(b.id()));
    const auto& A = value(a.id());
    const auto& B = value(b.id());
    std::vector<double> C(A.size());
    for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] * B[i];
    const int aid = a.id(), bid = b.id();
    return emplace("mul", shape(a.id()), std::move(C), {aid, bid}, [aid, bid](Backprop& bp) {
        const auto& A = bp.val(aid);
        const auto& B = bp.val(bid);
        if (bp.needed(aid)) {
            auto& dA = bp.at(aid);
            for (std::size_t i = 0; i < bp.dout.size(); ++i) dA[i] += bp.dout[i] * B[i];
        }
        if (bp.needed(bid)) {
            auto& dB = bp.at(bid);
            for (std::size_t i = 0; i < bp.dout.size(); ++i) dB[i] += bp.dout[i] * A[i];
        }
    });
}

Var Graph::scale(Var a, double c) {
    require_same_graph("scale", {a});
    if (!std::isfinite(c)) throw NumericError("scale: non-finite scale factor");
    const auto& A = value(a.id());
    std::vector<double> C(A.size());
    for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] * c;
    const int aid = a.id();
    return emplace("scale", shape(a.id()), std::move(C), {aid}, [aid, c](Backprop& bp) {
        if (!bp.needed(aid)) return;
        auto& dA = bp.at(aid);
        for (std::size_t i = 0; i < bp.dout.size(); ++i) dA[i] += c * bp.dout[i];
    });
}

Var Graph::add_row(Var a, Var row) {
    require_same_graph("add_row", {a, row});
    const Shape& sa = shape(a.id());
    const Shape& sr = shape(row.id());
    check_rank2("add_row", sa);
    check_rank2("add_row", sr);
    if (sr[0] != 1 || sr[1] != sa[1]) {
        throw ShapeError("add_row: row shape " + shape_str(sr) + " does not broadcast over " +
                         shape_str(sa));
    }
    const int r = sa[0], c = sa[1];
    const auto& A = value(a.id());
    const auto& R = value(row.id());
    std::vector<double> C(A.size());
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            C[static_cast<std::size_t>(i) * c + j] = A[static_cast<std::size_t>(i) * c + j] + R[j];
    const int aid = a.id(), rid = row.id();
    return emplace("add_row", sa, std::move(C), {aid, rid}, [aid, rid, r, c](Backprop& bp) {
        if (bp.needed(aid)) {
            auto& dA = bp.at(aid);
            for (std::size_t i = 0; i < bp.dout.size(); ++i) dA[i] += bp.dout[i];
        }
        if (bp.needed(rid)) {
            auto& dR = bp.at(rid);
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) dR[j] += bp.dout[static_cast<std::size_t>(i) * c + j];
        }
    });
}

Var Graph::row_softmax(Var a) {
    require_same_graph("row_softmax", {a});
    const Shape& s = shape(a.id());
    check_rank2("row_softmax", s);
    const int r = s[0], c = s[1];
    const auto& A = value(a.id());
    std::vector<double> Y(A.size());
    for (int i = 0; i < r; ++i) {
        const double* x = &A[static_cast<std::size_t>(i) * c];
        double* y = &Y[static_cast<std::size_t>(i) * c];
        double mx = x[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) {
            y[j] = std::exp(x[j] - mx);
            z += y[j];
        }
        for (int j = 0; j < c; ++j) y[j] /= z;
    }
    const int aid = a.id();
    Var out = emplace("row_softmax", s, std::move(Y), {aid}, nullptr);
    const int oid = out.id();
    nodes_[oid].backward = [aid, oid, r, c](Backprop& bp) {
        if (!bp.needed(aid)) return;
        const auto& Y = bp.val(oid);
        auto& dA = bp.at(aid);
        for (int i = 0; i < r; ++i) {
            const double* y = &Y[static_cast<std::size_t>(i) * c];
            const double* dy = &bp.dout[static_cast<std::size_t>(i) * c];
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += dy[j] * y[j];
            double* dx = &dA[static_cast<std::size_t>(i) * c];
            for (int j = 0; j < c; ++j) dx[j] += y[j] * (dy[j] - dot);
        }
    };
    return out;
}

Var Graph::row_log_softmax(Var a) {
    require_same_graph("row_log_softmax", {a});
    const Shape& s = shape(a.id());
    check_rank2("row_log_softmax", s);
    const int r = s[0], c = s[1];
    const auto& A = value(a.id());
    std::vector<double> Y(A.size());
    for (int i = 0; i < r; ++i) {
        const double* x = &A[static_cast<std::size_t>(i) * c];
        double* y = &Y[static_cast<std::size_t>(i) * c];
        double mx = x[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(x[j] - mx);
        const double lse = mx + std::log(z);
        for (int j = 0; j < c; ++j) y[j] = x[j] - lse;
    }
    const int aid = a.id();
    Var out = emplace("row_log_softmax", s, std::move(Y), {aid}, nullptr);
    const int oid = out.id();
    nodes_[oid].backward = [aid, oid, r, c](Backprop& bp) {
        if (!bp.needed(aid)) return;
        const auto& Y = bp.val(oid);  // log-probabilities
        auto& dA = bp.at(aid);
        for (int i = 0; i < r; ++i) {
            const double* y = &Y[static_cast<std::size_t>(i) * c];
            const double* dy = &bp.dout[static_cast<std::size_t>(i) * c];
            double total = 0.0;
            for (int j = 0; j < c; ++j) total += dy[j];
            double* dx = &dA[static_cast<std::size_t>(i) * c];
            for (int j = 0; j < c; ++j) dx[j] += dy[j] - std::exp(y[j]) * total;
        }
    };
    return out;
}

Var Graph::relu(Var a) {
    require_same_graph("relu", {a});
    const auto& A = value(a.id());
    std::vector<double> Y(A.size());
    for (std::size_t i = 0; i < A.size(); ++i) Y[i] = A[i] > 0.0 ? A[i] : 0.0;
    const int aid = a.id();
    return emplace("relu", shape(a.id()), std::move(Y), {aid}, [aid](Backprop& bp) {
        if (!bp.needed(aid)) return;
        const auto& A = bp.val(aid);
        auto& dA = bp.at(aid);
        for (std::size_t i = 0; i < bp.dout.size(); ++i) {
            if (A[i] > 0.0) dA[i] += bp.dout[i];
        }
    });
}

Var Graph::softplus(Var x, Var beta) {
    require_same_graph("softplus", {x, beta});
    const Shape& sx = shape(x.id());
    const Shape& sb = shape(beta.id());
    check_rank2("softplus", sx);
    check_rank2("softplus", sb);
    if (sb[0] != 1 || sb[1] != sx[1]) {
        throw ShapeError("softplus: softness shape " + shape_str(sb) +
                         " does not broadcast over " + shape_str(sx));
    }
    const int r = sx[0], c = sx[1];
    const auto& X = value(x.id());
    const auto& B = value(beta.id());
    for (double b : B) {
        if (!(b > 0.0)) throw NumericError("softplus: softness must be strictly positive");
    }
    std::vector<double> Y(X.size());
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * c + j;
            Y[k] = B[j] * stable_softplus(X[k] / B[j]);
        }
    const int xid = x.id(), bid = beta.id();
    return emplace("softplus", sx, std::move(Y), {xid, bid}, [xid, bid, r, c](Backprop& bp) {
        const auto& X = bp.val(xid);
        const auto& B = bp.val(bid);
        const bool nx = bp.needed(xid);
        const bool nb = bp.needed(bid);
        if (!nx && !nb) return;
        std::vector<double>* dX = nx ? &bp.at(xid) : nullptr;
        std::vector<double>* dB = nb ? &bp.at(bid) : nullptr;
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) {
                const std::size_t k = static_cast<std::size_t>(i) * c + j;
                const double z = X[k] / B[j];
                const double sig = stable_sigmoid(z);
                if (nx) (*dX)[k] += bp.dout[k] * sig;
                if (nb) (*dB)[j] += bp.dout[k] * (stable_softplus(z) - z * sig);
            }
    });
}

Var Graph::log(Var a) {
    require_same_graph("log", {a});
    const auto& A = value(a.id());
    std::vector<double> Y(A.size());
    for (std::size_t i = 0; i < A.size(); ++i) Y[i] = std::log(A[i]);
    const int aid = a.id();
    return emplace("log", shape(a.id()), std::move(Y), {aid}, [aid](Backprop& bp) {
        if (!bp.needed(aid)) return;
        const auto& A = bp.val(aid);
        auto& dA = bp.at(aid);
        for (std::size_t i = 0; i < bp.dout.size(); ++i) dA[i] += bp.dout[i] / A[i];
    });
}

Var Graph::exp(Var a) {
    require_same_graph("exp", {a});
    const auto& A = value(a.id());
    std::vector<double> Y(A.size());
    for (std::size_t i = 0; i < A.size(); ++i) Y[i] = std::exp(A[i]);
    const int aid = a.id();
    Var out = emplace("exp", shape(a.id()), std::move(Y), {aid}, nullptr);
    const int oid = out.id();
    nodes_[oid].backward = [aid, oid](Backprop& bp) {
        if (!bp.needed(aid)) return;
        const auto& Y = bp.val(oid);
        auto& dA = bp.at(aid);
        for (std::size_t i = 0; i < bp.dout.size(); ++i) dA[i] += bp.dout[i] * Y[i];
    };
    return out;
}

Var Graph::sum_all(Var a) {
    require_same_graph("sum_all", {a});
    const auto& A = value(a.id());
    double s = 0.0;
    for (double v : A) s += v;
    const int aid = a.id();
    return emplace("sum_all", {1, 1}, {s}, {aid}, [aid](Backprop& bp) {
        if (!bp.needed(aid)) return;
        auto& dA = bp.at(aid);
        for (std::size_t i = 0; i < dA.size(); ++i) dA[i] += bp.dout[0];
    });
}

Var Graph::mean_all(Var a) {
    require_same_graph("mean_all", {a});
    const auto& A = value(a.id());
    double s = 0.0;
    for (double v : A) s += v;
    const double inv = 1.0 / static_cast<double>(A.size());
    const int aid = a.id();
    return emplace("mean_all", {1, 1}, {s * inv}, {aid}, [aid, inv](Backprop& bp) {
        if (!bp.needed(aid)) return;
        auto& dA = bp.at(aid);
        for (std::size_t i = 0; i < dA.size(); ++i) dA[i] += bp.dout[0] * inv;
    });
}

Var Graph::sum_rows(Var a) {
    require_same_graph("sum_rows", {a});
    const Shape& s = shape(a.id());
    check_rank2("sum_rows", s);
    const int r = s[0], c = s[1];
    const auto& A = value(a.id());
    std::vector<double> Y(r, 0.0);
    for (int i = 0; i < r; ++i) {
        const double* row = &A[static_cast<std::size_t>(i) * c];
        double acc = 0.0;
        for (int j = 0; j < c; ++j) acc += row[j];
        Y[i] = acc;
    }
    const int aid = a.id();
    return emplace("sum_rows", {r, 1}, std::move(Y), {aid}, [aid, r, c](Backprop& bp) {
        if (!bp.needed(aid)) return;
        auto& dA = bp.at(aid);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) dA[static_cast<std::size_t>(i) * c + j] += bp.dout[i];
    });
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no operands");
    require_same_graph("concat_cols", {parts.front()});
    const int r = shape(parts.front().id())[0];
    int total = 0;
    for (const Var& p : parts) {
        require_same_graph("concat_cols", {p});
        const Shape& s = shape(p.id());
        check_rank2("concat_cols", s);
        if (s[0] != r) {
            throw ShapeError("concat_cols: row mismatch: " + shape_str(shape(parts.front().id())) +
                             " vs " + shape_str(s));
        }
        total += s[1];
    }
    std::vector<double> Y(static_cast<std::size_t>(r) * total);
    std::vector<int> ids;
    std::vector<int> widths;
    int off = 0;
    for (const Var& p : parts) {
        const Shape& s = shape(p.id());
        const auto& A = value(p.id());
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < s[1]; ++j)
                Y[static_cast<std::size_t>(i) * total + off + j] =
                    A[static_cast<std::size_t>(i) * s[1] + j];
        ids.push_back(p.id());
        widths.push_back(s[1]);
        off += s[1];
    }
    return emplace("concat_cols", {r, total}, std::move(Y), ids,
                   [ids, widths, r, total](Backprop& bp) {
                       int off = 0;
                       for (std::size_t p = 0; p < ids.size(); ++p) {
                           const int w = widths[p];
                           if (bp.needed(ids[p])) {
                               auto& dA = bp.at(ids[p]);
                               for (int i = 0; i < r; ++i)
                                   for (int j = 0; j < w; ++j)
                                       dA[static_cast<std::size_t>(i) * w + j] +=
                                           bp.dout[static_cast<std::size_t>(i) * total + off + j];
                           }
                           off += w;
                       }
                   });
}

Var Graph::slice_rows(Var a, int r0, int r1) {
    require_same_graph("slice_rows", {a});
    const Shape& s = shape(a.id());
    check_rank2("slice_rows", s);
    if (r0 < 0 || r1 > s[0] || r0 >= r1) {
        throw ShapeError("slice_rows: range [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ") invalid for " + shape_str(s));
    }
    const int c = s[1];
    const auto& A = value(a.id());
    std::vector<double> Y(A.begin() + static_cast<std::size_t>(r0) * c,
                          A.begin() + static_cast<std::size_t>(r1) * c);
    const int aid = a.id();
    return emplace("slice_rows", {r1 - r0, c}, std::move(Y), {aid}, [aid, r0, c](Backprop& bp) {
        if (!bp.needed(aid)) return;
        auto& dA = bp.at(aid);
        for (std::size_t i = 0; i < bp.dout.size(); ++i)
            dA[static_cast<std::size_t>(r0) * c + i] += bp.dout[i];
    });
}

Var Graph::slice_cols(Var a, int c0, int c1) {
    require_same_graph("slice_cols", {a});
    const Shape& s = shape(a.id());
    check_rank2("slice_cols", s);
    if (c0 < 0 || c1 > s[1] || c0 >= c1) {
        throw ShapeError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") invalid for " + shape_str(s));
    }
    const int r = s[0], c = s[1], w = c1 - c0;
    const auto& A = value(a.id());
    std::vector<double> Y(static_cast<std::size_t>(r) * w);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j)
            Y[static_cast<std::size_t>(i) * w + j] = A[static_cast<std::size_t>(i) * c + c0 + j];
    const int aid = a.id();
    return emplace("slice_cols", {r, w}, std::move(Y), {aid}, [aid, r, c, c0, w](Backprop& bp) {
        if (!bp.needed(aid)) return;
        auto& dA = bp.at(aid);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < w; ++j)
                dA[static_cast<std::size_t>(i) * c + c0 + j] +=
                    bp.dout[static_cast<std::size_t>(i) * w + j];
    });
}

Var Graph::gather_rows(Var a, std::vector<int> rows) {
    require_same_graph("gather_rows", {a});
    const Shape& s = shape(a.id());
    check_rank2("gather_rows", s);
    const int c = s[1];
    for (int r : rows) {
        if (r < 0 || r >= s[0]) {
            throw ShapeError("gather_rows: index " + std::to_string(r) + " out of range for " +
                             shape_str(s));
        }
    }
    std::vector<double> Y(rows.size() * static_cast<std::size_t>(c));
    const auto& A = value(a.id());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < c; ++j)
            Y[i * c + j] = A[static_cast<std::size_t>(rows[i]) * c + j];
    const int aid = a.id();
    const int n = static_cast<int>(rows.size());
    return emplace("gather_rows", {n, c}, std::move(Y), {aid},
                   [aid, rows = std::move(rows), c](Backprop& bp) {
                       if (!bp.needed(aid)) return;
                       auto& dA = bp.at(aid);
                       for (std::size_t i = 0; i < rows.size(); ++i)
                           for (int j = 0; j < c; ++j)
                               dA[static_cast<std::size_t>(rows[i]) * c + j] += bp.dout[i * c + j];
                   });
}

Var Graph::layer_norm(Var a, Var gain, Var bias, double eps) {
    require_same_graph("layer_norm", {a, gain, bias});
    const Shape& s = shape(a.id());
    check_rank2("layer_norm", s);
    const int r = s[0], c = s[1];
    const Shape want{1, c};
    if (shape(gain.id()) != want || shape(bias.id()) != want) {
        throw ShapeError("layer_norm: gain/bias must be {1," + std::to_string(c) + "}, got " +
                         shape_str(shape(gain.id())) + " and " + shape_str(shape(bias.id())));
    }
    const auto& A = value(a.id());
    const auto& G = value(gain.id());
    const auto& B = value(bias.id());
    std::vector<double> Y(A.size());
    std::vector<double> mean(r), inv_std(r);
    for (int i = 0; i < r; ++i) {
        const double* x = &A[static_cast<std::size_t>(i) * c];
        double m = 0.0;
        for (int j = 0; j < c; ++j) m += x[j];
        m /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) var += (x[j] - m) * (x[j] - m);
        var /= c;
        const double is = 1.0 / std::sqrt(var + eps);
        mean[i] = m;
        inv_std[i] = is;
        double* y = &Y[static_cast<std::size_t>(i) * c];
        for (int j = 0; j < c; ++j) y[j] = G[j] * (x[j] - m) * is + B[j];
    }
    const int aid = a.id(), gid = gain.id(), bid = bias.id();
    return emplace("layer_norm", s, std::move(Y), {aid, gid, bid},
                   [aid, gid, bid, r, c, mean = std::move(mean),
                    inv_std = std::move(inv_std)](Backprop& bp) {
                       const auto& A = bp.val(aid);
                       const auto& G = bp.val(gid);
                       const bool na = bp.needed(aid);
                       const bool ng = bp.needed(gid);
                       const bool nb = bp.needed(bid);
                       std::vector<double>* dA = na ? &bp.at(aid) : nullptr;
                       std::vector<double>* dG = ng ? &bp.at(gid) : nullptr;
                       std::vector<double>* dB = nb ? &bp.at(bid) : nullptr;
                       for (int i = 0; i < r; ++i) {
                           const double* x = &A[static_cast<std::size_t>(i) * c];
                           const double* dy = &bp.dout[static_cast<std::size_t>(i) * c];
                           const double m = mean[i];
                           const double is = inv_std[i];
                           if (ng || nb) {
                               for (int j = 0; j < c; ++j) {
                                   if (ng) (*dG)[j] += dy[j] * (x[j] - m) * is;
                                   if (nb) (*dB)[j] += dy[j];
                               }
                           }
                           if (na) {
                               // u = gain .* dy; dx = (u - mean(u) - xhat*mean(u.*xhat)) * inv_std
                               double mu = 0.0, mux = 0.0;
                               for (int j = 0; j < c; ++j) {
                                   const double u = G[j] * dy[j];
                                   const double xh = (x[j] - m) * is;
                                   mu += u;
                                   mux += u * xh;
                               }
                               mu /= c;
                               mux /= c;
                               double* dxr = &(*dA)[static_cast<std::size_t>(i) * c];
                               for (int j = 0; j < c; ++j) {
                                   const double u = G[j] * dy[j];
                                   const double xh = (x[j] - m) * is;
                                   dxr[j] += (u - mu - xh * mux) * is;
                               }
                           }
                       }
                   });
}

Var Graph::dropout(Var a, double p, UniformRng& rng) {
    require_same_graph("dropout", {a});
    if (!(p >= 0.0 && p < 1.0)) {
        throw ShapeError("dropout: rate must be in [0,1), got " + std::to_string(p));
    }
    const auto& A = value(a.id());
    std::vector<double> mask(A.size());
    const double keep_scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = rng.uniform01() < p ? 0.0 : keep_scale;
    }
    std::vector<double> Y(A.size());
    for (std::size_t i = 0; i < A.size(); ++i) Y[i] = A[i] * mask[i];
    const int aid = a.id();
    return emplace("dropout", shape(a.id()), std::move(Y), {aid},
                   [aid, mask = std::move(mask)](Backprop& bp) {
                       if (!bp.needed(aid)) return;
                       auto& dA = bp.at(aid);
                       for (std::size_t i = 0; i < bp.dout.size(); ++i)
                           dA[i] += bp.dout[i] * mask[i];
                   });
}

void Graph::backward(Var loss) {
    require_same_graph("backward", {loss});
    if (numel(shape(loss.id())) != 1) {
        throw ShapeError("backward: loss must be scalar, got " + shape_str(shape(loss.id())));
    }
    std::vector<std::vector<double>> adj(nodes_.size());
    adj[loss.id()] = {1.0};
    for (int i = loss.id(); i >= 0; --i) {
        Node& n = nodes_[i];
        if (adj[i].empty() || !n.requires_grad) continue;
        if (n.backward) {
            Backprop bp{*this, adj, adj[i]};
            n.backward(bp);
        }
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (adj[i].empty() || !nodes_[i].requires_grad) continue;
        auto& g = nodes_[i].grad;
        if (g.empty()) g.assign(adj[i].size(), 0.0);
        for (std::size_t k = 0; k < adj[i].size(); ++k) g[k] += adj[i][k];
    }
}

void Graph::reset_gradients() {
    for (auto& n : nodes_) n.grad.clear();
}

}  // namespace thp::ad
