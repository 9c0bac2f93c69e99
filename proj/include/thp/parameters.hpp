#pragma once

#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "thp/errors.hpp"
#include "thp/rng.hpp"
#include "thp/tensor.hpp"

namespace thp {

// One learned tensor with its accumulated gradient and optimizer moments.
struct ParamTensor {
    std::string name;
    ad::Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // batch-accumulated, cleared by zero_grads()
    std::vector<double> m;     // Adam first moment
    std::vector<double> v;     // Adam second moment
    bool trainable = true;
};

// Named parameter collection. Creation order is preserved — it defines the
// tensor order in the serialized archive and the optimizer walk, which keeps
// training bitwise reproducible.
class ParamStore {
public:
    ParamTensor& create(const std::string& name, ad::Shape shape, std::vector<double> value);
    // fan-in-scaled symmetric uniform init, the default for weight matrices
    ParamTensor& create_uniform(const std::string& name, ad::Shape shape, int fan_in,
                                UniformRng& rng);
    ParamTensor& create_zeros(const std::string& name, ad::Shape shape);
    ParamTensor& create_constant(const std::string& name, ad::Shape shape, double fill);

    bool contains(const std::string& name) const;
    ParamTensor& at(const std::string& name);
    const ParamTensor& at(const std::string& name) const;

    std::vector<ParamTensor>& tensors() { return tensors_; }
    const std::vector<ParamTensor>& tensors() const { return tensors_; }

    void zero_grads();
    void add_grad(const std::string& name, const std::vector<double>& g);

    // Model directory layout: <dir>/params.bin (raw little-endian doubles in
    // creation order) + <dir>/manifest.json (shapes, offsets, and the caller's
    // extra sections). Writing is deterministic byte-for-byte.
    void save(const std::string& dir, const nlohmann::ordered_json& extra) const;
    static ParamStore load(const std::string& dir, nlohmann::json* manifest_out);

private:
    std::vector<ParamTensor> tensors_;
    std::map<std::string, std::size_t> index_;
};

// Binds store tensors to leaves of one autodiff graph. Leaves are created on
// first use; after backward(), harvest() adds the graph's gradients into the
// store's accumulators.
class GraphBinding {
public:
    GraphBinding(ad::Graph& g, ParamStore& store) : graph_(g), store_(store) {}

    ad::Var operator[](const std::string& name);

    void harvest();

private:
    ad::Graph& graph_;
    ParamStore& store_;
    std::map<std::string, ad::Var> bound_;
};

}  // namespace thp
