#include "thp/parameters.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace thp {

ParamTensor& ParamStore::create(const std::string& name, ad::Shape shape,
                                std::vector<double> value) {
    if (index_.count(name)) {
        throw ConfigError("parameter \"" + name + "\" created twice");
    }
    if (value.size() != ad::numel(shape)) {
        throw ShapeError("parameter \"" + name + "\": data length " +
                         std::to_string(value.size()) + " does not match shape " +
                         ad::shape_str(shape));
    }
    ParamTensor t;
    t.name = name;
    t.shape = std::move(shape);
    t.value = std::move(value);
    index_[name] = tensors_.size();
    tensors_.push_back(std::move(t));
    return tensors_.back();
}

ParamTensor& ParamStore::create_uniform(const std::string& name, ad::Shape shape, int fan_in,
                                        UniformRng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(ad::numel(shape));
    for (double& x : v) x = rng.uniform(-bound, bound);
    return create(name, std::move(shape), std::move(v));
}

ParamTensor& ParamStore::create_zeros(const std::string& name, ad::Shape shape) {
    std::vector<double> v(ad::numel(shape), 0.0);
    return create(name, std::move(shape), std::move(v));
}

ParamTensor& ParamStore::create_constant(const std::string& name, ad::Shape shape, double fill) {
    std::vector<double> v(ad::numel(shape), fill);
    return create(name, std::move(shape), std::move(v));
}

bool ParamStore::contains(const std::string& name) const { return index_.count(name) != 0; }

ParamTensor& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter \"" + name + "\"");
    return tensors_[it->second];
}

const ParamTensor& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter \"" + name + "\"");
    return tensors_[it->second];
}

void ParamStore::zero_grads() {
    for (auto& t : tensors_) t.grad.clear();
}

void ParamStore::add_grad(const std::string& name, const std::vector<double>& g) {
    ParamTensor& t = at(name);
    if (g.size() != t.value.size()) {
        throw ShapeError("gradient for \"" + name + "\" has wrong length");
    }
    if (t.grad.empty()) t.grad.assign(t.value.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) t.grad[i] += g[i];
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "model archives are little-endian; byte-swapping is not implemented");

}  // namespace

void ParamStore::save(const std::string& dir, const nlohmann::ordered_json& extra) const {
    std::filesystem::create_directories(dir);
    const std::string bin_path = dir + "/params.bin";
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw DataError("cannot open " + bin_path + " for writing");

    nlohmann::ordered_json manifest;
    manifest["format"] = "thp-model";
    manifest["version"] = 1;
    for (const auto& [key, value] : extra.items()) manifest[key] = value;

    nlohmann::ordered_json tensor_list = nlohmann::ordered_json::array();
    std::size_t offset = 0;
    for (const auto& t : tensors_) {
        bin.write(reinterpret_cast<const char*>(t.value.data()),
                  static_cast<std::streamsize>(t.value.size() * sizeof(double)));
        nlohmann::ordered_json entry;
        entry["name"] = t.name;
        entry["shape"] = t.shape;
        entry["offset"] = offset;
        entry["count"] = t.value.size();
        entry["trainable"] = t.trainable;
        tensor_list.push_back(std::move(entry));
        offset += t.value.size();
    }
    manifest["tensors"] = std::move(tensor_list);
    if (!bin) throw DataError("write failed: " + bin_path);
    bin.close();

    const std::string man_path = dir + "/manifest.json";
    std::ofstream man(man_path, std::ios::binary);
    if (!man) throw DataError("cannot open " + man_path + " for writing");
    man << manifest.dump(2) << "\n";
    if (!man) throw DataError("write failed: " + man_path);
}

ParamStore ParamStore::load(const std::string& dir, nlohmann::json* manifest_out) {
    const std::string man_path = dir + "/manifest.json";
    std::ifstream man(man_path);
    if (!man) throw DataError("cannot open model manifest: " + man_path);
    nlohmann::json manifest;
    try {
        man >> manifest;
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(man_path + ": " + e.what());
    }
    if (manifest.value("format", "") != "thp-model") {
        throw DataError(man_path + ": not a model manifest");
    }

    const std::string bin_path = dir + "/params.bin";
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw DataError("cannot open model archive: " + bin_path);
    std::vector<char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

    ParamStore store;
    for (const auto& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const ad::Shape shape = entry.at("shape").get<ad::Shape>();
        const std::size_t offset = entry.at("offset").get<std::size_t>();
        const std::size_t count = entry.at("count").get<std::size_t>();
        if (count != ad::numel(shape)) {
            throw DataError(man_path + ": tensor \"" + name + "\" count does not match shape");
        }
        if ((offset + count) * sizeof(double) > raw.size()) {
            throw DataError(bin_path + ": archive too short for tensor \"" + name + "\"");
        }
        std::vector<double> value(count);
        std::memcpy(value.data(), raw.data() + offset * sizeof(double), count * sizeof(double));
        for (double x : value) {
            if (!std::isfinite(x)) {
                throw DataError(bin_path + ": tensor \"" + name + "\" holds non-finite values");
            }
        }
        ParamTensor& t = store.create(name, shape, std::move(value));
        t.trainable = entry.value("trainable", true);
    }
    if (manifest_out) *manifest_out = std::move(manifest);
    return store;
}

ad::Var GraphBinding::operator[](const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const ParamTensor& t = store_.at(name);
    ad::Var v = t.trainable ? graph_.leaf(t.shape, t.value) : graph_.constant(t.shape, t.value);
    bound_.emplace(name, v);
    return v;
}

void GraphBinding::harvest() {
    for (const auto& [name, var] : bound_) {
        if (!var.grad().empty()) store_.add_grad(name, var.grad());
    }
}

}  // namespace thp
