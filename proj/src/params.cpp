// SPDX-License-Identifier: Apache-2.0
#include "trisense/params.hpp"

#include <fstream>
#include <stdexcept>

namespace trisense {

Tensor& ParameterStore::add(const std::string& name, Tensor value) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    value.set_requires_grad(true);
    return params_.emplace(name, std::move(value)).first->second;
}

Tensor& ParameterStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

const Tensor& ParameterStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

std::vector<std::string> ParameterStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, _] : params_) out.push_back(name);
    return out;
}

std::size_t ParameterStore::total_values() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += t.numel();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& [_, t] : params_) t.zero_grad();
}

ParameterStore ParameterStore::clone() const {
    ParameterStore out;
    for (const auto& [name, t] : params_) {
        auto& copy = out.add(name, t.clone());
        copy.set_requires_grad(t.requires_grad());
    }
    return out;
}

std::string ParameterStore::group_of(const std::string& name) {
    return name.substr(0, name.find('.'));
}

nlohmann::json checkpoint_to_json(const ParameterStore& params, const nlohmann::json& meta) {
    nlohmann::json doc;
    doc["format"] = "trisense-checkpoint";
    doc["version"] = kCheckpointVersion;
    doc["meta"] = meta;
    auto& out = doc["parameters"] = nlohmann::json::object();
    for (const auto& [name, t] : params) {
        auto values = t.values();
        out[name] = {{"shape", t.shape()}, {"data", std::vector<double>(values.begin(), values.end())}};
    }
    return doc;
}

Checkpoint checkpoint_from_json(const nlohmann::json& doc) {
    if (doc.value("format", "") != "trisense-checkpoint") throw std::runtime_error("not a trisense checkpoint");
    if (doc.value("version", 0) != kCheckpointVersion) {
        throw std::runtime_error("unsupported checkpoint version " + doc.value("version", nlohmann::json()).dump());
    }
    Checkpoint ck;
    ck.meta = doc.value("meta", nlohmann::json::object());
    for (const auto& [name, entry] : doc.at("parameters").items()) {
        ck.params.add(name, Tensor(entry.at("shape").get<Shape>(), entry.at("data").get<std::vector<double>>()));
    }
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params, const nlohmann::json& meta) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
    os << checkpoint_to_json(params, meta).dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read checkpoint " + path.string());
    return checkpoint_from_json(nlohmann::json::parse(is));
}

void assign_parameters(ParameterStore& target, const ParameterStore& source) {
    if (target.size() != source.size()) {
        throw std::runtime_error("parameter count mismatch: " + std::to_string(target.size()) + " vs " +
                                 std::to_string(source.size()));
    }
    for (auto& [name, t] : target) {
        const auto& src = source.get(name);
        if (src.shape() != t.shape()) {
            throw DimensionError("parameter " + name + " has shape " + shape_to_string(src.shape()) +
                                 ", expected " + shape_to_string(t.shape()));
        }
        auto sv = src.values();
        std::copy(sv.begin(), sv.end(), t.values().begin());
    }
}

}  // namespace trisense
