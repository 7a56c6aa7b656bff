// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trisense/tensor.hpp"

namespace trisense {

// Named leaf tensors. Names are dotted paths; the first segment is the
// parameter group used by staged training ("connector", "backbone", ...).
class ParameterStore {
public:
    Tensor& add(const std::string& name, Tensor value);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    std::vector<std::string> names() const;
    std::size_t size() const { return params_.size(); }
    std::size_t total_values() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    void zero_grad();
    // Deep copy with detached storage.
    ParameterStore clone() const;

    static std::string group_of(const std::string& name);

private:
    std::map<std::string, Tensor> params_;
};

struct Checkpoint {
    ParameterStore params;
    nlohmann::json meta = nlohmann::json::object();
};

inline constexpr int kCheckpointVersion = 1;

nlohmann::json checkpoint_to_json(const ParameterStore& params, const nlohmann::json& meta);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);
void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params, const nlohmann::json& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Copies values into an existing store; names and shapes must match exactly.
void assign_parameters(ParameterStore& target, const ParameterStore& source);

}  // namespace trisense
