#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gengnn/tensor.hpp"

namespace gengnn {

class Rng;

// Named learnable tensors in registration order.
class ParamStore {
public:
    // Glorot-style uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)).
    Tensor add_uniform(const std::string& name, int fan_in, int fan_out, Rng& rng);
    Tensor add_constant(const std::string& name, const Shape& shape, double value);

    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;
    const std::vector<std::pair<std::string, Tensor>>& items() const { return params_; }
    std::vector<std::pair<std::string, Tensor>>& items() { return params_; }

    void zero_grad();
    void scale_grad(double s);

    nlohmann::json to_json() const;
    // Overwrites values of existing parameters; every stored name and shape
    // must match exactly.
    void load_json(const nlohmann::json& j);

private:
    Tensor insert(const std::string& name, Tensor t);

    std::vector<std::pair<std::string, Tensor>> params_;
    std::map<std::string, std::size_t> index_;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double grad_clip = 0.0;  // global-norm clip; 0 disables
};

class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    // Parameters without a gradient are skipped for this step.
    void step(ParamStore& params);

    long steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }

    nlohmann::json to_json() const;
    void load_json(const nlohmann::json& j);

private:
    AdamConfig cfg_;
    long t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

// Checkpoint file layout:
//   {"format": "gengnn-checkpoint", "version": 1, "config": {...},
//    "params": {"name": {"shape": [..], "values": [..]}, ...}, "extra": {...}}
inline constexpr const char* kCheckpointFormat = "gengnn-checkpoint";
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config, const ParamStore& params,
                     const nlohmann::json& extra = nlohmann::json::object());

struct Checkpoint {
    nlohmann::json config;
    nlohmann::json params;
    nlohmann::json extra;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gengnn
