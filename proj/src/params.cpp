#include "gengnn/params.hpp"

#include <cmath>
#include <fstream>

#include "gengnn/errors.hpp"
#include "gengnn/random.hpp"

namespace gengnn {

using nlohmann::json;

Tensor ParamStore::insert(const std::string& name, Tensor t) {
    if (contains(name)) throw ContractError("parameter '" + name + "' registered twice");
    t.set_requires_grad(true);
    index_[name] = params_.size();
    params_.emplace_back(name, std::move(t));
    return params_.back().second;
}

Tensor ParamStore::add_uniform(const std::string& name, int fan_in, int fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> values(static_cast<std::size_t>(fan_in) * static_cast<std::size_t>(fan_out));
    for (double& v : values) v = rng.uniform(-a, a);
    return insert(name, Tensor({fan_in, fan_out}, std::move(values)));
}

Tensor ParamStore::add_constant(const std::string& name, const Shape& shape, double value) {
    return insert(name, Tensor::full(shape, value));
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return params_[it->second].second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return params_[it->second].second;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

void ParamStore::scale_grad(double s) {
    for (auto& [name, t] : params_)
        if (t.has_grad())
            for (double& g : t.mutable_grad()) g *= s;
}

json ParamStore::to_json() const {
    json out = json::object();
    for (const auto& [name, t] : params_) {
        json entry;
        entry["shape"] = t.shape();
        entry["values"] = std::vector<double>(t.data().begin(), t.data().end());
        out[name] = std::move(entry);
    }
    return out;
}

void ParamStore::load_json(const json& j) {
    if (!j.is_object()) throw CompatibilityError("checkpoint params must be an object");
    for (const auto& [name, t] : params_) {
        if (!j.contains(name)) throw CompatibilityError("checkpoint lacks parameter '" + name + "'");
        const auto shape = j.at(name).at("shape").get<Shape>();
        if (shape != t.shape())
            throw CompatibilityError("parameter '" + name + "' has shape " + shape_str(shape) + " in checkpoint, model expects " +
                                     shape_str(t.shape()));
    }
    if (j.size() != params_.size()) {
        for (const auto& [name, value] : j.items())
            if (!contains(name)) throw CompatibilityError("checkpoint has unexpected parameter '" + name + "'");
    }
    for (auto& [name, t] : params_) {
        const auto values = j.at(name).at("values").get<std::vector<double>>();
        if (values.size() != t.numel()) throw CompatibilityError("parameter '" + name + "' has wrong value count");
        std::copy(values.begin(), values.end(), t.mutable_data().begin());
    }
}

void Adam::step(ParamStore& params) {
    ++t_;
    double clip = 1.0;
    if (cfg_.grad_clip > 0) {
        double sq = 0.0;
        for (const auto& [name, p] : params.items())
            for (double g : p.grad()) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > cfg_.grad_clip) clip = cfg_.grad_clip / norm;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : params.items()) {
        if (!p.has_grad()) continue;
        auto& m = m_[name];
        auto& v = v_[name];
        if (m.empty()) {
            m.assign(p.numel(), 0.0);
            v.assign(p.numel(), 0.0);
        }
        auto w = p.mutable_data();
        const auto g = p.grad();
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double gk = g[k] * clip + cfg_.weight_decay * w[k];
            m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
            v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
            w[k] -= cfg_.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg_.eps);
        }
    }
}

json Adam::to_json() const {
    return json{{"t", t_}, {"m", m_}, {"v", v_}};
}

void Adam::load_json(const json& j) {
    t_ = j.at("t").get<long>();
    m_ = j.at("m").get<std::map<std::string, std::vector<double>>>();
    v_ = j.at("v").get<std::map<std::string, std::vector<double>>>();
}

void save_checkpoint(const std::filesystem::path& path, const json& config, const ParamStore& params, const json& extra) {
    json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["config"] = config;
    j["params"] = params.to_json();
    j["extra"] = extra;
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write checkpoint " + tmp);
        out << j.dump();
        if (!out) throw IoError("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw CompatibilityError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
    }
    if (j.value("format", std::string{}) != kCheckpointFormat)
        throw CompatibilityError(path.string() + " is not a gengnn checkpoint");
    if (j.value("version", 0) != kCheckpointVersion)
        throw CompatibilityError("unsupported checkpoint version " + std::to_string(j.value("version", 0)));
    return {j.at("config"), j.at("params"), j.value("extra", json::object())};
}

}  // namespace gengnn
