#include "gengnn/run_config.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <sstream>

#include "gengnn/errors.hpp"

namespace gengnn {

using nlohmann::json;

RunConfig preset_config(DatasetKind kind) {
    RunConfig c;
    c.dataset = kind;
    DenoiserConfig& m = c.model;
    m.backbone = Backbone::mpnn;
    m.dropout = 0.1;
    c.train.adam.lr = 1e-4;
    c.train.epochs = 100;
    switch (kind) {
    case DatasetKind::tree:
    case DatasetKind::comm20:
        c.transition = TransitionKind::marginal;
        m.layers = 12;
        c.diffusion_steps = 500;
        c.train.batch_size = kind == DatasetKind::tree ? 64 : 256;
        m.hidden_x = 64, m.hidden_e = 16, m.hidden_y = 64;
        m.readout_x = 32, m.readout_e = 16, m.readout_y = 32;
        m.ffn = 32;
        break;
    case DatasetKind::planar:
        c.transition = TransitionKind::marginal;
        m.layers = 10;
        c.diffusion_steps = 1000;
        c.train.batch_size = 64;
        m.hidden_x = 128, m.hidden_e = 64, m.hidden_y = 128;
        m.readout_x = 128, m.readout_e = 64, m.readout_y = 32;
        m.ffn = 64;
        break;
    case DatasetKind::sbm:
        c.transition = TransitionKind::absorb_first;
        m.layers = 12;
        c.diffusion_steps = 1000;
        c.train.batch_size = 16;
        m.hidden_x = 64, m.hidden_e = 32, m.hidden_y = 16;
        m.readout_x = 64, m.readout_e = 32, m.readout_y = 16;
        m.ffn = 32;
        break;
    }
    return c;
}

json to_json(const RunConfig& c) {
    return json{{"dataset", to_string(c.dataset)},
                {"seed", c.seed},
                {"model", to_json(c.model)},
                {"diffusion", {{"transition", to_string(c.transition)}, {"steps", c.diffusion_steps}}},
                {"train",
                 {{"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"lr", c.train.adam.lr},
                  {"weight_decay", c.train.adam.weight_decay},
                  {"grad_clip", c.train.adam.grad_clip},
                  {"lambda_edge", c.train.lambda_edge},
                  {"seed", c.train.seed},
                  {"max_steps", c.train.max_steps},
                  {"ema", c.train.ema},
                  {"cosine_lr", c.train.cosine_lr},
                  {"lr_min_ratio", c.train.lr_min_ratio},
                  {"checkpoint_every", c.checkpoint_every}}},
                {"disabled", c.disabled}};
}

namespace {

struct Reader {
    std::vector<std::string>& bad;

    void keys(const json& j, const std::string& prefix, const std::set<std::string>& known) {
        for (const auto& [key, value] : j.items())
            if (!known.count(key)) bad.push_back("unknown key " + prefix + key);
    }

    template <class T>
    void integer(const json& j, const std::string& prefix, const char* key, T& dst, long long min) {
        if (!j.contains(key)) return;
        const json& v = j.at(key);
        if (!v.is_number_integer()) {
            bad.push_back(prefix + key + " must be an integer");
        } else if (v.get<long long>() < min) {
            bad.push_back(prefix + key + " must be >= " + std::to_string(min));
        } else {
            dst = v.get<T>();
        }
    }

    void number(const json& j, const std::string& prefix, const char* key, double& dst, double min, bool strict) {
        if (!j.contains(key)) return;
        const json& v = j.at(key);
        if (!v.is_number()) {
            bad.push_back(prefix + key + " must be a number");
            return;
        }
        const double x = v.get<double>();
        if (strict ? !(x > min) : !(x >= min)) {
            std::ostringstream os;
            os << prefix << key << " must be " << (strict ? "> " : ">= ") << min;
            bad.push_back(os.str());
            return;
        }
        dst = x;
    }

    void boolean(const json& j, const std::string& prefix, const char* key, bool& dst) {
        if (!j.contains(key)) return;
        if (!j.at(key).is_boolean())
            bad.push_back(prefix + key + " must be a boolean");
        else
            dst = j.at(key).get<bool>();
    }

    template <class F>
    void name(const json& j, const std::string& prefix, const char* key, F&& parse) {
        if (!j.contains(key)) return;
        if (!j.at(key).is_string()) {
            bad.push_back(prefix + key + " must be a string");
            return;
        }
        try {
            parse(j.at(key).get<std::string>());
        } catch (const Error& e) {
            bad.push_back(prefix + key + ": " + e.what());
        }
    }

    const json* section(const json& j, const char* key) {
        if (!j.contains(key)) return nullptr;
        if (!j.at(key).is_object()) {
            bad.push_back(std::string(key) + " must be an object");
            return nullptr;
        }
        return &j.at(key);
    }
};

}  // namespace

RunConfig run_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    std::vector<std::string> bad;
    Reader r{bad};
    r.keys(j, "", {"dataset", "seed", "model", "diffusion", "train", "disabled"});

    DatasetKind kind = DatasetKind::tree;
    r.name(j, "", "dataset", [&](const std::string& s) { kind = parse_dataset_kind(s); });
    RunConfig c = preset_config(kind);
    r.integer(j, "", "seed", c.seed, 0);

    if (const json* m = r.section(j, "model")) {
        json merged = to_json(c.model);
        merged.merge_patch(*m);
        try {
            c.model = denoiser_config_from_json(merged);
        } catch (const ConfigError& e) {
            bad.push_back(e.what());
        }
    }
    if (const json* d = r.section(j, "diffusion")) {
        r.keys(*d, "diffusion.", {"transition", "steps"});
        r.name(*d, "diffusion.", "transition", [&](const std::string& s) { c.transition = parse_transition_kind(s); });
        r.integer(*d, "diffusion.", "steps", c.diffusion_steps, 1);
    }
    if (const json* t = r.section(j, "train")) {
        r.keys(*t, "train.", {"epochs", "batch_size", "lr", "weight_decay", "grad_clip", "lambda_edge", "seed", "max_steps", "ema", "cosine_lr",
                              "lr_min_ratio", "checkpoint_every"});
        r.integer(*t, "train.", "epochs", c.train.epochs, 0);
        r.integer(*t, "train.", "batch_size", c.train.batch_size, 1);
        r.number(*t, "train.", "lr", c.train.adam.lr, 0.0, true);
        r.number(*t, "train.", "weight_decay", c.train.adam.weight_decay, 0.0, false);
        r.number(*t, "train.", "grad_clip", c.train.adam.grad_clip, 0.0, false);
        r.number(*t, "train.", "lambda_edge", c.train.lambda_edge, 0.0, false);
        r.integer(*t, "train.", "seed", c.train.seed, 0);
        r.integer(*t, "train.", "max_steps", c.train.max_steps, 0);
        r.number(*t, "train.", "ema", c.train.ema, 0.0, false);
        if (c.train.ema >= 1.0) bad.push_back("train.ema must be < 1");
        r.boolean(*t, "train.", "cosine_lr", c.train.cosine_lr);
        r.number(*t, "train.", "lr_min_ratio", c.train.lr_min_ratio, 0.0, false);
        r.integer(*t, "train.", "checkpoint_every", c.checkpoint_every, 1);
    }
    if (j.contains("disabled")) {
        if (!j.at("disabled").is_array()) {
            bad.push_back("disabled must be a list of component names");
        } else {
            std::string list;
            for (const json& v : j.at("disabled")) {
                if (!v.is_string()) {
                    bad.push_back("disabled must be a list of component names");
                    break;
                }
                list += (list.empty() ? "" : ",") + v.get<std::string>();
            }
            try {
                if (!list.empty()) apply_disable(c, list);
            } catch (const ConfigError& e) {
                bad.push_back(e.what());
            }
        }
    }
    if (!bad.empty()) {
        std::string msg = "invalid config: ";
        for (std::size_t k = 0; k < bad.size(); ++k) msg += (k ? "; " : "") + bad[k];
        throw ConfigError(msg);
    }
    return c;
}

json config_schema() {
    json out = json::object();
    auto type_of = [](const json& v) -> std::string {
        if (v.is_boolean()) return "boolean";
        if (v.is_number_integer()) return "integer";
        if (v.is_number()) return "number";
        if (v.is_string()) return "string";
        return "list";
    };
    const json defaults = to_json(preset_config(DatasetKind::tree));
    std::function<void(const json&, const std::string&)> walk = [&](const json& j, const std::string& prefix) {
        for (const auto& [key, value] : j.items()) {
            if (value.is_object())
                walk(value, prefix + key + ".");
            else
                out[prefix + key] = {{"type", type_of(value)}, {"default", value}};
        }
    };
    walk(defaults, "");
    out["dataset"]["choices"] = dataset_kind_names();
    out["diffusion.transition"]["choices"] = {"marginal", "absorbing", "absorb_first"};
    out["model.backbone"]["choices"] = {"mpnn", "gcn", "gine"};
    out["disabled"]["choices"] = component_names();
    return out;
}

const std::vector<std::string>& component_names() {
    static const std::vector<std::string> names{"rrwp", "edge_gate", "node_gate", "ffn", "residual", "norm"};
    return names;
}

void apply_disable(RunConfig& c, const std::string& list) {
    std::vector<std::string> unknown;
    std::size_t start = 0;
    while (start <= list.size()) {
        const std::size_t end = std::min(list.find(',', start), list.size());
        const std::string name = list.substr(start, end - start);
        start = end + 1;
        if (name.empty()) continue;
        bool* flag = nullptr;
        if (name == "rrwp") flag = &c.model.flags.rrwp;
        if (name == "edge_gate") flag = &c.model.flags.edge_gate;
        if (name == "node_gate") flag = &c.model.flags.node_gate;
        if (name == "ffn") flag = &c.model.flags.ffn;
        if (name == "residual") flag = &c.model.flags.residual;
        if (name == "norm") flag = &c.model.flags.norm;
        if (!flag) {
            unknown.push_back(name);
            continue;
        }
        *flag = false;
        if (std::find(c.disabled.begin(), c.disabled.end(), name) == c.disabled.end()) c.disabled.push_back(name);
    }
    if (!unknown.empty()) {
        std::string msg = "unknown component(s) to disable:";
        for (const auto& u : unknown) msg += " " + u;
        msg += " (choose from";
        for (const auto& n : component_names()) msg += " " + n;
        throw ConfigError(msg + ")");
    }
}

}  // namespace gengnn
