#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "common.hpp"
#include "gengnn/errors.hpp"
#include "gengnn/graph_io.hpp"
#include "gengnn/params.hpp"
#include "gengnn/trainer.hpp"

namespace gengnn::cli {

namespace {

struct TrainCliOptions {
    std::string config, dataset = "tree", data, val, out, disable;
    std::optional<int> epochs;
    std::optional<std::uint64_t> seed;
    bool resume = false;
    bool schema = false;
    bool quiet = false;
};

RunConfig build_config(const TrainCliOptions& o) {
    json j = json::object();
    if (!o.config.empty()) j = read_json_file(o.config);
    else j["dataset"] = o.dataset;
    if (!j.is_object()) throw ConfigError(o.config + ": run config must be a JSON object");
    if (o.epochs) j["train"]["epochs"] = *o.epochs;
    if (o.seed) {
        j["seed"] = *o.seed;
        j["train"]["seed"] = *o.seed;
    }
    RunConfig c = run_config_from_json(j);
    if (!o.disable.empty()) apply_disable(c, o.disable);
    return c;
}

std::string fmt(double v) {
    if (std::isnan(v)) return "";
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}

std::string checkpoint_name(int epoch) {
    std::ostringstream os;
    os << "epoch-" << std::setw(4) << std::setfill('0') << epoch << ".json";
    return os.str();
}

// Latest checkpoints/epoch-NNNN.json by epoch number.
std::optional<std::pair<int, fs::path>> latest_checkpoint(const fs::path& dir) {
    std::optional<std::pair<int, fs::path>> best;
    if (!fs::exists(dir / "checkpoints")) return best;
    for (const auto& e : fs::directory_iterator(dir / "checkpoints")) {
        const std::string name = e.path().filename().string();
        if (name.rfind("epoch-", 0) != 0 || e.path().extension() != ".json") continue;
        const int epoch = std::stoi(name.substr(6));
        if (!best || epoch > best->first) best = {epoch, e.path()};
    }
    return best;
}

int last_logged_epoch(const fs::path& losses) {
    if (!fs::exists(losses)) return 0;
    std::ifstream in(losses);
    std::string line;
    int last = 0;
    std::getline(in, line);
    while (std::getline(in, line))
        if (!line.empty()) last = std::stoi(line.substr(0, line.find(',')));
    return last;
}

void run_train(const TrainCliOptions& o) {
    if (o.schema) {
        std::cout << config_schema().dump(2) << "\n";
        return;
    }
    if (o.data.empty()) throw InvalidArgument("train needs --data");
    if (o.out.empty()) throw InvalidArgument("train needs --out");
    const fs::path dir(o.out);

    RunConfig cfg = build_config(o);
    const GraphSet train_in = read_jsonl(fs::path(o.data));
    if (train_in.empty()) throw ContractError(o.data + " holds no graphs");
    std::optional<GraphSet> val_in;
    if (!o.val.empty()) val_in = read_jsonl(fs::path(o.val));
    cfg.model.node_classes = train_in.graphs[0].node_classes();
    cfg.model.edge_classes = train_in.graphs[0].edge_classes();
    const json cfg_json = to_json(cfg);

    json record;
    if (fs::exists(dir / "run.json")) {
        if (!o.resume) throw IoError(dir.string() + " already holds a run; pass --resume to continue it or choose a new --out");
        record = load_run(dir);
        if (record.value("status", "") == "completed") throw IoError("run " + dir.string() + " is already completed");
        const json stored = read_json_file(dir / "config.json");
        if (stored != cfg_json) {
            std::string diff;
            for (const json& op : json::diff(stored, cfg_json)) diff += " " + op.at("path").get<std::string>();
            throw CompatibilityError("config differs from the one stored in " + dir.string() + " (at" + diff + ")");
        }
        if (read_file(dir / "data" / "train.jsonl") != read_file(o.data))
            throw CompatibilityError(o.data + " differs from the training data stored in " + dir.string());
    } else {
        if (o.resume) throw IoError("nothing to resume: " + dir.string() + " holds no run");
        if (fs::exists(dir) && !fs::is_empty(dir)) throw IoError(dir.string() + " exists and is not empty");
        fs::create_directories(dir / "checkpoints");
        write_new_file(dir / "config.json", cfg_json.dump(2) + "\n");
        write_new_file(dir / "data" / "train.jsonl", read_file(o.data));
        if (val_in) write_new_file(dir / "data" / "val.jsonl", read_file(o.val));
        write_new_file(dir / "losses.csv", "epoch,steps,train_loss,node_ce,edge_ce,val_loss,best\n");
        record = json{{"run_id", dir.filename().string() + "@" + utc_timestamp()},
                      {"created", utc_timestamp()},
                      {"status", "running"},
                      {"config", cfg_json},
                      {"seeds", {{"init", cfg.seed}, {"train", cfg.train.seed}}},
                      {"data", {{"train", "data/train.jsonl"}, {"val", val_in ? json("data/val.jsonl") : json(nullptr)}}},
                      {"artifacts", {{"checkpoints", json::array()}, {"losses", "losses.csv"}}}};
        save_run(dir, record);
    }

    const GraphSet train = read_jsonl(dir / "data" / "train.jsonl");
    std::optional<GraphSet> val;
    if (fs::exists(dir / "data" / "val.jsonl")) val = read_jsonl(dir / "data" / "val.jsonl");
    const Marginals marg = dataset_marginals(train);
    const TransitionFamily fam = TransitionFamily::make(cfg.transition, cfg.diffusion_steps, marg);
    const NodeCountSampler counts(train);
    const json extra_base{{"marginals", to_json(marg)}, {"node_counts", counts.to_json()}};

    Denoiser model(cfg.model, cfg.seed);
    Trainer trainer(model, fam, train, val ? &*val : nullptr, cfg.train);
    if (auto ck = latest_checkpoint(dir); ck && o.resume) {
        const Checkpoint c = load_checkpoint(ck->second);
        if (c.config != cfg_json) throw CompatibilityError(ck->second.string() + " was written with a different config");
        model.params().load_json(c.params);
        trainer.load_state(c.extra.at("trainer"));
        std::cout << "resuming " << dir.string() << " after epoch " << trainer.epoch() << "\n";
    }

    const fs::path losses = dir / "losses.csv";
    const int logged = last_logged_epoch(losses);
    auto save_epoch_checkpoint = [&] {
        const fs::path p = dir / "checkpoints" / checkpoint_name(trainer.epoch());
        if (fs::exists(p)) return;
        json extra = extra_base;
        extra["trainer"] = trainer.state();
        save_checkpoint(p, cfg_json, model.params(), extra);
        add_artifact(dir, "checkpoints", relative_to(p, dir));
    };

    trainer.run([&](const EpochRecord& r) {
        if (r.epoch > logged) {
            std::ofstream out(losses, std::ios::app);
            out << std::setprecision(12) << r.epoch << ',' << r.steps << ',' << r.train_loss << ',' << r.node_ce << ',' << r.edge_ce << ','
                << fmt(r.val_loss) << ',' << (r.best ? 1 : 0) << '\n';
        }
        if (!o.quiet)
            std::cout << "epoch " << r.epoch << "/" << cfg.train.epochs << " steps " << r.steps << " loss " << r.train_loss
                      << (std::isnan(r.val_loss) ? "" : " val " + fmt(r.val_loss)) << (r.best ? " (best)" : "") << std::endl;
        if (r.epoch % cfg.checkpoint_every == 0) save_epoch_checkpoint();
    });
    save_epoch_checkpoint();

    model.params().load_json(trainer.best_params_json());
    json extra = extra_base;
    extra["best_epoch"] = trainer.best_epoch();
    extra["best_val_loss"] = std::isfinite(trainer.best_score()) ? json(trainer.best_score()) : json(nullptr);
    if (fs::exists(dir / "model.json")) throw IoError((dir / "model.json").string() + " already exists");
    save_checkpoint(dir / "model.json", cfg_json, model.params(), extra);
    record = load_run(dir);
    record["status"] = "completed";
    record["artifacts"]["model"] = "model.json";
    record["best_epoch"] = trainer.best_epoch();
    save_run(dir, record);
    std::cout << "trained " << trainer.epoch() << " epochs (" << trainer.steps() << " steps); best epoch " << trainer.best_epoch()
              << "; model written to " << (dir / "model.json").string() << "\n";
}

}  // namespace

void add_train(CLI::App& app) {
    auto o = std::make_shared<TrainCliOptions>();
    CLI::App* sub = app.add_subcommand("train", "Train a denoiser into a run directory");
    sub->add_option("--config", o->config, "Run config (JSON); see --schema");
    sub->add_option("--dataset", o->dataset, "Preset used when no --config is given")
        ->capture_default_str()
        ->check(CLI::IsMember(dataset_kind_names()));
    sub->add_option("--data", o->data, "Training graphs (JSONL)");
    sub->add_option("--val", o->val, "Validation graphs (JSONL) for checkpoint selection");
    sub->add_option("--out", o->out, "Run directory");
    sub->add_option("--disable", o->disable, "Comma-separated components to turn off: rrwp,edge_gate,node_gate,ffn,residual,norm");
    sub->add_option("--epochs", o->epochs, "Override train.epochs");
    sub->add_option("--seed", o->seed, "Override the init and train seeds");
    sub->add_flag("--resume", o->resume, "Continue an interrupted run from its latest checkpoint");
    sub->add_flag("--schema", o->schema, "Print the config schema with defaults and exit");
    sub->add_flag("--quiet", o->quiet, "No per-epoch output");
    sub->callback([o] { run_train(*o); });
}

}  // namespace gengnn::cli
