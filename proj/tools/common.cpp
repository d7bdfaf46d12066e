#include "common.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "gengnn/errors.hpp"
#include "gengnn/params.hpp"

namespace gengnn::cli {

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

json read_json_file(const fs::path& p) {
    const std::string text = read_file(p);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(p.string() + ": " + e.what(), 0);
    }
}

void write_new_file(const fs::path& p, const std::string& content) {
    if (fs::exists(p)) throw IoError(p.string() + " already exists; run directories are append-only");
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out << content;
    if (!out) throw IoError("write failed for " + p.string());
}

void replace_file(const fs::path& p, const std::string& content) {
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << content;
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    fs::rename(tmp, p);
}

namespace {

std::string versioned_name(const std::string& prefix, int k, const std::string& suffix) {
    std::ostringstream os;
    os << prefix << '-' << std::setw(3) << std::setfill('0') << k << suffix;
    return os.str();
}

}  // namespace

fs::path next_versioned(const fs::path& base, const std::string& prefix, const std::string& suffix) {
    for (int k = 1;; ++k) {
        const fs::path p = base / versioned_name(prefix, k, suffix);
        if (!fs::exists(p)) return p;
    }
}

fs::path latest_versioned(const fs::path& base, const std::string& prefix, const std::string& suffix) {
    fs::path last;
    for (int k = 1;; ++k) {
        const fs::path p = base / versioned_name(prefix, k, suffix);
        if (!fs::exists(p)) return last;
        last = p;
    }
}

json load_run(const fs::path& dir) {
    const fs::path p = dir / "run.json";
    if (!fs::exists(p)) throw IoError(dir.string() + " is not a run directory (no run.json); create one with `train`");
    return read_json_file(p);
}

void save_run(const fs::path& dir, json record) {
    record["updated"] = utc_timestamp();
    replace_file(dir / "run.json", record.dump(2) + "\n");
}

void add_artifact(const fs::path& dir, const std::string& kind, const std::string& relpath) {
    json rec = load_run(dir);
    json& list = rec["artifacts"][kind];
    if (!list.is_array()) list = json::array();
    list.push_back(relpath);
    save_run(dir, rec);
}

json to_json(const Marginals& m) { return json{{"node", m.node}, {"edge", m.edge}}; }

Marginals marginals_from_json(const json& j) {
    Marginals m;
    m.node = j.at("node").get<std::vector<double>>();
    m.edge = j.at("edge").get<std::vector<double>>();
    return m;
}

LoadedModel load_model(const fs::path& run_dir, const fs::path& checkpoint) {
    const json run = load_run(run_dir);
    const fs::path ck_path = checkpoint.empty() ? run_dir / "model.json" : checkpoint;
    if (!fs::exists(ck_path))
        throw IoError("no checkpoint at " + ck_path.string() + "; finish training with `train --resume` or pass --checkpoint");
    const Checkpoint ck = load_checkpoint(ck_path);
    const json run_cfg = read_json_file(run_dir / "config.json");
    if (ck.config != run_cfg) {
        std::string diff;
        for (const json& op : json::diff(run_cfg, ck.config)) diff += " " + op.at("path").get<std::string>();
        throw CompatibilityError("checkpoint " + ck_path.string() + " was trained with a different config than " + run_dir.string() +
                                 " (differs at" + diff + ")");
    }
    RunConfig cfg = run_config_from_json(run_cfg);
    Denoiser model(cfg.model, cfg.seed);
    model.params().load_json(ck.params);
    const json& extra = ck.extra;
    if (!extra.contains("marginals") || !extra.contains("node_counts"))
        throw CompatibilityError("checkpoint " + ck_path.string() + " lacks marginals or node counts");
    TransitionFamily fam = TransitionFamily::make(cfg.transition, cfg.diffusion_steps, marginals_from_json(extra.at("marginals")));
    return LoadedModel{std::move(cfg), std::move(model), std::move(fam), NodeCountSampler::from_json(extra.at("node_counts")), ck_path};
}

std::string relative_to(const fs::path& p, const fs::path& base) { return fs::relative(p, base).generic_string(); }

}  // namespace gengnn::cli
