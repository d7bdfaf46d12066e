#include <cmath>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include "common.hpp"
#include "gengnn/errors.hpp"
#include "gengnn/eval.hpp"
#include "gengnn/graph_io.hpp"
#include "gengnn/random.hpp"

namespace gengnn::cli {

namespace {

struct SampleCliOptions {
    std::string run, checkpoint, out, mode = "posterior";
    int count = 40;
    int folds = 1;
    std::uint64_t seed = 0;
    int snapshots = 0;
    int steps = 0;
    int batch = 8;
};

void run_sample(const SampleCliOptions& o) {
    const fs::path run_dir(o.run);
    const LoadedModel lm = load_model(run_dir, o.checkpoint.empty() ? fs::path() : fs::path(o.checkpoint));
    const GraphSet train = read_jsonl(run_dir / "data" / "train.jsonl");
    const auto train_stats = statistics_of(train);
    const ValidityFn valid = validity_for(lm.config.dataset);

    const fs::path out = o.out.empty() ? next_versioned(run_dir / "samples", "seed-" + std::to_string(o.seed)) : fs::path(o.out);
    if (fs::exists(out)) throw IoError(out.string() + " already exists; sample outputs are never overwritten");
    fs::create_directories(out);

    std::vector<MetricReport> reports;
    json fold_validity = json::array();
    for (int f = 1; f <= o.folds; ++f) {
        const std::uint64_t fold_seed = derive_seed(o.seed, static_cast<std::uint64_t>(f));
        SampleOptions so;
        so.mode = parse_sampler_mode(o.mode);
        so.steps = o.steps;
        so.batch = o.batch;
        so.seed = fold_seed;
        so.snapshot_chains = f == 1 ? o.snapshots : 0;
        const auto counts = lm.node_counts.draw_many(static_cast<std::size_t>(o.count), fold_seed);
        SampleResult res = sample_graphs(lm.model, lm.family, counts, so);

        GraphSet set;
        set.graphs = std::move(res.graphs);
        set.seed = fold_seed;
        const std::string name = "fold-" + std::to_string(f) + ".jsonl";
        {
            std::ostringstream os;
            write_jsonl(set, os);
            write_new_file(out / name, os.str());
        }
        if (!res.snapshots.empty()) write_snapshots(out / "snapshots.jsonl", res.snapshots);

        MetricReport r;
        r.sample_set = name;
        r.reference_set = "data/train.jsonl";
        r.seeds = {fold_seed};
        const auto stats = statistics_of(set);
        for (Statistic s : all_statistics()) r.mmd[to_string(s)] = mmd(s, stats, train_stats);
        r.vun = vun(set, train, valid);
        r.check();
        fold_validity.push_back(r.vun.validity);
        std::cout << "fold " << f << ": validity " << r.vun.validity << " uniqueness " << r.vun.uniqueness << " novelty " << r.vun.novelty
                  << " vun " << r.vun.vun << "\n";
        reports.push_back(std::move(r));
    }
    write_new_file(out / "metrics.csv", metric_csv(reports));
    write_new_file(out / "summary.csv", fold_summary_csv(reports));

    double mean = 0.0, var = 0.0;
    for (const auto& r : reports) mean += r.vun.validity / reports.size();
    for (const auto& r : reports) var += (r.vun.validity - mean) * (r.vun.validity - mean);
    const double sd = reports.size() > 1 ? std::sqrt(var / (reports.size() - 1)) : 0.0;
    std::cout << std::fixed << std::setprecision(2) << "validity " << mean << " ± " << sd << " over " << o.folds << " fold(s); wrote "
              << out.string() << "\n";

    const json manifest{{"run", fs::absolute(run_dir).lexically_normal().string()},
                        {"checkpoint", relative_to(lm.checkpoint, run_dir)},
                        {"dataset", to_string(lm.config.dataset)},
                        {"layers", lm.config.model.layers},
                        {"residual", lm.config.model.flags.residual},
                        {"disabled", lm.config.disabled},
                        {"seed", o.seed},
                        {"folds", o.folds},
                        {"count", o.count},
                        {"mode", o.mode},
                        {"steps", o.steps},
                        {"snapshot_chains", o.snapshots},
                        {"fold_validity", fold_validity}};
    write_new_file(out / "manifest.json", manifest.dump(2) + "\n");
    if (fs::absolute(out).lexically_normal().string().rfind(fs::absolute(run_dir).lexically_normal().string(), 0) == 0)
        add_artifact(run_dir, "samples", relative_to(out, run_dir));
}

}  // namespace

void add_sample(CLI::App& app) {
    auto o = std::make_shared<SampleCliOptions>();
    CLI::App* sub = app.add_subcommand("sample", "Draw graphs from a trained run");
    sub->add_option("--run", o->run, "Run directory")->required();
    sub->add_option("--checkpoint", o->checkpoint, "Checkpoint to use instead of the run's model.json");
    sub->add_option("--count", o->count, "Graphs per fold")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--folds", o->folds, "Independent repetitions with derived seeds")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--seed", o->seed, "Base seed")->capture_default_str();
    sub->add_option("--snapshots", o->snapshots, "Record per-step snapshots for the first K chains of fold 1")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--mode", o->mode, "Reverse process")->capture_default_str()->check(CLI::IsMember({"posterior", "rate"}));
    sub->add_option("--steps", o->steps, "Reverse steps (rate mode; 0 = schedule length)")->capture_default_str();
    sub->add_option("--batch", o->batch, "Chains per model call")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--out", o->out, "Output directory (default: <run>/samples/seed-<seed>-NNN)");
    sub->callback([o] { run_sample(*o); });
}

}  // namespace gengnn::cli
