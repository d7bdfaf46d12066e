#include <iostream>
#include <memory>

#include "common.hpp"
#include "gengnn/errors.hpp"
#include "gengnn/eval.hpp"
#include "gengnn/graph_io.hpp"
#include "gengnn/magnitude.hpp"

namespace gengnn::cli {

namespace {

struct EvalCliOptions {
    std::string run, samples, ref, train, baseline, kind, out;
    bool magdiff = false;
    std::uint64_t embed_seed = 0;
};

void run_eval(const EvalCliOptions& o) {
    if (o.run.empty() && o.out.empty()) throw InvalidArgument("eval needs --run or --out");
    DatasetKind kind = DatasetKind::tree;
    std::string train_path = o.train;
    fs::path out_dir;
    if (!o.run.empty()) {
        const fs::path run_dir(o.run);
        const json run = load_run(run_dir);
        kind = parse_dataset_kind(run.at("config").at("dataset").get<std::string>());
        if (train_path.empty()) train_path = (run_dir / "data" / "train.jsonl").string();
        out_dir = o.out.empty() ? run_dir / "reports" : fs::path(o.out);
    } else {
        out_dir = o.out;
    }
    if (!o.kind.empty()) kind = parse_dataset_kind(o.kind);
    else if (o.run.empty()) throw InvalidArgument("eval without --run needs --kind");
    if (train_path.empty()) train_path = o.ref;

    const GraphSet samples = read_jsonl(fs::path(o.samples));
    const GraphSet ref = read_jsonl(fs::path(o.ref));
    const GraphSet train = read_jsonl(fs::path(train_path));
    if (samples.empty() || ref.empty()) throw ContractError("eval needs nonempty sample and reference sets");

    MetricReport r;
    r.sample_set = o.samples;
    r.reference_set = o.ref;
    const auto s_stats = statistics_of(samples), r_stats = statistics_of(ref);
    for (Statistic s : all_statistics()) r.mmd[to_string(s)] = mmd(s, s_stats, r_stats);
    if (!o.baseline.empty()) {
        const AvgRatio a = avg_ratio(s_stats, r_stats, statistics_of(read_jsonl(fs::path(o.baseline))));
        r.ratios = a.ratios;
        r.avg_ratio = a.mean;
        r.notes.insert(r.notes.end(), a.notes.begin(), a.notes.end());
    }
    r.vun = vun(samples, train, validity_for(kind));
    std::string profile;
    if (o.magdiff) {
        const MagDiffResult m = magdiff(embed_graphs(ref, o.embed_seed), embed_graphs(samples, o.embed_seed));
        r.magdiff = m.value;
        r.notes.insert(r.notes.end(), m.notes.begin(), m.notes.end());
        profile = profile_csv(m);
    }
    r.check();

    const std::string report_json = to_json(r).dump(2) + "\n";
    const std::string report_csv = metric_csv({r});
    // Re-evaluating with identical inputs reuses the latest report.
    const fs::path last = latest_versioned(out_dir, "report", ".json");
    if (!last.empty() && read_file(last) == report_json) {
        std::cout << "unchanged; report is " << last.string() << "\n";
        return;
    }
    const fs::path json_path = next_versioned(out_dir, "report", ".json");
    const fs::path stem = json_path.parent_path() / json_path.stem();
    write_new_file(json_path, report_json);
    write_new_file(stem.string() + ".csv", report_csv);
    if (!profile.empty()) write_new_file(stem.string() + "-magnitude.csv", profile);
    if (!o.run.empty() && o.out.empty()) add_artifact(o.run, "reports", relative_to(json_path, o.run));

    std::cout << "validity " << r.vun.validity << " uniqueness " << r.vun.uniqueness << " novelty " << r.vun.novelty << " vun " << r.vun.vun
              << "\n";
    for (const auto& [k, v] : r.mmd) std::cout << "mmd " << k << " " << v << "\n";
    if (r.avg_ratio) std::cout << "avg_ratio " << *r.avg_ratio << "\n";
    if (r.magdiff) std::cout << "magdiff " << *r.magdiff << "\n";
    for (const auto& n : r.notes) std::cout << "note: " << n << "\n";
    std::cout << "wrote " << json_path.string() << "\n";
}

}  // namespace

void add_eval(CLI::App& app) {
    auto o = std::make_shared<EvalCliOptions>();
    CLI::App* sub = app.add_subcommand("eval", "Score a sample set against a reference set");
    sub->add_option("--samples", o->samples, "Sampled graphs (JSONL)")->required();
    sub->add_option("--ref", o->ref, "Reference graphs (JSONL)")->required();
    sub->add_option("--run", o->run, "Run directory; supplies the dataset kind, training set and report location");
    sub->add_option("--train", o->train, "Training graphs for novelty (default: the run's data, else --ref)");
    sub->add_option("--baseline", o->baseline, "Second reference sample for the MMD ratios (e.g. a held-out split)");
    sub->add_option("--kind", o->kind, "Dataset kind for validity")->check(CLI::IsMember(dataset_kind_names()));
    sub->add_flag("--magdiff", o->magdiff, "Also compute the magnitude difference on random-GNN embeddings");
    sub->add_option("--embed-seed", o->embed_seed, "Seed of the embedding network")->capture_default_str();
    sub->add_option("--out", o->out, "Report directory (default: <run>/reports)");
    sub->callback([o] { run_eval(*o); });
}

}  // namespace gengnn::cli
