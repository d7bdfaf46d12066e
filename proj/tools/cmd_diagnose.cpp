#include <algorithm>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "common.hpp"
#include "gengnn/diagnostics.hpp"
#include "gengnn/errors.hpp"
#include "gengnn/graph_io.hpp"

namespace gengnn::cli {

namespace {

struct DiagnoseCliOptions {
    std::string samples, vector = "structure", out;
    std::vector<std::string> sweep;
    double slack = 1e-8;
};

std::vector<Snapshot> snapshots_in(const fs::path& dir) {
    const fs::path p = dir / "snapshots.jsonl";
    if (!fs::exists(p))
        throw IoError("no snapshots in " + dir.string() + "; rerun `sample --snapshots K` on the run to record them");
    std::vector<Snapshot> snaps = read_snapshots(p);
    if (snaps.empty()) throw IoError(p.string() + " is empty; rerun `sample --snapshots K` with K > 0");
    return snaps;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void run_theorem(const DiagnoseCliOptions& o) {
    const fs::path dir(o.samples);
    const std::vector<Snapshot> snaps = snapshots_in(dir);
    const GraphSet finals = read_jsonl(dir / "fold-1.jsonl");
    const VectorSource source = parse_vector_source(o.vector);
    const auto chains = check_theorem(snaps, finals.graphs, source, o.slack);

    const bool applicable = std::all_of(chains.begin(), chains.end(), [](const ChainDiagnostics& c) { return c.applicable; });
    long steps = 0, ok = 0;
    double min_margin = std::numeric_limits<double>::infinity();
    int nonvacuous = 0;
    json per_chain = json::array();
    for (const ChainDiagnostics& c : chains) {
        nonvacuous += c.nonvacuous;
        json mu = json::array();
        for (const StepDiagnostics& s : c.steps) {
            ++steps;
            ok += s.bound_ok;
            min_margin = std::min(min_margin, s.margin);
            mu.push_back(s.mu_v);
        }
        per_chain.push_back({{"chain", c.chain}, {"n", c.n}, {"gamma", c.gamma}, {"C", c.C}, {"nonvacuous", c.nonvacuous}, {"mu_v", mu}});
    }

    const fs::path out = o.out.empty() ? next_versioned(dir, "diagnose") : fs::path(o.out);
    if (fs::exists(out)) throw IoError(out.string() + " already exists");
    json summary{{"vector_source", to_string(source)}, {"slack", o.slack}, {"chains", chains.size()}, {"steps", steps}};
    if (applicable) {
        summary["applicable"] = true;
        summary["steps_ok"] = ok;
        summary["fraction_ok"] = steps ? static_cast<double>(ok) / steps : 0.0;
        summary["min_margin"] = min_margin;
        summary["nonvacuous_chains"] = nonvacuous;
    } else {
        summary["applicable"] = false;
        summary["reason"] = "not applicable: the residual connection is disabled, so the bound has no anchor";
    }
    summary["per_chain"] = per_chain;
    write_new_file(out / "theorem.csv", diagnostics_csv(chains));
    write_new_file(out / "theorem.json", summary.dump(2) + "\n");

    if (applicable) {
        std::cout << "bound mu_v >= gamma/2 - C holds at " << ok << "/" << steps << " steps over " << chains.size() << " chain(s); min margin "
                  << min_margin << "; nonvacuous chains " << nonvacuous << "\n";
    } else {
        std::cout << "bound report not applicable (residual off); mu_v trajectory of " << chains.size() << " chain(s) written\n";
        for (const ChainDiagnostics& c : chains) {
            std::cout << "chain " << c.chain << " mu_v:";
            for (std::size_t k = 0; k < c.steps.size(); k += std::max<std::size_t>(1, c.steps.size() / 10)) std::cout << " " << c.steps[k].mu_v;
            std::cout << " ... " << c.steps.back().mu_v << "\n";
        }
    }
    std::cout << "wrote " << out.string() << "\n";
}

// Sample directories are grouped into series by their disabled components.
void run_sweep(const DiagnoseCliOptions& o) {
    if (o.out.empty()) throw InvalidArgument("diagnose --sweep needs --out");
    std::map<std::string, std::vector<DepthPoint>> series;
    for (const std::string& d : o.sweep) {
        const json m = read_json_file(fs::path(d) / "manifest.json");
        const std::vector<Snapshot> snaps = snapshots_in(d);
        DepthPoint p;
        p.depth = m.at("layers").get<int>();
        for (const json& v : m.at("fold_validity")) p.validity += v.get<double>() / m.at("fold_validity").size();
        long k = 0;
        for (const Snapshot& s : snaps) {
            if (s.layer_erank.empty()) continue;
            p.mean_erank += s.layer_erank.back();
            p.mean_numrank += s.layer_numrank.back();
            ++k;
        }
        if (k == 0) throw IoError(d + " snapshots carry no per-layer ranks");
        p.mean_erank /= k;
        p.mean_numrank /= k;
        std::string name;
        for (const json& c : m.at("disabled")) name += (name.empty() ? "no-" : "+no-") + c.get<std::string>();
        series[name.empty() ? "full" : name].push_back(p);
    }
    std::ostringstream csv;
    csv << std::setprecision(12) << "series,depth,validity,mean_erank,mean_numrank\n";
    json report = json::object();
    for (auto& [name, points] : series) {
        std::sort(points.begin(), points.end(), [](const DepthPoint& a, const DepthPoint& b) { return a.depth < b.depth; });
        for (const DepthPoint& p : points) csv << name << ',' << p.depth << ',' << p.validity << ',' << p.mean_erank << ',' << p.mean_numrank << '\n';
        const CorrelationReport r = correlation_study(points);
        report[name] = {{"r_erank", opt(r.r_erank)}, {"r_numrank", opt(r.r_numrank)}, {"validity_ratio", opt(r.validity_ratio)}};
        std::cout << name << ": validity ratio " << (r.validity_ratio ? std::to_string(*r.validity_ratio) : "undefined")
                  << ", r(validity, erank) " << (r.r_erank ? std::to_string(*r.r_erank) : "undefined") << ", r(validity, numrank) "
                  << (r.r_numrank ? std::to_string(*r.r_numrank) : "undefined") << "\n";
    }
    write_new_file(fs::path(o.out) / "depth_sweep.csv", csv.str());
    write_new_file(fs::path(o.out) / "depth_sweep.json", report.dump(2) + "\n");
    std::cout << "wrote " << o.out << "\n";
}

void run_diagnose(const DiagnoseCliOptions& o) {
    if (o.samples.empty() == o.sweep.empty()) throw InvalidArgument("diagnose needs exactly one of --samples or --sweep");
    if (!o.samples.empty())
        run_theorem(o);
    else
        run_sweep(o);
}

}  // namespace

void add_diagnose(CLI::App& app) {
    auto o = std::make_shared<DiagnoseCliOptions>();
    CLI::App* sub = app.add_subcommand("diagnose", "Oversmoothing bound and depth-sweep reports from sampling snapshots");
    sub->add_option("--samples", o->samples, "Sample directory with snapshots.jsonl: per-step bound report");
    sub->add_option("--sweep", o->sweep, "Sample directories of runs at different depths (repeat; at least 3 per series)");
    sub->add_option("--vector", o->vector, "Collapse direction")->capture_default_str()->check(CLI::IsMember({"structure", "features"}));
    sub->add_option("--slack", o->slack, "Tolerance of the bound check")->capture_default_str();
    sub->add_option("--out", o->out, "Output directory (default: <samples>/diagnose-NNN)");
    sub->callback([o] { run_diagnose(*o); });
}

}  // namespace gengnn::cli
