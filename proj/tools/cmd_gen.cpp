#include <algorithm>
#include <iostream>
#include <memory>
#include <optional>

#include "common.hpp"
#include "gengnn/generators.hpp"
#include "gengnn/graph_io.hpp"

namespace gengnn::cli {

namespace {

struct GenOptions {
    std::string kind;
    int count = 40;
    int nodes = 64;
    std::uint64_t seed = 0;
    std::string out;
    std::optional<int> min_blocks, max_blocks, min_block_size, max_block_size, min_total, max_total;
    std::optional<double> p_in, p_out;
};

void run_gen(const GenOptions& o) {
    DatasetSpec spec;
    spec.kind = parse_dataset_kind(o.kind);
    spec.count = o.count;
    spec.nodes = o.nodes;
    if (o.min_blocks) spec.sbm.min_blocks = *o.min_blocks;
    if (o.max_blocks) spec.sbm.max_blocks = *o.max_blocks;
    if (o.min_total) spec.sbm.min_total = *o.min_total;
    if (o.max_total) spec.sbm.max_total = *o.max_total;
    if (o.min_block_size) spec.sbm.min_block_size = spec.comm.min_block_size = *o.min_block_size;
    if (o.max_block_size) spec.sbm.max_block_size = spec.comm.max_block_size = *o.max_block_size;
    if (o.p_in) spec.sbm.p_in = spec.comm.p_in = *o.p_in;
    if (o.p_out) spec.sbm.p_out = spec.comm.p_out = *o.p_out;

    const GraphSet set = generate_dataset(spec, o.seed);
    write_jsonl(set, fs::path(o.out));
    if (set.empty()) {
        std::cerr << "warning: count is 0; wrote an empty file to " << o.out << "\n";
        return;
    }
    int lo = set.graphs[0].n(), hi = lo;
    long elo = set.graphs[0].edge_count(), ehi = elo;
    for (const Graph& g : set.graphs) {
        lo = std::min(lo, g.n()), hi = std::max(hi, g.n());
        elo = std::min<long>(elo, g.edge_count()), ehi = std::max<long>(ehi, g.edge_count());
    }
    std::cout << "wrote " << set.size() << " " << o.kind << " graphs to " << o.out << " (nodes " << lo << ".." << hi << ", edges " << elo
              << ".." << ehi << ", seed " << o.seed << ")\n";
}

}  // namespace

void add_gen(CLI::App& app) {
    auto o = std::make_shared<GenOptions>();
    CLI::App* sub = app.add_subcommand("gen", "Generate a synthetic graph dataset as JSONL");
    sub->add_option("--kind", o->kind, "Dataset kind")->required()->check(CLI::IsMember(dataset_kind_names()));
    sub->add_option("--count", o->count, "Number of graphs")->capture_default_str()->check(CLI::NonNegativeNumber);
    sub->add_option("--nodes", o->nodes, "Nodes per graph (tree, planar)")->capture_default_str();
    sub->add_option("--seed", o->seed, "Seed; graph k uses a stream derived from it")->capture_default_str();
    sub->add_option("--out", o->out, "Output JSONL path")->required();
    sub->add_option("--min-blocks", o->min_blocks, "sbm: fewest blocks");
    sub->add_option("--max-blocks", o->max_blocks, "sbm: most blocks");
    sub->add_option("--min-block-size", o->min_block_size, "sbm, comm20: smallest block");
    sub->add_option("--max-block-size", o->max_block_size, "sbm, comm20: largest block");
    sub->add_option("--min-total", o->min_total, "sbm: fewest nodes");
    sub->add_option("--max-total", o->max_total, "sbm: most nodes");
    sub->add_option("--p-in", o->p_in, "sbm, comm20: within-block edge probability");
    sub->add_option("--p-out", o->p_out, "sbm, comm20: cross-block edge probability");
    sub->callback([o] { run_gen(*o); });
}

}  // namespace gengnn::cli
