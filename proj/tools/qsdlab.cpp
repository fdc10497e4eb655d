#include "qsdlab/cli/runner.hpp"
#include "qsdlab/core/error.hpp"
#include "qsdlab/core/parallel.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

using namespace qsdlab;
using namespace qsdlab::cli;

namespace {

struct Flags {
    std::string spec;
    std::string out;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string format = "csv";
};

void add_common(CLI::App* sub, Flags& f, bool needs_spec) {
    auto* s = sub->add_option("--spec", f.spec, "experiment spec (JSON, schema 1)")->check(CLI::ExistingFile);
    if (needs_spec) s->required();
    sub->add_option("--out", f.out, "output directory (overrides the spec)");
    sub->add_option("--seed", f.seed, "seed (overrides the spec)");
    sub->add_option("--threads", f.threads, "OpenMP threads (fallback: QSDLAB_THREADS)")->check(CLI::PositiveNumber);
    sub->add_option("--format", f.format, "table format")->check(CLI::IsMember({"csv", "json"}));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"qsdlab: quasi-stationary distributions and Lyapunov criteria for absorbed Markov processes"};
    app.require_subcommand(1);
    Flags f;
    auto* run = app.add_subcommand("run", "params selection, certificates and estimation");
    auto* check = app.add_subcommand("check", "params selection and certificates only");
    auto* estimate = app.add_subcommand("estimate", "estimation only");
    auto* oracle = app.add_subcommand("oracle", "eigenvector oracle on the spec's truncation box");
    auto* r32 = app.add_subcommand("reproduce-thm-3-2", "birth-death acceptance pipelines");
    auto* r42 = app.add_subcommand("reproduce-thm-4-2", "Feller acceptance pipelines");
    for (auto* sub : {run, check, estimate, oracle}) add_common(sub, f, true);
    for (auto* sub : {r32, r42}) add_common(sub, f, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInvalid;
    }

    CLI::App* sub = app.get_subcommands().front();
    if (f.threads > 0) {
        set_threads(f.threads);
    } else if (const char* env = std::getenv("QSDLAB_THREADS")) {
        const int n = std::atoi(env);
        if (n <= 0) {
            std::cerr << "QSDLAB_THREADS must be a positive integer (got \"" << env << "\")\n";
            return kExitInvalid;
        }
        set_threads(n);
    }

    RunOptions opt;
    opt.command = sub->get_name();
    opt.spec_path = f.spec;
    opt.format = f.format;
    if (sub->count("--seed")) opt.seed = f.seed;
    if (!f.out.empty()) opt.out = f.out;

    try {
        if (sub == r32) return run_reproduce(32, opt, std::cout, std::cerr);
        if (sub == r42) return run_reproduce(42, opt, std::cout, std::cerr);
        const ExperimentSpec spec = load_spec(f.spec);
        if (sub == oracle) return run_oracle(spec, opt, std::cout, std::cerr);
        return run_experiment(spec, opt, std::cout, std::cerr);
    } catch (const SpecError& e) {
        std::cerr << e.what() << '\n';
        return kExitInvalid;
    } catch (const PreconditionError& e) {
        std::cerr << f.spec << ": invalid input: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailed;
    }
}
