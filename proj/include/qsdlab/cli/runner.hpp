#pragma once

#include "qsdlab/cli/spec.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

namespace qsdlab::cli {

enum ExitCode : int { kExitOk = 0, kExitFailed = 1, kExitInvalid = 2 };

struct RunOptions {
    std::string command = "run";  // run | check | estimate
    std::string spec_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::string format = "csv";  // tables as csv or json
};

/// Params selection, certificates and estimation in that order; writes the
/// artifacts and manifest.json into the output directory. 0 when every
/// requested certificate holds and every estimation completed, 1 otherwise.
int run_experiment(const ExperimentSpec& spec, const RunOptions& opt, std::ostream& out, std::ostream& err);

/// Eigen oracle on the spec's box; prints lambda0 and the QSD atoms.
int run_oracle(const ExperimentSpec& spec, const RunOptions& opt, std::ostream& out, std::ostream& err);

/// The birth-death (thm = 32) or Feller (thm = 42) acceptance pipelines with a
/// pass/fail table; CSV bodies go to --out when given.
int run_reproduce(int thm, const RunOptions& opt, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a as 16 hex digits (content fingerprints in the manifest).
std::string fnv1a_hex(const std::string& data);

/// Header row plus comma-separated rows to {"columns": [...], "rows": [[...]]}.
nlohmann::json csv_to_json(const std::string& csv);

} // namespace qsdlab::cli
