#pragma once

#include "qsdlab/bd/model.hpp"
#include "qsdlab/bd/series.hpp"
#include "qsdlab/core/time_grid.hpp"
#include "qsdlab/feller/model.hpp"
#include "qsdlab/qsd/fleming_viot.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qsdlab::cli {

inline constexpr int kSpecSchema = 1;

/// Invalid spec; what() reads "source:line: message".
class SpecError : public std::runtime_error {
public:
    SpecError(const std::string& source, int line, const std::string& message)
        : std::runtime_error(source + ":" + std::to_string(line) + ": " + message), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

/// JSON pointer -> 1-based line where the value (or its key) starts.
std::map<std::string, int> json_line_index(const std::string& text);

struct FellerSpec {
    std::vector<double> gamma;
    feller::FellerLV lv;
    feller::FellerScheme scheme;
};

/// "auto" selects eta and the pair parameters; otherwise eta is fixed and
/// the remaining parameters are either given or selected for that eta.
struct LyapunovSpec {
    bool automatic = true;
    std::optional<double> eta;
    std::optional<double> alpha, beta, epsilon;
};

struct MonteCarloSpec {
    std::size_t n_traj = 0;
    std::vector<std::vector<double>> starts;
    TimeGrid grid;
};

struct EtaSpec {
    std::vector<std::vector<double>> states;
    std::size_t n_traj = 0;
    TimeGrid grid;
};

struct EstimationSpec {
    std::vector<std::string> methods;
    std::vector<Count> box;
    std::optional<qsd::FVConfig> fleming_viot;
    std::optional<MonteCarloSpec> conditioned_mc;
    std::optional<EtaSpec> eta_profile;
    int bins_per_axis = 10;

    bool wants(const std::string& m) const;
};

struct ExperimentSpec {
    std::string source;
    std::string text;
    int schema = kSpecSchema;
    std::uint64_t seed = 0;
    std::string output;
    std::string model_type;  // "bd" or "feller"
    std::optional<bd::LVParams> bd;
    std::optional<FellerSpec> feller;
    LyapunovSpec lyapunov;
    std::vector<std::string> checks;
    Count k_lo = 2, k_hi = 200;
    EstimationSpec estimation;

    std::size_t dimension() const;
    bool wants_check(const std::string& c) const;
};

/// Parses and validates; every failure is a SpecError anchored at the line of
/// the offending entry.
ExperimentSpec parse_spec(const std::string& text, const std::string& source);
ExperimentSpec load_spec(const std::filesystem::path& path);

/// Line of `ptr` in the spec text, falling back to the nearest present parent.
int line_of(const ExperimentSpec& spec, std::string ptr);

const std::vector<std::string>& known_checks(const std::string& model_type);

} // namespace qsdlab::cli
