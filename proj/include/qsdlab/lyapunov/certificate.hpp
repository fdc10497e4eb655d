#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qsdlab::lyap {

enum class Verdict { holds, violated, inconclusive };

std::string_view to_string(Verdict v) noexcept;

struct Counterexample {
    std::string description;
    std::vector<double> state;
    std::map<std::string, double> values;
};

/// Outcome of a hypothesis check: witness constants when it holds, offending
/// states when it does not. `qualifier` says how much the verdict is worth:
/// "exact" (exhaustive enumeration), "grid" (finite grid of a continuum) or
/// "empirical" (Monte Carlo evidence).
struct CheckCertificate {
    std::string check;
    Verdict verdict = Verdict::inconclusive;
    std::map<std::string, double> witnesses;
    std::vector<Counterexample> counterexamples;
    std::string domain;
    std::optional<std::uint64_t> seed;
    std::string qualifier = "exact";
    std::vector<std::string> notes;

    bool holds() const noexcept { return verdict == Verdict::holds; }

    /// Throws std::logic_error if the verdict/evidence invariants are broken.
    void validate() const;

    nlohmann::json to_json() const;
};

} // namespace qsdlab::lyap
