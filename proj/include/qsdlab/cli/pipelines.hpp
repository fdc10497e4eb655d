#pragma once

#include "qsdlab/core/parallel.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace qsdlab::cli {

/// A named text body (CSV unless the name says otherwise).
struct Artifact {
    std::string name;
    std::string body;
};

struct CriterionResult {
    int id = 0;
    std::string title;
    bool pass = false;
    std::string detail;  // one line: the measured quantities behind the verdict
    double seconds = 0.0;
    nlohmann::json metrics = nlohmann::json::object();
    std::vector<Artifact> artifacts;
};

struct PipelineOptions {
    std::uint64_t seed = 20240601;
    ExecPolicy policy = ExecPolicy::parallel;
    std::size_t mc_trajectories = 100'000;
};

CriterionResult criterion_construction(const PipelineOptions& opt);       // 1
CriterionResult criterion_bd_conditions(const PipelineOptions& opt);      // 2
CriterionResult criterion_dynkin(const PipelineOptions& opt);             // 3
CriterionResult criterion_bd_qsd(const PipelineOptions& opt);             // 4
CriterionResult criterion_feller_qsd(const PipelineOptions& opt);         // 5
CriterionResult criterion_comparison(const PipelineOptions& opt);         // 6
CriterionResult criterion_nonlinear(const PipelineOptions& opt);          // 7
CriterionResult criterion_fixed_point(const PipelineOptions& opt);        // 8

using CriterionFn = std::function<CriterionResult(const PipelineOptions&)>;

/// Criteria 1-8 by id.
const std::vector<std::pair<int, CriterionFn>>& all_criteria();

/// Birth-death suite (2, 3, 4, 7, 8) and Feller suite (1, 5, 6).
std::vector<CriterionResult> reproduce_thm_3_2(const PipelineOptions& opt);
std::vector<CriterionResult> reproduce_thm_4_2(const PipelineOptions& opt);

/// One line per criterion: "[PASS] 4 title (12.3 s): detail".
void print_table(std::ostream& os, const std::vector<CriterionResult>& results);

} // namespace qsdlab::cli
