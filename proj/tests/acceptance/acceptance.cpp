// Criteria 1-8 once, then all of them again with the same seed for criterion 9.
#include "qsdlab/cli/pipelines.hpp"

#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <map>

using namespace qsdlab;
using namespace qsdlab::cli;

int main(int argc, char** argv) {
    PipelineOptions opt;
    if (argc > 1) opt.seed = std::strtoull(argv[1], nullptr, 10);

    std::vector<CriterionResult> first, second;
    for (const auto& [id, fn] : all_criteria()) {
        first.push_back(fn(opt));
        print_table(std::cout, {first.back()});
        std::cout.flush();
    }
    for (const auto& [id, fn] : all_criteria()) second.push_back(fn(opt));

    CriterionResult repro;
    repro.id = 9;
    repro.title = "byte-identical CSV bodies on re-run";
    std::size_t compared = 0, differing = 0;
    std::string first_diff;
    for (std::size_t i = 0; i < first.size(); ++i) {
        std::map<std::string, std::string> again;
        for (const auto& a : second[i].artifacts) again[a.name] = a.body;
        if (first[i].artifacts.size() != second[i].artifacts.size()) {
            ++differing;
            if (first_diff.empty()) first_diff = "criterion " + std::to_string(first[i].id) + " artifact count";
        }
        for (const auto& a : first[i].artifacts) {
            ++compared;
            const auto it = again.find(a.name);
            if (it == again.end() || it->second != a.body) {
                ++differing;
                if (first_diff.empty()) first_diff = a.name;
            }
        }
        repro.seconds += second[i].seconds;
    }
    repro.pass = compared > 0 && differing == 0;
    repro.detail = std::to_string(compared) + " CSV bodies compared, " + std::to_string(differing) + " differ" +
                   (first_diff.empty() ? "" : " (first: " + first_diff + ")");
    print_table(std::cout, {repro});

    int failed = repro.pass ? 0 : 1;
    for (const auto& r : first) failed += r.pass ? 0 : 1;
    std::cout << (failed == 0 ? "all 9 criteria pass" : std::to_string(failed) + " of 9 criteria fail") << '\n';
    return failed == 0 ? 0 : 1;
}
