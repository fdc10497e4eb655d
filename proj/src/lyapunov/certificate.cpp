#include "qsdlab/lyapunov/certificate.hpp"

#include <cmath>
#include <stdexcept>

namespace qsdlab::lyap {

std::string_view to_string(Verdict v) noexcept {
    switch (v) {
        case Verdict::holds: return "holds";
        case Verdict::violated: return "violated";
        case Verdict::inconclusive: return "inconclusive";
    }
    return "unknown";
}

void CheckCertificate::validate() const {
    if (verdict == Verdict::violated && counterexamples.empty()) {
        throw std::logic_error("certificate '" + check + "': violated verdict without counterexample");
    }
    if (verdict == Verdict::holds && witnesses.empty()) {
        throw std::logic_error("certificate '" + check + "': holds verdict without witnesses");
    }
}

namespace {

// JSON has no inf/nan; encode them as strings so the file stays valid.
nlohmann::json number(double x) {
    if (std::isfinite(x)) return x;
    if (std::isnan(x)) return "nan";
    return x > 0 ? "inf" : "-inf";
}

} // namespace

nlohmann::json CheckCertificate::to_json() const {
    using nlohmann::json;
    json j;
    j["check"] = check;
    j["verdict"] = std::string(to_string(verdict));
    json w = json::object();
    for (const auto& [k, v] : witnesses) w[k] = number(v);
    j["witnesses"] = std::move(w);
    json ce = json::array();
    for (const auto& c : counterexamples) {
        json vals = json::object();
        for (const auto& [k, v] : c.values) vals[k] = number(v);
        json st = json::array();
        for (double s : c.state) st.push_back(number(s));
        ce.push_back({{"description", c.description}, {"state", std::move(st)}, {"values", std::move(vals)}});
    }
    j["counterexamples"] = std::move(ce);
    j["domain"] = domain;
    j["seed"] = seed ? json(*seed) : json(nullptr);
    j["qualifier"] = qualifier;
    j["notes"] = notes;
    return j;
}

} // namespace qsdlab::lyap
