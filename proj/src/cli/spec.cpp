#include "qsdlab/cli/spec.hpp"

#include "qsdlab/core/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace qsdlab::cli {

using nlohmann::json;

namespace {

std::string escape_token(const std::string& k) {
    std::string out;
    for (char c : k) {
        if (c == '~') out += "~0";
        else if (c == '/') out += "~1";
        else out += c;
    }
    return out;
}

// Walks text that nlohmann already accepted, so it can assume well-formed JSON.
struct LineScanner {
    const std::string& s;
    std::map<std::string, int>& out;
    std::size_t i = 0;
    int line = 1;

    void ws() {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) {
            if (s[i] == '\n') ++line;
            ++i;
        }
    }
    std::string str() {
        ++i;
        std::string r;
        while (i < s.size() && s[i] != '"') {
            if (s[i] == '\\') {
                r += s[i + 1];
                i += 2;
                continue;
            }
            r += s[i++];
        }
        ++i;
        return r;
    }
    void value(const std::string& ptr, int at) {
        ws();
        out[ptr] = at > 0 ? at : line;
        if (s[i] == '{') {
            ++i;
            ws();
            if (s[i] == '}') {
                ++i;
                return;
            }
            while (true) {
                ws();
                const int kl = line;
                const std::string k = str();
                ws();
                ++i;  // ':'
                value(ptr + "/" + escape_token(k), kl);
                ws();
                if (s[i++] == ',') continue;
                return;
            }
        }
        if (s[i] == '[') {
            ++i;
            ws();
            if (s[i] == ']') {
                ++i;
                return;
            }
            for (std::size_t k = 0;; ++k) {
                ws();
                value(ptr + "/" + std::to_string(k), 0);
                ws();
                if (s[i++] == ',') continue;
                return;
            }
        }
        if (s[i] == '"') {
            str();
            return;
        }
        while (i < s.size() && s[i] != ',' && s[i] != '}' && s[i] != ']' &&
               !std::isspace(static_cast<unsigned char>(s[i])))
            ++i;
    }
};

class Reader {
public:
    Reader(std::string source, std::map<std::string, int> index) : source_(std::move(source)), index_(std::move(index)) {}

    [[noreturn]] void fail(std::string ptr, const std::string& msg) const {
        while (true) {
            const auto it = index_.find(ptr);
            if (it != index_.end()) throw SpecError(source_, it->second, msg);
            const auto cut = ptr.rfind('/');
            if (cut == std::string::npos || ptr.empty()) break;
            ptr.resize(cut);
        }
        throw SpecError(source_, 1, msg);
    }

    void allow(const json& j, const std::string& ptr, std::initializer_list<const char*> keys) const {
        if (!j.is_object()) fail(ptr, (ptr.empty() ? std::string("spec") : ptr) + " must be an object");
        for (const auto& [k, v] : j.items()) {
            bool ok = false;
            for (const char* key : keys) ok = ok || k == key;
            if (!ok) fail(ptr + "/" + escape_token(k), "unknown key \"" + k + "\" in " + (ptr.empty() ? "/" : ptr));
        }
    }

    const json& need(const json& j, const std::string& ptr, const char* key) const {
        if (!j.contains(key)) fail(ptr, std::string("missing required key \"") + key + "\" in " + (ptr.empty() ? "/" : ptr));
        return j.at(key);
    }

    double number(const json& v, const std::string& ptr) const {
        if (!v.is_number()) fail(ptr, ptr + " must be a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) fail(ptr, ptr + " must be finite");
        return x;
    }
    double positive(const json& v, const std::string& ptr) const {
        const double x = number(v, ptr);
        if (!(x > 0.0)) fail(ptr, ptr + " must be positive");
        return x;
    }
    std::uint64_t count(const json& v, const std::string& ptr, std::uint64_t min) const {
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
            fail(ptr, ptr + " must be a nonnegative integer");
        const auto x = v.get<std::uint64_t>();
        if (x < min) fail(ptr, ptr + " must be >= " + std::to_string(min) + " (got " + std::to_string(x) + ")");
        return x;
    }
    std::vector<double> vec(const json& v, const std::string& ptr, std::size_t d) const {
        if (!v.is_array()) fail(ptr, ptr + " must be an array");
        if (d > 0 && v.size() != d)
            fail(ptr, "dimension mismatch: " + ptr + " has " + std::to_string(v.size()) + " entries, model has " +
                          std::to_string(d));
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], ptr + "/" + std::to_string(i)));
        return out;
    }
    std::vector<std::vector<double>> mat(const json& v, const std::string& ptr, std::size_t d) const {
        if (!v.is_array()) fail(ptr, ptr + " must be an array of rows");
        if (v.size() != d)
            fail(ptr, "dimension mismatch: " + ptr + " has " + std::to_string(v.size()) + " rows, model has " +
                          std::to_string(d));
        std::vector<std::vector<double>> out;
        for (std::size_t i = 0; i < d; ++i) out.push_back(vec(v[i], ptr + "/" + std::to_string(i), d));
        return out;
    }
    TimeGrid grid(const json& v, const std::string& ptr) const {
        allow(v, ptr, {"t0", "dt", "n_steps"});
        TimeGrid g;
        g.t0 = v.contains("t0") ? number(v["t0"], ptr + "/t0") : 0.0;
        if (g.t0 < 0.0) fail(ptr + "/t0", ptr + "/t0 must be >= 0");
        g.dt = positive(need(v, ptr, "dt"), ptr + "/dt");
        g.n_steps = count(need(v, ptr, "n_steps"), ptr + "/n_steps", 1);
        return g;
    }
    std::vector<std::vector<double>> states(const json& v, const std::string& ptr, std::size_t d,
                                            bool integer) const {
        if (!v.is_array() || v.empty()) fail(ptr, ptr + " must be a nonempty array of states");
        std::vector<std::vector<double>> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const std::string p = ptr + "/" + std::to_string(i);
            auto x = vec(v[i], p, d);
            for (std::size_t k = 0; k < x.size(); ++k) {
                const std::string pk = p + "/" + std::to_string(k);
                if (integer && (x[k] != std::floor(x[k]) || x[k] < 0.0))
                    fail(pk, pk + " must be a nonnegative integer");
                if (!integer && x[k] < 0.0) fail(pk, pk + " must be >= 0");
            }
            out.push_back(std::move(x));
        }
        return out;
    }

private:
    std::string source_;
    std::map<std::string, int> index_;
};

const std::vector<std::string> kMethods{"eigen_oracle", "fleming_viot", "conditioned_mc", "eta_profile"};

} // namespace

std::map<std::string, int> json_line_index(const std::string& text) {
    std::map<std::string, int> out;
    LineScanner sc{text, out};
    sc.value("", 0);
    return out;
}

const std::vector<std::string>& known_checks(const std::string& model_type) {
    static const std::vector<std::string> bd{"assumption", "condition_a", "condition_b", "admissible", "nonlinear"};
    static const std::vector<std::string> fe{"assumption", "condition_a", "condition_b", "admissible", "comparison"};
    return model_type == "feller" ? fe : bd;
}

bool EstimationSpec::wants(const std::string& m) const {
    return std::find(methods.begin(), methods.end(), m) != methods.end();
}

std::size_t ExperimentSpec::dimension() const { return bd ? bd->dimension() : feller->gamma.size(); }

bool ExperimentSpec::wants_check(const std::string& c) const {
    return std::find(checks.begin(), checks.end(), c) != checks.end();
}

ExperimentSpec parse_spec(const std::string& text, const std::string& source) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
        const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n'));
        throw SpecError(source, line, std::string("invalid JSON: ") + e.what());
    }
    const Reader r(source, json_line_index(text));
    ExperimentSpec s;
    s.source = source;
    s.text = text;
    r.allow(root, "", {"schema", "seed", "output", "model", "lyapunov", "checks", "domain", "estimation", "description"});
    const json& schema = r.need(root, "", "schema");
    if (!schema.is_number_integer() || schema.get<int>() != kSpecSchema)
        r.fail("/schema", "unsupported schema (expected " + std::to_string(kSpecSchema) + ")");
    s.seed = r.count(r.need(root, "", "seed"), "/seed", 0);
    if (root.contains("output")) {
        if (!root["output"].is_string() || root["output"].get<std::string>().empty())
            r.fail("/output", "/output must be a nonempty string");
        s.output = root["output"].get<std::string>();
    } else {
        s.output = "out";
    }

    const json& model = r.need(root, "", "model");
    if (!model.is_object()) r.fail("/model", "/model must be an object");
    const json& type = r.need(model, "/model", "type");
    if (!type.is_string() || (type != "bd" && type != "feller")) r.fail("/model/type", "/model/type must be \"bd\" or \"feller\"");
    s.model_type = type.get<std::string>();
    if (s.model_type == "bd") {
        r.allow(model, "/model", {"type", "lambda", "mu", "gamma", "c"});
        bd::LVParams p;
        p.lambda = r.vec(r.need(model, "/model", "lambda"), "/model/lambda", 0);
        const std::size_t d = p.lambda.size();
        if (d == 0) r.fail("/model/lambda", "/model/lambda must be nonempty");
        p.mu = r.vec(r.need(model, "/model", "mu"), "/model/mu", d);
        p.gamma = model.contains("gamma") ? r.mat(model["gamma"], "/model/gamma", d)
                                          : std::vector<std::vector<double>>(d, std::vector<double>(d, 0.0));
        p.c = r.mat(r.need(model, "/model", "c"), "/model/c", d);
        try {
            p.validate();
        } catch (const PreconditionError& e) {
            r.fail("/model", e.what());
        }
        s.bd = std::move(p);
    } else {
        r.allow(model, "/model", {"type", "gamma", "r", "c", "threshold", "dt"});
        FellerSpec f;
        f.gamma = r.vec(r.need(model, "/model", "gamma"), "/model/gamma", 0);
        const std::size_t d = f.gamma.size();
        if (d == 0) r.fail("/model/gamma", "/model/gamma must be nonempty");
        for (std::size_t i = 0; i < d; ++i) r.positive(model["gamma"][i], "/model/gamma/" + std::to_string(i));
        f.lv.r = r.vec(r.need(model, "/model", "r"), "/model/r", d);
        f.lv.c = r.mat(r.need(model, "/model", "c"), "/model/c", d);
        if (model.contains("threshold")) f.lv.threshold = r.number(model["threshold"], "/model/threshold");
        if (model.contains("dt")) f.scheme.dt = r.positive(model["dt"], "/model/dt");
        try {
            f.lv.validate(d);
            f.scheme.validate();
        } catch (const PreconditionError& e) {
            r.fail("/model", e.what());
        }
        s.feller = std::move(f);
    }
    const std::size_t d = s.dimension();

    if (root.contains("lyapunov")) {
        const json& l = root["lyapunov"];
        if (l.is_string()) {
            if (l != "auto") r.fail("/lyapunov", "/lyapunov must be \"auto\" or an object");
        } else {
            if (s.model_type == "bd")
                r.allow(l, "/lyapunov", {"eta", "alpha", "beta", "epsilon"});
            else
                r.allow(l, "/lyapunov", {"eta"});
            s.lyapunov.automatic = false;
            s.lyapunov.eta = r.positive(r.need(l, "/lyapunov", "eta"), "/lyapunov/eta");
            const bool a = l.contains("alpha"), b = l.contains("beta"), e = l.contains("epsilon");
            if ((a || b || e) && !(a && b && e))
                r.fail("/lyapunov", "give all of alpha, beta, epsilon or none of them");
            if (a) {
                s.lyapunov.alpha = r.positive(l["alpha"], "/lyapunov/alpha");
                s.lyapunov.beta = r.positive(l["beta"], "/lyapunov/beta");
                s.lyapunov.epsilon = r.positive(l["epsilon"], "/lyapunov/epsilon");
            }
        }
    }

    if (root.contains("checks")) {
        const json& c = root["checks"];
        if (!c.is_array()) r.fail("/checks", "/checks must be an array");
        const auto& known = known_checks(s.model_type);
        for (std::size_t i = 0; i < c.size(); ++i) {
            const std::string p = "/checks/" + std::to_string(i);
            if (!c[i].is_string() || std::find(known.begin(), known.end(), c[i].get<std::string>()) == known.end()) {
                std::string list;
                for (const auto& k : known) list += (list.empty() ? "" : ", ") + k;
                r.fail(p, "unknown check at " + p + " for a " + s.model_type + " model (known: " + list + ")");
            }
            s.checks.push_back(c[i].get<std::string>());
        }
    }

    if (root.contains("domain")) {
        if (s.model_type != "bd") r.fail("/domain", "/domain applies to birth-death models only");
        const json& dom = root["domain"];
        r.allow(dom, "/domain", {"k_lo", "k_hi"});
        if (dom.contains("k_lo")) s.k_lo = r.count(dom["k_lo"], "/domain/k_lo", d);
        if (dom.contains("k_hi")) s.k_hi = r.count(dom["k_hi"], "/domain/k_hi", 1);
        if (s.k_hi < s.k_lo + 8) r.fail("/domain", "/domain must span at least 8 slices");
    }

    if (root.contains("estimation")) {
        const json& e = root["estimation"];
        const std::string ep = "/estimation";
        r.allow(e, ep, {"methods", "box", "fleming_viot", "conditioned_mc", "eta_profile", "bins_per_axis"});
        EstimationSpec& est = s.estimation;
        const json& m = r.need(e, ep, "methods");
        if (!m.is_array() || m.empty()) r.fail(ep + "/methods", ep + "/methods must be a nonempty array");
        for (std::size_t i = 0; i < m.size(); ++i) {
            const std::string p = ep + "/methods/" + std::to_string(i);
            if (!m[i].is_string() || std::find(kMethods.begin(), kMethods.end(), m[i].get<std::string>()) == kMethods.end())
                r.fail(p, "unknown estimation method at " + p);
            if (s.model_type == "feller" && m[i] == "eigen_oracle")
                r.fail(p, "eigen_oracle needs a birth-death model (finite truncation)");
            est.methods.push_back(m[i].get<std::string>());
        }
        auto needs_block = [&](const char* method) {
            if (est.wants(method) && !e.contains(method))
                r.fail(ep + "/methods", std::string("method ") + method + " listed without an " + ep + "/" + method + " block");
        };
        needs_block("fleming_viot");
        needs_block("conditioned_mc");
        needs_block("eta_profile");
        if (est.wants("eigen_oracle") || est.wants("eta_profile")) {
            if (s.model_type == "bd") {
                const auto box = r.vec(r.need(e, ep, "box"), ep + "/box", d);
                for (std::size_t i = 0; i < d; ++i) {
                    const std::string p = ep + "/box/" + std::to_string(i);
                    if (box[i] < 1.0 || box[i] != std::floor(box[i])) r.fail(p, p + " must be a positive integer");
                    est.box.push_back(static_cast<Count>(box[i]));
                }
            }
        }
        if (est.wants("eta_profile") && s.model_type == "bd" && !est.wants("eigen_oracle") && !est.wants("fleming_viot"))
            r.fail(ep + "/methods", "eta_profile needs a lambda0 source: list eigen_oracle or fleming_viot");
        if (est.wants("eta_profile") && s.model_type == "feller" && !est.wants("fleming_viot"))
            r.fail(ep + "/methods", "eta_profile needs a lambda0 source: list fleming_viot");
        if (e.contains("bins_per_axis"))
            est.bins_per_axis = static_cast<int>(r.count(e["bins_per_axis"], ep + "/bins_per_axis", 2));
        if (e.contains("fleming_viot")) {
            const std::string p = ep + "/fleming_viot";
            const json& f = e["fleming_viot"];
            r.allow(f, p, {"n_particles", "horizon", "dt_sync", "snapshot_every"});
            qsd::FVConfig cfg;
            cfg.n_particles = r.count(r.need(f, p, "n_particles"), p + "/n_particles", 100);
            cfg.horizon = r.positive(r.need(f, p, "horizon"), p + "/horizon");
            if (f.contains("dt_sync")) cfg.dt_sync = r.positive(f["dt_sync"], p + "/dt_sync");
            if (f.contains("snapshot_every")) cfg.snapshot_every = r.count(f["snapshot_every"], p + "/snapshot_every", 1);
            try {
                cfg.validate();
                const auto epochs = static_cast<std::size_t>(std::llround(cfg.horizon / cfg.dt_sync));
                require(epochs - epochs / 2 >= cfg.rate_batches, "horizon holds fewer than 20 epochs");
            } catch (const PreconditionError& x) {
                r.fail(p, x.what());
            }
            est.fleming_viot = cfg;
        }
        if (e.contains("conditioned_mc")) {
            const std::string p = ep + "/conditioned_mc";
            const json& c = e["conditioned_mc"];
            r.allow(c, p, {"n_traj", "starts", "grid"});
            MonteCarloSpec mc;
            mc.n_traj = r.count(r.need(c, p, "n_traj"), p + "/n_traj", 1000);
            mc.starts = r.states(r.need(c, p, "starts"), p + "/starts", d, s.model_type == "bd");
            mc.grid = r.grid(r.need(c, p, "grid"), p + "/grid");
            est.conditioned_mc = std::move(mc);
        }
        if (e.contains("eta_profile")) {
            const std::string p = ep + "/eta_profile";
            const json& c = e["eta_profile"];
            r.allow(c, p, {"n_traj", "states", "grid"});
            EtaSpec es;
            es.n_traj = r.count(r.need(c, p, "n_traj"), p + "/n_traj", 1);
            es.states = r.states(r.need(c, p, "states"), p + "/states", d, s.model_type == "bd");
            es.grid = r.grid(r.need(c, p, "grid"), p + "/grid");
            est.eta_profile = std::move(es);
        }
    }
    if (s.checks.empty() && s.estimation.methods.empty()) r.fail("", "spec requests neither checks nor estimation");
    return s;
}

int line_of(const ExperimentSpec& spec, std::string ptr) {
    const auto index = json_line_index(spec.text);
    while (true) {
        const auto it = index.find(ptr);
        if (it != index.end()) return it->second;
        const auto cut = ptr.rfind('/');
        if (cut == std::string::npos || ptr.empty()) return 1;
        ptr.resize(cut);
    }
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw SpecError(path.string(), 0, "cannot open spec file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_spec(ss.str(), path.string());
}

} // namespace qsdlab::cli
