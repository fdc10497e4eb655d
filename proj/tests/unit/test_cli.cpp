#include <doctest.h>

#include "qsdlab/cli/runner.hpp"
#include "qsdlab/cli/spec.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <sys/wait.h>

using namespace qsdlab::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("qsdlab_cli_test_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p.parent_path());
    return p;
}

Result cli(const std::string& args, const std::string& env = "") {
    const fs::path o = scratch("stdout.txt"), e = scratch("stderr.txt");
    const std::string cmd = env + (env.empty() ? "" : " ") + std::string(QSDLAB_CLI_PATH) + " " + args + " >" +
                            o.string() + " 2>" + e.string();
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(o);
    r.err = slurp(e);
    return r;
}

std::string spec(const std::string& name) { return std::string(QSDLAB_SPEC_DIR) + "/" + name; }

fs::path write_spec(const std::string& name, const json& j) {
    const fs::path p = scratch(name);
    std::ofstream(p) << j.dump(2) << '\n';
    return p;
}

json reference_spec() { return json::parse(slurp(spec("lv2d_bd.json"))); }

int line_containing(const fs::path& p, const std::string& needle) {
    std::istringstream in(slurp(p));
    std::string line;
    for (int n = 1; std::getline(in, line); ++n)
        if (line.find(needle) != std::string::npos) return n;
    return -1;
}

} // namespace

TEST_CASE("fnv1a matches the published test vectors") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("csv_to_json keeps columns and parses numbers") {
    const json j = csv_to_json("t,tv,label\n0,1.5,x\n0.5,2e-3,\"y\"\n");
    CHECK(j["columns"] == json({"t", "tv", "label"}));
    REQUIRE(j["rows"].size() == 2);
    CHECK(j["rows"][0][1] == 1.5);
    CHECK(j["rows"][1][1] == 2e-3);
    CHECK(j["rows"][0][2] == "x");
}

TEST_CASE("line index maps pointers to the lines of their keys") {
    const std::string text = "{\n  \"a\": 1,\n  \"b\": {\n    \"c\": [1,\n      2]\n  }\n}\n";
    const auto idx = json_line_index(text);
    CHECK(idx.at("") == 1);
    CHECK(idx.at("/a") == 2);
    CHECK(idx.at("/b") == 3);
    CHECK(idx.at("/b/c") == 4);
    CHECK(idx.at("/b/c/1") == 5);
}

TEST_CASE("spec validation errors carry the line of the offending entry") {
    const std::string text = "{\n  \"schema\": 1,\n  \"seed\": 4,\n  \"model\": {\"type\": \"bd\", \"lambda\": [1, 1],\n"
                             "    \"mu\": [1, 1],\n    \"c\": [[1, 0], [0, 1]]},\n  \"checks\": [\"assumption\",\n"
                             "    \"bogus\"]\n}\n";
    try {
        parse_spec(text, "s.json");
        FAIL("expected a SpecError");
    } catch (const SpecError& e) {
        CHECK(e.line() == 8);
        CHECK(std::string(e.what()).rfind("s.json:8:", 0) == 0);
    }
}

TEST_CASE("spec: seed and schema are mandatory") {
    json j = reference_spec();
    j.erase("seed");
    CHECK_THROWS_WITH_AS(parse_spec(j.dump(2), "x.json"), doctest::Contains("\"seed\""), SpecError);
    j = reference_spec();
    j["schema"] = 2;
    CHECK_THROWS_WITH_AS(parse_spec(j.dump(2), "x.json"), doctest::Contains("schema"), SpecError);
    j = reference_spec();
    j["model"]["extra"] = 1;
    CHECK_THROWS_WITH_AS(parse_spec(j.dump(2), "x.json"), doctest::Contains("unknown key"), SpecError);
}

TEST_CASE("reference spec: exit 0, nine artifacts, manifest") {
    const fs::path out = scratch("ref");
    const Result r = cli("run --spec " + spec("lv2d_bd.json") + " --out " + out.string());
    INFO(r.err);
    CHECK(r.code == 0);
    const json m = json::parse(slurp(out / "manifest.json"));
    REQUIRE(m["artifacts"].size() == 9);
    std::set<std::string> names;
    for (const auto& a : m["artifacts"]) {
        names.insert(a["name"].get<std::string>());
        CHECK(fs::exists(out / a["name"].get<std::string>()));
        CHECK(a["fnv1a64"] == fnv1a_hex(slurp(out / a["name"].get<std::string>())));
    }
    CHECK(names == std::set<std::string>{"params.json", "certificates.json", "slice_stats.csv", "qsd_eigen_oracle.csv",
                                         "qsd_fleming_viot.csv", "tv_1.csv", "tv_2.csv", "eta_profile.csv",
                                         "estimates.json"});
    CHECK(m["seed"] == 20240601);
    CHECK(m["spec_fnv1a64"] == fnv1a_hex(slurp(spec("lv2d_bd.json"))));
    CHECK(m["exit_code"] == 0);
    CHECK(m.contains("wall_times"));
    CHECK(m["versions"].contains("eigen"));
    CHECK(r.out.find("check condition_a: holds") != std::string::npos);
}

TEST_CASE("same seed gives byte-identical csv bodies; another seed changes them") {
    const fs::path a = scratch("rep_a"), b = scratch("rep_b"), c = scratch("rep_c");
    REQUIRE(cli("estimate --spec " + spec("lv2d_bd.json") + " --out " + a.string()).code == 0);
    REQUIRE(cli("estimate --spec " + spec("lv2d_bd.json") + " --out " + b.string(), "QSDLAB_THREADS=2").code == 0);
    REQUIRE(cli("estimate --spec " + spec("lv2d_bd.json") + " --seed 7 --out " + c.string()).code == 0);
    std::size_t compared = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        if (e.path().extension() != ".csv") continue;
        ++compared;
        CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
    }
    CHECK(compared == 5);
    CHECK(slurp(a / "tv_1.csv") != slurp(c / "tv_1.csv"));
    CHECK(slurp(a / "qsd_eigen_oracle.csv") == slurp(c / "qsd_eigen_oracle.csv"));
}

TEST_CASE("eta = 1e6 is a violation: exit 1 and a counterexample file") {
    json j = reference_spec();
    j["lyapunov"] = {{"eta", 1e6}};
    const fs::path p = write_spec("eta.json", j), out = scratch("eta_out");
    const Result r = cli("check --spec " + p.string() + " --out " + out.string());
    CHECK(r.code == 1);
    CHECK(r.err.find("certificate assumption_pnm violated") != std::string::npos);
    CHECK(r.err.find((out / "counterexamples.json").string()) != std::string::npos);
    const json ce = json::parse(slurp(out / "counterexamples.json"));
    REQUIRE(!ce.empty());
    CHECK(ce[0]["check"] == "assumption_pnm");
    CHECK(ce[0]["verdict"] == "violated");
    CHECK(!ce[0]["counterexamples"].empty());
}

TEST_CASE("zero budget: exit 2 anchored at the budget line") {
    json j = reference_spec();
    j["estimation"]["conditioned_mc"]["n_traj"] = 0;
    const fs::path p = write_spec("zero.json", j);
    const Result r = cli("estimate --spec " + p.string() + " --out " + scratch("zero_out").string());
    CHECK(r.code == 2);
    const int line = line_containing(p, "\"n_traj\": 0");
    CHECK(r.err.rfind(p.string() + ":" + std::to_string(line) + ":", 0) == 0);
    j = reference_spec();
    j["estimation"]["fleming_viot"]["n_particles"] = 0;
    CHECK(cli("estimate --spec " + write_spec("zero_fv.json", j).string()).code == 2);
}

TEST_CASE("dimension mismatch: exit 2") {
    json j = reference_spec();
    j["estimation"]["conditioned_mc"]["starts"][1] = {30, 30, 30};
    const fs::path p = write_spec("dim.json", j);
    const Result r = cli("run --spec " + p.string());
    CHECK(r.code == 2);
    CHECK(r.err.find("dimension mismatch") != std::string::npos);
    j = reference_spec();
    j["model"]["c"] = {{1, 0.2, 0}, {0.2, 1, 0}};
    CHECK(cli("run --spec " + write_spec("dim2.json", j).string()).code == 2);
}

TEST_CASE("malformed JSON and bad flags: exit 2") {
    const fs::path p = scratch("bad.json");
    std::ofstream(p) << "{\n  \"schema\": 1,\n  \"seed\": 3,\n  \"model\": {,}\n}\n";
    const Result r = cli("run --spec " + p.string());
    CHECK(r.code == 2);
    CHECK(r.err.rfind(p.string() + ":4:", 0) == 0);
    CHECK(cli("run").code == 2);
    CHECK(cli("run --spec " + spec("lv2d_bd.json") + " --format xml").code == 2);
    CHECK(cli("frobnicate").code == 2);
    CHECK(cli("oracle --spec " + spec("oracle_1state.json"), "QSDLAB_THREADS=zero").code == 2);
}

TEST_CASE("oracle on a one-state box prints the point mass and its exit rate") {
    const Result r = cli("oracle --spec " + spec("oracle_1state.json"));
    CHECK(r.code == 0);
    CHECK(r.out.find("qsd: delta at (1,1)") != std::string::npos);
    CHECK(r.out.find("lambda0: 6.4") != std::string::npos);
    CHECK(r.out.find("exit rate q: 6.4") != std::string::npos);
}

TEST_CASE("json format writes parseable tables") {
    const fs::path out = scratch("json_out");
    const Result r = cli("estimate --spec " + spec("lv2d_bd.json") + " --format json --out " + out.string());
    CHECK(r.code == 0);
    const json t = json::parse(slurp(out / "tv_1.json"));
    CHECK(t["columns"] == json({"t", "tv", "survivors", "ci_lo", "ci_hi"}));
    CHECK(t["rows"].size() > 10);
    CHECK_FALSE(fs::exists(out / "tv_1.csv"));
}

TEST_CASE("reproduce-thm-3-2 prints one verdict line per criterion; exit code follows the table") {
    const Result r = cli("reproduce-thm-3-2");
    const std::regex line_re(R"(^\[(PASS|FAIL)\] (\d) .*$)");
    std::istringstream in(r.out);
    std::string line;
    std::vector<int> ids;
    bool any_fail = false;
    while (std::getline(in, line)) {
        std::smatch m;
        REQUIRE(std::regex_match(line, m, line_re));
        ids.push_back(std::stoi(m[2]));
        any_fail = any_fail || m[1] == "FAIL";
    }
    CHECK(ids == std::vector<int>{2, 3, 4, 7, 8});
    CHECK(r.code == (any_fail ? 1 : 0));
}
