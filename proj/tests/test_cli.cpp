#include <doctest.h>

#include "freshma/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

using namespace freshma;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> v;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) v.push_back(l);
    return v;
}

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> v;
    std::stringstream in(s);
    for (std::string f; std::getline(in, f, ',');) v.push_back(f);
    if (!s.empty() && s.back() == ',') v.push_back("");
    return v;
}

std::string column(const std::string& csv, const std::string& name, std::size_t row = 1) {
    auto ls = lines(csv);
    auto head = split(ls.at(0)), vals = split(ls.at(row));
    for (std::size_t i = 0; i < head.size(); ++i)
        if (head[i] == name) return vals.at(i);
    return "<missing>";
}

std::string temp_path(const char* name) { return std::string("/tmp/freshma_test_") + name; }

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
}

}  // namespace

TEST_CASE("analyze aoii emits one row with the average AoII") {
    auto r = cli({"analyze", "aoii", "--scheme", "polling", "--M", "2", "--N", "10", "--c", "3", "--lambda", "0.1"});
    REQUIRE(r.code == 0);
    auto ls = lines(r.out);
    REQUIRE(ls.size() == 2);
    CHECK(ls[0].rfind("M,N,c,lambda,method,avg_aoii", 0) == 0);
    const double v = std::stod(column(r.out, "avg_aoii"));
    CHECK(v > 0.0);
    CHECK(v < 10.0);
}

TEST_CASE("parameter columns come first and sorted") {
    auto r = cli({"analyze", "peak", "--scheme", "fd"});
    REQUIRE(r.code == 0);
    auto head = split(lines(r.out)[0]);
    std::vector<std::string> params(head.begin(), head.begin() + 6);
    auto sorted = params;
    std::sort(sorted.begin(), sorted.end());
    CHECK(params == sorted);
    CHECK(head[6] == "method");
}

TEST_CASE("optimize rejects an infeasible load with exit 3") {
    auto r = cli({"optimize", "fd", "--K", "1", "--c", "3", "--lambda", "0.2"});
    CHECK(r.code == 3);
    CHECK(r.err.find("K/(e + K c)") != std::string::npos);
}

TEST_CASE("argument errors exit 2") {
    CHECK(cli({}).code == 2);
    CHECK(cli({"analyze", "aoii", "--scheme", "td"}).code == 2);
    CHECK(cli({"analyze", "aoii", "--scheme", "polling", "--K", "2"}).code == 2);
    CHECK(cli({"analyze", "aoii", "--scheme", "polling", "--M", "2.5"}).code == 2);
    CHECK(cli({"analyze", "aoii", "--scheme", "polling", "--M", "x"}).code == 2);
    CHECK(cli({"simulate", "--scheme", "polling", "--sweep", "Q=1,2"}).code == 2);
    CHECK(cli({"simulate", "--scheme", "polling", "--format", "xml"}).code == 2);
    CHECK(cli({"solve", "xd", "--M", "0"}).code == 2);
    CHECK(cli({"sweep", "--config", "/nonexistent/file.json"}).code == 2);
}

TEST_CASE("help exits 0") { CHECK(cli({"--help"}).code == 0); }

TEST_CASE("zero-load simulation gives an all-zero metrics row") {
    auto r = cli({"simulate", "--scheme", "polling", "--lambda", "0", "--slots", "5000", "--warmup", "100"});
    REQUIRE(r.code == 0);
    for (const char* k : {"avg_aoii", "peak_aoii", "occupancy", "throughput", "mean_q1", "loss_rate"})
        CHECK(std::stod(column(r.out, k)) == 0.0);
}

TEST_CASE("compare pairs analytic and simulated rows per sweep point") {
    auto r = cli({"compare", "--scheme", "polling", "--slots", "40000", "--warmup", "1000", "--sweep", "lambda=0.1,0.3"});
    REQUIRE(r.code == 0);
    auto ls = lines(r.out);
    REQUIRE(ls.size() == 5);
    for (std::size_t row = 1; row < 5; row += 2) {
        CHECK(column(r.out, "method", row) == "analytic");
        CHECK(column(r.out, "method", row + 1) == "simulated");
        CHECK(column(r.out, "lambda", row) == column(r.out, "lambda", row + 1));
    }
    CHECK(column(r.out, "lambda", 1) == "0.1");
    CHECK(column(r.out, "lambda", 3) == "0.3");
}

TEST_CASE("identical invocations are byte identical, regardless of workers") {
    std::vector<std::string> args = {"simulate", "--scheme", "aloha", "--M", "3", "--slots", "20000", "--warmup", "500",
                                     "--seed", "11", "--sweep", "lambda=0.05,0.1,0.2,0.3"};
    auto a = cli(args);
    auto b = cli(args);
    args.insert(args.end(), {"--workers", "3"});
    auto c = cli(args);
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(a.out == c.out);
    args.back() = "1";
    args[args.size() - 3] = "12";  // different seed
    CHECK(cli(args).out != a.out);
}

TEST_CASE("worker count honours the flag, then the environment") {
    CHECK(worker_count(3) == 3);
    setenv("FRESHMA_WORKERS", "2", 1);
    CHECK(worker_count(0) == 2);
    setenv("FRESHMA_WORKERS", "junk", 1);
    CHECK(worker_count(0) >= 1);
    unsetenv("FRESHMA_WORKERS");
}

TEST_CASE("configuration round trip") {
    ExperimentSpec s;
    s.command = "analyze";
    s.target = "peak";
    s.scheme = "fd";
    s.params = {{"K", 1}, {"c", 3}, {"w1", 0.37}};
    s.sweep_param = "lambda";
    s.sweep_values = {0.05, 0.1, 0.15};
    s.output = "fd.csv";
    s.workers = 2;
    CHECK(parse_config_text(to_config_text(s)) == s);

    ExperimentSpec m;
    m.command = "meanfield";
    m.target = "peak";
    m.params = {{"M", 200}, {"lambda", 0.1 + 0.2}};
    m.format = "json";
    CHECK(parse_config_text(to_config_text(m)) == m);

    ExperimentSpec x;
    x.command = "solve";
    x.target = "xd";
    x.policy_out = "policy.json";
    x.params = {{"eps", 1e-7}};
    const auto path = temp_path("roundtrip.json");
    write_file(path, to_config_text(x));
    CHECK(load_config(path) == x);
    std::remove(path.c_str());
}

TEST_CASE("configuration errors") {
    CHECK_THROWS_AS(parse_config_text(""), ConfigError);
    CHECK_THROWS_AS(parse_config_text("  \n"), ConfigError);
    try {
        parse_config_text("{\n  \"command\": \"analyze\",\n  \"target\": \"aoii\"\n  \"scheme\": \"polling\"\n}");
        FAIL("expected a parse error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    }
    try {
        parse_config_text(R"({"command": "analyze", "target": "aoii", "scheme": "polling", "speed": 1, "colour": 2})");
        FAIL("expected unknown keys");
    } catch (const ConfigError& e) {
        const std::string w = e.what();
        CHECK(w.find("speed") != std::string::npos);
        CHECK(w.find("colour") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config_text(R"({"command": "analyze", "target": "aoii", "scheme": "polling", "w1": 0.3})"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(R"({"command": "analyze", "target": "aoii", "scheme": "polling", "M": "two"})"), ConfigError);
    try {
        parse_config_text(R"({"command": "analyze", "target": "aoii", "scheme": "polling", "sweep": {"param": "lambda", "values": [0.1, "x"]}})");
        FAIL("expected a schema error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("sweep.values[1]") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config_text(R"({"command": "analyze", "target": "aoii", "scheme": "polling", "sweep": {"param": "w1", "values": [0.1]}})"),
                    ConfigError);
    CHECK_THROWS_AS(parse_config_text(R"({"target": "aoii"})"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[1, 2]"), ConfigError);
}

TEST_CASE("sweep command drives a configured FD lambda sweep") {
    const auto cfg = temp_path("fd_sweep.json");
    const auto out = temp_path("fd_sweep.csv");
    write_file(cfg, R"({"command": "analyze", "target": "peak", "scheme": "fd", "K": 1, "c": 3, "w1": 0.4,
                        "sweep": {"param": "lambda", "values": [0.05, 0.1, 0.15]}, "output": ")" + out + "\"}");
    auto r = cli({"sweep", "--config", cfg});
    REQUIRE(r.code == 0);
    std::ifstream f(out);
    std::stringstream ss;
    ss << f.rdbuf();
    auto ls = lines(ss.str());
    REQUIRE(ls.size() == 4);
    // peak AoII grows with the load
    const double a = std::stod(column(ss.str(), "peak_aoii", 1)), b = std::stod(column(ss.str(), "peak_aoii", 2)),
                 c = std::stod(column(ss.str(), "peak_aoii", 3));
    CHECK(a < b);
    CHECK(b < c);
    std::remove(cfg.c_str());
    std::remove(out.c_str());
}

TEST_CASE("solve xd exports the policy table") {
    const auto path = temp_path("policy.json");
    auto r = cli({"solve", "xd", "--M", "2", "--q0max", "6", "--policy-out", path});
    REQUIRE(r.code == 0);
    std::ifstream f(path);
    std::stringstream ss;
    ss << f.rdbuf();
    CHECK(ss.str().find("\"states\"") != std::string::npos);
    CHECK(ss.str().find("\"w1\"") != std::string::npos);
    CHECK(std::stol(column(r.out, "states")) > 0);
    std::remove(path.c_str());
}

TEST_CASE("json output and warning annotations") {
    auto r = cli({"analyze", "peak", "--scheme", "fd", "--lambda", "0.2", "--format", "json"});
    REQUIRE(r.code == 0);  // infeasible load is only annotated when analyzing
    CHECK(r.out.find("\"warning\": \"unstable") != std::string::npos);
    CHECK(r.err.find("warning:") != std::string::npos);
}
