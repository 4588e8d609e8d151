#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "popsim/commands.hpp"

using namespace popsim;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::path(POPSIM_TEST_TMP) / "commands" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

json read_json(const fs::path& path) { return json::parse(slurp(path)); }

std::vector<std::string> lines(const fs::path& path) {
    std::istringstream in(slurp(path));
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

RunSpec spec_from(const std::vector<std::pair<std::string, std::string>>& kv) {
    Settings s;
    for (const auto& [k, v] : kv) s.set(k, v);
    return resolve(s);
}

int cli(const std::string& args) {
    const std::string command = std::string("\"") + POPSIM_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(command.c_str());
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

}  // namespace

TEST_SUITE("commands") {

TEST_CASE("settings: flags beat the config file") {
    const auto dir = scratch("settings");
    {
        std::ofstream f(dir / "cfg.txt");
        f << "# comment\n"
          << "n = 500\n"
          << "gap = 4   # trailing comment\n"
          << "\n"
          << "protocol = backup\n";
    }
    Settings s;
    s.load_file((dir / "cfg.txt").string());
    s.set("n", "600");
    CHECK(s.get("n") == "600");
    CHECK(s.get("gap") == "4");
    CHECK(s.get("protocol") == "backup");
    CHECK_FALSE(s.get("seed"));
    const auto spec = resolve(s);
    CHECK(spec.n == 600u);
    CHECK(spec.gap == 4);
    CHECK(spec.protocol == "backup");

    CHECK_THROWS_AS(s.set("bogus", "1"), ConfigError);
    CHECK_THROWS_AS(s.load_file((dir / "missing.txt").string()), ConfigError);
    {
        std::ofstream f(dir / "bad.txt");
        f << "n 500\n";
    }
    Settings bad;
    CHECK_THROWS_AS(bad.load_file((dir / "bad.txt").string()), ConfigError);
}

TEST_CASE("settings: seed falls back to the environment") {
    ::setenv("POPSIM_SEED", "77", 1);
    CHECK(spec_from({}).seed == 77);
    CHECK(spec_from({{"seed", "5"}}).seed == 5);
    ::unsetenv("POPSIM_SEED");
    CHECK(spec_from({}).seed == 1);
}

TEST_CASE("settings: validation") {
    CHECK_THROWS_AS(spec_from({{"protocol", "nope"}}), ConfigError);
    CHECK_THROWS_AS(spec_from({{"n", "1"}}), ConfigError);
    CHECK_THROWS_AS(spec_from({{"n", "ten"}}), ConfigError);
    CHECK_THROWS_AS(spec_from({{"p", "0"}}), ConfigError);
    CHECK_THROWS_AS(spec_from({{"p", "1.5"}}), ConfigError);
    CHECK_THROWS_AS(spec_from({{"preset", "fast"}}), ConfigError);
    CHECK_THROWS_AS(spec_from({{"counter-mult", "1,2"}}), ConfigError);
    CHECK_THROWS_AS(spec_from({{"counter-mult", "-1"}}), ConfigError);
    CHECK_THROWS_AS(spec_from({{"stop", "soon"}}), ConfigError);
    CHECK_THROWS_AS(spec_from({{"label", "../x"}}), ConfigError);
    CHECK_THROWS_AS(spec_from({{"jobs", "0"}}), ConfigError);
    CHECK(spec_from({{"stop", "time=12.5"}}).stop_time == doctest::Approx(12.5));
    CHECK_FALSE(spec_from({{"stop", "silent"}}).stop_time);
    const auto spec = spec_from({{"counter-mult", "3"}, {"k", "7"}, {"p", "0.5"}});
    const auto params = majority_params(spec, 1000);
    CHECK(params.minutes_per_hour == 7);
    CHECK(params.drip_probability == doctest::Approx(0.5));
    for (double c : params.counter_mult) CHECK(c == doctest::Approx(3.0));
    CHECK(default_projection("backup") == std::vector<std::string>{"output", "active"});
    CHECK(guard_time(spec, 100) == doctest::Approx(1e5));
    CHECK(guard_time(spec, 1000) == doctest::Approx(20000.0 * std::log2(1000.0)));
    CHECK(guard_time(spec, 1 << 20) == doctest::Approx(20.0 * (1 << 20) * 20));
}

TEST_CASE("parity and gap errors") {
    const auto dir = scratch("parity");
    auto spec = spec_from({{"n", "999"}, {"gap", "2"}, {"out", dir.string()}, {"label", "x"}});
    CHECK_THROWS_AS(cmd_run(spec), ConfigError);
    spec.gap = 1001;
    CHECK_THROWS_AS(cmd_run(spec), ConfigError);
    spec.protocol = "backup";
    spec.gap = 2;
    CHECK_THROWS_AS(cmd_run(spec), ConfigError);
}

TEST_CASE("majority run writes meta, result and timeline") {
    const auto dir = scratch("majority");
    const auto spec = spec_from({{"n", "300"}, {"gap", "10"}, {"seed", "4"}, {"out", dir.string()},
                                 {"label", "one"}, {"project", "phase,output"}});
    const auto r = cmd_run(spec);
    CHECK(r.outcome == Outcome::Ok);
    const fs::path run = dir / "majority" / "one";
    CHECK(fs::path(r.directory) == run);
    const auto meta = read_json(run / "meta.json");
    CHECK(meta["n"] == 300);
    CHECK(meta["gap"] == 10);
    CHECK(meta["seed"] == 4);
    CHECK(meta["k"] == 2);
    CHECK(meta["counter_start"].size() == 9);
    const auto result = read_json(run / "result.json");
    CHECK(result["output"] == "A");
    CHECK(result["expected"] == "A");
    CHECK(result["correct"] == true);
    CHECK(result["silent"] == true);
    CHECK(result["stabilization_time"].is_number());
    CHECK(result["phase_entry"].size() == 11);
    const auto rows = lines(run / "timeline.csv");
    REQUIRE(rows.size() > 2);
    CHECK(rows[0] == "parallel_time,key,count");
    std::map<std::string, std::uint64_t> totals;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto first = rows[i].find(',');
        const auto last = rows[i].rfind(',');
        REQUIRE(first != std::string::npos);
        REQUIRE(last > first);
        CHECK(rows[i].find('|') != std::string::npos);
        totals[rows[i].substr(0, first)] += std::stoull(rows[i].substr(last + 1));
    }
    for (const auto& [t, total] : totals) CHECK(total == 300);
}

TEST_CASE("opinion sets are quoted in CSV keys") {
    const auto dir = scratch("quoted");
    const auto spec = spec_from({{"n", "200"}, {"out", dir.string()}, {"label", "q"},
                                 {"project", "phase,opinions"}});
    CHECK(cmd_run(spec).outcome == Outcome::Ok);
    int quoted = 0;
    for (const auto& row : lines(dir / "majority" / "q" / "timeline.csv")) {
        const auto open = row.find('"');
        if (row.find('{') == std::string::npos) continue;
        const bool has_comma = row.find(',', row.find('{')) < row.find('}');
        CHECK(has_comma == (open != std::string::npos));
        if (open != std::string::npos) {
            ++quoted;
            CHECK(row.find('"', open + 1) == row.find('}') + 1);
        }
    }
    CHECK(quoted > 0);
}

TEST_CASE("reruns with the same seed are byte-identical") {
    const auto dir = scratch("rerun");
    for (const char* label : {"a", "b"}) {
        const auto spec = spec_from({{"n", "400"}, {"gap", "-6"}, {"seed", "9"}, {"out", dir.string()},
                                     {"label", label}, {"trials", "2"}});
        CHECK(cmd_run(spec).outcome == Outcome::Ok);
    }
    for (const char* file : {"meta.json", "trial-000/result.json", "trial-000/timeline.csv",
                             "trial-001/result.json", "trial-001/timeline.csv"}) {
        CAPTURE(file);
        CHECK(slurp(dir / "majority" / "a" / file) == slurp(dir / "majority" / "b" / file));
    }
    CHECK(slurp(dir / "majority" / "a" / "trial-000/result.json") !=
          slurp(dir / "majority" / "a" / "trial-001/result.json"));
}

TEST_CASE("backup, sizeest and epidemic runs") {
    const auto dir = scratch("others");
    auto r = cmd_run(spec_from({{"protocol", "backup"}, {"n", "50"}, {"gap", "0"}, {"out", dir.string()},
                                {"label", "b"}}));
    CHECK(r.outcome == Outcome::Ok);
    CHECK(read_json(dir / "backup" / "b" / "result.json")["output"] == "T");

    r = cmd_run(spec_from({{"protocol", "sizeest"}, {"n", "37"}, {"out", dir.string()}, {"label", "s"}}));
    CHECK(r.outcome == Outcome::Ok);
    const auto report = read_json(dir / "sizeest" / "s" / "report.json");
    CHECK(report["ok"] == true);
    CHECK(report["f_value"] == 5);
    CHECK(report["l_levels"] == json::array({0, 2, 5}));

    r = cmd_run(spec_from({{"protocol", "epidemic"}, {"n", "500"}, {"a", "0.1"}, {"out", dir.string()},
                           {"label", "e"}}));
    CHECK(r.outcome == Outcome::Ok);
    const auto res = read_json(dir / "epidemic" / "e" / "result.json");
    CHECK(res["silent"] == true);
    CHECK(res["initially_infected"] == 50);
    CHECK(lines(dir / "epidemic" / "e" / "timeline.csv").front() == "parallel_time,key,count");
}

TEST_CASE("clock run writes minutes and crossings") {
    const auto dir = scratch("clock");
    const auto r = cmd_run(spec_from({{"protocol", "clock"}, {"n", "500"}, {"k", "3"}, {"L", "3"}, {"p", "1"},
                                      {"snapshot-dt", "0.1"}, {"out", dir.string()}, {"label", "c"}}));
    CHECK(r.outcome == Outcome::Ok);
    const fs::path run = dir / "clock" / "c";
    const auto minutes = lines(run / "minutes.csv");
    REQUIRE(minutes.size() > 1);
    CHECK(minutes[0] == "parallel_time,minute,fraction");
    std::map<std::string, double> sums;
    for (std::size_t i = 1; i < minutes.size(); ++i) {
        const auto a = minutes[i].find(',');
        const auto b = minutes[i].rfind(',');
        sums[minutes[i].substr(0, a)] += std::stod(minutes[i].substr(b + 1));
    }
    for (const auto& [t, s] : sums) CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    const auto crossings = lines(run / "crossings.csv");
    CHECK(crossings[0] == "minute,t_plus,t_01,t_09");
    CHECK(crossings.size() == 1 + 10);
    const auto result = read_json(run / "result.json");
    CHECK(result["complete"] == true);
    CHECK(result["minute_lengths"].size() == 9);
    CHECK(result["bounds"].size() == 2);
    CHECK(result["hours"].size() == 4);
}

TEST_CASE("sweep summary") {
    const auto dir = scratch("sweep");
    const auto spec = spec_from({{"n", "200"}, {"trials", "3"}, {"axis", "gap"}, {"values", "0,4,-8"},
                                 {"out", dir.string()}, {"label", "g"}});
    const auto r = cmd_sweep(spec);
    CHECK(r.outcome == Outcome::Ok);
    const auto rows = lines(dir / "sweep-majority" / "g" / "summary.csv");
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == "axis_value,trials,correct_rate,mean_time,p90_time");
    CHECK(rows[1].rfind("0,3,1,", 0) == 0);
    CHECK(rows[2].rfind("4,3,1,", 0) == 0);
    CHECK(rows[3].rfind("-8,3,1,", 0) == 0);

    auto bad = spec;
    bad.values = {"1"};
    CHECK_THROWS_AS(cmd_sweep(bad), ConfigError);
    bad = spec;
    bad.protocol = "clock";
    CHECK_THROWS_AS(cmd_sweep(bad), ConfigError);
}

TEST_CASE("experiment output") {
    const auto dir = scratch("experiment");
    const auto spec = spec_from({{"n", "20000"}, {"trials", "4"}, {"out", dir.string()}, {"label", "x"}});
    const auto r = cmd_experiment(spec, "epidemic");
    CHECK(r.outcome == Outcome::Ok);
    const auto j = read_json(dir / "experiment-epidemic" / "x" / "experiment.json");
    for (const char* key : {"name", "params", "samples", "prediction", "tolerance", "pass", "mean",
                            "relative_error"}) {
        CAPTURE(key);
        CHECK(j.contains(key));
    }
    CHECK(j["samples"].size() == 4);
    CHECK(j["tolerance"] == 0.05);
    CHECK_THROWS_AS(cmd_experiment(spec, "bogus"), ConfigError);

    auto strict = spec;
    strict.tolerance = 1e-9;
    strict.label = "strict";
    CHECK(cmd_experiment(strict, "epidemic").outcome == Outcome::Correctness);
    CHECK(experiment_names().size() == 4);
}

TEST_CASE("command-line exit codes") {
    const auto dir = scratch("cli").string();
    const std::string out = " --out \"" + dir + "\"";
    CHECK(cli("--version") == 0);
    CHECK(cli("--help") == 0);
    CHECK(cli("") == 1);
    CHECK(cli("run --bogus 1") == 1);
    CHECK(cli("run --n 999 --gap 2" + out) == 1);
    CHECK(cli("run --n 300 --gap 2 --label ok" + out) == 0);
    CHECK(cli("run --n 300 --gap 2 --guard 0.5 --label guard" + out) == 3);
    CHECK(cli("run --n 300 --stop time=2 --label timed" + out) == 0);
    CHECK(cli("experiment epidemic --n 2000 --trials 2 --tolerance 1e-9 --label strict" + out) == 2);
    CHECK(cli("experiment nope" + out) == 1);
    CHECK(cli("sweep --axis gap --values 0,2 --n 100 --trials 2 --label s" + out) == 0);
    CHECK(fs::exists(fs::path(dir) / "majority" / "ok" / "result.json"));
    CHECK(fs::exists(fs::path(dir) / "sweep-majority" / "s" / "summary.csv"));
}

}  // TEST_SUITE
