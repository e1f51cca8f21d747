// End-to-end checks of the command-line binary: exit codes, report files,
// and the error channels for bad configs and oversized symbol windows.

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <json.hpp>

using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using nlohmann::json;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(BSIO_CLI_PATH) + " " + args;
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream f(path);
    REQUIRE(f.good());
    for (const auto& line : lines) f << line << '\n';
}

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("probe-kernel with defaults exits zero and reports the closed-form witness") {
    const std::string out = "/tmp/bsio_cli_probe.json";
    REQUIRE(run_cli("probe-kernel > " + out + " 2> /dev/null") == 0);

    const json j = json::parse(slurp(out));
    // Default box is [0, 1), so the probe anchors at 0.5 with scale 0.25; the
    // first Riesz component then has witness (x - y) / (a + b)^3 = 0.5.
    REQUIRE(j.at("slot").get<int>() == 1);
    REQUIRE_THAT(j.at("scale").get<double>(), WithinAbs(0.25, 1e-12));
    REQUIRE_THAT(j.at("witness_value").get<double>(), WithinAbs(0.5, 1e-12));
    REQUIRE_THAT(j.at("x")[0].get<double>(), WithinAbs(1.0, 1e-12));
    REQUIRE_THAT(j.at("z")[0].get<double>(), WithinAbs(0.5, 1e-12));
    REQUIRE(j.at("kernel_evals").get<std::uint64_t>() > 0);
    std::remove(out.c_str());
}

TEST_CASE("norms writes a report file when --out is given") {
    const std::string cfg = "/tmp/bsio_cli_norms.cfg";
    const std::string out = "/tmp/bsio_cli_norms.json";
    const std::string log = "/tmp/bsio_cli_norms.log";
    write_lines(cfg, {"lattice.n = 64", "lattice.h = 0.015625"});

    REQUIRE(run_cli("norms --config " + cfg + " --out " + out + " > " + log +
                    " 2> /dev/null") == 0);
    REQUIRE_THAT(slurp(log), ContainsSubstring("report written to"));

    const json j = json::parse(slurp(out));
    // The default step symbol jumps at the box midpoint, so the unit cube
    // itself realizes the largest mean oscillation.
    REQUIRE_THAT(j.at("oscillation_on_box").get<double>(), WithinAbs(0.5, 1e-12));
    REQUIRE_THAT(j.at("bmo_norm_est").at("value").get<double>(), WithinAbs(0.5, 1e-12));
    REQUIRE(j.at("bmo_norm_est").at("cubes_sampled").get<int>() > 0);

    std::remove(cfg.c_str());
    std::remove(out.c_str());
    std::remove(log.c_str());
}

TEST_CASE("invalid configuration values exit with code two") {
    const std::string cfg = "/tmp/bsio_cli_bad.cfg";
    const std::string err = "/tmp/bsio_cli_bad.err";
    write_lines(cfg, {"lattice.d = 7"});

    REQUIRE(run_cli("probe-kernel --config " + cfg + " > /dev/null 2> " + err) == 2);
    REQUIRE_THAT(slurp(err), ContainsSubstring("error:"));
    REQUIRE_THAT(slurp(err), ContainsSubstring("lattice.d"));

    std::remove(cfg.c_str());
    std::remove(err.c_str());
}

TEST_CASE("missing config files and bad invocations exit with code two") {
    REQUIRE(run_cli("norms --config /tmp/definitely_missing_bsio.cfg "
                    "> /dev/null 2> /dev/null") == 2);
    REQUIRE(run_cli("frobnicate > /dev/null 2> /dev/null") == 2);
    REQUIRE(run_cli("> /dev/null 2> /dev/null") == 2);
    REQUIRE(run_cli("--help > /dev/null 2> /dev/null") == 0);
}

TEST_CASE("awf refuses a symbol window that exceeds the cell budget") {
    const std::string cfg = "/tmp/bsio_cli_window.cfg";
    const std::string err = "/tmp/bsio_cli_window.err";
    // 4096 cells padded by 4098 box sides on each flank needs ~33M cells,
    // which is past the 2^24 budget.
    write_lines(cfg, {"lattice.n = 4096", "chain.separation = 4096",
                      "symbol.id = \"linear\""});

    REQUIRE(run_cli("awf --config " + cfg + " > /dev/null 2> " + err) == 3);
    REQUIRE_THAT(slurp(err), ContainsSubstring("resource:"));
    REQUIRE_THAT(slurp(err), ContainsSubstring("symbol window needs"));

    std::remove(cfg.c_str());
    std::remove(err.c_str());
}

TEST_CASE("awf rejects symbols that are tied to their sampling window") {
    const std::string cfg = "/tmp/bsio_cli_tied.cfg";
    const std::string err = "/tmp/bsio_cli_tied.err";
    write_lines(cfg, {"symbol.id = \"random_dyadic_bmo\""});

    REQUIRE(run_cli("awf --config " + cfg + " > /dev/null 2> " + err) == 2);
    REQUIRE_THAT(slurp(err), ContainsSubstring("tied to its sampling window"));

    std::remove(cfg.c_str());
    std::remove(err.c_str());
}
