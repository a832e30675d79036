// End-to-end checks of the command-line driver: spec'd example invocations,
// result bundle schemas, shipped sequence files, and byte-identical reruns.
#include <catch2/catch_amalgamated.hpp>

#include "cbsim/io.hpp"

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using cbsim::Json;

namespace {

std::string bin_path() {
    const char* p = std::getenv("CBSIM_BIN");
    REQUIRE(p != nullptr);
    return p;
}

fs::path source_dir() {
    const char* p = std::getenv("CBSIM_SOURCE_DIR");
    REQUIRE(p != nullptr);
    return fs::path(p);
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "cbsim_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run_cli(const std::string& args) {
    std::string cmd = bin_path() + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return rc == -1 ? -1 : WEXITSTATUS(rc);
}

Json result_json(const fs::path& dir) {
    return Json::parse(cbsim::read_text_file((dir / "result.json").string()));
}

}  // namespace

TEST_CASE("wigner subcommand reproduces the analytic point values") {
    fs::path dir = fresh_dir("wigner_fock1");
    REQUIRE(run_cli("wigner --fock 1 --alphas 0:2.5:26 --exact --seed 1 --out " + dir.string()) == 0);

    // CSV of (alpha, W): W(0) = -2/pi for Fock 1
    std::string csv = cbsim::read_text_file((dir / "result.csv").string());
    REQUIRE(csv.rfind("# schema_version=1\n", 0) == 0);
    size_t header_end = csv.find('\n', csv.find('\n') + 1);
    std::string first_row = csv.substr(header_end + 1, csv.find('\n', header_end + 1) - header_end - 1);
    // columns: alpha_re, alpha_im, w, se, p_even
    double w0 = std::stod(first_row.substr(first_row.find(",0,") + 3));
    CHECK(std::abs(w0 - (-2.0 / 3.14159265358979324)) < 1e-9);

    Json top = result_json(dir);
    CHECK(top["command"] == "wigner");
    CHECK(top["results"]["points"].size() == 26);
    CHECK(top["config"]["seed"] == 1);
}

TEST_CASE("noon subcommand reports ideal figures of merit") {
    fs::path dir = fresh_dir("noon2");
    REQUIRE(run_cli("noon --n 2 --noiseless --seed 3 --out " + dir.string()) == 0);
    Json top = result_json(dir);
    CHECK(std::abs(top["results"]["metrics"]["fidelity"].get<double>() - 1.0) < 1e-9);
    CHECK(std::abs(top["results"]["metrics"]["fisher"].get<double>() - 4.0) < 1e-6);
}

TEST_CASE("calibrate subcommand reproduces the dephasing rates") {
    fs::path dir = fresh_dir("calibrate");
    REQUIRE(run_cli("calibrate --out " + dir.string()) == 0);
    Json top = result_json(dir);
    CHECK(std::abs(top["results"]["gamma_a"].get<double>() - 415.686274509804) < 1e-6);
    CHECK(std::abs(top["results"]["gamma_b"].get<double>() - 352.941176470588) < 1e-6);
    CHECK(std::abs(top["results"]["tau2_pred_a"].get<double>() - 1.20283018867925e-3) < 1e-12);
}

TEST_CASE("every shipped sequence file executes") {
    fs::path seq_dir = source_dir() / "sequences";
    REQUIRE(fs::exists(seq_dir));
    int count = 0;
    for (const auto& entry : fs::directory_iterator(seq_dir)) {
        if (entry.path().extension() != ".seq") continue;
        ++count;
        fs::path dir = fresh_dir("seq_" + entry.path().stem().string());
        INFO("file: " << entry.path());
        CHECK(run_cli("run " + entry.path().string() + " --seed 11 --out " + dir.string()) == 0);
        CHECK(fs::exists(dir / "result.json"));
        CHECK(fs::exists(dir / "result.csv"));
        CHECK(fs::exists(dir / "config.json"));
    }
    CHECK(count >= 10);  // one canonical program per protocol, plus variants
}

TEST_CASE("reruns with a fixed seed are byte-identical") {
    fs::path seq = source_dir() / "sequences" / "noon2_echo.seq";
    fs::path profile = source_dir() / "profiles" / "reference.profile";
    REQUIRE(fs::exists(seq));
    REQUIRE(fs::exists(profile));

    std::string common = "run " + seq.string() + " --noise " + profile.string() +
                         " --sampled --shots 400 --seed 20240814 --out ";
    fs::path d1 = fresh_dir("determinism_1");
    fs::path d2 = fresh_dir("determinism_2");
    REQUIRE(run_cli(common + d1.string()) == 0);

    // a rerun into the same directory reproduces every output byte
    std::string json_first = cbsim::read_text_file((d1 / "result.json").string());
    std::string csv_first = cbsim::read_text_file((d1 / "result.csv").string());
    REQUIRE(run_cli(common + d1.string()) == 0);
    CHECK(cbsim::read_text_file((d1 / "result.json").string()) == json_first);
    CHECK(cbsim::read_text_file((d1 / "result.csv").string()) == csv_first);

    // across directories only the echoed output path may differ
    REQUIRE(run_cli(common + d2.string()) == 0);
    CHECK(cbsim::read_text_file((d2 / "result.csv").string()) == csv_first);
    Json r1 = Json::parse(json_first);
    Json r2 = Json::parse(cbsim::read_text_file((d2 / "result.json").string()));
    CHECK(r1["results"] == r2["results"]);
    CHECK(r1["config"]["seed"] == r2["config"]["seed"]);
}

TEST_CASE("unknown flags and missing files fail with nonzero exit") {
    CHECK(run_cli("wigner --bogus-flag 3") != 0);
    CHECK(run_cli("run /nonexistent/file.seq") != 0);
    CHECK(run_cli("") != 0);                       // a subcommand is required
    CHECK(run_cli("noon --n 2 --noise /nonexistent.profile") != 0);
    CHECK(run_cli("wigner --fock 1 --coherent 1.0") != 0);  // mutually exclusive
    CHECK(run_cli("noon --n 2 --noise x --noiseless") != 0);
}

TEST_CASE("seq runner surfaces parse errors with the offending location") {
    fs::path dir = fresh_dir("bad_seq");
    fs::path bad = dir / "bad.seq";
    cbsim::write_text_file(bad.string(), "set cutoffs 4 4\nFOO 1 2\n");
    std::string cmd = bin_path() + " run " + bad.string() + " 2> " + (dir / "err.txt").string() +
                      " > /dev/null";
    int rc = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(rc) != 0);
    std::string err = cbsim::read_text_file((dir / "err.txt").string());
    CHECK(err.find("line 2") != std::string::npos);
    CHECK(err.find("FOO") != std::string::npos);
}

TEST_CASE("profile flag feeds the simulation") {
    fs::path profile = source_dir() / "profiles" / "reference.profile";
    fs::path dir = fresh_dir("fredkin_noisy");
    REQUIRE(run_cli("fredkin --noise " + profile.string() + " --seed 5 --out " + dir.string()) == 0);
    Json top = result_json(dir);
    double success = top["results"]["success"].get<double>();
    CHECK(success < 1.0);   // noise must bite
    CHECK(success > 0.5);   // but the gate still mostly works
    CHECK(top["config"]["noise"]["heat_a"] == 19.9);
}
