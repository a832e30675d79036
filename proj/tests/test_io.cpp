// I/O layer: noise profile parsing, canonical number formatting, CSV tables,
// and the result bundle files.
#include <catch2/catch_amalgamated.hpp>

#include "cbsim/io.hpp"

#include <filesystem>
#include <string>

using namespace cbsim;

TEST_CASE("profile parsing reads the documented keys") {
    NoiseParams p = parse_profile("# calibrated rates\n"
                                  "heat_a = 19.9\n"
                                  "heat_b = 44.0\n"
                                  "\n"
                                  "deph_spin = 588.235294117647   # 1 / 1.7 ms\n"
                                  "deph_spin_echo = 142.857142857143\n"
                                  "deph_mode_a = 415.686274509804\n"
                                  "deph_mode_b = 352.941176470588\n"
                                  "nbar_a = 0.004\n"
                                  "nbar_b = 0.011\n"
                                  "detect_err = 0\n");
    CHECK(p.heat_a == 19.9);
    CHECK(p.heat_b == 44.0);
    CHECK(p.deph_spin == 588.235294117647);
    CHECK(p.deph_spin_echo == 142.857142857143);
    CHECK(p.deph_mode_a == 415.686274509804);
    CHECK(p.deph_mode_b == 352.941176470588);
    CHECK(p.nbar_a == 0.004);
    CHECK(p.nbar_b == 0.011);
    CHECK(p.detect_err == 0.0);
    CHECK_FALSE(p.correlated_dephasing);
}

TEST_CASE("empty profile leaves every channel off") {
    NoiseParams p = parse_profile("");
    CHECK(p == NoiseParams{});
    CHECK_FALSE(p.any_noise(false));

    // comments and blank lines only
    CHECK(parse_profile("# nothing here\n\n   \n") == NoiseParams{});
}

TEST_CASE("profile rejects malformed input with the line number") {
    auto expect_error = [](const std::string& text, const std::string& fragment) {
        try {
            parse_profile(text);
            FAIL("expected a profile error for: " << text);
        } catch (const std::exception& e) {
            // syntax errors are runtime_error; range violations surface the
            // parameter validator's invalid_argument
            CHECK(std::string(e.what()).find(fragment) != std::string::npos);
        }
    };
    expect_error("heat_a = fast\n", "cannot parse value 'fast'");
    expect_error("heat_q = 1\n", "unknown key 'heat_q'");
    expect_error("heat_a 19.9\n", "expected 'key = value'");
    expect_error("heat_a = 19.9 extra\n", "trailing content");
    expect_error("heat_a = 1\nheat_b = oops\n", "line 2");
    expect_error("heat_a = -5\n", "NoiseParams");  // validated after parse
    expect_error("detect_err = 0.9\n", "detect_err");
}

TEST_CASE("profile text round trip") {
    NoiseParams p;
    p.heat_a = 19.9;
    p.deph_mode_b = 352.941176470588;
    p.nbar_a = 0.004;
    p.correlated_dephasing = true;
    CHECK(parse_profile(profile_to_text(p)) == p);
}

TEST_CASE("shipped profile is loadable and matches the calibration") {
    // run from anywhere: tests resolve the repo root through this source file
    std::filesystem::path here(__FILE__);
    std::filesystem::path profile = here.parent_path().parent_path() / "profiles" / "reference.profile";
    REQUIRE(std::filesystem::exists(profile));
    NoiseParams p = load_profile(profile.string());
    CHECK(p.heat_a == 19.9);
    CHECK(p.heat_b == 44.0);
    CHECK(std::abs(p.deph_mode_a - calibrate_motional_dephasing({{1, 5e-3}, {2, 1.2e-3}})) < 1e-6);
    CHECK(std::abs(p.deph_mode_b - calibrate_motional_dephasing({{1, 7e-3}, {2, 1.4e-3}})) < 1e-6);
    CHECK(p.nbar_a == 0.004);
    CHECK(p.nbar_b == 0.011);

    CHECK_THROWS_WITH(load_profile("/nonexistent/path.profile"),
                      Catch::Matchers::ContainsSubstring("/nonexistent/path.profile"));
}

TEST_CASE("shortest round-trip double formatting") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(-2.5e-7) == "-2.5e-07");
    CHECK(format_double(19.9) == "19.9");
    // value survives a parse round trip bit-exactly
    double x = 0.12345678901234567;
    CHECK(std::stod(format_double(x)) == x);
}

TEST_CASE("csv tables carry the schema header") {
    CsvTable t{{"a", "b"}};
    t.add_row({"1", "2"});
    t.add_row({"x", "y"});
    std::string s = csv_to_string(t);
    CHECK(s == "# schema_version=1\na,b\n1,2\nx,y\n");
    CHECK_THROWS_AS(t.add_row({"only-one"}), std::invalid_argument);
}

TEST_CASE("result bundle writes three consistent files") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "cbsim_io_test";
    fs::remove_all(dir);
    fs::create_directories(dir);

    Json config{{"seed", 7}};
    Json results{{"value", 1.5}};
    CsvTable t{{"quantity", "value"}};
    t.add_row({"value", "1.5"});
    write_result_bundle(dir.string(), "demo", config, results, t);

    Json top = Json::parse(read_text_file((dir / "result.json").string()));
    CHECK(top["schema_version"] == schema_version);
    CHECK(top["command"] == "demo");
    CHECK(top["config"]["seed"] == 7);
    CHECK(top["results"]["value"] == 1.5);

    Json cfg = Json::parse(read_text_file((dir / "config.json").string()));
    CHECK(cfg["config"]["seed"] == 7);
    CHECK_FALSE(cfg.contains("results"));

    std::string csv = read_text_file((dir / "result.csv").string());
    CHECK(csv.rfind("# schema_version=1\nquantity,value\n", 0) == 0);
    fs::remove_all(dir);
}

TEST_CASE("json serialization spot checks") {
    NoiseParams p;
    p.heat_a = 19.9;
    Json j(p);
    CHECK(j["heat_a"] == 19.9);
    CHECK(j.contains("detect_err"));
    CHECK(j.contains("correlated_dephasing"));

    ModeLayout layout{4, 4};
    Json jl(layout);
    CHECK(jl["cutoffs"] == Json::array({4, 4}));

    PrepRecipe r = PrepRecipe::coherent(Cplx(1.0, -0.5), Mode::b);
    Json jr(r);
    CHECK(jr["kind"] == "coherent");
    CHECK(jr["mode"] == "b");
}
