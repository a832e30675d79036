// Sequence language: parsing, diagnostics, canonical printing round trips,
// fuzzed grammar coverage, and execution equivalence with the protocol layer.
#include <catch2/catch_amalgamated.hpp>

#include "cbsim/protocols.hpp"
#include "cbsim/seqlang.hpp"

#include <cmath>
#include <random>
#include <string>

using namespace cbsim;

TEST_CASE("parsing the core instruction forms") {
    SeqProgram p = parse_sequence("set cutoffs 4 4\n"
                                  "PREP fock 1 a\n"
                                  "R pi/2 0\n"
                                  "CBS 0.5tau pi\n"
                                  "BS tau -pi/2 ab\n"
                                  "DISP -0.5+0.25i a\n"
                                  "BSB a\n"
                                  "RSB b\n"
                                  "JSB 31415.9 50us\n"
                                  "WAIT 0.1ms\n"
                                  "MEASURE\n");
    REQUIRE(p.instructions.size() == 10);
    CHECK(p.settings.layout == ModeLayout{4, 4});

    auto& rot = std::get<RotInstr>(p.instructions[1]);
    CHECK(rot.theta == pi / 2.0);  // symbolic pi fractions parse exactly
    CHECK(rot.phi == 0.0);

    auto& cbs = std::get<SplitterInstr>(p.instructions[2]);
    CHECK(cbs.conditional);
    CHECK(cbs.dur == Duration{0.5, true});
    CHECK(cbs.upsilon == pi);

    auto& bs = std::get<SplitterInstr>(p.instructions[3]);
    CHECK_FALSE(bs.conditional);
    CHECK(bs.upsilon == -pi / 2.0);

    auto& disp = std::get<DispInstr>(p.instructions[4]);
    CHECK(disp.alpha == Cplx(-0.5, 0.25));

    auto& jsb = std::get<JsbInstr>(p.instructions[7]);
    CHECK(jsb.dur.value == Catch::Approx(50e-6));

    auto& wait = std::get<WaitInstr>(p.instructions[8]);
    CHECK(wait.dur.value == Catch::Approx(0.1e-3));
    CHECK(p.has_measure());
}

TEST_CASE("header settings") {
    SeqProgram p = parse_sequence("set cutoffs 5 5 5\n"
                                  "set xi 3926.9908169872415\n"
                                  "set noise heat_a 19.9\n"
                                  "set noise detect_err 0.01\n"
                                  "set shots 500\n"
                                  "set mode sampled\n"
                                  "set seed 12345\n"
                                  "set echo on\n");
    CHECK(p.settings.layout.n_modes() == 3);
    CHECK(p.settings.xi == 3926.9908169872415);
    CHECK(p.settings.noise.heat_a == 19.9);
    CHECK(p.settings.noise.detect_err == 0.01);
    CHECK(p.settings.shots == 500);
    CHECK(p.settings.sampled);
    CHECK(p.settings.seed == 12345u);
    CHECK(p.settings.echoed);
}

TEST_CASE("parse errors carry line and column") {
    auto expect_error = [](const std::string& text, int line, const std::string& fragment) {
        try {
            parse_sequence(text);
            FAIL("expected a parse error for: " << text);
        } catch (const SeqParseError& e) {
            CHECK(e.line() == line);
            CHECK(e.col() >= 1);
            CHECK(std::string(e.what()).find(fragment) != std::string::npos);
            CHECK(std::string(e.what()).find("line " + std::to_string(line)) != std::string::npos);
        }
    };

    expect_error("FOO 1 2\n", 1, "unknown instruction 'FOO'");
    expect_error("R pi/2 0\nset shots 100\n", 2, "set lines must appear");
    expect_error("set wibble 3\n", 1, "unknown setting");
    expect_error("set noise heat_q 1\n", 1, "unknown noise parameter");
    expect_error("PREP fock 9 a\n", 1, "outside the cutoff");
    expect_error("PREP fock 1 a\nPREP fock 2 a\n", 2, "prepared twice");
    expect_error("R pi 0\nPREP fock 1 a\n", 2, "PREP must precede");
    expect_error("MEASURE\nR pi 0\n", 2, "MEASURE must be the last");
    expect_error("CBS 0.5 0\n", 1, "unit suffix");
    expect_error("WAIT -1ms\n", 1, "negative");
    expect_error("R bogus 0\n", 1, "angle");
    expect_error("CBS tau 0 aa\n", 1, "distinct modes");
    expect_error("set cutoffs 4\nCBS tau 0\n", 2, "two modes");
    expect_error("set noise detect_err 0.9\n", 1, "detect_err");
    expect_error("set mode turbo\n", 1, "exact");
}

TEST_CASE("no abort on arbitrary byte soup") {
    std::mt19937_64 rng(314159);
    for (int trial = 0; trial < 200; ++trial) {
        std::string junk;
        int len = int(rng() % 120);
        for (int i = 0; i < len; ++i) junk.push_back(char(rng() % 256));
        try {
            SeqProgram p = parse_sequence(junk);
            (void)p;  // valid programs are acceptable too
        } catch (const SeqParseError&) {
            // rejected inputs must use the structured error, nothing else
        }
    }
    SUCCEED("no crash or foreign exception across 200 random byte strings");
}

TEST_CASE("pretty print round trip on handwritten programs") {
    const char* programs[] = {
        "set cutoffs 4 4\nPREP fock 1 a\nR pi/2 0\nCBS tau 0\nR pi/2 0\nMEASURE\n",
        "set cutoffs 6 6\nset echo on\nPREP fock 2 a\nR pi/2 0\nCBS 0.5tau 0\nR pi 0\n"
        "CBS 0.5tau pi\nR pi/2 pi/2\nMEASURE\n",
        "set cutoffs 12 3\nPREP coherent 1.2-0.7i a\nDISP 0.3i a\nWAIT 1ms\nMEASURE\n",
        "set cutoffs 5 5 5\nset noise heat_a 19.9\nset noise nbar_b 0.011\nset shots 450\n"
        "set mode sampled\nset seed 42\nPREP thermal 0.2 c\nCBS tau pi/2 ac\nBS 2tau 0 bc\nMEASURE\n",
    };
    for (const char* text : programs) {
        SeqProgram first = parse_sequence(text);
        std::string printed = pretty_print(first);
        SeqProgram second = parse_sequence(printed);
        CHECK(second == first);
        // printing is idempotent once canonical
        CHECK(pretty_print(second) == printed);
    }
}

namespace {

SeqProgram random_program(std::mt19937_64& rng) {
    auto pick = [&](int n) { return int(rng() % unsigned(n)); };
    auto real = [&](double lo, double hi) {
        return lo + (hi - lo) * double(rng() >> 11) * 0x1.0p-53;
    };

    SeqProgram p;
    int n_modes = 2 + pick(2);
    std::vector<int> cuts;
    for (int k = 0; k < n_modes; ++k) cuts.push_back(3 + pick(4));
    p.settings.layout = ModeLayout(cuts);
    if (pick(2)) p.settings.xi = real(1e3, 1e4);
    if (pick(2)) p.settings.noise.heat_a = real(0.0, 50.0);
    if (pick(2)) p.settings.noise.deph_mode_b = real(0.0, 500.0);
    if (pick(2)) p.settings.noise.detect_err = real(0.0, 0.4);
    if (pick(2)) p.settings.shots = 50 + pick(1000);
    if (pick(2)) p.settings.sampled = true;
    if (pick(2)) p.settings.seed = rng();
    if (pick(2)) p.settings.echoed = true;

    auto mode = [&]() { return Mode(pick(n_modes)); };
    auto duration = [&]() {
        if (pick(2)) return Duration{real(0.125, 4.0), true};
        return Duration{real(1e-6, 2e-3), false};
    };
    auto angle = [&]() {
        if (pick(2)) return pi * double(1 + pick(7)) / double(1 + pick(4));
        return real(-6.0, 6.0);
    };

    // optional preparations on distinct modes
    int preps = pick(n_modes + 1);
    for (int k = 0; k < preps; ++k) {
        Mode m = Mode(k);
        switch (pick(3)) {
            case 0:
                p.instructions.push_back(
                    PrepInstr{PrepRecipe::fock(pick(p.settings.layout.cutoff(m)), m)});
                break;
            case 1:
                p.instructions.push_back(
                    PrepInstr{PrepRecipe::coherent(Cplx(real(-1.0, 1.0), real(-1.0, 1.0)), m)});
                break;
            default:
                p.instructions.push_back(PrepInstr{PrepRecipe::thermal(real(0.0, 0.5), m)});
        }
    }

    int gates = pick(7);
    for (int k = 0; k < gates; ++k) {
        switch (pick(7)) {
            case 0:
                p.instructions.push_back(RotInstr{angle(), angle()});
                break;
            case 1: {
                SplitterInstr s;
                s.conditional = pick(2) == 0;
                s.dur = duration();
                s.upsilon = angle();
                s.mode1 = mode();
                do { s.mode2 = mode(); } while (s.mode2 == s.mode1);
                p.instructions.push_back(s);
                break;
            }
            case 2:
                p.instructions.push_back(DispInstr{Cplx(real(-1.0, 1.0), real(-1.0, 1.0)), mode()});
                break;
            case 3:
                p.instructions.push_back(
                    SidebandInstr{pick(2) ? SidebandKind::blue : SidebandKind::red, mode()});
                break;
            case 4:
                p.instructions.push_back(JsbInstr{real(1e3, 1e5), duration()});
                break;
            default:
                p.instructions.push_back(WaitInstr{duration()});
        }
    }
    if (pick(2)) p.instructions.push_back(MeasureInstr{});
    return p;
}

}  // namespace

TEST_CASE("pretty print round trip on 100 fuzzed programs") {
    std::mt19937_64 rng(271828);
    for (int trial = 0; trial < 100; ++trial) {
        SeqProgram p = random_program(rng);
        std::string text = pretty_print(p);
        INFO("program:\n" << text);
        SeqProgram back = parse_sequence(text);
        REQUIRE(back == p);
    }
}

TEST_CASE("minimal program measures the prepared state") {
    SeqOutcome out = execute_sequence("set cutoffs 4 4\nPREP fock 1 a\nMEASURE\n");
    CHECK(out.measured);
    CHECK(std::abs(out.mode_population[0][1] - 1.0) < 1e-12);
    CHECK(std::abs(out.spin[1]) < 1e-12);
    CHECK(std::abs(out.mode_parity[0] + 1.0) < 1e-12);
    CHECK(out.leakage < 1e-12);
}

TEST_CASE("sequence program reproduces the swap-test protocol") {
    // interferometer at phi = 0 between |1> and reference |1>
    SeqOutcome out = execute_sequence("set cutoffs 6 6\n"
                                      "PREP fock 1 a\n"
                                      "PREP fock 1 b\n"
                                      "R pi/2 0\n"
                                      "CBS tau 0\n"
                                      "R pi/2 0\n"
                                      "MEASURE\n");
    double expect = swap_test_expected_excited(1, 1.0, 0.0);
    CHECK(std::abs(out.spin[1] - expect) < 1e-12);

    // and at phi = pi the fringe is at its other extreme
    SeqOutcome flip = execute_sequence("set cutoffs 6 6\nPREP fock 1 a\nPREP fock 1 b\n"
                                       "R pi/2 0\nCBS tau 0\nR pi/2 pi\nMEASURE\n");
    CHECK(std::abs(flip.spin[1] - swap_test_expected_excited(1, 1.0, pi)) < 1e-12);
}

TEST_CASE("echoed noon program matches the generation protocol") {
    const char* text =
        "set cutoffs 6 6\n"
        "set echo on\n"
        "PREP fock 2 a\n"
        "R pi/2 0\n"
        "CBS 0.5tau 0\nR pi 0\nCBS 0.5tau pi\n"
        "R pi/2 pi/2\n"
        "CBS 0.5tau 0\nR pi 0\nCBS 0.5tau pi\n"
        "R pi/2 0\n"
        "MEASURE\n";
    SeqOutcome out = execute_sequence(text);

    NoonConfig cfg;
    cfg.n = 2;
    cfg.echoed = true;
    HybridState direct = generate_noon(cfg);
    REQUIRE(out.state.layout() == direct.layout());
    CHECK(fidelity_to_pure(out.state, direct) > 1.0 - 1e-12);
}

TEST_CASE("execution is deterministic per seed and honours overrides") {
    const char* text = "set cutoffs 4 4\nset mode sampled\nset shots 200\nset seed 5\n"
                       "PREP fock 1 a\nR pi/2 0\nCBS tau 0\nR pi/2 0\nMEASURE\n";
    SeqOutcome a = execute_sequence(text);
    SeqOutcome b = execute_sequence(text);
    CHECK(a.spin == b.spin);
    CHECK(a.mode_population == b.mode_population);
    CHECK(a.spin_se[1] > 0.0);

    // a different seed moves the finite-shot estimate
    SeqOverrides ov;
    ov.seed = 6;
    SeqOutcome c = execute_sequence(parse_sequence(text), ov);
    CHECK((c.spin != a.spin || c.mode_population != a.mode_population));

    // overrides can silence the noise and force exact readout
    SeqOverrides quiet;
    quiet.noise = NoiseParams{};
    quiet.sampled = false;
    SeqOutcome exact = execute_sequence(
        parse_sequence("set cutoffs 4 4\nset noise heat_a 100\nset mode sampled\n"
                       "PREP fock 1 a\nMEASURE\n"),
        quiet);
    CHECK(exact.spin_se[1] == 0.0);
    CHECK(std::abs(exact.mode_population[0][1] - 1.0) < 1e-12);
}

TEST_CASE("echo setting selects the suppressed spin dephasing rate") {
    // spin superposition idling for 1 ms: the echoed program keeps more coherence
    const char* base = "set cutoffs 2 2\nset noise deph_spin 588.235294117647\n"
                       "set noise deph_spin_echo 142.857142857143\n";
    std::string plain = std::string(base) + "R pi/2 0\nWAIT 1ms\nR pi/2 pi\nMEASURE\n";
    std::string echoed = std::string(base) + "set echo on\nR pi/2 0\nWAIT 1ms\nR pi/2 pi\nMEASURE\n";
    double p_plain = execute_sequence(plain).spin[1];
    double p_echo = execute_sequence(echoed).spin[1];
    // full contrast would give P(e) = 0; dephasing pulls toward 1/2
    CHECK(p_plain > p_echo);
    CHECK(std::abs(p_plain - 0.5 * (1.0 - std::exp(-0.588235294117647))) < 1e-4);
    CHECK(std::abs(p_echo - 0.5 * (1.0 - std::exp(-0.142857142857143))) < 1e-4);
}
