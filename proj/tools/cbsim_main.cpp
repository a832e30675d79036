// Command-line driver: runs the built-in protocols or .seq files and writes a
// result bundle (result.json, config.json, result.csv) per invocation.

#include <CLI11.hpp>
#include <cbsim/cbsim.hpp>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace {

using cbsim::Cplx;
using cbsim::Json;

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
    if (flag) return *flag;
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

// "re" or "re,im" -> complex
Cplx parse_complex_flag(const std::string& text) {
    auto comma = text.find(',');
    auto to_d = [](std::string_view s) {
        double v = 0.0;
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
            throw CLI::ValidationError("expected a number, got '" + std::string(s) + "'");
        return v;
    };
    if (comma == std::string::npos) return Cplx(to_d(text), 0.0);
    return Cplx(to_d(std::string_view(text).substr(0, comma)),
                to_d(std::string_view(text).substr(comma + 1)));
}

// "start:stop:count" -> inclusive linear grid on the real axis
std::vector<Cplx> parse_alpha_grid(const std::string& text) {
    auto c1 = text.find(':');
    auto c2 = text.find(':', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
        throw CLI::ValidationError("alpha grid must be start:stop:count, got '" + text + "'");
    double start = 0.0, stop = 0.0;
    long long count = 0;
    auto parse = [&](std::string_view s, auto& out) {
        auto res = std::from_chars(s.data(), s.data() + s.size(), out);
        if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
            throw CLI::ValidationError("bad grid field '" + std::string(s) + "'");
    };
    std::string_view sv(text);
    parse(sv.substr(0, c1), start);
    parse(sv.substr(c1 + 1, c2 - c1 - 1), stop);
    parse(sv.substr(c2 + 1), count);
    if (count < 1) throw CLI::ValidationError("alpha grid needs count >= 1");
    std::vector<Cplx> grid;
    grid.reserve(static_cast<size_t>(count));
    for (long long i = 0; i < count; ++i) {
        double a = count == 1 ? start : start + (stop - start) * static_cast<double>(i) / (count - 1);
        grid.emplace_back(a, 0.0);
    }
    return grid;
}

// "n:tau[,n:tau...]" -> coherence-time list for the calibration fit
std::vector<std::pair<int, double>> parse_tau_list(const std::string& text) {
    std::vector<std::pair<int, double>> out;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        std::string_view item(text.data() + pos, comma - pos);
        size_t colon = item.find(':');
        if (colon == std::string_view::npos)
            throw CLI::ValidationError("expected n:tau, got '" + std::string(item) + "'");
        int n = 0;
        double tau = 0.0;
        auto r1 = std::from_chars(item.data(), item.data() + colon, n);
        auto rest = item.substr(colon + 1);
        auto r2 = std::from_chars(rest.data(), rest.data() + rest.size(), tau);
        if (r1.ec != std::errc{} || r2.ec != std::errc{} || r2.ptr != rest.data() + rest.size())
            throw CLI::ValidationError("bad n:tau item '" + std::string(item) + "'");
        out.emplace_back(n, tau);
        pos = comma + 1;
    }
    if (out.empty()) throw CLI::ValidationError("empty coherence-time list");
    return out;
}

std::string complex_to_flag(Cplx z) {
    std::string s = cbsim::format_double(z.real());
    if (z.imag() != 0.0) s += "," + cbsim::format_double(z.imag());
    return s;
}

// Options shared by every subcommand.
struct CommonOpts {
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed{};
    std::string profile_path{};
    bool sampled = false;
    bool exact = false;
    bool noiseless = false;
    std::optional<long long> shots{};

    std::uint64_t resolved_seed = 0;
    cbsim::NoiseParams noise{};

    void attach(CLI::App* cmd) {
        cmd->add_option("--out", out_dir, "Output directory for result.json / result.csv / config.json")
            ->capture_default_str();
        cmd->add_option("--seed", seed, "RNG seed (default: from system entropy; always recorded)");
        cmd->add_option("--noise", profile_path, "Noise profile file (key = value lines)");
        cmd->add_flag("--sampled", sampled, "Sample finite shots instead of exact expectation values");
        cmd->add_flag("--exact", exact, "Exact expectation values (the default; overrides --sampled)")
            ->excludes("--sampled");
        cmd->add_flag("--noiseless", noiseless, "Ignore any noise profile and run closed-system dynamics")
            ->excludes("--noise");
        cmd->add_option("--shots", shots, "Shots per setting in sampled mode");
    }

    void resolve() {
        resolved_seed = resolve_seed(seed);
        if (exact) sampled = false;
        if (!profile_path.empty() && !noiseless) noise = cbsim::load_profile(profile_path);
    }

    cbsim::ShotPlan plan(long long default_shots) const {
        cbsim::ShotPlan p;
        p.sampled = sampled;
        p.shots_per_point = shots.value_or(default_shots);
        p.seed = resolved_seed;
        return p;
    }

    Json config_json() const {
        return Json{{"out", out_dir},
                    {"seed", resolved_seed},
                    {"noise_profile", profile_path},
                    {"noise", noise},
                    {"sampled", sampled},
                    {"shots", shots.has_value() ? Json(*shots) : Json(nullptr)}};
    }
};

void write_bundle(const CommonOpts& common, const std::string& command, Json config, const Json& results,
                  const cbsim::CsvTable& table) {
    std::filesystem::create_directories(common.out_dir);
    cbsim::write_result_bundle(common.out_dir, command, config, results, table);
}

int run_fredkin(const CommonOpts& common, bool echoed, double heating_scale,
                std::optional<double> detect_err) {
    cbsim::FredkinConfig cfg;
    cfg.echoed = echoed;
    cfg.noise = common.noise.scaled_heating(heating_scale);
    if (detect_err) cfg.noise.detect_err = *detect_err;
    cfg.plan = common.plan(10000);
    cbsim::FredkinResult res = cbsim::fredkin_table(cfg);

    Json config = common.config_json();
    config["echo"] = echoed;
    config["heating_scale"] = heating_scale;
    config["detect_err"] =
        detect_err.has_value() ? Json(*detect_err) : Json(common.noise.detect_err);

    cbsim::CsvTable table{{"input", "outcome", "probability", "se"}};
    for (int i = 0; i < res.table.rows(); ++i)
        for (int j = 0; j < res.table.cols(); ++j)
            table.add_row({res.labels[i], res.labels[j], cbsim::format_double(res.table(i, j)),
                           cbsim::format_double(res.table_se(i, j))});
    write_bundle(common, "fredkin", config, Json(res), table);
    std::cout << "fredkin: success probability " << cbsim::format_double(res.success) << "\n";
    return 0;
}

int run_swaptest(const CommonOpts& common, int n, int m, bool echoed, int phases) {
    cbsim::SwapTestConfig cfg;
    cfg.psi = cbsim::PrepRecipe::fock(n, cbsim::Mode::a);
    cfg.reference_n = m;
    cfg.phase_count = phases;
    cfg.echoed = echoed;
    cfg.noise = common.noise;
    cfg.plan = common.plan(300);
    cbsim::SwapTestResult res = cbsim::swap_test(cfg);

    Json config = common.config_json();
    config["n"] = n;
    config["m"] = m;
    config["echo"] = echoed;
    config["phases"] = phases;

    cbsim::CsvTable table{{"phase", "p_mapped", "p_excited", "se"}};
    for (size_t k = 0; k < res.phases.size(); ++k)
        table.add_row({cbsim::format_double(res.phases[k]), cbsim::format_double(res.p_mapped[k]),
                       cbsim::format_double(res.p_excited[k]),
                       cbsim::format_double(res.se.empty() ? 0.0 : res.se[k])});
    write_bundle(common, "swaptest", config, Json(res), table);
    std::cout << "swaptest: |<" << m << "|" << n
              << ">|^2 = " << cbsim::format_double(res.overlap_sq) << "\n";
    return 0;
}

int run_overlap(const CommonOpts& common, int n_max, bool echoed, int phases) {
    cbsim::OverlapMatrixConfig cfg;
    cfg.n_max = n_max;
    cfg.phase_count = phases;
    cfg.echoed = echoed;
    cfg.noise = common.noise;
    cfg.plan = common.plan(300);
    cbsim::OverlapMatrixResult res = cbsim::overlap_matrix(cfg);

    Json config = common.config_json();
    config["n_max"] = n_max;
    config["echo"] = echoed;
    config["phases"] = phases;

    cbsim::CsvTable table{{"n", "m", "overlap_sq", "se"}};
    for (int i = 0; i <= n_max; ++i)
        for (int j = 0; j <= n_max; ++j)
            table.add_row({std::to_string(i), std::to_string(j),
                           cbsim::format_double(res.overlap_sq(i, j)),
                           cbsim::format_double(res.overlap_sq_se(i, j))});
    write_bundle(common, "overlap", config, Json(res), table);
    std::cout << "overlap: " << (n_max + 1) << "x" << (n_max + 1) << " matrix written\n";
    return 0;
}

int run_coherent(const CommonOpts& common, const std::string& alpha_flag, int m_max, bool echoed,
                 int phases, std::optional<int> cutoff) {
    cbsim::CoherentConfig cfg;
    cfg.alpha = parse_complex_flag(alpha_flag);
    cfg.m_max = m_max;
    cfg.phase_count = phases;
    cfg.echoed = echoed;
    cfg.noise = common.noise;
    cfg.plan = common.plan(500);
    if (cutoff) cfg.layout = cbsim::ModeLayout{*cutoff, *cutoff};
    cbsim::CoherentResult res = cbsim::reconstruct_coherent(cfg);

    Json config = common.config_json();
    config["alpha"] = complex_to_flag(cfg.alpha);
    config["m_max"] = m_max;
    config["echo"] = echoed;
    config["phases"] = phases;
    config["cutoff"] = cutoff.has_value() ? Json(*cutoff) : Json(nullptr);

    cbsim::CsvTable table{{"m", "population", "se"}};
    for (size_t k = 0; k < res.populations.size(); ++k)
        table.add_row({std::to_string(k), cbsim::format_double(res.populations[k]),
                       cbsim::format_double(res.populations_se.empty() ? 0.0 : res.populations_se[k])});
    write_bundle(common, "coherent", config, Json(res), table);
    std::cout << "coherent: fitted |alpha|^2 = " << cbsim::format_double(res.fit.mean) << " +/- "
              << cbsim::format_double(res.fit.se) << "\n";
    return 0;
}

int run_wigner(const CommonOpts& common, std::optional<int> fock, const std::string& coherent_flag,
               const std::string& grid_flag, bool echoed, bool mixture_fit, int mixture_nmax) {
    cbsim::WignerConfig cfg;
    if (fock && !coherent_flag.empty())
        throw CLI::ValidationError("choose either --fock or --coherent, not both");
    if (!coherent_flag.empty())
        cfg.state = cbsim::PrepRecipe::coherent(parse_complex_flag(coherent_flag), cbsim::Mode::a);
    else
        cfg.state = cbsim::PrepRecipe::fock(fock.value_or(0), cbsim::Mode::a);
    cfg.alphas = parse_alpha_grid(grid_flag);
    cfg.echoed = echoed;
    cfg.noise = common.noise;
    cfg.plan = common.plan(600);
    cbsim::WignerScanResult res = cbsim::wigner_scan(cfg);

    Json config = common.config_json();
    config["state"] = cfg.state;
    config["alphas"] = grid_flag;
    config["echo"] = echoed;

    Json results(res);
    if (mixture_fit) results["mixture"] = cbsim::fit_wigner_mixture(res.points, mixture_nmax);

    cbsim::CsvTable table{{"alpha_re", "alpha_im", "w", "se", "p_even"}};
    for (size_t k = 0; k < res.points.size(); ++k)
        table.add_row({cbsim::format_double(res.points[k].alpha.real()),
                       cbsim::format_double(res.points[k].alpha.imag()),
                       cbsim::format_double(res.points[k].w), cbsim::format_double(res.points[k].se),
                       cbsim::format_double(res.p_even[k])});
    write_bundle(common, "wigner", config, results, table);
    std::cout << "wigner: " << res.points.size() << " points written\n";
    return 0;
}

int run_noon(const CommonOpts& common, int n, bool echoed, bool tomography) {
    cbsim::NoonConfig cfg;
    cfg.n = n;
    cfg.echoed = echoed;
    cfg.noise = common.noise;
    cbsim::HybridState state = cbsim::generate_noon(cfg);
    cbsim::NoonMetrics metrics = cbsim::noon_state_metrics(state, n);

    Json config = common.config_json();
    config["n"] = n;
    config["echo"] = echoed;
    config["tomography"] = tomography;

    Json results{{"metrics", metrics}};
    cbsim::CsvTable table{{"quantity", "value", "se"}};
    table.add_row({"fidelity", cbsim::format_double(metrics.fidelity), "0"});
    table.add_row({"fisher", cbsim::format_double(metrics.fisher), "0"});
    table.add_row({"pair_population", cbsim::format_double(metrics.p_n0 + metrics.p_0n), "0"});
    table.add_row({"coherence", cbsim::format_double(metrics.coherence), "0"});
    if (tomography) {
        cbsim::JsbProbeConfig dia;
        dia.plan = common.plan(300);
        cbsim::NoonOffdiagConfig off;
        off.plan = common.plan(300);
        cbsim::NoonTomographyResult tomo = cbsim::noon_tomography(state, n, dia, off);
        results["tomography"] = tomo;
        table.add_row({"tomography_fidelity", cbsim::format_double(tomo.fidelity),
                       cbsim::format_double(tomo.offdiagonals.coherence_se)});
        table.add_row({"tomography_fisher", cbsim::format_double(tomo.fisher), "0"});
    }
    write_bundle(common, "noon", config, results, table);
    std::cout << "noon: F = " << cbsim::format_double(metrics.fidelity)
              << ", F_Q = " << cbsim::format_double(metrics.fisher) << "\n";
    return 0;
}

int run_seq_file(const CommonOpts& common, const std::string& path) {
    std::string text = cbsim::read_text_file(path);
    cbsim::SeqProgram prog = cbsim::parse_sequence(text);
    cbsim::SeqOverrides ov;
    if (!common.profile_path.empty()) ov.noise = common.noise;
    if (common.noiseless) ov.noise = cbsim::NoiseParams{};
    if (common.sampled) ov.sampled = true;
    if (common.exact) ov.sampled = false;
    if (common.shots) ov.shots = *common.shots;
    ov.seed = common.resolved_seed;
    cbsim::SeqOutcome outcome = cbsim::execute_sequence(prog, ov);

    Json config = common.config_json();
    config["file"] = path;
    config["program"] = cbsim::pretty_print(prog);

    cbsim::CsvTable table{{"quantity", "mode", "index", "value", "se"}};
    table.add_row({"p_excited", "", "", cbsim::format_double(outcome.spin[1]),
                   cbsim::format_double(outcome.spin_se[1])});
    const char* names = "abc";
    for (size_t m = 0; m < outcome.mode_population.size(); ++m) {
        for (size_t k = 0; k < outcome.mode_population[m].size(); ++k)
            table.add_row({"population", std::string(1, names[m]), std::to_string(k),
                           cbsim::format_double(outcome.mode_population[m][k]),
                           cbsim::format_double(outcome.mode_population_se[m][k])});
        table.add_row({"parity", std::string(1, names[m]), "",
                       cbsim::format_double(outcome.mode_parity[m]), "0"});
    }
    write_bundle(common, "run", config, Json(outcome), table);
    std::cout << "run: " << path << " executed, P(e) = " << cbsim::format_double(outcome.spin[1])
              << "\n";
    return 0;
}

int run_calibrate(const CommonOpts& common, const std::string& mode_a, const std::string& mode_b) {
    auto taus_a = parse_tau_list(mode_a);
    auto taus_b = parse_tau_list(mode_b);
    double gamma_a = cbsim::calibrate_motional_dephasing(taus_a);
    double gamma_b = cbsim::calibrate_motional_dephasing(taus_b);

    Json config = common.config_json();
    config["mode_a"] = mode_a;
    config["mode_b"] = mode_b;

    Json results{{"gamma_a", gamma_a}, {"gamma_b", gamma_b}};
    cbsim::CsvTable table{{"mode", "gamma", "tau1_pred", "tau2_pred", "tau3_pred"}};
    for (auto [name, g] : {std::pair<const char*, double>{"a", gamma_a}, {"b", gamma_b}}) {
        table.add_row({name, cbsim::format_double(g),
                       cbsim::format_double(cbsim::predicted_coherence_time(g, 1)),
                       cbsim::format_double(cbsim::predicted_coherence_time(g, 2)),
                       cbsim::format_double(cbsim::predicted_coherence_time(g, 3))});
        results[std::string("tau2_pred_") + name] = cbsim::predicted_coherence_time(g, 2);
    }
    write_bundle(common, "calibrate", config, results, table);
    std::cout << "calibrate: gamma_a = " << cbsim::format_double(gamma_a)
              << " 1/s, gamma_b = " << cbsim::format_double(gamma_b) << " 1/s\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hybrid spin-boson conditional-beam-splitter gate simulator"};
    app.require_subcommand(1);

    CommonOpts fredkin_opts, swap_opts, overlap_opts, coherent_opts, wigner_opts, noon_opts, run_opts,
        cal_opts;

    auto* fredkin = app.add_subcommand("fredkin", "Fredkin-gate truth table with 3-step readout");
    fredkin_opts.attach(fredkin);
    bool fredkin_echo = false;
    double heating_scale = 1.0;
    std::optional<double> detect_err;
    fredkin->add_flag("--echo", fredkin_echo, "Use the spin-echo gate variant");
    fredkin->add_option("--heating-scale", heating_scale, "Scale factor on both heating rates")
        ->capture_default_str();
    fredkin->add_option("--detect-err", detect_err, "Override detection error probability");

    auto* swaptest = app.add_subcommand("swaptest", "Swap-test overlap of Fock |n> against |m>");
    swap_opts.attach(swaptest);
    int swap_n = 1, swap_m = 1, swap_phases = 24;
    bool swap_echo = false;
    swaptest->add_option("--n", swap_n, "Fock state in mode a")->capture_default_str();
    swaptest->add_option("--m", swap_m, "Fock reference in mode b")->capture_default_str();
    swaptest->add_option("--phases", swap_phases, "Number of analysis phases")->capture_default_str();
    swaptest->add_flag("--echo", swap_echo, "Use the spin-echo sequence");

    auto* overlap = app.add_subcommand("overlap", "Pairwise overlap matrix of Fock states");
    overlap_opts.attach(overlap);
    int overlap_nmax = 5, overlap_phases = 24;
    bool overlap_echo = false;
    overlap->add_option("--n-max", overlap_nmax, "Largest Fock index")->capture_default_str();
    overlap->add_option("--phases", overlap_phases, "Number of analysis phases")->capture_default_str();
    overlap->add_flag("--echo", overlap_echo, "Use the spin-echo sequence");

    auto* coherent = app.add_subcommand("coherent", "Fock-population reconstruction of a coherent state");
    coherent_opts.attach(coherent);
    std::string coherent_alpha = "1.3416407864998738";  // |alpha|^2 = 1.8
    int coherent_mmax = 8, coherent_phases = 24;
    bool coherent_echo = false;
    std::optional<int> coherent_cutoff;
    coherent->add_option("--alpha", coherent_alpha, "Coherent amplitude re[,im]")->capture_default_str();
    coherent->add_option("--m-max", coherent_mmax, "Largest Fock reference probed")->capture_default_str();
    coherent->add_option("--phases", coherent_phases, "Number of analysis phases")->capture_default_str();
    coherent->add_option("--cutoff", coherent_cutoff, "Override the mode cutoff");
    coherent->add_flag("--echo", coherent_echo, "Use the spin-echo sequence");

    auto* wigner = app.add_subcommand("wigner", "Displaced-parity Wigner scan");
    wigner_opts.attach(wigner);
    std::optional<int> wigner_fock;
    std::string wigner_coherent{};
    std::string wigner_grid = "0:2.5:26";
    bool wigner_echo = false, wigner_mixture = false;
    int wigner_mixture_nmax = 6;
    wigner->add_option("--fock", wigner_fock, "Scan a Fock state |n>");
    wigner->add_option("--coherent", wigner_coherent, "Scan a coherent state re[,im]");
    wigner->add_option("--alphas", wigner_grid, "Displacement grid start:stop:count (real axis)")
        ->capture_default_str();
    wigner->add_flag("--echo", wigner_echo, "Use the spin-echo parity sequence");
    wigner->add_flag("--mixture-fit", wigner_mixture, "Fit the scan to a Fock Wigner mixture");
    wigner->add_option("--mixture-n-max", wigner_mixture_nmax, "Largest Fock index in the mixture fit")
        ->capture_default_str();

    auto* noon = app.add_subcommand("noon", "NOON-state generation and metrics");
    noon_opts.attach(noon);
    int noon_n = 1;
    bool noon_echo = false, noon_tomo = false;
    noon->add_option("--n", noon_n, "Target NOON quantum number")->capture_default_str();
    noon->add_flag("--echo", noon_echo, "Use the spin-echo generation sequence");
    noon->add_flag("--tomography", noon_tomo, "Also run the measurement-based tomography pipeline");

    auto* runcmd = app.add_subcommand("run", "Execute a .seq sequence file");
    run_opts.attach(runcmd);
    std::string seq_path;
    runcmd->add_option("file", seq_path, "Sequence file")->required();

    auto* calibrate = app.add_subcommand("calibrate", "Motional dephasing rates from coherence times");
    cal_opts.attach(calibrate);
    std::string cal_a = "1:5e-3,2:1.2e-3";
    std::string cal_b = "1:7e-3,2:1.4e-3";
    calibrate->add_option("--mode-a", cal_a, "Mode a coherence times n:tau_seconds[,...]")
        ->capture_default_str();
    calibrate->add_option("--mode-b", cal_b, "Mode b coherence times n:tau_seconds[,...]")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(fredkin)) {
            fredkin_opts.resolve();
            return run_fredkin(fredkin_opts, fredkin_echo, heating_scale, detect_err);
        }
        if (app.got_subcommand(swaptest)) {
            swap_opts.resolve();
            return run_swaptest(swap_opts, swap_n, swap_m, swap_echo, swap_phases);
        }
        if (app.got_subcommand(overlap)) {
            overlap_opts.resolve();
            return run_overlap(overlap_opts, overlap_nmax, overlap_echo, overlap_phases);
        }
        if (app.got_subcommand(coherent)) {
            coherent_opts.resolve();
            return run_coherent(coherent_opts, coherent_alpha, coherent_mmax, coherent_echo,
                                coherent_phases, coherent_cutoff);
        }
        if (app.got_subcommand(wigner)) {
            wigner_opts.resolve();
            return run_wigner(wigner_opts, wigner_fock, wigner_coherent, wigner_grid, wigner_echo,
                              wigner_mixture, wigner_mixture_nmax);
        }
        if (app.got_subcommand(noon)) {
            noon_opts.resolve();
            return run_noon(noon_opts, noon_n, noon_echo, noon_tomo);
        }
        if (app.got_subcommand(runcmd)) {
            run_opts.resolve();
            return run_seq_file(run_opts, seq_path);
        }
        if (app.got_subcommand(calibrate)) {
            cal_opts.resolve();
            return run_calibrate(cal_opts, cal_a, cal_b);
        }
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
