#pragma once
// File formats: noise profiles (key = value), result.json / config.json
// serialization, and CSV tables. All numeric output uses shortest round-trip
// formatting so identical runs produce byte-identical files.

#include "cbsim/noise.hpp"
#include "cbsim/protocols.hpp"
#include "cbsim/seqlang.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace cbsim {

using Json = nlohmann::ordered_json;

inline constexpr int schema_version = 1;

inline std::string format_double(double x) { return seqdetail::fmt_num(x); }

// ---------------------------------------------------------------------------
// Noise profiles: one `key = value` pair per line, `#` comments. Keys match
// NoiseParams fields; unknown keys are rejected so typos cannot silently
// disable a channel.

inline NoiseParams parse_profile(std::string_view text, const std::string& origin = "profile") {
    NoiseParams p;
    int line_no = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        std::string line(text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos));
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ss(line);
        std::string key, eq, value;
        if (!(ss >> key)) continue;  // blank line
        if (!(ss >> eq) || eq != "=" || !(ss >> value))
            throw std::runtime_error(origin + " line " + std::to_string(line_no) +
                                     ": expected 'key = value'");
        std::string rest;
        if (ss >> rest)
            throw std::runtime_error(origin + " line " + std::to_string(line_no) +
                                     ": trailing content '" + rest + "'");
        double v = 0.0;
        try {
            size_t used = 0;
            v = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
        } catch (const std::exception&) {
            throw std::runtime_error(origin + " line " + std::to_string(line_no) +
                                     ": cannot parse value '" + value + "'");
        }
        if (key == "heat_a") p.heat_a = v;
        else if (key == "heat_b") p.heat_b = v;
        else if (key == "deph_spin") p.deph_spin = v;
        else if (key == "deph_spin_echo") p.deph_spin_echo = v;
        else if (key == "deph_mode_a") p.deph_mode_a = v;
        else if (key == "deph_mode_b") p.deph_mode_b = v;
        else if (key == "nbar_a") p.nbar_a = v;
        else if (key == "nbar_b") p.nbar_b = v;
        else if (key == "detect_err") p.detect_err = v;
        else if (key == "correlated_dephasing") p.correlated_dephasing = (v != 0.0);
        else
            throw std::runtime_error(origin + " line " + std::to_string(line_no) + ": unknown key '" +
                                     key + "'");
    }
    p.validate();
    return p;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline NoiseParams load_profile(const std::string& path) {
    return parse_profile(read_text_file(path), path);
}

inline std::string profile_to_text(const NoiseParams& p) {
    std::string out;
    out += "heat_a = " + format_double(p.heat_a) + "\n";
    out += "heat_b = " + format_double(p.heat_b) + "\n";
    out += "deph_spin = " + format_double(p.deph_spin) + "\n";
    out += "deph_spin_echo = " + format_double(p.deph_spin_echo) + "\n";
    out += "deph_mode_a = " + format_double(p.deph_mode_a) + "\n";
    out += "deph_mode_b = " + format_double(p.deph_mode_b) + "\n";
    out += "nbar_a = " + format_double(p.nbar_a) + "\n";
    out += "nbar_b = " + format_double(p.nbar_b) + "\n";
    out += "detect_err = " + format_double(p.detect_err) + "\n";
    out += std::string("correlated_dephasing = ") + (p.correlated_dephasing ? "1" : "0") + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// JSON serialization (nlohmann ADL hooks)

inline void to_json(Json& j, const NoiseParams& p) {
    j = Json{{"heat_a", p.heat_a},
             {"heat_b", p.heat_b},
             {"deph_spin", p.deph_spin},
             {"deph_spin_echo", p.deph_spin_echo},
             {"deph_mode_a", p.deph_mode_a},
             {"deph_mode_b", p.deph_mode_b},
             {"nbar_a", p.nbar_a},
             {"nbar_b", p.nbar_b},
             {"detect_err", p.detect_err},
             {"correlated_dephasing", p.correlated_dephasing}};
}

inline void to_json(Json& j, const ShotPlan& p) {
    j = Json{{"sampled", p.sampled}, {"shots_per_point", p.shots_per_point}, {"seed", p.seed}};
}

inline void to_json(Json& j, const ModeLayout& l) { j = Json{{"cutoffs", l.cutoffs}}; }

inline void to_json(Json& j, const PrepRecipe& r) {
    switch (r.kind) {
        case PrepRecipe::Kind::fock:
            j = Json{{"kind", "fock"}, {"n", r.n}, {"mode", std::string(1, mode_name(r.mode))}};
            break;
        case PrepRecipe::Kind::coherent:
            j = Json{{"kind", "coherent"},
                     {"alpha_re", r.alpha.real()},
                     {"alpha_im", r.alpha.imag()},
                     {"mode", std::string(1, mode_name(r.mode))}};
            break;
        case PrepRecipe::Kind::thermal:
            j = Json{{"kind", "thermal"}, {"nbar", r.nbar}, {"mode", std::string(1, mode_name(r.mode))}};
            break;
    }
}

inline void to_json(Json& j, const SinusoidFit& f) {
    j = Json{{"offset", f.offset},         {"contrast", f.contrast},       {"phase", f.phase},
             {"se_offset", f.se_offset},   {"se_contrast", f.se_contrast}, {"se_phase", f.se_phase}};
}

inline Json matrix_to_json(const Eigen::MatrixXd& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void to_json(Json& j, const SwapTestResult& r) {
    j = Json{{"echoed", r.echoed},
             {"phases", r.phases},
             {"p_mapped", r.p_mapped},
             {"p_excited", r.p_excited},
             {"se", r.se},
             {"fit", r.fit},
             {"overlap_sq", r.overlap_sq},
             {"overlap_sq_se", r.overlap_sq_se}};
}

inline void to_json(Json& j, const OverlapMatrixResult& r) {
    j = Json{{"n_max", r.n_max},
             {"overlap_sq", matrix_to_json(r.overlap_sq)},
             {"overlap_sq_se", matrix_to_json(r.overlap_sq_se)}};
}

inline void to_json(Json& j, const PoissonFit& f) { j = Json{{"mean", f.mean}, {"se", f.se}}; }

inline void to_json(Json& j, const CoherentResult& r) {
    j = Json{{"populations", r.populations},
             {"populations_se", r.populations_se},
             {"mean_photon_fit", r.fit}};
}

inline void to_json(Json& j, const WignerScanResult& r) {
    Json pts = Json::array();
    for (const auto& p : r.points)
        pts.push_back(Json{{"alpha_re", p.alpha.real()},
                           {"alpha_im", p.alpha.imag()},
                           {"w", p.w},
                           {"se", p.se},
                           {"leakage", p.leakage},
                           {"flagged", p.flagged}});
    j = Json{{"points", std::move(pts)}, {"p_even", r.p_even}};
}

inline void to_json(Json& j, const MixtureFit& f) {
    j = Json{{"weights", f.weights}, {"se", f.se}};
}

inline void to_json(Json& j, const NoonMetrics& m) {
    j = Json{{"p_n0", m.p_n0},
             {"p_0n", m.p_0n},
             {"coherence", m.coherence},
             {"fidelity", m.fidelity},
             {"fisher", m.fisher}};
}

inline void to_json(Json& j, const NoonDiagonalsResult& r) {
    Json dv = Json::array();
    for (int d : r.d_values) dv.push_back(d);
    j = Json{{"times", r.times},
             {"p_excited", r.p_excited},
             {"se", r.se},
             {"d_values", std::move(dv)},
             {"amplitudes", r.amplitudes},
             {"amplitudes_se", r.amplitudes_se},
             {"constant", r.constant},
             {"pair_population", r.pair_population},
             {"pair_population_se", r.pair_population_se},
             {"degeneracy_correction", r.degeneracy_correction}};
}

inline void to_json(Json& j, const NoonOffdiagResult& r) {
    j = Json{{"upsilons", r.upsilons}, {"parity_a", r.parity_a}, {"parity_b", r.parity_b},
             {"se_a", r.se_a},         {"se_b", r.se_b},         {"fit_a", r.fit_a},
             {"fit_b", r.fit_b},       {"coherence", r.coherence}, {"coherence_se", r.coherence_se}};
}

inline void to_json(Json& j, const NoonTomographyResult& r) {
    j = Json{{"diagonals", r.diagonals},
             {"offdiagonals", r.offdiagonals},
             {"fidelity", r.fidelity},
             {"fisher", r.fisher}};
}

inline void to_json(Json& j, const FredkinResult& r) {
    j = Json{{"labels", r.labels},
             {"table", matrix_to_json(r.table)},
             {"table_se", matrix_to_json(r.table_se)},
             {"success", r.success},
             {"success_se", r.success_se}};
}

inline void to_json(Json& j, const SeqOutcome& o) {
    j = Json{{"measured", o.measured},
             {"spin", o.spin},
             {"spin_se", o.spin_se},
             {"mode_population", o.mode_population},
             {"mode_population_se", o.mode_population_se},
             {"mode_parity", o.mode_parity},
             {"leakage", o.leakage}};
}

// ---------------------------------------------------------------------------
// CSV tables: `# schema_version=1` comment line, header row, then data rows.

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row) {
        if (row.size() != columns.size())
            throw std::invalid_argument("CsvTable: row width does not match header");
        rows.push_back(std::move(row));
    }
};

inline std::string csv_to_string(const CsvTable& t) {
    std::string out = "# schema_version=" + std::to_string(schema_version) + "\n";
    for (size_t i = 0; i < t.columns.size(); ++i) {
        if (i) out += ",";
        out += t.columns[i];
    }
    out += "\n";
    for (const auto& row : t.rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out += ",";
            out += row[i];
        }
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Result bundle written by the command-line driver: result.json (schema
// version, full config echo, results), config.json (config alone), result.csv.

inline void write_result_bundle(const std::string& dir, const std::string& command, const Json& config,
                                const Json& results, const CsvTable& table) {
    Json top{{"schema_version", schema_version},
             {"command", command},
             {"config", config},
             {"results", results}};
    write_text_file(dir + "/result.json", top.dump(2) + "\n");
    Json cfg{{"schema_version", schema_version}, {"command", command}, {"config", config}};
    write_text_file(dir + "/config.json", cfg.dump(2) + "\n");
    write_text_file(dir + "/result.csv", csv_to_string(table));
}

}  // namespace cbsim
