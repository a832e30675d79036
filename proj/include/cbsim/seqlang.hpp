#pragma once
// Text format for pulse sequences. A program is a header of `set` lines,
// followed by PREP lines, then gate instructions, optionally closed by one
// MEASURE. `#` starts a comment. Parsing reports line/column positions;
// pretty_print emits a canonical form whose reparse reproduces the program
// exactly (shortest round-trip numerals, symbolic pi fractions only when the
// value matches one exactly).
//
// Executed programs lower onto the same Step list and run_sequence call the
// built-in protocols use.

#include "cbsim/engine.hpp"
#include "cbsim/protocols.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cbsim {

class SeqParseError : public std::runtime_error {
  public:
    SeqParseError(int line, int col, const std::string& message)
        : std::runtime_error("line " + std::to_string(line) + ", col " + std::to_string(col) + ": " +
                             message),
          line_(line),
          col_(col) {}
    int line() const { return line_; }
    int col() const { return col_; }

  private:
    int line_;
    int col_;
};

// A duration is either absolute seconds or a multiple of the gate time tau,
// which depends on xi; the tag survives parse/print round trips.
struct Duration {
    double value = 0.0;
    bool in_tau = false;

    double seconds(double xi) const { return in_tau ? value * (pi / (2.0 * xi)) : value; }
    bool operator==(const Duration&) const = default;
};

struct PrepInstr {
    PrepRecipe recipe;
    bool operator==(const PrepInstr&) const = default;
};
struct RotInstr {
    double theta = 0.0;
    double phi = 0.0;
    bool operator==(const RotInstr&) const = default;
};
struct SplitterInstr {
    bool conditional = true;
    Duration dur{};
    double upsilon = 0.0;
    Mode mode1 = Mode::a;
    Mode mode2 = Mode::b;
    bool operator==(const SplitterInstr&) const = default;
};
struct DispInstr {
    Cplx alpha{0.0, 0.0};
    Mode mode = Mode::a;
    bool operator==(const DispInstr&) const = default;
};
struct SidebandInstr {
    SidebandKind kind = SidebandKind::blue;
    Mode mode = Mode::a;
    bool operator==(const SidebandInstr&) const = default;
};
struct JsbInstr {
    double omega0 = 0.0;
    Duration dur{};
    bool operator==(const JsbInstr&) const = default;
};
struct WaitInstr {
    Duration dur{};
    bool operator==(const WaitInstr&) const = default;
};
struct MeasureInstr {
    bool operator==(const MeasureInstr&) const = default;
};

using SeqInstr = std::variant<PrepInstr, RotInstr, SplitterInstr, DispInstr, SidebandInstr, JsbInstr,
                              WaitInstr, MeasureInstr>;

struct SeqSettings {
    ModeLayout layout{8, 8};
    double xi = default_xi;
    NoiseParams noise{};
    bool sampled = false;
    long long shots = 300;
    std::optional<std::uint64_t> seed{};
    bool echoed = false;

    bool operator==(const SeqSettings&) const = default;
};

struct SeqProgram {
    SeqSettings settings;
    std::vector<SeqInstr> instructions;

    bool has_measure() const {
        return !instructions.empty() && std::holds_alternative<MeasureInstr>(instructions.back());
    }
    bool operator==(const SeqProgram&) const = default;
};

// ---------------------------------------------------------------------------
// Parsing

namespace seqdetail {

struct Token {
    std::string text;
    int line = 0;
    int col = 0;
};

inline std::vector<std::vector<Token>> tokenize(std::string_view text) {
    std::vector<std::vector<Token>> lines;
    int line_no = 1;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.size() - pos
                                                                               : eol - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        size_t hash = line.find('#');
        if (hash != std::string_view::npos) line = line.substr(0, hash);
        std::vector<Token> toks;
        size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
            size_t start = i;
            while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
            if (i > start)
                toks.push_back(Token{std::string(line.substr(start, i - start)), line_no,
                                     static_cast<int>(start) + 1});
        }
        if (!toks.empty()) lines.push_back(std::move(toks));
        if (eol == std::string_view::npos) break;
        pos = eol + 1;
        ++line_no;
    }
    return lines;
}

inline double parse_double(const Token& t, const char* what) {
    double v = 0.0;
    const char* b = t.text.data();
    const char* e = b + t.text.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e)
        throw SeqParseError(t.line, t.col, std::string(what) + ": cannot parse number '" + t.text + "'");
    return v;
}

inline long long parse_int(const Token& t, const char* what) {
    long long v = 0;
    const char* b = t.text.data();
    const char* e = b + t.text.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e)
        throw SeqParseError(t.line, t.col, std::string(what) + ": cannot parse integer '" + t.text + "'");
    return v;
}

inline std::uint64_t parse_u64(const Token& t, const char* what) {
    std::uint64_t v = 0;
    const char* b = t.text.data();
    const char* e = b + t.text.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e)
        throw SeqParseError(t.line, t.col,
                            std::string(what) + ": cannot parse unsigned integer '" + t.text + "'");
    return v;
}

// Angles: plain number, or [sign][coef]pi[/div], e.g. pi, -pi/2, 3pi/4, 0.5pi.
inline double parse_angle(const Token& t) {
    const std::string& s = t.text;
    size_t at = s.find("pi");
    if (at == std::string::npos) return parse_double(t, "angle");
    std::string prefix = s.substr(0, at);
    std::string suffix = s.substr(at + 2);
    double coef = 1.0;
    if (prefix == "-") {
        coef = -1.0;
    } else if (!prefix.empty()) {
        Token pt{prefix, t.line, t.col};
        coef = parse_double(pt, "angle coefficient");
    }
    double result = coef * pi;
    if (!suffix.empty()) {
        if (suffix[0] != '/')
            throw SeqParseError(t.line, t.col, "angle: expected '/denominator' after pi in '" + s + "'");
        Token dt{suffix.substr(1), t.line, t.col + static_cast<int>(at) + 3};
        double div = parse_double(dt, "angle denominator");
        if (div == 0.0) throw SeqParseError(t.line, t.col, "angle: division by zero");
        result /= div;
    }
    return result;
}

// Durations: [coef]tau, or <number><unit> with unit in {s, ms, us, ns}.
inline Duration parse_duration(const Token& t) {
    const std::string& s = t.text;
    if (s.size() >= 3 && s.compare(s.size() - 3, 3, "tau") == 0) {
        std::string prefix = s.substr(0, s.size() - 3);
        double coef = 1.0;
        if (!prefix.empty()) {
            Token pt{prefix, t.line, t.col};
            coef = parse_double(pt, "duration coefficient");
        }
        if (coef < 0.0) throw SeqParseError(t.line, t.col, "duration: negative time");
        return Duration{coef, true};
    }
    static const std::pair<const char*, double> units[] = {
        {"ns", 1e-9}, {"us", 1e-6}, {"ms", 1e-3}, {"s", 1.0}};
    for (const auto& [suffix, scale] : units) {
        size_t len = std::string_view(suffix).size();
        if (s.size() > len && s.compare(s.size() - len, len, suffix) == 0) {
            Token pt{s.substr(0, s.size() - len), t.line, t.col};
            double v = parse_double(pt, "duration") * scale;
            if (v < 0.0) throw SeqParseError(t.line, t.col, "duration: negative time");
            return Duration{v, false};
        }
    }
    throw SeqParseError(t.line, t.col,
                        "duration '" + s + "' needs a unit suffix (s/ms/us/ns) or 'tau'");
}

// Complex literals: 1.5, -2i, 1.5+0.2i, 1.5-0.2i, i, -i.
inline Cplx parse_complex(const Token& t) {
    const std::string& s = t.text;
    if (s.empty()) throw SeqParseError(t.line, t.col, "empty complex literal");
    if (s == "i") return Cplx(0.0, 1.0);
    if (s == "-i") return Cplx(0.0, -1.0);
    if (s.back() != 'i') return Cplx(parse_double(t, "complex"), 0.0);
    std::string body = s.substr(0, s.size() - 1);
    size_t split = std::string::npos;
    for (size_t k = 1; k < body.size(); ++k) {
        if ((body[k] == '+' || body[k] == '-') && body[k - 1] != 'e' && body[k - 1] != 'E') split = k;
    }
    if (split == std::string::npos) {
        Token it{body, t.line, t.col};
        return Cplx(0.0, parse_double(it, "imaginary part"));
    }
    Token rt{body.substr(0, split), t.line, t.col};
    std::string imag = body.substr(split);
    double iv;
    if (imag == "+")
        iv = 1.0;
    else if (imag == "-")
        iv = -1.0;
    else {
        int col = t.col + static_cast<int>(split);
        // from_chars rejects an explicit plus sign, so strip the separator
        if (imag.front() == '+') {
            imag.erase(0, 1);
            ++col;
        }
        Token it{imag, t.line, col};
        iv = parse_double(it, "imaginary part");
    }
    return Cplx(parse_double(rt, "real part"), iv);
}

inline Mode parse_mode(const Token& t, const ModeLayout& layout) {
    if (t.text.size() == 1) {
        char c = t.text[0];
        if (c >= 'a' && c <= 'c') {
            Mode m = static_cast<Mode>(c - 'a');
            if (!layout.has_mode(m))
                throw SeqParseError(t.line, t.col,
                                    "mode '" + t.text + "' is outside the configured layout");
            return m;
        }
    }
    throw SeqParseError(t.line, t.col, "expected a mode name (a, b or c), got '" + t.text + "'");
}

inline void expect_argc(const std::vector<Token>& toks, size_t argc, const char* usage) {
    if (toks.size() != argc + 1)
        throw SeqParseError(toks[0].line, toks[0].col,
                            "expected " + std::to_string(argc) + " argument(s): usage '" + usage + "'");
}

}  // namespace seqdetail

inline SeqProgram parse_sequence(std::string_view text) {
    using seqdetail::Token;
    SeqProgram prog;
    auto lines = seqdetail::tokenize(text);

    enum Phase { header, preps, gates, done };
    Phase phase = header;
    std::set<Mode> prepped;

    auto upper = [](std::string s) {
        for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        return s;
    };

    for (const auto& toks : lines) {
        const Token& head = toks[0];
        std::string op = upper(head.text);

        if (op == "SET") {
            if (phase != header)
                throw SeqParseError(head.line, head.col, "set lines must appear before instructions");
            if (toks.size() < 3)
                throw SeqParseError(head.line, head.col, "set needs a key and a value");
            const std::string& key = toks[1].text;
            if (key == "cutoffs") {
                std::vector<int> cuts;
                for (size_t k = 2; k < toks.size(); ++k)
                    cuts.push_back(static_cast<int>(seqdetail::parse_int(toks[k], "cutoff")));
                try {
                    prog.settings.layout = ModeLayout(cuts);
                } catch (const std::exception& ex) {
                    throw SeqParseError(toks[1].line, toks[1].col, ex.what());
                }
            } else if (key == "xi") {
                seqdetail::expect_argc(toks, 2, "set xi <rad/s>");
                double xi = seqdetail::parse_double(toks[2], "xi");
                if (xi <= 0.0) throw SeqParseError(toks[2].line, toks[2].col, "xi must be positive");
                prog.settings.xi = xi;
            } else if (key == "noise") {
                seqdetail::expect_argc(toks, 3, "set noise <param> <value>");
                const std::string& param = toks[2].text;
                double v = seqdetail::parse_double(toks[3], "noise value");
                NoiseParams& n = prog.settings.noise;
                if (param == "heat_a") n.heat_a = v;
                else if (param == "heat_b") n.heat_b = v;
                else if (param == "deph_spin") n.deph_spin = v;
                else if (param == "deph_spin_echo") n.deph_spin_echo = v;
                else if (param == "deph_mode_a") n.deph_mode_a = v;
                else if (param == "deph_mode_b") n.deph_mode_b = v;
                else if (param == "nbar_a") n.nbar_a = v;
                else if (param == "nbar_b") n.nbar_b = v;
                else if (param == "detect_err") n.detect_err = v;
                else if (param == "correlated_dephasing") n.correlated_dephasing = (v != 0.0);
                else
                    throw SeqParseError(toks[2].line, toks[2].col,
                                        "unknown noise parameter '" + param + "'");
                try {
                    n.validate();
                } catch (const std::exception& ex) {
                    throw SeqParseError(toks[3].line, toks[3].col, ex.what());
                }
            } else if (key == "shots") {
                seqdetail::expect_argc(toks, 2, "set shots <count>");
                long long v = seqdetail::parse_int(toks[2], "shots");
                if (v <= 0) throw SeqParseError(toks[2].line, toks[2].col, "shots must be positive");
                prog.settings.shots = v;
            } else if (key == "mode") {
                seqdetail::expect_argc(toks, 2, "set mode exact|sampled");
                if (toks[2].text == "exact") prog.settings.sampled = false;
                else if (toks[2].text == "sampled") prog.settings.sampled = true;
                else
                    throw SeqParseError(toks[2].line, toks[2].col,
                                        "mode must be 'exact' or 'sampled', got '" + toks[2].text + "'");
            } else if (key == "seed") {
                seqdetail::expect_argc(toks, 2, "set seed <uint64>");
                prog.settings.seed = seqdetail::parse_u64(toks[2], "seed");
            } else if (key == "echo") {
                seqdetail::expect_argc(toks, 2, "set echo on|off");
                if (toks[2].text == "on") prog.settings.echoed = true;
                else if (toks[2].text == "off") prog.settings.echoed = false;
                else
                    throw SeqParseError(toks[2].line, toks[2].col, "echo must be 'on' or 'off'");
            } else {
                throw SeqParseError(toks[1].line, toks[1].col, "unknown setting '" + key + "'");
            }
            continue;
        }

        if (phase == done)
            throw SeqParseError(head.line, head.col, "MEASURE must be the last instruction");
        const ModeLayout& layout = prog.settings.layout;

        if (op == "PREP") {
            if (phase == gates)
                throw SeqParseError(head.line, head.col, "PREP must precede gate instructions");
            phase = preps;
            if (toks.size() < 2) throw SeqParseError(head.line, head.col, "PREP needs a kind");
            const std::string& kind = toks[1].text;
            PrepRecipe recipe;
            if (kind == "fock") {
                seqdetail::expect_argc(toks, 3, "PREP fock <n> <mode>");
                int n = static_cast<int>(seqdetail::parse_int(toks[2], "fock n"));
                Mode m = seqdetail::parse_mode(toks[3], layout);
                if (n < 0 || n >= layout.cutoff(m))
                    throw SeqParseError(toks[2].line, toks[2].col,
                                        "fock n outside the cutoff of mode " +
                                            std::string(1, mode_name(m)));
                recipe = PrepRecipe::fock(n, m);
            } else if (kind == "coherent") {
                seqdetail::expect_argc(toks, 3, "PREP coherent <alpha> <mode>");
                recipe = PrepRecipe::coherent(seqdetail::parse_complex(toks[2]),
                                              seqdetail::parse_mode(toks[3], layout));
            } else if (kind == "thermal") {
                seqdetail::expect_argc(toks, 3, "PREP thermal <nbar> <mode>");
                double nbar = seqdetail::parse_double(toks[2], "nbar");
                if (nbar < 0.0) throw SeqParseError(toks[2].line, toks[2].col, "nbar must be >= 0");
                recipe = PrepRecipe::thermal(nbar, seqdetail::parse_mode(toks[3], layout));
            } else {
                throw SeqParseError(toks[1].line, toks[1].col,
                                    "unknown PREP kind '" + kind + "' (fock/coherent/thermal)");
            }
            if (!prepped.insert(recipe.mode).second)
                throw SeqParseError(head.line, head.col,
                                    std::string("mode ") + mode_name(recipe.mode) + " prepared twice");
            prog.instructions.push_back(PrepInstr{recipe});
            continue;
        }

        if (op == "MEASURE") {
            seqdetail::expect_argc(toks, 0, "MEASURE");
            phase = done;
            prog.instructions.push_back(MeasureInstr{});
            continue;
        }

        phase = gates;
        if (op == "R") {
            seqdetail::expect_argc(toks, 2, "R <theta> <phi>");
            prog.instructions.push_back(
                RotInstr{seqdetail::parse_angle(toks[1]), seqdetail::parse_angle(toks[2])});
        } else if (op == "CBS" || op == "BS") {
            if (toks.size() != 3 && toks.size() != 4)
                throw SeqParseError(head.line, head.col,
                                    "usage: " + op + " <duration> <phase> [<modepair>]");
            SplitterInstr instr;
            instr.conditional = (op == "CBS");
            instr.dur = seqdetail::parse_duration(toks[1]);
            instr.upsilon = seqdetail::parse_angle(toks[2]);
            if (toks.size() == 4) {
                const std::string& mp = toks[3].text;
                if (mp.size() != 2)
                    throw SeqParseError(toks[3].line, toks[3].col,
                                        "mode pair must be two letters, e.g. 'ab'");
                instr.mode1 = seqdetail::parse_mode(Token{mp.substr(0, 1), toks[3].line, toks[3].col},
                                                    layout);
                instr.mode2 = seqdetail::parse_mode(Token{mp.substr(1, 1), toks[3].line, toks[3].col + 1},
                                                    layout);
                if (instr.mode1 == instr.mode2)
                    throw SeqParseError(toks[3].line, toks[3].col, "mode pair must name two distinct modes");
            } else if (!layout.has_mode(Mode::b)) {
                throw SeqParseError(head.line, head.col,
                                    "beam splitter needs two modes in the layout");
            }
            prog.instructions.push_back(instr);
        } else if (op == "DISP") {
            seqdetail::expect_argc(toks, 2, "DISP <alpha> <mode>");
            prog.instructions.push_back(
                DispInstr{seqdetail::parse_complex(toks[1]), seqdetail::parse_mode(toks[2], layout)});
        } else if (op == "BSB" || op == "RSB") {
            seqdetail::expect_argc(toks, 1, op == "BSB" ? "BSB <mode>" : "RSB <mode>");
            prog.instructions.push_back(SidebandInstr{
                op == "BSB" ? SidebandKind::blue : SidebandKind::red,
                seqdetail::parse_mode(toks[1], layout)});
        } else if (op == "JSB") {
            seqdetail::expect_argc(toks, 2, "JSB <omega0> <duration>");
            double w0 = seqdetail::parse_double(toks[1], "omega0");
            if (w0 <= 0.0) throw SeqParseError(toks[1].line, toks[1].col, "omega0 must be positive");
            if (!layout.has_mode(Mode::b))
                throw SeqParseError(head.line, head.col, "JSB needs two modes in the layout");
            prog.instructions.push_back(JsbInstr{w0, seqdetail::parse_duration(toks[2])});
        } else if (op == "WAIT") {
            seqdetail::expect_argc(toks, 1, "WAIT <duration>");
            prog.instructions.push_back(WaitInstr{seqdetail::parse_duration(toks[1])});
        } else {
            throw SeqParseError(head.line, head.col, "unknown instruction '" + head.text + "'");
        }
    }
    return prog;
}

// ---------------------------------------------------------------------------
// Canonical printing

namespace seqdetail {

inline std::string fmt_num(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

// Symbolic pi fraction when the double matches (p * pi) / q exactly.
inline std::string fmt_angle(double x) {
    if (x == 0.0) return "0";
    for (int q : {1, 2, 3, 4, 6, 8, 12, 24}) {
        for (int p = -4 * q; p <= 4 * q; ++p) {
            if (p == 0) continue;
            if (x == (static_cast<double>(p) * pi) / static_cast<double>(q)) {
                std::string s = p < 0 ? "-" : "";
                if (std::abs(p) != 1) s += std::to_string(std::abs(p));
                s += "pi";
                if (q != 1) s += "/" + std::to_string(q);
                return s;
            }
        }
    }
    return fmt_num(x);
}

inline std::string fmt_duration(const Duration& d) {
    if (d.in_tau) return d.value == 1.0 ? "tau" : fmt_num(d.value) + "tau";
    return fmt_num(d.value) + "s";
}

inline std::string fmt_complex(Cplx z) {
    if (z.imag() == 0.0) return fmt_num(z.real());
    if (z.real() == 0.0) return fmt_num(z.imag()) + "i";
    std::string s = fmt_num(z.real());
    if (z.imag() >= 0.0) s += "+";
    return s + fmt_num(z.imag()) + "i";
}

inline std::string fmt_mode(Mode m) { return std::string(1, mode_name(m)); }

}  // namespace seqdetail

inline std::string pretty_print(const SeqProgram& prog) {
    using namespace seqdetail;
    const SeqSettings def{};
    const SeqSettings& s = prog.settings;
    std::string out;

    out += "set cutoffs";
    for (int c : s.layout.cutoffs) out += " " + std::to_string(c);
    out += "\n";
    if (s.xi != def.xi) out += "set xi " + fmt_num(s.xi) + "\n";
    const NoiseParams& n = s.noise;
    const NoiseParams nd{};
    if (n.heat_a != nd.heat_a) out += "set noise heat_a " + fmt_num(n.heat_a) + "\n";
    if (n.heat_b != nd.heat_b) out += "set noise heat_b " + fmt_num(n.heat_b) + "\n";
    if (n.deph_spin != nd.deph_spin) out += "set noise deph_spin " + fmt_num(n.deph_spin) + "\n";
    if (n.deph_spin_echo != nd.deph_spin_echo)
        out += "set noise deph_spin_echo " + fmt_num(n.deph_spin_echo) + "\n";
    if (n.deph_mode_a != nd.deph_mode_a) out += "set noise deph_mode_a " + fmt_num(n.deph_mode_a) + "\n";
    if (n.deph_mode_b != nd.deph_mode_b) out += "set noise deph_mode_b " + fmt_num(n.deph_mode_b) + "\n";
    if (n.nbar_a != nd.nbar_a) out += "set noise nbar_a " + fmt_num(n.nbar_a) + "\n";
    if (n.nbar_b != nd.nbar_b) out += "set noise nbar_b " + fmt_num(n.nbar_b) + "\n";
    if (n.detect_err != nd.detect_err) out += "set noise detect_err " + fmt_num(n.detect_err) + "\n";
    if (n.correlated_dephasing) out += "set noise correlated_dephasing 1\n";
    if (s.shots != def.shots) out += "set shots " + std::to_string(s.shots) + "\n";
    if (s.sampled) out += "set mode sampled\n";
    if (s.seed) out += "set seed " + std::to_string(*s.seed) + "\n";
    if (s.echoed) out += "set echo on\n";

    for (const SeqInstr& instr : prog.instructions) {
        std::visit(
            [&](const auto& in) {
                using T = std::decay_t<decltype(in)>;
                if constexpr (std::is_same_v<T, PrepInstr>) {
                    const PrepRecipe& r = in.recipe;
                    switch (r.kind) {
                        case PrepRecipe::Kind::fock:
                            out += "PREP fock " + std::to_string(r.n) + " " + fmt_mode(r.mode) + "\n";
                            break;
                        case PrepRecipe::Kind::coherent:
                            out += "PREP coherent " + fmt_complex(r.alpha) + " " + fmt_mode(r.mode) + "\n";
                            break;
                        case PrepRecipe::Kind::thermal:
                            out += "PREP thermal " + fmt_num(r.nbar) + " " + fmt_mode(r.mode) + "\n";
                            break;
                    }
                } else if constexpr (std::is_same_v<T, RotInstr>) {
                    out += "R " + fmt_angle(in.theta) + " " + fmt_angle(in.phi) + "\n";
                } else if constexpr (std::is_same_v<T, SplitterInstr>) {
                    out += std::string(in.conditional ? "CBS " : "BS ") + fmt_duration(in.dur) + " " +
                           fmt_angle(in.upsilon);
                    if (in.mode1 != Mode::a || in.mode2 != Mode::b)
                        out += " " + fmt_mode(in.mode1) + fmt_mode(in.mode2);
                    out += "\n";
                } else if constexpr (std::is_same_v<T, DispInstr>) {
                    out += "DISP " + fmt_complex(in.alpha) + " " + fmt_mode(in.mode) + "\n";
                } else if constexpr (std::is_same_v<T, SidebandInstr>) {
                    out += std::string(in.kind == SidebandKind::blue ? "BSB " : "RSB ") +
                           fmt_mode(in.mode) + "\n";
                } else if constexpr (std::is_same_v<T, JsbInstr>) {
                    out += "JSB " + fmt_num(in.omega0) + " " + fmt_duration(in.dur) + "\n";
                } else if constexpr (std::is_same_v<T, WaitInstr>) {
                    out += "WAIT " + fmt_duration(in.dur) + "\n";
                } else {
                    out += "MEASURE\n";
                }
            },
            instr);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Execution

struct SeqOverrides {
    std::optional<NoiseParams> noise{};
    std::optional<bool> sampled{};
    std::optional<long long> shots{};
    std::optional<std::uint64_t> seed{};
};

struct SeqOutcome {
    HybridState state;  // final state before any measurement sampling
    bool measured = false;
    std::array<double, 2> spin{0.0, 0.0};
    std::array<double, 2> spin_se{0.0, 0.0};
    std::vector<std::vector<double>> mode_population;
    std::vector<std::vector<double>> mode_population_se;
    std::vector<double> mode_parity;
    double leakage = 0.0;
};

inline SeqOutcome execute_sequence(const SeqProgram& prog, const SeqOverrides& ov = {}) {
    const SeqSettings& s = prog.settings;
    const ModeLayout& layout = s.layout;
    NoiseParams noise = ov.noise.value_or(s.noise);
    ShotPlan plan;
    plan.sampled = ov.sampled.value_or(s.sampled);
    plan.shots_per_point = ov.shots.value_or(s.shots);
    plan.seed = ov.seed ? *ov.seed : s.seed.value_or(0);

    std::vector<PrepRecipe> recipes;
    std::vector<Step> gate_steps;
    bool measured = false;
    for (const SeqInstr& instr : prog.instructions) {
        std::visit(
            [&](const auto& in) {
                using T = std::decay_t<decltype(in)>;
                if constexpr (std::is_same_v<T, PrepInstr>) {
                    recipes.push_back(in.recipe);
                } else if constexpr (std::is_same_v<T, RotInstr>) {
                    gate_steps.push_back(RotationStep{in.theta, in.phi});
                } else if constexpr (std::is_same_v<T, SplitterInstr>) {
                    CbsParams p;
                    p.xi = s.xi;
                    p.upsilon = in.upsilon;
                    p.mode1 = in.mode1;
                    p.mode2 = in.mode2;
                    p.duration = in.dur.seconds(s.xi);
                    gate_steps.push_back(CbsStep{p, in.conditional});
                } else if constexpr (std::is_same_v<T, DispInstr>) {
                    gate_steps.push_back(DisplaceStep{in.alpha, in.mode});
                } else if constexpr (std::is_same_v<T, SidebandInstr>) {
                    gate_steps.push_back(SidebandStep{in.kind, in.mode});
                } else if constexpr (std::is_same_v<T, JsbInstr>) {
                    JointSidebandParams p;
                    p.omega0 = in.omega0;
                    gate_steps.push_back(JsbStep{p, in.dur.seconds(s.xi)});
                } else if constexpr (std::is_same_v<T, WaitInstr>) {
                    gate_steps.push_back(WaitStep{in.dur.seconds(s.xi)});
                } else {
                    measured = true;
                }
            },
            instr);
    }

    InputPlan input = plan_input(recipes, layout, noise, s.echoed);
    Sequence seq;
    seq.echoed = s.echoed;
    seq.steps = input.steps;
    for (Step& st : gate_steps) seq.steps.push_back(st);

    RunOptions opt;
    opt.noise = noise;
    SeqOutcome out{run_sequence(input.initial, seq, opt)};
    out.leakage = out.state.leakage();
    if (!measured) return out;

    out.measured = true;
    PointEstimate pe = excited_estimate(out.state, noise, plan, 0);
    out.spin = {1.0 - pe.value, pe.value};
    out.spin_se = {pe.se, pe.se};
    for (int k = 0; k < layout.n_modes(); ++k) {
        Mode m = static_cast<Mode>(k);
        std::vector<double> dist = out.state.mode_distribution(m);
        double total = 0.0;
        for (double& p : dist) {
            p = std::max(p, 0.0);
            total += p;
        }
        if (total <= 0.0) throw std::runtime_error("execute_sequence: empty mode distribution");
        for (double& p : dist) p /= total;
        std::vector<double> se(dist.size(), 0.0);
        if (plan.sampled) {
            auto counts = sample_counts(dist, plan.shots_per_point,
                                        derive_stream(plan.seed, 1 + static_cast<std::uint64_t>(k)));
            for (size_t i = 0; i < dist.size(); ++i) {
                dist[i] = static_cast<double>(counts[i]) / static_cast<double>(plan.shots_per_point);
                se[i] = binomial_se(dist[i], plan.shots_per_point);
            }
        }
        double par = 0.0;
        for (size_t i = 0; i < dist.size(); ++i) par += (i % 2 ? -dist[i] : dist[i]);
        out.mode_population.push_back(std::move(dist));
        out.mode_population_se.push_back(std::move(se));
        out.mode_parity.push_back(par);
    }
    return out;
}

inline SeqOutcome execute_sequence(std::string_view text, const SeqOverrides& ov = {}) {
    return execute_sequence(parse_sequence(text), ov);
}

}  // namespace cbsim
