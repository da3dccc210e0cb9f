#include "greybox/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

#include "greybox/errors.hpp"

namespace greybox {

namespace {

[[noreturn]] void fail(const std::string& origin, int line, const std::string& what) {
    throw ConfigError(origin + ":" + std::to_string(line) + ": " + what);
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '\\' && quoted) {
            ++i;
        } else if (line[i] == '"') {
            quoted = !quoted;
        } else if (line[i] == '#' && !quoted) {
            return line.substr(0, i);
        }
    }
    return line;
}

class ValueParser {
public:
    ValueParser(std::string text, std::string origin, int line)
        : s_(std::move(text)), origin_(std::move(origin)), line_(line) {}

    ConfigValue parse() {
        ConfigValue v = value();
        skip_space();
        if (pos_ != s_.size()) fail(origin_, line_, "unexpected text after value: '" + s_.substr(pos_) + "'");
        return v;
    }

private:
    void skip_space() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    ConfigValue value() {
        skip_space();
        if (pos_ >= s_.size()) fail(origin_, line_, "missing value");
        ConfigValue v;
        v.line = line_;
        const char c = s_[pos_];
        if (c == '"') {
            v.kind = ConfigValue::Kind::String;
            ++pos_;
            while (true) {
                if (pos_ >= s_.size()) fail(origin_, line_, "unterminated string");
                char ch = s_[pos_++];
                if (ch == '"') break;
                if (ch == '\\') {
                    if (pos_ >= s_.size()) fail(origin_, line_, "unterminated string");
                    const char esc = s_[pos_++];
                    switch (esc) {
                        case 'n': ch = '\n'; break;
                        case 't': ch = '\t'; break;
                        case '"': ch = '"'; break;
                        case '\\': ch = '\\'; break;
                        default: fail(origin_, line_, std::string("unknown escape \\") + esc);
                    }
                }
                v.text += ch;
            }
            return v;
        }
        if (c == '[') {
            v.kind = ConfigValue::Kind::Array;
            ++pos_;
            skip_space();
            if (pos_ < s_.size() && s_[pos_] == ']') {
                ++pos_;
                return v;
            }
            while (true) {
                v.items.push_back(value());
                skip_space();
                if (pos_ >= s_.size()) fail(origin_, line_, "unterminated array");
                if (s_[pos_] == ',') {
                    ++pos_;
                    skip_space();
                    if (pos_ < s_.size() && s_[pos_] == ']') {
                        ++pos_;
                        return v;
                    }
                    continue;
                }
                if (s_[pos_] == ']') {
                    ++pos_;
                    return v;
                }
                fail(origin_, line_, "expected ',' or ']' in array");
            }
        }
        std::size_t end = pos_;
        while (end < s_.size() && s_[end] != ',' && s_[end] != ']' && !std::isspace(static_cast<unsigned char>(s_[end])))
            ++end;
        const std::string tok = s_.substr(pos_, end - pos_);
        pos_ = end;
        if (tok == "true" || tok == "false") {
            v.kind = ConfigValue::Kind::Bool;
            v.boolean = tok == "true";
            v.text = tok;
            return v;
        }
        v.kind = ConfigValue::Kind::Number;
        v.text = tok;
        std::string clean;
        for (char ch : tok)
            if (ch != '_') clean += ch;
        if (clean == "inf" || clean == "+inf") {
            v.number = INFINITY;
            return v;
        }
        if (clean == "-inf") {
            v.number = -INFINITY;
            return v;
        }
        const char* first = clean.data();
        if (!clean.empty() && clean[0] == '+') ++first;
        const auto [ptr, ec] = std::from_chars(first, clean.data() + clean.size(), v.number);
        if (ec != std::errc() || ptr != clean.data() + clean.size() || clean.empty())
            fail(origin_, line_, "cannot parse value '" + tok + "'");
        v.text = clean;
        return v;
    }

    std::string s_;
    std::string origin_;
    int line_;
    std::size_t pos_ = 0;
};

int bracket_balance(const std::string& s) {
    int depth = 0;
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && quoted) {
            ++i;
        } else if (s[i] == '"') {
            quoted = !quoted;
        } else if (!quoted) {
            if (s[i] == '[') ++depth;
            if (s[i] == ']') --depth;
        }
    }
    return depth;
}

bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
    return true;
}

}  // namespace

std::vector<ConfigEntry> parse_config_entries(std::istream& in, const std::string& origin) {
    std::vector<ConfigEntry> out;
    std::string section;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[' && line.find('=') == std::string::npos) {
            if (line.back() != ']') fail(origin, line_no, "malformed section header");
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            if (!valid_name(section)) fail(origin, line_no, "invalid section name '" + section + "'");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(origin, line_no, "expected key = value");
        ConfigEntry e;
        e.section = section;
        e.key = trim(std::string_view(line).substr(0, eq));
        if (!valid_name(e.key)) fail(origin, line_no, "invalid key '" + e.key + "'");
        std::string rhs = trim(std::string_view(line).substr(eq + 1));
        const int start = line_no;
        while (bracket_balance(rhs) > 0) {
            if (!std::getline(in, raw)) fail(origin, start, "unterminated array");
            ++line_no;
            rhs += ' ' + trim(strip_comment(raw));
        }
        e.value = ValueParser(rhs, origin, start).parse();
        for (const auto& prev : out)
            if (prev.section == e.section && prev.key == e.key)
                fail(origin, start, "duplicate key '" + e.key + "' in [" + e.section + "]");
        out.push_back(std::move(e));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Key table

namespace {

struct KeySpec {
    std::string section;
    std::string key;
    std::string type;
    std::string doc;
    std::function<void(AppConfig&, const ConfigValue&, const std::string&)> set;
    std::function<std::string(const AppConfig&)> get;
};

std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    std::string s = buf;
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out += c;
    }
    return out + '"';
}

double as_number(const ConfigValue& v, const std::string& where) {
    if (v.kind != ConfigValue::Kind::Number) throw ConfigError(where + ": expected a number");
    return v.number;
}

std::uint64_t as_unsigned(const ConfigValue& v, const std::string& where) {
    if (v.kind != ConfigValue::Kind::Number) throw ConfigError(where + ": expected a non-negative integer");
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.text.data(), v.text.data() + v.text.size(), out);
    if (ec != std::errc() || ptr != v.text.data() + v.text.size())
        throw ConfigError(where + ": expected a non-negative integer, got '" + v.text + "'");
    return out;
}

bool as_bool(const ConfigValue& v, const std::string& where) {
    if (v.kind != ConfigValue::Kind::Bool) throw ConfigError(where + ": expected true or false");
    return v.boolean;
}

const std::string& as_string(const ConfigValue& v, const std::string& where) {
    if (v.kind != ConfigValue::Kind::String) throw ConfigError(where + ": expected a quoted string");
    return v.text;
}

const std::vector<ConfigValue>& as_array(const ConfigValue& v, const std::string& where) {
    if (v.kind != ConfigValue::Kind::Array) throw ConfigError(where + ": expected an array");
    return v.items;
}

template <typename Ref>
KeySpec real(std::string section, std::string key, std::string doc, Ref ref) {
    return {std::move(section), std::move(key), "number", std::move(doc),
            [ref](AppConfig& c, const ConfigValue& v, const std::string& w) { ref(c) = as_number(v, w); },
            [ref](const AppConfig& c) { return fmt(ref(const_cast<AppConfig&>(c))); }};
}

template <typename Ref>
KeySpec count(std::string section, std::string key, std::string doc, Ref ref) {
    return {std::move(section), std::move(key), "integer", std::move(doc),
            [ref](AppConfig& c, const ConfigValue& v, const std::string& w) {
                ref(c) = static_cast<std::remove_reference_t<decltype(ref(c))>>(as_unsigned(v, w));
            },
            [ref](const AppConfig& c) { return std::to_string(ref(const_cast<AppConfig&>(c))); }};
}

template <typename Ref>
KeySpec flag(std::string section, std::string key, std::string doc, Ref ref) {
    return {std::move(section), std::move(key), "bool", std::move(doc),
            [ref](AppConfig& c, const ConfigValue& v, const std::string& w) { ref(c) = as_bool(v, w); },
            [ref](const AppConfig& c) { return std::string(ref(const_cast<AppConfig&>(c)) ? "true" : "false"); }};
}

template <typename Ref>
KeySpec reals(std::string section, std::string key, std::string doc, Ref ref) {
    return {std::move(section), std::move(key), "number array", std::move(doc),
            [ref](AppConfig& c, const ConfigValue& v, const std::string& w) {
                std::vector<double> out;
                for (const auto& item : as_array(v, w)) out.push_back(as_number(item, w));
                ref(c) = std::move(out);
            },
            [ref](const AppConfig& c) {
                std::string s = "[";
                const auto& v = ref(const_cast<AppConfig&>(c));
                for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
                return s + "]";
            }};
}

template <typename Ref>
KeySpec counts(std::string section, std::string key, std::string doc, Ref ref) {
    return {std::move(section), std::move(key), "integer array", std::move(doc),
            [ref](AppConfig& c, const ConfigValue& v, const std::string& w) {
                std::vector<std::size_t> out;
                for (const auto& item : as_array(v, w)) out.push_back(as_unsigned(item, w));
                ref(c) = std::move(out);
            },
            [ref](const AppConfig& c) {
                std::string s = "[";
                const auto& v = ref(const_cast<AppConfig&>(c));
                for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
                return s + "]";
            }};
}

template <typename Ref>
KeySpec path(std::string section, std::string key, std::string doc, Ref ref) {
    return {std::move(section), std::move(key), "string", std::move(doc),
            [ref](AppConfig& c, const ConfigValue& v, const std::string& w) { ref(c) = as_string(v, w); },
            [ref](const AppConfig& c) { return quote(ref(const_cast<AppConfig&>(c)).string()); }};
}

std::string variant_name(Variant v) { return to_string(v); }

Variant variant_from(const std::string& s, const std::string& where) {
    try {
        return parse_variant(s);
    } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

#define GB_REF(expr) [](AppConfig & c) -> auto& { return expr; }

std::vector<KeySpec> build_keys() {
    std::vector<KeySpec> k;
    const std::string ex = "experiment", da = "data", mo = "model", ad = "adam", tr = "train", ev = "evaluate";
    const std::string tm = "truth.mm", tb = "truth.bioreactor";

    k.push_back({ex, "system", "string", "\"mm\" or \"bioreactor\"; selects every preset below (read first)",
                 [](AppConfig&, const ConfigValue& v, const std::string& w) { as_string(v, w); },
                 [](const AppConfig& c) { return quote(to_string(c.experiment.system)); }});
    k.push_back({ex, "variants", "string array", "models to sweep, any of \"GB1\", \"GB2\", \"BB\"",
                 [](AppConfig& c, const ConfigValue& v, const std::string& w) {
                     std::vector<Variant> out;
                     for (const auto& item : as_array(v, w)) out.push_back(variant_from(as_string(item, w), w));
                     c.experiment.variants = std::move(out);
                 },
                 [](const AppConfig& c) {
                     std::string s = "[";
                     for (std::size_t i = 0; i < c.experiment.variants.size(); ++i)
                         s += (i ? ", " : "") + quote(variant_name(c.experiment.variants[i]));
                     return s + "]";
                 }});
    k.push_back(counts(ex, "sizes", "training-pair counts to sweep", GB_REF(c.experiment.sizes)));
    k.push_back(count(ex, "replications", "runs per (variant, size) cell", GB_REF(c.experiment.replications)));
    k.push_back(count(ex, "seed", "top-level seed; every other seed derives from it", GB_REF(c.experiment.seed)));
    k.push_back(count(ex, "threads", "concurrent runs in a sweep (results do not depend on it)",
                      GB_REF(c.experiment.threads)));
    k.push_back(flag(ex, "record_timing", "fill the wall_time_s column (makes results.csv non-reproducible)",
                     GB_REF(c.experiment.record_timing)));
    k.push_back(flag(ex, "loss_histories", "write loss_<run>.csv for every sweep run",
                     GB_REF(c.experiment.write_loss_histories)));
    k.push_back(path(ex, "output_dir", "output directory (overridden by --out)", GB_REF(c.experiment.output_dir)));

    k.push_back(path(da, "csv", "read this dataset CSV instead of simulating", GB_REF(c.dataset)));
    k.push_back({da, "signal", "string", "input signal, \"steps\" (random holds) or \"chirp\"",
                 [](AppConfig& c, const ConfigValue& v, const std::string& w) {
                     const auto& s = as_string(v, w);
                     if (s == "steps") c.signal = SignalKind::Steps;
                     else if (s == "chirp") c.signal = SignalKind::Chirp;
                     else throw ConfigError(w + ": unknown signal '" + s + "'");
                 },
                 [](const AppConfig& c) { return quote(c.signal == SignalKind::Steps ? "steps" : "chirp"); }});
    k.push_back({da, "seed", "integer", "seed of the input signal (default: derived from experiment.seed)",
                 [](AppConfig& c, const ConfigValue& v, const std::string& w) { c.data_seed = as_unsigned(v, w); },
                 [](const AppConfig& c) { return std::to_string(c.signal_seed()); }});
    k.push_back(real(da, "ts", "sampling interval, also the model step", GB_REF(c.experiment.signal.ts)));
    k.push_back(real(da, "duration", "length of the step signal in time units", GB_REF(c.experiment.signal.duration)));
    k.push_back(real(da, "hold_min", "shortest hold of a step level", GB_REF(c.experiment.signal.hold_min)));
    k.push_back(real(da, "hold_max", "longest hold of a step level", GB_REF(c.experiment.signal.hold_max)));
    k.push_back(real(da, "amplitude_min", "lowest step level", GB_REF(c.experiment.signal.amplitude_min)));
    k.push_back(real(da, "amplitude_max", "highest step level", GB_REF(c.experiment.signal.amplitude_max)));
    k.push_back(real(da, "chirp_base", "chirp centre value", GB_REF(c.chirp.base)));
    k.push_back(real(da, "chirp_amplitude", "chirp amplitude", GB_REF(c.chirp.amplitude)));
    k.push_back(real(da, "chirp_f0", "chirp start frequency", GB_REF(c.chirp.f0)));
    k.push_back(real(da, "chirp_f1", "chirp end frequency", GB_REF(c.chirp.f1)));
    k.push_back(real(da, "chirp_duration", "chirp length in time units", GB_REF(c.chirp.duration)));
    k.push_back(count(da, "substeps", "RK4 substeps of the truth integrator per sample", GB_REF(c.experiment.substeps)));
    k.push_back(real(da, "train_fraction", "leading share of the series used for training",
                     GB_REF(c.experiment.train_fraction)));
    k.push_back(flag(da, "full_state", "also write hidden states (same as --full-state)", GB_REF(c.full_state)));

    k.push_back(real(mo, "tau", "delay time of the embedding (multiple of data.ts)", GB_REF(c.experiment.recipe.tau)));
    k.push_back(count(mo, "dimension", "embedding dimension d", GB_REF(c.experiment.recipe.dimension)));
    k.push_back(counts(mo, "hidden", "hidden layer widths (softplus)", GB_REF(c.experiment.recipe.hidden)));
    k.push_back({mo, "composition", "string", "prior composition, \"multiplicative\" (p*phi) or \"additive\" (p+phi)",
                 [](AppConfig& c, const ConfigValue& v, const std::string& w) {
                     const auto& s = as_string(v, w);
                     if (s == "multiplicative") c.experiment.recipe.composition = PriorComposition::Multiplicative;
                     else if (s == "additive") c.experiment.recipe.composition = PriorComposition::Additive;
                     else throw ConfigError(w + ": unknown composition '" + s + "'");
                 },
                 [](const AppConfig& c) {
                     return quote(c.experiment.recipe.composition == PriorComposition::Multiplicative ? "multiplicative"
                                                                                                   : "additive");
                 }});
    k.push_back({mo, "priors", "number array",
                 "10 constants of the phenomenological prior: growth scale, A and B inhibition, B offset, A scale, "
                 "A inhibition, A half-saturation, B scale, B inhibition, B half-saturation",
                 [](AppConfig& c, const ConfigValue& v, const std::string& w) {
                     std::vector<double> out;
                     for (const auto& item : as_array(v, w)) out.push_back(as_number(item, w));
                     try {
                         c.experiment.recipe.priors = PhenomPriors::from_vector(out);
                     } catch (const ContractError& e) {
                         throw ConfigError(w + ": " + e.what());
                     }
                 },
                 [](const AppConfig& c) {
                     const auto v = c.experiment.recipe.priors.as_vector();
                     std::string s = "[";
                     for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
                     return s + "]";
                 }});
    k.push_back(reals(mo, "gb1_phi_offset", "GB1 network output offset per rate (empty: 0)",
                      GB_REF(c.experiment.recipe.gb1_phi_offset)));
    k.push_back(reals(mo, "gb1_phi_scale", "GB1 network output scale per rate (empty: 1)",
                      GB_REF(c.experiment.recipe.gb1_phi_scale)));
    k.push_back(reals(mo, "gb2_phi_offset", "GB2 network output offset per rate (empty: 0)",
                      GB_REF(c.experiment.recipe.gb2_phi_offset)));
    k.push_back(reals(mo, "gb2_phi_scale", "GB2 network output scale per rate (empty: 1)",
                      GB_REF(c.experiment.recipe.gb2_phi_scale)));
    k.push_back(real(mo, "residence_time", "mm grey model: known residence time", GB_REF(c.experiment.recipe.mm.residence_time)));
    k.push_back(real(mo, "inlet_substrate", "mm grey model: known inlet substrate", GB_REF(c.experiment.recipe.mm.inlet_substrate)));
    k.push_back(real(mo, "dilution", "bioreactor grey model: known dilution rate", GB_REF(c.experiment.recipe.bio.dilution)));
    k.push_back(real(mo, "inlet_nutrient", "bioreactor grey model: known inlet nutrient",
                     GB_REF(c.experiment.recipe.bio.inlet_nutrient)));
    k.push_back(real(mo, "initial_yield", "bioreactor grey model: starting value of every trainable yield",
                     GB_REF(c.experiment.recipe.bio.initial_yield)));

    k.push_back(real(ad, "step_size", "Adam learning rate", GB_REF(c.experiment.adam.step_size)));
    k.push_back(real(ad, "beta1", "Adam first-moment decay", GB_REF(c.experiment.adam.beta1)));
    k.push_back(real(ad, "beta2", "Adam second-moment decay", GB_REF(c.experiment.adam.beta2)));
    k.push_back(real(ad, "epsilon", "Adam denominator guard", GB_REF(c.experiment.adam.epsilon)));

    k.push_back({tr, "variant", "string", "model trained by the train command: \"GB1\", \"GB2\" or \"BB\"",
                 [](AppConfig& c, const ConfigValue& v, const std::string& w) {
                     c.variant = variant_from(as_string(v, w), w);
                 },
                 [](const AppConfig& c) { return quote(variant_name(c.variant)); }});
    k.push_back(count(tr, "n_train", "training pairs used by the train command", GB_REF(c.n_train)));
    k.push_back(count(tr, "epochs", "passes over the training pairs", GB_REF(c.experiment.epochs)));
    k.push_back(count(tr, "batch_size", "pairs per Adam step", GB_REF(c.experiment.batch_size)));

    k.push_back(path(ev, "model", "model file to evaluate (default: <out>/model.txt)", GB_REF(c.model_file)));
    k.push_back({ev, "region", "string", "\"train\" (the first train.n_train pairs), \"validation\" or \"all\" (whole series)",
                 [](AppConfig& c, const ConfigValue& v, const std::string& w) {
                     const auto& s = as_string(v, w);
                     if (s != "train" && s != "validation" && s != "all") throw ConfigError(w + ": unknown region '" + s + "'");
                     c.region = s;
                 },
                 [](const AppConfig& c) { return quote(c.region); }});

    k.push_back(real(tm, "inlet_substrate", "S0", GB_REF(c.experiment.truth.mm.inlet_substrate)));
    k.push_back(real(tm, "residence_time", "theta", GB_REF(c.experiment.truth.mm.residence_time)));
    k.push_back(real(tm, "k_cat", "turnover number", GB_REF(c.experiment.truth.mm.k_cat)));
    k.push_back(real(tm, "k_m", "Michaelis constant", GB_REF(c.experiment.truth.mm.k_m)));

    auto& b = tb;
    k.push_back(real(b, "dilution", "D", GB_REF(c.experiment.truth.bio.dilution)));
    k.push_back(real(b, "inlet_nutrient", "S0", GB_REF(c.experiment.truth.bio.inlet_nutrient)));
    k.push_back(real(b, "yield_x", "Y_X", GB_REF(c.experiment.truth.bio.yield_x)));
    k.push_back(real(b, "yield_a", "Y_A", GB_REF(c.experiment.truth.bio.yield_a)));
    k.push_back(real(b, "yield_b", "Y_B", GB_REF(c.experiment.truth.bio.yield_b)));
    k.push_back(real(b, "mu0", "maximum growth rate", GB_REF(c.experiment.truth.bio.mu0)));
    k.push_back(real(b, "k_s", "K_S", GB_REF(c.experiment.truth.bio.k_s)));
    k.push_back(real(b, "k_a", "K_A", GB_REF(c.experiment.truth.bio.k_a)));
    k.push_back(real(b, "k_b", "K_B", GB_REF(c.experiment.truth.bio.k_b)));
    k.push_back(real(b, "k_eb", "k_EB", GB_REF(c.experiment.truth.bio.k_eb)));
    k.push_back(real(b, "r_a1", "r_A1", GB_REF(c.experiment.truth.bio.r_a1)));
    k.push_back(real(b, "r_a2", "r_A2", GB_REF(c.experiment.truth.bio.r_a2)));
    k.push_back(real(b, "k_sa", "K_SA", GB_REF(c.experiment.truth.bio.k_sa)));
    k.push_back(real(b, "k_aa", "K_AA", GB_REF(c.experiment.truth.bio.k_aa)));
    k.push_back(real(b, "r_b1", "r_B1", GB_REF(c.experiment.truth.bio.r_b1)));
    k.push_back(real(b, "r_b2", "r_B2", GB_REF(c.experiment.truth.bio.r_b2)));
    k.push_back(real(b, "k_sb", "K_SB", GB_REF(c.experiment.truth.bio.k_sb)));
    k.push_back(real(b, "k_bb", "K_BB", GB_REF(c.experiment.truth.bio.k_bb)));
    k.push_back(real(b, "tau1", "tau_1", GB_REF(c.experiment.truth.bio.tau1)));
    k.push_back(real(b, "tau2", "tau_2", GB_REF(c.experiment.truth.bio.tau2)));
    k.push_back(real(b, "tau3", "tau_3", GB_REF(c.experiment.truth.bio.tau3)));
    k.push_back(real(b, "tau4", "tau_4", GB_REF(c.experiment.truth.bio.tau4)));
    k.push_back(real(b, "n_a", "Hill exponent n_A", GB_REF(c.experiment.truth.bio.n_a)));
    k.push_back(real(b, "n_b", "Hill exponent n_B", GB_REF(c.experiment.truth.bio.n_b)));
    k.push_back(real(b, "k_ha", "Hill constant K_hA", GB_REF(c.experiment.truth.bio.k_ha)));
    k.push_back(real(b, "k_hb", "Hill constant K_hB", GB_REF(c.experiment.truth.bio.k_hb)));
    return k;
}

#undef GB_REF

const std::vector<KeySpec>& keys() {
    static const std::vector<KeySpec> table = build_keys();
    return table;
}

void validate(const AppConfig& c) {
    const auto& e = c.experiment;
    if (e.variants.empty()) throw ConfigError("experiment.variants: at least one variant is required");
    if (e.sizes.empty()) throw ConfigError("experiment.sizes: at least one size is required");
    for (std::size_t n : e.sizes)
        if (n == 0) throw ConfigError("experiment.sizes: sizes must be positive");
    if (e.replications == 0) throw ConfigError("experiment.replications: must be >= 1");
    if (e.threads == 0) throw ConfigError("experiment.threads: must be >= 1");
    if (e.batch_size == 0) throw ConfigError("train.batch_size: must be >= 1");
    if (c.n_train == 0) throw ConfigError("train.n_train: must be >= 1");
    if (!(e.train_fraction > 0.0 && e.train_fraction < 1.0))
        throw ConfigError("data.train_fraction: must lie in (0, 1)");
    if (e.substeps == 0) throw ConfigError("data.substeps: must be >= 1");
    if (!(e.adam.step_size > 0.0) || !(e.adam.beta1 >= 0.0 && e.adam.beta1 < 1.0) ||
        !(e.adam.beta2 >= 0.0 && e.adam.beta2 < 1.0) || !(e.adam.epsilon > 0.0))
        throw ConfigError("adam: step_size > 0, beta1 and beta2 in [0, 1), epsilon > 0 required");
    if (e.system == SystemId::MM) {
        for (Variant v : e.variants)
            if (v == Variant::GB2) throw ConfigError("experiment.variants: GB2 needs a prior, none is defined for mm");
        if (c.variant == Variant::GB2) throw ConfigError("train.variant: GB2 needs a prior, none is defined for mm");
    }
    try {
        e.recipe.embedding().validate();
        for (std::size_t w : e.recipe.hidden)
            if (w == 0) throw ContractError("hidden widths must be positive");
        e.truth.bio.validate();
        if (std::abs(e.signal.ts - e.recipe.ts) > 1e-12 * e.recipe.ts)
            throw ContractError("data.ts and the model step differ");
        if (c.signal == SignalKind::Steps) {
            StepSignal s = e.signal;
            s.seed = c.signal_seed();
            if (!(s.ts > 0.0 && s.duration > 0.0 && s.hold_min > 0.0 && s.hold_min <= s.hold_max &&
                  s.amplitude_min <= s.amplitude_max))
                throw ContractError("data: invalid step signal ranges");
        } else if (!(c.chirp.duration > 0.0)) {
            throw ContractError("data.chirp_duration must be positive");
        }
        for (Variant v : e.variants)
            if (v != Variant::BB) e.recipe.physics(v);
    } catch (const ContractError& err) {
        throw ConfigError(std::string("invalid configuration: ") + err.what());
    }
}

}  // namespace

std::vector<double> AppConfig::input_signal() const {
    if (signal == SignalKind::Chirp)
        return make_chirp_signal(chirp.base, chirp.amplitude, chirp.f0, chirp.f1, chirp.duration, experiment.signal.ts);
    StepSignal s = experiment.signal;
    s.seed = signal_seed();
    return make_step_signal(s);
}

TimeSeries AppConfig::simulate(bool keep_hidden) const {
    TruthModel truth = experiment.truth;
    truth.system = experiment.system;
    const auto u = input_signal();
    TimeSeries series = integrate_truth(truth, default_initial_state(truth), u, experiment.signal.ts, experiment.substeps);
    return keep_hidden ? series : series.without_hidden();
}

AppConfig default_config(SystemId system) {
    AppConfig c;
    c.experiment = ExperimentConfig::defaults(system);
    c.experiment.signal.ts = c.experiment.recipe.ts;
    return c;
}

AppConfig parse_config(std::istream& in, const std::string& origin) {
    const auto entries = parse_config_entries(in, origin);
    SystemId system = SystemId::MM;
    for (const auto& e : entries) {
        if (e.section == "experiment" && e.key == "system") {
            const std::string where = origin + ":" + std::to_string(e.value.line) + ": experiment.system";
            try {
                system = parse_system(as_string(e.value, where));
            } catch (const ContractError& err) {
                throw ConfigError(where + ": " + err.what());
            }
        }
    }
    AppConfig c = default_config(system);
    for (const auto& e : entries) {
        const std::string where =
            origin + ":" + std::to_string(e.value.line) + ": " + (e.section.empty() ? "" : e.section + ".") + e.key;
        const KeySpec* spec = nullptr;
        for (const auto& k : keys())
            if (k.section == e.section && k.key == e.key) spec = &k;
        if (!spec) {
            bool known_section = false;
            for (const auto& k : keys()) known_section = known_section || k.section == e.section;
            if (!known_section) throw ConfigError(where + ": unknown section [" + e.section + "]");
            throw ConfigError(where + ": unknown key");
        }
        spec->set(c, e.value, where);
    }
    c.experiment.recipe.ts = c.experiment.signal.ts;
    validate(c);
    return c;
}

AppConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file " + file.string());
    return parse_config(in, file.string());
}

void write_config(std::ostream& out, const AppConfig& config) {
    std::string section = "\x01";
    for (const auto& k : keys()) {
        if (k.section == "data" && k.key == "csv" && config.dataset.empty()) continue;
        if (k.section == "evaluate" && k.key == "model" && config.model_file.empty()) continue;
        if (config.experiment.system == SystemId::MM && k.section == "truth.bioreactor") continue;
        if (config.experiment.system == SystemId::Bioreactor && k.section == "truth.mm") continue;
        if (k.section != section) {
            if (section != "\x01") out << '\n';
            out << '[' << k.section << "]\n";
            section = k.section;
        }
        out << k.key << " = " << k.get(config) << '\n';
    }
}

std::string config_reference() {
    std::ostringstream s;
    s << "Config file keys (TOML subset; unknown keys are errors):\n";
    std::string section;
    for (const auto& k : keys()) {
        if (k.section != section) {
            s << "\n  [" << k.section << "]\n";
            section = k.section;
        }
        std::string head = "    " + k.key + " (" + k.type + ")";
        if (head.size() < 36) head.resize(36, ' ');
        else head += "  ";
        s << head << k.doc << '\n';
    }
    return s.str();
}

}  // namespace greybox
