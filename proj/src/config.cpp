#include "svfatlas/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "svfatlas/errors.hpp"

namespace svfatlas {

namespace {

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double as_double(const ConfigMap &cfg, const std::string &key, double fallback) {
    const auto it = cfg.find(key);
    if (it == cfg.end()) return fallback;
    const std::string &v = it->second;
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
    }
    return out;
}

template <class Int> Int as_int(const ConfigMap &cfg, const std::string &key, Int fallback) {
    const auto it = cfg.find(key);
    if (it == cfg.end()) return fallback;
    const std::string &v = it->second;
    Int out{};
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
    }
    return out;
}

bool as_bool(const ConfigMap &cfg, const std::string &key, bool fallback) {
    const auto it = cfg.find(key);
    if (it == cfg.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("key '" + key + "': expected true or false, got '" + it->second + "'");
}

// Re-raise validation failures of parsed values as configuration errors.
template <class F> void validated(F &&check) {
    try {
        check();
    } catch (const InvalidInput &e) {
        throw ConfigError(e.what());
    }
}

} // namespace

ConfigMap parse_config_text(const std::string &text) {
    ConfigMap out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
        }
        if (!out.emplace(key, value).second) {
            throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        }
    }
    return out;
}

ConfigMap load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

const std::set<std::string> &optim_keys() {
    static const std::set<std::string> keys{
        "step_size", "method",        "epochs",       "atlas_refresh_period", "quadrature_samples",
        "squaring_steps", "seed",     "sim_weight",   "lambda",               "gamma1",
        "gamma2",    "similarity",    "pair_sampling", "atlas_mode",          "atlas_step",
        "reset_momentum", "threads",  "log_wall_time", "normalize"};
    return keys;
}

const std::set<std::string> &synth_keys() {
    static const std::set<std::string> keys{"dims",          "N",           "structures", "velocity_scale",
                                            "smoothness",    "affine_scale", "noise_sigma", "seed"};
    return keys;
}

const std::set<std::string> &invert_keys() {
    static const std::set<std::string> keys{"max_iters", "step", "tol", "failure_threshold"};
    return keys;
}

void reject_unknown_keys(const ConfigMap &cfg, const std::set<std::string> &allowed) {
    for (const auto &[k, v] : cfg) {
        if (!allowed.count(k)) throw ConfigError("unknown config key '" + k + "'");
    }
}

namespace {

RunConfig parse_run_config(const ConfigMap &cfg, bool single_image) {
    reject_unknown_keys(cfg, optim_keys());
    RunConfig r;
    OptimConfig &o = r.optim;
    o.step_size = as_double(cfg, "step_size", o.step_size);
    if (auto it = cfg.find("method"); it != cfg.end()) o.method = parse_update_method(it->second);
    o.epochs = as_int(cfg, "epochs", o.epochs);
    o.atlas_refresh_period = as_int(cfg, "atlas_refresh_period", o.atlas_refresh_period);
    o.quadrature_samples = as_int(cfg, "quadrature_samples", o.quadrature_samples);
    o.squaring_steps = as_int(cfg, "squaring_steps", o.squaring_steps);
    o.seed = as_int(cfg, "seed", o.seed);
    o.weights.sim_weight = as_double(cfg, "sim_weight", o.weights.sim_weight);
    o.weights.lambda = as_double(cfg, "lambda", o.weights.lambda);
    o.weights.gamma1 = as_double(cfg, "gamma1", o.weights.gamma1);
    o.weights.gamma2 = as_double(cfg, "gamma2", o.weights.gamma2);
    if (auto it = cfg.find("similarity"); it != cfg.end()) o.similarity = parse_similarity(it->second);
    if (auto it = cfg.find("pair_sampling"); it != cfg.end()) o.pair_sampling = parse_pair_sampling(it->second);
    if (auto it = cfg.find("atlas_mode"); it != cfg.end()) o.atlas_mode = parse_atlas_mode(it->second);
    o.atlas_step = as_double(cfg, "atlas_step", o.atlas_step);
    o.reset_momentum = as_bool(cfg, "reset_momentum", o.reset_momentum);
    o.threads = as_int(cfg, "threads", o.threads);
    o.log_wall_time = as_bool(cfg, "log_wall_time", o.log_wall_time);
    r.normalize = as_bool(cfg, "normalize", r.normalize);
    // Registration to a frozen atlas never touches the atlas, so its mode is moot.
    if (single_image) o.atlas_mode = AtlasMode::learned;
    validated([&] { o.validate(); });
    return r;
}

} // namespace

RunConfig to_run_config(const ConfigMap &cfg) { return parse_run_config(cfg, false); }

RunConfig to_register_config(const ConfigMap &cfg) { return parse_run_config(cfg, true); }

SynthConfig to_synth_config(const ConfigMap &cfg) {
    reject_unknown_keys(cfg, synth_keys());
    SynthConfig s;
    if (auto it = cfg.find("dims"); it != cfg.end()) {
        std::string text = it->second;
        for (char &c : text)
            if (c == 'x' || c == ',') c = ' ';
        std::istringstream ds(text);
        s.dims.clear();
        std::string tok;
        while (ds >> tok) {
            std::int64_t d = 0;
            const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), d);
            if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
                throw ConfigError("key 'dims': bad extent '" + tok + "'");
            }
            s.dims.push_back(d);
        }
    }
    s.N = as_int(cfg, "N", s.N);
    s.structures = as_int(cfg, "structures", s.structures);
    s.velocity_scale = as_double(cfg, "velocity_scale", s.velocity_scale);
    s.smoothness = as_double(cfg, "smoothness", s.smoothness);
    s.affine_scale = as_double(cfg, "affine_scale", s.affine_scale);
    s.noise_sigma = as_double(cfg, "noise_sigma", s.noise_sigma);
    s.seed = as_int(cfg, "seed", s.seed);
    validated([&] { s.validate(); });
    return s;
}

InverseOptions to_inverse_options(const ConfigMap &cfg) {
    reject_unknown_keys(cfg, invert_keys());
    InverseOptions o;
    o.max_iters = as_int(cfg, "max_iters", o.max_iters);
    o.step = as_double(cfg, "step", o.step);
    o.tol = as_double(cfg, "tol", o.tol);
    o.failure_threshold = as_double(cfg, "failure_threshold", o.failure_threshold);
    if (o.max_iters < 0 || !(o.step > 0.0) || !(o.tol >= 0.0) || !(o.failure_threshold >= 0.0)) {
        throw ConfigError("invert options must be non-negative with step > 0");
    }
    return o;
}

} // namespace svfatlas
