// Run configuration: a flat key=value text format with '#' comments.
//
// One RunConfig fully determines a run (model geometry, optimizer, splits,
// synthesis, thread count) from a single seed; the resolved configuration is
// written next to every output so runs can be reproduced from the artifact
// alone.

#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "food/metrics.hpp"
#include "food/model.hpp"
#include "food/optim.hpp"
#include "food/radar.hpp"

namespace food {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::uint64_t seed = 1;
    FoodConfig model;
    AdamaxConfig optim;
    std::size_t epochs = 30;
    std::size_t batch_per_class = 32;
    double train_fraction = 0.9;
    double calib_fraction = 0.1;
    std::size_t frames_per_class = 2000;
    std::size_t threads = 1;
    IdNegativesMode negatives_mode = IdNegativesMode::ClassOnly;

    void apply_seed() { model.seed = seed; }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::istringstream iss(s);
    std::string item;
    while (std::getline(iss, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing characters");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: bad numeric value for " + key + ": '" + v + "'");
    }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const unsigned long long n = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing characters");
        return n;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer value for " + key + ": '" + v + "'");
    }
}

} // namespace detail

inline void apply_config_line(RunConfig& cfg, const std::string& key,
                              const std::string& value) {
    using detail::parse_double;
    using detail::parse_u64;
    if (key == "seed") {
        cfg.seed = parse_u64(key, value);
    } else if (key == "encoder_channels") {
        cfg.model.encoder_channels.clear();
        for (const auto& part : detail::split_list(value, ',')) {
            cfg.model.encoder_channels.push_back(parse_u64(key, part));
        }
    } else if (key == "kernel") {
        cfg.model.kernel = parse_u64(key, value);
    } else if (key == "stride") {
        cfg.model.stride = parse_u64(key, value);
    } else if (key == "padding") {
        cfg.model.padding = parse_u64(key, value);
    } else if (key == "cl_latent") {
        cfg.model.cl_latent = parse_u64(key, value);
    } else if (key == "pl_latent") {
        cfg.model.pl_latent = parse_u64(key, value);
    } else if (key == "pl_pool_factor") {
        cfg.model.pl_pool_factor = parse_u64(key, value);
    } else if (key == "leaky_slope") {
        cfg.model.leaky_slope = parse_double(key, value);
    } else if (key == "input_height") {
        cfg.model.input_height = parse_u64(key, value);
    } else if (key == "input_width") {
        cfg.model.input_width = parse_u64(key, value);
    } else if (key == "lr") {
        cfg.optim.lr = parse_double(key, value);
    } else if (key == "beta1") {
        cfg.optim.beta1 = parse_double(key, value);
    } else if (key == "beta2") {
        cfg.optim.beta2 = parse_double(key, value);
    } else if (key == "eps") {
        cfg.optim.eps = parse_double(key, value);
    } else if (key == "epochs") {
        cfg.epochs = parse_u64(key, value);
    } else if (key == "batch_per_class") {
        cfg.batch_per_class = parse_u64(key, value);
    } else if (key == "train_fraction") {
        cfg.train_fraction = parse_double(key, value);
    } else if (key == "calib_fraction") {
        cfg.calib_fraction = parse_double(key, value);
    } else if (key == "frames_per_class") {
        cfg.frames_per_class = parse_u64(key, value);
    } else if (key == "threads") {
        cfg.threads = parse_u64(key, value);
    } else if (key == "negatives_mode") {
        if (value == "class_only") {
            cfg.negatives_mode = IdNegativesMode::ClassOnly;
        } else if (value == "all_id") {
            cfg.negatives_mode = IdNegativesMode::AllId;
        } else {
            throw ConfigError("config: negatives_mode must be class_only or all_id, got '" +
                              value + "'");
        }
    } else {
        throw ConfigError("config: unknown key '" + key + "'");
    }
}

inline void parse_config_text(RunConfig& cfg, const std::string& text,
                              const std::string& source) {
    std::istringstream iss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(iss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(lineno) +
                              ": expected key=value, got '" + line + "'");
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        try {
            apply_config_line(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    cfg.apply_seed();
}

inline void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    parse_config_text(cfg, text, path);
}

inline std::string dump_config(const RunConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "# food run configuration\n";
    os << "seed = " << cfg.seed << "\n";
    os << "# model\n";
    os << "encoder_channels = ";
    for (std::size_t i = 0; i < cfg.model.encoder_channels.size(); ++i) {
        if (i) os << ",";
        os << cfg.model.encoder_channels[i];
    }
    os << "\n";
    os << "kernel = " << cfg.model.kernel << "\n";
    os << "stride = " << cfg.model.stride << "\n";
    os << "padding = " << cfg.model.padding << "\n";
    os << "cl_latent = " << cfg.model.cl_latent << "\n";
    os << "pl_latent = " << cfg.model.pl_latent << "\n";
    os << "pl_pool_factor = " << cfg.model.pl_pool_factor << "\n";
    os << "leaky_slope = " << cfg.model.leaky_slope << "\n";
    os << "input_height = " << cfg.model.input_height << "\n";
    os << "input_width = " << cfg.model.input_width << "\n";
    os << "# optimizer\n";
    os << "lr = " << cfg.optim.lr << "\n";
    os << "beta1 = " << cfg.optim.beta1 << "\n";
    os << "beta2 = " << cfg.optim.beta2 << "\n";
    os << "eps = " << cfg.optim.eps << "\n";
    os << "# training\n";
    os << "epochs = " << cfg.epochs << "\n";
    os << "batch_per_class = " << cfg.batch_per_class << "\n";
    os << "# splits\n";
    os << "train_fraction = " << cfg.train_fraction << "\n";
    os << "calib_fraction = " << cfg.calib_fraction << "\n";
    os << "# synthesis\n";
    os << "frames_per_class = " << cfg.frames_per_class << "\n";
    os << "# runtime\n";
    os << "threads = " << cfg.threads << "\n";
    os << "negatives_mode = " << to_string(cfg.negatives_mode) << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Synthesis profile overrides (same key=value grammar)
// ---------------------------------------------------------------------------
//
// perN.scatterers = range:amplitude:jitter, ...
// perN.gains      = g1,g2,g3
// perN.noise_std  = x         perN.drift = x
// ood.range_bands = lo:hi, ...    ood.scatterers = min:max
// ood.amplitude   = lo:hi         ood.noise_std = x
// ood.jitter      = lo:hi         ood.drift = lo:hi

struct SynthSpec {
    std::array<SyntheticProfile, 3> id_profiles = default_id_profiles();
    OodSampler ood;
};

inline void parse_profile_text(SynthSpec& spec, const std::string& text,
                               const std::string& source) {
    std::istringstream iss(text);
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& msg) {
        throw ConfigError(source + ":" + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(iss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected key=value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));

        auto parse_pair = [&](const std::string& s) {
            const auto parts = detail::split_list(s, ':');
            if (parts.size() != 2) fail("expected lo:hi, got '" + s + "'");
            return std::array<double, 2>{detail::parse_double(key, parts[0]),
                                         detail::parse_double(key, parts[1])};
        };

        if (key.rfind("per", 0) == 0 && key.size() > 4 && key[4] == '.') {
            const int idx = key[3] - '1';
            if (idx < 0 || idx > 2) fail("profile class must be per1..per3");
            SyntheticProfile& p = spec.id_profiles[idx];
            const std::string field = key.substr(5);
            if (field == "scatterers") {
                p.scatterers.clear();
                for (const auto& item : detail::split_list(value, ',')) {
                    const auto parts = detail::split_list(item, ':');
                    if (parts.size() != 3) fail("scatterer needs range:amplitude:jitter");
                    p.scatterers.push_back({detail::parse_double(key, parts[0]),
                                            detail::parse_double(key, parts[1]),
                                            detail::parse_double(key, parts[2])});
                }
            } else if (field == "gains") {
                const auto parts = detail::split_list(value, ',');
                if (parts.size() != 3) fail("gains needs three values");
                for (int i = 0; i < 3; ++i) p.rx_gain[i] = detail::parse_double(key, parts[i]);
            } else if (field == "noise_std") {
                p.noise_std = detail::parse_double(key, value);
            } else if (field == "drift") {
                p.drift_rad_per_chirp = detail::parse_double(key, value);
            } else {
                fail("unknown profile field '" + field + "'");
            }
        } else if (key.rfind("ood.", 0) == 0) {
            const std::string field = key.substr(4);
            if (field == "range_bands") {
                spec.ood.range_bands.clear();
                for (const auto& item : detail::split_list(value, ',')) {
                    spec.ood.range_bands.push_back(parse_pair(item));
                }
            } else if (field == "scatterers") {
                const auto pair = parse_pair(value);
                spec.ood.min_scatterers = static_cast<std::size_t>(pair[0]);
                spec.ood.max_scatterers = static_cast<std::size_t>(pair[1]);
            } else if (field == "amplitude") {
                const auto pair = parse_pair(value);
                spec.ood.min_amplitude = pair[0];
                spec.ood.max_amplitude = pair[1];
            } else if (field == "jitter") {
                spec.ood.phase_jitter_range = parse_pair(value);
            } else if (field == "drift") {
                spec.ood.drift_range = parse_pair(value);
            } else if (field == "noise_std") {
                spec.ood.noise_std = detail::parse_double(key, value);
            } else {
                fail("unknown ood field '" + field + "'");
            }
        } else {
            fail("unknown profile key '" + key + "'");
        }
    }
}

inline void load_profile_file(SynthSpec& spec, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("profile: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    parse_profile_text(spec, text, path);
}

} // namespace food
