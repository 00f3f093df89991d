// FOODMDL1 checkpoint container.
//
// Layout (little-endian):
//   magic "FOODMDL1" | u32 version=1
//   config: u32 n_stages, u32 channels..., u32 kernel/stride/padding,
//           u32 cl_latent/pl_latent/pl_pool_factor, f64 leaky_slope,
//           u32 input_h, u32 input_w, u64 seed
//   split:  u64 seed, f64 train_fraction, f64 calib_fraction
//   params: u32 count, then per parameter:
//           u16 name_len, name, u32 ndim, u64 dims..., f32 data...
//   optim:  u8 present, f64 lr/beta1/beta2/eps, u64 step, then per parameter
//           f32 m... and f32 u... in the same order as the params block
//   thresholds: u8 present, then 3x (f64 tau, u64 count, f64 coverage)
//   progress: u32 epochs_completed
//
// Save/load round-trips are bit-exact: loading rebuilds the model from the
// config and then overwrites every parameter blob verbatim.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "food/model.hpp"
#include "food/optim.hpp"
#include "food/detect.hpp"
#include "food/radar.hpp"

namespace food {

struct SplitSpec {
    std::uint64_t seed = 1;
    double train_fraction = 0.9;
    double calib_fraction = 0.1;
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline void put_f64(std::string& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline std::uint64_t read_u64(ByteReader& r, const char* what) {
    const std::uint64_t lo = r.u32(what);
    const std::uint64_t hi = r.u32(what);
    return lo | (hi << 32);
}

inline float read_f32(ByteReader& r, const char* what) {
    return std::bit_cast<float>(r.u32(what));
}

inline double read_f64(ByteReader& r, const char* what) {
    return std::bit_cast<double>(read_u64(r, what));
}

} // namespace detail

inline constexpr char kCkptMagic[9] = "FOODMDL1";

struct Checkpoint {
    FoodModel model;
    SplitSpec split;
    bool has_optimizer = false;
    AdamaxConfig optim_config;
    std::uint64_t optim_step = 0;
    std::vector<std::vector<float>> optim_m, optim_u; // parameter order
    ThresholdSet thresholds;
    std::uint32_t epochs_completed = 0;

    // Optimizer bound to the model parameters with the restored state.
    Adamax<float> make_optimizer() const {
        Adamax<float> opt(model.parameters(), optim_config);
        if (has_optimizer) {
            if (optim_m.size() != opt.first_moments().size()) {
                throw FormatError("checkpoint: optimizer state does not match parameters");
            }
            opt.first_moments() = optim_m;
            opt.inf_norms() = optim_u;
            opt.restore_step_count(optim_step);
        }
        return opt;
    }
};

inline std::string serialize_checkpoint(const FoodModel& model, const SplitSpec& split,
                                        const Adamax<float>* optim,
                                        const ThresholdSet& thresholds,
                                        std::uint32_t epochs_completed) {
    using namespace detail;
    std::string out;
    out.append(kCkptMagic, 8);
    put_u32(out, 1);

    const FoodConfig& cfg = model.config;
    put_u32(out, static_cast<std::uint32_t>(cfg.encoder_channels.size()));
    for (std::size_t c : cfg.encoder_channels) put_u32(out, static_cast<std::uint32_t>(c));
    put_u32(out, static_cast<std::uint32_t>(cfg.kernel));
    put_u32(out, static_cast<std::uint32_t>(cfg.stride));
    put_u32(out, static_cast<std::uint32_t>(cfg.padding));
    put_u32(out, static_cast<std::uint32_t>(cfg.cl_latent));
    put_u32(out, static_cast<std::uint32_t>(cfg.pl_latent));
    put_u32(out, static_cast<std::uint32_t>(cfg.pl_pool_factor));
    put_f64(out, cfg.leaky_slope);
    put_u32(out, static_cast<std::uint32_t>(cfg.input_height));
    put_u32(out, static_cast<std::uint32_t>(cfg.input_width));
    put_u64(out, cfg.seed);

    put_u64(out, split.seed);
    put_f64(out, split.train_fraction);
    put_f64(out, split.calib_fraction);

    const auto named = model.named_parameters();
    put_u32(out, static_cast<std::uint32_t>(named.size()));
    for (const auto& [name, t] : named) {
        put_u16(out, static_cast<std::uint16_t>(name.size()));
        out.append(name);
        put_u32(out, static_cast<std::uint32_t>(t.shape().size()));
        for (std::size_t d : t.shape()) put_u64(out, d);
        for (float v : t.data()) put_f32(out, v);
    }

    out.push_back(optim ? 1 : 0);
    if (optim) {
        put_f64(out, optim->config().lr);
        put_f64(out, optim->config().beta1);
        put_f64(out, optim->config().beta2);
        put_f64(out, optim->config().eps);
        put_u64(out, optim->step_count());
        for (const auto& m : optim->first_moments()) {
            for (float v : m) put_f32(out, v);
        }
        for (const auto& u : optim->inf_norms()) {
            for (float v : u) put_f32(out, v);
        }
    }

    out.push_back(thresholds.calibrated ? 1 : 0);
    if (thresholds.calibrated) {
        for (int i = 0; i < 3; ++i) {
            put_f64(out, thresholds.tau[i]);
            put_u64(out, thresholds.calib_count[i]);
            put_f64(out, thresholds.coverage[i]);
        }
    }

    put_u32(out, epochs_completed);
    return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& source) {
    using namespace detail;
    ByteReader r(bytes.data(), bytes.size(), source);
    const char* magic = r.take(8, "magic");
    if (std::memcmp(magic, kCkptMagic, 8) != 0) {
        throw FormatError(source + ": bad magic, not a FOODMDL1 checkpoint");
    }
    const std::uint32_t version = r.u32("version");
    if (version != 1) {
        throw FormatError(source + ": unsupported checkpoint version " +
                          std::to_string(version));
    }

    FoodConfig cfg;
    cfg.encoder_channels.clear();
    const std::uint32_t stages = r.u32("channel count");
    for (std::uint32_t i = 0; i < stages; ++i) cfg.encoder_channels.push_back(r.u32("channel"));
    cfg.kernel = r.u32("kernel");
    cfg.stride = r.u32("stride");
    cfg.padding = r.u32("padding");
    cfg.cl_latent = r.u32("cl_latent");
    cfg.pl_latent = r.u32("pl_latent");
    cfg.pl_pool_factor = r.u32("pl_pool_factor");
    cfg.leaky_slope = read_f64(r, "leaky_slope");
    cfg.input_height = r.u32("input_height");
    cfg.input_width = r.u32("input_width");
    cfg.seed = read_u64(r, "seed");

    Checkpoint ckpt;
    ckpt.split.seed = read_u64(r, "split seed");
    ckpt.split.train_fraction = read_f64(r, "train_fraction");
    ckpt.split.calib_fraction = read_f64(r, "calib_fraction");

    ckpt.model = FoodModel::build(cfg);
    auto named = ckpt.model.named_parameters();
    const std::uint32_t count = r.u32("parameter count");
    if (count != named.size()) {
        throw FormatError(source + ": checkpoint has " + std::to_string(count) +
                          " parameters, model expects " + std::to_string(named.size()));
    }
    for (auto& [name, tensor] : named) {
        const std::uint16_t len = r.u16("parameter name length");
        const char* p = r.take(len, "parameter name");
        if (std::string(p, len) != name) {
            throw FormatError(source + ": parameter name mismatch, expected " + name +
                              ", got " + std::string(p, len));
        }
        const std::uint32_t ndim = r.u32("parameter rank");
        Shape shape(ndim);
        for (auto& d : shape) d = static_cast<std::size_t>(read_u64(r, "parameter dim"));
        if (shape != tensor.shape()) {
            throw FormatError(source + ": shape mismatch for " + name + ", expected " +
                              shape_str(tensor.shape()) + ", got " + shape_str(shape));
        }
        for (auto& v : tensor.data()) v = read_f32(r, "parameter value");
    }

    if (r.u8("optimizer flag")) {
        ckpt.has_optimizer = true;
        ckpt.optim_config.lr = read_f64(r, "lr");
        ckpt.optim_config.beta1 = read_f64(r, "beta1");
        ckpt.optim_config.beta2 = read_f64(r, "beta2");
        ckpt.optim_config.eps = read_f64(r, "eps");
        ckpt.optim_step = read_u64(r, "optimizer step");
        ckpt.optim_m.resize(named.size());
        ckpt.optim_u.resize(named.size());
        for (std::size_t i = 0; i < named.size(); ++i) {
            ckpt.optim_m[i].resize(named[i].second.numel());
            for (auto& v : ckpt.optim_m[i]) v = read_f32(r, "optimizer m");
        }
        for (std::size_t i = 0; i < named.size(); ++i) {
            ckpt.optim_u[i].resize(named[i].second.numel());
            for (auto& v : ckpt.optim_u[i]) v = read_f32(r, "optimizer u");
        }
    }

    if (r.u8("thresholds flag")) {
        ckpt.thresholds.calibrated = true;
        for (int i = 0; i < 3; ++i) {
            ckpt.thresholds.tau[i] = read_f64(r, "tau");
            ckpt.thresholds.calib_count[i] =
                static_cast<std::size_t>(read_u64(r, "calibration count"));
            ckpt.thresholds.coverage[i] = read_f64(r, "coverage");
        }
    }

    ckpt.epochs_completed = r.u32("epochs completed");
    return ckpt;
}

inline void save_checkpoint(const std::string& path, const FoodModel& model,
                            const SplitSpec& split, const Adamax<float>* optim,
                            const ThresholdSet& thresholds,
                            std::uint32_t epochs_completed) {
    detail::write_file_bytes(path,
                             serialize_checkpoint(model, split, optim, thresholds,
                                                  epochs_completed));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    return deserialize_checkpoint(detail::read_file_bytes(path), path);
}

} // namespace food
