// Raw FMCW radar frames: container format, synthetic generation, and the
// normalization that turns 12-bit ADC codes into network input.
//
// A frame is the raw ADC cube of one radar frame, 3 receivers x 64 chirps x
// 128 samples, each sample a 12-bit code. The synthetic generator models a
// handful of point scatterers: each contributes a cosine at its beat
// frequency with a per-frame random phase, a slow per-chirp drift, per-chirp
// phase jitter, and additive Gaussian noise, quantized around mid-scale.
// Every frame draws from an rng stream derived from (seed, frame_index), so
// generation parallelizes without changing a single bit of output.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "food/rng.hpp"
#include "food/tensor.hpp"

namespace food {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kSpeedOfLight = 3.0e8; // m/s
inline constexpr double kTwoPi = 6.283185307179586476925286766559;
inline constexpr std::uint16_t kAdcMax = 4095; // 12-bit full scale
inline constexpr std::uint16_t kAdcMid = 2048;
// Codes per unit of signal amplitude; leaves headroom so profiles within the
// documented bounds (sum of amplitudes + 6 sigma of noise below ~1.25) never
// clip.
inline constexpr double kQuantScale = 1600.0;

struct RadarConfig {
    std::size_t n_tx = 1;
    std::size_t n_rx = 3;
    std::size_t n_chirps = 64;   // N_c
    std::size_t n_samples = 128; // N_s per chirp
    double frame_period_s = 50e-3;
    double chirp_to_chirp_s = 391.55e-6;
    double f_min_hz = 60.1e9;
    double f_max_hz = 61.1e9;
    double bandwidth_hz = 1.0e9;
    double adc_rate_hz = 2.0e6;
    unsigned adc_bits = 12;

    double chirp_duration_s() const {
        return static_cast<double>(n_samples) / adc_rate_hz;
    }

    std::size_t frame_samples() const { return n_rx * n_chirps * n_samples; }

    void validate() const {
        if (n_rx == 0 || n_chirps == 0 || n_samples == 0) {
            throw std::invalid_argument("radar config: dimensions must be positive");
        }
        if (adc_rate_hz <= 0 || bandwidth_hz <= 0 || frame_period_s <= 0) {
            throw std::invalid_argument("radar config: rates must be positive");
        }
        if (std::abs((f_max_hz - f_min_hz) - bandwidth_hz) > 1.0) {
            throw std::invalid_argument("radar config: bandwidth != f_max - f_min");
        }
        if (chirp_to_chirp_s <= chirp_duration_s()) {
            throw std::invalid_argument("radar config: chirp-to-chirp time must exceed "
                                        "chirp duration");
        }
    }
};

// Beat (IF) frequency of a scatterer at the given range: 2*R*B / (c*T_c).
inline double beat_frequency_hz(double range_m, const RadarConfig& cfg) {
    return 2.0 * range_m * cfg.bandwidth_hz / (kSpeedOfLight * cfg.chirp_duration_s());
}

enum class Label : std::uint8_t {
    Per1 = 0,
    Per2 = 1,
    Per3 = 2,
    Ood = 3,
    Unlabeled = 255,
};

inline const char* label_name(Label l) {
    switch (l) {
        case Label::Per1: return "PER1";
        case Label::Per2: return "PER2";
        case Label::Per3: return "PER3";
        case Label::Ood: return "OOD";
        default: return "UNLABELED";
    }
}

struct FrameCube {
    std::vector<std::uint16_t> codes; // n_rx * n_chirps * n_samples, 12-bit
    Label label = Label::Unlabeled;
};

struct Dataset {
    std::size_t n_rx = 3;
    std::size_t n_chirps = 64;
    std::size_t n_samples = 128;
    std::vector<FrameCube> frames;

    std::size_t frame_samples() const { return n_rx * n_chirps * n_samples; }

    std::vector<const FrameCube*> with_label(Label l) const {
        std::vector<const FrameCube*> out;
        for (const auto& f : frames) {
            if (f.label == l) out.push_back(&f);
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Synthetic profiles
// ---------------------------------------------------------------------------

struct Scatterer {
    double range_m = 0.25;
    double amplitude = 0.3;
    double phase_jitter_std = 0.05; // radians, per chirp
};

struct SyntheticProfile {
    std::vector<Scatterer> scatterers;
    std::array<double, 3> rx_gain{1.0, 1.0, 1.0};
    double noise_std = 0.02;
    double drift_rad_per_chirp = 0.0;

    void validate() const {
        for (const auto& s : scatterers) {
            if (s.range_m < 0.05 || s.range_m > 1.0) {
                throw std::invalid_argument("profile: scatterer range " +
                                            std::to_string(s.range_m) +
                                            " m outside [0.05, 1.0]");
            }
            if (s.amplitude < 0.0) {
                throw std::invalid_argument("profile: negative scatterer amplitude");
            }
            if (s.phase_jitter_std < 0.0) {
                throw std::invalid_argument("profile: negative phase jitter");
            }
        }
        if (noise_std < 0.0) throw std::invalid_argument("profile: negative noise std");
        for (double g : rx_gain) {
            if (g < 0.0) throw std::invalid_argument("profile: negative receiver gain");
        }
    }
};

// Three fixed ID profiles with distinct scatterer counts and ranges. The
// dominant scatterers sit >= 0.30 m apart (two native range bins), so the
// class-conditional spectra peak in clearly separated beat-frequency bins.
inline std::array<SyntheticProfile, 3> default_id_profiles() {
    std::array<SyntheticProfile, 3> p;
    p[0].scatterers = {{0.17, 0.45, 0.05}, {0.40, 0.18, 0.05}};
    p[0].rx_gain = {1.00, 0.92, 1.05};
    p[0].drift_rad_per_chirp = 0.015;

    p[1].scatterers = {{0.48, 0.42, 0.05}, {0.25, 0.15, 0.05}, {0.66, 0.12, 0.05}};
    p[1].rx_gain = {0.95, 1.00, 0.90};
    p[1].drift_rad_per_chirp = 0.020;

    p[2].scatterers = {{0.80, 0.40, 0.05}, {0.33, 0.16, 0.05}, {0.58, 0.12, 0.05},
                       {0.45, 0.08, 0.05}};
    p[2].rx_gain = {1.05, 0.90, 1.00};
    p[2].drift_rad_per_chirp = 0.010;
    return p;
}

// OOD frames draw a fresh profile per frame. Every sampled parameter comes
// from ranges disjoint from the ID profiles: scatterer ranges from bands
// outside the ID span, and chirp-to-chirp phase jitter/drift well above the
// ID values, so OOD frames lack the slow-time coherence the network learns.
struct OodSampler {
    std::vector<std::array<double, 2>> range_bands{{0.88, 1.00}, {0.06, 0.11}};
    std::size_t min_scatterers = 2, max_scatterers = 5;
    double min_amplitude = 0.10, max_amplitude = 0.30;
    double max_total_amplitude = 0.90;
    double noise_std = 0.02;
    std::array<double, 2> phase_jitter_range{0.15, 0.60};
    std::array<double, 2> drift_range{0.03, 0.10};

    SyntheticProfile sample(Rng& rng) const {
        SyntheticProfile p;
        const std::size_t n = rng.uniform_int(min_scatterers, max_scatterers);
        double budget = max_total_amplitude;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& band = range_bands[rng.uniform_int(0, range_bands.size() - 1)];
            Scatterer s;
            s.range_m = rng.uniform(band[0], band[1]);
            s.amplitude = std::min(rng.uniform(min_amplitude, max_amplitude), budget);
            s.phase_jitter_std = rng.uniform(phase_jitter_range[0], phase_jitter_range[1]);
            budget -= s.amplitude;
            if (s.amplitude > 0.0) p.scatterers.push_back(s);
        }
        for (auto& g : p.rx_gain) g = rng.uniform(0.9, 1.1);
        p.noise_std = noise_std;
        p.drift_rad_per_chirp = rng.uniform(drift_range[0], drift_range[1]);
        return p;
    }
};

// ---------------------------------------------------------------------------
// Frame synthesis
// ---------------------------------------------------------------------------

inline FrameCube synth_frame(const SyntheticProfile& profile, const RadarConfig& cfg,
                             Rng& rng, Label label = Label::Unlabeled) {
    profile.validate();
    const std::size_t n_scat = profile.scatterers.size();

    std::vector<double> base_phase(n_scat);
    for (auto& p : base_phase) p = rng.uniform(0.0, kTwoPi);
    std::array<double, 3> rx_phase{};
    for (std::size_t r = 0; r < cfg.n_rx && r < 3; ++r) rx_phase[r] = rng.uniform(0.0, kTwoPi);
    // per-(scatterer, chirp) phase jitter, drawn in a fixed order
    std::vector<double> jitter(n_scat * cfg.n_chirps, 0.0);
    for (std::size_t k = 0; k < n_scat; ++k) {
        const double std_k = profile.scatterers[k].phase_jitter_std;
        for (std::size_t c = 0; c < cfg.n_chirps; ++c) {
            jitter[k * cfg.n_chirps + c] = std_k > 0.0 ? rng.normal(0.0, std_k) : 0.0;
        }
    }

    std::vector<double> omega(n_scat); // radians per sample index
    for (std::size_t k = 0; k < n_scat; ++k) {
        omega[k] = kTwoPi * beat_frequency_hz(profile.scatterers[k].range_m, cfg) /
                   cfg.adc_rate_hz;
    }

    FrameCube frame;
    frame.label = label;
    frame.codes.resize(cfg.frame_samples());
    std::size_t idx = 0;
    for (std::size_t r = 0; r < cfg.n_rx; ++r) {
        const double gain = r < 3 ? profile.rx_gain[r] : 1.0;
        for (std::size_t c = 0; c < cfg.n_chirps; ++c) {
            for (std::size_t s = 0; s < cfg.n_samples; ++s) {
                double v = 0.0;
                for (std::size_t k = 0; k < n_scat; ++k) {
                    const double phase = base_phase[k] + rx_phase[r] +
                                         profile.drift_rad_per_chirp * static_cast<double>(c) +
                                         jitter[k * cfg.n_chirps + c];
                    v += profile.scatterers[k].amplitude *
                         std::cos(omega[k] * static_cast<double>(s) + phase);
                }
                v *= gain;
                if (profile.noise_std > 0.0) v += rng.normal(0.0, profile.noise_std);
                const double code = std::round(kAdcMid + kQuantScale * v);
                frame.codes[idx++] = static_cast<std::uint16_t>(
                    std::clamp(code, 0.0, static_cast<double>(kAdcMax)));
            }
        }
    }
    return frame;
}

// Full synthetic dataset: frames_per_class per ID class from the fixed
// profiles, plus frames_per_class OOD frames from freshly sampled profiles.
// The worker threads only pick up disjoint frame indices; content depends on
// (seed, frame index) alone.
inline Dataset synth_dataset(std::size_t frames_per_class, std::uint64_t seed,
                             const RadarConfig& cfg = {},
                             const std::array<SyntheticProfile, 3>& id_profiles =
                                 default_id_profiles(),
                             const OodSampler& ood = {}, std::size_t threads = 1) {
    cfg.validate();
    for (const auto& p : id_profiles) p.validate();
    Dataset ds;
    ds.n_rx = cfg.n_rx;
    ds.n_chirps = cfg.n_chirps;
    ds.n_samples = cfg.n_samples;
    const std::size_t total = frames_per_class * 4;
    ds.frames.resize(total);

    auto build_frame = [&](std::size_t i) {
        Rng rng = Rng::derive(seed, i);
        const std::size_t group = i / frames_per_class; // 0..2 ID classes, 3 = OOD
        if (group < 3) {
            ds.frames[i] = synth_frame(id_profiles[group], cfg, rng,
                                       static_cast<Label>(group));
        } else {
            const SyntheticProfile p = ood.sample(rng);
            ds.frames[i] = synth_frame(p, cfg, rng, Label::Ood);
        }
    };

    if (threads <= 1 || total < 2) {
        for (std::size_t i = 0; i < total; ++i) build_frame(i);
    } else {
        const std::size_t n_workers = std::min<std::size_t>(threads, total);
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (std::size_t w = 0; w < n_workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < total; i += n_workers) build_frame(i);
            });
        }
        for (auto& t : pool) t.join();
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

// codes -> [-1,1] via code/4095*2-1, then per-receiver mean removal.
inline void normalize_into(const FrameCube& frame, std::size_t n_rx, std::size_t plane,
                           float* dst) {
    const double scale = 2.0 / static_cast<double>(kAdcMax);
    for (std::size_t r = 0; r < n_rx; ++r) {
        const std::uint16_t* src = frame.codes.data() + r * plane;
        double mean = 0.0;
        for (std::size_t i = 0; i < plane; ++i) mean += static_cast<double>(src[i]) * scale - 1.0;
        mean /= static_cast<double>(plane);
        float* out = dst + r * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            out[i] = static_cast<float>(static_cast<double>(src[i]) * scale - 1.0 - mean);
        }
    }
}

inline TensorF normalize(const FrameCube& frame, const Dataset& ds) {
    if (frame.codes.size() != ds.frame_samples()) {
        throw ShapeError("normalize: frame has " + std::to_string(frame.codes.size()) +
                         " codes, dataset expects " + std::to_string(ds.frame_samples()));
    }
    TensorF t = TensorF::zeros({ds.n_rx, ds.n_chirps, ds.n_samples});
    normalize_into(frame, ds.n_rx, ds.n_chirps * ds.n_samples, t.data().data());
    return t;
}

// Stack frames into a [B,3,H,W] batch tensor (no gradient tracking).
inline TensorF stack_frames(const std::vector<const FrameCube*>& frames, const Dataset& ds) {
    if (frames.empty()) throw ShapeError("stack_frames: empty batch");
    TensorF t = TensorF::zeros({frames.size(), ds.n_rx, ds.n_chirps, ds.n_samples});
    const std::size_t stride = ds.frame_samples();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        normalize_into(*frames[i], ds.n_rx, ds.n_chirps * ds.n_samples,
                       t.data().data() + i * stride);
    }
    return t;
}

// ---------------------------------------------------------------------------
// FOODRAW1 container
// ---------------------------------------------------------------------------
//
// magic "FOODRAW1" | u32 version=1 | u32 frame_count | u8 n_rx | u8 reserved
// | u16 n_chirps | u16 n_samples | per frame: u8 label + codes as u16,
// little-endian throughout.

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
public:
    ByteReader(const char* data, std::size_t size, std::string source)
        : data_(data), size_(size), source_(std::move(source)) {}

    std::size_t offset() const { return pos_; }

    const char* take(std::size_t n, const char* what) {
        if (pos_ + n > size_) {
            throw FormatError(source_ + ": truncated while reading " + std::string(what) +
                              " at offset " + std::to_string(pos_) + " (need " +
                              std::to_string(n) + " bytes, have " +
                              std::to_string(size_ - pos_) + ")");
        }
        const char* p = data_ + pos_;
        pos_ += n;
        return p;
    }

    std::uint8_t u8(const char* what) {
        return static_cast<std::uint8_t>(*take(1, what));
    }

    std::uint16_t u16(const char* what) {
        const unsigned char* p = reinterpret_cast<const unsigned char*>(take(2, what));
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }

    std::uint32_t u32(const char* what) {
        const unsigned char* p = reinterpret_cast<const unsigned char*>(take(4, what));
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) |
               (static_cast<std::uint32_t>(p[3]) << 24);
    }

private:
    const char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
    std::string source_;
};

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open file");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(path + ": cannot open file for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(path + ": write failed");
}

} // namespace detail

inline constexpr char kRawMagic[9] = "FOODRAW1";

inline std::string serialize_dataset(const Dataset& ds) {
    std::string out;
    out.reserve(24 + ds.frames.size() * (1 + 2 * ds.frame_samples()));
    out.append(kRawMagic, 8);
    detail::put_u32(out, 1);
    detail::put_u32(out, static_cast<std::uint32_t>(ds.frames.size()));
    out.push_back(static_cast<char>(ds.n_rx));
    out.push_back(0); // reserved
    detail::put_u16(out, static_cast<std::uint16_t>(ds.n_chirps));
    detail::put_u16(out, static_cast<std::uint16_t>(ds.n_samples));
    const std::size_t per_frame = ds.frame_samples();
    for (const auto& f : ds.frames) {
        if (f.codes.size() != per_frame) {
            throw FormatError("dataset: frame has " + std::to_string(f.codes.size()) +
                              " codes, expected " + std::to_string(per_frame));
        }
        out.push_back(static_cast<char>(f.label));
        for (std::uint16_t c : f.codes) {
            if (c > kAdcMax) {
                throw FormatError("dataset: code " + std::to_string(c) +
                                  " outside 12-bit range");
            }
            detail::put_u16(out, c);
        }
    }
    return out;
}

inline Dataset deserialize_dataset(const std::string& bytes, const std::string& source) {
    detail::ByteReader r(bytes.data(), bytes.size(), source);
    const char* magic = r.take(8, "magic");
    if (std::memcmp(magic, kRawMagic, 8) != 0) {
        throw FormatError(source + ": bad magic, not a FOODRAW1 file");
    }
    const std::uint32_t version = r.u32("version");
    if (version != 1) {
        throw FormatError(source + ": unsupported FOODRAW1 version " + std::to_string(version));
    }
    const std::uint32_t count = r.u32("frame count");
    Dataset ds;
    ds.n_rx = r.u8("n_rx");
    r.u8("reserved");
    ds.n_chirps = r.u16("n_chirps");
    ds.n_samples = r.u16("n_samples");
    if (ds.n_rx == 0 || ds.n_chirps == 0 || ds.n_samples == 0) {
        throw FormatError(source + ": zero dimension in header");
    }
    const std::size_t per_frame = ds.frame_samples();
    ds.frames.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        FrameCube& f = ds.frames[i];
        const std::uint8_t raw_label = r.u8("frame label");
        if (raw_label > 3 && raw_label != 255) {
            throw FormatError(source + ": invalid label " + std::to_string(raw_label) +
                              " in frame " + std::to_string(i));
        }
        f.label = static_cast<Label>(raw_label);
        f.codes.resize(per_frame);
        const unsigned char* p = reinterpret_cast<const unsigned char*>(
            r.take(2 * per_frame, "frame codes"));
        for (std::size_t k = 0; k < per_frame; ++k) {
            const std::uint16_t c =
                static_cast<std::uint16_t>(p[2 * k] | (p[2 * k + 1] << 8));
            if (c > kAdcMax) {
                throw FormatError(source + ": code " + std::to_string(c) +
                                  " outside 12-bit range in frame " + std::to_string(i));
            }
            f.codes[k] = c;
        }
    }
    return ds;
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
    detail::write_file_bytes(path, serialize_dataset(ds));
}

inline Dataset load_dataset(const std::string& path) {
    return deserialize_dataset(detail::read_file_bytes(path), path);
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

// Per-label stratified split; each label's frames are shuffled by a
// label-specific stream derived from the seed, then cut at train_fraction.
// Frame order within each part follows the original dataset order.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction,
                                         std::uint64_t seed) {
    if (train_fraction < 0.0 || train_fraction > 1.0) {
        throw std::invalid_argument("split: train_fraction outside [0,1]");
    }
    Dataset train, test;
    train.n_rx = test.n_rx = ds.n_rx;
    train.n_chirps = test.n_chirps = ds.n_chirps;
    train.n_samples = test.n_samples = ds.n_samples;

    std::vector<bool> in_train(ds.frames.size(), false);
    const std::array<Label, 5> labels{Label::Per1, Label::Per2, Label::Per3, Label::Ood,
                                      Label::Unlabeled};
    for (Label l : labels) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ds.frames.size(); ++i) {
            if (ds.frames[i].label == l) idx.push_back(i);
        }
        if (idx.empty()) continue;
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(l));
        for (std::size_t i = idx.size(); i > 1; --i) {
            const std::size_t j = rng.uniform_int(0, i - 1);
            std::swap(idx[i - 1], idx[j]);
        }
        const std::size_t n_train =
            static_cast<std::size_t>(train_fraction * static_cast<double>(idx.size()) + 1e-9);
        for (std::size_t i = 0; i < n_train; ++i) in_train[idx[i]] = true;
    }
    for (std::size_t i = 0; i < ds.frames.size(); ++i) {
        (in_train[i] ? train : test).frames.push_back(ds.frames[i]);
    }
    return {std::move(train), std::move(test)};
}

} // namespace food
