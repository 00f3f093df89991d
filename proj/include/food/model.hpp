// The FOOD reconstruction network.
//
// One shared convolutional encoder E feeds three class-specific transposed-
// convolution decoders D_1..D_3 (identical shapes, independent parameters).
// Two kinds of linear autoencoder leaves hang off the trunk:
//   - the common leaf (E_CL/D_CL) reconstructs the flattened encoder output,
//   - one private leaf per class (E_PLk/D_PLk) reconstructs the pooled
//     activation entering the final layer of decoder k.
// Training minimizes the sum of the seven reconstruction errors (three main
// paths, one common leaf, three private leaves) simultaneously; scoring
// combines the same errors into per-class OOD and classification scores.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "food/ops.hpp"
#include "food/rng.hpp"
#include "food/tensor.hpp"

namespace food {

struct FoodConfig {
    std::vector<std::size_t> encoder_channels{3, 16, 32, 64};
    std::size_t kernel = 3;
    std::size_t stride = 2;
    std::size_t padding = 1;
    std::size_t cl_latent = 128;
    std::size_t pl_latent = 128;
    std::size_t pl_pool_factor = 4;
    double leaky_slope = 0.2;
    std::size_t input_height = 64;
    std::size_t input_width = 128;
    std::uint64_t seed = 1;

    struct StageDims {
        std::size_t channels, height, width;
    };

    // Shapes after the input and after each encoder stage.
    std::vector<StageDims> encoder_chain() const {
        std::vector<StageDims> chain;
        chain.push_back({encoder_channels.at(0), input_height, input_width});
        for (std::size_t i = 1; i < encoder_channels.size(); ++i) {
            const auto& prev = chain.back();
            if (prev.height + 2 * padding < kernel || prev.width + 2 * padding < kernel) {
                throw ShapeError("food config: stage " + std::to_string(i) +
                                 " input smaller than kernel");
            }
            chain.push_back({encoder_channels[i],
                             (prev.height + 2 * padding - kernel) / stride + 1,
                             (prev.width + 2 * padding - kernel) / stride + 1});
        }
        return chain;
    }

    StageDims encoder_out_dims() const { return encoder_chain().back(); }

    std::size_t cl_input_size() const {
        const auto d = encoder_out_dims();
        return d.channels * d.height * d.width;
    }

    // Activation entering the final reconstruction layer of each decoder.
    StageDims prefinal_dims() const {
        const auto chain = encoder_chain();
        return chain[1];
    }

    std::size_t pl_input_size() const {
        const auto d = prefinal_dims();
        return d.channels * (d.height / pl_pool_factor) * (d.width / pl_pool_factor);
    }

    void validate() const {
        if (encoder_channels.size() < 2) {
            throw ShapeError("food config: need at least one encoder stage");
        }
        if (encoder_channels.front() != 3) {
            throw ShapeError("food config: input channel count must be 3 (receivers), got " +
                             std::to_string(encoder_channels.front()));
        }
        for (std::size_t c : encoder_channels) {
            if (c == 0) throw ShapeError("food config: zero-width channel in chain");
        }
        if (kernel == 0 || stride == 0) throw ShapeError("food config: kernel/stride must be positive");
        if (cl_latent == 0 || pl_latent == 0) throw ShapeError("food config: latent dims must be positive");
        if (pl_pool_factor == 0) throw ShapeError("food config: pool factor must be positive");
        const auto chain = encoder_chain();
        for (const auto& d : chain) {
            if (d.height == 0 || d.width == 0) {
                throw ShapeError("food config: spatial dims collapse to zero in encoder chain");
            }
        }
        const auto pf = prefinal_dims();
        if (pf.height % pl_pool_factor != 0 || pf.width % pl_pool_factor != 0) {
            throw ShapeError("food config: pl_pool_factor " + std::to_string(pl_pool_factor) +
                             " does not divide prefinal dims " + std::to_string(pf.height) +
                             "x" + std::to_string(pf.width));
        }
    }
};

template <typename T>
struct ConvLayer {
    Tensor<T> weight, bias;
};

template <typename T>
struct DeconvLayer {
    Tensor<T> weight, bias;
    std::size_t output_pad_h = 0, output_pad_w = 0;
};

template <typename T>
struct LinearLayer {
    Tensor<T> weight, bias;
};

// Per-sample scores. mp/cl/pl are the raw reconstruction errors; the
// combined OOD and classification scores are stored alongside so downstream
// code and ablations can use either view.
struct ScoreTriple {
    std::array<double, 3> mp{};
    std::array<double, 3> pl{};
    double cl = 0.0;
    std::array<double, 3> ood_scores{}; // cl + pl[i]
    std::array<double, 3> cls_scores{}; // mp[i] + pl[i]

    void combine() {
        for (int i = 0; i < 3; ++i) {
            ood_scores[i] = cl + pl[i];
            cls_scores[i] = mp[i] + pl[i];
        }
    }
};

// The seven loss terms of one training step, still attached to the graph.
template <typename T>
struct LossBreakdown {
    std::array<Tensor<T>, 3> mp;
    Tensor<T> cl;
    std::array<Tensor<T>, 3> pl;
    Tensor<T> total;

    struct Values {
        std::array<double, 3> mp{}, pl{};
        double cl = 0.0, total = 0.0;
    };

    Values values() const {
        Values v;
        for (int i = 0; i < 3; ++i) {
            v.mp[i] = static_cast<double>(mp[i].item());
            v.pl[i] = static_cast<double>(pl[i].item());
        }
        v.cl = static_cast<double>(cl.item());
        v.total = static_cast<double>(total.item());
        return v;
    }
};

template <typename T>
struct FoodModelT {
    FoodConfig config;
    std::vector<ConvLayer<T>> encoder;
    std::array<std::vector<DeconvLayer<T>>, 3> decoders;
    LinearLayer<T> cl_encoder, cl_decoder;
    std::array<LinearLayer<T>, 3> pl_encoders, pl_decoders;

    static FoodModelT build(const FoodConfig& cfg) {
        cfg.validate();
        FoodModelT m;
        m.config = cfg;
        Rng rng(cfg.seed);

        const auto chain = cfg.encoder_chain();
        const std::size_t stages = chain.size() - 1;

        for (std::size_t i = 0; i < stages; ++i) {
            ConvLayer<T> layer;
            layer.weight = kaiming_uniform(
                rng, {chain[i + 1].channels, chain[i].channels, cfg.kernel, cfg.kernel},
                chain[i].channels * cfg.kernel * cfg.kernel);
            layer.bias = Tensor<T>::zeros({chain[i + 1].channels}, true);
            m.encoder.push_back(std::move(layer));
        }

        for (int d = 0; d < 3; ++d) {
            for (std::size_t i = stages; i-- > 0;) {
                DeconvLayer<T> layer;
                layer.weight = kaiming_uniform(
                    rng, {chain[i + 1].channels, chain[i].channels, cfg.kernel, cfg.kernel},
                    chain[i + 1].channels * cfg.kernel * cfg.kernel);
                layer.bias = Tensor<T>::zeros({chain[i].channels}, true);
                // output_pad recovers the exact encoder input size at this stage
                layer.output_pad_h =
                    chain[i].height -
                    ((chain[i + 1].height - 1) * cfg.stride - 2 * cfg.padding + cfg.kernel);
                layer.output_pad_w =
                    chain[i].width -
                    ((chain[i + 1].width - 1) * cfg.stride - 2 * cfg.padding + cfg.kernel);
                m.decoders[d].push_back(std::move(layer));
            }
        }

        const std::size_t cl_in = cfg.cl_input_size();
        m.cl_encoder = make_linear(rng, cfg.cl_latent, cl_in);
        m.cl_decoder = make_linear(rng, cl_in, cfg.cl_latent);
        const std::size_t pl_in = cfg.pl_input_size();
        for (int d = 0; d < 3; ++d) {
            m.pl_encoders[d] = make_linear(rng, cfg.pl_latent, pl_in);
            m.pl_decoders[d] = make_linear(rng, pl_in, cfg.pl_latent);
        }
        return m;
    }

    // Stable ordering; the checkpoint and optimizer state rely on it.
    std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        for (std::size_t i = 0; i < encoder.size(); ++i) {
            out.emplace_back("enc" + std::to_string(i) + ".w", encoder[i].weight);
            out.emplace_back("enc" + std::to_string(i) + ".b", encoder[i].bias);
        }
        for (int d = 0; d < 3; ++d) {
            for (std::size_t i = 0; i < decoders[d].size(); ++i) {
                const std::string base = "dec" + std::to_string(d) + "." + std::to_string(i);
                out.emplace_back(base + ".w", decoders[d][i].weight);
                out.emplace_back(base + ".b", decoders[d][i].bias);
            }
        }
        out.emplace_back("cl_enc.w", cl_encoder.weight);
        out.emplace_back("cl_enc.b", cl_encoder.bias);
        out.emplace_back("cl_dec.w", cl_decoder.weight);
        out.emplace_back("cl_dec.b", cl_decoder.bias);
        for (int d = 0; d < 3; ++d) {
            out.emplace_back("pl_enc" + std::to_string(d) + ".w", pl_encoders[d].weight);
            out.emplace_back("pl_enc" + std::to_string(d) + ".b", pl_encoders[d].bias);
            out.emplace_back("pl_dec" + std::to_string(d) + ".w", pl_decoders[d].weight);
            out.emplace_back("pl_dec" + std::to_string(d) + ".b", pl_decoders[d].bias);
        }
        return out;
    }

    std::vector<Tensor<T>> parameters() const {
        std::vector<Tensor<T>> out;
        for (auto& [name, t] : named_parameters()) out.push_back(t);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : parameters()) n += p.numel();
        return n;
    }

    // ----- forward paths -------------------------------------------------

    Tensor<T> encode(const Tensor<T>& x) const {
        Tensor<T> h = x;
        for (const auto& layer : encoder) {
            h = leaky_relu(conv2d(h, layer.weight, layer.bias, config.stride, config.padding),
                           static_cast<T>(config.leaky_slope));
        }
        return h;
    }

    struct ClassForward {
        Tensor<T> recon;    // reconstruction, input shape
        Tensor<T> z;        // encoder output
        Tensor<T> prefinal; // activation entering the decoder's final layer
    };

    // Runs the shared encoder and decoder j on a [B,3,H,W] batch. The final
    // decoder layer has no activation so reconstructions can reach the
    // zero-mean normalized input range.
    ClassForward forward_class(const Tensor<T>& x, int class_index) const {
        check_class_index(class_index);
        ClassForward fwd;
        fwd.z = encode(x);
        const auto& dec = decoders[class_index];
        Tensor<T> h = fwd.z;
        for (std::size_t i = 0; i + 1 < dec.size(); ++i) {
            h = leaky_relu(conv2d_transpose(h, dec[i].weight, dec[i].bias, config.stride,
                                            config.padding, dec[i].output_pad_h,
                                            dec[i].output_pad_w),
                           static_cast<T>(config.leaky_slope));
        }
        fwd.prefinal = h;
        const auto& last = dec.back();
        fwd.recon = conv2d_transpose(h, last.weight, last.bias, config.stride, config.padding,
                                     last.output_pad_h, last.output_pad_w);
        return fwd;
    }

    struct LeafLosses {
        Tensor<T> cl;
        Tensor<T> pl;
    };

    // Common-leaf and private-leaf reconstruction errors. The leaf target is
    // the same tensor the leaf consumes, so gradients reach the trunk through
    // both occurrences.
    LeafLosses leaf_losses(const Tensor<T>& z, const Tensor<T>& prefinal,
                           int class_index) const {
        check_class_index(class_index);
        LeafLosses out;
        Tensor<T> zf = flatten_per_item(z);
        Tensor<T> cl_recon =
            linear(linear(zf, cl_encoder.weight, cl_encoder.bias), cl_decoder.weight,
                   cl_decoder.bias);
        out.cl = mse(cl_recon, zf);

        Tensor<T> pooled = flatten_per_item(avg_pool2d(prefinal, config.pl_pool_factor));
        Tensor<T> pl_recon = linear(
            linear(pooled, pl_encoders[class_index].weight, pl_encoders[class_index].bias),
            pl_decoders[class_index].weight, pl_decoders[class_index].bias);
        out.pl = mse(pl_recon, pooled);
        return out;
    }

    // All seven loss terms for one step: one batch per ID class, each routed
    // through its own decoder and private leaf; the common-leaf term sums
    // over the three classes' encoder outputs.
    LossBreakdown<T> training_losses(const std::array<Tensor<T>, 3>& batch_per_class) const {
        for (const auto& b : batch_per_class) {
            if (!b.defined() || b.numel() == 0) {
                throw ShapeError("training_losses: empty class batch");
            }
        }
        LossBreakdown<T> lb;
        for (int j = 0; j < 3; ++j) {
            ClassForward fwd = forward_class(batch_per_class[j], j);
            lb.mp[j] = mse(fwd.recon, batch_per_class[j]);
            LeafLosses leaves = leaf_losses(fwd.z, fwd.prefinal, j);
            lb.pl[j] = leaves.pl;
            lb.cl = j == 0 ? leaves.cl : add(lb.cl, leaves.cl);
        }
        lb.total = add(add(add(lb.mp[0], lb.mp[1]), add(lb.mp[2], lb.cl)),
                       add(add(lb.pl[0], lb.pl[1]), lb.pl[2]));
        return lb;
    }

    // Score one normalized frame [1,3,H,W]: reconstruction errors through
    // every decoder and leaf, no gradients recorded.
    ScoreTriple score_sample(const Tensor<T>& x) const {
        if (x.rank() != 4 || x.shape()[0] != 1 || x.shape()[1] != 3 ||
            x.shape()[2] != config.input_height || x.shape()[3] != config.input_width) {
            throw ShapeError("score_sample: expected [1,3," +
                             std::to_string(config.input_height) + "," +
                             std::to_string(config.input_width) + "], got " +
                             shape_str(x.shape()));
        }
        NoGradGuard no_grad;
        ScoreTriple s;
        Tensor<T> z = encode(x);
        Tensor<T> zf = flatten_per_item(z);
        Tensor<T> cl_recon =
            linear(linear(zf, cl_encoder.weight, cl_encoder.bias), cl_decoder.weight,
                   cl_decoder.bias);
        s.cl = static_cast<double>(mse(cl_recon, zf).item());

        for (int j = 0; j < 3; ++j) {
            const auto& dec = decoders[j];
            Tensor<T> h = z;
            for (std::size_t i = 0; i + 1 < dec.size(); ++i) {
                h = leaky_relu(conv2d_transpose(h, dec[i].weight, dec[i].bias, config.stride,
                                                config.padding, dec[i].output_pad_h,
                                                dec[i].output_pad_w),
                               static_cast<T>(config.leaky_slope));
            }
            const auto& last = dec.back();
            Tensor<T> recon = conv2d_transpose(h, last.weight, last.bias, config.stride,
                                               config.padding, last.output_pad_h,
                                               last.output_pad_w);
            s.mp[j] = static_cast<double>(mse(recon, x).item());

            Tensor<T> pooled = flatten_per_item(avg_pool2d(h, config.pl_pool_factor));
            Tensor<T> pl_recon =
                linear(linear(pooled, pl_encoders[j].weight, pl_encoders[j].bias),
                       pl_decoders[j].weight, pl_decoders[j].bias);
            s.pl[j] = static_cast<double>(mse(pl_recon, pooled).item());
        }
        s.combine();
        return s;
    }

private:
    static void check_class_index(int j) {
        if (j < 0 || j > 2) {
            throw std::out_of_range("class index " + std::to_string(j) +
                                    " outside {0,1,2}");
        }
    }

    static Tensor<T> kaiming_uniform(Rng& rng, Shape shape, std::size_t fan_in) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::vector<T> data(shape_numel(shape));
        for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
        return Tensor<T>::from_data(std::move(shape), std::move(data), true);
    }

    static LinearLayer<T> make_linear(Rng& rng, std::size_t out_dim, std::size_t in_dim) {
        LinearLayer<T> layer;
        layer.weight = kaiming_uniform(rng, {out_dim, in_dim}, in_dim);
        layer.bias = Tensor<T>::zeros({out_dim}, true);
        return layer;
    }
};

using FoodModel = FoodModelT<float>;

// Analytic parameter count from the configuration alone; kept next to the
// model so tests can cross-check the built tensors against it.
inline std::size_t expected_parameter_count(const FoodConfig& cfg) {
    const auto chain = cfg.encoder_chain();
    std::size_t n = 0;
    for (std::size_t i = 1; i < chain.size(); ++i) {
        n += chain[i].channels * chain[i - 1].channels * cfg.kernel * cfg.kernel +
             chain[i].channels; // encoder stage
        n += 3 * (chain[i].channels * chain[i - 1].channels * cfg.kernel * cfg.kernel +
                  chain[i - 1].channels); // matching stage in each decoder
    }
    const std::size_t cl_in = cfg.cl_input_size();
    n += cfg.cl_latent * cl_in + cfg.cl_latent; // E_CL
    n += cl_in * cfg.cl_latent + cl_in;         // D_CL
    const std::size_t pl_in = cfg.pl_input_size();
    n += 3 * (cfg.pl_latent * pl_in + cfg.pl_latent);
    n += 3 * (pl_in * cfg.pl_latent + pl_in);
    return n;
}

} // namespace food
