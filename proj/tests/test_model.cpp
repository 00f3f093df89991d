#include <gtest/gtest.h>

#include "food/model.hpp"
#include "food/optim.hpp"
#include "food/radar.hpp"

using namespace food;

namespace {

FoodConfig toy_config() {
    FoodConfig cfg;
    cfg.encoder_channels = {3, 4, 8};
    cfg.input_height = 8;
    cfg.input_width = 16;
    cfg.cl_latent = 16;
    cfg.pl_latent = 8;
    cfg.pl_pool_factor = 4;
    cfg.seed = 5;
    return cfg;
}

TensorF random_batch(Rng& rng, std::size_t b, const FoodConfig& cfg) {
    std::vector<float> data(b * 3 * cfg.input_height * cfg.input_width);
    for (auto& v : data) v = static_cast<float>(rng.uniform(-1, 1));
    return TensorF::from_data({b, 3, cfg.input_height, cfg.input_width}, std::move(data));
}

} // namespace

TEST(FoodConfig, DefaultGeometry) {
    FoodConfig cfg;
    const auto out = cfg.encoder_out_dims();
    EXPECT_EQ(out.channels, 64u);
    EXPECT_EQ(out.height, 8u);
    EXPECT_EQ(out.width, 16u);
    EXPECT_EQ(cfg.cl_input_size(), 8192u);
    const auto pre = cfg.prefinal_dims();
    EXPECT_EQ(pre.channels, 16u);
    EXPECT_EQ(pre.height, 32u);
    EXPECT_EQ(pre.width, 64u);
    EXPECT_EQ(cfg.pl_input_size(), 16u * 8u * 16u);
}

TEST(FoodConfig, Validation) {
    FoodConfig cfg;
    cfg.encoder_channels = {4, 8};
    EXPECT_THROW(cfg.validate(), ShapeError); // input channels must be 3
    cfg = FoodConfig{};
    cfg.encoder_channels = {3};
    EXPECT_THROW(cfg.validate(), ShapeError);
    cfg = FoodConfig{};
    cfg.pl_pool_factor = 5; // does not divide 32x64
    EXPECT_THROW(cfg.validate(), ShapeError);
}

TEST(FoodModel, BuildIsDeterministic) {
    FoodConfig cfg = toy_config();
    auto a = FoodModel::build(cfg);
    auto b = FoodModel::build(cfg);
    const auto pa = a.named_parameters();
    const auto pb = b.named_parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        ASSERT_EQ(pa[i].first, pb[i].first);
        ASSERT_EQ(pa[i].second.data(), pb[i].second.data()) << pa[i].first;
    }
    cfg.seed = 6;
    auto c = FoodModel::build(cfg);
    EXPECT_NE(a.named_parameters()[0].second.data(), c.named_parameters()[0].second.data());
}

TEST(FoodModel, ParameterCountMatchesAnalyticFormula) {
    FoodConfig def;
    EXPECT_EQ(FoodModel::build(def).parameter_count(), expected_parameter_count(def));
    EXPECT_EQ(expected_parameter_count(def), 3779017u);

    FoodConfig toy = toy_config();
    EXPECT_EQ(FoodModel::build(toy).parameter_count(), expected_parameter_count(toy));
}

TEST(FoodModel, ForwardShapesAndSharedEncoder) {
    FoodConfig cfg = toy_config();
    FoodModel model = FoodModel::build(cfg);
    Rng rng(17);
    TensorF x = random_batch(rng, 2, cfg);

    std::array<std::vector<float>, 3> z_data;
    for (int j = 0; j < 3; ++j) {
        auto fwd = model.forward_class(x, j);
        EXPECT_EQ(fwd.recon.shape(), x.shape());
        EXPECT_EQ(fwd.prefinal.shape(), (Shape{2, 4, 4, 8}));
        EXPECT_EQ(fwd.z.shape(), (Shape{2, 8, 2, 4}));
        z_data[j] = fwd.z.data();
    }
    // one shared encoder: z identical across classes
    EXPECT_EQ(z_data[0], z_data[1]);
    EXPECT_EQ(z_data[0], z_data[2]);

    EXPECT_THROW(model.forward_class(x, 3), std::out_of_range);
    EXPECT_THROW(model.forward_class(x, -1), std::out_of_range);
}

TEST(FoodModel, DefaultPrefinalShape) {
    FoodConfig cfg;
    cfg.seed = 3;
    FoodModel model = FoodModel::build(cfg);
    Rng rng(18);
    TensorF x = random_batch(rng, 1, cfg);
    auto fwd = model.forward_class(x, 1);
    EXPECT_EQ(fwd.prefinal.shape(), (Shape{1, 16, 32, 64}));
    EXPECT_EQ(fwd.z.shape(), (Shape{1, 64, 8, 16}));
}

TEST(LeafLosses, ZeroWhenLeafIsIdentity) {
    FoodConfig cfg = toy_config();
    cfg.cl_latent = cfg.cl_input_size(); // square weights admit exact identity
    cfg.pl_latent = cfg.pl_input_size();
    FoodModel model = FoodModel::build(cfg);

    auto make_identity = [](LinearLayer<float>& layer) {
        const std::size_t n = layer.weight.shape()[0];
        ASSERT_EQ(layer.weight.shape()[1], n);
        std::fill(layer.weight.data().begin(), layer.weight.data().end(), 0.0f);
        for (std::size_t i = 0; i < n; ++i) layer.weight.data()[i * n + i] = 1.0f;
        std::fill(layer.bias.data().begin(), layer.bias.data().end(), 0.0f);
    };
    make_identity(model.cl_encoder);
    make_identity(model.cl_decoder);
    make_identity(model.pl_encoders[0]);
    make_identity(model.pl_decoders[0]);

    Rng rng(23);
    TensorF x = random_batch(rng, 2, cfg);
    auto fwd = model.forward_class(x, 0);
    auto leaves = model.leaf_losses(fwd.z, fwd.prefinal, 0);
    EXPECT_FLOAT_EQ(leaves.cl.item(), 0.0f);
    EXPECT_FLOAT_EQ(leaves.pl.item(), 0.0f);
}

TEST(LeafLosses, NonNegativeOnRandomInputs) {
    FoodConfig cfg = toy_config();
    FoodModel model = FoodModel::build(cfg);
    Rng rng(29);
    for (int rep = 0; rep < 5; ++rep) {
        TensorF x = random_batch(rng, 2, cfg);
        auto fwd = model.forward_class(x, rep % 3);
        auto leaves = model.leaf_losses(fwd.z, fwd.prefinal, rep % 3);
        EXPECT_GE(leaves.cl.item(), 0.0f);
        EXPECT_GE(leaves.pl.item(), 0.0f);
    }
}

// Regression baseline: seeded default build + one synthetic frame.
TEST(LeafLosses, InitializationBaseline) {
    FoodConfig cfg; // defaults, seed 1
    FoodModel model = FoodModel::build(cfg);
    Rng rng(2024);
    FrameCube f = synth_frame(default_id_profiles()[0], RadarConfig{}, rng);
    Dataset ds;
    TensorF x = stack_frames({&f}, ds);
    auto fwd = model.forward_class(x, 0);
    auto leaves = model.leaf_losses(fwd.z, fwd.prefinal, 0);
    EXPECT_TRUE(leaves.cl.all_finite());
    EXPECT_TRUE(leaves.pl.all_finite());
    EXPECT_GT(leaves.cl.item(), 0.0f);
    EXPECT_GT(leaves.pl.item(), 0.0f);
    EXPECT_NEAR(leaves.cl.item(), 0.357194513f, 0.357194513f * 1e-3);
    EXPECT_NEAR(leaves.pl.item(), 0.00540376035f, 0.00540376035f * 1e-3);
}

TEST(TrainingLosses, TotalIsSumOfSevenComponents) {
    FoodConfig cfg = toy_config();
    FoodModel model = FoodModel::build(cfg);
    Rng rng(31);
    std::array<TensorF, 3> batches{random_batch(rng, 2, cfg), random_batch(rng, 2, cfg),
                                   random_batch(rng, 2, cfg)};
    auto lb = model.training_losses(batches);
    const auto v = lb.values();
    const double sum = v.mp[0] + v.mp[1] + v.mp[2] + v.cl + v.pl[0] + v.pl[1] + v.pl[2];
    EXPECT_NEAR(v.total, sum, 1e-6 * std::max(1.0, std::abs(sum)));
    for (int i = 0; i < 3; ++i) {
        EXPECT_GE(v.mp[i], 0.0);
        EXPECT_GE(v.pl[i], 0.0);
    }
    EXPECT_GE(v.cl, 0.0);
}

TEST(TrainingLosses, DuplicatingBatchesLeavesMeansUnchanged) {
    FoodConfig cfg = toy_config();
    FoodModel model = FoodModel::build(cfg);
    Rng rng(37);
    std::array<TensorF, 3> batches{random_batch(rng, 2, cfg), random_batch(rng, 2, cfg),
                                   random_batch(rng, 2, cfg)};
    const auto v1 = model.training_losses(batches).values();

    std::array<TensorF, 3> doubled;
    for (int c = 0; c < 3; ++c) {
        std::vector<float> twice = batches[c].data();
        twice.insert(twice.end(), batches[c].data().begin(), batches[c].data().end());
        doubled[c] = TensorF::from_data({4, 3, cfg.input_height, cfg.input_width},
                                        std::move(twice));
    }
    const auto v2 = model.training_losses(doubled).values();
    EXPECT_NEAR(v1.total, v2.total, 1e-5 * v1.total);
    for (int i = 0; i < 3; ++i) {
        EXPECT_NEAR(v1.mp[i], v2.mp[i], 1e-5 * std::max(1e-3, v1.mp[i]));
        EXPECT_NEAR(v1.pl[i], v2.pl[i], 1e-5 * std::max(1e-3, v1.pl[i]));
    }
    EXPECT_NEAR(v1.cl, v2.cl, 1e-5 * std::max(1e-3, v1.cl));
}

TEST(TrainingLosses, EmptyBatchRejected) {
    FoodConfig cfg = toy_config();
    FoodModel model = FoodModel::build(cfg);
    std::array<TensorF, 3> batches;
    EXPECT_THROW(model.training_losses(batches), ShapeError);
}

// One Adamax step with a small learning rate strictly decreases the total
// loss on a fixed batch.
TEST(TrainingLosses, DescentOnFixedBatch) {
    FoodConfig cfg = toy_config();
    FoodModel model = FoodModel::build(cfg);
    AdamaxConfig oc;
    oc.lr = 1e-4;
    Adamax<float> optim(model.parameters(), oc);
    Rng rng(41);
    std::array<TensorF, 3> batches{random_batch(rng, 4, cfg), random_batch(rng, 4, cfg),
                                   random_batch(rng, 4, cfg)};
    const double before = model.training_losses(batches).values().total;
    auto lb = model.training_losses(batches);
    lb.total.backward();
    optim.step();
    const double after = model.training_losses(batches).values().total;
    EXPECT_LT(after, before);
}

// A loss with no class-0 MP/PL terms must leave decoder 0 and private leaf 0
// untouched by backward.
TEST(TrainingLosses, GradientRoutingPerDecoder) {
    FoodConfig cfg = toy_config();
    FoodModel model = FoodModel::build(cfg);
    Rng rng(43);
    TensorF x = random_batch(rng, 2, cfg);

    auto fwd = model.forward_class(x, 1);
    auto mp1 = mse(fwd.recon, x);
    auto leaves = model.leaf_losses(fwd.z, fwd.prefinal, 1);
    add(add(mp1, leaves.pl), leaves.cl).backward();

    auto zero_grads = [](const std::vector<Tensor<float>>& params) {
        for (const auto& p : params) {
            for (float g : p.grad()) ASSERT_EQ(g, 0.0f);
        }
    };
    std::vector<Tensor<float>> d0_params, pl0_params, d1_params;
    for (const auto& layer : model.decoders[0]) {
        d0_params.push_back(layer.weight);
        d0_params.push_back(layer.bias);
    }
    pl0_params = {model.pl_encoders[0].weight, model.pl_encoders[0].bias,
                  model.pl_decoders[0].weight, model.pl_decoders[0].bias};
    zero_grads(d0_params);
    zero_grads(pl0_params);

    // the class-1 route did receive gradients
    double norm = 0.0;
    for (const auto& layer : model.decoders[1]) {
        for (float g : layer.weight.grad()) norm += std::abs(g);
    }
    EXPECT_GT(norm, 0.0);
    // and so did the shared encoder
    double enc_norm = 0.0;
    for (const auto& layer : model.encoder) {
        for (float g : layer.weight.grad()) enc_norm += std::abs(g);
    }
    EXPECT_GT(enc_norm, 0.0);
}

TEST(ScoreTriple, CombinesByDefinition) {
    ScoreTriple s;
    s.cl = 0.2;
    s.pl = {0.1, 0.3, 0.5};
    s.mp = {1.0, 2.0, 3.0};
    s.combine();
    EXPECT_DOUBLE_EQ(s.ood_scores[0], 0.3);
    EXPECT_DOUBLE_EQ(s.ood_scores[1], 0.5);
    EXPECT_DOUBLE_EQ(s.ood_scores[2], 0.7);
    EXPECT_DOUBLE_EQ(s.cls_scores[0], 1.1);
    EXPECT_DOUBLE_EQ(s.cls_scores[1], 2.3);
    EXPECT_DOUBLE_EQ(s.cls_scores[2], 3.5);
}

TEST(ScoreSample, DeterministicAndGraphFree) {
    FoodConfig cfg;
    cfg.seed = 9;
    FoodModel model = FoodModel::build(cfg);
    Rng rng(47);
    FrameCube f = synth_frame(default_id_profiles()[1], RadarConfig{}, rng);
    Dataset ds;
    TensorF x = stack_frames({&f}, ds);
    const ScoreTriple a = model.score_sample(x);
    const ScoreTriple b = model.score_sample(x);
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(a.ood_scores[i], b.ood_scores[i]);
        EXPECT_EQ(a.cls_scores[i], b.cls_scores[i]);
        EXPECT_GE(a.ood_scores[i], a.cl); // pl contribution is nonnegative
    }
    TensorF bad = TensorF::zeros({1, 3, 32, 32});
    EXPECT_THROW(model.score_sample(bad), ShapeError);
}
