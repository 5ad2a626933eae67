#include "npc/error.hpp"
#include "npc/rng.hpp"
#include "npc/trainkit.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace npc {
namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

// Scalar objective evaluated in double from the logits.
double objective_value(const Model& m, const Tensor& x, const Objective& o) {
    const auto t = forward(m, x);
    if (o.kind == Objective::Kind::TargetLogit) return t.logits[o.target];
    double mx = t.logits[0];
    for (float v : t.logits.values()) mx = std::max(mx, static_cast<double>(v));
    double z = 0;
    for (float v : t.logits.values()) z += std::exp(v - mx);
    return -(t.logits[o.target] - mx - std::log(z));
}

TEST(Trainkit, LinearGradientIsWeightRow) {
    Rng rng(1);
    const auto w = random_tensor({3, 4}, rng);
    const Model m({4}, {LayerSpec::dense(w, Tensor({3}))}, 3);
    const auto g = grad_input(m, random_tensor({4}, rng), Objective::logit(2));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(g[i], w.at(2, i));
}

TEST(Trainkit, GradientMatchesCentralDifferencesOnCnn) {
    Rng rng(2);
    std::vector<LayerSpec> layers;
    layers.push_back(LayerSpec::conv2d(random_tensor({3, 1, 3, 3}, rng), random_tensor({3}, rng), {1, 1},
                                       {PostOp::relu(), PostOp::maxpool(2, 2), PostOp::flatten()}));
    layers.push_back(LayerSpec::dense(random_tensor({6, 12}, rng), random_tensor({6}, rng), {PostOp::relu()}));
    layers.push_back(LayerSpec::dense(random_tensor({3, 6}, rng), random_tensor({3}, rng)));
    const Model m({1, 4, 4}, std::move(layers), 3);
    const double h = 1e-3;
    std::size_t checked = 0, agreed = 0;
    for (int s = 0; s < 10; ++s) {
        const auto x = random_tensor({1, 4, 4}, rng, 0.0, 1.0);
        const auto o = Objective::cross_entropy(static_cast<std::size_t>(s % 3));
        const auto g = grad_input(m, x, o);
        for (std::size_t i = 0; i < x.size(); ++i) {
            Tensor xp = x, xm = x;
            xp[i] += static_cast<float>(h);
            xm[i] -= static_cast<float>(h);
            const double fd = (objective_value(m, xp, o) - objective_value(m, xm, o)) / (2 * h);
            ++checked;
            // ReLU and pooling kinks may sit inside the difference interval
            agreed += std::abs(fd - g[i]) <= 1e-2 * std::max(1.0, std::abs(fd));
        }
    }
    EXPECT_GE(agreed, checked * 95 / 100);
}

TEST(Trainkit, CrossEntropyGradientSumsToZero) {
    Tensor grad;
    const double loss = cross_entropy(Tensor::vector({1, 2, 3}), 1, &grad);
    EXPECT_NEAR(loss, -(2 - 3 - std::log(std::exp(-2.0) + std::exp(-1.0) + 1.0)), 1e-6);
    EXPECT_NEAR(grad[0] + grad[1] + grad[2], 0.0, 1e-6);
}

LabeledDataset two_blobs() {
    BlobsConfig cfg;
    cfg.classes = 2;
    cfg.samples_per_class = 100;
    cfg.seed = 21;
    return make_blobs(cfg);
}

TEST(Trainkit, SeparableBlobsTrainWell) {
    TrainConfig cfg;
    cfg.seed = 3;
    const auto r = train_sgd(Architecture::mlp(2, {8}, 2), two_blobs(), cfg);
    EXPECT_GE(r.train_accuracy, 0.98);
    EXPECT_DOUBLE_EQ(accuracy(r.model, two_blobs()), r.train_accuracy);
}

TEST(Trainkit, ZeroEpochsReturnsInitialization) {
    TrainConfig cfg;
    cfg.seed = 4;
    cfg.epochs = 0;
    const auto arch = Architecture::mlp(2, {8}, 2);
    const auto r = train_sgd(arch, two_blobs(), cfg);
    EXPECT_EQ(save_model(r.model), save_model(init_model(arch, 4)));
}

TEST(Trainkit, TrainingIsDeterministic) {
    TrainConfig cfg;
    cfg.seed = 5;
    cfg.epochs = 5;
    const auto arch = Architecture::mlp(2, {8}, 2);
    EXPECT_EQ(save_model(train_sgd(arch, two_blobs(), cfg).model), save_model(train_sgd(arch, two_blobs(), cfg).model));
}

TEST(Trainkit, DivergenceIsReported) {
    TrainConfig cfg;
    cfg.learning_rate = 1e30;
    cfg.epochs = 20;
    try {
        train_sgd(Architecture::mlp(2, {8}, 2), two_blobs(), cfg);
        FAIL() << "expected divergence";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("learning rate"), std::string::npos);
    }
}

TEST(Trainkit, NeedsTwoClasses) {
    TrainConfig cfg;
    EXPECT_THROW(train_sgd(Architecture::mlp(2, {8}, 1), two_blobs(), cfg), Error);
}

TEST(Trainkit, PgdZeroBudgetIsIdentity) {
    TrainConfig cfg;
    cfg.seed = 6;
    const auto m = train_sgd(Architecture::mlp(2, {8}, 2), two_blobs(), cfg).model;
    const auto d = two_blobs();
    PgdConfig pc;
    pc.eps = 0.0;
    const auto r = pgd_attack(m, d.inputs[0], d.labels[0], pc);
    EXPECT_EQ(r.adversarial, d.inputs[0]);
    EXPECT_FALSE(r.misclassified);
}

TEST(Trainkit, PgdRespectsBudgetExactly) {
    TrainConfig cfg;
    cfg.seed = 7;
    const auto m = train_sgd(Architecture::mlp(2, {8}, 2), two_blobs(), cfg).model;
    const auto d = two_blobs();
    for (double eps : {0.01, 0.1, 0.3, 1.0 / 3.0}) {
        for (std::size_t i = 0; i < 40; ++i) {
            PgdConfig pc;
            pc.eps = eps;
            pc.seed = i;
            const auto r = pgd_attack(m, d.inputs[i], d.labels[i], pc);
            for (std::size_t j = 0; j < r.adversarial.size(); ++j) {
                EXPECT_LE(std::abs(static_cast<double>(r.adversarial[j]) - d.inputs[i][j]), eps);
                EXPECT_GE(r.adversarial[j], 0.0f);
                EXPECT_LE(r.adversarial[j], 1.0f);
            }
            EXPECT_EQ(r.predicted, predict(m, r.adversarial).label);
            EXPECT_EQ(r.misclassified, r.predicted != d.labels[i]);
        }
    }
}

}  // namespace
}  // namespace npc
