#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "befseg/model.hpp"

using namespace befseg;

namespace {

constexpr double kGradTol = 1e-4;
constexpr double kLn2 = 0.6931471805599453;
constexpr double kLn4 = 1.3862943611198906;

LabelMap labels_from(std::size_t h, std::size_t w, const std::vector<std::uint8_t>& v) {
    return LabelMap{h, w, v};
}

LabelMap constant_labels(std::size_t h, std::size_t w, std::uint8_t cls) {
    return LabelMap{h, w, std::vector<std::uint8_t>(h * w, cls)};
}

EdgeMap constant_edges(std::size_t h, std::size_t w, double v) {
    return EdgeMap{h, w, std::vector<double>(h * w, v)};
}

// one-hot probability rows [K,C] with row k putting everything on target[k]
Tensor onehot_probs(std::size_t k, std::size_t c, const std::vector<std::size_t>& targets) {
    std::vector<double> p(k * c, 0.0);
    for (std::size_t q = 0; q < k; ++q) p[q * c + targets[q]] = 1.0;
    return Tensor::from_vector({k, c}, std::move(p));
}

}  // namespace

TEST_CASE("class targets follow the fixed assignment with background fallback") {
    // classes 0 and 2 present, 1 and 3 absent
    LabelMap gt = labels_from(1, 4, {0, 2, 2, 0});
    std::vector<bool> present = classes_present(gt, 4);
    CHECK(present == std::vector<bool>{true, false, true, false});

    Tensor t = cls_targets_from_labels(gt, 4, 4);
    CHECK(t.shape() == Shape{4, 4});
    CHECK(t.values() == std::vector<double>{1, 0, 0, 0,   // query 0 -> class 0
                                            1, 0, 0, 0,   // class 1 absent -> background
                                            0, 0, 1, 0,   // query 2 -> class 2
                                            1, 0, 0, 0}); // class 3 absent -> background
    CHECK_FALSE(t.requires_grad());
}

TEST_CASE("classification loss oracles") {
    LabelMap gt = labels_from(2, 2, {0, 1, 2, 3});  // every class present

    // perfect prediction: -log 1 = 0, exactly
    CHECK(cls_loss(onehot_probs(4, 4, {0, 1, 2, 3}), gt).item() == 0.0);

    // uniform probabilities over 4 classes: every query contributes ln 4
    Tensor uniform = Tensor::full({4, 4}, 0.25);
    CHECK(cls_loss(uniform, gt).item() == doctest::Approx(kLn4).epsilon(1e-15));

    // shrinking the target probability raises the loss
    Tensor good = Tensor::from_vector({4, 4}, [] {
        std::vector<double> p(16, 0.1);
        for (std::size_t q = 0; q < 4; ++q) p[q * 4 + q] = 0.7;
        return p;
    }());
    CHECK(cls_loss(good, gt).item() < cls_loss(uniform, gt).item());

    // zero probability at the target stays finite through the clamp:
    // one query at -ln(1e-12), three at 0
    Tensor hole = onehot_probs(4, 4, {1, 1, 2, 3});
    CHECK(cls_loss(hole, gt).item() ==
          doctest::Approx(-std::log(1e-12) / 4.0).epsilon(1e-12));

    // a query whose class is absent is scored against the background
    LabelMap only_bg = constant_labels(2, 2, 0);
    Tensor bg_heavy = onehot_probs(2, 2, {0, 0});   // query 1 predicts background
    Tensor cls_heavy = onehot_probs(2, 2, {0, 1});  // query 1 predicts its absent class
    CHECK(cls_loss(bg_heavy, only_bg).item() == 0.0);
    CHECK(cls_loss(cls_heavy, only_bg).item() > 1.0);

    CHECK_THROWS_WITH_AS(cls_loss(Tensor::zeros({4}), gt), doctest::Contains("[K,C]"),
                         std::invalid_argument);
}

TEST_CASE("mask loss oracles") {
    // exact binary prediction: both the BCE and the Dice term vanish
    LabelMap gt = labels_from(2, 2, {0, 1, 1, 0});
    Tensor perfect = Tensor::from_vector({2, 2, 2}, {1, 0, 0, 1, 0, 1, 1, 0});
    CHECK(mask_loss(perfect, gt).item() == 0.0);

    // all-background truth with one all-0.5 mask: BCE is ln 2 regardless of
    // the target, and the Dice term follows the closed form
    LabelMap bg = constant_labels(4, 4, 0);
    Tensor half = Tensor::full({1, 4, 4}, 0.5);
    const double hw = 16.0;
    const double dice = 1.0 - (2.0 * 0.5 * hw + 1.0) / (0.5 * hw + hw + 1.0);
    CHECK(mask_loss(half, bg).item() == doctest::Approx(kLn2 + dice).epsilon(1e-14));

    // an absent class predicted empty contributes nothing
    Tensor clean = Tensor::from_vector({2, 4, 4}, [] {
        std::vector<double> v(32, 0.0);
        for (std::size_t i = 0; i < 16; ++i) v[i] = 1.0;  // mask 0 covers everything
        return v;
    }());
    CHECK(mask_loss(clean, bg).item() == 0.0);

    // drifting from the truth toward 0.5 raises the loss
    Tensor drift = Tensor::from_vector({2, 2, 2}, {0.8, 0.2, 0.2, 0.8, 0.2, 0.8, 0.8, 0.2});
    CHECK(mask_loss(perfect, gt).item() < mask_loss(drift, gt).item());
    Tensor half22 = Tensor::full({2, 2, 2}, 0.5);
    CHECK(mask_loss(drift, gt).item() < mask_loss(half22, gt).item());

    CHECK_THROWS_WITH_AS(mask_loss(Tensor::zeros({2, 3, 3}), gt),
                         doctest::Contains("do not match ground truth"), std::invalid_argument);
}

TEST_CASE("weighted total composes linearly") {
    Tensor cls = Tensor::scalar(0.2);
    Tensor mask = Tensor::scalar(0.3);
    Tensor edge = Tensor::scalar(0.7);

    LossWeights unit{1.0, 1.0, 0.0};
    CHECK(total_loss(cls, mask, edge, unit).item() == 0.5);

    LossWeights defaults;
    CHECK(defaults.lambda1 == 1.0);
    CHECK(defaults.lambda2 == 1.0);
    CHECK(defaults.lambda3 == 0.1);
    CHECK(total_loss(cls, mask, edge, defaults).item() ==
          doctest::Approx(0.2 + 0.3 + 0.07).epsilon(1e-15));

    // linear in each weight
    LossWeights bumped{1.0, 1.0, 0.3};
    double delta = total_loss(cls, mask, edge, bumped).item() -
                   total_loss(cls, mask, edge, unit).item();
    CHECK(delta == doctest::Approx(0.3 * 0.7).epsilon(1e-15));

    LossWeights negative{1.0, -0.5, 0.1};
    CHECK_THROWS_WITH_AS(total_loss(cls, mask, edge, negative),
                         doctest::Contains("non-negative"), std::invalid_argument);
}

TEST_CASE("edge loss oracles") {
    // two hand-built levels with zeroed boundary projections: every map
    // value is exactly 0.5
    FeaturePyramid pyr;
    pyr.encoded = true;
    pyr.levels.push_back(Tensor::full({2, 2, 2}, 0.3));
    pyr.levels.push_back(Tensor::full({2, 1, 1}, -0.8));
    BoundaryHead head;
    head.projections.push_back(Tensor::zeros({1, 2, 1, 1}, true));
    head.projections.push_back(Tensor::zeros({1, 2, 1, 1}, true));

    EdgePyramid zeros = {constant_edges(2, 2, 0.0), constant_edges(1, 1, 0.0)};
    // each level contributes mean((0.5 - 0)^2) = 0.25
    CHECK(edge_loss(pyr, zeros, head).item() == 0.5);

    EdgePyramid halves = {constant_edges(2, 2, 0.5), constant_edges(1, 1, 0.5)};
    CHECK(edge_loss(pyr, halves, head).item() == 0.0);

    // smaller disagreement, smaller loss
    EdgePyramid quarter = {constant_edges(2, 2, 0.25), constant_edges(1, 1, 0.25)};
    CHECK(edge_loss(pyr, quarter, head).item() == doctest::Approx(0.125).epsilon(1e-15));

    // a projection doubling channel 0 of a constant-one feature: sigmoid(2)
    Tensor proj = Tensor::zeros({1, 2, 1, 1});
    proj.values_mut()[0] = 2.0;
    Tensor ones = Tensor::full({2, 3, 3}, 1.0);
    Tensor bmap = boundary_map(ones, proj);
    CHECK(bmap.shape() == Shape{1, 3, 3});
    for (double v : bmap.values())
        CHECK(v == doctest::Approx(0.8807970779778823).epsilon(1e-15));

    EdgePyramid short_pyr = {constant_edges(2, 2, 0.0)};
    CHECK_THROWS_AS(edge_loss(pyr, short_pyr, head), std::invalid_argument);
    EdgePyramid wrong_dims = {constant_edges(2, 2, 0.0), constant_edges(2, 2, 0.0)};
    CHECK_THROWS_WITH_AS(edge_loss(pyr, wrong_dims, head), doctest::Contains("level"),
                         std::invalid_argument);
}

TEST_CASE("loss gradients survive finite-difference scrutiny") {
    Rng rng(31);

    // classification through softmax
    LabelMap gt = labels_from(1, 3, {0, 2, 2});
    std::vector<double> lv(9);
    for (double& v : lv) v = rng.uniform(-1.0, 1.0);
    Tensor logits = Tensor::from_vector({3, 3}, std::move(lv));
    double err = grad_check(
        [&](const Tensor& x) { return cls_loss(softmax_lastdim(x), gt); }, logits);
    CHECK(err < kGradTol);

    // mask loss through the sigmoid, exercising BCE and Dice together
    LabelMap mgt = labels_from(4, 4, [] {
        std::vector<std::uint8_t> v(16, 0);
        for (std::size_t i : {1ul, 2ul, 5ul, 6ul, 10ul}) v[i] = 1;
        return v;
    }());
    std::vector<double> mv(2 * 16);
    for (double& v : mv) v = rng.uniform(-2.0, 2.0);
    Tensor mask_logits = Tensor::from_vector({2, 4, 4}, std::move(mv));
    err = grad_check([&](const Tensor& x) { return mask_loss(sigmoid(x), mgt); }, mask_logits);
    CHECK(err < kGradTol);

    // edge loss with respect to the features and the projection
    EdgePyramid edges = {constant_edges(2, 2, 0.25)};
    BoundaryHead head;
    head.projections.push_back(xavier_uniform({1, 2, 1, 1}, 2, 1, rng));
    std::vector<double> fv(8);
    for (double& v : fv) v = rng.uniform(-1.0, 1.0);
    Tensor feats = Tensor::from_vector({2, 2, 2}, std::move(fv));
    auto pyramid_of = [](const Tensor& level) {
        FeaturePyramid p;
        p.encoded = true;
        p.levels.push_back(level);
        return p;
    };
    err = grad_check([&](const Tensor& x) { return edge_loss(pyramid_of(x), edges, head); },
                     feats);
    CHECK(err < kGradTol);
    FeaturePyramid fixed = pyramid_of(feats);
    err = grad_check(
        [&](const Tensor& p) {
            BoundaryHead h;
            h.projections.push_back(p);
            return edge_loss(fixed, edges, h);
        },
        head.projections[0]);
    CHECK(err < kGradTol);
}

TEST_CASE("zero boundary weight silences exactly the boundary gradients") {
    ModelConfig mc;
    mc.image_size = 16;
    mc.num_classes = 3;
    mc.num_scales = 2;
    mc.channels = {4, 6};
    mc.num_queries = 3;
    mc.query_dim = 8;
    mc.decoder_rounds = 1;

    Rng rng(32);
    Model model(mc, rng);
    Rng data_rng(33);
    Image img{16, 16, std::vector<double>(3 * 16 * 16)};
    for (double& v : img.pixels) v = data_rng.uniform();
    LabelMap gt{16, 16, std::vector<std::uint8_t>(256)};
    for (auto& l : gt.labels) l = static_cast<std::uint8_t>(data_rng.uniform_int(0, 2));

    ForwardResult fwd = model.forward(img);
    EdgePyramid edges = model.edge_targets(img);

    LossWeights off{1.0, 1.0, 0.0};
    LossBreakdown bd;
    Tensor loss = model.loss(fwd, gt, edges, off, &bd);
    model.zero_grad();
    backward(loss);

    // the edge term is still computed and reported...
    CHECK(bd.edge > 0.0);
    CHECK(bd.total == doctest::Approx(bd.cls + bd.mask).epsilon(1e-15));

    // ...but contributes nothing: boundary gradients are exactly zero while
    // the shared trunk still learns
    double trunk_norm = 0.0;
    for (const auto& [name, tensor] : model.params()) {
        double norm = 0.0;
        for (double g : tensor->grad()) norm += g * g;
        if (name.find("befbm.boundary.") == 0) {
            INFO("parameter ", name);
            CHECK(norm == 0.0);
        } else {
            trunk_norm += norm;
        }
    }
    CHECK(trunk_norm > 0.0);

    // switching the weight back on wakes the boundary head up
    LossWeights on{1.0, 1.0, 0.1};
    ForwardResult fwd2 = model.forward(img);
    Tensor loss2 = model.loss(fwd2, gt, edges, on);
    model.zero_grad();
    backward(loss2);
    for (const auto& [name, tensor] : model.params()) {
        if (name.find("befbm.boundary.") != 0) continue;
        double norm = 0.0;
        for (double g : tensor->grad()) norm += g * g;
        INFO("parameter ", name);
        CHECK(norm > 0.0);
    }
}
