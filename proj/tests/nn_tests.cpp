#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "arcade/net.hpp"
#include "test_support.hpp"

using namespace arcade;
using Catch::Approx;

namespace {

ParamSet<double> zero_params(const MlpModel<double>& model) {
    ParamSet<double> p;
    p.layer_map = model.layer_map();
    p.head_range = p.layer_map.head_range();
    p.values.assign(model.param_count(), 0.0);
    return p;
}

}  // namespace

TEST_CASE("forward: all-zero parameters give probability 0.5", "[nn]") {
    MlpModel<double> model(MlpSpec{3, {4, 4}});
    ParamSet<double> p = zero_params(model);
    Rng rng(7);
    Batch<double> batch = test::random_batch(6, 3, rng);
    for (double v : model.forward(p, batch)) CHECK(v == 0.5);
}

TEST_CASE("forward: scalar affine layer matches closed form", "[nn]") {
    MlpModel<double> model(MlpSpec{1, {}});
    ParamSet<double> p = zero_params(model);
    p.values = {1.0, 0.0};  // weight, bias
    Batch<double> batch;
    batch.n = 1;
    batch.width = 1;
    batch.inputs = {2.0};
    const auto probs = model.forward(p, batch);
    CHECK(probs[0] == Approx(0.8807970779778823).epsilon(1e-12));
}

TEST_CASE("forward: matches naive nested-loop oracle", "[nn]") {
    for (std::uint64_t seed : {11u, 12u, 13u, 14u}) {
        auto fx = test::make_clean_fixture(seed);
        const auto got = fx.model.forward(fx.params, fx.batch);
        const auto want = test::naive_forward(fx.params, fx.batch);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == Approx(want[i]).margin(1e-12));
    }
}

TEST_CASE("forward: deterministic and permutation-invariant in the mean", "[nn]") {
    auto fx = test::make_clean_fixture(21);
    const auto a = fx.model.forward(fx.params, fx.batch);
    const auto b = fx.model.forward(fx.params, fx.batch);
    CHECK(a == b);  // bit-identical

    // permuting rows permutes outputs and leaves loss/gradient unchanged
    Batch<double> rev = fx.batch;
    for (std::size_t i = 0; i < fx.batch.n; ++i) {
        const std::size_t j = fx.batch.n - 1 - i;
        std::copy(fx.batch.row(j), fx.batch.row(j) + fx.batch.width,
                  rev.inputs.begin() + i * fx.batch.width);
        rev.labels[i] = fx.batch.labels[j];
    }
    std::vector<double> g0, g1;
    const double l0 = fx.model.loss_grad(fx.params, fx.batch, g0);
    const double l1 = fx.model.loss_grad(fx.params, rev, g1);
    CHECK(l0 == Approx(l1).margin(1e-12));
    for (std::size_t i = 0; i < g0.size(); ++i) CHECK(g0[i] == Approx(g1[i]).margin(1e-12));
}

TEST_CASE("forward: shape mismatch is an input error", "[nn]") {
    MlpModel<double> model(MlpSpec{3, {4}});
    ParamSet<double> p = zero_params(model);
    Rng rng(3);
    Batch<double> batch = test::random_batch(5, 2, rng);  // wrong width
    CHECK_THROWS_AS(model.forward(p, batch), InputError);
    Batch<double> empty;
    empty.width = 3;
    CHECK_THROWS_AS(model.forward(p, empty), InputError);
}

TEST_CASE("bce_loss: closed-form values", "[nn]") {
    CHECK(bce_loss<double>({0.5}, {1}) == Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bce_loss<double>({0.8, 0.2}, {1, 0}) == Approx(-std::log(0.8)).epsilon(1e-12));
    CHECK_THROWS_AS(bce_loss<double>({0.5, 0.5}, {1}), InputError);
}

TEST_CASE("bce_loss_from_logits: saturated logits stay finite", "[nn]") {
    const double l = bce_loss_from_logits<double>({100.0, -100.0}, {1, 0});
    CHECK(std::isfinite(l));
    CHECK(l >= 0.0);
    CHECK(l < 1e-10);
    // agrees with the probability form away from saturation
    const double a = bce_loss_from_logits<double>({0.3, -1.2}, {1, 0});
    const double b = bce_loss<double>({sigmoid(0.3), sigmoid(-1.2)}, {1, 0});
    CHECK(a == Approx(b).epsilon(1e-12));
}

TEST_CASE("backward: zero net head-bias gradient is mean(p - y)", "[nn]") {
    MlpModel<double> model(MlpSpec{2, {3}});
    ParamSet<double> p = zero_params(model);
    Rng rng(5);
    Batch<double> batch = test::random_batch(6, 2, rng);
    batch.labels = {0, 1, 0, 1, 0, 1};  // balanced
    std::vector<double> g;
    model.loss_grad(p, batch, g);
    const std::size_t head_bias = p.head_range.end - 1;
    CHECK(g[head_bias] == Approx(0.0).margin(1e-15));

    for (auto& y : batch.labels) y = 0;
    model.loss_grad(p, batch, g);
    CHECK(g[head_bias] == Approx(0.5).epsilon(1e-12));
}

TEST_CASE("backward: unlabeled batch is an input error", "[nn]") {
    MlpModel<double> model(MlpSpec{2, {3}});
    ParamSet<double> p = zero_params(model);
    Rng rng(5);
    Batch<double> batch = test::random_batch(4, 2, rng, /*labeled=*/false);
    std::vector<double> g;
    CHECK_THROWS_AS(model.loss_grad(p, batch, g), InputError);
}

TEST_CASE("backward: matches central finite differences", "[nn]") {
    for (std::uint64_t seed = 100; seed < 106; ++seed) {
        auto fx = test::make_clean_fixture(seed);
        const GradReport report = gradcheck(fx.model, fx.params, fx.batch, 1e-5);
        INFO("seed " << seed << " worst index " << report.worst_index);
        CHECK(report.max_rel_error < 1e-6);
    }
}

TEST_CASE("gradcheck: corrupted coordinate is localized", "[nn]") {
    auto fx = test::make_clean_fixture(200);
    std::vector<double> g;
    fx.model.loss_grad(fx.params, fx.batch, g);
    std::size_t biggest = 0;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (std::abs(g[i]) > std::abs(g[biggest])) biggest = i;
    REQUIRE(std::abs(g[biggest]) > 1e-3);
    g[biggest] *= 2.0;
    const GradReport report = gradcheck(fx.model, fx.params, fx.batch, 1e-5, &g);
    CHECK(report.worst_index == biggest);
    CHECK(report.max_rel_error > 1e-3);
}

TEST_CASE("gradcheck: nonpositive step size is an input error", "[nn]") {
    auto fx = test::make_clean_fixture(201);
    CHECK_THROWS_AS(gradcheck(fx.model, fx.params, fx.batch, 0.0), InputError);
}

TEST_CASE("param set invariants are enforced", "[nn]") {
    MlpModel<double> model(MlpSpec{2, {3}});
    Rng rng(9);
    ParamSet<double> p = model.init_params(rng);
    CHECK_NOTHROW(validate_param_set(p));

    ParamSet<double> bad = p;
    bad.values.push_back(0.0);
    CHECK_THROWS_AS(validate_param_set(bad), InputError);

    bad = p;
    bad.head_range.begin = 0;
    CHECK_THROWS_AS(validate_param_set(bad), InputError);

    bad = p;
    bad.values[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(validate_param_set(bad), NumericError);
}

TEST_CASE("layer map: structure of a two-hidden-layer net", "[nn]") {
    const LayerMap map = MlpSpec{2, {5, 3}}.layer_map();
    REQUIRE(map.segments.size() == 5);  // affine relu affine relu affine
    CHECK(map.segments[0].length == 5 * 2 + 5);
    CHECK(map.segments[2].length == 3 * 5 + 3);
    CHECK(map.segments[4].length == 3 + 1);
    CHECK(map.total_params == 15 + 18 + 4);
    const IndexRange head = map.head_range();
    CHECK(head.begin == 33);
    CHECK(head.end == 37);
}

TEST_CASE("float instantiation works end to end", "[nn]") {
    MlpModel<float> model(MlpSpec{2, {4}});
    Rng rng(17);
    ParamSet<float> p = model.init_params(rng);
    Batch<float> batch;
    batch.n = 3;
    batch.width = 2;
    batch.inputs = {0.1f, -0.2f, 0.4f, 0.8f, -0.5f, 0.3f};
    batch.labels = {1, 0, 1};
    std::vector<float> g;
    const float loss = model.loss_grad(p, batch, g);
    CHECK(std::isfinite(loss));
    CHECK(g.size() == p.values.size());
}
