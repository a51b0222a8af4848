#include "consflow/objectives/losses.hpp"
#include "consflow/objectives/soc.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace consflow;
using ad::Tensor;
using density::ModelKind;
using testing_support::build;
using testing_support::small_spec;

namespace {

density::ModelSpec toy_spec(ModelKind kind, std::size_t D) {
    auto s = small_spec(kind, D, 2, 2);
    s.hidden_width = 6;
    s.hidden_layers = 1;
    s.embed_width = 4;
    return s;
}

std::vector<double> gaussian_cloud(std::size_t n, std::size_t D, double mean, double sd, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(mean, sd);
    std::vector<double> x(n * D);
    for (auto& v : x) v = N(rng);
    return x;
}

Tensor hutchinson_linear(const std::vector<double>& M, std::size_t D, std::size_t probes, unsigned seed) {
    auto field = [&](const Tensor& x) { return ad::matmul(x, Tensor::constant({D, D}, M)); };  // row form: x M
    auto cols = objectives::jacobian_columns(field, Tensor::zeros({1, D}));
    std::mt19937_64 rng(seed);
    return objectives::hutchinson_jac_sym(cols, probes, rng);
}

}  // namespace

// ----------------------------------------------------------------------------
// Hutchinson estimator
// ----------------------------------------------------------------------------

TEST(Hutchinson, RotationFieldGivesEight) {
    // u(x) = (-x2, x1): J = [[0, -1], [1, 0]], ||J - J^T||_F^2 = 8
    auto field = [](const Tensor& x) {
        return ad::concat_cols({-ad::slice_cols(x, 1, 1), ad::slice_cols(x, 0, 1)});
    };
    auto cols = objectives::jacobian_columns(field, Tensor::row(std::vector<double>{0.3, -0.2}));
    EXPECT_EQ(cols[0].at(0, 1), 1.0);
    EXPECT_EQ(cols[1].at(0, 0), -1.0);
    std::mt19937_64 rng(2024);
    const double est = objectives::hutchinson_jac_sym(cols, 10000, rng).item();
    EXPECT_NEAR(est, 8.0, 0.05 * 8.0);
}

TEST(Hutchinson, LinearFieldMatchesFrobeniusNorm) {
    const std::vector<double> M{0.5, -1.2, 0.3, 2.0, 0.1, -0.7, 0.4, 1.5, -0.2};
    double oracle = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            const double d = M[i * 3 + j] - M[j * 3 + i];
            oracle += d * d;
        }
    }
    EXPECT_NEAR(hutchinson_linear(M, 3, 10000, 7).item(), oracle, 0.05 * oracle);
    // error shrinks roughly like 1/sqrt(N)
    double e_small = 0.0, e_large = 0.0;
    for (unsigned s = 0; s < 20; ++s) {
        e_small += std::abs(hutchinson_linear(M, 3, 100, s).item() - oracle);
        e_large += std::abs(hutchinson_linear(M, 3, 10000, 100 + s).item() - oracle);
    }
    EXPECT_LT(e_large, 0.3 * e_small);
}

TEST(Hutchinson, SymmetricJacobianGivesZero) {
    const std::vector<double> S{1.0, 0.4, 0.4, -2.0};
    EXPECT_EQ(hutchinson_linear(S, 2, 100, 1).item(), 0.0);
    auto b = build(small_spec(ModelKind::factorized, 3), 4);
    ad::Bindings p(b.store, false);
    std::mt19937_64 rng(3);
    Tensor x = Tensor::constant({8, 3}, gaussian_cloud(8, 3, 0.0, 1.0, 5));
    EXPECT_EQ(objectives::loss_jac_sym(b.assembly, p, Tensor::constant(0.4), x, 4, rng).item(), 0.0);
    EXPECT_THROW(objectives::hutchinson_jac_sym({}, 1, rng), std::invalid_argument);
}

TEST(Hutchinson, AutoregressiveVelocityIsNotAGradientField) {
    auto b = build(small_spec(ModelKind::autoregressive, 2), 4);
    ad::Bindings p(b.store, false);
    std::mt19937_64 rng(3);
    Tensor x = Tensor::constant({8, 2}, gaussian_cloud(8, 2, 0.0, 1.0, 5));
    EXPECT_GT(objectives::loss_jac_sym(b.assembly, p, Tensor::constant(0.4), x, 4, rng).item(), 0.0);
}

// ----------------------------------------------------------------------------
// Monte Carlo machinery
// ----------------------------------------------------------------------------

TEST(Stratified, DrawLayoutAndWeights) {
    auto b = build(small_spec(ModelKind::pair_mixture, 2, 2, 3), 1);
    ad::Bindings p(b.store, false);
    std::mt19937_64 rng(9);
    auto d = objectives::draw_stratified(b.assembly.model, p, 0.25, 0.75, 100, rng);
    EXPECT_EQ(d.strata, objectives::kTimeStrata);
    EXPECT_EQ(d.per % 3, 0u);
    EXPECT_GE(d.strata * d.per, 100u);
    EXPECT_EQ(d.x.rows(), d.strata * d.per);
    EXPECT_NEAR(ad::sum(d.weight).item(), 1.0, 1e-14);
    EXPECT_DOUBLE_EQ(d.length, 0.5);
    for (std::size_t s = 0; s < d.strata; ++s) {
        EXPECT_GE(d.t.at(s, 0), 0.25 + 0.5 * s / 16.0);
        EXPECT_LT(d.t.at(s, 0), 0.25 + 0.5 * (s + 1) / 16.0);
    }
    auto small = objectives::draw_stratified(b.assembly.model, p, 0.0, 1.0, 4, rng);
    EXPECT_EQ(small.strata, 4u);
    EXPECT_THROW(objectives::draw_stratified(b.assembly.model, p, 0.0, 1.0, 0, rng), std::invalid_argument);
    EXPECT_THROW(objectives::draw_stratified(b.assembly.model, p, 1.0, 0.0, 8, rng), std::invalid_argument);
}

TEST(Kinetic, TranslatedModelMatchesPathEnergy) {
    auto b = build(testing_support::translated_spec(ModelKind::factorized, 2, 2, 1), 3);
    auto tr = testing_support::make_translated(b, 8, 0.5);
    ad::Bindings p(b.store, false);
    std::mt19937_64 rng(77), replay(77);
    const double ke = objectives::kinetic_energy(b.assembly, p, 0.0, 1.0, 64, rng).item();
    // same time draws, exact per-time energy
    auto d = objectives::draw_stratified(b.assembly.model, p, 0.0, 1.0, 64, replay);
    double same_draws = 0.0;
    for (std::size_t s = 0; s < d.strata; ++s) {
        const auto r = tr.shift(d.t.at(s, 0), true);
        same_draws += (r[0] * r[0] + r[1] * r[1]) / static_cast<double>(d.strata);
    }
    EXPECT_NEAR(ke, same_draws, 1e-12 * same_draws);
    // and the continuous path energy by Simpson's rule
    double integral = 0.0;
    const int m = 2000;
    for (int k = 0; k <= m; ++k) {
        const auto r = tr.shift(static_cast<double>(k) / m, true);
        const double w = (k == 0 || k == m) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        integral += w * (r[0] * r[0] + r[1] * r[1]);
    }
    integral /= 3.0 * m;
    EXPECT_NEAR(ke, integral, 0.05 * integral);
}

TEST(Kinetic, StaticModelHasZeroEnergy) {
    auto b = build(testing_support::translated_spec(ModelKind::factorized, 2, 2, 1), 3);
    auto& w = b.store.get(b.assembly.model.network().weight_name(0)).value;
    std::fill(w.begin(), w.end(), 0.0);
    ad::Bindings p(b.store, false);
    std::mt19937_64 rng(1);
    EXPECT_EQ(objectives::kinetic_energy(b.assembly, p, 0.0, 1.0, 32, rng).item(), 0.0);
}

// ----------------------------------------------------------------------------
// Losses
// ----------------------------------------------------------------------------

TEST(Losses, GenerativeLossIsMeanNegativeLogDensity) {
    auto b = build(small_spec(ModelKind::autoregressive, 2), 2);
    ad::Bindings p(b.store, false);
    const std::vector<double> x{0.1, 0.2, -1.0, 0.4};
    const std::vector<double> t{0.2, 0.9};
    double expect = 0.0;
    for (int r = 0; r < 2; ++r) {
        expect -= 0.5 * density::log_density(b.assembly.model, b.store, t[r], std::span(x).subspan(2 * r, 2));
    }
    EXPECT_NEAR(objectives::loss_gm(b.assembly.model, p, Tensor::column(t), Tensor::constant({2, 2}, x)).item(), expect,
                1e-13);
    EXPECT_THROW(objectives::loss_gm(b.assembly.model, p, Tensor::constant(0.5), Tensor::zeros({0, 2})),
                 std::invalid_argument);
    const double nan = std::nan("");
    EXPECT_THROW(objectives::loss_gm(b.assembly.model, p, Tensor::constant(0.5), Tensor::constant({1, 2}, {nan, 0.0})),
                 std::domain_error);
}

TEST(Losses, OtReportDecomposesTotal) {
    auto b = build(small_spec(ModelKind::factorized, 2), 5);
    ad::Bindings p(b.store, false);
    std::vector<objectives::SnapshotBatch> batches{{0.0, gaussian_cloud(16, 2, -1.0, 0.5, 1)},
                                                   {0.5, gaussian_cloud(16, 2, 0.0, 0.5, 2)},
                                                   {1.0, gaussian_cloud(16, 2, 1.0, 0.5, 3)}};
    objectives::OtOptions opt;
    opt.jac_sym_weight = 0.3;
    opt.n_mc = 32;
    std::mt19937_64 rng(4);
    auto r = objectives::loss_ot(b.assembly, p, batches, opt, rng);
    EXPECT_TRUE(r.report.consistent());
    EXPECT_EQ(r.report.terms.size(), 3u);
    EXPECT_EQ(r.report.terms.at("jacobian-symmetry"), 0.0);  // factorized: symmetric Jacobian
    EXPECT_GT(r.report.terms.at("kinetic"), 0.0);
    EXPECT_THROW(objectives::loss_ot(b.assembly, p, {batches[0]}, opt, rng), std::invalid_argument);
}

TEST(Losses, SocTermsAndReport) {
    auto b = build(small_spec(ModelKind::pair_mixture, 2, 2, 2), 6);
    ad::Bindings p(b.store, false);
    objectives::SocEnvironment env;
    env.obstacles = {{0.0, 0.0, 1.0}, {1.5, -1.0, 0.7}};
    auto q0 = gaussian_cloud(16, 2, -3.0, 0.3, 1), q1 = gaussian_cloud(16, 2, 3.0, 0.3, 2);
    objectives::SocOptions opt;
    opt.n_mc = 32;
    std::mt19937_64 rng(5);
    auto r = objectives::loss_soc(b.assembly, p, env, q0, q1, opt, rng);
    EXPECT_TRUE(r.report.consistent());
    for (const char* k : {"nll", "terminal", "control", "running", "entropy"}) EXPECT_TRUE(r.report.terms.count(k)) << k;
    EXPECT_DOUBLE_EQ(r.report.weights.at("entropy"), 0.1);
    EXPECT_THROW(objectives::loss_soc(b.assembly, p, env, {}, q1, opt, rng), std::invalid_argument);

    // endpoints only: exactly the two NLL terms
    opt.terms = {true, false, false};
    auto e = objectives::loss_soc(b.assembly, p, env, q0, q1, opt, rng);
    const double nll0 = objectives::loss_gm(b.assembly.model, p, Tensor::constant(0.0), Tensor::constant({16, 2}, q0)).item();
    const double nll1 = objectives::loss_gm(b.assembly.model, p, Tensor::constant(1.0), Tensor::constant({16, 2}, q1)).item();
    EXPECT_NEAR(e.loss.item(), nll0 + nll1, 1e-12);
}

TEST(Losses, ObstacleCostValues) {
    std::vector<objectives::Obstacle> obs{{1.0, 2.0, 0.5}, {-3.0, 0.0, 1.0}};
    Tensor X = Tensor::constant({2, 2}, {1.0, 2.0, 40.0, 40.0});
    Tensor c = objectives::obstacle_cost(obs, X);
    const double far = std::log1p(std::exp(1.0 - 16.0 - 4.0));  // second obstacle seen from the first centre
    EXPECT_NEAR(c.at(0, 0), std::log1p(std::exp(0.25)) + far, 1e-14);
    EXPECT_LT(c.at(1, 0), 1e-300);
    EXPECT_THROW(objectives::obstacle_cost(obs, Tensor::zeros({1, 3})), ad::ShapeError);
}

TEST(Losses, EnvironmentValidationAndViolations) {
    objectives::SocEnvironment env;
    env.obstacles = {{0.0, 0.0, 1.0}};
    EXPECT_NO_THROW(env.validate());
    EXPECT_DOUBLE_EQ(env.violation_fraction({0.0, 0.5, 1.0, 0.0, 2.0, 2.0, -0.1, 0.1}), 0.5);  // boundary is outside
    env.obstacles[0].radius = 0.0;
    EXPECT_THROW(env.validate(), std::invalid_argument);
    env.obstacles.clear();
    env.control_sigma = 0.0;
    EXPECT_THROW(env.validate(), std::invalid_argument);
}

TEST(Schedule, StagedSoc) {
    auto def = objectives::staged_soc_schedule({});
    ASSERT_EQ(def.size(), 3u);
    EXPECT_EQ(def[0].iterations, 1000);
    EXPECT_EQ(def[1].iterations, 1000);
    EXPECT_EQ(def[2].iterations, 20000);
    EXPECT_FALSE(def[0].terms.control);
    EXPECT_TRUE(def[1].terms.control && !def[1].terms.running);
    EXPECT_TRUE(def[2].terms.running);

    objectives::SocScheduleConfig one;
    one.single_stage = true;
    auto s = objectives::staged_soc_schedule(one);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_TRUE(s[0].terms.endpoints && s[0].terms.control && s[0].terms.running);

    objectives::SocScheduleConfig skip;
    skip.control_iters = 0;
    EXPECT_EQ(objectives::staged_soc_schedule(skip).size(), 2u);
    skip.running_iters = -1;
    EXPECT_THROW(objectives::staged_soc_schedule(skip), std::invalid_argument);
}

// ----------------------------------------------------------------------------
// Gradient audits: reverse mode vs central differences
// ----------------------------------------------------------------------------

TEST(GradientAudit, GenerativeLoss) {
    for (auto kind : {ModelKind::factorized, ModelKind::autoregressive, ModelKind::pair_mixture}) {
        auto b = build(toy_spec(kind, 2), 11);
        const auto x = gaussian_cloud(12, 2, 0.0, 1.0, 3);
        std::vector<double> t(12);
        for (std::size_t r = 0; r < 12; ++r) t[r] = (r + 0.5) / 12.0;
        auto r = testing_support::check_gradients(b.store, [&](ad::Bindings& p) {
            return objectives::loss_gm(b.assembly.model, p, Tensor::column(t), Tensor::constant({12, 2}, x));
        });
        EXPECT_LT(r.worst, 1e-4) << density::to_string(kind) << ": " << r.where;
    }
}

TEST(GradientAudit, KineticEnergy) {
    for (auto kind : {ModelKind::factorized, ModelKind::autoregressive, ModelKind::pair_mixture}) {
        for (bool vnet : {false, true}) {
            auto b = build(toy_spec(kind, 2), 12, vnet, kind == ModelKind::factorized ? 0.3 : 0.0);
            auto r = testing_support::check_gradients(b.store, [&](ad::Bindings& p) {
                std::mt19937_64 rng(5);
                return objectives::kinetic_energy(b.assembly, p, 0.0, 1.0, 16, rng);
            });
            EXPECT_LT(r.worst, 1e-4) << density::to_string(kind) << " vnet=" << vnet << ": " << r.where;
        }
    }
}

TEST(GradientAudit, TransportLossWithJacobianPenalty) {
    for (auto kind : {ModelKind::factorized, ModelKind::autoregressive}) {
        auto b = build(toy_spec(kind, 2), 13, true);
        std::vector<objectives::SnapshotBatch> batches{{0.0, gaussian_cloud(8, 2, -1.0, 0.5, 1)},
                                                       {1.0, gaussian_cloud(8, 2, 1.0, 0.5, 2)}};
        objectives::OtOptions opt;
        opt.n_mc = 16;
        opt.jac_sym_weight = 0.5;
        opt.jac_sym_probes = 2;
        auto r = testing_support::check_gradients(b.store, [&](ad::Bindings& p) {
            std::mt19937_64 rng(6);
            return objectives::loss_ot(b.assembly, p, batches, opt, rng).loss;
        });
        EXPECT_LT(r.worst, 1e-4) << density::to_string(kind) << ": " << r.where;
    }
}

TEST(GradientAudit, StochasticControlLoss) {
    auto b = build(toy_spec(ModelKind::pair_mixture, 2), 14);
    objectives::SocEnvironment env;
    env.obstacles = {{0.0, 0.0, 1.0}};
    const auto q0 = gaussian_cloud(8, 2, -2.0, 0.3, 1), q1 = gaussian_cloud(8, 2, 2.0, 0.3, 2);
    objectives::SocOptions opt;
    opt.n_mc = 16;
    auto r = testing_support::check_gradients(b.store, [&](ad::Bindings& p) {
        std::mt19937_64 rng(7);
        return objectives::loss_soc(b.assembly, p, env, q0, q1, opt, rng).loss;
    });
    EXPECT_LT(r.worst, 1e-4) << r.where;
}
