#include "consflow/eval/diagnostics.hpp"
#include "consflow/eval/residual.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace consflow;
using ad::Tensor;
using density::ModelKind;
using testing_support::build;
using testing_support::random_points;
using testing_support::small_spec;

namespace {

const ModelKind kAllKinds[] = {ModelKind::factorized, ModelKind::autoregressive, ModelKind::pair_mixture};

std::string label(ModelKind k, std::size_t D, bool vnet, unsigned seed) {
    return density::to_string(k) + " D=" + std::to_string(D) + " vnet=" + std::to_string(vnet) + " seed=" +
           std::to_string(seed);
}

double max_of(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, x);
    return m;
}

}  // namespace

TEST(Continuity, HoldsByConstructionAcrossKindsDimensionsAndSeeds) {
    for (auto kind : kAllKinds) {
        for (std::size_t D : {1u, 2u, 5u}) {
            for (bool vnet : {false, true}) {
                for (unsigned seed = 0; seed < 4; ++seed) {
                    auto b = build(small_spec(kind, D), seed, vnet);
                    std::vector<double> t, x;
                    random_points(25, D, 100 + seed, t, x, 4.0);
                    auto r = eval::continuity_residual(b.assembly, b.store, t, x);
                    EXPECT_LT(r.max_relative(), 1e-4) << label(kind, D, vnet, seed);
                }
            }
        }
    }
}

TEST(Continuity, HoldsForPermutedAutoregressiveOrdering) {
    auto s = small_spec(ModelKind::autoregressive, 3);
    s.ordering = {2, 0, 1};
    auto b = build(s, 4, true);
    std::vector<double> t, x;
    random_points(40, 3, 5, t, x);
    EXPECT_LT(eval::continuity_residual(b.assembly, b.store, t, x).max_relative(), 1e-4);
}

TEST(Continuity, ScalingLastCancellationTermBreaksIt) {
    for (auto kind : {ModelKind::factorized, ModelKind::autoregressive}) {
        auto b = build(small_spec(kind, 2), 7);
        std::vector<double> t, x;
        random_points(50, 2, 11, t, x);
        const double clean = eval::continuity_residual(b.assembly, b.store, t, x).max_relative();
        b.assembly.options.bt_scale = 0.5;
        const double broken = eval::continuity_residual(b.assembly, b.store, t, x).max_relative();
        EXPECT_LT(clean, 1e-8) << density::to_string(kind);
        EXPECT_GT(broken, 1e-4) << density::to_string(kind);
        EXPECT_GT(broken, 1e3 * clean) << density::to_string(kind);
    }
}

TEST(Continuity, DroppingCancellationKeepsContinuity) {
    // -d_t a alone still conserves mass; it only fails in the far field
    auto b = build(small_spec(ModelKind::autoregressive, 2), 9);
    b.assembly.options.use_bt = false;
    std::vector<double> t, x;
    random_points(30, 2, 3, t, x);
    EXPECT_LT(eval::continuity_residual(b.assembly, b.store, t, x).max_relative(), 1e-4);
}

TEST(Continuity, FokkerPlanckWithVolatility) {
    for (auto kind : kAllKinds) {
        auto b = build(small_spec(kind, 2), 13, false, 0.5);
        std::vector<double> t, x;
        random_points(30, 2, 17, t, x, 2.5);
        auto r = eval::fokker_planck_residual(b.assembly, b.store, t, x);
        EXPECT_LT(r.max_relative(), 1e-4) << density::to_string(kind);
    }
    // a time-varying schedule too
    auto b = build(small_spec(ModelKind::factorized, 2), 13);
    b.assembly.options.volatility = {0.1, 0.8};
    std::vector<double> t, x;
    random_points(30, 2, 17, t, x, 2.5);
    EXPECT_LT(eval::fokker_planck_residual(b.assembly, b.store, t, x).max_relative(), 1e-4);
}

TEST(DivergenceFree, CancellationAndLearnedFields) {
    for (auto kind : kAllKinds) {
        for (std::size_t D : {2u, 5u}) {
            auto b = build(small_spec(kind, D), 21, true);
            std::vector<double> t, x;
            random_points(25, D, 23, t, x);
            auto db = eval::relative_divergence(b.assembly, b.store, [](const auto& e) { return e.b; }, t, x);
            auto dv = eval::relative_divergence(b.assembly, b.store, [](const auto& e) { return e.v; }, t, x);
            EXPECT_LT(max_of(db), 1e-5) << label(kind, D, true, 21);
            EXPECT_LT(max_of(dv), 1e-5) << label(kind, D, true, 21);
        }
    }
}

TEST(DivergenceFree, AntisymmetricDivergenceOfKnownPotential) {
    // A = [[0, x1 x2], [x1^2, 0]] gives v = (x1, 2 x1 - x2)
    auto potential = [](const Tensor& x) {
        Tensor x1 = ad::slice_cols(x, 0, 1), x2 = ad::slice_cols(x, 1, 1);
        return ad::concat_cols({0.0 * x1, x1 * x2, x1 * x1, 0.0 * x1});
    };
    Tensor x = Tensor::constant({2, 2}, {0.5, -1.0, 2.0, 3.0});
    Tensor v = conservation::antisymmetric_divergence(potential, x);
    EXPECT_DOUBLE_EQ(v.at(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(v.at(0, 1), 2.0);
    EXPECT_DOUBLE_EQ(v.at(1, 0), 2.0);
    EXPECT_DOUBLE_EQ(v.at(1, 1), 1.0);
    EXPECT_EQ(conservation::antisymmetric_divergence(potential, Tensor::constant({2, 1}, {1, 2})).at(1, 0), 0.0);
}

TEST(FarField, CancellationRemovesSpuriousFlux) {
    auto b = build(testing_support::translated_spec(ModelKind::factorized, 2, 2, 1), 3);
    testing_support::make_translated(b, 4, 0.6);
    std::vector<double> radii;
    for (int r = 0; r <= 40; ++r) radii.push_back(r);
    auto curve = eval::farfield_probe(b.assembly, b.store, 0.5, eval::probe_directions(2, 8, 1), radii);
    EXPECT_GT(curve.spurious.back(), 1e-3);
    EXPECT_LT(curve.corrected.back(), 1e-8);
    EXPECT_TRUE(curve.corrected_monotone_from(10.0));
    // spurious stays O(1) while corrected decays by orders of magnitude
    EXPECT_GT(curve.spurious.back(), 0.1 * curve.spurious[10]);
    EXPECT_LT(curve.corrected.back(), 1e-6 * curve.corrected[10]);
}

TEST(FarField, AutoregressiveCancellationDecaysToo) {
    auto b = build(small_spec(ModelKind::autoregressive, 2), 31);
    std::vector<double> radii{10, 20, 30, 40};
    auto curve = eval::farfield_probe(b.assembly, b.store, 0.5, eval::probe_directions(2, 4, 1), radii);
    EXPECT_LT(curve.corrected.back(), 1e-8);
}

TEST(Velocity, TranslatedModelVelocityIsTheTranslationRate) {
    for (std::size_t D : {1u, 2u, 3u}) {
        auto b = build(testing_support::translated_spec(ModelKind::factorized, D, 3, 1), 5);
        auto tr = testing_support::make_translated(b, 6, 0.7);
        std::vector<double> t, x;
        random_points(30, D, 7, t, x, 15.0);  // includes far-field points
        ad::Bindings p(b.store, false);
        for (std::size_t r = 0; r < t.size(); ++r) {
            Tensor u = conservation::velocity(b.assembly, p, Tensor::constant(t[r]),
                                              Tensor::constant({1, D}, {x.begin() + r * D, x.begin() + (r + 1) * D}));
            const auto rate = tr.shift(t[r], true);
            for (std::size_t i = 0; i < D; ++i) {
                EXPECT_NEAR(u.at(0, i), rate[i], 1e-12 * (1.0 + std::abs(rate[i]))) << "D=" << D << " row " << r;
            }
        }
    }
}

TEST(Velocity, ClosedFormMatchesGenericPath) {
    for (auto kind : {ModelKind::factorized, ModelKind::pair_mixture}) {
        for (double g : {0.0, 0.4}) {
            auto b = build(small_spec(kind, 3), 8, false, g);
            std::mt19937_64 rng(2);
            const double t = 0.6;
            auto xs = density::sample(b.assembly.model, b.store, t, 50, rng);
            ad::Bindings p(b.store, false);
            Tensor X = Tensor::constant({50, 3}, xs);
            b.assembly.options.path = conservation::VelocityPath::closed_form;
            Tensor uc = conservation::velocity(b.assembly, p, Tensor::constant(t), X);
            b.assembly.options.path = conservation::VelocityPath::generic;
            Tensor ug = conservation::velocity(b.assembly, p, Tensor::constant(t), X);
            double worst = 0.0;
            for (std::size_t i = 0; i < uc.size(); ++i) {
                worst = std::max(worst, std::abs(uc.values()[i] - ug.values()[i]) / (1e-3 + std::abs(ug.values()[i])));
            }
            EXPECT_LT(worst, 1e-8) << density::to_string(kind) << " g=" << g;
        }
    }
}

TEST(Velocity, FactorizedJacobianIsDiagonal) {
    auto b = build(small_spec(ModelKind::factorized, 4), 10);
    std::vector<double> t, x;
    random_points(20, 4, 12, t, x);
    ad::Bindings p(b.store, false);
    Tensor X = Tensor::constant({20, 4}, x);
    for (std::size_t j = 0; j < 4; ++j) {
        ad::TangentScope s;
        std::vector<double> e(80, 0.0);
        for (std::size_t r = 0; r < 20; ++r) e[r * 4 + j] = 1.0;
        Tensor u = conservation::velocity(b.assembly, p, Tensor::column(t), s.seed(X, Tensor::constant({20, 4}, e)));
        Tensor du = u.tangent(s.tag());
        for (std::size_t r = 0; r < 20; ++r) {
            for (std::size_t i = 0; i < 4; ++i) {
                if (i != j) {
                    EXPECT_EQ(du.at(r, i), 0.0) << "du_" << i << "/dx_" << j;
                }
            }
            EXPECT_NE(du.at(r, j), 0.0);
        }
    }
}

TEST(Velocity, ClosedFormRejectsAutoregressive) {
    auto b = build(small_spec(ModelKind::autoregressive, 2), 1);
    b.assembly.options.path = conservation::VelocityPath::closed_form;
    ad::Bindings p(b.store, false);
    EXPECT_THROW(conservation::velocity(b.assembly, p, Tensor::constant(0.5), Tensor::zeros({1, 2})),
                 std::invalid_argument);
}

TEST(PairMixture, TranslatedComponentsConserveMass) {
    auto b = build(testing_support::translated_spec(ModelKind::pair_mixture, 2, 2, 2), 15);
    b.store.get(b.assembly.model.weights_name()).value = {0.4, -0.3};
    auto tr = testing_support::make_translated(b, 16, 0.8);
    std::vector<double> t, x;
    random_points(100, 2, 18, t, x, 4.0);
    EXPECT_LT(eval::continuity_residual(b.assembly, b.store, t, x).max_relative(), 1e-4);
    // velocity is the responsibility-weighted translation rate
    ad::Bindings p(b.store, false);
    const double tt = 0.3;
    const std::vector<double> pt{0.2, -0.4};
    auto terms = b.assembly.model.terms(p, Tensor::constant(tt), Tensor::row(pt));
    auto lrk = terms.component_log_density();
    const double w0 = std::exp(lrk.at(0, 0) + terms.log_weights.at(0, 0));
    const double w1 = std::exp(lrk.at(0, 1) + terms.log_weights.at(0, 1));
    const auto rate = tr.shift(tt, true);
    Tensor u = conservation::velocity(b.assembly, p, Tensor::constant(tt), Tensor::row(pt));
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_NEAR(u.at(0, i), (w0 * rate[i] + w1 * rate[2 + i]) / (w0 + w1), 1e-12);
    }
}

TEST(Volatility, ScheduleBasics) {
    conservation::VolatilitySchedule g{0.2, 1.0};
    EXPECT_DOUBLE_EQ(g(0.5), 0.6);
    EXPECT_FALSE(g.is_zero());
    EXPECT_TRUE(conservation::VolatilitySchedule{}.is_zero());
    EXPECT_THROW((conservation::VolatilitySchedule{-0.1, 0.0}.validate()), std::invalid_argument);
    Tensor h = g.half_g2(Tensor::column(std::vector<double>{0.0, 1.0}));
    EXPECT_DOUBLE_EQ(h.at(0, 0), 0.02);
    EXPECT_DOUBLE_EQ(h.at(1, 0), 0.5);
}

TEST(Assembly, FieldsAreFiniteFarFromSupport) {
    for (auto kind : kAllKinds) {
        auto b = build(small_spec(kind, 3), 2, true, 0.3);
        ad::Bindings p(b.store, false);
        Tensor X = Tensor::constant({2, 3}, {200.0, -150.0, 80.0, -1e3, 0.0, 1e3});
        auto e = conservation::evaluate(b.assembly, p, Tensor::constant(0.5), X, {true, true, true});
        for (const Tensor* f : {&e.flux, &e.velocity, &e.score, &e.b}) {
            for (double v : f->values()) EXPECT_TRUE(std::isfinite(v)) << density::to_string(kind);
        }
        EXPECT_EQ(e.far_field, 2u);
    }
}

namespace {

/// Zeroes the linear head's weights so nothing depends on t (or on x through the head).
testing_support::Built static_model(ModelKind kind, std::size_t D, unsigned seed) {
    auto b = build(testing_support::translated_spec(kind, D, 2, 2), seed);
    auto& w = b.store.get(b.assembly.model.network().weight_name(0)).value;
    std::fill(w.begin(), w.end(), 0.0);
    return b;
}

}  // namespace

TEST(AField, OneDimensionalFieldIsTheCdf) {
    auto b = build(small_spec(ModelKind::factorized, 1), 8);
    ad::Bindings p(b.store, false);
    Tensor X = Tensor::column(std::vector<double>{-2.0, 0.1, 1.7});
    Tensor a = conservation::a_field(b.assembly, p, Tensor::constant(0.4), X);
    auto pt = b.assembly.model.terms(p, Tensor::constant(0.4), X);
    for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(a.at(r, 0), pt.coord.cdf.at(r, 0), 1e-14);
}

TEST(AField, DivergenceRecoversDensity) {
    for (auto kind : kAllKinds) {
        for (std::size_t D : {1u, 2u, 4u}) {
            auto b = build(small_spec(kind, D), 9);
            std::vector<double> t, x;
            random_points(30, D, 10, t, x, 2.5);
            auto div = eval::fd_divergence(
                eval::assembly_field(b.assembly, b.store, [](const auto& e) { return e.a; }, {false, false, false}), t,
                x, D);
            auto rho = eval::density_field(b.assembly, b.store)(t, x);
            for (std::size_t r = 0; r < t.size(); ++r) {
                EXPECT_LT(std::abs(div[r] - rho[r]), 1e-5 * std::max(rho[r], 1e-3)) << label(kind, D, false, 9);
            }
        }
    }
}

TEST(AField, VanishesAsLastCoordinateGoesToMinusInfinity) {
    auto b = build(small_spec(ModelKind::autoregressive, 2), 12);
    ad::Bindings p(b.store, false);
    Tensor a = conservation::a_field(b.assembly, p, Tensor::constant(0.5), Tensor::row(std::vector<double>{0.3, -500.0}));
    EXPECT_LT(std::abs(a.at(0, 1)), 1e-15);
}

TEST(Cancellation, TwoDimensionalFactorizedFormula) {
    auto b = build(small_spec(ModelKind::factorized, 2), 13);
    ad::Bindings p(b.store, false);
    std::vector<double> t, x;
    random_points(10, 2, 14, t, x, 2.0);
    const auto& m = b.assembly.model;
    for (std::size_t r = 0; r < t.size(); ++r) {
        std::span<const double> xr(x.data() + 2 * r, 2);
        Tensor X = Tensor::row(xr);
        auto pt = m.terms(p, Tensor::constant(t[r]), X);
        const double F2 = pt.coord.cdf.at(0, 1), f2 = std::exp(pt.coord.log_pdf.at(0, 1));
        const double dF1 = density::dt_cdf(m, b.store, t[r], xr, 0);
        const double df1 = density::dt_pdf(m, b.store, t[r], xr, 0);
        Tensor bt = conservation::b_field(b.assembly, p, Tensor::constant(t[r]), X);
        EXPECT_NEAR(bt.at(0, 0), -f2 * dF1, 1e-12 * (1.0 + std::abs(f2 * dF1)));
        EXPECT_NEAR(bt.at(0, 1), F2 * df1, 1e-12 * (1.0 + std::abs(F2 * df1)));
    }
}

TEST(StaticModel, AllTransportFieldsVanish) {
    for (auto kind : kAllKinds) {
        for (std::size_t D : {1u, 3u}) {
            auto b = static_model(kind, D, 21);
            std::vector<double> t, x;
            random_points(20, D, 22, t, x, 3.0);
            ad::Bindings p(b.store, false);
            auto e = conservation::evaluate(b.assembly, p, Tensor::column(t), Tensor::constant({t.size(), D}, x));
            for (const Tensor* f : {&e.b, &e.flux, &e.velocity, &e.minus_dt_a}) {
                for (double v : f->values()) EXPECT_EQ(v, 0.0) << label(kind, D, false, 21);
            }
            EXPECT_LT(eval::continuity_residual(b.assembly, b.store, t, x).max_relative(), 1e-10);
            auto curve = eval::farfield_probe(b.assembly, b.store, 0.5, eval::probe_directions(D, 2, 1), {10, 20, 40});
            for (std::size_t k = 0; k < 3; ++k) {
                EXPECT_EQ(curve.spurious[k], 0.0);
                EXPECT_EQ(curve.corrected[k], 0.0);
            }
        }
    }
}

TEST(Flux, TranslatedModelFluxIsVelocityTimesDensity) {
    auto b = build(testing_support::translated_spec(ModelKind::factorized, 3, 2, 1), 23);
    auto tr = testing_support::make_translated(b, 24, 0.6);
    std::vector<double> t, x;
    random_points(25, 3, 25, t, x, 3.0);
    ad::Bindings p(b.store, false);
    auto e = conservation::evaluate(b.assembly, p, Tensor::column(t), Tensor::constant({t.size(), 3}, x));
    for (std::size_t r = 0; r < t.size(); ++r) {
        const double rho = std::exp(e.log_density.at(r, 0));
        const auto rate = tr.shift(t[r], true);
        for (std::size_t i = 0; i < 3; ++i) {
            EXPECT_NEAR(e.flux.at(r, i), rate[i] * rho, 1e-12 * (1.0 + std::abs(rate[i])) * std::max(rho, 1e-3));
        }
    }
}
