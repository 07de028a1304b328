#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "groupcox/basis.hpp"
#include "groupcox/partial_likelihood.hpp"
#include "groupcox/penalty.hpp"
#include "groupcox/rng.hpp"
#include "groupcox/solver.hpp"

using namespace groupcox;

namespace {

SurvivalDataset tiny_dataset(std::vector<SurvivalRecord> recs, double tau) {
    return SurvivalDataset(std::move(recs), tau);
}

}  // namespace

TEST_CASE("step basis is the bin indicator") {
    auto spec = DictionarySpec::step(4);
    Eigen::VectorXd v = evaluate_basis(spec, 0.3);
    CHECK(v[0] == 0.0);
    CHECK(v[1] == 1.0);  // bin [0.25, 0.5)
    CHECK(v[2] == 0.0);
    CHECK(v[3] == 0.0);
    CHECK(evaluate_basis(spec, 1.0)[3] == 1.0);  // right endpoint joins the last bin
}

TEST_CASE("polynomial basis at zero") {
    auto spec = DictionarySpec::polynomial(3);
    Eigen::VectorXd v = evaluate_basis(spec, 0.0);
    CHECK(v[0] == 1.0);
    CHECK(v[1] == 0.0);
    CHECK(v[2] == 0.0);
}

TEST_CASE("cubic B-splines form a partition of unity") {
    for (int d : {4, 5, 6, 9}) {
        auto spec = DictionarySpec::cubic_bspline(d);
        for (double x : {0.0, 0.37, 0.5, 0.91, 1.0}) {
            Eigen::VectorXd v = evaluate_basis(spec, x);
            CHECK(v.sum() == doctest::Approx(1.0).epsilon(1e-10));
            CHECK(v.minCoeff() >= -1e-12);
        }
    }
}

TEST_CASE("basis evaluation rejects out-of-domain points") {
    auto spec = DictionarySpec::polynomial(3);
    CHECK_THROWS_AS(evaluate_basis(spec, 1.5), std::invalid_argument);
}

TEST_CASE("design expansion matches direct evaluation") {
    auto ds = tiny_dataset({{1.0, 1, {0.5}}}, 1.0);
    auto design = expand_design(ds, DictionarySpec::polynomial(3));
    CHECK(design.matrix(0, 0) == 1.0);
    CHECK(design.matrix(0, 1) == 0.5);
    CHECK(design.matrix(0, 2) == 0.25);
}

TEST_CASE("step expansion puts one indicator per block") {
    auto ds = tiny_dataset({{1.0, 1, {0.1, 0.8}}, {2.0, 0, {0.6, 0.4}}}, 2.0);
    auto design = expand_design(ds, DictionarySpec::step(2));
    REQUIRE(design.matrix.rows() == 2);
    REQUIRE(design.matrix.cols() == 4);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            CHECK(design.matrix.row(i).segment(2 * j, 2).sum() == 1.0);
    CHECK(design.matrix(0, 0) == 1.0);  // x11 = 0.1 in the lower bin
    CHECK(design.matrix(0, 3) == 1.0);  // x12 = 0.8 in the upper bin
}

TEST_CASE("zero coefficients give the zero function") {
    auto ds = tiny_dataset({{1.0, 1, {0.3, 0.7}}, {2.0, 1, {0.2, 0.9}}}, 2.0);
    auto design = expand_design(ds, DictionarySpec::cubic_bspline(4));
    Eigen::VectorXd b = Eigen::VectorXd::Zero(design.dim());
    CHECK((design.matrix * b).norm() == 0.0);
}

TEST_CASE("expansion entries respect the dictionary bound") {
    SimulationConfig sim;
    sim.n = 50;
    sim.p = 3;
    sim.seed = 21;
    SurvivalDataset ds = simulate_cox_sample(sim);
    for (auto family : {BasisFamily::step, BasisFamily::polynomial, BasisFamily::cubic_bspline}) {
        DictionarySpec spec = family == BasisFamily::step ? DictionarySpec::step(5)
                              : family == BasisFamily::polynomial
                                  ? DictionarySpec::polynomial(4)
                                  : DictionarySpec::cubic_bspline(5);
        auto design = expand_design(ds, spec);
        CHECK(design.matrix.cwiseAbs().maxCoeff() <= spec.bound + 1e-12);
    }
}

TEST_CASE("polynomial smoothing matrix matches the analytic integrals") {
    auto factors = smoothing_factors(DictionarySpec::polynomial(3), 1e-8);
    // second derivatives: (0, 0, 2); only M_33 = int 2*2 = 4 on [0,1]
    for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l)
            if (k == 2 && l == 2)
                CHECK(factors.m(k, l) == doctest::Approx(4.0).epsilon(1e-12));
            else
                CHECK(factors.m(k, l) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("degree-four polynomial smoothing matrix is exact") {
    auto factors = smoothing_factors(DictionarySpec::polynomial(4), 1e-8);
    // Psi'' = (0, 0, 2, 6x); int over [0,1]: M33=4, M34=6, M44=12
    CHECK(factors.m(2, 2) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(factors.m(2, 3) == doctest::Approx(6.0).epsilon(1e-12));
    CHECK(factors.m(3, 3) == doctest::Approx(12.0).epsilon(1e-12));
}

TEST_CASE("linear family yields zero smoothing matrix and sqrt(eps) factor") {
    double eps = 1e-8;
    auto factors = smoothing_factors(DictionarySpec::polynomial(2), eps);
    CHECK(factors.m.cwiseAbs().maxCoeff() == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
    CHECK(factors.r(0, 0) == doctest::Approx(std::sqrt(eps)).epsilon(1e-10));
    CHECK(factors.r(1, 1) == doctest::Approx(std::sqrt(eps)).epsilon(1e-10));
}

TEST_CASE("step family has no smoothing factors") {
    CHECK_THROWS_AS(smoothing_factors(DictionarySpec::step(4), 1e-8), std::invalid_argument);
}

TEST_CASE("bspline factor reconstructs the quadrature matrix") {
    auto spec = DictionarySpec::cubic_bspline(6);
    auto factors = smoothing_factors(spec, 1e-8);
    Eigen::MatrixXd recon = factors.r.transpose() * factors.r -
                            factors.eps_r * Eigen::MatrixXd::Identity(6, 6);
    CHECK((recon - factors.m).cwiseAbs().maxCoeff() <= 1e-8 * (1.0 + factors.m.norm()));

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(factors.m);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10 * factors.m.norm());
    CHECK((factors.m - factors.m.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("identity factor leaves the design unchanged") {
    auto ds = tiny_dataset({{1.0, 1, {0.4}}, {2.0, 1, {0.8}}}, 2.0);
    auto design = expand_design(ds, DictionarySpec::polynomial(2));
    SmoothingFactors factors;
    factors.m = Eigen::MatrixXd::Identity(2, 2);
    factors.r = Eigen::MatrixXd::Identity(2, 2);
    factors.eps_r = 0.0;
    auto re = reparametrize_design(design, factors);
    CHECK((re.matrix - design.matrix).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scalar factor halves the rows") {
    DesignExpansion design;
    design.p = 1;
    design.d = 2;
    design.bound = 1.0;
    design.matrix.resize(1, 2);
    design.matrix << 1.0, 0.0;
    SmoothingFactors factors;
    factors.m = 4.0 * Eigen::MatrixXd::Identity(2, 2);
    factors.r = 2.0 * Eigen::MatrixXd::Identity(2, 2);
    factors.eps_r = 0.0;
    auto re = reparametrize_design(design, factors);
    CHECK(re.matrix(0, 0) == doctest::Approx(0.5));
    CHECK(re.matrix(0, 1) == 0.0);
}

TEST_CASE("reparametrization preserves fitted values and objectives") {
    SimulationConfig sim;
    sim.n = 25;
    sim.p = 2;
    sim.seed = 31;
    SurvivalDataset ds = simulate_cox_sample(sim);
    auto design = expand_design(ds, DictionarySpec::polynomial(3));
    Rng rng(5, 1);

    PenaltySpec pen = PenaltySpec::uniform(2, 3, 2.0, 0.3);
    PartialLikelihood lik_orig(design, ds);

    for (int trial = 0; trial < 100; ++trial) {
        // random upper-triangular factor with positive diagonal
        SmoothingFactors factors;
        factors.r = Eigen::MatrixXd::Zero(3, 3);
        for (int i = 0; i < 3; ++i) {
            for (int j = i; j < 3; ++j) factors.r(i, j) = rng.normal();
            factors.r(i, i) = 0.5 + std::abs(factors.r(i, i));
        }
        factors.m = factors.r.transpose() * factors.r;
        factors.eps_r = 0.0;

        auto re = reparametrize_design(design, factors);
        PartialLikelihood lik_re(re, ds);

        Eigen::VectorXd bt(design.dim());
        for (int k = 0; k < bt.size(); ++k) bt[k] = rng.normal();
        // b = R^{-1} bt blockwise
        Eigen::VectorXd b(design.dim());
        for (int j = 0; j < design.p; ++j)
            b.segment(3 * j, 3) =
                factors.r.triangularView<Eigen::Upper>().solve(bt.segment(3 * j, 3));

        Eigen::VectorXd f_orig = design.matrix * b;
        Eigen::VectorXd f_re = re.matrix * bt;
        CHECK((f_orig - f_re).lpNorm<Eigen::Infinity>() <= 1e-10);

        double obj_orig = objective(lik_orig, pen, b);
        // the likelihood part agrees; compare with the same penalty evaluated
        // on the original coordinates
        double obj_re = -lik_re.value(bt) + weighted_penalty(pen, b);
        CHECK(std::abs(obj_orig - obj_re) <= 1e-8 * (1.0 + std::abs(obj_orig)));
    }
}

TEST_CASE("optional standardization rescales columns") {
    SimulationConfig sim;
    sim.n = 30;
    sim.p = 1;
    sim.seed = 77;
    SurvivalDataset ds = simulate_cox_sample(sim);
    ExpandOptions opts;
    opts.standardize = true;
    auto design = expand_design(ds, DictionarySpec::polynomial(3), opts);
    REQUIRE(design.column_scale.size() == 3);
    // column 0 is the constant function: zero variance, left alone
    CHECK(design.column_scale[0] == 1.0);
    for (int c = 1; c < 3; ++c) {
        double mean = design.matrix.col(c).mean();
        double sd = std::sqrt((design.matrix.col(c).array() - mean).square().mean());
        CHECK(sd == doctest::Approx(1.0).epsilon(1e-9));
    }
}
