#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "groupcox/experiments.hpp"
#include "groupcox/partial_likelihood.hpp"

using namespace groupcox;

namespace {

DesignExpansion raw_design(Eigen::MatrixXd m, int p, int d) {
    DesignExpansion design;
    design.matrix = std::move(m);
    design.p = p;
    design.d = d;
    design.bound = design.matrix.size() ? design.matrix.cwiseAbs().maxCoeff() : 1.0;
    return design;
}

// two subjects, both events: t = (1, 2), risk sets {0,1} then {1}
SurvivalDataset two_event_dataset() {
    return SurvivalDataset({{1.0, 1, {0.5}}, {2.0, 1, {0.5}}}, 2.0);
}

}  // namespace

TEST_CASE("risk moments at b = 0 are risk-set averages") {
    SurvivalDataset ds({{1.0, 1, {0.2}}, {2.0, 0, {0.4}}, {3.0, 1, {0.8}}}, 3.0);
    Eigen::MatrixXd m(3, 2);
    m << 1, 0, 0, 1, 1, 1;
    auto design = raw_design(m, 1, 2);
    PartialLikelihood lik(design, ds);

    auto rm = lik.risk_moments(Eigen::VectorXd::Zero(2), 1.0);
    CHECK(rm.s0 == doctest::Approx(1.0));  // 3 of 3 at risk
    CHECK(rm.en[0] == doctest::Approx(2.0 / 3.0));
    CHECK(rm.en[1] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("hand-computed moments for two subjects") {
    SurvivalDataset ds({{1.0, 1, {0.1}}, {2.0, 0, {0.9}}}, 1.0);
    Eigen::MatrixXd m(2, 2);
    m << 1, 0, 0, 1;
    auto design = raw_design(m, 1, 2);
    PartialLikelihood lik(design, ds);
    auto rm = lik.risk_moments(Eigen::VectorXd::Zero(2), 1.0);
    CHECK(rm.en[0] == doctest::Approx(0.5));
    CHECK(rm.en[1] == doctest::Approx(0.5));
    CHECK(rm.vn(0, 0) == doctest::Approx(0.25));
    CHECK(rm.vn(0, 1) == doctest::Approx(-0.25));
    CHECK(rm.vn(1, 0) == doctest::Approx(-0.25));
    CHECK(rm.vn(1, 1) == doctest::Approx(0.25));
}

TEST_CASE("single subject at risk has zero covariance") {
    SurvivalDataset ds({{1.0, 0, {0.2}}, {2.0, 1, {0.8}}}, 2.0);
    Eigen::MatrixXd m(2, 2);
    m << 1, 0, 0, 1;
    auto design = raw_design(m, 1, 2);
    PartialLikelihood lik(design, ds);
    auto rm = lik.risk_moments(Eigen::VectorXd::Ones(2), 2.0);
    CHECK(rm.vn.cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("empty risk set is an error") {
    SurvivalDataset ds({{1.0, 1, {0.5}}}, 1.0);
    auto design = raw_design(Eigen::MatrixXd::Ones(1, 1), 1, 1);
    PartialLikelihood lik(design, ds);
    CHECK_THROWS_AS(lik.risk_moments(Eigen::VectorXd::Zero(1), 2.0), std::invalid_argument);
}

TEST_CASE("single-event log partial likelihood vanishes") {
    SurvivalDataset ds({{1.0, 1, {0.7}}}, 1.0);
    auto design = raw_design(Eigen::MatrixXd::Constant(1, 1, 0.7), 1, 1);
    PartialLikelihood lik(design, ds);
    for (double b : {-3.0, 0.0, 5.0})
        CHECK(lik.value(Eigen::VectorXd::Constant(1, b)) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("two-event value equals log(2)/2 at zero") {
    SurvivalDataset ds = two_event_dataset();
    auto design = raw_design(Eigen::MatrixXd::Zero(2, 1), 1, 1);
    PartialLikelihood lik(design, ds);
    CHECK(lik.value(Eigen::VectorXd::Zero(1)) == doctest::Approx(0.5 * std::log(2.0)));
    CHECK(lik.value(Eigen::VectorXd::Zero(1)) == doctest::Approx(0.34657359).epsilon(1e-6));
}

TEST_CASE("appending an intercept column leaves the likelihood unchanged") {
    experiments::InstanceParams params;
    Rng rng(3, 0);
    auto ri = experiments::make_random_instance(params, rng);
    PartialLikelihood lik(ri.design, ri.ds);
    Eigen::VectorXd b(ri.design.dim());
    for (int k = 0; k < b.size(); ++k) b[k] = rng.normal();
    double base = lik.value(b);

    DesignExpansion with_const = ri.design;
    with_const.matrix.conservativeResize(Eigen::NoChange, ri.design.dim() + 1);
    with_const.matrix.col(ri.design.dim()).setOnes();
    with_const.p = ri.design.dim() + 1;
    with_const.d = 1;
    PartialLikelihood lik2(with_const, ri.ds);
    Eigen::VectorXd b2(ri.design.dim() + 1);
    b2.head(ri.design.dim()) = b;
    b2[ri.design.dim()] = 7.3;  // constant shift of every linear predictor
    CHECK(lik2.value(b2) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("score is zero with one subject and matches the signed hand case") {
    SurvivalDataset one({{1.0, 1, {0.4}}}, 1.0);
    auto d1 = raw_design(Eigen::MatrixXd::Constant(1, 1, 0.4), 1, 1);
    PartialLikelihood lik1(d1, one);
    CHECK(lik1.gradient(Eigen::VectorXd::Ones(1)).norm() <= 1e-15);

    // two subjects, event on the first, Psi = +a and -a
    double a = 0.8;
    SurvivalDataset two({{1.0, 1, {0.5}}, {2.0, 0, {0.5}}}, 1.0);
    Eigen::MatrixXd m(2, 1);
    m << a, -a;
    auto d2 = raw_design(m, 1, 1);
    PartialLikelihood lik2(d2, two);
    Eigen::VectorXd g = lik2.gradient(Eigen::VectorXd::Zero(1));
    CHECK(g[0] == doctest::Approx(a / 2.0));
}

TEST_CASE("gradient and hessian match finite differences across random instances") {
    auto res = experiments::run_gradient_suite(40, 2024);
    CHECK(res.instances == 40);
    CHECK(res.max_grad_err <= 1e-6);
    CHECK(res.max_hess_err <= 1e-5);
    CHECK(res.min_hess_eigen >= -1e-10);
}

TEST_CASE("hessian is zero when all covariates coincide") {
    SurvivalDataset ds({{1.0, 1, {0.5}}, {2.0, 1, {0.5}}, {3.0, 0, {0.5}}}, 3.0);
    Eigen::MatrixXd m(3, 2);
    m << 0.5, 0.25, 0.5, 0.25, 0.5, 0.25;
    auto design = raw_design(m, 1, 2);
    PartialLikelihood lik(design, ds);
    Eigen::VectorXd b(2);
    b << 1.0, -2.0;
    CHECK(lik.negative_hessian(b).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("observation weights: uniform case and saturation") {
    // three subjects all at risk of one event at t=1
    SurvivalDataset ds({{1.0, 1, {0.1}}, {2.0, 0, {0.2}}, {3.0, 0, {0.3}}}, 1.0);
    Eigen::MatrixXd m(3, 1);
    m << 0.0, 0.0, 0.0;
    auto design = raw_design(m, 1, 1);
    PartialLikelihood lik(design, ds);
    auto wv = lik.observation_weights(Eigen::VectorXd::Zero(1));
    for (int i = 0; i < 3; ++i) CHECK(wv.w[i] == doctest::Approx(1.0 / 3.0));

    // saturate subject 0: linear predictor 30 versus 0
    Eigen::MatrixXd m2(3, 1);
    m2 << 1.0, 0.0, 0.0;
    auto design2 = raw_design(m2, 1, 1);
    PartialLikelihood lik2(design2, ds);
    auto wv2 = lik2.observation_weights(Eigen::VectorXd::Constant(1, 30.0));
    CHECK(std::abs(wv2.w[0] - 1.0) <= 1e-10);
}

TEST_CASE("weight sum equals N and the process normalizes") {
    auto res = experiments::run_weight_suite(60, 91);
    CHECK(res.max_sum_err <= 1e-10);
    CHECK(res.max_norm_err <= 1e-12);
}

TEST_CASE("weight process at b* = 0 is n over the risk count") {
    SurvivalDataset ds({{1.0, 1, {0.1}}, {2.0, 0, {0.2}}, {3.0, 1, {0.3}}}, 3.0);
    auto design = raw_design(Eigen::MatrixXd::Zero(3, 1), 1, 1);
    PartialLikelihood lik(design, ds);
    Eigen::VectorXd w = lik.weight_process(Eigen::VectorXd::Zero(1), 1.0);
    for (int i = 0; i < 3; ++i) CHECK(w[i] == doctest::Approx(1.0));  // 3/3

    Eigen::VectorXd w_late = lik.weight_process(Eigen::VectorXd::Zero(1), 3.0);
    CHECK(w_late[2] == doctest::Approx(3.0));  // single subject at risk gets n
}

TEST_CASE("empirical norm of a constant function is zero") {
    experiments::InstanceParams params;
    Rng rng(17, 0);
    auto ri = experiments::make_random_instance(params, rng);
    PartialLikelihood lik(ri.design, ri.ds);
    Eigen::VectorXd f = Eigen::VectorXd::Constant(ri.ds.n(), 3.7);
    Eigen::VectorXd anchor = Eigen::VectorXd::Zero(ri.design.dim());
    auto norm = lik.empirical_norm(f, anchor);
    CHECK(std::abs(norm.sq) <= 1e-12);
}

TEST_CASE("empirical norm scales quadratically and the two routes agree") {
    experiments::InstanceParams params;
    Rng rng(29, 0);
    for (int trial = 0; trial < 25; ++trial) {
        auto ri = experiments::make_random_instance(params, rng);
        if (ri.ds.num_failure_times() == 0 || ri.ds.tie_flag()) continue;
        PartialLikelihood lik(ri.design, ri.ds);
        Eigen::VectorXd f(ri.ds.n()), anchor(ri.design.dim());
        for (int i = 0; i < f.size(); ++i) f[i] = rng.normal();
        for (int k = 0; k < anchor.size(); ++k) anchor[k] = 0.5 * rng.normal();

        auto norm = lik.empirical_norm(f, anchor);
        auto scaled = lik.empirical_norm((2.5 * f).eval(), anchor);
        CHECK(scaled.sq == doctest::Approx(2.5 * 2.5 * norm.sq).epsilon(1e-10));
        CHECK(std::abs(norm.sq - norm.sq_moments) <= 1e-10);
    }
}

TEST_CASE("empirical norm matches the hessian quadratic form at the anchor") {
    experiments::InstanceParams params;
    Rng rng(41, 0);
    auto ri = experiments::make_random_instance(params, rng);
    PartialLikelihood lik(ri.design, ri.ds);
    const int pd = ri.design.dim();
    Eigen::VectorXd anchor(pd), delta(pd);
    for (int k = 0; k < pd; ++k) {
        anchor[k] = 0.4 * rng.normal();
        delta[k] = rng.normal();
    }
    Eigen::VectorXd f = ri.design.matrix * delta;
    double quad = delta.dot(lik.negative_hessian(anchor) * delta);
    CHECK(lik.empirical_norm(f, anchor).sq == doctest::Approx(quad).epsilon(1e-9));
}

TEST_CASE("empirical norm is a seminorm") {
    experiments::InstanceParams params;
    Rng rng(53, 0);
    for (int trial = 0; trial < 20; ++trial) {
        auto ri = experiments::make_random_instance(params, rng);
        if (ri.ds.num_failure_times() == 0) continue;
        PartialLikelihood lik(ri.design, ri.ds);
        Eigen::VectorXd f(ri.ds.n()), g(ri.ds.n()), anchor(ri.design.dim());
        for (int i = 0; i < f.size(); ++i) {
            f[i] = rng.normal();
            g[i] = rng.normal();
        }
        for (int k = 0; k < anchor.size(); ++k) anchor[k] = 0.5 * rng.normal();
        double nf = lik.empirical_norm(f, anchor).value();
        double ng = lik.empirical_norm(g, anchor).value();
        double nfg = lik.empirical_norm((f + g).eval(), anchor).value();
        CHECK(nfg <= nf + ng + 1e-10);
    }
}

TEST_CASE("log S0 is Lipschitz in the sup of linear-predictor changes") {
    experiments::InstanceParams params;
    Rng rng(67, 0);
    for (int trial = 0; trial < 20; ++trial) {
        auto ri = experiments::make_random_instance(params, rng);
        if (ri.ds.num_failure_times() == 0) continue;
        PartialLikelihood lik(ri.design, ri.ds);
        const int pd = ri.design.dim();
        Eigen::VectorXd b1(pd), b2(pd);
        for (int k = 0; k < pd; ++k) {
            b1[k] = rng.normal();
            b2[k] = rng.normal();
        }
        double bound = (ri.design.matrix * (b1 - b2)).cwiseAbs().maxCoeff();
        for (int q = 0; q < ri.ds.num_failure_times(); ++q) {
            double t = ri.ds.failure_time(q);
            CHECK(std::abs(lik.log_s0(b1, t) - lik.log_s0(b2, t)) <= bound + 1e-12);
        }
    }
}

TEST_CASE("en_at_failure_times matches per-time moments") {
    experiments::InstanceParams params;
    Rng rng(71, 0);
    auto ri = experiments::make_random_instance(params, rng);
    PartialLikelihood lik(ri.design, ri.ds);
    Eigen::VectorXd b(ri.design.dim());
    for (int k = 0; k < b.size(); ++k) b[k] = rng.normal();
    Eigen::MatrixXd en = lik.en_at_failure_times(b);
    for (int q = 0; q < ri.ds.num_failure_times(); ++q) {
        auto rm = lik.risk_moments(b, ri.ds.failure_time(q));
        CHECK((en.row(q).transpose() - rm.en).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
}
