#include "groupcox/experiments.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace groupcox::experiments {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_seconds(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

SimulationConfig base_sim(int n, int p, double censor_rate, std::uint64_t seed) {
    SimulationConfig sim;
    sim.n = n;
    sim.p = p;
    sim.seed = seed;
    sim.model.baseline = BaselineHazard::constant(1.0);
    if (censor_rate > 0.0)
        sim.model.censoring = CensoringLaw::exponential(censor_rate / (1.0 - censor_rate));
    return sim;
}

}  // namespace

RandomInstance make_random_instance(const InstanceParams& params, Rng& rng) {
    int n = params.n_min + rng.uniform_int(params.n_max - params.n_min + 1);
    int p = params.p_min + rng.uniform_int(params.p_max - params.p_min + 1);
    int d = params.d_min + rng.uniform_int(params.d_max - params.d_min + 1);
    if (params.family == BasisFamily::cubic_bspline) d = std::max(d, 4);

    SimulationConfig sim = base_sim(n, p, params.censor_rate, rng.next_u64());
    double alpha = rng.normal();
    sim.model.risk = [alpha](const Eigen::VectorXd& x) { return alpha * x[0]; };

    SurvivalDataset ds = simulate_cox_sample(sim);
    DictionarySpec dict;
    switch (params.family) {
        case BasisFamily::step:
            dict = DictionarySpec::step(d);
            break;
        case BasisFamily::polynomial:
            dict = DictionarySpec::polynomial(d);
            break;
        case BasisFamily::cubic_bspline:
            dict = DictionarySpec::cubic_bspline(d);
            break;
    }
    DesignExpansion design = expand_design(ds, dict);
    return RandomInstance{std::move(ds), std::move(design)};
}

namespace {

// minimum-norm element of (x - z) + d(sum_j w_j ||x_j||_gamma)(x), blockwise;
// the steepest-descent subgradient used by the numeric prox oracle
Eigen::VectorXd min_norm_subgradient(const PenaltySpec& spec, const Eigen::VectorXd& z,
                                     const Eigen::VectorXd& x) {
    Eigen::VectorXd g = x - z;
    int off = 0;
    for (int j = 0; j < spec.num_groups(); ++j) {
        int sz = spec.group_sizes[j];
        double w = spec.group_lambda(j) * spec.scaling(j);
        auto xj = x.segment(off, sz);
        auto gj = g.segment(off, sz);
        double gamma = spec.gamma[j];
        if (block_norm(xj, gamma) == 0.0) {
            // subdifferential at zero is the dual ball; pick its element
            // closest to -gj/w
            Eigen::VectorXd target = -gj / w;
            Eigen::VectorXd u(sz);
            if (gamma == 1.0) {
                for (int k = 0; k < sz; ++k) u[k] = std::clamp(target[k], -1.0, 1.0);
            } else if (gamma == 2.0) {
                double nrm = target.norm();
                u = nrm > 1.0 ? (target / nrm).eval() : target;
            } else {
                u = project_l1_ball(target, 1.0);
            }
            gj += w * u;
        } else if (gamma == 2.0) {
            gj += w * xj / xj.norm();
        } else if (gamma == 1.0) {
            for (int k = 0; k < sz; ++k) {
                if (xj[k] != 0.0)
                    gj[k] += w * (xj[k] > 0 ? 1.0 : -1.0);
                else
                    gj[k] += w * std::clamp(-gj[k] / w, -1.0, 1.0);
            }
        } else {
            // gamma = inf: subdifferential is the convex hull of signed top
            // coordinates; project the target onto that face
            double top = xj.cwiseAbs().maxCoeff();
            Eigen::VectorXd target = -gj / w;
            std::vector<int> face;
            std::vector<double> t;
            for (int k = 0; k < sz; ++k) {
                if (std::abs(xj[k]) >= top - 1e-12 * std::max(1.0, top)) {
                    face.push_back(k);
                    t.push_back(target[k] * (xj[k] >= 0 ? 1.0 : -1.0));
                }
            }
            std::vector<double> srt = t;
            std::sort(srt.begin(), srt.end(), std::greater<double>());
            double cum = 0.0, theta = 0.0;
            for (std::size_t k = 0; k < srt.size(); ++k) {
                cum += srt[k];
                double cand = (cum - 1.0) / double(k + 1);
                if (k + 1 == srt.size() || srt[k + 1] <= cand) {
                    theta = cand;
                    break;
                }
            }
            Eigen::VectorXd u = Eigen::VectorXd::Zero(sz);
            for (std::size_t k = 0; k < face.size(); ++k) {
                double proj = std::max(t[k] - theta, 0.0);
                u[face[k]] = proj * (xj[face[k]] >= 0 ? 1.0 : -1.0);
            }
            gj += w * u;
        }
        off += sz;
    }
    return g;
}

}  // namespace

namespace {

// Euclidean projection onto the l1 ball by bisection on the shrink level;
// deliberately a different algorithm from the production sort-based one.
Eigen::VectorXd project_l1_bisection(const Eigen::VectorXd& v, double radius) {
    if (v.lpNorm<1>() <= radius) return v;
    double lo = 0.0, hi = v.cwiseAbs().maxCoeff();
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        double mass = 0.0;
        for (int k = 0; k < v.size(); ++k) mass += std::max(std::abs(v[k]) - mid, 0.0);
        if (mass > radius)
            lo = mid;
        else
            hi = mid;
    }
    double theta = 0.5 * (lo + hi);
    Eigen::VectorXd out(v.size());
    for (int k = 0; k < v.size(); ++k) {
        double mag = std::max(std::abs(v[k]) - theta, 0.0);
        out[k] = v[k] >= 0 ? mag : -mag;
    }
    return out;
}

}  // namespace

Eigen::VectorXd numeric_prox_oracle(const PenaltySpec& spec, const Eigen::VectorXd& z,
                                    double step, int rounds, int iters_per_round) {
    // scale the weights by `step` once; then minimize
    // h(x) = 1/2 ||x - z||^2 + sum_j step*w_j ||x_j||_gamma
    PenaltySpec scaled = spec;
    if (scaled.per_group_lambda.empty())
        scaled.lambda *= step;
    else
        for (double& l : scaled.per_group_lambda) l *= step;

    auto h = [&](const Eigen::VectorXd& x) {
        return 0.5 * (x - z).squaredNorm() + weighted_penalty(scaled, x);
    };

    // dual route: x = z - projection of z onto the dual-norm ball, with the
    // l1-ball projection done by bisection
    Eigen::VectorXd dual_route(z.size());
    {
        int off = 0;
        for (int j = 0; j < scaled.num_groups(); ++j) {
            int sz = scaled.group_sizes[j];
            double w = scaled.group_lambda(j) * scaled.scaling(j);
            Eigen::VectorXd zj = z.segment(off, sz);
            Eigen::VectorXd proj(sz);
            double gamma = scaled.gamma[j];
            if (gamma == 1.0) {
                for (int k = 0; k < sz; ++k) proj[k] = std::clamp(zj[k], -w, w);
            } else if (gamma == 2.0) {
                double nrm = zj.norm();
                proj = (nrm <= w) ? zj : (w / nrm * zj).eval();
            } else if (std::isinf(gamma)) {
                proj = project_l1_bisection(zj, w);
            } else {
                proj = zj;  // unsupported here; the subgradient phase decides
            }
            dual_route.segment(off, sz) = zj - proj;
            off += sz;
        }
    }

    Eigen::VectorXd best = dual_route;
    double f_best = h(best);
    if (h(Eigen::VectorXd::Zero(z.size())) < f_best) {
        best = Eigen::VectorXd::Zero(z.size());
        f_best = h(best);
    }

    // subgradient phase with Polyak target refinement, cross-checking the
    // dual route (it can only improve the incumbent)
    Eigen::VectorXd x = best;
    double gap = std::max(1.0, f_best);
    for (int r = 0; r < rounds; ++r) {
        double round_start_best = f_best;
        double target = f_best - gap;
        for (int it = 0; it < iters_per_round; ++it) {
            Eigen::VectorXd g = min_norm_subgradient(scaled, z, x);
            double gn2 = g.squaredNorm();
            if (gn2 <= 1e-30) break;
            double fx = h(x);
            double polyak = (fx - target) / gn2;
            x -= polyak * g;
            double fxn = h(x);
            if (fxn < f_best) {
                f_best = fxn;
                best = x;
            }
        }
        x = best;
        if (round_start_best - f_best < 0.5 * gap) gap *= 0.25;
        if (gap < 1e-15 * (1.0 + std::abs(f_best))) break;
    }
    return best;
}

double grid_search_objective(const PartialLikelihood& lik, const PenaltySpec& spec, double lo,
                             double hi, int coarse_points, int refinements) {
    const int pd = lik.dim();
    if (pd > 3) throw std::invalid_argument("grid_search_objective supports up to 3 dimensions");

    Eigen::VectorXd center = Eigen::VectorXd::Constant(pd, 0.5 * (lo + hi));
    double half = 0.5 * (hi - lo);
    double best_val = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_x = center;

    Eigen::VectorXd x(pd);
    for (int round = 0; round <= refinements; ++round) {
        int pts = coarse_points;
        std::vector<int> idx(pd, 0);
        while (true) {
            for (int k = 0; k < pd; ++k)
                x[k] = center[k] - half + 2.0 * half * idx[k] / (pts - 1);
            double v = objective(lik, spec, x);
            if (v < best_val) {
                best_val = v;
                best_x = x;
            }
            int k = 0;
            while (k < pd && ++idx[k] == pts) idx[k++] = 0;
            if (k == pd) break;
        }
        center = best_x;
        half *= 0.25;  // window keeps ~10 previous cells on each side
    }
    return best_val;
}

GradientSuiteResult run_gradient_suite(int instances, std::uint64_t seed) {
    auto start = Clock::now();
    GradientSuiteResult out;
    InstanceParams params;
    params.n_min = 10;
    params.n_max = 50;
    params.p_min = 1;
    params.p_max = 6;
    params.d_min = 1;
    params.d_max = 4;
    Rng rng(seed, 101);
    out.min_hess_eigen = std::numeric_limits<double>::infinity();
    const double h = 1e-5;
    for (int inst = 0; inst < instances; ++inst) {
        RandomInstance ri = make_random_instance(params, rng);
        if (ri.ds.num_failure_times() == 0) {
            --inst;  // want informative instances only
            continue;
        }
        PartialLikelihood lik(ri.design, ri.ds);
        const int pd = lik.dim();
        Eigen::VectorXd b(pd);
        for (int k = 0; k < pd; ++k) b[k] = 0.5 * rng.normal();

        Eigen::VectorXd grad = lik.gradient(b);
        Eigen::VectorXd fd(pd);
        for (int k = 0; k < pd; ++k) {
            Eigen::VectorXd bp = b, bm = b;
            bp[k] += h;
            bm[k] -= h;
            fd[k] = (lik.value(bp) - lik.value(bm)) / (2.0 * h);
        }
        double gerr = (grad - fd).lpNorm<Eigen::Infinity>() /
                      (1.0 + grad.lpNorm<Eigen::Infinity>());
        out.max_grad_err = std::max(out.max_grad_err, gerr);

        Eigen::MatrixXd neg_hess = lik.negative_hessian(b);
        Eigen::MatrixXd fd_hess(pd, pd);
        for (int k = 0; k < pd; ++k) {
            Eigen::VectorXd bp = b, bm = b;
            bp[k] += h;
            bm[k] -= h;
            fd_hess.col(k) = (lik.gradient(bp) - lik.gradient(bm)) / (2.0 * h);
        }
        double herr = (neg_hess + fd_hess).cwiseAbs().maxCoeff() /
                      (1.0 + neg_hess.cwiseAbs().maxCoeff());
        out.max_hess_err = std::max(out.max_hess_err, herr);

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(neg_hess);
        out.min_hess_eigen = std::min(out.min_hess_eigen, es.eigenvalues().minCoeff());
        ++out.instances;
    }
    out.seconds = elapsed_seconds(start);
    return out;
}

WeightSuiteResult run_weight_suite(int instances, std::uint64_t seed) {
    auto start = Clock::now();
    WeightSuiteResult out;
    InstanceParams params;
    Rng rng(seed, 202);
    for (int inst = 0; inst < instances; ++inst) {
        RandomInstance ri = make_random_instance(params, rng);
        if (ri.ds.num_failure_times() == 0) {
            --inst;
            continue;
        }
        PartialLikelihood lik(ri.design, ri.ds);
        const int pd = lik.dim();
        Eigen::VectorXd b(pd), anchor(pd);
        for (int k = 0; k < pd; ++k) {
            b[k] = rng.normal();
            anchor[k] = 0.7 * rng.normal();
        }
        WeightVector wv = lik.observation_weights(b);
        out.max_sum_err = std::max(out.max_sum_err,
                                   std::abs(wv.w.sum() - ri.ds.num_failure_times()));

        int q = rng.uniform_int(ri.ds.num_failure_times());
        double t = ri.ds.failure_time(q);
        Eigen::VectorXd wp = lik.weight_process(anchor, t);
        double norm = 0.0;
        for (int i = 0; i < ri.ds.n(); ++i)
            if (ri.ds.at_risk(i, t)) norm += wp[i];
        out.max_norm_err = std::max(out.max_norm_err, std::abs(norm / ri.ds.n() - 1.0));
        ++out.instances;
    }
    out.seconds = elapsed_seconds(start);
    return out;
}

SandwichSuiteResult run_sandwich_suite(int instances, const std::vector<double>& c_grid,
                                       std::uint64_t seed) {
    auto start = Clock::now();
    SandwichSuiteResult out;
    InstanceParams params;
    params.n_min = 8;
    params.n_max = 30;
    params.p_min = 1;
    params.p_max = 4;
    params.d_min = 1;
    params.d_max = 2;  // pd <= 8
    Rng rng(seed, 303);
    for (int inst = 0; inst < instances; ++inst) {
        RandomInstance ri = make_random_instance(params, rng);
        if (ri.ds.num_failure_times() == 0 || ri.ds.tie_flag()) {
            --inst;
            continue;
        }
        PartialLikelihood lik(ri.design, ri.ds);
        const int pd = lik.dim();
        Eigen::VectorXd beta_star(pd), b(pd);
        for (int k = 0; k < pd; ++k) beta_star[k] = (rng.uniform() < 0.5) ? 0.0 : 0.4 * rng.normal();
        if (inst % 2 == 0) {
            for (int k = 0; k < pd; ++k) b[k] = 0.4 * rng.normal();
        } else {
            for (int k = 0; k < pd; ++k) b[k] = beta_star[k] + 0.3 * rng.normal();
        }

        theory::SandwichReport report = theory::check_sandwich(lik, b, beta_star, c_grid);
        out.violations_sandwich += report.violations_sandwich;
        out.violations_upper_raw += report.violations_upper_raw;
        out.violations_upper_centered += report.violations_upper_centered;
        out.violations_upper_weighted += report.violations_upper_weighted;
        out.cases += static_cast<int>(report.cases.size());

        // agreement of the two algebraic routes on tie-free data
        Eigen::VectorXd f = ri.design.matrix * (b - beta_star);
        for (double c : c_grid) {
            Eigen::VectorXd anchor = c * b + (1.0 - c) * beta_star;
            EmpiricalNorm en = lik.empirical_norm(f, anchor);
            out.max_form_gap = std::max(out.max_form_gap, std::abs(en.sq - en.sq_moments));
        }
        ++out.instances;
    }
    out.seconds = elapsed_seconds(start);
    return out;
}

Lemma1SuiteResult run_lemma1_suite(int samples, std::uint64_t seed) {
    auto start = Clock::now();
    Lemma1SuiteResult out;
    Rng rng(seed, 404);

    PenaltySpec spec;
    spec.gamma = {2.0, 1.0, kInf, 2.0};
    spec.group_sizes = {3, 3, 3, 3};
    spec.lambda = 0.7;

    const int pd = spec.dim();
    Eigen::VectorXd beta_star = Eigen::VectorXd::Zero(pd);
    beta_star.segment(0, 3) << 0.8, -0.2, 0.1;

    // v with each block at a fraction of its threshold norm
    auto v_at_fraction = [&](double frac, int boosted_group, double boost) {
        Eigen::VectorXd v(pd);
        for (int k = 0; k < pd; ++k) v[k] = rng.normal();
        for (int j = 0; j < spec.num_groups(); ++j) {
            int off = spec.group_offset(j), sz = spec.group_sizes[j];
            double dual = block_norm(v.segment(off, sz), holder_conjugate(spec.gamma[j]));
            double limit = spec.lambda * spec.scaling(j);
            double f = (j == boosted_group) ? boost : frac;
            if (dual > 0) v.segment(off, sz) *= f * limit / dual;
        }
        return v;
    };

    Eigen::VectorXd v_low = v_at_fraction(0.9, -1, 0.0);
    theory::Lemma1Report low = theory::check_lemma1(spec, beta_star, v_low, samples, rng);
    out.below_samples = low.samples;
    out.below_violations = low.violations;

    Eigen::VectorXd v_high = v_at_fraction(0.9, 1, 1.5);
    theory::Lemma1Report high = theory::check_lemma1(spec, beta_star, v_high, samples, rng);
    out.above_violation_found = high.violations > 0;

    out.seconds = elapsed_seconds(start);
    return out;
}

ProxSuiteResult run_prox_suite(int blocks, std::uint64_t seed) {
    auto start = Clock::now();
    ProxSuiteResult out;
    Rng rng(seed, 505);
    const double gammas[3] = {1.0, 2.0, kInf};
    for (int t = 0; t < blocks; ++t) {
        int d = 1 + rng.uniform_int(8);
        double gamma = gammas[t % 3];
        PenaltySpec spec = PenaltySpec::uniform(1, d, gamma, 0.2 + rng.uniform());
        double step = 0.5 + 1.5 * rng.uniform();
        Eigen::VectorXd z(d);
        for (int k = 0; k < d; ++k) z[k] = 2.0 * rng.normal();

        Eigen::VectorXd closed = prox_group(spec, z, step);
        Eigen::VectorXd numeric = numeric_prox_oracle(spec, z, step);
        out.max_diff = std::max(out.max_diff, (closed - numeric).lpNorm<Eigen::Infinity>());
        out.max_residual =
            std::max(out.max_residual, prox_subgradient_residual(spec, z, step, closed));
        ++out.blocks;
    }
    out.seconds = elapsed_seconds(start);
    return out;
}

SolverOracleSuiteResult run_solver_oracle_suite(int instances, std::uint64_t seed) {
    auto start = Clock::now();
    SolverOracleSuiteResult out;
    Rng rng(seed, 606);
    for (int inst = 0; inst < instances; ++inst) {
        InstanceParams params;
        params.n_min = 6;
        params.n_max = 12;
        params.p_min = 1;
        params.p_max = 1;
        params.d_min = 1;
        params.d_max = 3;
        RandomInstance ri = make_random_instance(params, rng);
        if (ri.ds.num_failure_times() < 2) {
            --inst;
            continue;
        }
        int pd = ri.design.dim();
        if (pd == 1) {
            // a lone constant dictionary function carries no signal; use the
            // raw covariate as the single basis function instead
            for (int i = 0; i < ri.ds.n(); ++i)
                ri.design.matrix(i, 0) = ri.ds.record(i).covariates[0];
        }
        double gamma = (pd == 1) ? 2.0 : ((inst % 3 == 0) ? kInf : ((inst % 3 == 1) ? 1.0 : 2.0));
        PenaltySpec spec = PenaltySpec::uniform(1, pd, gamma, 0.05 + 0.25 * rng.uniform());
        PartialLikelihood lik(ri.design, ri.ds);

        FitConfig cfg;
        cfg.tol = 1e-13;
        cfg.kkt_tol = 1e-7;
        cfg.max_iters = 8000;
        FitResult fr = fit(lik, spec, cfg);

        int coarse = (pd == 3) ? 81 : 201;
        double grid_min = grid_search_objective(lik, spec, -2.0, 2.0, coarse, 5);
        out.max_gap = std::max(out.max_gap, std::abs(fr.final_objective - grid_min));

        // zero-solution threshold, probed on both sides; only the active sets
        // matter here, so the probes run with a modest iteration budget
        double thr = zero_solution_threshold(lik, spec);
        FitConfig probe = cfg;
        probe.max_iters = 3000;
        spec.lambda = 1.01 * thr;
        FitResult above = fit(lik, spec, probe);
        spec.lambda = 0.99 * thr;
        FitResult below = fit(lik, spec, probe);
        if (!above.active_groups.empty() || below.active_groups.empty())
            out.threshold_exact = false;
        ++out.instances;
    }
    out.seconds = elapsed_seconds(start);
    return out;
}

SmoothSuiteResult run_smooth_suite(int instances, std::uint64_t seed) {
    auto start = Clock::now();
    SmoothSuiteResult out;
    Rng rng(seed, 707);
    for (int inst = 0; inst < instances; ++inst) {
        InstanceParams params;
        params.n_min = 10;
        params.n_max = 30;
        params.p_min = 1;
        params.p_max = 3;
        // polynomial d <= 3 keeps rank-deficient smoothing matrices in play
        params.family = (inst % 2 == 0) ? BasisFamily::polynomial : BasisFamily::cubic_bspline;
        params.d_min = 2;
        params.d_max = 4;
        RandomInstance ri = make_random_instance(params, rng);
        if (ri.ds.num_failure_times() == 0) {
            --inst;
            continue;
        }
        DictionarySpec dict;
        if (params.family == BasisFamily::polynomial)
            dict = DictionarySpec::polynomial(ri.design.d);
        else
            dict = DictionarySpec::cubic_bspline(ri.design.d);

        SmoothPenaltySpec sspec;
        sspec.factors = smoothing_factors(dict, 1e-8);
        sspec.gamma = 2.0;
        sspec.lambda = 0.02 + 0.3 * rng.uniform();

        FitConfig cfg;
        cfg.tol = 1e-11;
        cfg.max_iters = 8000;
        FitResult fr = fit_smooth(ri.design, ri.ds, sspec, cfg);

        // original form at the fitted point
        PartialLikelihood lik(ri.design, ri.ds);
        double obj_orig = -lik.value(fr.beta) +
                          sspec.lambda * smooth_penalty_value(sspec, ri.design.p, fr.beta);

        // reparametrized form: bt = R b on the transformed design
        DesignExpansion reparam = reparametrize_design(ri.design, sspec.factors);
        PartialLikelihood lik_re(reparam, ri.ds);
        const int d = ri.design.d;
        Eigen::VectorXd bt(fr.beta.size());
        for (int j = 0; j < ri.design.p; ++j)
            bt.segment(j * d, d) = sspec.factors.r * fr.beta.segment(j * d, d);
        double obj_re = -lik_re.value(bt);
        for (int j = 0; j < ri.design.p; ++j) {
            auto btj = bt.segment(j * d, d);
            obj_re += sspec.lambda * std::sqrt(double(d)) *
                      (block_norm(btj, sspec.gamma) + btj.norm());
        }

        out.max_objective_gap = std::max(out.max_objective_gap, std::abs(obj_orig - obj_re));
        ++out.instances;
    }
    out.seconds = elapsed_seconds(start);
    return out;
}

Prop1SuiteResult run_prop1_suite(int instances, std::uint64_t seed) {
    auto start = Clock::now();
    Prop1SuiteResult out;
    Rng rng(seed, 808);
    for (int inst = 0; inst < instances; ++inst) {
        SimulationConfig sim = base_sim(3 + rng.uniform_int(6), 1, 0.2, rng.next_u64());
        SurvivalDataset ds = simulate_cox_sample(sim);
        if (ds.num_failure_times() == 0) {
            --inst;
            continue;
        }
        // single-function dictionary Psi(x) = x, built directly
        DesignExpansion design;
        design.p = 1;
        design.d = 1;
        design.bound = 1.0;
        design.matrix.resize(ds.n(), 1);
        for (int i = 0; i < ds.n(); ++i) design.matrix(i, 0) = ds.record(i).covariates[0];
        PartialLikelihood lik(design, ds);

        int subject = -1;
        for (int i = 0; i < ds.n(); ++i)
            if (ds.record(i).time >= ds.failure_time(0)) {
                subject = i;
                break;
            }
        double b_n = 1.0 + 8.0 * rng.uniform();

        theory::MinWeightOptions options;
        options.dense_grid_low_dim = false;  // pure multi-start descent here
        theory::MinWeightResult mw = theory::min_weight_prop1(lik, subject, b_n, options, rng);

        // independent dense scan at step 1e-3
        double radius = std::sqrt(b_n);
        double grid_min = std::numeric_limits<double>::infinity();
        Eigen::VectorXd x(1);
        int steps = static_cast<int>(2.0 * radius / 1e-3);
        for (int k = 0; k <= steps; ++k) {
            x[0] = -radius + 2.0 * radius * k / steps;
            grid_min = std::min(grid_min, theory::subject_weight(lik, subject, x));
        }
        out.max_gap = std::max(out.max_gap, std::abs(mw.numeric_min - grid_min));
        ++out.instances;
    }

    {
        // single-subject dataset: the weight is identically one
        std::vector<SurvivalRecord> recs{{1.0, 1, {0.5}}};
        SurvivalDataset ds(std::move(recs), 1.0);
        DesignExpansion design;
        design.p = 1;
        design.d = 1;
        design.bound = 1.0;
        design.matrix.resize(1, 1);
        design.matrix(0, 0) = 0.5;
        PartialLikelihood lik(design, ds);
        theory::MinWeightOptions options;
        theory::MinWeightResult mw = theory::min_weight_prop1(lik, 0, 4.0, options, rng);
        out.single_subject_value = mw.numeric_min;
    }
    out.seconds = elapsed_seconds(start);
    return out;
}

std::string variant_name(PenaltyVariant variant) {
    switch (variant) {
        case PenaltyVariant::group_lasso:
            return "group-lasso";
        case PenaltyVariant::block_linf:
            return "block-l1-linf";
        case PenaltyVariant::multitask_l1l2:
            return "multitask-l1-l2";
        case PenaltyVariant::elastic_smooth:
            return "elastic-smooth";
    }
    return "?";
}

PenaltyVariant variant_from_name(const std::string& name) {
    if (name == "group-lasso") return PenaltyVariant::group_lasso;
    if (name == "block-l1-linf") return PenaltyVariant::block_linf;
    if (name == "multitask-l1-l2") return PenaltyVariant::multitask_l1l2;
    if (name == "elastic-smooth") return PenaltyVariant::elastic_smooth;
    throw std::invalid_argument("unknown penalty variant: " + name);
}

namespace {

// sparse additive signal: s active groups, each block orthogonal to the
// constant direction so the additive pieces are identified by the partial
// likelihood
Eigen::VectorXd draw_signal(int p, int d, int s, double signal, Rng& rng) {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p * d);
    for (int j = 0; j < s; ++j) {
        Eigen::VectorXd block(d);
        for (int k = 0; k < d; ++k) block[k] = rng.normal();
        block.array() -= block.mean();
        if (block.norm() < 1e-9) block[0] = 1.0;
        block *= signal / block.norm();
        beta.segment(j * d, d) = block;
    }
    return beta;
}

}  // namespace

RateTable rate_experiment(const RateConfig& config) {
    DictionarySpec dict = DictionarySpec::cubic_bspline(config.d);
    // the true model is fixed; config.seed only drives the data replicates
    Rng signal_rng(990331, 42);
    Eigen::VectorXd beta_true = draw_signal(config.p, config.d, config.s, config.signal,
                                            signal_rng);
    double u = std::exp(beta_true.lpNorm<1>());

    auto g_of = [&](const Eigen::VectorXd& x) {
        double acc = 0.0;
        for (int j = 0; j < config.s; ++j)
            acc += beta_true.segment(j * config.d, config.d)
                       .dot(evaluate_basis(dict, x[j]));
        return acc;
    };

    RateTable table;
    int cell = 0;
    for (int n : config.n_grid) {
        LambdaRule rule;
        rule.kind = LambdaRuleKind::theorem1;
        rule.A = config.A;
        rule.u = u;
        rule.lambda0_tau = 1.0;
        rule.n = n;
        rule.pd_total = config.p * config.d;
        rule.d = config.d;
        double lambda = lambda_from_theory(rule).lambda;

        RatePoint point;
        point.n = n;
        point.lambda = lambda;
        std::vector<double> errors;
        for (int rep = 0; rep < config.replicates; ++rep, ++cell) {
            SimulationConfig sim = base_sim(n, config.p, config.censor_rate,
                                            config.seed + cell + 1);
            sim.model.risk = g_of;
            SurvivalDataset ds = simulate_cox_sample(sim);
            if (ds.num_failure_times() == 0) {
                ++point.dropped;
                continue;
            }
            DesignExpansion design = expand_design(ds, dict);

            FitConfig cfg;
            cfg.tol = config.fit_tol;
            cfg.kkt_tol = 1e-6;
            cfg.max_iters = config.max_iters;

            FitResult fr;
            if (config.variant == PenaltyVariant::elastic_smooth) {
                SmoothPenaltySpec sspec;
                SmoothingFactors identity;
                identity.m = Eigen::MatrixXd::Identity(config.d, config.d);
                identity.r = Eigen::MatrixXd::Identity(config.d, config.d);
                identity.eps_r = 0.0;
                sspec.factors = identity;
                sspec.gamma = 2.0;
                sspec.lambda = lambda;
                fr = fit_smooth(design, ds, sspec, cfg);
            } else {
                double gamma = (config.variant == PenaltyVariant::block_linf) ? kInf : 2.0;
                PenaltySpec spec = PenaltySpec::uniform(config.p, config.d, gamma, lambda);
                if (config.variant == PenaltyVariant::multitask_l1l2)
                    spec.per_group_lambda.assign(config.p, lambda);
                PartialLikelihood lik(design, ds);
                fr = fit(lik, spec, cfg);
            }
            if (!fr.converged) {
                ++point.dropped;
                continue;
            }

            Eigen::VectorXd f_hat = design.matrix * fr.beta;
            double err = 0.0;
            for (int i = 0; i < ds.n(); ++i) {
                Eigen::VectorXd x(config.p);
                for (int j = 0; j < config.p; ++j) x[j] = ds.record(i).covariates[j];
                double diff = f_hat[i] - g_of(x);
                err += diff * diff;
            }
            errors.push_back(err / ds.n());
        }
        if (errors.empty())
            throw std::runtime_error("rate_experiment: every replicate dropped at n = " +
                                     std::to_string(n));
        double mean = 0.0;
        for (double e : errors) mean += e;
        mean /= errors.size();
        double var = 0.0;
        for (double e : errors) var += (e - mean) * (e - mean);
        var /= std::max<std::size_t>(1, errors.size() - 1);
        point.mean_err = mean;
        point.se = std::sqrt(var / errors.size());
        table.points.push_back(point);
    }

    // least-squares slope of log error on log n
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = static_cast<int>(table.points.size());
    for (const auto& pt : table.points) {
        double lx = std::log(double(pt.n)), ly = std::log(std::max(pt.mean_err, 1e-300));
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    table.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    table.strictly_decreasing = true;
    for (int k = 1; k < m; ++k)
        if (!(table.points[k].mean_err < table.points[k - 1].mean_err))
            table.strictly_decreasing = false;
    return table;
}

void write_rate_csv(const RateTable& table, const std::string& path,
                    const std::string& meta_comment) {
    std::string tmp = path + ".tmp";
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write rate table: " + path);
    if (!meta_comment.empty()) out << "# " << meta_comment << "\n";
    out << "n,mean_err,se,lambda,dropped,slope\n";
    out.precision(12);
    for (const auto& pt : table.points)
        out << pt.n << "," << pt.mean_err << "," << pt.se << "," << pt.lambda << ","
            << pt.dropped << "," << table.slope << "\n";
    out.close();
    std::filesystem::rename(tmp, path);
}

NullModelResult null_model_experiment(const NullModelConfig& config) {
    DictionarySpec dict = DictionarySpec::cubic_bspline(config.d);
    LambdaRule rule;
    rule.kind = LambdaRuleKind::theorem1;
    rule.A = config.A;
    rule.u = 1.0;  // beta* = 0 under the null
    rule.lambda0_tau = 1.0;
    rule.n = config.n;
    rule.pd_total = config.p * config.d;
    rule.d = config.d;
    double lambda = lambda_from_theory(rule).lambda;

    NullModelResult result;
    for (int rep = 0; rep < config.replicates; ++rep) {
        SimulationConfig sim = base_sim(config.n, config.p, config.censor_rate,
                                        config.seed + rep);
        SurvivalDataset ds = simulate_cox_sample(sim);
        DesignExpansion design = expand_design(ds, dict);
        PartialLikelihood lik(design, ds);
        PenaltySpec spec = PenaltySpec::uniform(config.p, config.d, 2.0, lambda);
        FitConfig cfg;
        cfg.tol = 1e-8;
        cfg.kkt_tol = 1e-7;
        cfg.max_iters = 2000;
        FitResult fr = fit(lik, spec, cfg);
        ++result.replicates;
        if (fr.active_groups.empty()) ++result.all_zero;
    }
    result.fraction_zero = double(result.all_zero) / std::max(1, result.replicates);
    return result;
}

ConcentrationSummary concentration_probe(const ConcentrationConfig& config) {
    DictionarySpec dict = DictionarySpec::polynomial(config.d);
    const int pd = config.p * config.d;
    Eigen::VectorXd beta_star =
        config.beta_star.size() == pd ? config.beta_star : Eigen::VectorXd::Zero(pd);

    const double tau = 1.0;

    // one large reference run approximates the population ratio s1/s0
    struct Reference {
        std::vector<double> z_desc;  // sorted descending
        std::vector<double> cum_e;   // suffix sums in that order
        Eigen::MatrixXd cum_psi_e;   // row k = suffix sum over the first k+1
        Eigen::VectorXd ratio_at(double t) const {
            int lo = 0, hi = static_cast<int>(z_desc.size());
            while (lo < hi) {
                int mid = (lo + hi) / 2;
                if (z_desc[mid] >= t)
                    lo = mid + 1;
                else
                    hi = mid;
            }
            if (lo == 0) throw std::runtime_error("reference risk set empty");
            return cum_psi_e.row(lo - 1).transpose() / cum_e[lo - 1];
        }
    } ref;

    {
        SimulationConfig sim = base_sim(config.reference_size, config.p, config.censor_rate,
                                        config.seed * 977 + 13);
        sim.tau = tau;
        if (beta_star.lpNorm<1>() > 0) {
            sim.model.risk = [&](const Eigen::VectorXd& x) {
                double acc = 0.0;
                for (int j = 0; j < config.p; ++j)
                    acc += beta_star.segment(j * config.d, config.d)
                               .dot(evaluate_basis(dict, x[j]));
                return acc;
            };
        }
        SurvivalDataset big = simulate_cox_sample(sim);
        DesignExpansion design = expand_design(big, dict);
        Eigen::VectorXd f = design.matrix * beta_star;
        double shift = f.maxCoeff();

        std::vector<int> order(big.n());
        for (int i = 0; i < big.n(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return big.record(a).time > big.record(b).time;
        });
        ref.z_desc.resize(big.n());
        ref.cum_e.resize(big.n());
        ref.cum_psi_e.resize(big.n(), pd);
        double acc_e = 0.0;
        Eigen::VectorXd acc_psi = Eigen::VectorXd::Zero(pd);
        for (int k = 0; k < big.n(); ++k) {
            int i = order[k];
            double e = std::exp(f[i] - shift);
            acc_e += e;
            acc_psi += e * design.matrix.row(i).transpose();
            ref.z_desc[k] = big.record(i).time;
            ref.cum_e[k] = acc_e;
            ref.cum_psi_e.row(k) = acc_psi.transpose();
        }
    }

    ConcentrationSummary summary;
    summary.n_grid = config.n_grid;
    for (std::size_t ni = 0; ni < config.n_grid.size(); ++ni) {
        int n = config.n_grid[ni];
        std::vector<double> sups;
        for (int rep = 0; rep < config.replicates; ++rep) {
            SimulationConfig sim = base_sim(n, config.p, config.censor_rate,
                                            config.seed + ni * config.replicates + rep);
            sim.tau = tau;
            if (beta_star.lpNorm<1>() > 0) {
                sim.model.risk = [&](const Eigen::VectorXd& x) {
                    double acc = 0.0;
                    for (int j = 0; j < config.p; ++j)
                        acc += beta_star.segment(j * config.d, config.d)
                                   .dot(evaluate_basis(dict, x[j]));
                    return acc;
                };
            }
            SurvivalDataset ds = simulate_cox_sample(sim);
            if (ds.num_failure_times() == 0) continue;
            DesignExpansion design = expand_design(ds, dict);
            PartialLikelihood lik(design, ds);
            Eigen::MatrixXd en = lik.en_at_failure_times(beta_star);
            double sup = 0.0;
            for (int q = 0; q < ds.num_failure_times(); ++q) {
                Eigen::VectorXd pop = ref.ratio_at(ds.failure_time(q));
                sup = std::max(sup,
                               (en.row(q).transpose() - pop).lpNorm<Eigen::Infinity>());
            }
            sups.push_back(sup);
        }
        std::sort(sups.begin(), sups.end());
        double median = sups.empty() ? 0.0
                        : (sups.size() % 2 == 1
                               ? sups[sups.size() / 2]
                               : 0.5 * (sups[sups.size() / 2 - 1] + sups[sups.size() / 2]));
        summary.median_sup_dev.push_back(median);
    }
    summary.strictly_decreasing = true;
    for (std::size_t k = 1; k < summary.median_sup_dev.size(); ++k)
        if (!(summary.median_sup_dev[k] < summary.median_sup_dev[k - 1]))
            summary.strictly_decreasing = false;
    return summary;
}

}  // namespace groupcox::experiments
