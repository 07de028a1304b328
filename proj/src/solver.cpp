#include "groupcox/solver.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace groupcox {

namespace {

// linear-predictor spread beyond which the partial likelihood is saturated to
// machine precision (relative risks past e^30); stationarity out there means
// iterates escaped toward an unattained infimum, not a minimizer
constexpr double kPredictorRangeGuard = 30.0;

bool prox_supported(const PenaltySpec& spec) {
    if (spec.rho != RhoKind::identity) return false;
    for (double g : spec.gamma)
        if (!(g == 1.0 || g == 2.0 || std::isinf(g))) return false;
    return true;
}

std::vector<int> active_groups_of(const PenaltySpec& spec, const Eigen::VectorXd& b) {
    std::vector<int> active;
    int off = 0;
    for (int j = 0; j < spec.num_groups(); ++j) {
        if (b.segment(off, spec.group_sizes[j]).cwiseAbs().maxCoeff() > 0.0) active.push_back(j);
        off += spec.group_sizes[j];
    }
    return active;
}

// an arbitrary subgradient of the weighted penalty (identity-rho direction
// scaled by rho'(||b_j||) for quadratic rho)
Eigen::VectorXd penalty_subgradient(const PenaltySpec& spec, const Eigen::VectorXd& b) {
    Eigen::VectorXd sub = Eigen::VectorXd::Zero(b.size());
    int off = 0;
    for (int j = 0; j < spec.num_groups(); ++j) {
        int sz = spec.group_sizes[j];
        auto bj = b.segment(off, sz);
        double g = spec.gamma[j];
        double nrm = block_norm(bj, g);
        if (nrm > 0.0) {
            double w = spec.group_lambda(j) * spec.scaling(j);
            if (spec.rho == RhoKind::quadratic) w *= 1.0 + 2.0 * spec.rho_kappa * nrm;
            Eigen::VectorXd dir(sz);
            if (g == 1.0) {
                for (int k = 0; k < sz; ++k) dir[k] = bj[k] > 0 ? 1.0 : (bj[k] < 0 ? -1.0 : 0.0);
            } else if (std::isinf(g)) {
                dir.setZero();
                int arg = 0;
                bj.cwiseAbs().maxCoeff(&arg);
                dir[arg] = bj[arg] >= 0 ? 1.0 : -1.0;
            } else {
                // gradient of ||.||_g at bj
                for (int k = 0; k < sz; ++k) {
                    double a = std::abs(bj[k]) / nrm;
                    dir[k] = std::pow(a, g - 1.0) * (bj[k] >= 0 ? 1.0 : -1.0);
                }
            }
            sub.segment(off, sz) = w * dir;
        }
        off += sz;
    }
    return sub;
}

FitResult fit_subgradient(const PartialLikelihood& lik, const PenaltySpec& spec,
                          const FitConfig& config) {
    const int pd = lik.dim();
    Eigen::VectorXd b = config.start.value_or(Eigen::VectorXd::Zero(pd));
    Eigen::VectorXd best = b;

    FitResult out;
    out.note = "subgradient fallback";
    double f_best = -lik.value(b) + weighted_penalty(spec, b);
    out.objective_trace.push_back(f_best);
    double step0 = config.step_init;
    int since_improve = 0;
    for (int k = 1; k <= config.max_iters; ++k) {
        Eigen::VectorXd g = -lik.gradient(b) + penalty_subgradient(spec, b);
        double gn = g.norm();
        if (gn <= 1e-15) break;
        b -= (step0 / std::sqrt(double(k))) * (g / gn);
        double f = -lik.value(b) + weighted_penalty(spec, b);
        if (!std::isfinite(f))
            throw std::runtime_error("fit: non-finite objective at iteration " +
                                     std::to_string(k));
        if (f < f_best - 1e-15 * std::max(1.0, std::abs(f_best))) {
            double rel = (f_best - f) / std::max(1.0, std::abs(f_best));
            f_best = f;
            best = b;
            since_improve = 0;
            if (rel < config.tol && k > 50) {
                out.converged = true;
                out.iterations = k;
                break;
            }
        } else if (++since_improve > 200) {
            out.converged = true;  // objective stalled at the best point
            out.iterations = k;
            break;
        }
        out.objective_trace.push_back(f_best);
        out.iterations = k;
    }
    out.beta = best;
    out.final_objective = f_best;
    out.objective_trace.push_back(f_best);
    out.active_groups = active_groups_of(spec, best);
    out.kkt_residual = kkt_residual(spec, -lik.gradient(best), best);
    out.step_final = step0;
    return out;
}

}  // namespace

double objective(const PartialLikelihood& lik, const PenaltySpec& spec,
                 const Eigen::VectorXd& b) {
    return -lik.value(b) + weighted_penalty(spec, b);
}

double kkt_residual(const PenaltySpec& spec, const Eigen::VectorXd& grad_smooth,
                    const Eigen::VectorXd& beta) {
    double res = 0.0;
    int off = 0;
    for (int j = 0; j < spec.num_groups(); ++j) {
        int sz = spec.group_sizes[j];
        double w = spec.group_lambda(j) * spec.scaling(j) * rho_prime0(spec);
        res = std::max(res, block_stationarity_residual(grad_smooth.segment(off, sz),
                                                        beta.segment(off, sz), w, spec.gamma[j]));
        off += sz;
    }
    return res;
}

double zero_solution_threshold(const PartialLikelihood& lik, const PenaltySpec& spec) {
    Eigen::VectorXd g = -lik.gradient(Eigen::VectorXd::Zero(lik.dim()));
    double thr = 0.0;
    for (int j = 0; j < spec.num_groups(); ++j) {
        double rel = spec.per_group_lambda.empty() ? 1.0 : spec.per_group_lambda[j];
        thr = std::max(thr, dual_block_norm(spec, g, j) /
                                (rel * spec.scaling(j) * rho_prime0(spec)));
    }
    return thr;
}

FitResult fit(const PartialLikelihood& lik, const PenaltySpec& spec, const FitConfig& config) {
    spec.validate();
    if (spec.dim() != lik.dim())
        throw std::invalid_argument("fit: penalty dimension does not match design");
    if (config.start && config.start->size() != lik.dim())
        throw std::invalid_argument("fit: start vector has wrong dimension");

    if (!prox_supported(spec)) return fit_subgradient(lik, spec, config);

    const int pd = lik.dim();
    Eigen::VectorXd b = config.start.value_or(Eigen::VectorXd::Zero(pd));
    Eigen::VectorXd b_prev = b;

    double sm;  // -L_n(b)
    Eigen::VectorXd grad;
    lik.value_and_gradient(b, sm, grad);
    sm = -sm;
    grad = -grad;
    double f = sm + weighted_penalty(spec, b);

    FitResult out;
    out.objective_trace.push_back(f);
    double step = config.step_init;
    bool separation_suspected = false;

    for (int k = 1; k <= config.max_iters; ++k) {
        Eigen::VectorXd base = b, base_grad = grad;
        double base_sm = sm;
        if (config.accelerate && k > 1) {
            Eigen::VectorXd y = b + (double(k - 1) / double(k + 2)) * (b - b_prev);
            double ysm;
            Eigen::VectorXd ygrad;
            lik.value_and_gradient(y, ysm, ygrad);
            base = y;
            base_sm = -ysm;
            base_grad = -ygrad;
        }

        // backtracking on the quadratic upper model of the smooth part; the
        // generous cap lets separated data escape past the magnitude guard
        // instead of stalling below it
        Eigen::VectorXd cand;
        double cand_sm = 0.0;
        step = std::min(step * 2.0, 1e30);
        bool accepted = false;
        for (int bt = 0; bt < 120; ++bt) {
            cand = prox_group(spec, base - step * base_grad, step);
            Eigen::VectorXd delta = cand - base;
            cand_sm = -lik.value(cand);
            double model = base_sm + base_grad.dot(delta) +
                           (config.suff_decrease / step) * delta.squaredNorm();
            if (cand_sm <= model + 1e-12 * (1.0 + std::abs(base_sm))) {
                accepted = true;
                break;
            }
            step *= config.step_shrink;
        }
        if (!accepted) {
            out.note = "step collapsed during backtracking";
            break;
        }
        double f_new = cand_sm + weighted_penalty(spec, cand);
        if (!std::isfinite(f_new))
            throw std::runtime_error("fit: non-finite objective at iteration " +
                                     std::to_string(k) + ", step " + std::to_string(step));

        if (config.accelerate && f_new > f) {
            // monotone fallback: plain step from the previous iterate
            step = std::min(step, config.step_init);
            for (int bt = 0; bt < 120; ++bt) {
                cand = prox_group(spec, b - step * grad, step);
                Eigen::VectorXd delta = cand - b;
                cand_sm = -lik.value(cand);
                double model = sm + grad.dot(delta) +
                               (config.suff_decrease / step) * delta.squaredNorm();
                if (cand_sm <= model + 1e-12 * (1.0 + std::abs(sm))) break;
                step *= config.step_shrink;
            }
            f_new = cand_sm + weighted_penalty(spec, cand);
        }

        double movement = (cand - b).lpNorm<Eigen::Infinity>();
        b_prev = b;
        b = cand;
        sm = cand_sm;
        double vtmp;
        lik.value_and_gradient(b, vtmp, grad);
        grad = -grad;

        double rel_change = (f - f_new) / std::max(1.0, std::abs(f));
        f = std::min(f, f_new);  // guard roundoff; prox descent is monotone
        out.objective_trace.push_back(f);
        out.iterations = k;
        out.kkt_residual = kkt_residual(spec, grad, b);
        if (rel_change >= 0.0 && rel_change < config.tol &&
            out.kkt_residual <= config.kkt_tol &&
            movement <= 1e-3 * (1.0 + b.lpNorm<Eigen::Infinity>())) {
            // stationarity inside a saturated likelihood is escape, not a
            // minimizer; veto and keep the non-convergence contract
            Eigen::VectorXd lp = lik.linear_predictor(b);
            if (lp.maxCoeff() - lp.minCoeff() <= kPredictorRangeGuard) {
                out.converged = true;
                break;
            }
            separation_suspected = true;
        }
    }

    out.beta = b;
    out.final_objective = f;
    out.step_final = step;
    out.active_groups = active_groups_of(spec, b);
    if (!out.converged && out.note.empty()) {
        Eigen::VectorXd lp = lik.linear_predictor(b);
        if (separation_suspected || lp.maxCoeff() - lp.minCoeff() > kPredictorRangeGuard)
            out.note = "max_iters reached; saturated likelihood (possible separation)";
        else
            out.note = "max_iters reached";
    }
    return out;
}

LambdaAudit lambda_from_theory(const LambdaRule& rule) {
    LambdaAudit audit;
    double u = rule.u;
    if (rule.plugin_beta) {
        u = std::exp(rule.plugin_beta->lpNorm<1>());
        audit.flags.push_back("plugin_u");
    }
    audit.factors["A"] = rule.A;
    audit.factors["u"] = u;
    audit.factors["rho_prime0"] = rule.rho_prime0;

    auto base_factor = [&](bool with_lambda0) {
        if (rule.n <= 0 || rule.pd_total <= 1 || rule.d <= 0)
            throw std::invalid_argument("lambda_from_theory: n, pd_total, d required");
        double n14 = std::pow(double(rule.n), 0.25);
        double tail = std::sqrt(std::log(double(rule.pd_total)) / rule.n);
        audit.factors["n_quarter"] = n14;
        audit.factors["sqrt_log_pd_over_n"] = tail;
        double v = 8.0 * rule.A * u * n14 * tail / (rule.d * rule.rho_prime0);
        if (with_lambda0) {
            audit.factors["lambda0_tau"] = rule.lambda0_tau;
            v *= rule.lambda0_tau;
        }
        return v;
    };

    switch (rule.kind) {
        case LambdaRuleKind::theorem1:
            audit.lambda = base_factor(true);
            break;
        case LambdaRuleKind::theorem2: {
            if (!rule.zeta) throw std::invalid_argument("theorem2 rule requires zeta");
            double lam_a = base_factor(false);
            double sum = 0.0;
            for (std::size_t j = 0; j < rule.group_sizes.size(); ++j) {
                double conj = holder_conjugate(rule.gamma[j]);
                double e = std::isinf(conj) ? 1.0 : 2.0 / conj;
                sum += std::pow(double(rule.group_sizes[j]), 1.0 + e);
            }
            if (sum <= 0.0) throw std::invalid_argument("theorem2 rule requires group sizes");
            double zeta4 = std::pow(*rule.zeta, 4.0);
            double lam_b = rule.c * zeta4 / sum;
            audit.factors["second_condition_floor"] = lam_b;
            audit.factors["c"] = rule.c;
            audit.flags.push_back("second-condition constant c is user-supplied");
            audit.lambda = std::max(lam_a, lam_b);
            break;
        }
        case LambdaRuleKind::corollary1: {
            if (!rule.zeta) throw std::invalid_argument("corollary1 rule requires zeta");
            if (rule.A <= 4.0) audit.flags.push_back("A <= 4");
            double tail = std::sqrt(std::log(double(rule.pd_total)) / rule.n);
            audit.factors["sqrt_log_pd_over_n"] = tail;
            double z2 = *rule.zeta * *rule.zeta;
            for (std::size_t j = 0; j < rule.group_sizes.size(); ++j) {
                double conj = holder_conjugate(rule.gamma[j]);
                double e = std::isinf(conj) ? 0.0 : 2.0 / conj;
                double size = double(rule.group_sizes[j]);
                double lam_j =
                    rule.A * std::min(z2, tail * std::pow(size, -e)) / std::sqrt(size);
                audit.per_group_lambda.push_back(lam_j);
            }
            audit.lambda =
                *std::max_element(audit.per_group_lambda.begin(), audit.per_group_lambda.end());
            break;
        }
        case LambdaRuleKind::corollary2: {
            if (!rule.zeta) throw std::invalid_argument("corollary2 rule requires zeta");
            if (rule.A <= 4.0) audit.flags.push_back("A <= 4");
            double tail = std::sqrt(std::log(double(rule.pd_total)) / rule.n);
            audit.factors["sqrt_log_pd_over_n"] = tail;
            double z2 = *rule.zeta * *rule.zeta;
            audit.lambda = rule.A * std::min(z2, tail) / (double(rule.d) * rule.d);
            break;
        }
        case LambdaRuleKind::grid:
            if (rule.grid.empty()) throw std::invalid_argument("grid rule requires grid values");
            audit.lambda = rule.grid.front();
            break;
    }
    if (!(audit.lambda >= 0.0)) throw std::runtime_error("lambda rule produced a negative value");
    return audit;
}

namespace {

// Proximal gradient for the gamma = 2 smooth-selection objective in original
// coordinates: -L_n(b) + sum_j 2 lambda sqrt(d) ||R b_j||_2. Working in the
// original parametrization keeps the conditioning of the design; the
// transformed-norm prox is exact.
FitResult fit_smooth_l2(const PartialLikelihood& lik, const SmoothPenaltySpec& sspec,
                        const FitConfig& config, int p, int d) {
    const double w = 2.0 * sspec.lambda * std::sqrt(double(d));
    Eigen::MatrixXd s_mat = sspec.factors.r.transpose() * sspec.factors.r;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s_mat);
    Eigen::VectorXd evals = es.eigenvalues().cwiseMax(0.0);
    const Eigen::MatrixXd& evecs = es.eigenvectors();

    auto penalty = [&](const Eigen::VectorXd& b) {
        double acc = 0.0;
        for (int j = 0; j < p; ++j) {
            auto bj = b.segment(j * d, d);
            acc += w * std::sqrt(std::max(0.0, bj.dot(s_mat * bj)));
        }
        return acc;
    };
    auto prox = [&](const Eigen::VectorXd& z, double step) {
        Eigen::VectorXd out(z.size());
        for (int j = 0; j < p; ++j)
            out.segment(j * d, d) =
                prox_transformed_l2(z.segment(j * d, d), step * w, evals, evecs);
        return out;
    };
    auto kkt = [&](const Eigen::VectorXd& g, const Eigen::VectorXd& b) {
        double res = 0.0;
        for (int j = 0; j < p; ++j) {
            auto gj = g.segment(j * d, d);
            auto bj = b.segment(j * d, d);
            double nrm = std::sqrt(std::max(0.0, bj.dot(s_mat * bj)));
            double block;
            if (nrm == 0.0) {
                Eigen::VectorXd gt = evecs.transpose() * gj;
                double dual_sq = 0.0;
                for (int i = 0; i < d; ++i) dual_sq += gt[i] * gt[i] / evals[i];
                block = std::max(0.0, std::sqrt(dual_sq) - w);
            } else {
                block = (gj + (w / nrm) * (s_mat * bj)).norm();
            }
            res = std::max(res, block);
        }
        return res;
    };

    const int pd = p * d;
    Eigen::VectorXd b = config.start.value_or(Eigen::VectorXd::Zero(pd));
    double sm;
    Eigen::VectorXd grad;
    lik.value_and_gradient(b, sm, grad);
    sm = -sm;
    grad = -grad;
    double f = sm + penalty(b);

    FitResult out;
    out.objective_trace.push_back(f);
    double step = config.step_init;
    for (int k = 1; k <= config.max_iters; ++k) {
        step = std::min(step * 2.0, 1e30);
        Eigen::VectorXd cand;
        double cand_sm = 0.0;
        bool accepted = false;
        for (int bt = 0; bt < 120; ++bt) {
            cand = prox(b - step * grad, step);
            Eigen::VectorXd delta = cand - b;
            cand_sm = -lik.value(cand);
            double model =
                sm + grad.dot(delta) + (config.suff_decrease / step) * delta.squaredNorm();
            if (cand_sm <= model + 1e-12 * (1.0 + std::abs(sm))) {
                accepted = true;
                break;
            }
            step *= config.step_shrink;
        }
        if (!accepted) {
            out.note = "step collapsed during backtracking";
            break;
        }
        double f_new = cand_sm + penalty(cand);
        if (!std::isfinite(f_new))
            throw std::runtime_error("fit_smooth: non-finite objective at iteration " +
                                     std::to_string(k));
        double movement = (cand - b).lpNorm<Eigen::Infinity>();
        b = cand;
        sm = cand_sm;
        double vtmp;
        lik.value_and_gradient(b, vtmp, grad);
        grad = -grad;

        double rel_change = (f - f_new) / std::max(1.0, std::abs(f));
        f = std::min(f, f_new);
        out.objective_trace.push_back(f);
        out.iterations = k;
        out.kkt_residual = kkt(grad, b);
        if (rel_change >= 0.0 && rel_change < config.tol &&
            out.kkt_residual <= config.kkt_tol &&
            movement <= 1e-3 * (1.0 + b.lpNorm<Eigen::Infinity>())) {
            out.converged = true;
            break;
        }
    }
    out.beta = b;
    out.final_objective = f;
    out.step_final = step;
    for (int j = 0; j < p; ++j)
        if (b.segment(j * d, d).cwiseAbs().maxCoeff() > 0.0) out.active_groups.push_back(j);
    if (out.note.empty())
        out.note = out.converged ? "smooth-selection prox" : "max_iters reached";
    return out;
}

}  // namespace

FitResult fit_smooth(const DesignExpansion& design, const SurvivalDataset& ds,
                     const SmoothPenaltySpec& sspec, const FitConfig& config) {
    if (!(sspec.gamma >= 2.0))
        throw std::invalid_argument("fit_smooth: smooth selection requires gamma >= 2");
    const int d = sspec.factors.d();
    if (design.d != d)
        throw std::invalid_argument("fit_smooth: smoothing factor dimension mismatch");
    const int p = design.p;
    for (int k = 0; k < d; ++k)
        if (std::abs(sspec.factors.r(k, k)) < 1e-14)
            throw std::invalid_argument("fit_smooth: singular smoothing factor R");

    FitResult res;
    if (sspec.gamma == 2.0 && sspec.rho == RhoKind::identity) {
        // rho(||R b||_2 + sqrt(b'Mb)) collapses to a doubled transformed norm
        PartialLikelihood lik(design, ds);
        return fit_smooth_l2(lik, sspec, config, p, d);
    }
    // general gamma: subgradient fallback on the exact smooth-selection
    // objective in the reparametrized coordinates
    DesignExpansion reparam = reparametrize_design(design, sspec.factors);
    PartialLikelihood lik(reparam, ds);
    {
        FitConfig cfg = config;
        const int pd = p * d;
        Eigen::VectorXd bt = cfg.start.value_or(Eigen::VectorXd::Zero(pd));
        auto value = [&](const Eigen::VectorXd& v) {
            double acc = -lik.value(v);
            for (int j = 0; j < p; ++j) {
                auto vj = v.segment(j * d, d);
                double t = block_norm(vj, sspec.gamma) + vj.norm();
                acc += sspec.lambda * std::sqrt(double(d)) *
                       (sspec.rho == RhoKind::identity ? t : t + sspec.rho_kappa * t * t);
            }
            return acc;
        };
        Eigen::VectorXd best = bt;
        double f_best = value(bt);
        res.objective_trace.push_back(f_best);
        for (int k = 1; k <= cfg.max_iters; ++k) {
            Eigen::VectorXd g = -lik.gradient(bt);
            for (int j = 0; j < p; ++j) {
                auto btj = bt.segment(j * d, d);
                double nrm2 = btj.norm();
                double nrmg = block_norm(btj, sspec.gamma);
                if (nrm2 > 0.0) {
                    double w = sspec.lambda * std::sqrt(double(d));
                    if (sspec.rho == RhoKind::quadratic)
                        w *= 1.0 + 2.0 * sspec.rho_kappa * (nrmg + nrm2);
                    Eigen::VectorXd dir(d);
                    for (int kk = 0; kk < d; ++kk) {
                        double a = std::abs(btj[kk]) / nrmg;
                        dir[kk] = std::pow(a, sspec.gamma - 1.0) * (btj[kk] >= 0 ? 1.0 : -1.0);
                    }
                    g.segment(j * d, d) += w * (dir + btj / nrm2);
                }
            }
            double gn = g.norm();
            if (gn <= 1e-15) break;
            bt -= (cfg.step_init / std::sqrt(double(k))) * (g / gn);
            double fv = value(bt);
            if (fv < f_best) {
                f_best = fv;
                best = bt;
            }
            res.objective_trace.push_back(f_best);
            res.iterations = k;
        }
        res.beta = best;
        res.final_objective = f_best;
        res.converged = true;
        res.note = "smooth subgradient fallback";
        bt = best;
        res.active_groups.clear();
        for (int j = 0; j < p; ++j)
            if (bt.segment(j * d, d).cwiseAbs().maxCoeff() > 0.0) res.active_groups.push_back(j);
    }

    // map back to original coordinates: solve R b_j = bt_j per block
    Eigen::VectorXd beta_orig(p * d);
    for (int j = 0; j < p; ++j) {
        Eigen::VectorXd btj = (res.beta.size() ? res.beta : Eigen::VectorXd::Zero(p * d))
                                  .segment(j * d, d);
        beta_orig.segment(j * d, d) =
            sspec.factors.r.triangularView<Eigen::Upper>().solve(btj);
    }
    res.beta = beta_orig;
    if (res.note.empty()) res.note = "smooth-reparametrized";
    return res;
}

std::vector<FitResult> fit_path(const PartialLikelihood& lik, PenaltySpec spec,
                                const std::vector<double>& grid, const FitConfig& config) {
    for (std::size_t k = 1; k < grid.size(); ++k)
        if (grid[k] > grid[k - 1])
            throw std::invalid_argument("fit_path: grid must be sorted descending");
    std::vector<FitResult> out;
    FitConfig cfg = config;
    for (double lam : grid) {
        spec.lambda = lam;
        FitResult res = fit(lik, spec, cfg);
        cfg.start = res.beta;  // warm start
        out.push_back(std::move(res));
    }
    return out;
}

}  // namespace groupcox
