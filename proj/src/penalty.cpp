#include "groupcox/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace groupcox {

PenaltySpec PenaltySpec::uniform(int p, int d, double gamma, double lambda, RhoKind rho,
                                 double rho_kappa) {
    PenaltySpec spec;
    spec.rho = rho;
    spec.rho_kappa = rho_kappa;
    spec.gamma.assign(p, gamma);
    spec.group_sizes.assign(p, d);
    spec.lambda = lambda;
    spec.validate();
    return spec;
}

int PenaltySpec::dim() const {
    return std::accumulate(group_sizes.begin(), group_sizes.end(), 0);
}

int PenaltySpec::group_offset(int j) const {
    return std::accumulate(group_sizes.begin(), group_sizes.begin() + j, 0);
}

double PenaltySpec::scaling(int j) const {
    double conj = holder_conjugate(gamma[j]);
    if (std::isinf(conj)) return 1.0;
    return std::pow(double(group_sizes[j]), 1.0 / conj);
}

void PenaltySpec::validate() const {
    if (gamma.size() != group_sizes.size())
        throw std::invalid_argument("penalty: gamma and group_sizes must have equal length");
    for (double g : gamma)
        if (!(g >= 1.0)) throw std::invalid_argument("penalty: gamma must be >= 1");
    for (int s : group_sizes)
        if (s < 1) throw std::invalid_argument("penalty: empty group");
    if (!(lambda >= 0.0)) throw std::invalid_argument("penalty: lambda must be >= 0");
    if (!per_group_lambda.empty()) {
        if (per_group_lambda.size() != group_sizes.size())
            throw std::invalid_argument("penalty: per_group_lambda size mismatch");
        for (double l : per_group_lambda)
            if (!(l >= 0.0)) throw std::invalid_argument("penalty: per-group lambda must be >= 0");
    }
    if (rho == RhoKind::quadratic && rho_kappa < 0.0)
        throw std::invalid_argument("penalty: quadratic rho needs kappa >= 0");
}

double holder_conjugate(double gamma) {
    if (!(gamma >= 1.0)) throw std::invalid_argument("holder_conjugate: gamma must be >= 1");
    if (gamma == 1.0) return kInf;
    if (std::isinf(gamma)) return 1.0;
    return gamma / (gamma - 1.0);
}

double rho_value(const PenaltySpec& spec, double t) {
    switch (spec.rho) {
        case RhoKind::identity:
            return t;
        case RhoKind::quadratic:
            return t + spec.rho_kappa * t * t;
    }
    return t;
}

double rho_prime0(const PenaltySpec&) {
    return 1.0;  // both shipped rho have unit right derivative at 0
}

double block_norm(const Eigen::Ref<const Eigen::VectorXd>& v, double gamma) {
    if (v.size() == 0) return 0.0;
    if (gamma == 1.0) return v.lpNorm<1>();
    if (gamma == 2.0) return v.norm();
    if (std::isinf(gamma)) return v.lpNorm<Eigen::Infinity>();
    // general gamma >= 1, computed with a max shift for stability
    double m = v.cwiseAbs().maxCoeff();
    if (m == 0.0) return 0.0;
    double acc = 0.0;
    for (int k = 0; k < v.size(); ++k) acc += std::pow(std::abs(v[k]) / m, gamma);
    return m * std::pow(acc, 1.0 / gamma);
}

double penalty_value(const PenaltySpec& spec, const Eigen::VectorXd& b) {
    if (b.size() != spec.dim()) throw std::invalid_argument("penalty_value: size mismatch");
    double acc = 0.0;
    int off = 0;
    for (int j = 0; j < spec.num_groups(); ++j) {
        int sz = spec.group_sizes[j];
        double term = spec.scaling(j) * rho_value(spec, block_norm(b.segment(off, sz), spec.gamma[j]));
        acc += spec.per_group_lambda.empty() ? term : spec.per_group_lambda[j] * term;
        off += sz;
    }
    return acc;
}

double weighted_penalty(const PenaltySpec& spec, const Eigen::VectorXd& b) {
    double p = penalty_value(spec, b);
    return spec.per_group_lambda.empty() ? spec.lambda * p : p;
}

double dual_block_norm(const PenaltySpec& spec, const Eigen::VectorXd& v, int j) {
    if (j < 0 || j >= spec.num_groups())
        throw std::invalid_argument("dual_block_norm: group index out of range");
    int off = spec.group_offset(j);
    return block_norm(v.segment(off, spec.group_sizes[j]), holder_conjugate(spec.gamma[j]));
}

bool threshold_event(const PenaltySpec& spec, const Eigen::VectorXd& v, int j) {
    return dual_block_norm(spec, v, j) <=
           spec.group_lambda(j) * spec.scaling(j) * rho_prime0(spec);
}

Eigen::VectorXd project_l1_ball(const Eigen::VectorXd& v, double radius) {
    if (radius < 0.0) throw std::invalid_argument("project_l1_ball: negative radius");
    if (v.lpNorm<1>() <= radius) return v;
    // sort-based threshold: out_i = sign(v_i) max(|v_i| - theta, 0)
    std::vector<double> a(v.size());
    for (int i = 0; i < v.size(); ++i) a[i] = std::abs(v[i]);
    std::sort(a.begin(), a.end(), std::greater<double>());
    double cum = 0.0, theta = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        cum += a[k];
        double cand = (cum - radius) / double(k + 1);
        if (k + 1 == a.size() || a[k + 1] <= cand) {
            theta = cand;
            break;
        }
    }
    Eigen::VectorXd out(v.size());
    for (int i = 0; i < v.size(); ++i) {
        double mag = std::max(std::abs(v[i]) - theta, 0.0);
        out[i] = v[i] >= 0.0 ? mag : -mag;
    }
    return out;
}

Eigen::VectorXd prox_group(const PenaltySpec& spec, const Eigen::VectorXd& z, double step) {
    if (spec.rho != RhoKind::identity)
        throw std::invalid_argument("prox_group: closed-form prox requires identity rho");
    if (z.size() != spec.dim()) throw std::invalid_argument("prox_group: size mismatch");
    if (!(step >= 0.0)) throw std::invalid_argument("prox_group: step must be nonnegative");

    Eigen::VectorXd out(z.size());
    int off = 0;
    for (int j = 0; j < spec.num_groups(); ++j) {
        int sz = spec.group_sizes[j];
        double thr = step * spec.group_lambda(j) * spec.scaling(j);
        auto zj = z.segment(off, sz);
        auto xj = out.segment(off, sz);
        double g = spec.gamma[j];
        if (g == 2.0) {
            double nrm = zj.norm();
            xj = (nrm <= thr) ? Eigen::VectorXd::Zero(sz).eval()
                              : ((1.0 - thr / nrm) * zj).eval();
        } else if (g == 1.0) {
            for (int k = 0; k < sz; ++k) {
                double mag = std::max(std::abs(zj[k]) - thr, 0.0);
                xj[k] = zj[k] >= 0.0 ? mag : -mag;
            }
        } else if (std::isinf(g)) {
            // Moreau: prox of thr*||.||_inf = z - projection onto thr * l1 ball
            xj = zj - project_l1_ball(zj, thr);
        } else {
            throw std::invalid_argument("prox_group: gamma must be 1, 2, or inf");
        }
        off += sz;
    }
    return out;
}

double block_stationarity_residual(const Eigen::Ref<const Eigen::VectorXd>& grad_block,
                                   const Eigen::Ref<const Eigen::VectorXd>& x_block,
                                   double weight, double gamma) {
    const auto& gj = grad_block;
    const auto& xj = x_block;
    const int sz = static_cast<int>(xj.size());
    if (block_norm(xj, gamma) == 0.0) {
        // subdifferential at 0 is the dual-norm ball of radius `weight`
        return std::max(0.0, block_norm(gj, holder_conjugate(gamma)) - weight);
    }
    if (gamma == 2.0) return (gj + weight * xj / xj.norm()).norm();
    if (gamma == 1.0) {
        double res = 0.0;
        for (int k = 0; k < sz; ++k) {
            double r = (xj[k] != 0.0) ? std::abs(gj[k] + weight * (xj[k] > 0 ? 1.0 : -1.0))
                                      : std::max(0.0, std::abs(gj[k]) - weight);
            res = std::max(res, r);
        }
        return res;
    }
    if (std::isinf(gamma)) {
        // -gj/weight must lie in conv{ sign(x_k) e_k : |x_k| = ||x||_inf };
        // project the target onto that simplex face and measure the distance.
        double top = xj.cwiseAbs().maxCoeff();
        Eigen::VectorXd target = -gj / weight;
        double off_face = 0.0;
        std::vector<double> t;
        for (int k = 0; k < sz; ++k) {
            if (std::abs(xj[k]) >= top - 1e-9 * std::max(1.0, top))
                t.push_back(target[k] * (xj[k] >= 0 ? 1.0 : -1.0));
            else
                off_face += target[k] * target[k];
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
        double dist2 = off_face;
        for (double v : t) {
            double proj = std::max(v - theta, 0.0);
            dist2 += (v - proj) * (v - proj);
        }
        return weight * std::sqrt(dist2);
    }
    // general gamma: necessary conditions as a diagnostic
    double dual_gap = std::max(0.0, block_norm(gj, holder_conjugate(gamma)) - weight);
    double nrm = block_norm(xj, gamma);
    double align = std::abs(gj.dot(xj) + weight * nrm) / std::max(1.0, nrm);
    return std::max(dual_gap, align);
}

double prox_subgradient_residual(const PenaltySpec& spec, const Eigen::VectorXd& z, double step,
                                 const Eigen::VectorXd& x) {
    // residual of 0 in x - z + step * d(sum_j w_j ||x_j||_gamma)(x)
    double res = 0.0;
    int off = 0;
    for (int j = 0; j < spec.num_groups(); ++j) {
        int sz = spec.group_sizes[j];
        double w = step * spec.group_lambda(j) * spec.scaling(j);
        Eigen::VectorXd gj = x.segment(off, sz) - z.segment(off, sz);
        res = std::max(res,
                       block_stationarity_residual(gj, x.segment(off, sz), w, spec.gamma[j]));
        off += sz;
    }
    return res;
}

Eigen::VectorXd prox_transformed_l2(const Eigen::VectorXd& z, double t,
                                    const Eigen::VectorXd& s_eigvals,
                                    const Eigen::MatrixXd& s_eigvecs) {
    if (!(t >= 0.0)) throw std::invalid_argument("prox_transformed_l2: negative threshold");
    if (t == 0.0) return z;
    const int d = static_cast<int>(z.size());
    Eigen::VectorXd zt = s_eigvecs.transpose() * z;

    // zero iff ||R^{-T} z|| <= t, i.e. sum z~_i^2 / lambda_i <= t^2
    double dual_sq = 0.0;
    for (int i = 0; i < d; ++i) {
        if (s_eigvals[i] <= 0.0)
            throw std::invalid_argument("prox_transformed_l2: factor not positive definite");
        dual_sq += zt[i] * zt[i] / s_eigvals[i];
    }
    if (dual_sq <= t * t) return Eigen::VectorXd::Zero(d);

    // solve mu * ||R x(mu)|| = t with x(mu) = (I + mu S)^{-1} z; the map is
    // monotone increasing in mu, so bisection is safe
    auto phi = [&](double mu) {
        double acc = 0.0;
        for (int i = 0; i < d; ++i) {
            double r = 1.0 + mu * s_eigvals[i];
            acc += s_eigvals[i] * zt[i] * zt[i] / (r * r);
        }
        return mu * std::sqrt(acc) - t;
    };
    double lo = 0.0, hi = 1.0;
    while (phi(hi) < 0.0 && hi < 1e18) hi *= 4.0;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (phi(mid) < 0.0)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= 1e-15 * std::max(1.0, hi)) break;
    }
    double mu = 0.5 * (lo + hi);
    Eigen::VectorXd xt(d);
    for (int i = 0; i < d; ++i) xt[i] = zt[i] / (1.0 + mu * s_eigvals[i]);
    return s_eigvecs * xt;
}

Eigen::VectorXd OverlapExpansion::recover(const Eigen::VectorXd& latent_b) const {
    if (latent_b.size() != latent_dim())
        throw std::invalid_argument("overlap recover: size mismatch");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(original_dim);
    for (int c = 0; c < latent_dim(); ++c) out[latent_to_original[c]] += latent_b[c];
    return out;
}

OverlapExpansion expand_overlap(const GroupStructure& structure, const DesignExpansion& design) {
    if (structure.dim != design.dim())
        throw std::invalid_argument("expand_overlap: structure dimension mismatch");
    OverlapExpansion out;
    out.original_dim = design.dim();
    for (const auto& group : structure.groups) {
        if (group.empty()) throw std::invalid_argument("expand_overlap: empty group");
        out.latent_group_sizes.push_back(static_cast<int>(group.size()));
        for (int c : group) {
            if (c < 0 || c >= design.dim())
                throw std::invalid_argument("expand_overlap: coordinate out of range");
            out.latent_to_original.push_back(c);
        }
    }
    out.latent_design.p = static_cast<int>(structure.groups.size());
    out.latent_design.d = 0;  // latent groups may have unequal sizes
    out.latent_design.bound = design.bound;
    out.latent_design.matrix.resize(design.matrix.rows(), out.latent_dim());
    for (int c = 0; c < out.latent_dim(); ++c)
        out.latent_design.matrix.col(c) = design.matrix.col(out.latent_to_original[c]);
    return out;
}

double smooth_penalty_value(const SmoothPenaltySpec& spec, int p, const Eigen::VectorXd& b) {
    if (!(spec.gamma >= 2.0))
        throw std::invalid_argument("smooth penalty requires gamma >= 2");
    int d = spec.factors.d();
    if (b.size() != p * d) throw std::invalid_argument("smooth_penalty_value: size mismatch");
    PenaltySpec rho_holder;
    rho_holder.rho = spec.rho;
    rho_holder.rho_kappa = spec.rho_kappa;
    double acc = 0.0;
    double scale = std::sqrt(double(d));
    for (int j = 0; j < p; ++j) {
        Eigen::VectorXd rb = spec.factors.r * b.segment(j * d, d);
        // sqrt(b' M b) with M = R'R equals ||R b||_2
        acc += scale * rho_value(rho_holder, block_norm(rb, spec.gamma) + rb.norm());
    }
    return acc;
}

}  // namespace groupcox
