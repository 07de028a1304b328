#pragma once

#include <Eigen/Core>
#include <limits>
#include <vector>

#include "groupcox/basis.hpp"

namespace groupcox {

constexpr double kInf = std::numeric_limits<double>::infinity();

// rho(t) = t (identity) or t + kappa t^2; both convex with rho'(0+) = 1.
enum class RhoKind { identity, quadratic };

// Group penalty P(b) = sum_j |G_j|^{1/gamma_j*} rho(||b_j||_{gamma_j}), with
// optional per-group tuning weights lambda_{n,j}. Groups are contiguous
// blocks; overlapping structures are handled by latent duplication first.
struct PenaltySpec {
    RhoKind rho = RhoKind::identity;
    double rho_kappa = 0.0;
    std::vector<double> gamma;      // per group, >= 1, kInf allowed
    std::vector<int> group_sizes;   // |G_j|
    double lambda = 0.0;            // global lambda_n
    std::vector<double> per_group_lambda;  // empty unless per-group weights are used

    static PenaltySpec uniform(int p, int d, double gamma, double lambda,
                               RhoKind rho = RhoKind::identity, double rho_kappa = 0.0);

    int num_groups() const { return static_cast<int>(group_sizes.size()); }
    int dim() const;
    int group_offset(int j) const;
    // |G_j|^{1/gamma_j*}
    double scaling(int j) const;
    // lambda weight applied to group j in the objective
    double group_lambda(int j) const {
        return per_group_lambda.empty() ? lambda : per_group_lambda[j];
    }
    void validate() const;
};

// gamma* with 1/gamma + 1/gamma* = 1; 1 <-> inf.
double holder_conjugate(double gamma);

double rho_value(const PenaltySpec& spec, double t);
double rho_prime0(const PenaltySpec& spec);

// ||v||_gamma for gamma >= 1 (inf = max-abs).
double block_norm(const Eigen::Ref<const Eigen::VectorXd>& v, double gamma);

// P(b) per the group-penalty definition. With per-group weights set, the
// lambda_{n,j} are folded in; otherwise the caller multiplies by lambda.
double penalty_value(const PenaltySpec& spec, const Eigen::VectorXd& b);

// What the penalized objective adds: lambda * P(b), or the per-group weighted
// sum when per-group weights are present.
double weighted_penalty(const PenaltySpec& spec, const Eigen::VectorXd& b);

// ||v_j||_{gamma_j*}, the dual block norm used by the threshold events.
double dual_block_norm(const PenaltySpec& spec, const Eigen::VectorXd& v, int j);

// ||v_j||_{gamma_j*} <= lambda_j |G_j|^{1/gamma_j*} rho'(0+)
bool threshold_event(const PenaltySpec& spec, const Eigen::VectorXd& v, int j);

// argmin_x 1/2||x - z||^2 + step * sum_j lambda_j |G_j|^{1/gamma_j*} ||x_j||_{gamma_j},
// blockwise; identity rho and gamma in {1, 2, inf} only.
Eigen::VectorXd prox_group(const PenaltySpec& spec, const Eigen::VectorXd& z, double step);

// max-norm violation of 0 in x - z + step * d(weighted penalty)(x); the prox
// optimality certificate.
double prox_subgradient_residual(const PenaltySpec& spec, const Eigen::VectorXd& z, double step,
                                 const Eigen::VectorXd& x);

// Distance of 0 from grad_block + weight * d||.||_gamma(x_block); the shared
// building block of prox certificates and solver KKT residuals.
double block_stationarity_residual(const Eigen::Ref<const Eigen::VectorXd>& grad_block,
                                   const Eigen::Ref<const Eigen::VectorXd>& x_block,
                                   double weight, double gamma);

// Euclidean projection onto the l1 ball of the given radius.
Eigen::VectorXd project_l1_ball(const Eigen::VectorXd& v, double radius);

// argmin_x 1/2||x - z||^2 + t ||R x||_2 for an invertible factor R, solved
// through the eigendecomposition of S = R^T R (pass eigvals/eigvecs of S).
// Exact up to the bisection tolerance on the secular equation.
Eigen::VectorXd prox_transformed_l2(const Eigen::VectorXd& z, double t,
                                    const Eigen::VectorXd& s_eigvals,
                                    const Eigen::MatrixXd& s_eigvecs);

// Overlapping groups over pd coordinates, resolved by duplicating every
// coordinate once per owning group. The latent problem has disjoint
// contiguous groups; recover() sums latent copies back.
struct GroupStructure {
    std::vector<std::vector<int>> groups;
    int dim = 0;
};

struct OverlapExpansion {
    DesignExpansion latent_design;
    std::vector<int> latent_to_original;  // column map
    std::vector<int> latent_group_sizes;
    int original_dim = 0;

    int latent_dim() const { return static_cast<int>(latent_to_original.size()); }
    Eigen::VectorXd recover(const Eigen::VectorXd& latent_b) const;
};

OverlapExpansion expand_overlap(const GroupStructure& structure, const DesignExpansion& design);

// Smooth-selection penalty sum_j sqrt(d) rho(||R b_j||_gamma + sqrt(b_j' M b_j))
// with M = R'R; requires gamma >= 2.
struct SmoothPenaltySpec {
    SmoothingFactors factors;
    double gamma = 2.0;
    RhoKind rho = RhoKind::identity;
    double rho_kappa = 0.0;
    double lambda = 0.0;
};

double smooth_penalty_value(const SmoothPenaltySpec& spec, int p, const Eigen::VectorXd& b);

}  // namespace groupcox
