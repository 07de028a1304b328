#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "groupcox/partial_likelihood.hpp"
#include "groupcox/penalty.hpp"
#include "groupcox/rng.hpp"
#include "groupcox/solver.hpp"

namespace groupcox::theory {

// Structured-sparse reference point and its derived constants.
struct OracleSpec {
    Eigen::VectorXd beta_star;
    std::vector<int> support;  // groups with nonzero block norm
    int s = 0;
    double m_star = 0.0;  // min_{j in support} ||beta*_j||_{gamma_j}
    double u = 1.0;       // exp ||beta*||_1
    double d_bar = 0.0;   // sum_{j in support} |G_j|^{2/gamma_j*}
};

OracleSpec make_oracle_spec(const PenaltySpec& spec, const Eigen::VectorXd& beta_star);

// One sandwich evaluation at anchor b* = c b + (1-c) beta*. The two-sided
// comparison uses the sample-centered Euclidean norm (the route the proofs
// take); the plain-norm variant of the one-sided upper display is kept
// alongside, and the centered variant of it is the strict form whose rare
// failures are counted rather than hidden.
struct SandwichCase {
    double c = 0.0;
    double lower = 0.0;   // omega_min e^{-2 a_v} ||f - mean||^2
    double middle = 0.0;  // ||f||^2_{n,b*}
    double upper = 0.0;   // e^{2 a_v} ||f - mean||^2
    double eigen_lhs = 0.0;  // eigenvalue-ratio lower bound of the second display
    double omega_max_anchor = 0.0;     // max_i w_i at this case's anchor
    bool pass_sandwich = false;        // lower <= middle <= upper
    bool pass_upper_raw = false;       // middle <= ||f||^2 (display as printed)
    bool pass_upper_centered = false;  // middle <= ||f - mean||^2 (strict form)
    bool pass_upper_weighted = false;  // middle <= omega_max ||f - mean||^2 (provable)
};

struct SandwichReport {
    double a_v = 0.0;      // max_{i,q} |v'(Psi_i - Psi_q)|
    double a_diag = 0.0;   // 2 max_i |v' Psi_i|, reported as a diagnostic
    double omega_min = 0.0;
    double f_norm_sq_centered = 0.0;
    double f_norm_sq_raw = 0.0;
    std::vector<SandwichCase> cases;
    int violations_sandwich = 0;
    int violations_upper_raw = 0;
    int violations_upper_centered = 0;
    int violations_upper_weighted = 0;
    int violations() const {
        return violations_sandwich + violations_upper_centered;
    }
};

SandwichReport check_sandwich(const PartialLikelihood& lik, const Eigen::VectorXd& b,
                              const Eigen::VectorXd& beta_star,
                              const std::vector<double>& c_grid, double slack = 1e-10);

// Sampled restricted-eigenvalue estimate over the cone
// C_{mu,rho} = {x : P(x off support) <= mu P(x on support)}.
struct REEstimate {
    double zeta_sq = 0.0;
    double mu = 7.0;
    int samples_used = 0;
    int skipped = 0;
    Eigen::VectorXd min_direction;
};

REEstimate estimate_re_constant(const PartialLikelihood& lik, const Eigen::VectorXd& beta_star,
                                const PenaltySpec& spec, double mu, int n_samples, Rng& rng);

// Same estimator with an injected curvature matrix (used by synthetic checks).
REEstimate estimate_re_constant_matrix(const Eigen::MatrixXd& neg_hessian,
                                       const PenaltySpec& spec, const std::vector<int>& support,
                                       double mu, int n_samples, Rng& rng);

// Projects x into the cone by shrinking its off-support part; returns false
// if the support part vanishes.
bool project_into_cone(const PenaltySpec& spec, const std::vector<int>& support, double mu,
                       Eigen::VectorXd& x);
bool cone_member(const PenaltySpec& spec, const std::vector<int>& support, double mu,
                 const Eigen::VectorXd& x);

// Numeric minimization of w_i(b) over ||b||^2 <= b_n (multi-start projected
// gradient; optional dense grid for dim <= 3), plus the per-time eigenvalue
// diagnostics of the corresponding lower-bound display.
struct MinWeightResult {
    double numeric_min = 0.0;
    Eigen::VectorXd argmin;
    double eigen_terms_sum = 0.0;        // sum_q min{0, lambda_min(Psi_i Psi_i')} 1{i in R_q}
    std::vector<double> eigen_diag;      // per failure time
    bool used_grid = false;
};

struct MinWeightOptions {
    int n_starts = 24;
    int iterations = 400;
    bool dense_grid_low_dim = true;
    double grid_step = 1e-3;
};

MinWeightResult min_weight_prop1(const PartialLikelihood& lik, int subject, double b_n,
                                 const MinWeightOptions& options, Rng& rng);

// w_i(b) = sum_q softmax contributions for one subject (helper for the
// minimization and its tests).
double subject_weight(const PartialLikelihood& lik, int subject, const Eigen::VectorXd& b);

struct Lemma1Report {
    std::vector<bool> events;  // per-group threshold tests
    bool all_events_hold = false;
    int samples = 0;
    int violations = 0;
    double min_gap = 0.0;  // min over samples of f(x) - f(0)
    std::optional<Eigen::VectorXd> violating_x;
};

// Checks min_x {lambda P(x) - (x - beta*)' v} = beta*' v by sampling when all
// threshold events hold; searches for a violation when some event fails.
Lemma1Report check_lemma1(const PenaltySpec& spec, const Eigen::VectorXd& beta_star,
                          const Eigen::VectorXd& v, int n_samples, Rng& rng);

// Smallest positive saturation points of the two tuning-constant displays,
// found by bisection; 0 when the right-hand side already dominates the whole
// unit interval (every v is feasible).
struct VConstants {
    std::optional<double> v1;
    std::optional<double> v2;
    bool v1_interval_feasible = false;
    bool v2_interval_feasible = false;
    double rhs1 = 0.0;
    double rhs2 = 0.0;
};

VConstants solve_v_constants(double lambda, double zeta, double d_bar, double c_bound,
                             double rho_prime0);

// Everything needed to audit the oracle inequalities on simulated data.
struct OracleExperiment {
    const PartialLikelihood* lik = nullptr;
    Eigen::VectorXd g_values;  // g(X_i) per subject
    OracleSpec oracle;
    PenaltySpec penalty;
    double zeta = 0.0;
    double c_bound = 0.0;  // dictionary bound C
    int cone_samples = 1000;
    std::vector<double> c_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
};

struct OracleBoundReport {
    double lhs = 0.0;           // ||f_beta_hat - g||^2
    double approx_err = 0.0;    // ||f_beta* - g||^2
    double lambda = 0.0;
    double v1 = 0.0, v2 = 0.0;
    double r_n = 0.0;
    double omega_min_cone = 0.0;  // sampled per the first oracle bound
    double omega_min_star = 0.0;  // min_i w_i(beta*)
    double epsilon = 0.0;
    double thm1_rhs = 0.0;
    double thm2_rhs = 0.0;
    double lemma5_lhs = 0.0;
    double lemma5_rhs = 0.0;
    bool thm1_holds = false;
    bool thm2_holds = false;
    bool lemma5_holds = false;
};

OracleBoundReport oracle_bound_report(const OracleExperiment& experiment,
                                      const FitResult& fit_result, const LambdaAudit& rule,
                                      Rng& rng);

}  // namespace groupcox::theory
