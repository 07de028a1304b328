#pragma once

#include <Eigen/Core>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "groupcox/partial_likelihood.hpp"
#include "groupcox/penalty.hpp"

namespace groupcox {

struct FitConfig {
    int max_iters = 5000;
    double tol = 1e-9;       // relative objective-change tolerance
    double kkt_tol = 1e-6;   // dual-norm excess tolerance at convergence
    double step_init = 1.0;
    double step_shrink = 0.5;
    double suff_decrease = 0.5;
    bool accelerate = false;
    std::optional<Eigen::VectorXd> start;
};

struct FitResult {
    Eigen::VectorXd beta;
    std::vector<double> objective_trace;  // nonincreasing accepted values
    double kkt_residual = 0.0;
    std::vector<int> active_groups;
    int iterations = 0;
    bool converged = false;
    double final_objective = 0.0;
    double step_final = 0.0;
    std::string note;
};

// -L_n(b) + lambda P(b).
double objective(const PartialLikelihood& lik, const PenaltySpec& spec, const Eigen::VectorXd& b);

// Proximal gradient with backtracking; subgradient fallback with diminishing
// steps when the penalty has no closed-form prox (non-identity rho or gamma
// outside {1, 2, inf}). Deterministic given its inputs. Non-convergence
// (e.g. separated data at lambda = 0) is flagged, never thrown.
FitResult fit(const PartialLikelihood& lik, const PenaltySpec& spec, const FitConfig& config = {});

// max over groups of the dual-norm stationarity excess at beta, where
// grad_smooth is the gradient of -L_n.
double kkt_residual(const PenaltySpec& spec, const Eigen::VectorXd& grad_smooth,
                    const Eigen::VectorXd& beta);

// Smallest lambda with beta_hat = 0 for a uniform-lambda spec: the maximal
// group dual norm of the gradient at zero, scaled by |G_j|^{1/gamma*} rho'(0+).
double zero_solution_threshold(const PartialLikelihood& lik, const PenaltySpec& spec);

enum class LambdaRuleKind { theorem1, theorem2, corollary1, corollary2, grid };

struct LambdaRule {
    LambdaRuleKind kind = LambdaRuleKind::theorem1;
    double A = 1.0;
    double u = 1.0;                       // exp ||beta*||_1
    std::optional<Eigen::VectorXd> plugin_beta;  // substitute u = exp ||beta_init||_1
    double lambda0_tau = 1.0;             // baseline hazard at the study end
    int n = 0;
    int pd_total = 0;                     // dictionary-expanded dimension
    int d = 1;                            // functions per covariate
    double rho_prime0 = 1.0;
    std::optional<double> zeta;           // needed by theorem2 / corollary rules
    double c = 1.0;                       // constant of the second theorem2 condition
    std::vector<double> gamma;            // per group (corollary1, theorem2 sum)
    std::vector<int> group_sizes;
    std::vector<double> grid;
};

struct LambdaAudit {
    double lambda = 0.0;
    std::vector<double> per_group_lambda;
    std::map<std::string, double> factors;
    std::vector<std::string> flags;
};

LambdaAudit lambda_from_theory(const LambdaRule& rule);

// Fits the smooth-selection problem in the reparametrized coordinates
// b_tilde = R b and maps back; FitResult.beta is in original coordinates.
FitResult fit_smooth(const DesignExpansion& design, const SurvivalDataset& ds,
                     const SmoothPenaltySpec& sspec, const FitConfig& config = {});

// Warm-started fits along a descending lambda grid.
std::vector<FitResult> fit_path(const PartialLikelihood& lik, PenaltySpec spec,
                                const std::vector<double>& grid, const FitConfig& config = {});

}  // namespace groupcox
