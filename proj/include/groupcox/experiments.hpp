#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "groupcox/partial_likelihood.hpp"
#include "groupcox/penalty.hpp"
#include "groupcox/solver.hpp"
#include "groupcox/survival.hpp"
#include "groupcox/theory.hpp"

namespace groupcox::experiments {

// Random small instance shared by the verification suites.
struct RandomInstance {
    SurvivalDataset ds;
    DesignExpansion design;
};

struct InstanceParams {
    int n_min = 8, n_max = 30;
    int p_min = 1, p_max = 4;
    int d_min = 1, d_max = 3;
    BasisFamily family = BasisFamily::polynomial;
    double censor_rate = 0.3;
};

RandomInstance make_random_instance(const InstanceParams& params, Rng& rng);

// Minimizes 1/2||x - z||^2 + sum_j w_j ||x_j||_{gamma_j} by subgradient
// descent with Polyak-type target refinement; independent of the closed-form
// prox it certifies.
Eigen::VectorXd numeric_prox_oracle(const PenaltySpec& spec, const Eigen::VectorXd& z,
                                    double step, int rounds = 60, int iters_per_round = 400);

// Exhaustive grid minimization of the penalized objective over [lo, hi]^pd,
// refined around the incumbent cell; convexity keeps the refinement exact.
double grid_search_objective(const PartialLikelihood& lik, const PenaltySpec& spec, double lo,
                             double hi, int coarse_points, int refinements);

// ---- verification suites ----------------------------------------------

struct GradientSuiteResult {
    int instances = 0;
    double max_grad_err = 0.0;     // relative, against central differences
    double max_hess_err = 0.0;     // against differenced scores
    double min_hess_eigen = 0.0;   // most negative eigenvalue seen
    double seconds = 0.0;
};
GradientSuiteResult run_gradient_suite(int instances, std::uint64_t seed);

struct WeightSuiteResult {
    int instances = 0;
    double max_sum_err = 0.0;    // |sum_i w_i - N|
    double max_norm_err = 0.0;   // |(1/n) sum_i Y_i w_i(b*, t) - 1|
    double seconds = 0.0;
};
WeightSuiteResult run_weight_suite(int instances, std::uint64_t seed);

struct SandwichSuiteResult {
    int instances = 0;
    int cases = 0;
    int violations_sandwich = 0;        // two-sided comparison with centered norms
    int violations_upper_raw = 0;       // one-sided upper, plain norm
    int violations_upper_centered = 0;  // one-sided upper, centered norm (strict)
    int violations_upper_weighted = 0;  // one-sided upper with the max-weight factor
    double max_form_gap = 0.0;  // |raw-moment route - centered route| on tie-free data
    double seconds = 0.0;
};
SandwichSuiteResult run_sandwich_suite(int instances, const std::vector<double>& c_grid,
                                       std::uint64_t seed);

struct Lemma1SuiteResult {
    int below_samples = 0;
    int below_violations = 0;     // with v at 0.9x thresholds: expected 0
    bool above_violation_found = false;  // with one group at 1.5x: expected true
    double seconds = 0.0;
};
Lemma1SuiteResult run_lemma1_suite(int samples, std::uint64_t seed);

struct ProxSuiteResult {
    int blocks = 0;
    double max_diff = 0.0;        // closed form vs numeric oracle
    double max_residual = 0.0;    // subgradient certificate of the closed form
    double seconds = 0.0;
};
ProxSuiteResult run_prox_suite(int blocks, std::uint64_t seed);

struct SolverOracleSuiteResult {
    int instances = 0;
    double max_gap = 0.0;            // fit objective minus grid minimum
    bool threshold_exact = true;     // zero solution on both sides of lambda*
    double seconds = 0.0;
};
SolverOracleSuiteResult run_solver_oracle_suite(int instances, std::uint64_t seed);

struct SmoothSuiteResult {
    int instances = 0;
    double max_objective_gap = 0.0;  // original vs reparametrized form at the fit
    double seconds = 0.0;
};
SmoothSuiteResult run_smooth_suite(int instances, std::uint64_t seed);

struct Prop1SuiteResult {
    int instances = 0;
    double max_gap = 0.0;            // |numeric min - dense grid min|, dim 1
    double single_subject_value = 0.0;  // must be exactly 1
    double seconds = 0.0;
};
Prop1SuiteResult run_prop1_suite(int instances, std::uint64_t seed);

// ---- Monte-Carlo experiments -------------------------------------------

enum class PenaltyVariant { group_lasso, block_linf, multitask_l1l2, elastic_smooth };

std::string variant_name(PenaltyVariant variant);
PenaltyVariant variant_from_name(const std::string& name);

struct RateConfig {
    std::vector<int> n_grid = {200, 400, 800, 1600};
    int p = 50;
    int d = 4;
    int s = 2;
    int replicates = 50;
    PenaltyVariant variant = PenaltyVariant::group_lasso;
    double A = 0.0003;         // constant of the tuning rule
    double signal = 1.0;       // block norm of each supported group
    double censor_rate = 0.25;
    std::uint64_t seed = 1;
    double fit_tol = 1e-8;
    int max_iters = 4000;
};

struct RatePoint {
    int n = 0;
    double mean_err = 0.0;
    double se = 0.0;
    double lambda = 0.0;
    int dropped = 0;  // non-converged replicates
};

struct RateTable {
    std::vector<RatePoint> points;
    double slope = 0.0;  // least-squares slope of log error vs log n
    bool strictly_decreasing = false;
};

RateTable rate_experiment(const RateConfig& config);
void write_rate_csv(const RateTable& table, const std::string& path,
                    const std::string& meta_comment = "");

struct NullModelConfig {
    int n = 400;
    int p = 50;
    int d = 4;
    int replicates = 100;
    double A = 0.05;
    double censor_rate = 0.25;
    std::uint64_t seed = 1;
};

struct NullModelResult {
    int replicates = 0;
    int all_zero = 0;
    double fraction_zero = 0.0;
};

NullModelResult null_model_experiment(const NullModelConfig& config);

struct ConcentrationConfig {
    std::vector<int> n_grid = {100, 1000, 10000};
    int replicates = 100;
    int p = 1;
    int d = 2;
    int reference_size = 1000000;
    double censor_rate = 0.2;
    std::uint64_t seed = 1;
    Eigen::VectorXd beta_star;  // defaults to zero
};

struct ConcentrationSummary {
    std::vector<int> n_grid;
    std::vector<double> median_sup_dev;
    bool strictly_decreasing = false;
};

ConcentrationSummary concentration_probe(const ConcentrationConfig& config);

}  // namespace groupcox::experiments
