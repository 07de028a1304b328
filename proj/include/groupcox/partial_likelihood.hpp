#pragma once

#include <Eigen/Core>

#include "groupcox/basis.hpp"
#include "groupcox/survival.hpp"

namespace groupcox {

// Risk-set moments at (b, t): S0 = S_n^(0), S1, S2 are the (1/n)-scaled
// at-risk sums, En = S1/S0 and Vn = S2/S0 - En En^T.
struct RiskMoments {
    double s0 = 0.0;
    Eigen::VectorXd s1;
    Eigen::MatrixXd s2;
    Eigen::VectorXd en;
    Eigen::MatrixXd vn;
};

// Per-subject sums of conditional event probabilities across failure times,
// w_i(b) = sum_q exp{b' Psi(X_i)} 1{i in R_q} / sum_{l in R_q} exp{b' Psi(X_l)}.
struct WeightVector {
    Eigen::VectorXd w;
    double min_at_risk = 0.0;  // over subjects belonging to at least one risk set
    double max_at_risk = 0.0;
    int n_at_risk = 0;
};

struct EmpiricalNorm {
    double sq = 0.0;          // centered per-failure-time accumulation
    double sq_moments = 0.0;  // raw first/second moment route, retained as cross-check
    Eigen::VectorXd time_means;  // weighted mean of f at each failure time
    double value() const { return std::sqrt(std::max(0.0, sq)); }
};

// Log partial likelihood of a dictionary-expanded Cox model, with gradient,
// Hessian, observation weights and the anchored empirical norm. All
// exponentials are max-shifted, so overflow cannot occur for finite inputs.
// Instances are immutable after construction and safe for concurrent use.
class PartialLikelihood {
public:
    PartialLikelihood(const DesignExpansion& design, const SurvivalDataset& ds);

    int dim() const { return design_->dim(); }
    const DesignExpansion& design() const { return *design_; }
    const SurvivalDataset& dataset() const { return *ds_; }

    double value(const Eigen::VectorXd& b) const;
    Eigen::VectorXd gradient(const Eigen::VectorXd& b) const;
    void value_and_gradient(const Eigen::VectorXd& b, double& value, Eigen::VectorXd& grad) const;
    // -grad^2 L_n(b), a positive semidefinite matrix.
    Eigen::MatrixXd negative_hessian(const Eigen::VectorXd& b) const;

    RiskMoments risk_moments(const Eigen::VectorXd& b, double t) const;
    double log_s0(const Eigen::VectorXd& b, double t) const;
    // E_n(b, t_q) for every failure time, one row per q.
    Eigen::MatrixXd en_at_failure_times(const Eigen::VectorXd& b) const;

    WeightVector observation_weights(const Eigen::VectorXd& b) const;
    // w_i(b*, t) = exp{f_{b*}(X_i)} / S_n^(0)(b*, t) for every subject.
    Eigen::VectorXd weight_process(const Eigen::VectorXd& anchor, double t) const;

    // ||f||_{n,b*}^2 for per-subject values f; both algebraic routes plus the
    // per-failure-time means.
    EmpiricalNorm empirical_norm(const Eigen::VectorXd& f_values,
                                 const Eigen::VectorXd& anchor) const;

    Eigen::VectorXd linear_predictor(const Eigen::VectorXd& b) const {
        return design_->matrix * b;
    }

private:
    const DesignExpansion* design_;
    const SurvivalDataset* ds_;
};

}  // namespace groupcox
