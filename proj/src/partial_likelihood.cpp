#include "groupcox/partial_likelihood.hpp"

#include <cmath>
#include <stdexcept>

namespace groupcox {

namespace {

// Streaming log-sum-exp state over a growing risk set: keeps sums of
// exp(f - shift) with the shift tracking the running maximum, so no risk set
// ever underflows to zero regardless of the size of f.
struct ShiftedSums {
    double shift = -std::numeric_limits<double>::infinity();
    double sum = 0.0;

    void add(double f) {
        if (f > shift) {
            double factor = std::isfinite(shift) ? std::exp(shift - f) : 0.0;
            sum = sum * factor + 1.0;
            shift = f;
        } else {
            sum += std::exp(f - shift);
        }
    }
    double log_mean(int n) const { return shift + std::log(sum / n); }
};

}  // namespace

PartialLikelihood::PartialLikelihood(const DesignExpansion& design, const SurvivalDataset& ds)
    : design_(&design), ds_(&ds) {
    if (design.matrix.rows() != ds.n())
        throw std::invalid_argument("design rows do not match dataset size");
}

double PartialLikelihood::value(const Eigen::VectorXd& b) const {
    Eigen::VectorXd f = design_->matrix * b;
    const auto& order = ds_->order_desc();
    const int nq = ds_->num_failure_times();
    const int n = ds_->n();
    double acc = 0.0;
    ShiftedSums s;
    int covered = 0;
    for (int q = nq - 1; q >= 0; --q) {
        int prefix = ds_->risk_prefix(q);
        for (; covered < prefix; ++covered) s.add(f[order[covered]]);
        double log_s0 = s.log_mean(n);
        for (int i : ds_->event_subjects(q)) acc += f[i] - log_s0;
    }
    return acc / n;
}

void PartialLikelihood::value_and_gradient(const Eigen::VectorXd& b, double& value,
                                           Eigen::VectorXd& grad) const {
    Eigen::VectorXd f = design_->matrix * b;
    const auto& order = ds_->order_desc();
    const int nq = ds_->num_failure_times();
    const int n = ds_->n();
    const int pd = dim();

    grad = Eigen::VectorXd::Zero(pd);
    Eigen::VectorXd sum_psi_e = Eigen::VectorXd::Zero(pd);
    double acc = 0.0;
    ShiftedSums s;
    int covered = 0;
    for (int q = nq - 1; q >= 0; --q) {
        int prefix = ds_->risk_prefix(q);
        for (; covered < prefix; ++covered) {
            int i = order[covered];
            if (f[i] > s.shift) {
                double factor = std::isfinite(s.shift) ? std::exp(s.shift - f[i]) : 0.0;
                sum_psi_e *= factor;
                s.sum *= factor;
                s.sum += 1.0;
                s.shift = f[i];
                sum_psi_e += design_->matrix.row(i).transpose();
            } else {
                double e = std::exp(f[i] - s.shift);
                s.sum += e;
                sum_psi_e += e * design_->matrix.row(i).transpose();
            }
        }
        double log_s0 = s.log_mean(n);
        int m = ds_->event_multiplicity(q);
        for (int i : ds_->event_subjects(q)) {
            acc += f[i] - log_s0;
            grad += design_->matrix.row(i).transpose();
        }
        grad -= (double(m) / s.sum) * sum_psi_e;
    }
    value = acc / n;
    grad /= n;
}

Eigen::VectorXd PartialLikelihood::gradient(const Eigen::VectorXd& b) const {
    double v;
    Eigen::VectorXd g;
    value_and_gradient(b, v, g);
    return g;
}

Eigen::MatrixXd PartialLikelihood::negative_hessian(const Eigen::VectorXd& b) const {
    Eigen::VectorXd f = design_->matrix * b;
    const auto& order = ds_->order_desc();
    const int nq = ds_->num_failure_times();
    const int n = ds_->n();
    const int pd = dim();

    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(pd, pd);
    Eigen::MatrixXd sum_psi2_e = Eigen::MatrixXd::Zero(pd, pd);
    Eigen::VectorXd sum_psi_e = Eigen::VectorXd::Zero(pd);
    ShiftedSums s;
    int covered = 0;
    for (int q = nq - 1; q >= 0; --q) {
        int prefix = ds_->risk_prefix(q);
        for (; covered < prefix; ++covered) {
            int i = order[covered];
            Eigen::VectorXd psi = design_->matrix.row(i).transpose();
            double e;
            if (f[i] > s.shift) {
                double factor = std::isfinite(s.shift) ? std::exp(s.shift - f[i]) : 0.0;
                sum_psi_e *= factor;
                sum_psi2_e *= factor;
                s.sum *= factor;
                s.shift = f[i];
                e = 1.0;
            } else {
                e = std::exp(f[i] - s.shift);
            }
            s.sum += e;
            sum_psi_e += e * psi;
            sum_psi2_e.selfadjointView<Eigen::Lower>().rankUpdate(psi, e);
        }
        Eigen::VectorXd en = sum_psi_e / s.sum;
        int m = ds_->event_multiplicity(q);
        h += (double(m) / s.sum) * sum_psi2_e;
        h.selfadjointView<Eigen::Lower>().rankUpdate(en, -double(m));
    }
    h = h.selfadjointView<Eigen::Lower>();
    return h / n;
}

RiskMoments PartialLikelihood::risk_moments(const Eigen::VectorXd& b, double t) const {
    const int n = ds_->n();
    const int pd = dim();
    Eigen::VectorXd f = design_->matrix * b;

    double shift = -std::numeric_limits<double>::infinity();
    int at_risk = 0;
    for (int i = 0; i < n; ++i) {
        if (!ds_->at_risk(i, t)) continue;
        ++at_risk;
        shift = std::max(shift, f[i]);
    }
    if (at_risk == 0) throw std::invalid_argument("risk_moments: empty risk set at t");

    RiskMoments m;
    m.s1 = Eigen::VectorXd::Zero(pd);
    m.s2 = Eigen::MatrixXd::Zero(pd, pd);
    double sum_e = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!ds_->at_risk(i, t)) continue;
        double e = std::exp(f[i] - shift);
        sum_e += e;
        Eigen::VectorXd psi = design_->matrix.row(i).transpose();
        m.s1 += e * psi;
        m.s2.selfadjointView<Eigen::Lower>().rankUpdate(psi, e);
    }
    m.s2 = m.s2.selfadjointView<Eigen::Lower>();

    // shifted sums: S_l = exp(shift) * sum/n; the shift cancels in En, Vn
    m.en = m.s1 / sum_e;
    m.vn = m.s2 / sum_e - m.en * m.en.transpose();
    double scale = std::exp(shift) / n;
    m.s0 = sum_e * scale;
    m.s1 *= scale;
    m.s2 *= scale;
    return m;
}

double PartialLikelihood::log_s0(const Eigen::VectorXd& b, double t) const {
    const int n = ds_->n();
    Eigen::VectorXd f = design_->matrix * b;
    double shift = -std::numeric_limits<double>::infinity();
    int at_risk = 0;
    for (int i = 0; i < n; ++i) {
        if (!ds_->at_risk(i, t)) continue;
        ++at_risk;
        shift = std::max(shift, f[i]);
    }
    if (at_risk == 0) throw std::invalid_argument("log_s0: empty risk set at t");
    double sum_e = 0.0;
    for (int i = 0; i < n; ++i)
        if (ds_->at_risk(i, t)) sum_e += std::exp(f[i] - shift);
    return shift + std::log(sum_e / n);
}

Eigen::MatrixXd PartialLikelihood::en_at_failure_times(const Eigen::VectorXd& b) const {
    const int nq = ds_->num_failure_times();
    const int pd = dim();
    Eigen::VectorXd f = design_->matrix * b;
    const auto& order = ds_->order_desc();

    Eigen::MatrixXd en(nq, pd);
    Eigen::VectorXd sum_psi_e = Eigen::VectorXd::Zero(pd);
    ShiftedSums s;
    int covered = 0;
    for (int q = nq - 1; q >= 0; --q) {
        int prefix = ds_->risk_prefix(q);
        for (; covered < prefix; ++covered) {
            int i = order[covered];
            if (f[i] > s.shift) {
                double factor = std::isfinite(s.shift) ? std::exp(s.shift - f[i]) : 0.0;
                sum_psi_e *= factor;
                s.sum *= factor;
                s.sum += 1.0;
                s.shift = f[i];
                sum_psi_e += design_->matrix.row(i).transpose();
            } else {
                double e = std::exp(f[i] - s.shift);
                s.sum += e;
                sum_psi_e += e * design_->matrix.row(i).transpose();
            }
        }
        en.row(q) = sum_psi_e.transpose() / s.sum;
    }
    return en;
}

WeightVector PartialLikelihood::observation_weights(const Eigen::VectorXd& b) const {
    const int nq = ds_->num_failure_times();
    if (nq == 0) throw std::invalid_argument("observation_weights: dataset has no events");
    const int n = ds_->n();
    Eigen::VectorXd f = design_->matrix * b;
    const auto& order = ds_->order_desc();

    // q_max(i) = largest q with t_q <= Z_i, or -1 when never at risk
    auto q_max = [&](int i) {
        double z = ds_->record(i).time;
        int lo = 0, hi = nq;
        while (lo < hi) {
            int mid = (lo + hi) / 2;
            if (ds_->failure_time(mid) <= z)
                lo = mid + 1;
            else
                hi = mid;
        }
        return lo - 1;
    };

    WeightVector out;
    out.w = Eigen::VectorXd::Zero(n);
    out.min_at_risk = std::numeric_limits<double>::infinity();
    out.max_at_risk = 0.0;

    double shift = f.maxCoeff();
    Eigen::VectorXd e = (f.array() - shift).exp();
    Eigen::VectorXd denom(nq);
    {
        double sum_e = 0.0;
        int covered = 0;
        for (int q = nq - 1; q >= 0; --q) {
            int prefix = ds_->risk_prefix(q);
            for (; covered < prefix; ++covered) sum_e += e[order[covered]];
            denom[q] = sum_e;
        }
    }

    if (denom.minCoeff() > 0.0) {
        // common-shift fast path: w_i = e_i * sum_{q <= q_max} 1/denom_q
        Eigen::VectorXd inv_prefix(nq);
        double acc = 0.0;
        for (int q = 0; q < nq; ++q) {
            acc += 1.0 / denom[q];
            inv_prefix[q] = acc;
        }
        for (int i = 0; i < n; ++i) {
            int qm = q_max(i);
            if (qm < 0) continue;
            double w = e[i] * inv_prefix[qm];
            out.w[i] = w;
            ++out.n_at_risk;
            out.min_at_risk = std::min(out.min_at_risk, w);
            out.max_at_risk = std::max(out.max_at_risk, w);
        }
        return out;
    }

    // extreme linear predictors: per-risk-set shifted denominators keep every
    // softmax term well defined (each is exp(f_i - log D_q) <= 1)
    Eigen::VectorXd log_denom(nq);
    {
        ShiftedSums s;
        int covered = 0;
        for (int q = nq - 1; q >= 0; --q) {
            int prefix = ds_->risk_prefix(q);
            for (; covered < prefix; ++covered) s.add(f[order[covered]]);
            log_denom[q] = s.shift + std::log(s.sum);
        }
    }
    for (int i = 0; i < n; ++i) {
        int qm = q_max(i);
        if (qm < 0) continue;
        double w = 0.0;
        for (int q = 0; q <= qm; ++q) w += std::exp(f[i] - log_denom[q]);
        out.w[i] = w;
        ++out.n_at_risk;
        out.min_at_risk = std::min(out.min_at_risk, w);
        out.max_at_risk = std::max(out.max_at_risk, w);
    }
    return out;
}

Eigen::VectorXd PartialLikelihood::weight_process(const Eigen::VectorXd& anchor, double t) const {
    const int n = ds_->n();
    Eigen::VectorXd f = design_->matrix * anchor;
    double shift = -std::numeric_limits<double>::infinity();
    int at_risk = 0;
    for (int i = 0; i < n; ++i) {
        if (!ds_->at_risk(i, t)) continue;
        ++at_risk;
        shift = std::max(shift, f[i]);
    }
    if (at_risk == 0) throw std::invalid_argument("weight_process: empty risk set at t");
    double sum_e = 0.0;
    for (int i = 0; i < n; ++i)
        if (ds_->at_risk(i, t)) sum_e += std::exp(f[i] - shift);
    // w_i = exp{f_i} / S0 = exp(f_i - shift) * n / sum_e
    Eigen::VectorXd out(n);
    for (int i = 0; i < n; ++i) out[i] = std::exp(f[i] - shift) * (double(n) / sum_e);
    return out;
}

EmpiricalNorm PartialLikelihood::empirical_norm(const Eigen::VectorXd& f_values,
                                                const Eigen::VectorXd& anchor) const {
    const int nq = ds_->num_failure_times();
    const int n = ds_->n();
    if (f_values.size() != n)
        throw std::invalid_argument("empirical_norm: f_values must have one entry per subject");

    Eigen::VectorXd fa = design_->matrix * anchor;
    const auto& order = ds_->order_desc();
    EmpiricalNorm out;
    out.time_means.resize(nq);

    double shift = -std::numeric_limits<double>::infinity();
    double sum_e = 0.0, sum_ef = 0.0, sum_ef2 = 0.0;
    int covered = 0;
    double acc_centered = 0.0, acc_raw2 = 0.0, acc_mean2 = 0.0;
    for (int q = nq - 1; q >= 0; --q) {
        int prefix = ds_->risk_prefix(q);
        for (; covered < prefix; ++covered) {
            int i = order[covered];
            double e;
            if (fa[i] > shift) {
                double factor = std::isfinite(shift) ? std::exp(shift - fa[i]) : 0.0;
                sum_e *= factor;
                sum_ef *= factor;
                sum_ef2 *= factor;
                shift = fa[i];
                e = 1.0;
            } else {
                e = std::exp(fa[i] - shift);
            }
            sum_e += e;
            sum_ef += e * f_values[i];
            sum_ef2 += e * f_values[i] * f_values[i];
        }
        double mass = double(ds_->event_multiplicity(q)) / n;
        double mean = sum_ef / sum_e;
        out.time_means[q] = mean;

        // centered pass for the reported value
        double var = 0.0;
        for (int k = 0; k < prefix; ++k) {
            int i = order[k];
            double dev = f_values[i] - mean;
            var += std::exp(fa[i] - shift) * dev * dev;
        }
        var /= sum_e;
        acc_centered += mass * var;

        // raw-moment route: E[f^2] and (E f)^2 accumulated separately
        acc_raw2 += mass * (sum_ef2 / sum_e);
        acc_mean2 += mass * mean * mean;
    }
    out.sq = acc_centered;
    out.sq_moments = acc_raw2 - acc_mean2;
    return out;
}

}  // namespace groupcox
