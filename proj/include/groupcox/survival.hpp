#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "groupcox/rng.hpp"

namespace groupcox {

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

// One censored observation: Z_i = min(T_i, D_i), delta_i, X_i.
struct SurvivalRecord {
    double time = 0.0;
    int status = 0;  // 1 = event observed
    std::vector<double> covariates;
};

struct DatasetSummary {
    int n = 0;
    int num_failure_times = 0;  // distinct event times <= tau
    int num_events = 0;         // records with status = 1
    double censoring_rate = 0.0;
    double min_time = 0.0;
    double max_time = 0.0;
    std::vector<double> covariate_min;
    std::vector<double> covariate_max;
};

// Censored sample together with the ordered failure times t_1 < ... < t_N and
// the nested risk sets R_q = {i : Z_i >= t_q}. Tied event times are collapsed
// onto one failure time (shared risk set, summed jumps) and flagged.
//
// Indexing is 0-based throughout the library; CLI reports use 1-based indices
// and say so.
class SurvivalDataset {
public:
    SurvivalDataset(std::vector<SurvivalRecord> records, double study_end,
                    Interval domain = {0.0, 1.0});

    int n() const { return static_cast<int>(records_.size()); }
    int p() const { return p_; }
    const SurvivalRecord& record(int i) const { return records_[i]; }
    const std::vector<SurvivalRecord>& records() const { return records_; }
    double study_end() const { return study_end_; }
    Interval domain() const { return domain_; }

    // Failure-time structure.
    int num_failure_times() const { return static_cast<int>(failure_times_.size()); }
    double failure_time(int q) const { return failure_times_[q]; }
    const std::vector<double>& failure_times() const { return failure_times_; }
    int event_multiplicity(int q) const { return static_cast<int>(event_subjects_[q].size()); }
    const std::vector<int>& event_subjects(int q) const { return event_subjects_[q]; }

    // Subjects ordered by decreasing Z; R_q is the first risk_prefix(q)
    // entries of order_desc().
    const std::vector<int>& order_desc() const { return order_desc_; }
    int risk_prefix(int q) const { return risk_prefix_[q]; }
    int risk_size(int q) const { return risk_prefix_[q]; }
    std::vector<int> risk_set(int q) const;
    bool at_risk(int i, double t) const { return records_[i].time >= t; }
    int risk_count_at(double t) const;

    bool tie_flag() const { return tie_flag_; }
    bool zero_event_warning() const { return num_failure_times() == 0; }
    int num_events() const { return num_events_; }

private:
    std::vector<SurvivalRecord> records_;
    double study_end_ = 0.0;
    Interval domain_;
    int p_ = 0;
    int num_events_ = 0;
    bool tie_flag_ = false;
    std::vector<double> failure_times_;
    std::vector<std::vector<int>> event_subjects_;
    std::vector<int> order_desc_;
    std::vector<int> risk_prefix_;
};

// Distinct event times <= tau and their risk sets, exposed separately for
// direct testing; SurvivalDataset calls this internally.
struct RiskSetStructure {
    std::vector<double> failure_times;
    std::vector<std::vector<int>> event_subjects;
    std::vector<std::vector<int>> risk_sets;
    bool tie_flag = false;
};
RiskSetStructure build_risk_sets(const std::vector<SurvivalRecord>& records, double tau);

// Baseline hazard with cumulative and inverse cumulative. Closed forms for
// constant and Weibull; a custom rate function falls back to adaptive
// quadrature plus bisection (1e-10 relative).
class BaselineHazard {
public:
    static BaselineHazard constant(double rate);
    static BaselineHazard weibull(double shape, double scale);
    static BaselineHazard custom(std::function<double(double)> rate, double t_max);

    double value(double t) const;
    double cumulative(double t) const;
    double inverse_cumulative(double u) const;

private:
    enum class Kind { constant, weibull, custom };
    Kind kind_ = Kind::constant;
    double rate_ = 1.0;
    double shape_ = 1.0;
    double scale_ = 1.0;
    std::function<double(double)> custom_rate_;
    double t_max_ = 0.0;
};

struct CensoringLaw {
    enum class Kind { none, exponential, uniform };
    Kind kind = Kind::none;
    double param = 0.0;

    static CensoringLaw none() { return {Kind::none, 0.0}; }
    static CensoringLaw exponential(double rate) { return {Kind::exponential, rate}; }
    static CensoringLaw uniform(double max) { return {Kind::uniform, max}; }
    double draw(Rng& rng) const;
};

struct TrueModel {
    BaselineHazard baseline = BaselineHazard::constant(1.0);
    std::function<double(const Eigen::VectorXd&)> risk;  // g(x); empty means g == 0
    CensoringLaw censoring = CensoringLaw::none();
};

struct SimulationConfig {
    int n = 0;
    int p = 1;
    Interval domain = {0.0, 1.0};
    std::uint64_t seed = 0;
    TrueModel model;
    // Administrative censoring horizon; records beyond it are truncated to
    // (tau, status 0) after random censoring. Infinity disables it.
    double tau = std::numeric_limits<double>::infinity();
    // Optional custom covariate sampler; default is iid uniform on domain^p.
    std::function<void(Rng&, Eigen::VectorXd&)> covariate_sampler;
};

SurvivalDataset simulate_cox_sample(const SimulationConfig& config);

struct LoadOptions {
    Interval domain = {0.0, 1.0};
    std::optional<double> tau;  // default: max event time
};

// CSV with header time,status,x1,...,xp (LF or CRLF). Covariates outside the
// declared domain are an error, not clipped.
SurvivalDataset load_dataset(const std::string& path, const LoadOptions& options = {});

// Writes the CSV back plus a JSON sidecar {n, N, tau, tie_flag} at
// path + ".json"; extra_sidecar entries (already serialized JSON object
// body) are merged in by the CLI.
void save_dataset(const SurvivalDataset& ds, const std::string& csv_path,
                  const std::string& extra_sidecar_json = "");

DatasetSummary summarize_dataset(const SurvivalDataset& ds);

}  // namespace groupcox
