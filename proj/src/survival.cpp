#include "groupcox/survival.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace groupcox {

namespace {

void validate_records(const std::vector<SurvivalRecord>& records, const Interval& domain) {
    std::size_t p = records.empty() ? 0 : records.front().covariates.size();
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (!(r.time >= 0.0) || !std::isfinite(r.time))
            throw std::invalid_argument("record " + std::to_string(i + 1) +
                                        ": observed time must be a nonnegative number");
        if (r.status != 0 && r.status != 1)
            throw std::invalid_argument("record " + std::to_string(i + 1) +
                                        ": status must be 0 or 1");
        if (r.covariates.size() != p)
            throw std::invalid_argument("record " + std::to_string(i + 1) +
                                        ": inconsistent covariate count");
        for (std::size_t j = 0; j < r.covariates.size(); ++j) {
            double x = r.covariates[j];
            if (!std::isfinite(x) || x < domain.lo || x > domain.hi)
                throw std::invalid_argument("record " + std::to_string(i + 1) + ", covariate x" +
                                            std::to_string(j + 1) + ": value outside domain [" +
                                            std::to_string(domain.lo) + ", " +
                                            std::to_string(domain.hi) + "]");
        }
    }
}

}  // namespace

RiskSetStructure build_risk_sets(const std::vector<SurvivalRecord>& records, double tau) {
    RiskSetStructure out;
    std::map<double, std::vector<int>> events;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.status == 1 && r.time <= tau) events[r.time].push_back(static_cast<int>(i));
    }
    for (auto& [t, subjects] : events) {
        out.failure_times.push_back(t);
        if (subjects.size() > 1) out.tie_flag = true;
        out.event_subjects.push_back(std::move(subjects));
        std::vector<int> at_risk;
        for (std::size_t i = 0; i < records.size(); ++i)
            if (records[i].time >= t) at_risk.push_back(static_cast<int>(i));
        out.risk_sets.push_back(std::move(at_risk));
    }
    return out;
}

SurvivalDataset::SurvivalDataset(std::vector<SurvivalRecord> records, double study_end,
                                 Interval domain)
    : records_(std::move(records)), study_end_(study_end), domain_(domain) {
    validate_records(records_, domain_);
    p_ = records_.empty() ? 0 : static_cast<int>(records_.front().covariates.size());
    if (!(study_end_ >= 0.0)) throw std::invalid_argument("study_end must be nonnegative");

    for (const auto& r : records_)
        if (r.status == 1) ++num_events_;

    // failure times and event lists; explicit risk sets stay implicit via the
    // descending order + prefix representation
    {
        std::map<double, std::vector<int>> events;
        for (std::size_t i = 0; i < records_.size(); ++i) {
            const auto& r = records_[i];
            if (r.status == 1 && r.time <= study_end_)
                events[r.time].push_back(static_cast<int>(i));
        }
        for (auto& [t, subjects] : events) {
            failure_times_.push_back(t);
            if (subjects.size() > 1) tie_flag_ = true;
            event_subjects_.push_back(std::move(subjects));
        }
    }

    order_desc_.resize(records_.size());
    std::iota(order_desc_.begin(), order_desc_.end(), 0);
    std::stable_sort(order_desc_.begin(), order_desc_.end(),
                     [&](int a, int b) { return records_[a].time > records_[b].time; });

    risk_prefix_.resize(failure_times_.size());
    for (std::size_t q = 0; q < failure_times_.size(); ++q) {
        double t = failure_times_[q];
        // number of subjects with Z >= t = prefix length in descending order
        int lo = 0, hi = static_cast<int>(order_desc_.size());
        while (lo < hi) {
            int mid = (lo + hi) / 2;
            if (records_[order_desc_[mid]].time >= t)
                lo = mid + 1;
            else
                hi = mid;
        }
        risk_prefix_[q] = lo;
    }
}

std::vector<int> SurvivalDataset::risk_set(int q) const {
    std::vector<int> out(order_desc_.begin(), order_desc_.begin() + risk_prefix_[q]);
    std::sort(out.begin(), out.end());
    return out;
}

int SurvivalDataset::risk_count_at(double t) const {
    int count = 0;
    for (const auto& r : records_)
        if (r.time >= t) ++count;
    return count;
}

BaselineHazard BaselineHazard::constant(double rate) {
    if (!(rate > 0.0)) throw std::invalid_argument("constant baseline: rate must be positive");
    BaselineHazard h;
    h.kind_ = Kind::constant;
    h.rate_ = rate;
    return h;
}

BaselineHazard BaselineHazard::weibull(double shape, double scale) {
    if (!(shape > 0.0) || !(scale > 0.0))
        throw std::invalid_argument("weibull baseline: shape and scale must be positive");
    BaselineHazard h;
    h.kind_ = Kind::weibull;
    h.shape_ = shape;
    h.scale_ = scale;
    return h;
}

BaselineHazard BaselineHazard::custom(std::function<double(double)> rate, double t_max) {
    if (!rate) throw std::invalid_argument("custom baseline: rate function required");
    if (!(t_max > 0.0)) throw std::invalid_argument("custom baseline: t_max must be positive");
    BaselineHazard h;
    h.kind_ = Kind::custom;
    h.custom_rate_ = std::move(rate);
    h.t_max_ = t_max;
    return h;
}

double BaselineHazard::value(double t) const {
    switch (kind_) {
        case Kind::constant:
            return rate_;
        case Kind::weibull:
            return shape_ * scale_ * std::pow(scale_ * t, shape_ - 1.0);
        case Kind::custom:
            return custom_rate_(t);
    }
    return 0.0;
}

namespace {
// Adaptive Simpson quadrature.
double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm,
               double fb, double whole, double eps, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * eps)
        return left + right + (left + right - whole) / 15.0;
    return simpson(f, a, m, fa, flm, fm, left, eps * 0.5, depth - 1) +
           simpson(f, m, b, fm, frm, fb, right, eps * 0.5, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double eps) {
    if (b <= a) return 0.0;
    double m = 0.5 * (a + b);
    double fa = f(a), fm = f(m), fb = f(b);
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson(f, a, b, fa, fm, fb, whole, eps, 48);
}
}  // namespace

double BaselineHazard::cumulative(double t) const {
    if (t <= 0.0) return 0.0;
    switch (kind_) {
        case Kind::constant:
            return rate_ * t;
        case Kind::weibull:
            return std::pow(scale_ * t, shape_);
        case Kind::custom:
            return integrate(custom_rate_, 0.0, t, 1e-12);
    }
    return 0.0;
}

double BaselineHazard::inverse_cumulative(double u) const {
    if (u < 0.0) throw std::invalid_argument("inverse_cumulative: argument must be nonnegative");
    if (u == 0.0) return 0.0;
    switch (kind_) {
        case Kind::constant:
            return u / rate_;
        case Kind::weibull:
            return std::pow(u, 1.0 / shape_) / scale_;
        case Kind::custom: {
            // Bisection to 1e-10 relative; failures indicate a non-invertible
            // cumulative on [0, t_max].
            double hi = t_max_;
            double chi = cumulative(hi);
            if (chi < u) return std::numeric_limits<double>::infinity();
            double lo = 0.0;
            for (int it = 0; it < 200; ++it) {
                double mid = 0.5 * (lo + hi);
                if (cumulative(mid) < u)
                    lo = mid;
                else
                    hi = mid;
                if (hi - lo <= 1e-10 * std::max(1.0, hi)) break;
            }
            if (!(cumulative(hi) >= u && cumulative(lo) <= u + 1e-9 * std::max(1.0, u)))
                throw std::runtime_error("baseline cumulative is not invertible on [0, t_max]");
            return 0.5 * (lo + hi);
        }
    }
    return 0.0;
}

double CensoringLaw::draw(Rng& rng) const {
    switch (kind) {
        case Kind::none:
            return std::numeric_limits<double>::infinity();
        case Kind::exponential:
            return rng.exponential(param);
        case Kind::uniform:
            return rng.uniform(0.0, param);
    }
    return std::numeric_limits<double>::infinity();
}

SurvivalDataset simulate_cox_sample(const SimulationConfig& config) {
    if (config.n < 2) throw std::invalid_argument("simulation: n must be at least 2");
    if (config.p < 1) throw std::invalid_argument("simulation: p must be at least 1");
    Rng rng(config.seed);

    std::vector<SurvivalRecord> records;
    records.reserve(config.n);
    Eigen::VectorXd x(config.p);
    double max_event_time = 0.0;
    for (int i = 0; i < config.n; ++i) {
        if (config.covariate_sampler) {
            config.covariate_sampler(rng, x);
        } else {
            for (int j = 0; j < config.p; ++j)
                x[j] = rng.uniform(config.domain.lo, config.domain.hi);
        }
        double g = config.model.risk ? config.model.risk(x) : 0.0;
        double e = rng.exponential(1.0);
        double t_event = config.model.baseline.inverse_cumulative(e * std::exp(-g));
        double d = config.model.censoring.draw(rng);

        SurvivalRecord rec;
        rec.covariates.assign(x.data(), x.data() + config.p);
        rec.time = std::min(t_event, d);
        rec.status = (t_event <= d) ? 1 : 0;
        if (rec.time > config.tau) {
            rec.time = config.tau;
            rec.status = 0;
        }
        if (rec.status == 1) max_event_time = std::max(max_event_time, rec.time);
        records.push_back(std::move(rec));
    }
    double tau = std::isfinite(config.tau) ? config.tau : max_event_time;
    return SurvivalDataset(std::move(records), tau, config.domain);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_number(const std::string& cell, int row, const std::string& col) {
    try {
        std::size_t pos = 0;
        double v = std::stod(cell, &pos);
        while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
        if (pos != cell.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("row " + std::to_string(row) + ", column " + col +
                                    ": non-numeric cell '" + cell + "'");
    }
}

}  // namespace

SurvivalDataset load_dataset(const std::string& path, const LoadOptions& options) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open dataset file: " + path);

    std::string header;
    if (!std::getline(in, header)) throw std::invalid_argument("empty dataset file: " + path);
    if (!header.empty() && header.back() == '\r') header.pop_back();

    auto cols = split_csv_line(header);
    if (cols.size() < 2 || cols[0] != "time" || cols[1] != "status")
        throw std::invalid_argument("header must start with time,status");
    int p = static_cast<int>(cols.size()) - 2;
    for (int j = 0; j < p; ++j) {
        if (cols[2 + j] != "x" + std::to_string(j + 1))
            throw std::invalid_argument("unexpected column '" + cols[2 + j] +
                                        "', expected x" + std::to_string(j + 1));
    }

    std::vector<SurvivalRecord> records;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        auto cells = split_csv_line(line);
        if (cells.size() != cols.size())
            throw std::invalid_argument("row " + std::to_string(row) + ": expected " +
                                        std::to_string(cols.size()) + " cells, got " +
                                        std::to_string(cells.size()));
        SurvivalRecord rec;
        rec.time = parse_number(cells[0], row, "time");
        double status = parse_number(cells[1], row, "status");
        if (status != 0.0 && status != 1.0)
            throw std::invalid_argument("row " + std::to_string(row) +
                                        ": status must be 0 or 1");
        rec.status = static_cast<int>(status);
        if (rec.time < 0.0)
            throw std::invalid_argument("row " + std::to_string(row) + ": negative time");
        rec.covariates.resize(p);
        for (int j = 0; j < p; ++j)
            rec.covariates[j] = parse_number(cells[2 + j], row, "x" + std::to_string(j + 1));
        records.push_back(std::move(rec));
    }

    double tau = 0.0;
    if (options.tau) {
        tau = *options.tau;
    } else {
        for (const auto& r : records)
            if (r.status == 1) tau = std::max(tau, r.time);
    }
    return SurvivalDataset(std::move(records), tau, options.domain);
}

void save_dataset(const SurvivalDataset& ds, const std::string& csv_path,
                  const std::string& extra_sidecar_json) {
    {
        std::string tmp = csv_path + ".tmp";
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write dataset file: " + csv_path);
        out << "time,status";
        for (int j = 0; j < ds.p(); ++j) out << ",x" << (j + 1);
        out << "\n";
        out.precision(17);
        for (const auto& r : ds.records()) {
            out << r.time << "," << r.status;
            for (double x : r.covariates) out << "," << x;
            out << "\n";
        }
        out.close();
        std::filesystem::rename(tmp, csv_path);
    }
    nlohmann::json sidecar{{"n", ds.n()},
                           {"N", ds.num_failure_times()},
                           {"tau", ds.study_end()},
                           {"tie_flag", ds.tie_flag()}};
    if (!extra_sidecar_json.empty()) {
        auto extra = nlohmann::json::parse(extra_sidecar_json);
        for (auto& [k, v] : extra.items()) sidecar[k] = v;
    }
    std::string json_path = csv_path + ".json";
    std::string tmp = json_path + ".tmp";
    std::ofstream out(tmp);
    out << sidecar.dump(2) << "\n";
    out.close();
    std::filesystem::rename(tmp, json_path);
}

DatasetSummary summarize_dataset(const SurvivalDataset& ds) {
    if (ds.n() == 0) throw std::invalid_argument("summarize_dataset: no records");
    DatasetSummary s;
    s.n = ds.n();
    s.num_failure_times = ds.num_failure_times();
    s.num_events = ds.num_events();
    s.censoring_rate = 1.0 - static_cast<double>(s.num_events) / s.n;
    s.min_time = std::numeric_limits<double>::infinity();
    s.max_time = -std::numeric_limits<double>::infinity();
    s.covariate_min.assign(ds.p(), std::numeric_limits<double>::infinity());
    s.covariate_max.assign(ds.p(), -std::numeric_limits<double>::infinity());
    for (const auto& r : ds.records()) {
        s.min_time = std::min(s.min_time, r.time);
        s.max_time = std::max(s.max_time, r.time);
        for (int j = 0; j < ds.p(); ++j) {
            s.covariate_min[j] = std::min(s.covariate_min[j], r.covariates[j]);
            s.covariate_max[j] = std::max(s.covariate_max[j], r.covariates[j]);
        }
    }
    return s;
}

}  // namespace groupcox
