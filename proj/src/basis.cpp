#include "groupcox/basis.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace groupcox {

std::string basis_family_name(BasisFamily family) {
    switch (family) {
        case BasisFamily::step:
            return "step";
        case BasisFamily::polynomial:
            return "polynomial";
        case BasisFamily::cubic_bspline:
            return "cubic-bspline";
    }
    return "?";
}

BasisFamily basis_family_from_name(const std::string& name) {
    if (name == "step") return BasisFamily::step;
    if (name == "polynomial") return BasisFamily::polynomial;
    if (name == "cubic-bspline" || name == "bspline") return BasisFamily::cubic_bspline;
    throw std::invalid_argument("unknown basis family: " + name);
}

namespace {

void check_domain(const DictionarySpec& spec, double x) {
    if (!(x >= spec.domain.lo && x <= spec.domain.hi))
        throw std::invalid_argument("basis evaluation outside domain: x = " + std::to_string(x));
}

// Clamped uniform knot vector for cubic splines: d + 4 knots, 4-fold end
// knots, d - 4 uniform interior knots.
std::vector<double> bspline_knots(const DictionarySpec& spec) {
    int d = spec.d;
    std::vector<double> knots(d + 4);
    for (int i = 0; i < 4; ++i) {
        knots[i] = spec.domain.lo;
        knots[d + i] = spec.domain.hi;
    }
    int interior = d - 4;
    for (int i = 1; i <= interior; ++i)
        knots[3 + i] =
            spec.domain.lo + (spec.domain.hi - spec.domain.lo) * i / double(interior + 1);
    return knots;
}

int bspline_span(const std::vector<double>& knots, double x) {
    // last span [knots[i], knots[i+1]) containing x; x at the right end maps
    // to the final nonempty span
    int n = static_cast<int>(knots.size());
    int last = n - 5;  // index of the last basis function's leading span
    if (x >= knots[n - 4]) return last;
    int lo = 3, hi = last;
    while (lo < hi) {
        int mid = (lo + hi + 1) / 2;
        if (knots[mid] <= x)
            lo = mid;
        else
            hi = mid - 1;
    }
    return lo;
}

// Cox-de Boor basis values and derivatives up to order `nders` for the four
// cubic basis functions supported on the span of x (The NURBS Book A2.3).
void bspline_ders(const std::vector<double>& knots, int span, double x, int nders,
                  double ders[3][4]) {
    constexpr int degree = 3;
    double ndu[degree + 1][degree + 1];
    double left[degree + 1], right[degree + 1];
    ndu[0][0] = 1.0;
    for (int j = 1; j <= degree; ++j) {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            ndu[j][r] = right[r + 1] + left[j - r];
            double temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    for (int j = 0; j <= degree; ++j) ders[0][j] = ndu[j][degree];
    if (nders == 0) return;

    double a[2][degree + 1];
    for (int r = 0; r <= degree; ++r) {
        int s1 = 0, s2 = 1;
        a[0][0] = 1.0;
        for (int k = 1; k <= nders; ++k) {
            double dv = 0.0;
            int rk = r - k, pk = degree - k;
            if (r >= k) {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                dv = a[s2][0] * ndu[rk][pk];
            }
            int j1 = (rk >= -1) ? 1 : -rk;
            int j2 = (r - 1 <= pk) ? k - 1 : degree - r;
            for (int j = j1; j <= j2; ++j) {
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
                dv += a[s2][j] * ndu[rk + j][pk];
            }
            if (r <= pk) {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                dv += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = dv;
            std::swap(s1, s2);
        }
    }
    double factor = degree;
    for (int k = 1; k <= nders; ++k) {
        for (int j = 0; j <= degree; ++j) ders[k][j] *= factor;
        factor *= degree - k;
    }
}

void verify_bound_on_grid(const DictionarySpec& spec) {
    constexpr int grid = 1000;
    for (int k = 0; k <= grid; ++k) {
        double x = spec.domain.lo + (spec.domain.hi - spec.domain.lo) * k / double(grid);
        Eigen::VectorXd v = evaluate_basis(spec, x);
        if (v.cwiseAbs().maxCoeff() > spec.bound * (1.0 + 1e-12))
            throw std::logic_error("dictionary bound C violated on verification grid");
    }
}

}  // namespace

DictionarySpec DictionarySpec::step(int d, Interval domain) {
    if (d < 1) throw std::invalid_argument("step dictionary: d must be >= 1");
    DictionarySpec spec{BasisFamily::step, d, domain, 1.0};
    verify_bound_on_grid(spec);
    return spec;
}

DictionarySpec DictionarySpec::polynomial(int d, Interval domain) {
    if (d < 1) throw std::invalid_argument("polynomial dictionary: d must be >= 1");
    DictionarySpec spec{BasisFamily::polynomial, d, domain, 1.0};
    double m = std::max(std::abs(domain.lo), std::abs(domain.hi));
    double c = 1.0;
    for (int k = 1; k < d; ++k) c = std::max(c, std::pow(m, k));
    spec.bound = c;
    verify_bound_on_grid(spec);
    return spec;
}

DictionarySpec DictionarySpec::cubic_bspline(int d, Interval domain) {
    if (d < 4) throw std::invalid_argument("cubic B-spline dictionary: d must be >= 4");
    DictionarySpec spec{BasisFamily::cubic_bspline, d, domain, 1.0};
    verify_bound_on_grid(spec);
    return spec;
}

Eigen::VectorXd evaluate_basis(const DictionarySpec& spec, double x) {
    check_domain(spec, x);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(spec.d);
    switch (spec.family) {
        case BasisFamily::step: {
            double h = (spec.domain.hi - spec.domain.lo) / spec.d;
            int bin = static_cast<int>((x - spec.domain.lo) / h);
            if (bin >= spec.d) bin = spec.d - 1;
            out[bin] = 1.0;
            break;
        }
        case BasisFamily::polynomial: {
            double v = 1.0;
            for (int k = 0; k < spec.d; ++k) {
                out[k] = v;
                v *= x;
            }
            break;
        }
        case BasisFamily::cubic_bspline: {
            auto knots = bspline_knots(spec);
            int span = bspline_span(knots, x);
            double ders[3][4];
            bspline_ders(knots, span, x, 0, ders);
            for (int j = 0; j <= 3; ++j) out[span - 3 + j] = ders[0][j];
            break;
        }
    }
    return out;
}

Eigen::VectorXd evaluate_basis_deriv2(const DictionarySpec& spec, double x) {
    check_domain(spec, x);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(spec.d);
    switch (spec.family) {
        case BasisFamily::step:
            throw std::invalid_argument("step dictionary is not differentiable");
        case BasisFamily::polynomial:
            for (int k = 2; k < spec.d; ++k) out[k] = k * (k - 1) * std::pow(x, k - 2);
            break;
        case BasisFamily::cubic_bspline: {
            auto knots = bspline_knots(spec);
            int span = bspline_span(knots, x);
            double ders[3][4];
            bspline_ders(knots, span, x, 2, ders);
            for (int j = 0; j <= 3; ++j) out[span - 3 + j] = ders[2][j];
            break;
        }
    }
    return out;
}

DesignExpansion expand_design(const SurvivalDataset& ds, const DictionarySpec& spec,
                              const ExpandOptions& options) {
    DesignExpansion design;
    design.p = ds.p();
    design.d = spec.d;
    design.bound = spec.bound;
    design.matrix.resize(ds.n(), ds.p() * spec.d);
    for (int i = 0; i < ds.n(); ++i) {
        for (int j = 0; j < ds.p(); ++j) {
            double x = ds.record(i).covariates[j];
            if (!(x >= spec.domain.lo && x <= spec.domain.hi))
                throw std::invalid_argument(
                    "record " + std::to_string(i + 1) + ", covariate x" + std::to_string(j + 1) +
                    ": value outside dictionary domain");
            design.matrix.row(i).segment(j * spec.d, spec.d) = evaluate_basis(spec, x);
        }
    }
    if (options.standardize) {
        design.column_scale.resize(design.dim(), 1.0);
        for (int c = 0; c < design.dim(); ++c) {
            double mean = design.matrix.col(c).mean();
            double sd = std::sqrt((design.matrix.col(c).array() - mean).square().mean());
            if (sd > 1e-12) {
                design.matrix.col(c) /= sd;
                design.column_scale[c] = sd;
            }
        }
        design.bound = design.matrix.cwiseAbs().maxCoeff();
    }
    return design;
}

namespace {

// Gauss-Legendre nodes/weights on [-1, 1] via Newton iteration.
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.resize(n);
    weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            pp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        double w = 2.0 / ((1.0 - x * x) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
}

}  // namespace

SmoothingFactors smoothing_factors(const DictionarySpec& spec, double eps_r) {
    if (spec.family == BasisFamily::step)
        throw std::invalid_argument("smoothing factors require a twice-differentiable family");
    if (!(eps_r >= 0.0)) throw std::invalid_argument("eps_r must be nonnegative");

    std::vector<double> breaks;
    if (spec.family == BasisFamily::cubic_bspline) {
        auto knots = bspline_knots(spec);
        for (double t : knots)
            if (breaks.empty() || t > breaks.back()) breaks.push_back(t);
    } else {
        breaks = {spec.domain.lo, spec.domain.hi};
    }

    std::vector<double> nodes, weights;
    gauss_legendre(32, nodes, weights);

    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(spec.d, spec.d);
    for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
        double lo = breaks[s], hi = breaks[s + 1];
        double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
        for (int k = 0; k < 32; ++k) {
            double x = mid + half * nodes[k];
            Eigen::VectorXd d2 = evaluate_basis_deriv2(spec, x);
            m.selfadjointView<Eigen::Lower>().rankUpdate(d2, half * weights[k]);
        }
    }
    m = m.selfadjointView<Eigen::Lower>();

    SmoothingFactors factors;
    factors.m = m;
    factors.eps_r = eps_r;
    Eigen::MatrixXd reg = m + eps_r * Eigen::MatrixXd::Identity(spec.d, spec.d);
    Eigen::LLT<Eigen::MatrixXd> llt(reg);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("smoothing factor factorization failed; increase eps_r");
    factors.r = llt.matrixU();
    return factors;
}

void save_matrix_csv(const Eigen::MatrixXd& matrix, const std::string& path) {
    std::string tmp = path + ".tmp";
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write matrix file: " + path);
    out.precision(17);
    for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
        for (Eigen::Index j = 0; j < matrix.cols(); ++j)
            out << matrix(i, j) << (j + 1 == matrix.cols() ? "" : ",");
        out << "\n";
    }
    out.close();
    std::filesystem::rename(tmp, path);
}

DesignExpansion reparametrize_design(const DesignExpansion& design,
                                     const SmoothingFactors& factors) {
    if (factors.d() != design.d)
        throw std::invalid_argument("smoothing factor dimension does not match design");
    for (int k = 0; k < factors.d(); ++k)
        if (std::abs(factors.r(k, k)) < 1e-14)
            throw std::invalid_argument("singular smoothing factor R");

    DesignExpansion out = design;
    auto rt = factors.r.transpose();
    for (int j = 0; j < design.p; ++j) {
        Eigen::MatrixXd block = design.matrix.middleCols(j * design.d, design.d).transpose();
        rt.triangularView<Eigen::Lower>().solveInPlace(block);
        out.matrix.middleCols(j * design.d, design.d) = block.transpose();
    }
    out.bound = out.matrix.size() > 0 ? out.matrix.cwiseAbs().maxCoeff() : design.bound;
    return out;
}

}  // namespace groupcox
