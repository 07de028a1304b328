#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "groupcox/survival.hpp"

namespace groupcox {

enum class BasisFamily { step, polynomial, cubic_bspline };

std::string basis_family_name(BasisFamily family);
BasisFamily basis_family_from_name(const std::string& name);

// A dictionary of d bounded functions on [a, b], shared by every covariate.
struct DictionarySpec {
    BasisFamily family = BasisFamily::polynomial;
    int d = 3;
    Interval domain = {0.0, 1.0};
    double bound = 1.0;  // C = sup_k sup_x |Psi_k(x)|

    static DictionarySpec step(int d, Interval domain = {0.0, 1.0});
    static DictionarySpec polynomial(int d, Interval domain = {0.0, 1.0});
    static DictionarySpec cubic_bspline(int d, Interval domain = {0.0, 1.0});
};

// (Psi_1(x), ..., Psi_d(x)); x must lie in the dictionary domain.
Eigen::VectorXd evaluate_basis(const DictionarySpec& spec, double x);

// Second derivatives; step family is rejected.
Eigen::VectorXd evaluate_basis_deriv2(const DictionarySpec& spec, double x);

// n x (p*d) matrix, row i = (Psi(X_i1)^T, ..., Psi(X_ip)^T).
struct DesignExpansion {
    Eigen::MatrixXd matrix;
    int p = 0;
    int d = 0;
    double bound = 1.0;
    // Per-column scale divided out when standardization was requested
    // (empty otherwise). Not addressed by the underlying scaling theory.
    std::vector<double> column_scale;

    // total column count; equals p*d except for latent overlap designs whose
    // groups have unequal sizes
    int dim() const { return static_cast<int>(matrix.cols()); }
    auto row_block(int i, int j) const { return matrix.row(i).segment(j * d, d); }
};

struct ExpandOptions {
    bool standardize = false;  // off by default
};

DesignExpansion expand_design(const SurvivalDataset& ds, const DictionarySpec& spec,
                              const ExpandOptions& options = {});

// Gram matrix of second derivatives M_kl = \int Psi_k'' Psi_l'' and an upper
// triangular factor R with R^T R = M + eps_r I. The same matrix applies to
// every covariate group since the dictionary is shared.
struct SmoothingFactors {
    Eigen::MatrixXd m;  // raw quadrature Gram matrix
    Eigen::MatrixXd r;  // upper triangular, r^T r = m + eps_r * I
    double eps_r = 0.0;

    int d() const { return static_cast<int>(m.rows()); }
};

SmoothingFactors smoothing_factors(const DictionarySpec& spec, double eps_r = 1e-8);

// Writes a dense matrix as plain CSV (used to export smoothing factors for
// inspection).
void save_matrix_csv(const Eigen::MatrixXd& matrix, const std::string& path);

// Block j of each row right-multiplied by R^{-1}; for b = R^{-1} b_tilde the
// fitted values agree with the original design.
DesignExpansion reparametrize_design(const DesignExpansion& design,
                                     const SmoothingFactors& factors);

}  // namespace groupcox
