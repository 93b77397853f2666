#include "ctbrl/bayes_linear.hpp"

#include <cmath>
#include <numbers>

namespace ctbrl {

namespace {

void symmetrize(Matrix& m) { m = 0.5 * (m + m.transpose()).eval(); }

Eigen::LLT<Matrix> factor_spd(const Matrix& m, const char* what) {
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) throw NumericalError(what);
    return llt;
}

double log_det_from_llt(const Eigen::LLT<Matrix>& llt) {
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace

MniwPrior MniwPrior::standard(int input_dim, int output_dim, double w0) {
    require(input_dim > 0 && output_dim > 0, "MniwPrior::standard: dimensions must be positive");
    require(w0 > 0.0, "MniwPrior::standard: w0 must be positive");
    MniwPrior p;
    p.mean = Matrix::Zero(output_dim, input_dim);
    p.precision = Matrix::Identity(input_dim, input_dim);
    p.scale = w0 * Matrix::Identity(output_dim, output_dim);
    p.dof = output_dim + 1.0;
    return p;
}

MniwPosterior::MniwPosterior(const MniwPrior& prior)
    : MniwPosterior(prior.mean, prior.precision, prior.scale, prior.dof, 0) {}

MniwPosterior::MniwPosterior(Matrix mean, Matrix precision, Matrix scale, double dof,
                             std::uint64_t obs_count)
    : mean_(std::move(mean)),
      precision_(std::move(precision)),
      scale_(std::move(scale)),
      dof_(dof),
      obs_count_(obs_count) {
    require(precision_.rows() == precision_.cols(), "MniwPosterior: precision must be square");
    require(scale_.rows() == scale_.cols(), "MniwPosterior: scale must be square");
    require(mean_.rows() == scale_.rows() && mean_.cols() == precision_.rows(),
            "MniwPosterior: mean matrix shape must be d_out x d_in");
    require(dof_ > 0.0, "MniwPosterior: degrees of freedom must be positive");
    factor_spd(precision_, "MniwPosterior: input precision is not positive definite");
    factor_spd(scale_, "MniwPosterior: Wishart scale is not positive definite");
}

void MniwPosterior::check_dims(const AugmentedInput& x, const Vector& y) const {
    require(x.size() == input_dim(), "MniwPosterior: input dimension mismatch");
    require(y.size() == output_dim(), "MniwPosterior: output dimension mismatch");
}

void MniwPosterior::update(const AugmentedInput& in, const Vector& y) {
    check_dims(in, y);
    const Vector& x = in.vector();

    Matrix next_precision = precision_;
    next_precision.noalias() += x * x.transpose();
    symmetrize(next_precision);
    auto llt = factor_spd(next_precision, "MniwPosterior::update: input precision lost definiteness");

    Matrix rhs = mean_ * precision_;
    rhs.noalias() += y * x.transpose();
    Matrix next_mean = llt.solve(rhs.transpose()).transpose();

    const Vector prior_residual = y - mean_ * x;
    const Vector post_residual = y - next_mean * x;
    Matrix next_scale = scale_;
    next_scale.noalias() += post_residual * prior_residual.transpose();
    symmetrize(next_scale);
    factor_spd(next_scale, "MniwPosterior::update: Wishart scale lost definiteness");

    mean_ = std::move(next_mean);
    precision_ = std::move(next_precision);
    scale_ = std::move(next_scale);
    dof_ += 1.0;
    ++obs_count_;
}

double MniwPosterior::input_shrinkage(const AugmentedInput& in) const {
    require(in.size() == input_dim(), "MniwPosterior: input dimension mismatch");
    const Vector& x = in.vector();
    Eigen::LLT<Matrix> llt(precision_);
    // Sherman-Morrison form of 1 - x^T (N + x x^T)^{-1} x.
    return 1.0 / (1.0 + x.dot(llt.solve(x)));
}

Vector MniwPosterior::predictive_mean(const AugmentedInput& x) const {
    require(x.size() == input_dim(), "MniwPosterior: input dimension mismatch");
    return mean_ * x.vector();
}

double MniwPosterior::log_predictive_density(const AugmentedInput& in, const Vector& y,
                                             StudentForm form) const {
    check_dims(in, y);
    const double d = output_dim();
    const double z = input_shrinkage(in);
    const Vector e = y - mean_ * in.vector();

    Eigen::LLT<Matrix> llt(scale_);
    const double mahalanobis = e.dot(llt.solve(e));
    const double log_det_scale = log_det_from_llt(llt);
    const double log_pi = std::log(std::numbers::pi);

    if (form == StudentForm::kConjugate) {
        const double shape = dof_ + 1.0;
        return std::lgamma(0.5 * shape) - std::lgamma(0.5 * (shape - d)) - 0.5 * d * log_pi +
               0.5 * d * std::log(z) - 0.5 * log_det_scale -
               0.5 * shape * std::log1p(z * mahalanobis);
    }
    const double nu = dof_ + 1.0;
    return std::lgamma(0.5 * (nu + d)) - std::lgamma(0.5 * nu) - 0.5 * d * (std::log(nu) + log_pi) +
           0.5 * d * std::log(z) - 0.5 * log_det_scale -
           0.5 * (nu + d) * std::log1p(z * mahalanobis / nu);
}

double MniwPosterior::predictive_density(const AugmentedInput& x, const Vector& y,
                                         StudentForm form) const {
    return std::exp(log_predictive_density(x, y, form));
}

Matrix MniwPosterior::predictive_covariance(const AugmentedInput& x) const {
    const double nu = dof_ + 1.0 - output_dim();
    require(nu > 2.0, "MniwPosterior::predictive_covariance: needs n > d_out + 1");
    return scale_ / (input_shrinkage(x) * (nu - 2.0));
}

LinearGaussianSample MniwPosterior::sample(Rng& rng) const {
    const int d = output_dim();
    const int k = input_dim();
    require(dof_ > d - 1, "MniwPosterior::sample: degrees of freedom too small for the Wishart");

    std::normal_distribution<double> normal(0.0, 1.0);

    // Bartlett factor of a standard Wishart(I, n).
    Matrix bartlett = Matrix::Zero(d, d);
    for (int i = 0; i < d; ++i) {
        std::gamma_distribution<double> chi_sq(0.5 * (dof_ - i), 2.0);
        bartlett(i, i) = std::sqrt(chi_sq(rng));
        for (int j = 0; j < i; ++j) bartlett(i, j) = normal(rng);
    }

    // Precision ~ Wishart(W^{-1}, n) is L^{-T} B B^T L^{-1} for W = L L^T, so
    // V = (L B^{-T}) (L B^{-T})^T.
    auto scale_llt = factor_spd(scale_, "MniwPosterior::sample: Wishart scale is not positive definite");
    const Matrix b_inv_t = bartlett.triangularView<Eigen::Lower>()
                               .solve(Matrix::Identity(d, d))
                               .transpose();
    LinearGaussianSample out;
    out.noise_factor = scale_llt.matrixL() * b_inv_t;
    out.covariance = out.noise_factor * out.noise_factor.transpose();
    symmetrize(out.covariance);

    auto prec_llt = factor_spd(precision_, "MniwPosterior::sample: input precision is not positive definite");
    Matrix white(d, k);
    for (int j = 0; j < k; ++j)
        for (int i = 0; i < d; ++i) white(i, j) = normal(rng);
    // Column covariance N^{-1} = L_N^{-T} L_N^{-1}: right-multiply by L_N^{-1}.
    const Matrix col_mixed =
        prec_llt.matrixU().solve(white.transpose()).transpose();
    out.design = mean_ + out.noise_factor * col_mixed;
    return out;
}

}  // namespace ctbrl
