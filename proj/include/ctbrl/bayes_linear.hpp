#pragma once

#include <cstdint>

#include "ctbrl/types.hpp"

namespace ctbrl {

/// A state with a trailing constant 1 appended, the regressor of every local
/// linear model. The only way to build one is from a state, so the last
/// component is 1 by construction.
class AugmentedInput {
public:
    static AugmentedInput from_state(const State& s) {
        AugmentedInput in;
        in.x_.resize(s.size() + 1);
        in.x_.head(s.size()) = s;
        in.x_[s.size()] = 1.0;
        return in;
    }

    const Vector& vector() const { return x_; }
    Eigen::Index size() const { return x_.size(); }

private:
    AugmentedInput() = default;
    Vector x_;
};

/// Hyperparameters of the matrix-normal inverse-Wishart prior. The same prior
/// is shared by every context of a tree.
struct MniwPrior {
    Matrix mean;       // d_out x d_in
    Matrix precision;  // d_in x d_in, SPD
    Matrix scale;      // d_out x d_out, SPD
    double dof = 0.0;

    /// M = 0, N = I, W = w0 I, n = d_out + 1.
    static MniwPrior standard(int input_dim, int output_dim, double w0 = 1.0);

    int input_dim() const { return static_cast<int>(precision.rows()); }
    int output_dim() const { return static_cast<int>(scale.rows()); }
};

/// How the Student-t predictive turns (W, z, n) into a density.
///
/// kConjugate is the exact marginal of the conjugate model: the density is
/// proportional to [1 + z e^T W^{-1} e]^{-(n+1)/2} with e = y - M x, i.e. a
/// Student-t with n - d_out + 1 degrees of freedom and scale W / (z (n - d_out + 1)).
/// Written with W/z as the scale and 1 + n as the shape exponent this is the
/// same law.
///
/// kUnscaled reads the triple (M x, W/z, 1 + n) in the standard location /
/// scale / degrees-of-freedom parameterization instead. It is a proper
/// density but its spread grows with the data count, so it is kept only for
/// comparison.
enum class StudentForm { kConjugate, kUnscaled };

/// One draw of the parameters of a local model: s' = A x + noise, noise ~ N(0, V).
struct LinearGaussianSample {
    Matrix design;        // A, d_out x d_in
    Matrix covariance;    // V, d_out x d_out
    Matrix noise_factor;  // F with F F^T = V
};

/// Posterior of one node's linear-Gaussian model.
///
/// Concurrent reads are safe; updates must be serialized by the caller.
class MniwPosterior {
public:
    explicit MniwPosterior(const MniwPrior& prior);

    /// Restores a posterior from its raw parameters (checkpoints).
    MniwPosterior(Matrix mean, Matrix precision, Matrix scale, double dof, std::uint64_t obs_count);

    int input_dim() const { return static_cast<int>(precision_.rows()); }
    int output_dim() const { return static_cast<int>(scale_.rows()); }

    const Matrix& mean_matrix() const { return mean_; }
    const Matrix& input_precision() const { return precision_; }
    const Matrix& wishart_scale() const { return scale_; }
    double dof() const { return dof_; }
    std::uint64_t obs_count() const { return obs_count_; }

    /// Conjugate update with one observation (x, y):
    ///   N' = N + x x^T,  M' = (M N + y x^T) N'^{-1},
    ///   W' = W + (y - M' x)(y - M x)^T,  n' = n + 1.
    /// Throws NumericalError if N' or W' stop being positive definite.
    void update(const AugmentedInput& x, const Vector& y);

    /// z = 1 - x^T (N + x x^T)^{-1} x, always in (0, 1].
    double input_shrinkage(const AugmentedInput& x) const;

    Vector predictive_mean(const AugmentedInput& x) const;

    double log_predictive_density(const AugmentedInput& x, const Vector& y,
                                  StudentForm form = StudentForm::kConjugate) const;
    double predictive_density(const AugmentedInput& x, const Vector& y,
                              StudentForm form = StudentForm::kConjugate) const;

    /// Covariance of the predictive (kConjugate form); needs n > d_out + 1.
    Matrix predictive_covariance(const AugmentedInput& x) const;

    /// V ~ IW(W, n) by the Bartlett decomposition of the matching Wishart
    /// precision, then A | V ~ MN(M, V, N^{-1}).
    LinearGaussianSample sample(Rng& rng) const;

private:
    void check_dims(const AugmentedInput& x, const Vector& y) const;

    Matrix mean_;
    Matrix precision_;
    Matrix scale_;
    double dof_;
    std::uint64_t obs_count_;
};

inline MniwPosterior posterior_update(MniwPosterior post, const AugmentedInput& x, const Vector& y) {
    post.update(x, y);
    return post;
}

}  // namespace ctbrl
