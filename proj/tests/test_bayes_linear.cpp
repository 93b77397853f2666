#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"

#include "ctbrl/bayes_linear.hpp"

using namespace ctbrl;

namespace {

AugmentedInput aug(std::initializer_list<double> s) {
    State v(static_cast<Eigen::Index>(s.size()));
    Eigen::Index i = 0;
    for (double x : s) v[i++] = x;
    return AugmentedInput::from_state(v);
}

Matrix random_spd(int n, Rng& rng) {
    std::normal_distribution<double> normal;
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = normal(rng);
    return a * a.transpose() + 0.5 * Matrix::Identity(n, n);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_CASE("prior predictive mean is zero") {
    MniwPosterior post(MniwPrior::standard(3, 2));
    CHECK(post.obs_count() == 0);
    CHECK(post.predictive_mean(aug({0.3, -7.0})).norm() == 0.0);
    CHECK(post.predictive_mean(aug({100.0, 2.0})).norm() == 0.0);
}

TEST_CASE("zero updates leave the prior untouched") {
    const auto prior = MniwPrior::standard(2, 1, 3.0);
    MniwPosterior post(prior);
    CHECK(post.mean_matrix() == prior.mean);
    CHECK(post.input_precision() == prior.precision);
    CHECK(post.wishart_scale() == prior.scale);
    CHECK(post.dof() == prior.dof);
}

TEST_CASE("noiseless line recovers the ridge least-squares solution") {
    MniwPosterior post(MniwPrior::standard(2, 1));
    // Oracle: normal equations with the unit prior precision as ridge.
    Matrix gram = Matrix::Identity(2, 2);
    Vector moment = Vector::Zero(2);
    for (int i = 0; i < 50; ++i) {
        const double s = -1.0 + 2.0 * i / 49.0;
        const double y = 2.0 * s + 1.0;
        post.update(aug({s}), Vector::Constant(1, y));
        Vector x(2);
        x << s, 1.0;
        gram += x * x.transpose();
        moment += x * y;
    }
    const Vector ridge = gram.ldlt().solve(moment);
    CHECK((post.mean_matrix().row(0).transpose() - ridge).norm() < 1e-6);
    // The unit ridge leaves only a small bias from the exact line.
    CHECK(std::abs(post.mean_matrix()(0, 0) - 2.0) < 0.15);
    CHECK(std::abs(post.mean_matrix()(0, 1) - 1.0) < 0.15);
}

TEST_CASE("sequential updates equal the batch posterior from sufficient statistics") {
    Rng rng(11);
    std::normal_distribution<double> normal;
    const int d_in = 3, d_out = 2, count = 200;
    MniwPrior prior = MniwPrior::standard(d_in, d_out, 0.7);
    prior.mean = Matrix::Constant(d_out, d_in, 0.25);
    prior.precision = random_spd(d_in, rng);
    MniwPosterior post(prior);

    Matrix sxx = Matrix::Zero(d_in, d_in), syx = Matrix::Zero(d_out, d_in), syy = Matrix::Zero(d_out, d_out);
    for (int t = 0; t < count; ++t) {
        State s(2);
        s << normal(rng), normal(rng);
        const auto x = AugmentedInput::from_state(s);
        Vector y(d_out);
        y << 0.5 * s[0] - s[1] + 0.1 * normal(rng), 2.0 + 0.3 * s[0] + 0.2 * normal(rng);
        post.update(x, y);
        sxx += x.vector() * x.vector().transpose();
        syx += y * x.vector().transpose();
        syy += y * y.transpose();
    }
    const Matrix n_batch = prior.precision + sxx;
    const Matrix m_batch = (prior.mean * prior.precision + syx) * n_batch.inverse();
    const Matrix w_batch = prior.scale + syy + prior.mean * prior.precision * prior.mean.transpose() -
                           m_batch * n_batch * m_batch.transpose();
    CHECK((post.input_precision() - n_batch).cwiseAbs().maxCoeff() < 1e-10 * n_batch.norm());
    CHECK((post.mean_matrix() - m_batch).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((post.wishart_scale() - w_batch).cwiseAbs().maxCoeff() < 1e-10 * w_batch.norm());
    CHECK(post.dof() == prior.dof + count);
    CHECK(post.obs_count() == static_cast<std::uint64_t>(count));
}

TEST_CASE("shrinkage agrees with the explicit rank-one inverse") {
    Rng rng(5);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 100; ++trial) {
        const int d_in = 2 + trial % 3;
        const Matrix n = random_spd(d_in, rng);
        MniwPosterior post(Matrix::Zero(1, d_in), n, Matrix::Identity(1, 1), 3.0, 0);
        State s(d_in - 1);
        for (int i = 0; i < d_in - 1; ++i) s[i] = 3.0 * normal(rng);
        const auto x = AugmentedInput::from_state(s);
        const Matrix bumped = n + x.vector() * x.vector().transpose();
        const double direct = 1.0 - x.vector().dot(bumped.inverse() * x.vector());
        const double z = post.input_shrinkage(x);
        CHECK(std::abs(z - direct) < 1e-10);
        CHECK(z > 0.0);
        CHECK(z <= 1.0);
    }
}

TEST_CASE("one-dimensional predictive integrates to one") {
    Rng rng(3);
    std::normal_distribution<double> normal;
    MniwPosterior post(MniwPrior::standard(2, 1));
    for (int t = 0; t < 10; ++t) {
        const double s = normal(rng);
        post.update(aug({s}), Vector::Constant(1, 0.5 * s + 0.2 * normal(rng)));
    }
    const auto x = aug({0.4});
    for (auto form : {StudentForm::kConjugate, StudentForm::kUnscaled}) {
        // Composite Simpson on [-50, 50].
        const int n = 200000;
        const double a = -50.0, b = 50.0, h = (b - a) / n;
        double sum = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
            sum += w * post.predictive_density(x, Vector::Constant(1, a + i * h), form);
        }
        CHECK(std::abs(sum * h / 3.0 - 1.0) < 1e-4);
    }
}

TEST_CASE("predictive density is symmetric about a zero location") {
    MniwPosterior post(Matrix::Zero(2, 3), Matrix::Identity(3, 3) * 2.0,
                       (Matrix(2, 2) << 1.0, 0.3, 0.3, 2.0).finished(), 5.0, 0);
    const auto x = aug({0.7, -1.1});
    for (double a : {0.1, 1.0, 3.5}) {
        Vector y(2);
        y << a, -0.5 * a;
        CHECK(std::abs(post.predictive_density(x, y) - post.predictive_density(x, -y)) < 1e-12);
    }
}

TEST_CASE("predictive density matches the Monte-Carlo average over sampled parameters") {
    Rng rng(17);
    std::normal_distribution<double> normal;
    MniwPosterior post(MniwPrior::standard(2, 1));
    for (int t = 0; t < 8; ++t) {
        const double s = normal(rng);
        post.update(aug({s}), Vector::Constant(1, -0.3 * s + 1.0 + 0.5 * normal(rng)));
    }
    const auto x = aug({0.8});
    const Vector y = Vector::Constant(1, 0.9);
    const int draws = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (int k = 0; k < draws; ++k) {
        const auto p = post.sample(rng);
        const double mu = (p.design * x.vector())[0];
        const double v = p.covariance(0, 0);
        const double dens = std::exp(-0.5 * (y[0] - mu) * (y[0] - mu) / v) / std::sqrt(2.0 * std::numbers::pi * v);
        sum += dens;
        sum_sq += dens * dens;
    }
    const double mean = sum / draws;
    const double se = std::sqrt((sum_sq / draws - mean * mean) / draws);
    CHECK(std::abs(post.predictive_density(x, y) - mean) < 3.0 * se);
}

TEST_CASE("inverse-Wishart draws have the moment-formula mean") {
    MniwPosterior post(Matrix::Zero(2, 3), Matrix::Identity(3, 3), Matrix::Identity(2, 2), 6.0, 0);
    Rng rng(23);
    const int draws = 50000;
    Matrix mean_v = Matrix::Zero(2, 2);
    for (int k = 0; k < draws; ++k) mean_v += post.sample(rng).covariance;
    mean_v /= draws;
    const Matrix expected = Matrix::Identity(2, 2) / 3.0;
    CHECK((mean_v - expected).norm() / expected.norm() < 0.05);
}

TEST_CASE("design draws are centred on the mean matrix") {
    Matrix m(2, 3);
    m << 1.0, -2.0, 0.5, 0.0, 3.0, -1.0;
    MniwPosterior post(m, 4.0 * Matrix::Identity(3, 3), 0.5 * Matrix::Identity(2, 2), 8.0, 0);
    Rng rng(29);
    const int draws = 50000;
    Matrix sum = Matrix::Zero(2, 3), sum_sq = Matrix::Zero(2, 3);
    for (int k = 0; k < draws; ++k) {
        const Matrix a = post.sample(rng).design;
        sum += a;
        sum_sq += a.cwiseProduct(a);
    }
    const Matrix mean = sum / draws;
    const Matrix var = sum_sq / draws - mean.cwiseProduct(mean);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j) CHECK(std::abs(mean(i, j) - m(i, j)) < 3.0 * std::sqrt(var(i, j) / draws));
}

TEST_CASE("sampling is deterministic for a fixed seed") {
    MniwPosterior post(MniwPrior::standard(3, 2));
    Rng a(99), b(99);
    const auto s1 = post.sample(a);
    const auto s2 = post.sample(b);
    CHECK(s1.design == s2.design);
    CHECK(s1.covariance == s2.covariance);
    Eigen::LLT<Matrix> llt(s1.covariance);
    CHECK(llt.info() == Eigen::Success);
}

TEST_CASE("predictive scale contracts with data") {
    std::vector<double> early, late;
    for (int run = 0; run < 20; ++run) {
        Rng rng(1000 + run);
        std::normal_distribution<double> normal;
        MniwPosterior post(MniwPrior::standard(3, 2));
        const auto probe = aug({0.2, -0.1});
        for (int t = 1; t <= 1000; ++t) {
            State s(2);
            s << normal(rng), normal(rng);
            Vector y(2);
            y << s[0] + 0.1 * normal(rng), 0.5 * s[1] - 0.2 + 0.1 * normal(rng);
            const double dof_before = post.dof();
            post.update(AugmentedInput::from_state(s), y);
            CHECK(post.dof() > dof_before);
            if (t == 10) early.push_back(post.predictive_covariance(probe).trace());
            if (t == 1000) late.push_back(post.predictive_covariance(probe).trace());
        }
    }
    CHECK(median(late) < median(early));
}

TEST_CASE("contract and numerical errors") {
    MniwPosterior post(MniwPrior::standard(3, 2));
    CHECK_THROWS_AS(post.update(aug({1.0}), Vector::Zero(2)), ContractViolation);
    CHECK_THROWS_AS(post.update(aug({1.0, 2.0}), Vector::Zero(3)), ContractViolation);
    CHECK_THROWS_AS(post.predictive_density(aug({1.0, 2.0}), Vector::Zero(1)), ContractViolation);
    Matrix bad = Matrix::Identity(2, 2);
    bad(1, 1) = -1.0;
    CHECK_THROWS_AS(MniwPosterior(Matrix::Zero(2, 3), Matrix::Identity(3, 3), bad, 3.0, 0), NumericalError);
}
