#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "weakal/data.hpp"
#include "weakal/errors.hpp"
#include "weakal/gp_regression.hpp"
#include "weakal/rng.hpp"

using namespace weakal;

namespace {

using Data = WeakRegressionDataset<double>;

Data sine_data(int n, RngStream& rng, double gamma = 0.09) {
  Data d;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x(1);
    x << rng.uniform(0.0, 5.0);
    d.append(x, sine_mean(x(0), 3.0) + 0.1 * rng.normal(), rng.uniform(0.0, gamma));
  }
  return d;
}

NoiseModel<double> sine_noise() {
  return {[](const Eigen::VectorXd& x) { return sine_base_variance(x(0)); }, 0.09};
}

// Dense oracle: M = K + diag(noise) + jitter, everything through explicit inverses.
struct DenseGp {
  Eigen::MatrixXd m_inv;
  Eigen::VectorXd w;
  double logdet;
};

DenseGp dense(const Data& d, const KernelParams<double>& kp, const NoiseModel<double>& nm,
              double jitter) {
  const Eigen::Index n = d.size();
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double sq = (d.xs.row(i) - d.xs.row(j)).squaredNorm();
      m(i, j) = kp.amplitude * kp.amplitude * std::exp(-2.0 * sq / (kp.length_scale * kp.length_scale));
    }
    m(i, i) += nm.base_variance(d.xs.row(i).transpose()) + d.betas(i) + jitter;
  }
  DenseGp g;
  g.m_inv = m.inverse();
  g.w = g.m_inv * d.ys;
  g.logdet = std::log(m.determinant());
  return g;
}

double dense_nll(const Data& d, const KernelParams<double>& kp, const NoiseModel<double>& nm,
                 double jitter) {
  const auto g = dense(d, kp, nm, jitter);
  return g.logdet + d.ys.dot(g.w);
}

}  // namespace

TEST_CASE("empty dataset gives the prior") {
  const auto model = fit(Data{}, KernelParams<double>{1.5, 1.0}, sine_noise());
  for (double x : {0.0, 1.3, 4.9}) {
    const auto m = model.predict_latent(Eigen::VectorXd::Constant(1, x));
    CHECK(m.mean == 0.0);
    CHECK(m.variance == doctest::Approx(2.25).epsilon(1e-15));
  }
}

TEST_CASE("one-point posterior matches 1x1 algebra") {
  const double a = 1.3, x0 = 0.7, y0 = 0.42, beta = 0.05;
  Data d;
  d.append(Eigen::VectorXd::Constant(1, x0), y0, beta);
  const auto nm = sine_noise();
  const auto model = fit(d, KernelParams<double>{a, 1.0}, nm, 0.0);
  const double denom = a * a + sine_base_variance(x0) + beta;
  const auto m = model.predict_latent(Eigen::VectorXd::Constant(1, x0));
  CHECK(m.mean == doctest::Approx(a * a * y0 / denom).epsilon(1e-14));
  CHECK(m.variance == doctest::Approx(a * a - std::pow(a, 4) / denom).epsilon(1e-13));
}

TEST_CASE("appending a weak point reduces variance there") {
  RngStream rng(1);
  Data d = sine_data(5, rng);
  const KernelParams<double> kp{1.0, 1.0};
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 2.2);
  const double before = fit(d, kp, sine_noise()).predict_latent(x).variance;
  d.append(x, 0.1, 0.09);
  const double after = fit(d, kp, sine_noise()).predict_latent(x).variance;
  CHECK(after < before);
}

TEST_CASE("interpolation limit") {
  Data d;
  d.append(Eigen::VectorXd::Constant(1, 0.5), 0.8, 0.0);
  d.append(Eigen::VectorXd::Constant(1, 2.0), -0.3, 0.0);
  const auto nm = NoiseModel<double>::constant(1e-12, 0.09);
  const auto model = fit(d, KernelParams<double>{1.0, 1.0}, nm);
  CHECK(std::abs(model.predict_latent(Eigen::VectorXd::Constant(1, 0.5)).mean - 0.8) <= 1e-4);
  CHECK(std::abs(model.predict_latent(Eigen::VectorXd::Constant(1, 2.0)).mean + 0.3) <= 1e-4);
}

TEST_CASE("predictions match the dense-inverse oracle") {
  RngStream rng(2);
  for (int t = 0; t < 10; ++t) {
    const Data d = sine_data(8, rng);
    const KernelParams<double> kp{rng.uniform(0.5, 2.0), rng.uniform(0.3, 2.0)};
    const auto nm = sine_noise();
    const auto model = fit(d, kp, nm);
    const auto g = dense(d, kp, nm, 1e-8);
    for (int k = 0; k < 5; ++k) {
      Eigen::VectorXd x(1);
      x << rng.uniform(0.0, 5.0);
      Eigen::VectorXd kx(8);
      for (int i = 0; i < 8; ++i) {
        kx(i) = kp.amplitude * kp.amplitude *
                std::exp(-2.0 * std::pow(d.xs(i, 0) - x(0), 2) / (kp.length_scale * kp.length_scale));
      }
      const auto m = model.predict_latent(x);
      CHECK(std::abs(m.mean - kx.dot(g.w)) <= 1e-8);
      CHECK(std::abs(m.variance - (kp.amplitude * kp.amplitude - kx.dot(g.m_inv * kx))) <= 1e-8);
      CHECK(m.variance <= kp.amplitude * kp.amplitude + 1e-8);
    }
  }
}

TEST_CASE("homoscedastic max-precision case matches the textbook GP") {
  RngStream rng(21);
  Data d = sine_data(7, rng);
  d.betas.setZero();
  const auto nm = NoiseModel<double>::constant(0.04, 0.09);
  const KernelParams<double> kp{1.0, 0.8};
  const auto model = fit(d, kp, nm);
  const auto g = dense(d, kp, nm, 1e-8);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 3.3);
  Eigen::VectorXd kx(7);
  for (int i = 0; i < 7; ++i) kx(i) = std::exp(-2.0 * std::pow(d.xs(i, 0) - 3.3, 2) / 0.64);
  const auto w = model.predict_weak(x, 0.0);
  CHECK(std::abs(w.mean - kx.dot(g.w)) <= 1e-8);
  CHECK(std::abs(w.variance - (1.0 - kx.dot(g.m_inv * kx) + 0.04)) <= 1e-8);
}

TEST_CASE("predict_weak variance") {
  RngStream rng(3);
  const auto model = fit(sine_data(6, rng), KernelParams<double>{1.0, 1.0}, sine_noise());
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 1.1);
  const double latent = model.predict_latent(x).variance;
  CHECK(model.predict_weak(x, 0.0).variance == doctest::Approx(latent + sine_base_variance(1.1)));
  CHECK(model.predict_weak(x, 0.09).variance ==
        doctest::Approx(latent + sine_base_variance(1.1) + 0.09));
  double prev = 0.0;
  for (double beta = 0.0; beta <= 0.09; beta += 0.009) {
    const double v = model.predict_weak(x, beta).variance;
    CHECK(v > latent);
    CHECK(v >= prev);
    prev = v;
  }
  CHECK_THROWS_AS(model.predict_weak(x, -0.1), InvalidArgument);
  CHECK_THROWS_AS(model.predict_latent(Eigen::VectorXd::Zero(2)), DimensionMismatch);
}

TEST_CASE("posterior variance never grows with more data") {
  RngStream rng(4);
  const KernelParams<double> kp{1.0, 0.6};
  Data d;
  std::vector<double> prev(20, 1.0);
  for (int n = 0; n < 15; ++n) {
    const auto model = fit(d, kp, sine_noise());
    for (int k = 0; k < 20; ++k) {
      const double v = model.predict_latent(Eigen::VectorXd::Constant(1, 0.25 * k)).variance;
      CHECK(v <= prev[static_cast<std::size_t>(k)] + 1e-8);
      CHECK(v <= 1.0 + 1e-8);
      prev[static_cast<std::size_t>(k)] = v;
    }
    Eigen::VectorXd x(1);
    x << rng.uniform(0.0, 5.0);
    d.append(x, rng.normal(), rng.uniform(0.0, 0.09));
  }
}

TEST_CASE("refitting is bit-identical") {
  RngStream rng(5);
  const Data d = sine_data(9, rng);
  const auto a = fit(d, KernelParams<double>{1.0, 1.0}, sine_noise());
  const auto b = fit(d, KernelParams<double>{1.0, 1.0}, sine_noise());
  CHECK(a.weights() == b.weights());
  CHECK(a.factor().lower() == b.factor().lower());
}

TEST_CASE("nll") {
  Data one;
  one.append(Eigen::VectorXd::Zero(1), 0.6, 0.0);
  const auto unit_noise = NoiseModel<double>::constant(1.0, 1.0);
  CHECK(nll(one, KernelParams<double>{1.0, 1.0}, unit_noise, 0.0) ==
        doctest::Approx(std::log(2.0) + 0.36 / 2.0).epsilon(1e-15));

  RngStream rng(6);
  const Data d = sine_data(6, rng);
  const KernelParams<double> kp{1.2, 0.7};
  const double value = nll(d, kp, sine_noise());
  CHECK(std::abs(value - dense_nll(d, kp, sine_noise(), 1e-8)) <= 1e-8);

  std::vector<int> perm{3, 0, 5, 1, 4, 2};
  Data shuffled;
  for (int i : perm) shuffled.append(d.xs.row(i).transpose(), d.ys(i), d.betas(i));
  CHECK(nll(shuffled, kp, sine_noise()) == doctest::Approx(value).epsilon(1e-12));

  CHECK_THROWS_AS(nll(Data{}, kp, sine_noise()), InvalidArgument);
  CHECK_THROWS_AS(nll(one, kp, NoiseModel<double>::constant(-5.0, 1.0), 0.0), NotPositiveDefinite);
}

TEST_CASE("nll_grad matches central finite differences") {
  RngStream rng(7);
  const auto nm = sine_noise();
  for (int t = 0; t < 20; ++t) {
    const Data d = sine_data(2 + t % 7, rng);
    const KernelParams<double> kp{rng.uniform(0.3, 3.0), rng.uniform(0.3, 3.0)};
    const Eigen::Vector2d g = nll_grad(d, kp, nm);
    const Eigen::Vector2d theta = kp.log_params();
    const double h = 1e-5;
    for (int k = 0; k < 2; ++k) {
      Eigen::Vector2d up = theta, down = theta;
      up(k) += h;
      down(k) -= h;
      const double fd = (nll(d, KernelParams<double>::from_log(up(0), up(1)), nm) -
                         nll(d, KernelParams<double>::from_log(down(0), down(1)), nm)) /
                        (2 * h);
      CHECK(std::abs(fd - g(k)) <= 1e-4 * std::max(std::abs(g(k)), 1.0));
    }
  }
}

TEST_CASE("nll_grad special cases") {
  RngStream rng(8);
  Data d = sine_data(5, rng);
  d.ys.setZero();
  const KernelParams<double> kp{1.0, 1.0};
  const auto nm = sine_noise();
  const auto g = nll_grad(d, kp, nm);
  const auto oracle = dense(d, kp, nm, 1e-8);
  const Eigen::MatrixXd k2 = 2.0 * kernel_matrix(d.xs, kp);
  CHECK(g(0) == doctest::Approx((oracle.m_inv * k2).trace()).epsilon(1e-10));
  CHECK(g(0) > 0.0);

  Data twice;
  for (int i = 0; i < 5; ++i) {
    twice.append(d.xs.row(i).transpose(), 0.1 * i, 0.0);
    twice.append(d.xs.row(i).transpose(), 0.1 * i, 0.0);
  }
  CHECK_NOTHROW(nll_grad(twice, kp, nm));
}

TEST_CASE("fit_hyperparams stopping rules") {
  RngStream rng(9);
  const Data d = sine_data(30, rng);
  const auto nm = sine_noise();
  const KernelParams<double> init{1.0, 1.0};

  AdamConfig stop_now;
  stop_now.gradient_tolerance = std::numeric_limits<double>::infinity();
  const auto immediate = fit_hyperparams(d, init, nm, stop_now);
  CHECK(immediate.epochs == 1);
  CHECK(immediate.reason == AdamStop::small_gradient);
  CHECK(immediate.params == init);

  AdamConfig capped;
  capped.relative_tolerance = -std::numeric_limits<double>::infinity();
  capped.max_epochs = 7;
  const auto seven = fit_hyperparams(d, init, nm, capped);
  CHECK(seven.epochs == 7);
  CHECK(seven.reason == AdamStop::max_epochs);

  const auto fitted = fit_hyperparams(d, init, nm, AdamConfig{});
  CHECK(fitted.epochs <= 100);
  CHECK(fitted.final_nll <= fitted.initial_nll);
  CHECK(nll(d, fitted.params, nm) == doctest::Approx(fitted.final_nll).epsilon(1e-12));
  CHECK(fitted.initial_nll == doctest::Approx(nll(d, init, nm)).epsilon(1e-15));
}

TEST_CASE("IncrementalRegressor agrees with a full refit") {
  RngStream rng(10);
  const auto nm = sine_noise();
  const KernelParams<double> kp{1.0, 0.7};
  Eigen::MatrixXd candidates(40, 1), probes(15, 1);
  for (int i = 0; i < 40; ++i) candidates(i, 0) = rng.uniform(0.0, 5.0);
  for (int i = 0; i < 15; ++i) probes(i, 0) = rng.uniform(0.0, 5.0);
  IncrementalRegressor<double> inc(kp, nm, candidates, probes, 1e-8, 2);
  for (int i = 0; i < 40; ++i) CHECK(inc.candidate_variance(i) == 1.0);

  Data d;
  for (int step = 0; step < 25; ++step) {
    const Eigen::VectorXd x = candidates.row(step).transpose();
    const double y = rng.normal();
    const double beta = rng.uniform(0.0, 0.09);
    inc.append(x, y, beta);
    d.append(x, y, beta);
    const auto model = fit(d, kp, nm);
    for (int i = 0; i < 40; ++i) {
      const auto m = model.predict_latent(candidates.row(i).transpose());
      CHECK(std::abs(inc.candidate_variance(i) - m.variance) <= 1e-10);
    }
    const Eigen::VectorXd means = inc.probe_means();
    for (int i = 0; i < 15; ++i) {
      CHECK(std::abs(means(i) - model.predict_latent(probes.row(i).transpose()).mean) <= 1e-10);
    }
  }
  CHECK(inc.size() == 25);
  CHECK_THROWS_AS(inc.append(Eigen::VectorXd::Zero(2), 0.0, 0.0), DimensionMismatch);
}

TEST_CASE("dataset validation") {
  Data d;
  d.append(Eigen::VectorXd::Zero(2), 1.0, 0.0);
  CHECK_THROWS_AS(d.append(Eigen::VectorXd::Zero(3), 1.0, 0.0), DimensionMismatch);
  d.betas(0) = -1.0;
  CHECK_THROWS_AS(d.validate(), InvalidArgument);
}
