#include <doctest.h>

#include <cmath>

#include "sae/error.hpp"
#include "sae/spatial_priors.hpp"
#include "sae/vae.hpp"

using namespace sae;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

ad::Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  ad::Tensor t(r, c);
  for (double& v : t.values()) v = scale * standard_normal(rng);
  return t;
}

TrainingSet small_set(std::size_t n) {
  const CarStructure cs(RegionGraph::lattice(3, 3));
  return generate_training_set(cs, n, TrainingLayout::Univariate, 1, 5);
}

}  // namespace

TEST_CASE("default architecture") {
  const VaeModel m = VaeModel::init(9, 1);
  CHECK(m.input_dim() == 9);
  CHECK(m.hidden_dim() == 9);
  CHECK(m.latent_dim() == 9);
  CHECK(m.alpha() == doctest::Approx(1.0 / 9.0));
  CHECK(m.parameters().size() == 10);
  CHECK(m.parameters().at("enc_w1").rows() == 9);
  CHECK(m.parameters().at("dec_wout").cols() == 9);
  CHECK(VaeModel::init(9, 1).parameters() == m.parameters());
  CHECK(VaeModel::init(9, 2).parameters() != m.parameters());
  CHECK_THROWS_AS(VaeModel::init(0, 1), Error);
}

TEST_CASE("encode, reparameterize and decode shapes") {
  const VaeModel m = VaeModel::init(6, 4, 3, 2);
  Rng rng(3);
  const ad::Tensor x = random_tensor(5, 6, rng);
  const Encoding e = encode(m, x);
  CHECK(e.mu.rows() == 5);
  CHECK(e.mu.cols() == 3);
  CHECK(e.logvar.cols() == 3);
  const ad::Tensor z = reparameterize(e.mu, e.logvar, rng);
  CHECK(decode(m, z).cols() == 6);
  CHECK_THROWS_AS(encode(m, random_tensor(5, 4, rng)), Error);
  CHECK_THROWS_AS(decode(m, random_tensor(5, 6, rng)), Error);

  // zero variance gives z = mu
  const ad::Tensor tiny(5, 3, -30.0);
  CHECK((reparameterize(e.mu, tiny, rng).values()[0] - e.mu.values()[0]) < 1e-6);
}

TEST_CASE("ELBO terms are the closed forms") {
  VaeModel m = VaeModel::init(4, 4, 2, 3);
  Rng rng(4);
  const ad::Tensor x = random_tensor(3, 4, rng);
  const ad::Tensor eps = random_tensor(3, 2, rng);
  const ElboValue v = elbo_with_noise(m, x, {eps});
  const Encoding e = encode(m, x);
  double kl = 0.0;
  for (std::size_t i = 0; i < e.mu.size(); ++i) {
    const double mu = e.mu.data()[i], lv = e.logvar.data()[i];
    kl += 0.5 * (mu * mu + std::exp(lv) - lv - 1.0);
  }
  kl /= 3.0;
  ad::Tensor z(3, 2);
  for (std::size_t i = 0; i < z.size(); ++i) {
    z.data()[i] = e.mu.data()[i] + std::exp(0.5 * e.logvar.data()[i]) * eps.data()[i];
  }
  const ad::Tensor xhat = decode(m, z);
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sq += std::pow(x.data()[i] - xhat.data()[i], 2);
  const double recon = -0.5 * sq / 3.0 - 2.0 * kLog2Pi;
  CHECK(v.kl == doctest::Approx(kl).epsilon(1e-12));
  CHECK(v.kl >= 0.0);
  CHECK(v.recon == doctest::Approx(recon).epsilon(1e-12));
  CHECK(v.elbo == doctest::Approx(recon - 0.5 * kl).epsilon(1e-12));
}

TEST_CASE("ELBO gradient through encoder, reparameterization and decoder") {
  const VaeModel m = VaeModel::init(5, 5, 5, 6);
  Rng rng(7);
  const ad::Tensor x = random_tensor(4, 5, rng);
  const ad::Tensor eps0 = random_tensor(4, 5, rng);
  const ad::Tensor eps1 = random_tensor(4, 5, rng);
  const ElboGraph eg = build_elbo_graph(4, 5, 5, 5, m.alpha(), 2);
  ad::Bindings b;
  b.bind("x", x).bind("eps0", eps0).bind("eps1", eps1);
  for (const auto& [name, t] : m.parameters()) b.bind(name, t);
  const ad::GradientCheck r = eg.graph.check_gradient(eg.elbo, b, 1e-5);
  CHECK(r.checked > 100);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("zero learning rate leaves the weights and the trace flat") {
  const TrainingSet data = small_set(300);
  const VaeModel m = VaeModel::init(9, 1);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 5;
  cfg.patience = 100;
  cfg.calibrate_latent = false;
  const TrainResult r = train(m, data, cfg);
  CHECK(r.model.parameters() == m.parameters());
  REQUIRE(r.trace.size() == 5);
  for (double e : r.trace.elbo) CHECK(e == r.trace.elbo[0]);
}

TEST_CASE("training raises the ELBO and records consistent traces") {
  const TrainingSet data = small_set(2000);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 64;
  cfg.learning_rate = 3e-3;
  cfg.seed = 9;
  const TrainResult r = train(VaeModel::init(9, 2), data, cfg);
  REQUIRE(r.trace.size() >= 2);
  CHECK(r.trace.elbo.size() == r.trace.kl.size());
  CHECK(r.trace.elbo.size() == r.trace.recon.size());
  CHECK(r.trace.elbo.back() > r.trace.elbo.front());
  const double alpha = 1.0 / 9.0;
  for (std::size_t e = 0; e < r.trace.size(); ++e) {
    CHECK(r.trace.elbo[e] == doctest::Approx(r.trace.recon[e] - alpha * r.trace.kl[e]).epsilon(1e-10));
  }
  // best snapshot reproduces the best traced ELBO under the evaluation noise
  double best = r.trace.elbo[0];
  for (double e : r.trace.elbo) best = std::max(best, e);
  CHECK(r.trace.elbo[r.trace.best_epoch] == best);

  // same seed, same result
  const TrainResult again = train(VaeModel::init(9, 2), data, cfg);
  CHECK(again.trace.elbo == r.trace.elbo);
  CHECK(again.model.parameters() == r.model.parameters());
}

TEST_CASE("latent calibration centres and whitens the aggregate posterior") {
  const TrainingSet data = small_set(3000);
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.batch_size = 64;
  cfg.learning_rate = 3e-3;
  cfg.seed = 4;
  cfg.calibrate_latent = false;
  const VaeModel before = train(VaeModel::init(9, 3), data, cfg).model;
  VaeModel after = before;
  calibrate_latent(after, data);

  ad::Tensor x(data.n_samples(), 9);
  for (std::size_t i = 0; i < data.n_samples(); ++i) {
    for (std::size_t j = 0; j < 9; ++j) x(i, j) = data.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  const Encoding e0 = encode(before, x);
  const Encoding e1 = encode(after, x);
  // decoding the posterior means is unchanged by the reparameterization
  const ad::Tensor r0 = decode(before, e0.mu);
  const ad::Tensor r1 = decode(after, e1.mu);
  for (std::size_t i = 0; i < r0.size(); ++i) CHECK(r1.data()[i] == doctest::Approx(r0.data()[i]).epsilon(1e-9));

  // new means are centred and mu' = (mu - m) T^T for a fixed T with
  // Cov(mu') + T diag(E sigma^2) T^T = I
  const auto n = static_cast<Eigen::Index>(data.n_samples());
  Eigen::MatrixXd m0(n, 9), m1(n, 9);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(9);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < 9; ++j) {
      const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
      m0(i, j) = e0.mu(ui, uj);
      m1(i, j) = e1.mu(ui, uj);
      var(j) += std::exp(e0.logvar(ui, uj)) / static_cast<double>(n);
    }
  }
  CHECK(m1.colwise().mean().cwiseAbs().maxCoeff() < 1e-9);
  const Eigen::MatrixXd c0 = m0.rowwise() - m0.colwise().mean();
  const Eigen::MatrixXd tt = c0.colPivHouseholderQr().solve(m1);
  CHECK((c0 * tt - m1).cwiseAbs().maxCoeff() < 1e-8);
  const Eigen::MatrixXd cov1 = m1.transpose() * m1 / static_cast<double>(n - 1);
  const Eigen::MatrixXd agg = cov1 + tt.transpose() * var.asDiagonal() * tt;
  CHECK((agg - Eigen::MatrixXd::Identity(9, 9)).cwiseAbs().maxCoeff() < 1e-8);

  // train() applies it by default
  cfg.calibrate_latent = true;
  const VaeModel direct = train(VaeModel::init(9, 3), data, cfg).model;
  CHECK(direct.parameters() == after.parameters());

  TrainingSet wrong = small_set(5);
  wrong.n_regions = 4;
  CHECK_THROWS_AS(calibrate_latent(after, wrong), Error);
}

TEST_CASE("moving average is a trailing window") {
  ElboTrace t;
  t.elbo = {1.0, 2.0, 3.0, 4.0, 5.0};
  const auto ma = t.moving_average(2);
  CHECK(ma == std::vector<double>{1.0, 1.5, 2.5, 3.5, 4.5});
}

TEST_CASE("dimension mismatch") {
  const TrainingSet data = small_set(10);
  try {
    train(VaeModel::init(4, 1), data, {});
    FAIL("expected DimMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DimMismatch);
  }
}

TEST_CASE("empty training set returns the initial model") {
  const TrainingSet data = small_set(0);
  const VaeModel m = VaeModel::init(9, 1);
  const TrainResult r = train(m, data, {});
  CHECK(r.trace.size() == 0);
  CHECK(r.model.parameters() == m.parameters());
}
