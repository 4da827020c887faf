#include "sae/vae.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <optional>

#include "sae/error.hpp"
#include "vae_internal.hpp"

namespace sae {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

ad::Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  ad::Tensor t(fan_in, fan_out);
  for (double& v : t.values()) v = u(rng);
  return t;
}

struct EncoderExprs {
  ad::Expr mu;
  ad::Expr logvar;
};

EncoderExprs encoder_expr(ad::Graph& g, ad::Expr x, std::size_t input, std::size_t hidden,
                          std::size_t latent) {
  const ad::Expr w1 = g.input("enc_w1", input, hidden);
  const ad::Expr b1 = g.input("enc_b1", 1, hidden);
  const ad::Expr wmu = g.input("enc_wmu", hidden, latent);
  const ad::Expr bmu = g.input("enc_bmu", 1, latent);
  const ad::Expr wlv = g.input("enc_wlv", hidden, latent);
  const ad::Expr blv = g.input("enc_blv", 1, latent);
  const ad::Expr h = g.elu(g.row_broadcast_add(g.matmul(x, w1), b1));
  return {g.row_broadcast_add(g.matmul(h, wmu), bmu),
          g.clamp(g.row_broadcast_add(g.matmul(h, wlv), blv), -kLogvarClamp, kLogvarClamp)};
}

void bind_parameters(ad::Bindings& b, const VaeModel& model) {
  for (const auto& [name, t] : model.parameters()) b.bind(name, t);
}

ad::Tensor rows_of(const RowMatrix& m, std::span<const std::size_t> rows) {
  const auto cols = static_cast<std::size_t>(m.cols());
  ad::Tensor t(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double* src = m.data() + rows[r] * cols;
    std::copy(src, src + cols, t.data() + r * cols);
  }
  return t;
}

ad::Tensor normal_tensor(std::size_t rows, std::size_t cols, Rng& rng) {
  ad::Tensor t(rows, cols);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

}  // namespace

const std::vector<std::string>& VaeModel::parameter_names() {
  static const std::vector<std::string> names{"enc_w1", "enc_b1", "enc_wmu", "enc_bmu",
                                              "enc_wlv", "enc_blv", "dec_w1", "dec_b1",
                                              "dec_wout", "dec_bout"};
  return names;
}

VaeModel VaeModel::init(std::size_t input_dim, std::uint64_t seed) {
  return init(input_dim, input_dim, input_dim, seed);
}

VaeModel VaeModel::init(std::size_t input_dim, std::size_t hidden_dim, std::size_t latent_dim,
                        std::uint64_t seed) {
  if (input_dim == 0 || hidden_dim == 0 || latent_dim == 0) {
    throw Error(ErrorKind::InvalidConfig, "VAE dimensions must be positive");
  }
  VaeModel m;
  m.input_dim_ = input_dim;
  m.hidden_dim_ = hidden_dim;
  m.latent_dim_ = latent_dim;
  m.alpha_ = 1.0 / static_cast<double>(latent_dim);
  Rng rng(seed);
  m.params_["enc_w1"] = glorot(input_dim, hidden_dim, rng);
  m.params_["enc_b1"] = ad::Tensor(1, hidden_dim);
  m.params_["enc_wmu"] = glorot(hidden_dim, latent_dim, rng);
  m.params_["enc_bmu"] = ad::Tensor(1, latent_dim);
  m.params_["enc_wlv"] = glorot(hidden_dim, latent_dim, rng);
  m.params_["enc_blv"] = ad::Tensor(1, latent_dim);
  m.params_["dec_w1"] = glorot(latent_dim, hidden_dim, rng);
  m.params_["dec_b1"] = ad::Tensor(1, hidden_dim);
  m.params_["dec_wout"] = glorot(hidden_dim, input_dim, rng);
  m.params_["dec_bout"] = ad::Tensor(1, input_dim);
  return m;
}

void VaeModel::set_alpha(double alpha) {
  if (!(alpha > 0.0)) throw Error(ErrorKind::InvalidConfig, "alpha must be positive");
  alpha_ = alpha;
}

Encoding encode(const VaeModel& model, const ad::Tensor& x) {
  if (x.cols() != model.input_dim()) {
    throw Error(ErrorKind::ShapeMismatch, "encoder expects " + std::to_string(model.input_dim()) +
                                              " columns, got " + std::to_string(x.cols()));
  }
  ad::Graph g;
  const ad::Expr xin = g.input("x", x.rows(), x.cols());
  const EncoderExprs e =
      encoder_expr(g, xin, model.input_dim(), model.hidden_dim(), model.latent_dim());
  ad::Bindings b;
  b.bind("x", x);
  bind_parameters(b, model);
  const std::vector<ad::Expr> outs{e.mu, e.logvar};
  auto values = g.evaluate_many(outs, b);
  return {std::move(values[0]), std::move(values[1])};
}

ad::Tensor reparameterize(const ad::Tensor& mu, const ad::Tensor& logvar, Rng& rng) {
  if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "mu and logvar shapes differ");
  }
  ad::Tensor z(mu.rows(), mu.cols());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double lv = std::clamp(logvar.data()[i], -kLogvarClamp, kLogvarClamp);
    z.data()[i] = mu.data()[i] + std::exp(0.5 * lv) * normal(rng);
  }
  return z;
}

ad::Tensor decode(const VaeModel& model, const ad::Tensor& z) {
  if (z.cols() != model.latent_dim()) {
    throw Error(ErrorKind::ShapeMismatch, "decoder expects " + std::to_string(model.latent_dim()) +
                                              " latent columns, got " + std::to_string(z.cols()));
  }
  ad::Graph g;
  const ad::Expr zin = g.input("z", z.rows(), z.cols());
  const ad::Expr out = detail::decoder_expr(
      g, zin, detail::decoder_inputs(g, model.latent_dim(), model.hidden_dim(), model.input_dim()));
  ad::Bindings b;
  b.bind("z", z);
  for (const auto& [name, t] : model.parameters()) {
    if (name.rfind("dec_", 0) == 0) b.bind(name, t);
  }
  return g.evaluate(out, b);
}

ElboGraph build_elbo_graph(std::size_t batch, std::size_t input_dim, std::size_t hidden_dim,
                           std::size_t latent_dim, double alpha, std::size_t draws) {
  if (batch == 0 || draws == 0) throw Error(ErrorKind::InvalidConfig, "empty ELBO batch");
  ElboGraph eg;
  ad::Graph& g = eg.graph;
  const ad::Expr x = g.input("x", batch, input_dim);
  const EncoderExprs enc = encoder_expr(g, x, input_dim, hidden_dim, latent_dim);
  const detail::DecoderWeights dec = detail::decoder_inputs(g, latent_dim, hidden_dim, input_dim);
  const ad::Expr sd = g.exp(g.scale(enc.logvar, 0.5));

  std::optional<ad::Expr> sq_err;
  for (std::size_t l = 0; l < draws; ++l) {
    const ad::Expr eps = g.input("eps" + std::to_string(l), batch, latent_dim);
    const ad::Expr z = g.add(enc.mu, g.multiply(sd, eps));
    const ad::Expr xhat = detail::decoder_expr(g, z, dec);
    const ad::Expr term = g.sum(g.square(g.subtract(x, xhat)));
    sq_err = sq_err ? g.add(*sq_err, term) : term;
  }
  const double m = static_cast<double>(batch);
  const double l = static_cast<double>(draws);
  eg.recon = g.add(g.scale(*sq_err, -0.5 / (m * l)),
                   g.constant(ad::Tensor::scalar(-0.5 * static_cast<double>(input_dim) * kLog2Pi)));
  const ad::Expr neg_kl_sum =
      g.sum(g.subtract(g.subtract(enc.logvar, g.square(enc.mu)), g.exp(enc.logvar)));
  eg.kl = g.add(g.scale(neg_kl_sum, -0.5 / m),
                g.constant(ad::Tensor::scalar(-0.5 * static_cast<double>(latent_dim))));
  eg.elbo = g.add(eg.recon, g.scale(eg.kl, -alpha));
  return eg;
}

ElboValue elbo_with_noise(const VaeModel& model, const ad::Tensor& batch,
                          const std::vector<ad::Tensor>& noise) {
  if (batch.cols() != model.input_dim()) {
    throw Error(ErrorKind::ShapeMismatch, "batch width does not match the model");
  }
  const ElboGraph eg = build_elbo_graph(batch.rows(), model.input_dim(), model.hidden_dim(),
                                        model.latent_dim(), model.alpha(), noise.size());
  ad::Bindings b;
  b.bind("x", batch);
  for (std::size_t l = 0; l < noise.size(); ++l) b.bind("eps" + std::to_string(l), noise[l]);
  bind_parameters(b, model);
  const std::vector<ad::Expr> outs{eg.elbo, eg.kl, eg.recon};
  const auto v = eg.graph.evaluate_many(outs, b);
  return {v[0].item(), v[1].item(), v[2].item()};
}

ElboValue elbo(const VaeModel& model, const ad::Tensor& batch, Rng& rng, std::size_t draws) {
  std::vector<ad::Tensor> noise;
  for (std::size_t l = 0; l < draws; ++l) {
    noise.push_back(normal_tensor(batch.rows(), model.latent_dim(), rng));
  }
  return elbo_with_noise(model, batch, noise);
}

std::vector<double> ElboTrace::moving_average(std::size_t window) const {
  std::vector<double> out(elbo.size());
  double running = 0.0;
  for (std::size_t t = 0; t < elbo.size(); ++t) {
    running += elbo[t];
    if (t >= window) running -= elbo[t - window];
    out[t] = running / static_cast<double>(std::min(t + 1, window));
  }
  return out;
}

TrainResult train(const VaeModel& initial, const TrainingSet& data, const TrainConfig& config) {
  if (data.dim() != initial.input_dim()) {
    throw Error(ErrorKind::DimMismatch, "training data has dimension " + std::to_string(data.dim()) +
                                            ", model expects " +
                                            std::to_string(initial.input_dim()));
  }
  if (config.batch_size == 0 || config.mc_draws == 0) {
    throw Error(ErrorKind::InvalidConfig, "batch size and draw count must be positive");
  }
  TrainResult result{initial, {}};
  const std::size_t n = data.n_samples();
  if (n == 0) return result;

  VaeModel model = initial;
  const std::size_t j = model.latent_dim();
  const auto& names = VaeModel::parameter_names();
  std::map<std::string, ad::Tensor> m1, m2;
  for (const auto& [name, t] : model.parameters()) {
    m1[name] = ad::Tensor(t.rows(), t.cols());
    m2[name] = ad::Tensor(t.rows(), t.cols());
  }
  std::map<std::size_t, ElboGraph> graphs;
  auto graph_for = [&](std::size_t batch) -> const ElboGraph& {
    auto it = graphs.find(batch);
    if (it == graphs.end()) {
      it = graphs
               .emplace(batch, build_elbo_graph(batch, model.input_dim(), model.hidden_dim(), j,
                                                model.alpha(), config.mc_draws))
               .first;
    }
    return it->second;
  };

  Rng rng(substream_seed(config.seed, 0));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> in_order = order;
  std::uint64_t step = 0;
  double best_elbo = -std::numeric_limits<double>::infinity();
  double best_ma = -std::numeric_limits<double>::infinity();
  std::size_t since_best_ma = 0;
  const ad::Tensor one = ad::Tensor::scalar(1.0);

  double lr = config.learning_rate;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch, lr *= config.lr_decay) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t bs = std::min(config.batch_size, n - start);
      const ElboGraph& eg = graph_for(bs);
      const ad::Tensor x = rows_of(data.samples, std::span(order).subspan(start, bs));
      std::vector<ad::Tensor> noise;
      for (std::size_t l = 0; l < config.mc_draws; ++l) noise.push_back(normal_tensor(bs, j, rng));
      ad::Bindings b;
      b.bind("x", x);
      for (std::size_t l = 0; l < noise.size(); ++l) b.bind("eps" + std::to_string(l), noise[l]);
      bind_parameters(b, model);
      const ad::Graph::Tape tape = eg.graph.record(eg.elbo, b);
      const double value = tape.value().data[0];
      if (!std::isfinite(value)) {
        throw Error(ErrorKind::NonFiniteLoss, "ELBO became non-finite at epoch " +
                                                  std::to_string(epoch) + ", batch offset " +
                                                  std::to_string(start));
      }
      const auto grads = eg.graph.pullback(tape, one, names);
      ++step;
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      for (const std::string& name : names) {
        const ad::Tensor& g = grads.at(name);
        double* p = model.parameters()[name].data();
        double* a = m1[name].data();
        double* v = m2[name].data();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double gi = g.data()[i];
          if (!std::isfinite(gi)) {
            throw Error(ErrorKind::NonFiniteLoss, "non-finite gradient for " + name);
          }
          a[i] = config.beta1 * a[i] + (1.0 - config.beta1) * gi;
          v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
          p[i] += lr * (a[i] / c1) / (std::sqrt(v[i] / c2) + config.adam_epsilon);
        }
      }
    }

    // full-data evaluation with the same noise every epoch
    Rng eval_rng(substream_seed(config.seed, 1));
    double sum_elbo = 0.0, sum_kl = 0.0, sum_recon = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t bs = std::min(config.batch_size, n - start);
      const ad::Tensor x = rows_of(data.samples, std::span(in_order).subspan(start, bs));
      std::vector<ad::Tensor> noise;
      for (std::size_t l = 0; l < config.mc_draws; ++l) noise.push_back(normal_tensor(bs, j, eval_rng));
      const ElboValue ev = elbo_with_noise(model, x, noise);
      const double w = static_cast<double>(bs);
      sum_elbo += w * ev.elbo;
      sum_kl += w * ev.kl;
      sum_recon += w * ev.recon;
    }
    const double nn = static_cast<double>(n);
    result.trace.elbo.push_back(sum_elbo / nn);
    result.trace.kl.push_back(sum_kl / nn);
    result.trace.recon.push_back(sum_recon / nn);
    if (!std::isfinite(result.trace.elbo.back())) {
      throw Error(ErrorKind::NonFiniteLoss, "evaluation ELBO non-finite at epoch " + std::to_string(epoch));
    }
    if (config.verbose) {
      std::cerr << "epoch " << epoch << " elbo " << result.trace.elbo.back() << " kl "
                << result.trace.kl.back() << " recon " << result.trace.recon.back() << '\n';
    }
    if (result.trace.elbo.back() > best_elbo) {
      best_elbo = result.trace.elbo.back();
      result.model = model;
      result.trace.best_epoch = epoch;
    }
    const double ma = result.trace.moving_average(config.moving_average_window).back();
    if (ma > best_ma) {
      best_ma = ma;
      since_best_ma = 0;
    } else if (++since_best_ma >= config.patience) {
      result.trace.stopped_early = true;
      break;
    }
  }
  if (config.calibrate_latent) calibrate_latent(result.model, data);
  return result;
}

void calibrate_latent(VaeModel& model, const TrainingSet& data) {
  using Map = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  const std::size_t n = data.n_samples();
  if (n < 2) return;
  if (data.dim() != model.input_dim()) {
    throw Error(ErrorKind::DimMismatch, "training set dimension does not match the model");
  }
  const auto j = static_cast<Eigen::Index>(model.latent_dim());
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  Encoding e = encode(model, rows_of(data.samples, all));
  const Map mu(e.mu.data(), static_cast<Eigen::Index>(n), j);
  const Map logvar(e.logvar.data(), static_cast<Eigen::Index>(n), j);
  const Eigen::RowVectorXd m = mu.colwise().mean();
  const Eigen::MatrixXd centred = mu.rowwise() - m;
  Eigen::MatrixXd s = centred.transpose() * centred / static_cast<double>(n - 1);
  s.diagonal() += logvar.array().exp().colwise().mean().matrix().transpose();
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) return;  // degenerate encoder; nothing to rescale
  const Eigen::MatrixXd l = llt.matrixL();

  auto& p = model.parameters();
  Map w1(p.at("dec_w1").data(), j, static_cast<Eigen::Index>(model.hidden_dim()));
  Map b1(p.at("dec_b1").data(), 1, static_cast<Eigen::Index>(model.hidden_dim()));
  b1 += m * w1;
  w1 = (l.transpose() * w1).eval();
  // mean head: mu' = (mu - m) L^-T, i.e. W' = W L^-T, b' = (b - m) L^-T
  Map wmu(p.at("enc_wmu").data(), static_cast<Eigen::Index>(model.hidden_dim()), j);
  Map bmu(p.at("enc_bmu").data(), 1, j);
  const auto lt = l.transpose().triangularView<Eigen::Upper>();
  wmu = lt.solve<Eigen::OnTheRight>(Eigen::MatrixXd(wmu));
  bmu = lt.solve<Eigen::OnTheRight>(Eigen::MatrixXd(bmu.rowwise() - m));
}

}  // namespace sae
