#include "sae/study.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "sae/error.hpp"
#include "sae/fit.hpp"
#include "sae/harness.hpp"

namespace sae {
namespace {

using nlohmann::json;

constexpr double kZ95 = 1.959963984540054;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw Error(ErrorKind::InvalidConfig, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

struct Subset {
  // per response, metrics restricted to the flagged cells
  std::vector<double> rmse, is, cov;
};

Subset score(const Eigen::MatrixXd& est, const Eigen::MatrixXd& lo, const Eigen::MatrixXd& hi,
             const Eigen::MatrixXd& truth, const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& use) {
  Subset s;
  for (Eigen::Index k = 0; k < truth.cols(); ++k) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < truth.rows(); ++i) {
      if (use(i, k)) rows.push_back(i);
    }
    const auto m = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd e(m, 1), l(m, 1), h(m, 1), t(m, 1);
    for (Eigen::Index r = 0; r < m; ++r) {
      const Eigen::Index i = rows[static_cast<std::size_t>(r)];
      e(r, 0) = est(i, k);
      l(r, 0) = lo(i, k);
      h(r, 0) = hi(i, k);
      t(r, 0) = truth(i, k);
    }
    s.rmse.push_back(rmse(e, t)(0));
    s.is.push_back(interval_score(l, h, t)(0));
    s.cov.push_back(coverage(l, h, t)(0));
  }
  return s;
}

struct ReplicateResult {
  // per estimator (direct + models)
  std::vector<std::optional<Subset>> metrics;
  std::vector<double> seconds;
  std::vector<std::string> errors;
  std::vector<double> masked_rmse, column_mean_rmse;
  std::vector<std::size_t> divergences;
  std::vector<double> max_rhat;
};

StudyTruth truth_from_file(const SimulationConfig& config) {
  std::ifstream gin(config.graph_file);
  if (!gin) throw Error(ErrorKind::Io, "cannot read " + config.graph_file);
  std::stringstream gs;
  gs << gin.rdbuf();
  StudyTruth t{RegionGraph::from_edge_list(gs.str()), {}, {}, {}, {}, {}};
  std::ifstream in(config.truth_file);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + config.truth_file);
  std::string line;
  std::getline(in, line);
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "region_id") throw Error(ErrorKind::Parse, "truth header must start with region_id");
  std::vector<int> theta_cols, gamma_cols, x_cols;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h.rfind("theta_", 0) == 0) {
      t.responses.push_back(h.substr(6));
      theta_cols.push_back(static_cast<int>(c));
    } else if (h.rfind("gamma_", 0) == 0) {
      gamma_cols.push_back(static_cast<int>(c));
    } else if (h.rfind("x_", 0) == 0) {
      t.covariates.push_back(h.substr(2));
      x_cols.push_back(static_cast<int>(c));
    } else {
      throw Error(ErrorKind::Parse, "unrecognized truth column '" + h + "'");
    }
  }
  if (theta_cols.empty() || theta_cols.size() != gamma_cols.size()) {
    throw Error(ErrorKind::Parse, "truth file needs matching theta_ and gamma_ columns");
  }
  const auto n = static_cast<Eigen::Index>(t.graph.size());
  t.theta.resize(n, static_cast<Eigen::Index>(theta_cols.size()));
  t.gamma.resizeLike(t.theta);
  t.x.resize(n, static_cast<Eigen::Index>(x_cols.size()));
  std::vector<bool> seen(t.graph.size(), false);
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw Error(ErrorKind::Parse, "truth row has the wrong field count");
    const auto i = static_cast<Eigen::Index>(t.graph.index_of(f[0]));
    seen[static_cast<std::size_t>(i)] = true;
    for (std::size_t c = 0; c < theta_cols.size(); ++c) {
      t.theta(i, static_cast<Eigen::Index>(c)) = std::stod(f[static_cast<std::size_t>(theta_cols[c])]);
      t.gamma(i, static_cast<Eigen::Index>(c)) = std::stod(f[static_cast<std::size_t>(gamma_cols[c])]);
    }
    for (std::size_t c = 0; c < x_cols.size(); ++c) {
      t.x(i, static_cast<Eigen::Index>(c)) = std::stod(f[static_cast<std::size_t>(x_cols[c])]);
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw Error(ErrorKind::ShapeMismatch, "truth file does not cover every region");
  }
  DirectEstimateTable tmp;
  tmp.x = t.x;
  tmp.covariates = t.covariates;
  ensure_intercept(tmp);
  t.x = tmp.x;
  t.covariates = tmp.covariates;
  return t;
}

}  // namespace

void SimulationConfig::validate() const {
  if (n_replicates == 0) throw Error(ErrorKind::InvalidConfig, "n_replicates must be at least 1");
  if (models.empty()) throw Error(ErrorKind::InvalidConfig, "no models requested");
  if (!(missing_fraction >= 0.0 && missing_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "missing_fraction must lie in [0, 1)");
  }
  if (truth_file.empty()) {
    if (truth.rows * truth.cols < 2) throw Error(ErrorKind::InvalidConfig, "lattice too small");
    if (truth.k == 0 || truth.k > 2) throw Error(ErrorKind::InvalidConfig, "synthetic truth supports K = 1 or 2");
    if (!(truth.gamma_low > 0.0) || truth.gamma_high < truth.gamma_low) {
      throw Error(ErrorKind::InvalidConfig, "gamma_range must be positive and ordered");
    }
    if (truth.beta.size() != 0 &&
        (truth.beta.rows() != static_cast<Eigen::Index>(truth.n_covariates + 1) ||
         truth.beta.cols() != static_cast<Eigen::Index>(truth.k))) {
      throw Error(ErrorKind::InvalidConfig, "beta must have one row per coefficient and one column per response");
    }
  } else if (graph_file.empty()) {
    throw Error(ErrorKind::InvalidConfig, "truth_file needs graph_file");
  }
  hmc.validate();
  if (workers == 0) throw Error(ErrorKind::InvalidConfig, "workers must be positive");
}

SimulationConfig parse_simulation_config(const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::InvalidConfig, "configuration is not a JSON object");
  SimulationConfig c;
  try {
    check_keys(j, {"seed", "n_replicates", "models", "missing_fraction", "workers", "gmcar_phi2",
                   "truth", "truth_file", "graph_file", "hmc", "decoders", "training"},
               "study configuration");
    read_opt(j, "seed", c.seed);
    read_opt(j, "n_replicates", c.n_replicates);
    read_opt(j, "missing_fraction", c.missing_fraction);
    read_opt(j, "workers", c.workers);
    read_opt(j, "gmcar_phi2", c.gmcar_phi2);
    read_opt(j, "truth_file", c.truth_file);
    read_opt(j, "graph_file", c.graph_file);
    if (j.contains("models")) {
      c.models.clear();
      for (const auto& m : j.at("models")) c.models.push_back(parse_model_kind(m.get<std::string>()));
    }
    if (j.contains("truth")) {
      const json& t = j.at("truth");
      check_keys(t, {"rows", "cols", "k", "n_covariates", "beta", "rho1", "rho2", "sigma1_sq",
                     "sigma2_sq", "eta0", "eta1", "gamma_range"},
                 "truth");
      read_opt(t, "rows", c.truth.rows);
      read_opt(t, "cols", c.truth.cols);
      read_opt(t, "k", c.truth.k);
      read_opt(t, "n_covariates", c.truth.n_covariates);
      read_opt(t, "rho1", c.truth.spatial.rho1);
      read_opt(t, "rho2", c.truth.spatial.rho2);
      read_opt(t, "sigma1_sq", c.truth.spatial.sigma1_sq);
      read_opt(t, "sigma2_sq", c.truth.spatial.sigma2_sq);
      read_opt(t, "eta0", c.truth.spatial.eta0);
      read_opt(t, "eta1", c.truth.spatial.eta1);
      if (t.contains("gamma_range")) {
        const auto r = t.at("gamma_range").get<std::vector<double>>();
        if (r.size() != 2) throw Error(ErrorKind::InvalidConfig, "gamma_range needs two numbers");
        c.truth.gamma_low = r[0];
        c.truth.gamma_high = r[1];
      }
      if (t.contains("beta")) {
        // one list of coefficients per response
        const auto b = t.at("beta").get<std::vector<std::vector<double>>>();
        if (b.empty()) throw Error(ErrorKind::InvalidConfig, "beta is empty");
        c.truth.beta.resize(static_cast<Eigen::Index>(b.front().size()), static_cast<Eigen::Index>(b.size()));
        for (std::size_t k = 0; k < b.size(); ++k) {
          if (b[k].size() != b.front().size()) throw Error(ErrorKind::InvalidConfig, "ragged beta");
          for (std::size_t p = 0; p < b[k].size(); ++p) {
            c.truth.beta(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k)) = b[k][p];
          }
        }
      }
    }
    if (j.contains("hmc")) {
      const json& h = j.at("hmc");
      check_keys(h, {"iterations", "burnin", "chains", "target_accept", "max_leapfrog_steps",
                     "init_jitter", "parallel_chains", "gradient_check_points"},
                 "hmc");
      read_opt(h, "iterations", c.hmc.n_iterations);
      read_opt(h, "burnin", c.hmc.n_burnin);
      read_opt(h, "chains", c.hmc.n_chains);
      read_opt(h, "target_accept", c.hmc.target_accept);
      read_opt(h, "max_leapfrog_steps", c.hmc.max_leapfrog_steps);
      read_opt(h, "init_jitter", c.hmc.init_jitter);
      read_opt(h, "parallel_chains", c.hmc.parallel_chains);
      read_opt(h, "gradient_check_points", c.hmc.gradient_check_points);
    }
    if (j.contains("decoders")) {
      for (const auto& [model, path] : j.at("decoders").items()) {
        c.decoder_files[parse_model_kind(model)] = path.get<std::string>();
      }
    }
    if (j.contains("training")) {
      const json& t = j.at("training");
      check_keys(t, {"samples", "epochs", "batch_size", "learning_rate", "patience", "seed", "lr_decay"}, "training");
      read_opt(t, "samples", c.training_samples);
      read_opt(t, "epochs", c.training.epochs);
      read_opt(t, "batch_size", c.training.batch_size);
      read_opt(t, "learning_rate", c.training.learning_rate);
      read_opt(t, "patience", c.training.patience);
      read_opt(t, "seed", c.training.seed);
      read_opt(t, "lr_decay", c.training.lr_decay);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("bad configuration value: ") + e.what());
  }
  c.validate();
  return c;
}

SimulationConfig load_simulation_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_simulation_config(ss.str());
}

StudyTruth make_truth(const SimulationConfig& config) {
  if (!config.truth_file.empty()) return truth_from_file(config);
  const SyntheticTruth& st = config.truth;
  StudyTruth t{RegionGraph::lattice(st.rows, st.cols), {}, {}, {}, {}, {}};
  const auto n = static_cast<Eigen::Index>(t.graph.size());
  const auto k = static_cast<Eigen::Index>(st.k);
  const auto p = static_cast<Eigen::Index>(st.n_covariates + 1);
  Rng rng(substream_seed(config.seed, 1));
  t.x.resize(n, p);
  t.x.col(0).setOnes();
  for (Eigen::Index c = 1; c < p; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) t.x(i, c) = standard_normal(rng);
  }
  t.covariates.push_back("intercept");
  for (Eigen::Index c = 1; c < p; ++c) t.covariates.push_back("x" + std::to_string(c));
  Eigen::MatrixXd beta = st.beta;
  if (beta.size() == 0) {
    beta = Eigen::MatrixXd::Constant(p, k, 0.5);
    beta.row(0).setOnes();
  }
  const CarStructure cs(t.graph);
  Eigen::MatrixXd phi(n, k);
  if (k == 2) {
    const GmcarSample g = sample_gmcar(cs, st.spatial, 1, rng);
    const auto phi2 = static_cast<Eigen::Index>(std::min<std::size_t>(config.gmcar_phi2, 1));
    phi.col(phi2) = g.phi2.col(0);
    phi.col(1 - phi2) = g.phi1.col(0);
  } else {
    phi.col(0) = sample_car(cs, st.spatial.rho2, st.spatial.sigma2_sq, 1, rng).values.col(0);
  }
  t.theta = t.x * beta + phi;
  t.gamma.resize(n, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      t.gamma(i, c) = st.gamma_low + (st.gamma_high - st.gamma_low) * uniform01(rng);
    }
    t.responses.push_back("y" + std::to_string(c + 1));
  }
  return t;
}

std::shared_ptr<const Decoder> train_decoder(const RegionGraph& graph, ModelKind kind, std::size_t k,
                                             std::size_t n_samples, const TrainConfig& config) {
  if (!is_variational(kind)) throw Error(ErrorKind::InvalidConfig, to_string(kind) + " has no decoder");
  const TrainingLayout layout = kind == ModelKind::VSMS ? TrainingLayout::Vectorized : TrainingLayout::Univariate;
  const std::size_t kk = layout == TrainingLayout::Vectorized ? k : 1;
  const CarStructure cs(graph);
  TrainingSet data = generate_training_set(cs, n_samples, layout, kk, config.seed);
  const TrainResult r = train(VaeModel::init(data.dim(), substream_seed(config.seed, 3)), data, config);
  DecoderMetadata meta;
  meta.graph_hash = graph.content_hash();
  meta.layout = layout;
  meta.n_regions = graph.size();
  meta.k = kk;
  meta.training_seed = config.seed;
  meta.n_samples = n_samples;
  meta.final_elbo = r.trace.elbo.empty() ? 0.0 : r.trace.elbo[r.trace.best_epoch];
  return std::make_shared<const Decoder>(Decoder::from_model(r.model, meta));
}

MetricsReport run_study(const SimulationConfig& config) {
  config.validate();
  std::map<ModelKind, std::shared_ptr<const Decoder>> decoders;
  for (ModelKind m : config.models) {
    if (!is_variational(m) || decoders.count(m)) continue;
    auto it = config.decoder_files.find(m);
    if (it != config.decoder_files.end()) {
      decoders[m] = std::make_shared<const Decoder>(load_decoder(it->second));
    }
  }
  bool need_training = false;
  for (ModelKind m : config.models) need_training |= is_variational(m) && !decoders.count(m);
  if (need_training) {
    const StudyTruth truth = make_truth(config);
    for (ModelKind m : config.models) {
      if (is_variational(m) && !decoders.count(m)) {
        decoders[m] = train_decoder(truth.graph, m, static_cast<std::size_t>(truth.theta.cols()),
                                    config.training_samples, config.training);
      }
    }
  }
  return run_study(config, decoders);
}

MetricsReport run_study(const SimulationConfig& config,
                        const std::map<ModelKind, std::shared_ptr<const Decoder>>& decoders) {
  config.validate();
  const StudyTruth truth = make_truth(config);
  const auto n = truth.theta.rows();
  const auto k = truth.theta.cols();
  const auto p = truth.x.cols();
  const Eigen::MatrixXd truth_orig = truth.theta.array().exp().matrix();
  const std::size_t n_est = config.models.size() + 1;

  std::vector<ReplicateResult> results(config.n_replicates);
  auto replicate = [&](std::size_t r) {
    ReplicateResult& res = results[r];
    res.metrics.resize(n_est);
    res.seconds.assign(n_est, 0.0);
    res.errors.resize(n_est);
    res.masked_rmse.assign(n_est, std::nan(""));
    res.column_mean_rmse.assign(n_est, std::nan(""));
    res.divergences.assign(n_est, 0);
    res.max_rhat.assign(n_est, std::nan(""));

    Rng rng(substream_seed(config.seed, 100 + r));
    const Eigen::MatrixXd y = simulate_direct(truth.theta, truth.gamma, rng);
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> masked = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, k, false);
    if (config.missing_fraction > 0.0) {
      std::vector<Eigen::Index> cells(static_cast<std::size_t>(n * k));
      std::iota(cells.begin(), cells.end(), Eigen::Index{0});
      std::shuffle(cells.begin(), cells.end(), rng);
      const auto m = static_cast<std::size_t>(std::round(config.missing_fraction * static_cast<double>(n * k)));
      for (std::size_t c = 0; c < m; ++c) masked(cells[c] % n, cells[c] / n) = true;
    }
    DirectEstimateTable table;
    table.region_ids = truth.graph.ids();
    table.responses = truth.responses;
    table.covariates = truth.covariates;
    table.x = truth.x;
    table.y = y;
    table.gamma = truth.gamma;
    for (Eigen::Index kk = 0; kk < k; ++kk) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (masked(i, kk)) table.y(i, kk) = table.gamma(i, kk) = std::nan("");
      }
      if ((!masked.col(kk)).count() <= p) {
        for (auto& e : res.errors) e = "too few observed cells in a response";
        return;
      }
    }

    // direct estimates with +-1.96 gamma intervals, on observed cells
    const Eigen::MatrixXd d_lo = (y - kZ95 * truth.gamma).array().exp().matrix();
    const Eigen::MatrixXd d_hi = (y + kZ95 * truth.gamma).array().exp().matrix();
    res.metrics[0] = score(y.array().exp().matrix(), d_lo, d_hi, truth_orig, !masked);

    Eigen::VectorXd column_mean(k);
    for (Eigen::Index kk = 0; kk < k; ++kk) {
      double s = 0.0;
      Eigen::Index c = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!masked(i, kk)) {
          s += std::exp(y(i, kk));
          ++c;
        }
      }
      column_mean(kk) = s / static_cast<double>(c);
    }

    for (std::size_t m = 0; m < config.models.size(); ++m) {
      const ModelKind kind = config.models[m];
      const std::size_t slot = m + 1;
      try {
        ModelSpec spec;
        spec.kind = kind;
        spec.k = static_cast<std::size_t>(k);
        spec.gmcar_phi2 = config.gmcar_phi2;
        std::shared_ptr<const Decoder> dec;
        if (is_variational(kind)) {
          auto it = decoders.find(kind);
          if (it == decoders.end()) throw Error(ErrorKind::InvalidConfig, "no decoder for " + to_string(kind));
          dec = it->second;
        }
        HmcConfig hmc = config.hmc;
        hmc.seed = substream_seed(config.seed, 10000 + 64 * r + m);
        const auto t0 = std::chrono::steady_clock::now();
        const FhTarget target = build_target(spec, table, truth.graph, dec);
        const FitResult fr = fit(target, hmc);
        const ThetaSummary s = summarize_theta(target, fr.draws);
        res.seconds[slot] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.divergences[slot] = fr.draws.total_divergences();
        if (fr.diagnostics) res.max_rhat[slot] = fr.diagnostics->max_rhat();
        const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> all =
            Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, k, true);
        res.metrics[slot] = score(s.mean_orig, s.q025_orig, s.q975_orig, truth_orig, all);
        if (masked.any()) {
          double se_model = 0.0, se_base = 0.0;
          for (Eigen::Index kk = 0; kk < k; ++kk) {
            for (Eigen::Index i = 0; i < n; ++i) {
              if (!masked(i, kk)) continue;
              se_model += std::pow(s.mean_orig(i, kk) - truth_orig(i, kk), 2);
              se_base += std::pow(column_mean(kk) - truth_orig(i, kk), 2);
            }
          }
          const double cnt = static_cast<double>(masked.count());
          res.masked_rmse[slot] = std::sqrt(se_model / cnt);
          res.column_mean_rmse[slot] = std::sqrt(se_base / cnt);
        }
      } catch (const std::exception& e) {
        res.errors[slot] = e.what();
      }
    }
  };

  if (config.workers > 1) {
    std::mutex mu;
    std::size_t next = 0;
    auto worker = [&] {
      for (;;) {
        std::size_t r;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (next >= config.n_replicates) return;
          r = next++;
        }
        replicate(r);
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(config.workers, config.n_replicates); ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  } else {
    for (std::size_t r = 0; r < config.n_replicates; ++r) replicate(r);
  }

  MetricsReport report;
  report.responses = truth.responses;
  report.n_replicates = config.n_replicates;
  report.seed = config.seed;
  for (std::size_t e = 0; e < n_est; ++e) {
    EstimatorMetrics em;
    em.name = e == 0 ? "direct" : to_string(config.models[e - 1]);
    const auto kk = static_cast<std::size_t>(k);
    em.rmse.assign(kk, 0.0);
    em.interval_score.assign(kk, 0.0);
    em.coverage.assign(kk, 0.0);
    std::size_t ok = 0;
    for (std::size_t r = 0; r < config.n_replicates; ++r) {
      const ReplicateResult& res = results[r];
      if (!res.metrics[e]) {
        em.failures.push_back("replicate " + std::to_string(r) + ": " + res.errors[e]);
        continue;
      }
      ++ok;
      const Subset& s = *res.metrics[e];
      em.rmse_raw.push_back(s.rmse);
      em.interval_score_raw.push_back(s.is);
      em.coverage_raw.push_back(s.cov);
      em.seconds.push_back(res.seconds[e]);
      for (std::size_t c = 0; c < kk; ++c) {
        em.rmse[c] += s.rmse[c];
        em.interval_score[c] += s.is[c];
        em.coverage[c] += s.cov[c];
      }
      if (!std::isnan(res.masked_rmse[e])) {
        em.masked_rmse_raw.push_back(res.masked_rmse[e]);
        em.column_mean_rmse_raw.push_back(res.column_mean_rmse[e]);
      }
      em.divergences += res.divergences[e];
      if (!std::isnan(res.max_rhat[e])) em.max_rhat = std::max(em.max_rhat, res.max_rhat[e]);
    }
    for (std::size_t c = 0; c < kk; ++c) {
      const double d = ok > 0 ? static_cast<double>(ok) : std::nan("");
      em.rmse[c] /= d;
      em.interval_score[c] /= d;
      em.coverage[c] /= d;
    }
    report.estimators.push_back(std::move(em));
  }
  return report;
}

const EstimatorMetrics& MetricsReport::at(const std::string& name) const {
  for (const auto& e : estimators) {
    if (e.name == name) return e;
  }
  throw Error(ErrorKind::InvalidConfig, "no estimator named " + name);
}

std::string MetricsReport::to_json(bool include_timing) const {
  json est = json::array();
  for (const auto& e : estimators) {
    json j = {{"name", e.name},
              {"rmse", e.rmse},
              {"interval_score", e.interval_score},
              {"coverage", e.coverage},
              {"replicates", e.rmse_raw.size()},
              {"failures", e.failures},
              {"divergences", e.divergences},
              {"max_rhat", e.max_rhat},
              {"per_replicate", {{"rmse", e.rmse_raw}, {"interval_score", e.interval_score_raw}, {"coverage", e.coverage_raw}}}};
    if (!e.masked_rmse_raw.empty()) {
      j["interpolation"] = {{"masked_rmse", e.masked_rmse_raw}, {"column_mean_rmse", e.column_mean_rmse_raw}};
    }
    if (include_timing) {
      double mean = 0.0;
      for (double s : e.seconds) mean += s;
      j["seconds_mean"] = e.seconds.empty() ? 0.0 : mean / static_cast<double>(e.seconds.size());
      j["per_replicate"]["seconds"] = e.seconds;
    }
    est.push_back(std::move(j));
  }
  const json out = {{"scale", "original"},
                    {"responses", responses},
                    {"n_replicates", n_replicates},
                    {"seed", seed},
                    {"estimators", est}};
  return out.dump(2);
}

std::string MetricsReport::to_csv(bool include_timing) const {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "estimator,response,rmse,interval_score,coverage" << (include_timing ? ",seconds" : "")
      << ",replicates,failures\n";
  for (const auto& e : estimators) {
    double mean = 0.0;
    for (double s : e.seconds) mean += s;
    if (!e.seconds.empty()) mean /= static_cast<double>(e.seconds.size());
    for (std::size_t c = 0; c < responses.size(); ++c) {
      out << e.name << ',' << responses[c] << ',' << e.rmse[c] << ',' << e.interval_score[c] << ','
          << e.coverage[c];
      if (include_timing) out << ',' << mean;
      out << ',' << e.rmse_raw.size() << ',' << e.failures.size() << '\n';
    }
  }
  return out.str();
}

}  // namespace sae
