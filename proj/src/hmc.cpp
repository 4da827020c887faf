#include "sae/hmc.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "sae/error.hpp"

namespace sae {

std::vector<ParameterBlock> TargetDensity::blocks() const { return {{"q", 0, dimension()}}; }

std::vector<double> TargetDensity::initial_point() const {
  return std::vector<double>(dimension(), 0.0);
}

void HmcConfig::validate() const {
  if (n_iterations == 0 || n_burnin >= n_iterations) {
    throw Error(ErrorKind::InvalidConfig, "need 0 <= burn-in < iterations");
  }
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "target_accept must lie in (0, 1)");
  }
  if (n_chains == 0 || max_leapfrog_steps == 0) {
    throw Error(ErrorKind::InvalidConfig, "chains and leapfrog steps must be positive");
  }
  if (!(initial_step_size > 0.0) || !(init_jitter >= 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "step size must be positive and jitter non-negative");
  }
}

std::vector<double> PosteriorDraws::trace(std::size_t c, std::size_t j) const {
  std::vector<double> out(n_kept);
  for (std::size_t t = 0; t < n_kept; ++t) out[t] = value(c, t, j);
  return out;
}

std::size_t PosteriorDraws::total_divergences() const {
  return std::accumulate(divergences.begin(), divergences.end(), std::size_t{0});
}

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Integrates in place. `grad` and `logp` hold the values at q on entry and on
// return. Returns false as soon as anything becomes non-finite.
bool integrate(const TargetDensity& target, std::span<double> q, std::span<double> p,
               std::span<double> grad, double& logp, double eps, std::size_t n_steps,
               std::span<const double> inv_mass) {
  const std::size_t d = q.size();
  for (std::size_t s = 0; s < n_steps; ++s) {
    for (std::size_t j = 0; j < d; ++j) p[j] += 0.5 * eps * grad[j];
    for (std::size_t j = 0; j < d; ++j) q[j] += eps * (inv_mass.empty() ? p[j] : inv_mass[j] * p[j]);
    logp = target.log_density_gradient(q, grad);
    if (!std::isfinite(logp) || !all_finite(grad)) return false;
    for (std::size_t j = 0; j < d; ++j) p[j] += 0.5 * eps * grad[j];
  }
  return all_finite(q) && all_finite(p);
}

double kinetic(std::span<const double> p, std::span<const double> inv_mass) {
  double k = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) k += p[j] * p[j] * inv_mass[j];
  return 0.5 * k;
}

// Step-size adaptation by dual averaging on the acceptance statistic.
class DualAveraging {
 public:
  DualAveraging(double target, double eps) : target_(target) { restart(eps); }
  void restart(double eps) {
    mu_ = std::log(10.0 * eps);
    h_bar_ = 0.0;
    log_eps_bar_ = 0.0;
    t_ = 0;
    log_eps_ = std::log(eps);
  }
  double update(double accept) {
    ++t_;
    const double t = static_cast<double>(t_);
    const double w = 1.0 / (t + kT0);
    h_bar_ = (1.0 - w) * h_bar_ + w * (target_ - accept);
    log_eps_ = mu_ - std::sqrt(t) / kGamma * h_bar_;
    const double eta = std::pow(t, -kKappa);
    log_eps_bar_ = eta * log_eps_ + (1.0 - eta) * log_eps_bar_;
    return std::exp(log_eps_);
  }
  double final_step() const { return t_ == 0 ? std::exp(log_eps_) : std::exp(log_eps_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
  double target_;
  double mu_ = 0.0, h_bar_ = 0.0, log_eps_bar_ = 0.0, log_eps_ = 0.0;
  std::size_t t_ = 0;
};

struct ChainState {
  std::vector<double> q, grad;
  double logp = 0.0;
};

// Doubles or halves eps until a single step's acceptance crosses 1/2.
double find_reasonable_step(const TargetDensity& target, const ChainState& s, double eps,
                            std::span<const double> inv_mass, Rng& rng) {
  const std::size_t d = s.q.size();
  std::vector<double> q(d), p(d), p0(d), g(d);
  for (std::size_t j = 0; j < d; ++j) p0[j] = standard_normal(rng) / std::sqrt(inv_mass[j]);
  auto log_accept = [&](double e) {
    q = s.q;
    p = p0;
    g = s.grad;
    double lp = s.logp;
    if (!integrate(target, q, p, g, lp, e, 1, inv_mass)) return -std::numeric_limits<double>::infinity();
    return (lp - kinetic(p, inv_mass)) - (s.logp - kinetic(p0, inv_mass));
  };
  const double half = std::log(0.5);
  const bool grow = log_accept(eps) > half;
  for (int i = 0; i < 50; ++i) {
    const double next = grow ? eps * 2.0 : eps * 0.5;
    if (next > 1e3 || next < 1e-10) break;
    const bool ok = log_accept(next) > half;
    if (grow && !ok) break;
    eps = next;
    if (!grow && ok) break;
  }
  return eps;
}

}  // namespace

LeapfrogState leapfrog(const TargetDensity& target, std::span<const double> position,
                       std::span<const double> momentum, double step_size, std::size_t n_steps,
                       std::span<const double> inv_mass) {
  LeapfrogState out;
  out.position.assign(position.begin(), position.end());
  out.momentum.assign(momentum.begin(), momentum.end());
  std::vector<double> grad(position.size());
  out.log_density = target.log_density_gradient(out.position, grad);
  if (!std::isfinite(out.log_density) || !all_finite(grad)) {
    out.finite = false;
    return out;
  }
  out.finite = integrate(target, out.position, out.momentum, grad, out.log_density, step_size,
                         n_steps, inv_mass);
  return out;
}

double gradient_check(const TargetDensity& target, std::span<const double> q,
                      std::size_t coordinates, Rng& rng, double h) {
  const std::size_t d = q.size();
  std::vector<double> grad(d);
  target.log_density_gradient(q, grad);
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (coordinates < d) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(coordinates);
  }
  std::vector<double> x(q.begin(), q.end());
  double worst = 0.0;
  for (std::size_t j : idx) {
    const double step = h * std::max(1.0, std::abs(q[j]));
    x[j] = q[j] + step;
    const double fp = target.log_density(x);
    x[j] = q[j] - step;
    const double fm = target.log_density(x);
    x[j] = q[j];
    const double fd = (fp - fm) / (2.0 * step);
    // rounding in fp - fm bounds what the difference can resolve when the
    // density itself is huge (near-zero sampling variances)
    const double floor = 8.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(fp), std::abs(fm)) / step;
    const double err =
        std::max(0.0, std::abs(grad[j] - fd) - floor) / std::max({1.0, std::abs(grad[j]), std::abs(fd)});
    worst = std::max(worst, std::isfinite(err) ? err : std::numeric_limits<double>::infinity());
  }
  return worst;
}

PosteriorDraws run_chain(const TargetDensity& target, const HmcConfig& config, std::size_t chain) {
  config.validate();
  const std::size_t d = target.dimension();
  Rng rng(substream_seed(config.seed, 1000 + chain));
  Rng steps_rng(substream_seed(config.seed, 2000 + chain));
  std::uniform_int_distribution<std::size_t> n_steps_dist(1, config.max_leapfrog_steps);

  ChainState s;
  s.q = target.initial_point();
  for (double& v : s.q) v += config.init_jitter * standard_normal(rng);
  s.grad.assign(d, 0.0);
  s.logp = target.log_density_gradient(s.q, s.grad);
  if (!std::isfinite(s.logp) || !all_finite(s.grad)) {
    throw Error(ErrorKind::NonFiniteInit,
                "log density or gradient not finite at the initial point of chain " +
                    std::to_string(chain));
  }

  PosteriorDraws out;
  out.n_chains = 1;
  out.dim = d;
  out.n_kept = config.n_iterations - config.n_burnin;
  out.values.resize(out.n_kept * d);
  out.blocks = target.blocks();

  const std::size_t burn = config.n_burnin;
  const std::size_t mass_start = burn / 2;
  const std::size_t mass_end = burn * 4 / 5;
  std::vector<double> inv_mass(d, 1.0);
  std::vector<double> mass_mean(d, 0.0), mass_m2(d, 0.0);
  std::size_t mass_n = 0;

  double eps = find_reasonable_step(target, s, config.initial_step_size, inv_mass, rng);
  DualAveraging da(config.target_accept, eps);

  ChainState prop;
  std::vector<double> p(d), p0(d);
  double accept_sum = 0.0;
  std::size_t divergent = 0, total_steps = 0;

  for (std::size_t it = 0; it < config.n_iterations; ++it) {
    if (it == burn) eps = da.final_step();
    const std::size_t n_steps = n_steps_dist(steps_rng);
    total_steps += n_steps;
    for (std::size_t j = 0; j < d; ++j) p0[j] = standard_normal(rng) / std::sqrt(inv_mass[j]);
    prop = s;
    p = p0;
    const bool finite = integrate(target, prop.q, p, prop.grad, prop.logp, eps, n_steps, inv_mass);
    const double h0 = -s.logp + kinetic(p0, inv_mass);
    const double h1 = finite ? -prop.logp + kinetic(p, inv_mass) : std::numeric_limits<double>::infinity();
    const double dh = h1 - h0;
    const bool diverged = !std::isfinite(dh) || dh > config.divergence_threshold;
    const double accept = diverged ? 0.0 : std::min(1.0, std::exp(-dh));
    if (!diverged && uniform01(rng) < accept) std::swap(s, prop);

    if (it < burn) {
      eps = da.update(accept);
      if (it >= mass_start && it < mass_end) {
        ++mass_n;
        for (std::size_t j = 0; j < d; ++j) {
          const double delta = s.q[j] - mass_mean[j];
          mass_mean[j] += delta / static_cast<double>(mass_n);
          mass_m2[j] += delta * (s.q[j] - mass_mean[j]);
        }
      }
      if (it + 1 == mass_end && mass_n >= 10) {
        const double n = static_cast<double>(mass_n);
        for (std::size_t j = 0; j < d; ++j) {
          const double var = mass_m2[j] / (n - 1.0);
          inv_mass[j] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
        }
        eps = find_reasonable_step(target, s, eps, inv_mass, rng);
        da.restart(eps);
      }
    } else {
      accept_sum += accept;
      if (diverged) ++divergent;
      std::copy(s.q.begin(), s.q.end(), out.values.begin() + static_cast<std::ptrdiff_t>((it - burn) * d));
    }
  }
  if (2 * divergent > out.n_kept) {
    throw Error(ErrorKind::AllDivergent, std::to_string(divergent) + " of " +
                                             std::to_string(out.n_kept) +
                                             " post-burn-in iterations diverged in chain " +
                                             std::to_string(chain));
  }
  out.acceptance = {accept_sum / static_cast<double>(out.n_kept)};
  out.step_size = {eps};
  out.divergences = {divergent};
  out.leapfrog_steps = {total_steps};
  return out;
}

PosteriorDraws run_hmc(const TargetDensity& target, const HmcConfig& config) {
  config.validate();
  const std::size_t d = target.dimension();
  if (d == 0) throw Error(ErrorKind::InvalidConfig, "target has dimension zero");

  if (config.gradient_check_points > 0) {
    Rng rng(substream_seed(config.seed, 7));
    const std::vector<double> centre = target.initial_point();
    for (std::size_t i = 0; i < config.gradient_check_points; ++i) {
      std::vector<double> q = centre;
      for (double& v : q) v += config.init_jitter * standard_normal(rng);
      if (!std::isfinite(target.log_density(q))) {
        throw Error(ErrorKind::NonFiniteInit, "log density not finite near the initial point");
      }
      const double err = gradient_check(target, q, config.gradient_check_coordinates, rng);
      if (!(err < config.gradient_check_tolerance)) {
        throw Error(ErrorKind::GradientCheckFailed,
                    "gradient disagrees with finite differences (relative error " +
                        std::to_string(err) + ")");
      }
    }
  }

  std::vector<PosteriorDraws> chains(config.n_chains);
  std::vector<std::exception_ptr> errors(config.n_chains);
  auto work = [&](std::size_t c) {
    try {
      chains[c] = run_chain(target, config, c);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (config.parallel_chains && config.n_chains > 1 && std::thread::hardware_concurrency() > 1) {
    std::vector<std::thread> threads;
    for (std::size_t c = 0; c < config.n_chains; ++c) threads.emplace_back(work, c);
    for (auto& t : threads) t.join();
  } else {
    for (std::size_t c = 0; c < config.n_chains; ++c) work(c);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  PosteriorDraws out;
  out.n_chains = config.n_chains;
  out.n_kept = chains.front().n_kept;
  out.dim = d;
  out.blocks = chains.front().blocks;
  out.values.reserve(out.n_chains * out.n_kept * d);
  for (auto& c : chains) {
    out.values.insert(out.values.end(), c.values.begin(), c.values.end());
    out.acceptance.push_back(c.acceptance.front());
    out.step_size.push_back(c.step_size.front());
    out.divergences.push_back(c.divergences.front());
    out.leapfrog_steps.push_back(c.leapfrog_steps.front());
    c.values = {};
  }
  return out;
}

}  // namespace sae
