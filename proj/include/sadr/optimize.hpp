#pragma once

// Stochastic gradient ascent on the ELBO: ADADELTA steps, likelihood
// subsampling, a linear global annealing schedule, a median-based stopping
// rule, and averaging of the final iterates into the point estimate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "sadr/linalg.hpp"
#include "sadr/rng.hpp"
#include "sadr/vi.hpp"

namespace sadr {

/// Per-coordinate adaptive step sizes (Zeiler's ADADELTA), ascent direction.
struct AdadeltaState {
  double decay = 0.95;
  double conditioning = 1e-6;
  VectorXd mean_sq_grad;
  VectorXd mean_sq_step;

  AdadeltaState() = default;
  explicit AdadeltaState(Index dim, double decay_ = 0.95, double conditioning_ = 1e-6)
      : decay(decay_), conditioning(conditioning_), mean_sq_grad(VectorXd::Zero(dim)),
        mean_sq_step(VectorXd::Zero(dim)) {}

  /// Returns the increment to add to lambda.
  VectorXd step(const VectorXd& g) {
    if (g.size() != mean_sq_grad.size()) throw std::invalid_argument("gradient size mismatch");
    mean_sq_grad = decay * mean_sq_grad + (1.0 - decay) * g.cwiseAbs2();
    const VectorXd delta = ((mean_sq_step.array() + conditioning).sqrt() /
                            (mean_sq_grad.array() + conditioning).sqrt() * g.array())
                               .matrix();
    mean_sq_step = decay * mean_sq_step + (1.0 - decay) * delta.cwiseAbs2();
    return delta;
  }
};

/// Likelihood temperature: starts at t0, drops linearly every `interval`
/// iterations and is exactly 1 from `end` on.
struct AnnealSchedule {
  double t0 = 1.0;
  long interval = 100;
  long end = 9000;

  double temperature(long t) const {
    if (t0 <= 1.0 || end <= 0) return 1.0;
    const long block_start = (std::max(t, 0L) / interval) * interval;
    if (block_start >= end) return 1.0;
    const double progress = static_cast<double>(block_start) / static_cast<double>(end);
    return std::max(1.0, t0 - (t0 - 1.0) * progress);
  }
};

inline double temperature(const AnnealSchedule& s, long t) { return s.temperature(t); }

/// Stops once the median ELBO of the latest window improved by no more than
/// `tolerance` over the median of the window before it.
class StoppingMonitor {
 public:
  explicit StoppingMonitor(std::size_t window = 1000, double tolerance = 1e-4, double divergence = 1e6)
      : window_(window), tol_(tolerance), divergence_(divergence) {}

  void push(double elbo) {
    values_.push_back(elbo);
    if (values_.size() > 2 * window_) values_.pop_front();
    if (values_.size() >= window_) {
      const double cur = current_median();
      best_ = std::max(best_.value_or(cur), cur);
    }
  }

  bool ready() const { return values_.size() >= 2 * window_; }

  double current_median() const { return median(values_.size() - window_, values_.size()); }
  double previous_median() const { return median(values_.size() - 2 * window_, values_.size() - window_); }

  /// Improvement of the latest window median over the previous one.
  double improvement() const { return current_median() - previous_median(); }

  bool converged() const { return ready() && improvement() <= tol_; }

  bool diverged() const {
    return values_.size() >= window_ && best_ && current_median() < *best_ - divergence_;
  }

  std::size_t window() const { return window_; }

 private:
  double median(std::size_t from, std::size_t to) const {
    std::vector<double> v(values_.begin() + static_cast<std::ptrdiff_t>(from),
                          values_.begin() + static_cast<std::ptrdiff_t>(to));
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
    return m;
  }

  std::size_t window_;
  double tol_;
  double divergence_;
  std::deque<double> values_;
  std::optional<double> best_;
};

struct SubsampleConfig {
  Index n_sub = 0;  // 0 or n: off
  bool active(Index n) const { return n_sub > 0 && n_sub < n; }
  double weight(Index n) const { return active(n) ? static_cast<double>(n) / static_cast<double>(n_sub) : 1.0; }
};

/// Uniform sample of n_sub distinct row indices, in increasing order.
inline std::vector<Index> subsample(Rng& rng, Index n, Index n_sub) {
  if (n_sub < 1 || n_sub > n) throw std::invalid_argument("subsample size must lie in [1, n]");
  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});
  if (n_sub == n) return all;
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(n_sub));
  std::sample(all.begin(), all.end(), std::back_inserter(out), n_sub, rng);
  return out;
}

struct OptimizerOptions {
  int draws = 1;                          // M
  SubsampleConfig subsample;
  std::optional<AnnealSchedule> anneal;   // nullopt: plain ELBO
  long max_iterations = 50000;
  std::size_t window = 1000;              // stopping window and averaging window
  double tolerance = 1e-4;
  double divergence = 1e6;
  std::uint64_t seed = 1;
  bool check_pattern = true;              // assert B stays lower triangular
  bool keep_iterates = false;             // store every lambda iterate (diagnostics)
};

struct RunResult {
  VectorXd lambda_hat;                 // mean of the last `window` iterates
  std::vector<double> elbo_trace;      // per-iteration M-draw estimate
  std::vector<double> temperature_trace;
  std::vector<VectorXd> iterates;      // only with keep_iterates
  long iterations = 0;
  bool converged = false;
};

/// Problem concept:
///   GradientEstimate estimate(const VectorXd& lambda, const EstimatorContext&, Rng& draws, Rng& gibbs);
///   void check(const VectorXd& lambda) const;   // invariant assertions after a step
///   Index n() const;                            // observations, for subsampling
template <class Problem>
RunResult run_sga(Problem& problem, VectorXd lambda, const OptimizerOptions& opt) {
  Rng draw_rng = substream(opt.seed, "draws");
  Rng sub_rng = substream(opt.seed, "subsample");
  Rng gibbs_rng = substream(opt.seed, "gibbs");
  const Index n = problem.n();
  AdadeltaState ada(lambda.size());
  StoppingMonitor monitor(opt.window, opt.tolerance, opt.divergence);
  std::deque<VectorXd> recent;
  RunResult res;
  std::vector<Index> rows;
  for (long t = 0; t < opt.max_iterations; ++t) {
    EstimatorContext ctx;
    ctx.temperature = opt.anneal ? opt.anneal->temperature(t) : 1.0;
    if (opt.subsample.active(n)) {
      rows = subsample(sub_rng, n, opt.subsample.n_sub);
      ctx.rows = rows;
    }
    const GradientEstimate est = problem.estimate(lambda, ctx, draw_rng, gibbs_rng);
    lambda += ada.step(est.grad);
    if (opt.check_pattern) problem.check(lambda);
    res.elbo_trace.push_back(est.elbo);
    res.temperature_trace.push_back(ctx.temperature);
    recent.push_back(lambda);
    if (opt.keep_iterates) res.iterates.push_back(lambda);
    if (recent.size() > opt.window) recent.pop_front();
    res.iterations = t + 1;
    if (ctx.temperature == 1.0 && (!opt.anneal || opt.anneal->temperature(t + 1) == 1.0)) {
      monitor.push(est.elbo);
      if (monitor.diverged()) {
        std::ostringstream msg;
        msg << "divergence at iteration " << t << ": median ELBO " << monitor.current_median()
            << " fell more than " << opt.divergence << " below its best";
        throw std::runtime_error(msg.str());
      }
      if (monitor.converged()) {
        res.converged = true;
        break;
      }
    }
  }
  res.lambda_hat = VectorXd::Zero(lambda.size());
  for (const auto& l : recent) res.lambda_hat += l;
  res.lambda_hat /= static_cast<double>(recent.size());
  return res;
}

}  // namespace sadr
