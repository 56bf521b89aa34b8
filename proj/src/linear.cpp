#include "wsindex/linear.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "wsindex/rng.hpp"

namespace wsindex::linear {

std::string_view to_string(Loss l) { return l == Loss::Logistic ? "logistic" : "hinge"; }
std::string_view to_string(Penalty p) { return p == Penalty::L1 ? "l1" : "l2"; }

namespace {

// log(1 + exp(-m)) without overflow
double log1p_exp_neg(double m) {
  return m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

// d/dm log(1 + exp(-m)) = -sigmoid(-m)
double dlog1p_exp_neg(double m) {
  if (m > 0) {
    const double e = std::exp(-m);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(m));
}

constexpr double kSmoothWidth = 0.05;

// Hinge loss in the margin m, optionally quadratically smoothed near the kink.
double hinge(double m, bool smoothed) {
  const double z = 1.0 - m;
  if (z <= 0) return 0.0;
  if (!smoothed) return z;
  return z < kSmoothWidth ? z * z / (2 * kSmoothWidth) : z - kSmoothWidth / 2;
}

double dhinge(double m, bool smoothed) {
  const double z = 1.0 - m;
  if (z <= 0) return 0.0;
  if (!smoothed) return -1.0;
  return z < kSmoothWidth ? -z / kSmoothWidth : -1.0;
}

struct Eval {
  double data = 0.0;  // C * sum loss
  std::vector<double> grad_w;
  double grad_b = 0.0;
};

// Data term and its gradient; `smoothed` only affects the hinge loss.
Eval eval_data(std::span<const double> w, double b, const CsrMatrix& x, std::span<const double> y,
               double C, Loss loss, bool smoothed, bool want_grad) {
  Eval e;
  if (want_grad) e.grad_w.assign(w.size(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double m = y[r] * (x.row_dot(r, w) + b);
    double l, dl;
    if (loss == Loss::Logistic) {
      l = log1p_exp_neg(m);
      dl = want_grad ? dlog1p_exp_neg(m) : 0.0;
    } else {
      l = hinge(m, smoothed);
      dl = want_grad ? dhinge(m, smoothed) : 0.0;
    }
    e.data += C * l;
    if (want_grad && dl != 0.0) {
      const double coef = C * dl * y[r];
      const auto idx = x.row_indices(r);
      const auto val = x.row_values(r);
      for (std::size_t p = 0; p < idx.size(); ++p) e.grad_w[idx[p]] += coef * val[p];
      e.grad_b += coef;
    }
  }
  return e;
}

double l1_norm(std::span<const double> w) {
  double s = 0.0;
  for (double v : w) s += std::abs(v);
  return s;
}

double l2_half(std::span<const double> w) {
  double s = 0.0;
  for (double v : w) s += v * v;
  return 0.5 * s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm_inf(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

// Parameters are packed as [w..., b].
FitResult fit_lbfgs(const CsrMatrix& x, std::span<const double> y, const FitOptions& opts) {
  const std::size_t d = x.cols();
  std::vector<double> theta(d + 1, 0.0);
  auto eval = [&](const std::vector<double>& t, std::vector<double>& g) {
    std::span<const double> w(t.data(), d);
    Eval e = eval_data(w, t[d], x, y, opts.C, Loss::Logistic, false, true);
    g.assign(d + 1, 0.0);
    for (std::size_t i = 0; i < d; ++i) g[i] = e.grad_w[i] + t[i];
    g[d] = e.grad_b;
    return e.data + l2_half(w);
  };

  FitResult res;
  std::vector<double> g, g_new, dir(d + 1), trial(d + 1);
  double f = eval(theta, g);
  const double g0 = std::max(1.0, norm_inf(g));
  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  constexpr std::size_t kMemory = 10;

  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    res.iterations = it + 1;
    if (norm_inf(g) <= opts.tol * g0) {
      res.converged = true;
      break;
    }
    // two-loop recursion
    dir = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha[k] = rho_hist[k] * dot(s_hist[k], dir);
      for (std::size_t i = 0; i <= d; ++i) dir[i] -= alpha[k] * y_hist[k][i];
    }
    double gamma = 1.0;
    if (!s_hist.empty()) gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
    for (auto& v : dir) v *= gamma;
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * dot(y_hist[k], dir);
      for (std::size_t i = 0; i <= d; ++i) dir[i] += s_hist[k][i] * (alpha[k] - beta);
    }
    for (auto& v : dir) v = -v;
    double slope = dot(g, dir);
    if (slope >= 0) {
      for (std::size_t i = 0; i <= d; ++i) dir[i] = -g[i];
      slope = dot(g, dir);
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }
    double step = s_hist.empty() ? std::min(1.0, 1.0 / norm_inf(g)) : 1.0;
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i <= d; ++i) trial[i] = theta[i] + step * dir[i];
      f_new = eval(trial, g_new);
      if (f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // no descent possible at machine precision
      res.converged = norm_inf(g) <= std::sqrt(opts.tol) * g0;
      break;
    }
    std::vector<double> s(d + 1), yv(d + 1);
    double step_norm = 0.0, theta_norm = 0.0;
    for (std::size_t i = 0; i <= d; ++i) {
      s[i] = trial[i] - theta[i];
      yv[i] = g_new[i] - g[i];
      step_norm = std::max(step_norm, std::abs(s[i]));
      theta_norm = std::max(theta_norm, std::abs(trial[i]));
    }
    const double sy = dot(s, yv);
    if (sy > 1e-12) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > kMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    theta.swap(trial);
    g.swap(g_new);
    const double decrease = f - f_new;
    f = f_new;
    if (step_norm <= opts.tol * std::max(1.0, theta_norm) &&
        decrease <= opts.tol * std::max(1.0, std::abs(f))) {
      res.converged = true;
      break;
    }
  }
  res.w.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(d));
  res.b = theta[d];
  res.objective = f;
  return res;
}

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

// FISTA with backtracking and adaptive restart; the intercept is not
// thresholded. Tracks the best exact objective seen.
FitResult fit_fista(const CsrMatrix& x, std::span<const double> y, Loss loss,
                    const FitOptions& opts) {
  const std::size_t d = x.cols();
  const bool smoothed = loss == Loss::Hinge;
  auto smooth = [&](std::span<const double> w, double b, bool grad) {
    return eval_data(w, b, x, y, opts.C, loss, smoothed, grad);
  };
  auto exact = [&](std::span<const double> w, double b) {
    return eval_data(w, b, x, y, opts.C, loss, false, false).data + l1_norm(w);
  };

  std::vector<double> w(d, 0.0), w_prev(d, 0.0), v(d, 0.0), w_try(d);
  double b = 0.0, b_prev = 0.0, vb = 0.0;
  double t = 1.0;
  double lipschitz = 1.0;

  FitResult res;
  res.w = w;
  res.b = 0.0;
  res.objective = exact(w, b);

  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    res.iterations = it + 1;
    Eval ev = smooth(v, vb, true);
    double b_try = 0.0;
    double f_try = 0.0;
    for (int ls = 0; ls < 60; ++ls) {
      const double step = 1.0 / lipschitz;
      for (std::size_t i = 0; i < d; ++i) w_try[i] = soft_threshold(v[i] - step * ev.grad_w[i], step);
      b_try = vb - step * ev.grad_b;
      f_try = smooth(w_try, b_try, false).data;
      // sufficient decrease for the quadratic upper model
      double lin = ev.data, quad = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double diff = w_try[i] - v[i];
        lin += ev.grad_w[i] * diff;
        quad += diff * diff;
      }
      lin += ev.grad_b * (b_try - vb);
      quad += (b_try - vb) * (b_try - vb);
      if (f_try <= lin + 0.5 * lipschitz * quad + 1e-12 * std::abs(f_try)) break;
      lipschitz *= 2.0;
    }
    const double obj = f_try + l1_norm(w_try);
    if (obj < res.objective) {
      res.objective = obj;
      res.w = w_try;
      res.b = b_try;
    }

    double step_norm = std::abs(b_try - b);
    double w_norm = std::abs(b_try);
    for (std::size_t i = 0; i < d; ++i) {
      step_norm = std::max(step_norm, std::abs(w_try[i] - w[i]));
      w_norm = std::max(w_norm, std::abs(w_try[i]));
    }
    // gradient-based restart: momentum pointing uphill
    double restart_dot = (vb - b_try) * (b_try - b);
    for (std::size_t i = 0; i < d; ++i) restart_dot += (v[i] - w_try[i]) * (w_try[i] - w[i]);

    w_prev.swap(w);
    w = w_try;
    b_prev = b;
    b = b_try;
    if (restart_dot > 0) {
      t = 1.0;
      v = w;
      vb = b;
    } else {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      const double mom = (t - 1.0) / t_next;
      for (std::size_t i = 0; i < d; ++i) v[i] = w[i] + mom * (w[i] - w_prev[i]);
      vb = b + mom * (b - b_prev);
      t = t_next;
    }
    lipschitz = std::max(1e-12, lipschitz * 0.9);
    if (it > 0 && step_norm <= opts.tol * std::max(1.0, w_norm)) {
      res.converged = true;
      break;
    }
  }
  return res;
}

// Dual coordinate descent for the hinge loss with L2 penalty on the
// augmented vector [w, b].
FitResult fit_svm_dual(const CsrMatrix& x, std::span<const double> y, const FitOptions& opts) {
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> alpha(n, 0.0), w(d, 0.0), qdiag(n);
  double b = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double s = 1.0;  // bias feature
    for (double v : x.row_values(r)) s += v * v;
    qdiag[r] = s;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(opts.seed);
  FitResult res;
  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    res.iterations = it + 1;
    rng.shuffle(std::span<std::size_t>(order));
    double pg_max = -1e300, pg_min = 1e300;
    for (auto r : order) {
      const double grad = y[r] * (x.row_dot(r, w) + b) - 1.0;
      double pg = grad;
      if (alpha[r] <= 0.0) pg = std::min(grad, 0.0);
      else if (alpha[r] >= opts.C) pg = std::max(grad, 0.0);
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      if (pg == 0.0) continue;
      const double old = alpha[r];
      alpha[r] = std::clamp(old - grad / qdiag[r], 0.0, opts.C);
      const double delta = (alpha[r] - old) * y[r];
      if (delta == 0.0) continue;
      const auto idx = x.row_indices(r);
      const auto val = x.row_values(r);
      for (std::size_t p = 0; p < idx.size(); ++p) w[idx[p]] += delta * val[p];
      b += delta;
    }
    if (pg_max - pg_min <= std::max(opts.tol, 1e-12)) {
      res.converged = true;
      break;
    }
  }
  res.w = std::move(w);
  res.b = b;
  res.objective = objective_value(res.w, res.b, x, y, opts.C, Loss::Hinge, Penalty::L2);
  const double at_zero = opts.C * static_cast<double>(n);
  if (res.objective > at_zero) {
    res.w.assign(d, 0.0);
    res.b = 0.0;
    res.objective = at_zero;
  }
  return res;
}

}  // namespace

Objective loss_gradient(std::span<const double> w, double b, const CsrMatrix& x,
                        std::span<const double> y, double C, Loss loss, Penalty penalty) {
  Eval e = eval_data(w, b, x, y, C, loss, false, true);
  Objective o;
  o.grad_w = std::move(e.grad_w);
  o.grad_b = e.grad_b;
  if (penalty == Penalty::L2) {
    const double pen = l2_half(w);
    for (std::size_t i = 0; i < w.size(); ++i) o.grad_w[i] += w[i];
    o.smooth_value = e.data + pen;
    o.value = o.smooth_value;
  } else {
    o.smooth_value = e.data;
    o.value = e.data + l1_norm(w);
  }
  return o;
}

double objective_value(std::span<const double> w, double b, const CsrMatrix& x,
                       std::span<const double> y, double C, Loss loss, Penalty penalty) {
  const double data = eval_data(w, b, x, y, C, loss, false, false).data;
  return data + (penalty == Penalty::L2 ? l2_half(w) : l1_norm(w));
}

FitResult fit(const CsrMatrix& x, std::span<const double> y, Loss loss, Penalty penalty,
              const FitOptions& opts) {
  FitResult res;
  if (loss == Loss::Logistic && penalty == Penalty::L2) {
    res = fit_lbfgs(x, y, opts);
  } else if (loss == Loss::Hinge && penalty == Penalty::L2) {
    res = fit_svm_dual(x, y, opts);
  } else {
    res = fit_fista(x, y, loss, opts);
  }
  // report the exact objective (the hinge variants optimize a surrogate)
  res.objective = objective_value(res.w, res.b, x, y, opts.C, loss, penalty);
  const double at_zero = objective_value(std::vector<double>(x.cols(), 0.0), 0.0, x, y, opts.C,
                                         loss, penalty);
  if (res.objective > at_zero) {
    res.w.assign(x.cols(), 0.0);
    res.b = 0.0;
    res.objective = at_zero;
  }
  return res;
}

}  // namespace wsindex::linear
