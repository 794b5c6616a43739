// Bound-constrained derivative-free trust-region method in the BOBYQA family.
//
// The model interpolates f at 2n+1 points. Each time the point set changes the model is
// rebuilt as the quadratic closest to the previous one (least Frobenius change of the
// Hessian) that interpolates every point; the same KKT matrix gives the Lagrange functions
// used to pick replacement points and geometry-improving steps. All linear algebra is done
// in coordinates scaled by rho so the KKT system stays well conditioned as rho shrinks.

#include "disa/optim.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace disa {

namespace {

class TrustRegion {
 public:
  TrustRegion(const Objective& f, const TrustRegionOptions& o, OptimizationResult& res)
      : f_(f), lower_(o.bounds.lower), upper_(o.bounds.upper), n_(f.dimension()), m_(2 * n_ + 1), res_(res) {}

  double eval(const VecX& x) {
    ++res_.evaluations;
    const double v = f_.value(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::max();
  }

  const Objective& f_;
  VecX lower_, upper_;
  int n_;
  int m_;
  OptimizationResult& res_;

  std::vector<VecX> y;
  std::vector<double> fy;
  int kb = 0;
  double scale = 1.0;

  // Model about centre y[kb]: c + g's + s'Hs/2.
  double c = 0.0;
  VecX g;
  Eigen::MatrixXd h;
  Eigen::FullPivLU<Eigen::MatrixXd> kkt;
  Eigen::MatrixXd e;  // scaled offsets of the points from the centre, n x m

  const VecX& xb() const { return y[static_cast<std::size_t>(kb)]; }

  double model_at(const VecX& s) const { return c + g.dot(s) + 0.5 * s.dot(h * s); }

  void factor() {
    e.resize(n_, m_);
    for (int j = 0; j < m_; ++j) e.col(j) = (y[static_cast<std::size_t>(j)] - xb()) / scale;
    const int k = m_ + n_ + 1;
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(k, k);
    const Eigen::MatrixXd gram = e.transpose() * e;
    w.topLeftCorner(m_, m_) = 0.5 * gram.array().square().matrix();
    w.block(m_, 0, 1, m_).setOnes();
    w.block(0, m_, m_, 1).setOnes();
    w.block(m_ + 1, 0, n_, m_) = e;
    w.block(0, m_ + 1, m_, n_) = e.transpose();
    kkt.compute(w);
  }

  // Least-change update of the model, already re-centred on xb.
  void rebuild() {
    factor();
    VecX rhs = VecX::Zero(m_ + n_ + 1);
    for (int j = 0; j < m_; ++j) rhs[j] = fy[static_cast<std::size_t>(j)] - model_at(y[static_cast<std::size_t>(j)] - xb());
    const VecX sol = kkt.solve(rhs);
    c += sol[m_];
    g += sol.segment(m_ + 1, n_) / scale;
    Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(n_, n_);
    for (int j = 0; j < m_; ++j) dh.noalias() += sol[j] * e.col(j) * e.col(j).transpose();
    h += dh / (scale * scale);
  }

  void recentre(int new_kb) {
    const VecX s = y[static_cast<std::size_t>(new_kb)] - xb();
    c = model_at(s);
    g += h * s;
    kb = new_kb;
  }

  // Lagrange function of point k evaluated at x.
  double lagrange(int k, const VecX& x) const {
    VecX rhs = VecX::Zero(m_ + n_ + 1);
    rhs[k] = 1.0;
    const VecX sol = kkt.solve(rhs);
    const VecX u = (x - xb()) / scale;
    double v = sol[m_] + sol.segment(m_ + 1, n_).dot(u);
    for (int j = 0; j < m_; ++j) {
      const double d = e.col(j).dot(u);
      v += 0.5 * sol[j] * d * d;
    }
    return v;
  }

  // Approximate minimiser of the model in {|s| <= delta} ∩ box by truncated CG; hitting a bound
  // fixes that variable and restarts CG from the current point.
  VecX step(double delta) const {
    VecX s = VecX::Zero(n_);
    std::vector<bool> free(static_cast<std::size_t>(n_), true);
    const VecX& x = xb();
    for (int i = 0; i < n_; ++i)
      if ((x[i] <= lower_[i] && g[i] > 0.0) || (x[i] >= upper_[i] && g[i] < 0.0)) free[static_cast<std::size_t>(i)] = false;
    auto mask = [&](VecX v) {
      for (int i = 0; i < n_; ++i)
        if (!free[static_cast<std::size_t>(i)]) v[i] = 0.0;
      return v;
    };
    for (int restart = 0; restart <= n_; ++restart) {
      VecX r = mask(-(g + h * s));
      VecX p = r;
      bool fixed_one = false;
      for (int k = 0; k < n_; ++k) {
        const double rr = r.squaredNorm();
        if (rr <= 1e-24 * (1.0 + g.squaredNorm())) return s;
        const VecX hp = mask(h * p);
        const double curv = p.dot(hp);
        const double pp = p.squaredNorm(), sp = s.dot(p), ss = s.squaredNorm();
        const double disc = std::max(0.0, sp * sp + pp * (delta * delta - ss));
        const double t_tr = (-sp + std::sqrt(disc)) / pp;
        double t_box = std::numeric_limits<double>::infinity();
        int ib = -1;
        for (int i = 0; i < n_; ++i) {
          if (!free[static_cast<std::size_t>(i)] || p[i] == 0.0) continue;
          const double lim = p[i] > 0.0 ? (upper_[i] - x[i] - s[i]) / p[i] : (lower_[i] - x[i] - s[i]) / p[i];
          if (lim < t_box) {
            t_box = std::max(0.0, lim);
            ib = i;
          }
        }
        const double t_cg = curv > 0.0 ? rr / curv : std::numeric_limits<double>::infinity();
        const double t = std::min({t_cg, t_tr, t_box});
        s += t * p;
        if (t == t_box && ib >= 0) {
          s[ib] = (p[ib] > 0.0 ? upper_[ib] : lower_[ib]) - x[ib];
          free[static_cast<std::size_t>(ib)] = false;
          fixed_one = true;
          break;
        }
        if (t == t_tr) return s;
        const VecX rn = r - t * hp;
        p = rn + (rn.squaredNorm() / rr) * p;
        r = rn;
      }
      if (!fixed_one) break;
    }
    return s;
  }

  VecX project(const VecX& x) const { return x.cwiseMax(lower_).cwiseMin(upper_); }

  int farthest(double* dist) const {
    int far = -1;
    double best = -1.0;
    for (int j = 0; j < m_; ++j) {
      if (j == kb) continue;
      const double d = (y[static_cast<std::size_t>(j)] - xb()).norm();
      if (d > best) {
        best = d;
        far = j;
      }
    }
    *dist = best;
    return far;
  }

  void replace(int k, const VecX& x, double fx) {
    y[static_cast<std::size_t>(k)] = x;
    fy[static_cast<std::size_t>(k)] = fx;
    if (fx < fy[static_cast<std::size_t>(kb)]) recentre(k);
    rebuild();
  }

  // Moves point k to the candidate on the radius-delta stencil around xb where |l_k| is largest.
  void improve_geometry(int k, double delta) {
    VecX best_x = xb();
    double best_l = -1.0;
    auto consider = [&](const VecX& cand) {
      const double l = std::abs(lagrange(k, cand));
      if (l > best_l) {
        best_l = l;
        best_x = cand;
      }
    };
    for (int i = 0; i < n_; ++i)
      for (double sign : {1.0, -1.0}) {
        VecX cand = xb();
        cand[i] += sign * delta;
        consider(project(cand));
      }
    // Along the gradient of l_k at xb, estimated by central differences of the quadratic.
    VecX grad(n_);
    for (int i = 0; i < n_; ++i) {
      VecX a = xb(), b = xb();
      a[i] += scale;
      b[i] -= scale;
      grad[i] = lagrange(k, a) - lagrange(k, b);
    }
    if (grad.norm() > 0.0)
      for (double sign : {1.0, -1.0}) consider(project(xb() + sign * delta * grad.normalized()));
    replace(k, best_x, eval(best_x));
  }
};

}  // namespace

OptimizationResult derivative_free_minimize(const Objective& f, const VecX& x0, const TrustRegionOptions& options) {
  const int n = f.dimension();
  const Bounds& b = options.bounds;
  if (x0.size() != n) throw DataError("x0 dimension does not match the objective");
  if (b.lower.size() != n || b.upper.size() != n || !b.lower.allFinite() || !b.upper.allFinite())
    throw DataError("derivative-free minimisation needs finite bounds");
  if (!b.contains(x0)) throw DataError("x0 violates the bounds");
  double min_width = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    if (!(b.upper[i] > b.lower[i])) throw DataError("bounds must satisfy lower < upper");
    min_width = std::min(min_width, b.upper[i] - b.lower[i]);
  }
  double rho = options.rho_begin > 0.0 ? std::min(options.rho_begin, 0.5 * min_width) : 0.1 * min_width;
  const double rho_end = std::min(options.rho_end, rho);
  const std::size_t max_evals = options.max_evals ? options.max_evals : 500 * static_cast<std::size_t>(n + 1);

  OptimizationResult res;
  TrustRegion tr(f, options, res);
  tr.scale = rho;

  // Initial stencil: x0 moved onto a bound or at least rho inside it, then +-rho per axis
  // (+rho, +2rho at a lower bound; -rho, -2rho at an upper bound).
  VecX base = x0;
  for (int i = 0; i < n; ++i) {
    if (base[i] < b.lower[i] + rho) base[i] = base[i] - b.lower[i] <= 0.5 * rho ? b.lower[i] : b.lower[i] + rho;
    if (base[i] > b.upper[i] - rho) base[i] = b.upper[i] - base[i] <= 0.5 * rho ? b.upper[i] : b.upper[i] - rho;
  }
  tr.y.push_back(base);
  for (int i = 0; i < n; ++i) {
    VecX p = base, q = base;
    if (base[i] <= b.lower[i]) {
      p[i] += rho;
      q[i] += 2.0 * rho;
    } else if (base[i] >= b.upper[i]) {
      p[i] -= rho;
      q[i] -= 2.0 * rho;
    } else {
      p[i] += rho;
      q[i] -= rho;
    }
    tr.y.push_back(p);
    tr.y.push_back(q);
  }
  for (const auto& p : tr.y) {
    if (res.evaluations >= max_evals) break;
    tr.fy.push_back(tr.eval(p));
  }
  auto finish = [&](const char* reason, bool converged) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < tr.fy.size(); ++j)
      if (tr.fy[j] < tr.fy[best]) best = j;
    res.x = tr.y[best];
    res.value = tr.fy[best] == std::numeric_limits<double>::max() ? std::numeric_limits<double>::infinity() : tr.fy[best];
    res.stop_reason = reason;
    res.converged = converged;
    return res;
  };
  if (tr.fy.size() < tr.y.size()) {
    tr.y.resize(tr.fy.size());
    return finish("max_evals", false);
  }

  tr.kb = static_cast<int>(std::min_element(tr.fy.begin(), tr.fy.end()) - tr.fy.begin());
  tr.c = tr.fy[static_cast<std::size_t>(tr.kb)];
  tr.g = VecX::Zero(n);
  tr.h = Eigen::MatrixXd::Zero(n, n);
  tr.rebuild();

  double delta = rho;
  auto reduce_rho = [&] {
    const double ratio = rho / rho_end;
    const double next = ratio <= 16.0 ? rho_end : ratio <= 250.0 ? std::sqrt(ratio) * rho_end : 0.1 * rho;
    delta = std::max(0.5 * rho, next);
    rho = next;
    // Rescale the KKT coordinates; the model itself is unchanged.
    tr.scale = rho;
    tr.factor();
  };

  while (true) {
    if (res.evaluations >= max_evals) return finish("max_evals", false);
    ++res.iterations;
    const VecX s = tr.step(delta);
    const double snorm = s.norm();
    if (snorm < 0.5 * rho) {
      double far_dist = 0.0;
      const int far = tr.farthest(&far_dist);
      if (far >= 0 && far_dist > 2.0 * rho) {
        tr.improve_geometry(far, std::max(0.1 * delta, rho));
        continue;
      }
      if (rho <= rho_end) return finish("rho_end", true);
      reduce_rho();
      continue;
    }
    const VecX xn = tr.project(tr.xb() + s);
    const double fb = tr.fy[static_cast<std::size_t>(tr.kb)];
    const double predicted = tr.c - tr.model_at(xn - tr.xb());
    const double fn = tr.eval(xn);
    const double ratio = predicted > 0.0 ? (fb - fn) / predicted : -1.0;
    if (ratio <= 0.1)
      delta = std::min(0.5 * delta, snorm);
    else if (ratio <= 0.7)
      delta = std::max(0.5 * delta, snorm);
    else
      delta = std::max(0.5 * delta, 2.0 * snorm);
    if (delta <= 1.5 * rho) delta = rho;

    // Replace the point whose Lagrange function is largest at xn, favouring distant points.
    int replace_k = -1;
    double score = -1.0;
    for (int j = 0; j < tr.m_; ++j) {
      if (j == tr.kb) continue;
      const double d = (tr.y[static_cast<std::size_t>(j)] - tr.xb()).norm() / delta;
      const double sc = std::abs(tr.lagrange(j, xn)) * std::max(1.0, d * d * d * d);
      if (sc > score) {
        score = sc;
        replace_k = j;
      }
    }
    tr.replace(replace_k, xn, fn);

    if (ratio < 0.1) {
      if (res.evaluations >= max_evals) return finish("max_evals", false);
      double far_dist = 0.0;
      const int far = tr.farthest(&far_dist);
      if (far >= 0 && far_dist > 2.0 * delta) {
        tr.improve_geometry(far, std::max(0.1 * delta, rho));
      } else if (delta <= rho) {
        if (rho <= rho_end) return finish("rho_end", true);
        reduce_rho();
      }
    }
  }
}

}  // namespace disa
