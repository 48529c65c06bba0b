#include "phenom/elastic_net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace phenom::bench {

namespace {

double soft_threshold(double a, double t) {
  if (a > t) return a - t;
  if (a < -t) return a + t;
  return 0.0;
}

// Coordinate descent on centered data (no intercept inside).
std::vector<double> cd_solve(const Matrix<double>& xc, const std::vector<double>& yc,
                             double alpha, double l1_ratio, int max_iter, double tol,
                             std::vector<double> warm) {
  const int n = xc.rows(), d = xc.cols();
  std::vector<double> w = warm.empty() ? std::vector<double>(d, 0.0) : std::move(warm);
  std::vector<double> col_sq(d, 0.0);
  for (int j = 0; j < d; ++j) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += xc(i, j) * xc(i, j);
    col_sq[j] = s / n;
  }
  std::vector<double> resid(n);
  for (int i = 0; i < n; ++i) {
    double pred = 0.0;
    for (int j = 0; j < d; ++j) pred += xc(i, j) * w[j];
    resid[i] = yc[i] - pred;
  }
  const double l1 = alpha * l1_ratio;
  const double l2 = alpha * (1.0 - l1_ratio);
  for (int it = 0; it < max_iter; ++it) {
    double max_delta = 0.0;
    for (int j = 0; j < d; ++j) {
      if (col_sq[j] == 0.0) continue;
      double rho = 0.0;
      for (int i = 0; i < n; ++i) rho += xc(i, j) * resid[i];
      rho = rho / n + col_sq[j] * w[j];
      double w_new = soft_threshold(rho, l1) / (col_sq[j] + l2);
      double delta = w_new - w[j];
      if (delta != 0.0) {
        for (int i = 0; i < n; ++i) resid[i] -= xc(i, j) * delta;
        w[j] = w_new;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    if (max_delta < tol) break;
  }
  return w;
}

struct Centered {
  Matrix<double> xc;
  std::vector<double> yc;
  std::vector<double> x_mean;
  double y_mean = 0.0;
};

Centered center(const Matrix<double>& x, const std::vector<double>& y) {
  const int n = x.rows(), d = x.cols();
  Centered c;
  c.xc = x;
  c.yc = y;
  c.x_mean.assign(d, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) c.x_mean[j] += x(i, j);
  for (int j = 0; j < d; ++j) c.x_mean[j] /= n;
  for (double v : y) c.y_mean += v;
  c.y_mean /= n;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) c.xc(i, j) -= c.x_mean[j];
    c.yc[i] -= c.y_mean;
  }
  return c;
}

double alpha_max_for(const Centered& c, double l1_ratio) {
  const int n = c.xc.rows(), d = c.xc.cols();
  double mx = 0.0;
  for (int j = 0; j < d; ++j) {
    double dot = 0.0;
    for (int i = 0; i < n; ++i) dot += c.xc(i, j) * c.yc[i];
    mx = std::max(mx, std::abs(dot));
  }
  return mx / (n * std::max(l1_ratio, 1e-3));
}

}  // namespace

ElasticNetFit elastic_net_fit(const Matrix<double>& x, const std::vector<double>& y,
                              double alpha, double l1_ratio, int max_iter, double tol) {
  if (x.rows() != static_cast<int>(y.size()))
    throw std::invalid_argument("elastic_net_fit: row count mismatch");
  Centered c = center(x, y);
  ElasticNetFit fit;
  fit.coef = cd_solve(c.xc, c.yc, alpha, l1_ratio, max_iter, tol, {});
  fit.intercept = c.y_mean;
  for (int j = 0; j < x.cols(); ++j) fit.intercept -= fit.coef[j] * c.x_mean[j];
  return fit;
}

ElasticNetCVResult elastic_net_cv(const Matrix<double>& x, const std::vector<double>& y,
                                  const std::vector<double>& l1_grid, int n_alphas, double eps,
                                  int n_folds) {
  const int n = x.rows();
  if (n < n_folds) throw std::invalid_argument("elastic_net_cv: fewer rows than folds");
  if (l1_grid.empty()) throw std::invalid_argument("elastic_net_cv: empty l1 grid");

  // contiguous folds
  std::vector<std::pair<int, int>> folds;
  int base = n / n_folds, rem = n % n_folds, start = 0;
  for (int f = 0; f < n_folds; ++f) {
    int len = base + (f < rem ? 1 : 0);
    folds.push_back({start, start + len});
    start += len;
  }

  double best_mse = std::numeric_limits<double>::infinity();
  double best_alpha = 0.0, best_l1 = l1_grid[0];

  for (double l1_ratio : l1_grid) {
    Centered c_full = center(x, y);
    double amax = alpha_max_for(c_full, l1_ratio);
    if (amax <= 0.0) amax = 1e-3;
    std::vector<double> alphas(n_alphas);
    for (int a = 0; a < n_alphas; ++a)
      alphas[a] = amax * std::pow(eps, static_cast<double>(a) / (n_alphas - 1));

    // per-fold warm starts along the descending alpha path
    std::vector<std::vector<double>> warm(n_folds);
    std::vector<double> path_mse(n_alphas, 0.0);
    for (int f = 0; f < n_folds; ++f) {
      auto [vs, ve] = folds[f];
      Matrix<double> xtr(n - (ve - vs), x.cols());
      std::vector<double> ytr;
      ytr.reserve(n - (ve - vs));
      int r = 0;
      for (int i = 0; i < n; ++i) {
        if (i >= vs && i < ve) continue;
        for (int j = 0; j < x.cols(); ++j) xtr(r, j) = x(i, j);
        ytr.push_back(y[i]);
        ++r;
      }
      Centered c = center(xtr, ytr);
      for (int a = 0; a < n_alphas; ++a) {
        warm[f] = cd_solve(c.xc, c.yc, alphas[a], l1_ratio, 1000, 1e-7, warm[f]);
        double intercept = c.y_mean;
        for (int j = 0; j < x.cols(); ++j) intercept -= warm[f][j] * c.x_mean[j];
        double mse = 0.0;
        for (int i = vs; i < ve; ++i) {
          double pred = intercept;
          for (int j = 0; j < x.cols(); ++j) pred += x(i, j) * warm[f][j];
          double d = y[i] - pred;
          mse += d * d;
        }
        path_mse[a] += mse / (ve - vs);
      }
    }
    for (int a = 0; a < n_alphas; ++a) {
      double mse = path_mse[a] / n_folds;
      if (mse < best_mse) {
        best_mse = mse;
        best_alpha = alphas[a];
        best_l1 = l1_ratio;
      }
    }
  }

  ElasticNetCVResult res;
  res.best_alpha = best_alpha;
  res.best_l1_ratio = best_l1;
  res.fit = elastic_net_fit(x, y, best_alpha, best_l1);
  return res;
}

double r2_score(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
  if (y_true.size() != y_pred.size() || y_true.empty())
    throw std::invalid_argument("r2_score: size mismatch");
  double mean = 0.0;
  for (double v : y_true) mean += v;
  mean /= static_cast<double>(y_true.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (size_t i = 0; i < y_true.size(); ++i) {
    ss_res += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
    ss_tot += (y_true[i] - mean) * (y_true[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

std::vector<double> predict(const ElasticNetFit& fit, const Matrix<double>& x) {
  std::vector<double> out(x.rows(), fit.intercept);
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) out[i] += x(i, j) * fit.coef[j];
  return out;
}

}  // namespace phenom::bench
