#pragma once

#include <vector>

#include "phenom/matrix.hpp"

namespace phenom::bench {

// Elastic-net linear regression fit by coordinate descent, with the usual
// 1/(2n) MSE + alpha*(l1_ratio*L1 + (1-l1_ratio)/2*L2) objective and an
// intercept handled by centering.
struct ElasticNetFit {
  std::vector<double> coef;
  double intercept = 0.0;
};

ElasticNetFit elastic_net_fit(const Matrix<double>& x, const std::vector<double>& y,
                              double alpha, double l1_ratio, int max_iter = 1000,
                              double tol = 1e-7);

struct ElasticNetCVResult {
  ElasticNetFit fit;
  double best_alpha = 0.0;
  double best_l1_ratio = 0.0;
};

// Grid search over l1 ratios with a per-ratio geometric alpha path
// (alpha_max down to alpha_max*eps, n_alphas points) scored by k-fold CV
// (contiguous folds), then a refit on the full data with the best pair.
ElasticNetCVResult elastic_net_cv(const Matrix<double>& x, const std::vector<double>& y,
                                  const std::vector<double>& l1_grid, int n_alphas = 30,
                                  double eps = 1e-4, int n_folds = 5);

double r2_score(const std::vector<double>& y_true, const std::vector<double>& y_pred);

std::vector<double> predict(const ElasticNetFit& fit, const Matrix<double>& x);

}  // namespace phenom::bench
