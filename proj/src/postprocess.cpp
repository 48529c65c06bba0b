#include "phenom/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include <Eigen/Dense>

#include "phenom/image.hpp"

namespace phenom::post {

namespace {

constexpr double kEps = 1e-6;

const std::string& key_of(const EmbeddingRecord& r, GroupKey key) {
  return key == GroupKey::plate ? r.plate_id : r.experiment_id;
}

std::map<std::string, std::vector<int>> group_indices(const EmbeddingTable& t, GroupKey key) {
  std::map<std::string, std::vector<int>> groups;
  for (int i = 0; i < static_cast<int>(t.records.size()); ++i)
    groups[key_of(t.records[i], key)].push_back(i);
  return groups;
}

// mean + sample covariance (n-1) of selected rows
void mean_and_cov(const EmbeddingTable& t, const std::vector<int>& rows,
                  Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
  const int d = t.dim;
  const int n = static_cast<int>(rows.size());
  mean = Eigen::VectorXd::Zero(d);
  for (int i : rows)
    for (int j = 0; j < d; ++j) mean[j] += t.records[i].vec[j];
  mean /= n;
  cov = Eigen::MatrixXd::Zero(d, d);
  for (int i : rows) {
    Eigen::VectorXd x(d);
    for (int j = 0; j < d; ++j) x[j] = t.records[i].vec[j] - mean[j];
    cov.noalias() += x * x.transpose();
  }
  cov /= std::max(1, n - 1);
}

// Eigendecomposition with eigenvalues sorted descending.
void sorted_eig(const Eigen::MatrixXd& cov, Eigen::MatrixXd& vecs, Eigen::VectorXd& vals) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  const int d = static_cast<int>(cov.rows());
  vals = Eigen::VectorXd(d);
  vecs = Eigen::MatrixXd(d, d);
  for (int j = 0; j < d; ++j) {  // Eigen returns ascending order
    vals[j] = es.eigenvalues()[d - 1 - j];
    vecs.col(j) = es.eigenvectors().col(d - 1 - j);
  }
}

}  // namespace

GroupKey group_key_from_string(const std::string& s) {
  if (s == "plate") return GroupKey::plate;
  if (s == "experiment") return GroupKey::experiment;
  throw std::invalid_argument("unknown group key: " + s + " (use plate or experiment)");
}

std::vector<double> aggregate_well(const std::vector<std::vector<double>>& crop_embeddings) {
  if (crop_embeddings.empty()) throw std::invalid_argument("aggregate_well: empty list");
  const size_t d = crop_embeddings[0].size();
  std::vector<double> mean(d, 0.0);
  for (const auto& e : crop_embeddings) {
    if (e.size() != d) throw std::invalid_argument("aggregate_well: length mismatch");
    for (size_t j = 0; j < d; ++j) mean[j] += e[j];
  }
  for (size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(crop_embeddings.size());
  return mean;
}

void center_by(EmbeddingTable& table, GroupKey key) {
  table.validate();
  for (auto& [name, rows] : group_indices(table, key)) {
    std::vector<double> mean(table.dim, 0.0);
    for (int i : rows)
      for (int j = 0; j < table.dim; ++j) mean[j] += table.records[i].vec[j];
    for (int j = 0; j < table.dim; ++j) mean[j] /= static_cast<double>(rows.size());
    for (int i : rows)
      for (int j = 0; j < table.dim; ++j) table.records[i].vec[j] -= mean[j];
  }
}

void standardize_by(EmbeddingTable& table, GroupKey key) {
  table.validate();
  for (auto& [name, rows] : group_indices(table, key)) {
    if (rows.size() < 2)
      throw std::invalid_argument("standardize_by: group '" + name + "' has fewer than 2 records");
    const int n = static_cast<int>(rows.size());
    std::vector<double> mean(table.dim, 0.0), var(table.dim, 0.0);
    for (int i : rows)
      for (int j = 0; j < table.dim; ++j) mean[j] += table.records[i].vec[j];
    for (int j = 0; j < table.dim; ++j) mean[j] /= n;
    for (int i : rows)
      for (int j = 0; j < table.dim; ++j) {
        double d = table.records[i].vec[j] - mean[j];
        var[j] += d * d;
      }
    for (int j = 0; j < table.dim; ++j) var[j] /= (n - 1);
    for (int i : rows)
      for (int j = 0; j < table.dim; ++j)
        table.records[i].vec[j] =
            (table.records[i].vec[j] - mean[j]) / std::max(std::sqrt(var[j]), kEps);
  }
}

TVNModel fit_tvn(const EmbeddingTable& neg_controls, bool allow_rank_deficient) {
  neg_controls.validate();
  const int d = neg_controls.dim;
  const int n = static_cast<int>(neg_controls.records.size());
  if (n < 2) throw std::invalid_argument("fit_tvn: need at least 2 negative controls");

  std::vector<int> rows(n);
  for (int i = 0; i < n; ++i) rows[i] = i;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  mean_and_cov(neg_controls, rows, mean, cov);
  Eigen::MatrixXd vecs;
  Eigen::VectorXd vals;
  sorted_eig(cov, vecs, vals);

  const double tol = 1e-10 * std::max(vals[0], 1.0);
  if (vals[d - 1] <= tol && !allow_rank_deficient)
    throw std::runtime_error(
        "fit_tvn: rank-deficient covariance (" + std::to_string(n) + " controls for dim " +
        std::to_string(d) + "); need >= D+1 full-rank controls or the ridge option");

  TVNModel model;
  model.fitted_on = n;
  model.mean.assign(mean.data(), mean.data() + d);
  model.basis = Matrix<double>(d, d);
  model.scale.resize(d);
  for (int j = 0; j < d; ++j) {
    model.scale[j] = std::max(std::sqrt(std::max(vals[j], 0.0)), allow_rank_deficient ? kEps : 0.0);
    for (int i = 0; i < d; ++i) model.basis(i, j) = vecs(i, j);
  }
  return model;
}

void apply_tvn(const TVNModel& model, EmbeddingTable& table) {
  const int d = table.dim;
  if (static_cast<int>(model.mean.size()) != d)
    throw std::invalid_argument("apply_tvn: dimension mismatch");
  for (auto& rec : table.records) {
    std::vector<double> y(d, 0.0);
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int i = 0; i < d; ++i) acc += (rec.vec[i] - model.mean[i]) * model.basis(i, j);
      y[j] = acc / model.scale[j];
    }
    rec.vec = std::move(y);
  }
}

void pca_transform(EmbeddingTable& table, int n_components) {
  table.validate();
  const int d = table.dim;
  if (n_components < 1 || n_components > d)
    throw std::invalid_argument("pca_transform: invalid component count");
  const int n = static_cast<int>(table.records.size());
  if (n < 2) throw std::invalid_argument("pca_transform: need at least 2 records");

  std::vector<int> rows(n);
  for (int i = 0; i < n; ++i) rows[i] = i;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  mean_and_cov(table, rows, mean, cov);
  Eigen::MatrixXd vecs;
  Eigen::VectorXd vals;
  sorted_eig(cov, vecs, vals);

  for (auto& rec : table.records) {
    std::vector<double> y(n_components, 0.0);
    for (int j = 0; j < n_components; ++j) {
      double acc = 0.0;
      for (int i = 0; i < d; ++i) acc += (rec.vec[i] - mean[i]) * vecs(i, j);
      y[j] = acc;
    }
    rec.vec = std::move(y);
  }
  table.dim = n_components;
}

std::vector<double> pca_eigenvalues(const EmbeddingTable& table) {
  const int n = static_cast<int>(table.records.size());
  std::vector<int> rows(n);
  for (int i = 0; i < n; ++i) rows[i] = i;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  mean_and_cov(table, rows, mean, cov);
  Eigen::MatrixXd vecs;
  Eigen::VectorXd vals;
  sorted_eig(cov, vecs, vals);
  return std::vector<double>(vals.data(), vals.data() + table.dim);
}

std::vector<double> spherical_mean(const std::vector<std::vector<double>>& replicates) {
  if (replicates.empty()) throw std::invalid_argument("spherical_mean: empty input");
  const size_t d = replicates[0].size();
  std::vector<double> sum(d, 0.0);
  for (const auto& v : replicates) {
    if (v.size() != d) throw std::invalid_argument("spherical_mean: length mismatch");
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw std::invalid_argument("spherical_mean: zero replicate vector");
    for (size_t j = 0; j < d; ++j) sum[j] += v[j] / norm;
  }
  for (size_t j = 0; j < d; ++j) sum[j] /= static_cast<double>(replicates.size());
  double norm = 0.0;
  for (double x : sum) norm += x * x;
  norm = std::sqrt(norm);
  if (norm < 1e-9)
    throw std::invalid_argument("spherical_mean: undefined mean (antipodal cancellation)");
  for (size_t j = 0; j < d; ++j) sum[j] /= norm;
  return sum;
}

std::vector<double> negative_control_mean(const EmbeddingTable& table) {
  std::vector<double> mean(table.dim, 0.0);
  int n = 0;
  for (const auto& r : table.records) {
    if (r.perturbation_id != kNegControl) continue;
    for (int j = 0; j < table.dim; ++j) mean[j] += r.vec[j];
    ++n;
  }
  if (n == 0) throw std::invalid_argument("negative_control_mean: no NEG_CONTROL records");
  for (int j = 0; j < table.dim; ++j) mean[j] /= n;
  return mean;
}

void shift_origin_to_controls(EmbeddingTable& table, const std::vector<double>& neg_mean) {
  if (static_cast<int>(neg_mean.size()) != table.dim)
    throw std::invalid_argument("shift_origin_to_controls: dimension mismatch");
  for (auto& rec : table.records)
    for (int j = 0; j < table.dim; ++j) rec.vec[j] -= neg_mean[j];
}

std::vector<std::string> valid_pipeline_ops() {
  return {"center_by:plate",      "center_by:experiment", "standardize_by:plate",
          "standardize_by:experiment", "pca", "pca:<k>", "tvn", "tvn_ridge", "shift_origin"};
}

void apply_pipeline(EmbeddingTable& table, const std::string& spec) {
  std::vector<std::string> ops;
  std::string cur;
  for (char c : spec) {
    if (c == ',') {
      if (!cur.empty()) ops.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) ops.push_back(cur);

  for (const auto& op : ops) {
    std::string name = op, arg;
    if (auto pos = op.find(':'); pos != std::string::npos) {
      name = op.substr(0, pos);
      arg = op.substr(pos + 1);
    }
    if (name == "center_by") {
      center_by(table, group_key_from_string(arg));
    } else if (name == "standardize_by") {
      standardize_by(table, group_key_from_string(arg));
    } else if (name == "pca") {
      pca_transform(table, arg.empty() ? table.dim : std::stoi(arg));
    } else if (name == "tvn" || name == "tvn_ridge") {
      EmbeddingTable controls;
      controls.dim = table.dim;
      for (const auto& r : table.records)
        if (r.perturbation_id == kNegControl) controls.records.push_back(r);
      if (controls.records.empty())
        throw std::invalid_argument("pipeline tvn: table has no NEG_CONTROL records");
      TVNModel model = fit_tvn(controls, name == "tvn_ridge");
      apply_tvn(model, table);
    } else if (name == "shift_origin") {
      shift_origin_to_controls(table, negative_control_mean(table));
    } else {
      std::string msg = "unknown transform op '" + op + "'; valid ops:";
      for (const auto& v : valid_pipeline_ops()) msg += " " + v;
      throw std::invalid_argument(msg);
    }
  }
}

}  // namespace phenom::post
