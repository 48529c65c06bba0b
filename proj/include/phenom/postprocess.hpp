#pragma once

#include <string>
#include <vector>

#include "phenom/matrix.hpp"
#include "phenom/table.hpp"

namespace phenom::post {

enum class GroupKey { plate, experiment };

GroupKey group_key_from_string(const std::string& s);

// Arithmetic mean of crop embeddings -> one well embedding.
std::vector<double> aggregate_well(const std::vector<std::vector<double>>& crop_embeddings);

// Per-group mean subtraction / standardization (eps = 1e-6 floor on stds).
// standardize_by requires >= 2 records per group.
void center_by(EmbeddingTable& table, GroupKey key);
void standardize_by(EmbeddingTable& table, GroupKey key);

// Whitening transform fit on negative controls: PCA rotation plus
// per-component scaling. apply maps x -> (x - mean) * basis / scale.
struct TVNModel {
  std::vector<double> mean;
  Matrix<double> basis;       // D x D, column j = j-th principal direction
  std::vector<double> scale;  // descending sqrt-eigenvalues
  int fitted_on = 0;
};

// Throws on rank-deficient covariance unless allow_rank_deficient, which
// floors the scale at 1e-6 instead.
TVNModel fit_tvn(const EmbeddingTable& neg_controls, bool allow_rank_deficient = false);
void apply_tvn(const TVNModel& model, EmbeddingTable& table);

// Projection onto the top principal components fit on all records.
void pca_transform(EmbeddingTable& table, int n_components);

// PCA eigenvalues (descending) of the table; exposed for tests.
std::vector<double> pca_eigenvalues(const EmbeddingTable& table);

// Normalize each replicate, average, re-normalize. Errors on zero-vector
// input and on antipodal cancellation (normalized sum below 1e-9).
std::vector<double> spherical_mean(const std::vector<std::vector<double>>& replicates);

std::vector<double> negative_control_mean(const EmbeddingTable& table);
void shift_origin_to_controls(EmbeddingTable& table, const std::vector<double>& neg_mean);

// Comma-separated pipeline, e.g. "pca,standardize_by:plate" or "tvn".
// Unknown names raise an error listing the valid operations.
void apply_pipeline(EmbeddingTable& table, const std::string& spec);
std::vector<std::string> valid_pipeline_ops();

}  // namespace phenom::post
