#pragma once

#include <map>
#include <string>
#include <vector>

#include "phenom/matrix.hpp"
#include "phenom/parallel.hpp"
#include "phenom/relationships.hpp"
#include "phenom/table.hpp"

namespace phenom::bench {

// MxM cosine similarities of the rows; throws on zero-norm rows.
Matrix<double> cosine_similarity_matrix(const Matrix<double>& vectors,
                                        Exec ex = Exec::parallel);

// Linear-interpolation percentile (pct in [0,100]) of a value vector.
double percentile_linear(std::vector<double> values, double pct);

struct RecallResult {
  double recall = 0.0;
  int n_known = 0;
  long long n_total_pairs = 0;
  double low_threshold = 0.0;
  double high_threshold = 0.0;
};

// Fraction of known pairs whose similarity lands in the top or bottom
// tail_pct percent of all off-diagonal similarities.
RecallResult recall_known_pairs(const Matrix<double>& sims, const std::vector<std::string>& ids,
                                const RelationshipDB& db, double tail_pct = 5.0);

// AP over a ranked relevance list: mean over positives of precision at each
// positive's rank.
double average_precision(const std::vector<char>& ranked_relevance);

// Benjamini-Hochberg adjustment; q-values clamped to [0,1], monotone in the
// p-value ranking.
std::vector<double> benjamini_hochberg(const std::vector<double>& p_values);

enum class RetrievalTask { PERTURBATION, SIBLINGS };

struct RetrievalConfig {
  RetrievalTask task = RetrievalTask::PERTURBATION;
  double q_threshold = 0.05;
  int n_permutations = 1000;
};

struct RetrievalResult {
  double fraction_retrieved = 0.0;
  std::vector<std::string> perturbations;
  std::vector<double> ap;
  std::vector<double> p_values;
  std::vector<double> q_values;
  std::vector<char> retrieved;
};

// Per perturbation: spherical-mean query over its replicates, candidates
// ranked against pooled negative controls by cosine similarity, AP scored,
// permutation-tested (exhaustive enumeration whenever the number of distinct
// relabelings fits inside n_permutations), then BH-adjusted across
// perturbations. q < q_threshold counts as retrieved.
RetrievalResult retrieval_benchmark(const EmbeddingTable& records, const RetrievalConfig& config,
                                    const RelationshipDB* siblings, uint64_t seed,
                                    Exec ex = Exec::parallel);

// ---------------------------------------------------------------------------
// morphology-feature regression
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& feature_categories() {
  static const std::vector<std::string> cats = {"AreaShape", "Intensity", "Neighbors",
                                                "RadialDistribution", "Texture"};
  return cats;
}

struct FeatureTable {
  std::vector<std::string> well_ids;
  std::vector<std::string> names;  // "<Category>_<feature>"
  Matrix<double> values;           // wells x features

  void validate() const;  // finite values, known category prefixes
  static std::string category_of(const std::string& name);
};

// Population-moment sample skewness m3 / m2^(3/2); 0 for constant columns.
double sample_skewness(const std::vector<double>& values);

enum class SkewBranch { LOG, SQUARE, IDENTITY };

// Per column: skew > 0.5 -> log (with a min-shift+1 when values <= 0),
// skew < -0.5 -> square, else identity; then center to 0 and scale to unit
// variance. Constant columns become all zeros.
std::vector<SkewBranch> skew_transform(FeatureTable& table);

struct CategoryStat {
  double median = 0.0;
  double mad = 0.0;
  int n_features = 0;
};

struct RegressionReport {
  std::vector<std::string> feature_names;
  std::vector<double> r2;
  std::map<std::string, CategoryStat> per_category;
};

// One elastic-net regressor per feature column: L1-ratio grid
// {0.1, 0.6, 0.9, 0.95, 0.99}, data-determined alpha path, 5-fold CV, refit
// on the full training set, R^2 on the held-out experiment.
RegressionReport fit_feature_regressors(const Matrix<double>& train_embeddings,
                                        const FeatureTable& train_features,
                                        const Matrix<double>& test_embeddings,
                                        const FeatureTable& test_features,
                                        Exec ex = Exec::parallel);

inline const std::vector<double>& l1_ratio_grid() {
  static const std::vector<double> grid = {0.1, 0.6, 0.9, 0.95, 0.99};
  return grid;
}

}  // namespace phenom::bench
