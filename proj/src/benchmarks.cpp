#include "phenom/benchmarks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "phenom/elastic_net.hpp"
#include "phenom/image.hpp"
#include "phenom/kernels.hpp"
#include "phenom/postprocess.hpp"
#include "phenom/rng.hpp"

namespace phenom::bench {

Matrix<double> cosine_similarity_matrix(const Matrix<double>& vectors, Exec ex) {
  const int m = vectors.rows(), d = vectors.cols();
  if (m == 0) throw std::invalid_argument("cosine_similarity_matrix: empty input");
  for (int i = 0; i < m; ++i) {
    double n = 0.0;
    for (int j = 0; j < d; ++j) n += vectors(i, j) * vectors(i, j);
    if (n == 0.0)
      throw std::invalid_argument("cosine_similarity_matrix: zero-norm row " + std::to_string(i));
  }
  Matrix<double> sims(m, m);
  kernels::cosine_similarity(vectors.data(), m, d, sims.data(), ex);
  return sims;
}

double percentile_linear(std::vector<double> values, double pct) {
  if (values.empty()) throw std::invalid_argument("percentile_linear: empty input");
  if (pct < 0.0 || pct > 100.0) throw std::invalid_argument("percentile_linear: pct out of range");
  std::sort(values.begin(), values.end());
  const double rank = pct / 100.0 * static_cast<double>(values.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(rank));
  const size_t hi = static_cast<size_t>(std::ceil(rank));
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

RecallResult recall_known_pairs(const Matrix<double>& sims, const std::vector<std::string>& ids,
                                const RelationshipDB& db, double tail_pct) {
  const int m = sims.rows();
  if (m != sims.cols() || m != static_cast<int>(ids.size()))
    throw std::invalid_argument("recall_known_pairs: shape mismatch");
  if (tail_pct <= 0.0 || tail_pct >= 50.0)
    throw std::invalid_argument("recall_known_pairs: tail_pct must be in (0, 50)");

  std::map<std::string, int> index;
  for (int i = 0; i < m; ++i) index[ids[i]] = i;

  std::vector<double> all;
  all.reserve(static_cast<size_t>(m) * (m - 1) / 2);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) all.push_back(sims(i, j));
  if (all.empty()) throw std::invalid_argument("recall_known_pairs: need at least 2 records");

  RecallResult res;
  res.n_total_pairs = static_cast<long long>(all.size());
  res.low_threshold = percentile_linear(all, tail_pct);
  res.high_threshold = percentile_linear(all, 100.0 - tail_pct);

  int known = 0, hit = 0;
  for (const auto& [a, b] : db.pairs) {
    auto ia = index.find(a), ib = index.find(b);
    if (ia == index.end() || ib == index.end()) continue;  // restrict to present ids
    ++known;
    double s = sims(ia->second, ib->second);
    if (s <= res.low_threshold || s >= res.high_threshold) ++hit;
  }
  if (known == 0)
    throw std::invalid_argument("recall_known_pairs: no database pairs in the id index");
  res.n_known = known;
  res.recall = static_cast<double>(hit) / known;
  return res;
}

double average_precision(const std::vector<char>& ranked_relevance) {
  int positives = 0;
  for (char r : ranked_relevance) positives += r ? 1 : 0;
  if (positives == 0) throw std::invalid_argument("average_precision: no positives");
  double ap = 0.0;
  int seen = 0;
  for (size_t k = 0; k < ranked_relevance.size(); ++k) {
    if (!ranked_relevance[k]) continue;
    ++seen;
    ap += static_cast<double>(seen) / static_cast<double>(k + 1);
  }
  return ap / positives;
}

std::vector<double> benjamini_hochberg(const std::vector<double>& p_values) {
  const int n = static_cast<int>(p_values.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return p_values[a] < p_values[b]; });
  std::vector<double> q(n, 0.0);
  double running = 1.0;
  for (int rank = n - 1; rank >= 0; --rank) {
    double adj = p_values[order[rank]] * n / static_cast<double>(rank + 1);
    running = std::min(running, std::min(1.0, adj));
    q[order[rank]] = running;
  }
  return q;
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double na = 0.0, nb = 0.0, dot = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    na += a[i] * a[i];
    nb += b[i] * b[i];
    dot += a[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

// Like post::spherical_mean, but degenerate sums fall back to the raw average
// instead of throwing; permutation draws may hit near-antipodal subsets.
std::vector<double> spherical_mean_tolerant(const std::vector<const std::vector<double>*>& vs) {
  const size_t d = vs[0]->size();
  std::vector<double> sum(d, 0.0);
  for (const auto* v : vs) {
    double norm = 0.0;
    for (double x : *v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    for (size_t j = 0; j < d; ++j) sum[j] += (*v)[j] / norm;
  }
  for (size_t j = 0; j < d; ++j) sum[j] /= static_cast<double>(vs.size());
  double norm = 0.0;
  for (double x : sum) norm += x * x;
  norm = std::sqrt(norm);
  if (norm >= 1e-9)
    for (size_t j = 0; j < d; ++j) sum[j] /= norm;
  return sum;
}

// AP of `subset` treated as the positive labels over the pool ranking. For
// recompute_query the query is the spherical mean of the subset (perturbation
// task); otherwise `fixed_query` ranks the pool (siblings task).
double pool_statistic(const std::vector<std::vector<double>>& pool,
                      const std::vector<int>& subset, bool recompute_query,
                      const std::vector<double>* fixed_query) {
  const int n = static_cast<int>(pool.size());
  std::vector<char> is_pos(n, 0);
  for (int s : subset) is_pos[s] = 1;

  std::vector<double> query;
  if (recompute_query) {
    std::vector<const std::vector<double>*> members;
    for (int s : subset) members.push_back(&pool[s]);
    query = spherical_mean_tolerant(members);
  } else {
    query = *fixed_query;
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> score(n);
  for (int i = 0; i < n; ++i) score[i] = cosine(query, pool[i]);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return a < b;  // documented deterministic tie-break
  });
  std::vector<char> rel(n);
  for (int i = 0; i < n; ++i) rel[i] = is_pos[order[i]];
  return average_precision(rel);
}

// C(n, k) capped at `cap` to avoid overflow; we only need "<= cap".
long long combinations_capped(int n, int k, long long cap) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  long long c = 1;
  for (int i = 1; i <= k; ++i) {
    c = c * (n - k + i) / i;
    if (c > cap) return cap + 1;
  }
  return c;
}

}  // namespace

RetrievalResult retrieval_benchmark(const EmbeddingTable& records, const RetrievalConfig& config,
                                    const RelationshipDB* siblings, uint64_t seed, Exec ex) {
  records.validate();
  if (config.n_permutations < 100)
    throw std::invalid_argument("retrieval_benchmark: n_permutations must be >= 100");

  std::vector<int> negatives;
  std::map<std::string, std::vector<int>> groups;
  for (int i = 0; i < static_cast<int>(records.records.size()); ++i) {
    const auto& r = records.records[i];
    if (r.perturbation_id == kNegControl)
      negatives.push_back(i);
    else
      groups[r.perturbation_id].push_back(i);
  }
  if (negatives.empty()) throw std::invalid_argument("retrieval_benchmark: no negative controls");
  if (groups.empty()) throw std::invalid_argument("retrieval_benchmark: no perturbations");

  // aggregates for queries and sibling candidates
  std::map<std::string, std::vector<double>> aggregate;
  for (const auto& [pert, rows] : groups) {
    std::vector<std::vector<double>> reps;
    for (int i : rows) reps.push_back(records.records[i].vec);
    aggregate[pert] = post::spherical_mean(reps);
  }

  std::vector<std::string> evaluated;
  std::vector<std::vector<std::string>> sib_sets;
  if (config.task == RetrievalTask::SIBLINGS) {
    if (!siblings)
      throw std::invalid_argument("retrieval_benchmark: siblings task needs a relationship DB");
    for (const auto& [pert, rows] : groups) {
      std::vector<std::string> sibs;
      for (const auto& [other, orows] : groups)
        if (other != pert && siblings->contains(pert, other)) sibs.push_back(other);
      if (!sibs.empty()) {
        evaluated.push_back(pert);
        sib_sets.push_back(std::move(sibs));
      }
    }
    if (evaluated.empty())
      throw std::invalid_argument("retrieval_benchmark: no perturbation has a sibling group");
  } else {
    for (const auto& [pert, rows] : groups) evaluated.push_back(pert);
  }

  const int ne = static_cast<int>(evaluated.size());
  RetrievalResult res;
  res.perturbations = evaluated;
  res.ap.assign(ne, 0.0);
  res.p_values.assign(ne, 1.0);

  const auto& cgroups = groups;
  const auto& caggregate = aggregate;
#pragma omp parallel for schedule(dynamic) if (ex == Exec::parallel)
  for (int pi = 0; pi < ne; ++pi) {
    const std::string& pert = evaluated[pi];
    std::vector<std::vector<double>> pool;
    bool recompute_query = config.task == RetrievalTask::PERTURBATION;
    const std::vector<double>* fixed_query = nullptr;
    if (config.task == RetrievalTask::PERTURBATION) {
      for (int i : cgroups.at(pert)) pool.push_back(records.records[i].vec);
    } else {
      for (const auto& s : sib_sets[pi]) pool.push_back(caggregate.at(s));
      fixed_query = &caggregate.at(pert);
    }
    const int k = static_cast<int>(pool.size());
    for (int i : negatives) pool.push_back(records.records[i].vec);
    const int n_pool = static_cast<int>(pool.size());

    std::vector<int> observed(k);
    std::iota(observed.begin(), observed.end(), 0);
    const double ap_obs = pool_statistic(pool, observed, recompute_query, fixed_query);

    long long total = combinations_capped(n_pool, k, config.n_permutations);
    long long b = 0, m = 0;
    if (total <= config.n_permutations) {
      // exhaustive enumeration of all k-subsets (lexicographic)
      std::vector<int> comb(k);
      std::iota(comb.begin(), comb.end(), 0);
      while (true) {
        if (pool_statistic(pool, comb, recompute_query, fixed_query) >= ap_obs) ++b;
        ++m;
        int i = k - 1;
        while (i >= 0 && comb[i] == n_pool - k + i) --i;
        if (i < 0) break;
        ++comb[i];
        for (int j = i + 1; j < k; ++j) comb[j] = comb[j - 1] + 1;
      }
    } else {
      auto rng = make_rng(mix_seed(seed, 0x52455452ULL, static_cast<uint64_t>(pi)));
      std::vector<int> idx(n_pool);
      for (int draw = 0; draw < config.n_permutations; ++draw) {
        std::iota(idx.begin(), idx.end(), 0);
        std::vector<int> subset(k);
        for (int j = 0; j < k; ++j) {
          std::uniform_int_distribution<int> d(j, n_pool - 1);
          std::swap(idx[j], idx[d(rng)]);
          subset[j] = idx[j];
        }
        std::sort(subset.begin(), subset.end());
        if (pool_statistic(pool, subset, recompute_query, fixed_query) >= ap_obs) ++b;
        ++m;
      }
    }
    res.ap[pi] = ap_obs;
    res.p_values[pi] = static_cast<double>(1 + b) / static_cast<double>(1 + m);
  }

  res.q_values = benjamini_hochberg(res.p_values);
  res.retrieved.assign(ne, 0);
  int n_ret = 0;
  for (int i = 0; i < ne; ++i) {
    res.retrieved[i] = res.q_values[i] < config.q_threshold ? 1 : 0;
    n_ret += res.retrieved[i];
  }
  res.fraction_retrieved = static_cast<double>(n_ret) / ne;
  return res;
}

// ---------------------------------------------------------------------------
// feature regression
// ---------------------------------------------------------------------------

std::string FeatureTable::category_of(const std::string& name) {
  auto pos = name.find('_');
  if (pos == std::string::npos)
    throw std::invalid_argument("feature name lacks a category prefix: " + name);
  return name.substr(0, pos);
}

void FeatureTable::validate() const {
  if (values.rows() != static_cast<int>(well_ids.size()) ||
      values.cols() != static_cast<int>(names.size()))
    throw std::invalid_argument("FeatureTable: shape mismatch");
  const auto& cats = feature_categories();
  for (const auto& n : names) {
    std::string c = category_of(n);
    if (std::find(cats.begin(), cats.end(), c) == cats.end())
      throw std::invalid_argument("FeatureTable: unknown category '" + c + "' in " + n);
  }
  for (size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values.data()[i]))
      throw std::invalid_argument("FeatureTable: non-finite value");
}

double sample_skewness(const std::vector<double>& values) {
  const size_t n = values.size();
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double m2 = 0.0, m3 = 0.0;
  for (double v : values) {
    double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= static_cast<double>(n);
  m3 /= static_cast<double>(n);
  if (m2 <= 0.0) return 0.0;
  return m3 / std::pow(m2, 1.5);
}

std::vector<SkewBranch> skew_transform(FeatureTable& table) {
  table.validate();
  const int rows = table.values.rows(), cols = table.values.cols();
  std::vector<SkewBranch> branches(cols, SkewBranch::IDENTITY);
  for (int j = 0; j < cols; ++j) {
    std::vector<double> col(rows);
    for (int i = 0; i < rows; ++i) col[i] = table.values(i, j);
    const double skew = sample_skewness(col);
    if (skew > 0.5) {
      branches[j] = SkewBranch::LOG;
      double mn = *std::min_element(col.begin(), col.end());
      double shift = mn <= 0.0 ? 1.0 - mn : 0.0;  // documented positivity shift
      for (double& v : col) v = std::log(v + shift);
    } else if (skew < -0.5) {
      branches[j] = SkewBranch::SQUARE;
      for (double& v : col) v = v * v;
    }
    double mean = 0.0;
    for (double v : col) mean += v;
    mean /= rows;
    double var = 0.0;
    for (double v : col) var += (v - mean) * (v - mean);
    var /= std::max(1, rows - 1);
    double sd = std::sqrt(var);
    for (int i = 0; i < rows; ++i)
      table.values(i, j) = sd > 0.0 ? (col[i] - mean) / sd : 0.0;
  }
  return branches;
}

RegressionReport fit_feature_regressors(const Matrix<double>& train_embeddings,
                                        const FeatureTable& train_features,
                                        const Matrix<double>& test_embeddings,
                                        const FeatureTable& test_features, Exec ex) {
  train_features.validate();
  test_features.validate();
  if (train_embeddings.rows() < 5)
    throw std::invalid_argument("fit_feature_regressors: fewer than 5 training rows");
  if (train_embeddings.rows() != train_features.values.rows() ||
      test_embeddings.rows() != test_features.values.rows() ||
      train_embeddings.cols() != test_embeddings.cols() ||
      train_features.names != test_features.names)
    throw std::invalid_argument("fit_feature_regressors: dimension mismatch");

  const int nf = static_cast<int>(train_features.names.size());
  RegressionReport report;
  report.feature_names = train_features.names;
  report.r2.assign(nf, 0.0);

#pragma omp parallel for schedule(dynamic) if (ex == Exec::parallel)
  for (int f = 0; f < nf; ++f) {
    std::vector<double> y_train(train_features.values.rows());
    for (int i = 0; i < train_features.values.rows(); ++i) y_train[i] = train_features.values(i, f);
    auto cv = elastic_net_cv(train_embeddings, y_train, l1_ratio_grid());
    std::vector<double> y_pred = predict(cv.fit, test_embeddings);
    std::vector<double> y_test(test_features.values.rows());
    for (int i = 0; i < test_features.values.rows(); ++i) y_test[i] = test_features.values(i, f);
    report.r2[f] = r2_score(y_test, y_pred);
  }

  std::map<std::string, std::vector<double>> by_cat;
  for (int f = 0; f < nf; ++f)
    by_cat[FeatureTable::category_of(report.feature_names[f])].push_back(report.r2[f]);
  auto median_of = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  for (auto& [cat, r2s] : by_cat) {
    CategoryStat stat;
    stat.n_features = static_cast<int>(r2s.size());
    stat.median = median_of(r2s);
    std::vector<double> dev;
    for (double v : r2s) dev.push_back(std::abs(v - stat.median));
    stat.mad = median_of(dev);
    report.per_category[cat] = stat;
  }
  return report;
}

}  // namespace phenom::bench
