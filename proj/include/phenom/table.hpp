#pragma once

#include <string>
#include <vector>

namespace phenom {

// One well's embedding plus the metadata keys used for grouping/correction.
struct EmbeddingRecord {
  std::vector<double> vec;
  std::string well_id;
  std::string plate_id;
  std::string experiment_id;
  std::string perturbation_id;
};

struct EmbeddingTable {
  int dim = 0;
  std::vector<EmbeddingRecord> records;

  void validate() const;  // constant D, finite entries
};

}  // namespace phenom
