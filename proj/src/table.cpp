#include "phenom/table.hpp"

#include <cmath>
#include <stdexcept>

namespace phenom {

void EmbeddingTable::validate() const {
  for (const auto& r : records) {
    if (static_cast<int>(r.vec.size()) != dim)
      throw std::invalid_argument("EmbeddingTable: inconsistent dimension");
    for (double v : r.vec)
      if (!std::isfinite(v)) throw std::invalid_argument("EmbeddingTable: non-finite entry");
  }
}

}  // namespace phenom
