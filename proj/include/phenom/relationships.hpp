#pragma once

#include <set>
#include <string>
#include <utility>

namespace phenom {

// Unordered pairs of perturbation ids with distinct endpoints, stored in
// canonical (min,max) order so the set is symmetric by construction.
struct RelationshipDB {
  std::string name;
  std::set<std::pair<std::string, std::string>> pairs;

  void add(const std::string& a, const std::string& b) {
    if (a == b) return;  // no self-pairs
    pairs.insert(a < b ? std::make_pair(a, b) : std::make_pair(b, a));
  }
  bool contains(const std::string& a, const std::string& b) const {
    return pairs.count(a < b ? std::make_pair(a, b) : std::make_pair(b, a)) > 0;
  }
};

}  // namespace phenom
