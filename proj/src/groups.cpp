#include "gcnn/groups.hpp"

#include <map>
#include <stdexcept>
#include <string>

namespace gcnn {

std::vector<std::vector<std::size_t>> GroupAssignment::members() const {
  std::vector<std::vector<std::size_t>> out(k);
  for (std::size_t i = 0; i < labels.size(); ++i) out.at(labels[i]).push_back(i);
  return out;
}

void GroupAssignment::validate(bool require_nonempty) const {
  if (k == 0) throw std::invalid_argument("group count must be positive");
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= k) {
      throw std::invalid_argument("label " + std::to_string(labels[i]) + " of series " + std::to_string(i) +
                                  " is outside 0.." + std::to_string(k - 1));
    }
    ++counts[labels[i]];
  }
  if (require_nonempty) {
    for (std::size_t g = 0; g < k; ++g) {
      if (counts[g] == 0) throw std::invalid_argument("group " + std::to_string(g) + " is empty");
    }
  }
}

GroupAssignment GroupAssignment::balanced(std::size_t n, std::size_t k) {
  GroupAssignment a;
  a.k = k;
  for (std::size_t i = 0; i < n; ++i) a.labels.push_back(i % k);
  return a;
}

GroupAssignment GroupAssignment::blocks(std::size_t n, std::size_t k) {
  if (k == 0 || n % k != 0) throw std::invalid_argument("blocks() needs k dividing n");
  GroupAssignment a;
  a.k = k;
  for (std::size_t i = 0; i < n; ++i) a.labels.push_back(i / (n / k));
  return a;
}

bool same_partition(const GroupAssignment& a, const GroupAssignment& b) {
  if (a.labels.size() != b.labels.size()) return false;
  std::map<std::size_t, std::size_t> ab, ba;
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    auto [it1, new1] = ab.emplace(a.labels[i], b.labels[i]);
    auto [it2, new2] = ba.emplace(b.labels[i], a.labels[i]);
    if (it1->second != b.labels[i] || it2->second != a.labels[i]) return false;
  }
  return true;
}

}  // namespace gcnn
