#include "gcnn/specgroup.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "gcnn/errors.hpp"
#include "gcnn/rng.hpp"
#include "gcnn/tsdata.hpp"

namespace gcnn {

SimilarityGraph SimilarityGraph::from_weights(Tensor weights) {
  if (weights.rank() != 2 || weights.dim(0) != weights.dim(1)) {
    throw ShapeError("similarity weights must be square, got " + shape_string(weights.shape()));
  }
  const std::size_t n = weights.dim(0);
  SimilarityGraph g;
  g.degrees.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (weights.at(i, i) != 0.0) throw DataError("similarity graph has a nonzero diagonal at vertex " + std::to_string(i));
    for (std::size_t j = 0; j < n; ++j) {
      const double w = weights.at(i, j);
      if (w < 0.0) throw DataError("similarity weights must be nonnegative");
      if (std::abs(w - weights.at(j, i)) > 1e-12) throw DataError("similarity weights are not symmetric");
      g.degrees[i] += w;
    }
  }
  g.weights = std::move(weights);
  return g;
}

SimilarityGraph similarity_from_rows(const Tensor& rows, std::span<const std::string> names) {
  if (rows.rank() != 2) throw ShapeError("similarity_from_rows expects [N x L]");
  const std::size_t n = rows.dim(0), len = rows.dim(1);
  if (n < 2) throw DataError("similarity needs at least two series");
  if (len < 2) throw DataError("similarity needs at least two time steps");
  auto label = [&](std::size_t i) { return i < names.size() ? names[i] : "#" + std::to_string(i); };

  std::vector<std::vector<double>> centered(n, std::vector<double>(len));
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double m = 0.0;
    for (std::size_t t = 0; t < len; ++t) m += rows.at(i, t);
    m /= static_cast<double>(len);
    double ss = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
      centered[i][t] = rows.at(i, t) - m;
      ss += centered[i][t] * centered[i][t];
    }
    if (!(ss > 0.0)) throw DataError("series '" + label(i) + "' has zero variance");
    norms[i] = std::sqrt(ss);
  }
  Tensor w({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t t = 0; t < len; ++t) dot += centered[i][t] * centered[j][t];
      const double r = std::min(1.0, std::abs(dot / (norms[i] * norms[j])));
      w.at(i, j) = r;
      w.at(j, i) = r;
    }
  }
  return SimilarityGraph::from_weights(std::move(w));
}

SimilarityGraph similarity_from_series(const TimeSeriesDataset& data, std::size_t begin, std::size_t end) {
  const std::size_t n = data.series_count();
  if (begin >= end || end > data.length()) throw DataError("similarity range is empty or out of bounds");
  Tensor rows({n, end - begin});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = begin; t < end; ++t) {
      if (!data.present(i, t)) {
        throw DataError("series '" + data.names[i] + "' has a missing value at step " + std::to_string(t));
      }
      rows.at(i, t - begin) = data.value(i, t);
    }
  }
  return similarity_from_rows(rows, data.names);
}

SimilarityGraph similarity_from_series(const TimeSeriesDataset& data) {
  return similarity_from_series(data, 0, data.length());
}

namespace {

void check_assignment(const SimilarityGraph& g, const GroupAssignment& a) {
  if (a.size() != g.size()) {
    throw ShapeError("assignment has " + std::to_string(a.size()) + " labels for a graph of " +
                     std::to_string(g.size()) + " vertices");
  }
  a.validate(false);
}

double link_out(const SimilarityGraph& g, const GroupAssignment& a, std::size_t k) {
  double link = 0.0;
  const std::size_t n = g.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (a.labels[i] != k) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (a.labels[j] != k) link += g.weights.at(i, j);
    }
  }
  return link;
}

}  // namespace

namespace {

// Groups ordered by their lowest-index member, so relabeling a partition
// leaves the summation order (and the rounded result) unchanged.
std::vector<std::size_t> canonical_group_order(const GroupAssignment& a) {
  std::vector<std::size_t> order;
  std::vector<bool> seen(a.k, false);
  for (std::size_t l : a.labels) {
    if (!seen[l]) {
      seen[l] = true;
      order.push_back(l);
    }
  }
  for (std::size_t k = 0; k < a.k; ++k)
    if (!seen[k]) order.push_back(k);
  return order;
}

}  // namespace

double cut_value(const SimilarityGraph& g, const GroupAssignment& a) {
  check_assignment(g, a);
  double total = 0.0;
  for (std::size_t k : canonical_group_order(a)) total += link_out(g, a, k);
  return 0.5 * total;
}

double ncut_value(const SimilarityGraph& g, const GroupAssignment& a) {
  check_assignment(g, a);
  double total = 0.0;
  for (std::size_t k : canonical_group_order(a)) {
    double vol = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (a.labels[i] == k) vol += g.degrees[i];
    }
    if (!(vol > 0.0)) throw DataError("group " + std::to_string(k + 1) + " has zero volume");
    total += link_out(g, a, k) / vol;
  }
  return 0.5 * total;
}

Laplacians laplacians(const SimilarityGraph& g) {
  const std::size_t n = g.size();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(g.degrees[i] > 0.0)) throw DataError("vertex " + std::to_string(i) + " is isolated (zero degree)");
    inv_sqrt[i] = 1.0 / std::sqrt(g.degrees[i]);
  }
  Laplacians out{Tensor({n, n}), Tensor({n, n})};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double l = (i == j ? g.degrees[i] : 0.0) - g.weights.at(i, j);
      out.unnormalized.at(i, j) = l;
      out.symmetric.at(i, j) = i == j ? 1.0 - g.weights.at(i, i) / g.degrees[i] : l * inv_sqrt[i] * inv_sqrt[j];
    }
  }
  return out;
}

namespace {

void fix_sign(Tensor& vectors, std::size_t col) {
  const std::size_t n = vectors.dim(0);
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (std::abs(vectors.at(i, col)) > std::abs(vectors.at(best, col))) best = i;
  }
  if (vectors.at(best, col) < 0.0) {
    for (std::size_t i = 0; i < n; ++i) vectors.at(i, col) = -vectors.at(i, col);
  }
}

}  // namespace

EigenDecomposition sym_eig(const Tensor& input, const EigenOptions& options) {
  if (input.rank() != 2 || input.dim(0) != input.dim(1)) throw ShapeError("sym_eig expects a square matrix");
  const std::size_t n = input.dim(0);
  if (n > options.max_dimension) {
    throw ShapeError("sym_eig: dimension " + std::to_string(n) + " exceeds the dense limit " +
                     std::to_string(options.max_dimension));
  }
  double scale = 0.0, frob = 0.0;
  for (double v : input.data()) {
    scale = std::max(scale, std::abs(v));
    frob += v * v;
  }
  frob = std::sqrt(frob);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(input.at(i, j) - input.at(j, i)) > options.symmetry_tolerance * std::max(1.0, scale)) {
        throw ShapeError("sym_eig: matrix is not symmetric at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }

  std::vector<double> a(input.data().begin(), input.data().end());
  // Symmetrise exactly so the rotations see a symmetric matrix.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a[i * n + j] = a[j * n + i] = 0.5 * (a[i * n + j] + a[j * n + i]);
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  const double target = 1e-15 * std::max(frob, std::numeric_limits<double>::min());
  bool converged = false;
  for (std::size_t sweep = 0; sweep < options.max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
    if (std::sqrt(2.0 * off) <= target) {
      converged = true;
      break;
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double tau = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        double t;
        if (std::abs(tau) > 1e150) {
          t = 0.5 / tau;
        } else {
          t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        }
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        a[p * n + q] = a[q * n + p] = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
    // Accept a result at the rounding floor even if the strict target was missed.
    if (std::sqrt(2.0 * off) > 1e-12 * std::max(frob, 1.0)) {
      throw NumericalError("sym_eig did not converge within " + std::to_string(options.max_sweeps) + " sweeps");
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x * n + x] < a[y * n + y]; });
  EigenDecomposition out{std::vector<double>(n), Tensor({n, n})};
  for (std::size_t c = 0; c < n; ++c) {
    out.values[c] = a[order[c] * n + order[c]];
    for (std::size_t r = 0; r < n; ++r) out.vectors.at(r, c) = v[r * n + order[c]];
    fix_sign(out.vectors, c);
  }
  return out;
}

namespace {

double sq_dist(const Tensor& pts, std::size_t i, const std::vector<double>& c) {
  double d = 0.0;
  for (std::size_t j = 0; j < c.size(); ++j) {
    const double e = pts.at(i, j) - c[j];
    d += e * e;
  }
  return d;
}

std::vector<double> row(const Tensor& pts, std::size_t i) {
  return std::vector<double>(pts.data().begin() + static_cast<std::ptrdiff_t>(i * pts.dim(1)),
                             pts.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * pts.dim(1)));
}

// Moves the point farthest from its centre (taken from a group with at least
// two members) into each empty group. Returns true if anything moved.
bool repair_empty(const Tensor& pts, std::vector<std::size_t>& labels, std::vector<std::vector<double>>& centers) {
  const std::size_t k = centers.size();
  bool moved = false;
  for (std::size_t g = 0; g < k; ++g) {
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t l : labels) ++counts[l];
    if (counts[g] != 0) continue;
    std::size_t best = labels.size();
    double best_d = -1.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (counts[labels[i]] < 2) continue;
      const double d = sq_dist(pts, i, centers[labels[i]]);
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    labels[best] = g;
    centers[g] = row(pts, best);
    moved = true;
  }
  return moved;
}

}  // namespace

GroupAssignment kmeans(const Tensor& points, std::size_t k, std::uint64_t seed, std::size_t max_iterations) {
  if (points.rank() != 2) throw ShapeError("kmeans expects [N x D] points");
  const std::size_t n = points.dim(0), dims = points.dim(1);
  if (k == 0) throw std::invalid_argument("kmeans needs k >= 1");
  if (n < k) {
    throw std::invalid_argument("kmeans: " + std::to_string(n) + " points cannot form " + std::to_string(k) + " groups");
  }
  Rng rng(seed);
  std::vector<std::vector<double>> centers;
  centers.push_back(row(points, rng.below(n)));
  std::vector<double> nearest(n);
  for (std::size_t i = 0; i < n; ++i) nearest[i] = sq_dist(points, i, centers[0]);
  while (centers.size() < k) {
    std::size_t far = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (nearest[i] > nearest[far]) far = i;
    }
    centers.push_back(row(points, far));
    for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], sq_dist(points, i, centers.back()));
  }

  auto assign = [&](std::vector<std::size_t>& labels) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = sq_dist(points, i, centers[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = sq_dist(points, i, centers[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (labels[i] != best) {
        labels[i] = best;
        changed = true;
      }
    }
    return changed;
  };

  std::vector<std::size_t> labels(n, k);
  assign(labels);
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    repair_empty(points, labels, centers);
    std::vector<std::vector<double>> sums(k, std::vector<double>(dims, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[labels[i]];
      for (std::size_t j = 0; j < dims; ++j) sums[labels[i]][j] += points.at(i, j);
    }
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t j = 0; j < dims; ++j) centers[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    if (!assign(labels)) break;
  }
  repair_empty(points, labels, centers);
  GroupAssignment out;
  out.labels = std::move(labels);
  out.k = k;
  return out;
}

SpectralEmbedding spectral_embedding(const SimilarityGraph& g, std::size_t k) {
  const std::size_t n = g.size();
  if (k == 0 || k > n) throw std::invalid_argument("spectral embedding needs 1 <= K <= N");
  const Laplacians lap = laplacians(g);
  const EigenDecomposition eig = sym_eig(lap.symmetric);
  SpectralEmbedding out{Tensor({n, k}), std::vector<double>(eig.values.begin(), eig.values.begin() + static_cast<std::ptrdiff_t>(k))};
  for (std::size_t c = 0; c < k; ++c) {
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = eig.vectors.at(i, c) / std::sqrt(g.degrees[i]);
      out.vectors.at(i, c) = v;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < n; ++i) out.vectors.at(i, c) /= norm;
    fix_sign(out.vectors, c);
  }
  return out;
}

GroupAssignment spectral_cluster(const SimilarityGraph& g, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > g.size()) {
    throw std::invalid_argument("spectral clustering needs 2 <= K <= N (K=" + std::to_string(k) +
                                ", N=" + std::to_string(g.size()) + ")");
  }
  return kmeans(spectral_embedding(g, k).vectors, k, seed);
}

MinNcut brute_force_min_ncut(const SimilarityGraph& g, std::size_t k) {
  const std::size_t n = g.size();
  if (n > 10) throw std::invalid_argument("brute_force_min_ncut is limited to N <= 10");
  if (k == 0 || k > n) throw std::invalid_argument("brute_force_min_ncut needs 1 <= K <= N");
  MinNcut best;
  best.value = std::numeric_limits<double>::infinity();
  GroupAssignment cur;
  cur.k = k;
  cur.labels.assign(n, 0);
  // Restricted growth strings: label[i] <= 1 + max(label[0..i-1]), so each
  // partition is visited once.
  auto visit = [&](auto&& self, std::size_t i, std::size_t used) -> void {
    if (n - i < k - used) return;
    if (i == n) {
      for (std::size_t c = 0; c < k; ++c) {
        double vol = 0.0;
        for (std::size_t v = 0; v < n; ++v)
          if (cur.labels[v] == c) vol += g.degrees[v];
        if (!(vol > 0.0)) return;
      }
      const double value = ncut_value(g, cur);
      if (value < best.value) {
        best.value = value;
        best.assignment = cur;
      }
      return;
    }
    for (std::size_t l = 0; l <= used && l < k; ++l) {
      cur.labels[i] = l;
      self(self, i + 1, l == used ? used + 1 : used);
    }
  };
  visit(visit, 0, 0);
  if (best.assignment.labels.empty()) throw DataError("no labeling with positive group volumes exists");
  return best;
}

void write_assignment(std::ostream& out, std::span<const std::string> names, const GroupAssignment& a) {
  if (names.size() != a.size()) throw ShapeError("assignment/name count mismatch");
  out << "series_name,group_id\n";
  for (std::size_t i = 0; i < a.size(); ++i) out << names[i] << ',' << a.labels[i] + 1 << '\n';
}

GroupAssignment read_assignment(std::istream& in, std::span<const std::string> expected_names) {
  std::string line;
  std::size_t lineno = 0;
  GroupAssignment a;
  std::vector<std::string> names;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "series_name,group_id") throw DataError("assignment file: unexpected header '" + line + "'");
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError("assignment file line " + std::to_string(lineno) + ": missing comma");
    names.push_back(line.substr(0, comma));
    std::size_t id = 0;
    try {
      id = std::stoul(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw DataError("assignment file line " + std::to_string(lineno) + ": bad group id");
    }
    if (id == 0) throw DataError("assignment file line " + std::to_string(lineno) + ": group ids start at 1");
    a.labels.push_back(id - 1);
    a.k = std::max(a.k, id);
  }
  if (!expected_names.empty()) {
    if (names.size() != expected_names.size() || !std::equal(names.begin(), names.end(), expected_names.begin())) {
      throw DataError("assignment file series do not match the dataset's input series");
    }
  }
  try {
    a.validate(true);
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("assignment file: ") + e.what());
  }
  return a;
}

void write_embedding(std::ostream& out, std::span<const std::string> names, const SpectralEmbedding& e) {
  const std::size_t n = e.vectors.dim(0), k = e.vectors.dim(1);
  out << "series_name";
  for (std::size_t c = 0; c < k; ++c) out << ",v" << c + 1;
  out << '\n';
  out << "# eigenvalues";
  char buf[40];
  for (double v : e.eigenvalues) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << ',' << buf;
  }
  out << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    out << (i < names.size() ? names[i] : std::to_string(i));
    for (std::size_t c = 0; c < k; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", e.vectors.at(i, c));
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace gcnn
