#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gcnn/groups.hpp"
#include "gcnn/tensor.hpp"

namespace gcnn {

struct TimeSeriesDataset;

/// Symmetric nonnegative weights with a zero diagonal, plus row-sum degrees.
struct SimilarityGraph {
  Tensor weights;  // [N x N]
  std::vector<double> degrees;

  std::size_t size() const { return degrees.size(); }
  // Recomputes degrees and checks symmetry (1e-12), nonnegativity and the zero diagonal.
  static SimilarityGraph from_weights(Tensor weights);
};

struct SpectralEmbedding {
  Tensor vectors;                    // [N x K], column j pairs with eigenvalues[j]
  std::vector<double> eigenvalues;  // ascending
};

struct Laplacians {
  Tensor unnormalized;  // L = D - W
  Tensor symmetric;     // D^-1/2 L D^-1/2
};

struct EigenDecomposition {
  std::vector<double> values;  // ascending
  Tensor vectors;              // [N x N], column i pairs with values[i]
};

struct MinNcut {
  GroupAssignment assignment;
  double value = 0.0;
};

struct EigenOptions {
  std::size_t max_dimension = 2048;
  std::size_t max_sweeps = 100;
  double symmetry_tolerance = 1e-10;
};

// w_ij = |corr(x_i, x_j)| over time steps [begin, end) of every series.
SimilarityGraph similarity_from_series(const TimeSeriesDataset& data, std::size_t begin, std::size_t end);
SimilarityGraph similarity_from_series(const TimeSeriesDataset& data);
// Same measure over the rows of a [N x L] matrix; `names` label errors.
SimilarityGraph similarity_from_rows(const Tensor& rows, std::span<const std::string> names = {});

// 1/2 sum_k link(A_k, complement of A_k).
double cut_value(const SimilarityGraph& g, const GroupAssignment& a);
// 1/2 sum_k link(A_k, complement) / vol(A_k); throws DataError on a zero-volume group.
double ncut_value(const SimilarityGraph& g, const GroupAssignment& a);

Laplacians laplacians(const SimilarityGraph& g);

/// Cyclic Jacobi eigensolver for dense symmetric matrices. Eigenvectors are
/// orthonormal and signed so their largest-magnitude component is positive.
EigenDecomposition sym_eig(const Tensor& a, const EigenOptions& options = {});

// Lloyd iterations from seeded farthest-point initialisation. points: [N x D].
GroupAssignment kmeans(const Tensor& points, std::size_t k, std::uint64_t seed, std::size_t max_iterations = 300);

// K smallest eigenpairs of L_rw (through L_sym), columns normalised to unit length.
SpectralEmbedding spectral_embedding(const SimilarityGraph& g, std::size_t k);
GroupAssignment spectral_cluster(const SimilarityGraph& g, std::size_t k, std::uint64_t seed);

// Exhaustive minimum over surjective labelings, N <= 10.
MinNcut brute_force_min_ncut(const SimilarityGraph& g, std::size_t k);

// `series_name,group_id` with 1-based group ids.
void write_assignment(std::ostream& out, std::span<const std::string> names, const GroupAssignment& a);
GroupAssignment read_assignment(std::istream& in, std::span<const std::string> expected_names);
void write_embedding(std::ostream& out, std::span<const std::string> names, const SpectralEmbedding& e);

}  // namespace gcnn
