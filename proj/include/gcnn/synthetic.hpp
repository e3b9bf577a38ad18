#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gcnn/groups.hpp"
#include "gcnn/tsdata.hpp"

namespace gcnn {

// Grouped series: each group shares one AR(1) driver; every member is a
// scaled copy of its driver plus independent white noise.
struct SyntheticSpec {
  std::size_t groups = 3;
  std::size_t series_per_group = 4;
  std::size_t length = 1000;
  double ar = 0.8;
  double noise = 0.3;  // noise std relative to the driver's stationary std
  double loading_min = 0.8;
  double loading_max = 1.2;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  TimeSeriesDataset dataset;  // names g<k>_s<j>, both 1-based
  GroupAssignment truth;      // latent group of every series
};

SyntheticData grouped_synthetic(const SyntheticSpec& spec);

// Restricts a ground-truth assignment to every series except `excluded`.
GroupAssignment drop_series(const GroupAssignment& a, std::size_t excluded);

}  // namespace gcnn
