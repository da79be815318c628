#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "har/hierarchy.hpp"
#include "har/tensor.hpp"

namespace har {

struct Dataset {
  Tensor features;  // [n, d], entries in [0,1], f32-exact values
  std::vector<int> fine_labels;
  int fine_count = 0;
  std::uint64_t hierarchy_hash = 0;

  std::size_t size() const { return fine_labels.size(); }
  std::size_t dim() const { return features.cols(); }
};

// Gaussian-blob generator: coarse centroids sit on a rotated simplex
// with pairwise distance coarse_separation; fine centroids sit on a
// smaller rotated simplex around their coarse centroid. Within-coarse
// classes are closer together than cross-coarse ones.
struct SynthSpec {
  int coarse_count = 2;
  int fines_per_coarse = 2;
  int dim = 8;
  int per_class = 200;  // samples per fine class
  double coarse_separation = 1.2;
  double fine_separation = 0.35;
  double noise_sigma = 0.12;
  std::uint64_t seed = 0;
};

struct Generated {
  Dataset data;
  Hierarchy hierarchy;
};

// Deterministic per seed; features are quantized to f32 values so file
// round-trips are exact. Throws SpecError when the separations are not
// ordered or the centroid count exceeds what dim can hold.
Generated generate(const SynthSpec& spec);

// HARDATA1 container: magic, header (n, d, fine_count,
// hierarchy_hash), little-endian f32 features, u16 labels, crc32.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path,
                     const Hierarchy& expected);

// Stratified by fine label; disjoint; union is the input.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction,
                                  std::uint64_t seed);

}  // namespace har
