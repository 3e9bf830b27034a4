#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "hexreg/linalg.hpp"

namespace hexreg {

/// Three-level Gaussian hierarchy: superclass means, class offsets, sample noise.
struct GenParams {
  int n_super = 4;
  int classes_per_super = 4;
  int samples_per_class = 100;
  int input_dim = 32;
  double sigma_super = 3.0;
  double sigma_class = 1.0;
  double sigma_sample = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
  int n_classes() const { return n_super * classes_per_super; }
  int n_samples() const { return n_classes() * samples_per_class; }
};

struct HierarchicalDataset {
  Matrix x;
  std::vector<int> class_labels;
  std::vector<int> superclass_labels;
  std::optional<GenParams> meta;

  Index size() const { return x.rows(); }
  Index dim() const { return x.cols(); }
};

namespace data {

/// Classes are laid out superclass-major; class c belongs to superclass c / classes_per_super.
/// Each level draws from its own counter stream keyed by (seed, level, indices...).
HierarchicalDataset generate(const GenParams& p);

/// Gaussian jitter followed by independent coordinate dropout; a pure function of `seed`.
Vector augment(const Eigen::Ref<const Vector>& x_row, double noise_sigma, double mask_prob, std::uint64_t seed);

/// Header `f0,...,f{d-1},class,superclass`; 17 significant digits; LF line endings.
void save_csv(const HierarchicalDataset& d, const std::filesystem::path& path);
HierarchicalDataset load_csv(const std::filesystem::path& path);

}  // namespace data
}  // namespace hexreg
