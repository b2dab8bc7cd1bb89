#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "comkd/tensor.hpp"

namespace comkd {

// Parameters of the Gaussian-cluster generator. Class means and the shift
// direction depend only on `seed`; `stream` selects an independent noise
// draw around the same means (e.g. stream 0 for training, 1 for testing).
struct SyntheticSpec {
  std::uint64_t seed = 1;
  std::size_t classes = 8;
  std::size_t dim = 32;
  std::size_t per_class = 64;
  double sigma = 1.0;
  double radius = 3.0;
  // Multiples of a fixed seed-derived unit offset added to every sample.
  double shift = 0.0;
  std::uint64_t stream = 0;

  bool operator==(const SyntheticSpec&) const = default;
};

struct Dataset {
  Tensor inputs;                          // [M x k]
  std::optional<std::vector<int>> labels; // [M], each in [0, class_count)
  std::size_t class_count = 0;
  std::optional<SyntheticSpec> provenance;

  std::size_t size() const { return inputs.rank() == 2 ? inputs.dim(0) : 0; }
  std::size_t dim() const { return inputs.rank() == 2 ? inputs.dim(1) : 0; }
  bool labeled() const { return labels.has_value(); }

  // Rows whose label is in `classes`, in original order. Requires labels.
  Dataset filter_classes(std::span<const int> classes) const;
  Dataset without_labels() const;
  // Rows at the given indices.
  Dataset subset(std::span<const std::size_t> rows) const;
};

// Samples are emitted class-major: all of class 0, then class 1, ...
Dataset gen_synthetic(const SyntheticSpec& spec);

// Stored in the checkpoint tensor-entry format with entries `inputs`,
// `labels` (f32-encoded indices, omitted when unlabeled) and `meta`
// ([class_count]); provenance goes in the trailing text block.
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace comkd
