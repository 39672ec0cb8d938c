#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hcmgan/tensor.hpp"

namespace hcmgan::data {

/// Examples as rows of an [N × D] matrix in [-1, 1]. Labels are carried for
/// evaluation only and never reach the split engine.
struct Dataset {
  Tensor x;
  std::optional<std::vector<int>> labels;
  std::size_t image_h = 0;  // zero unless the rows are images
  std::size_t image_w = 0;
  std::string source;

  std::size_t size() const { return x.defined() ? x.dim(0) : 0; }
  std::size_t dim() const { return x.defined() ? x.dim(1) : 0; }
  void validate() const;
};

struct MixtureMode {
  std::vector<double> mean;
  std::vector<double> stddev;  // per coordinate
  std::size_t count = 0;
};

struct MixtureSpec {
  std::vector<MixtureMode> modes;
  std::uint64_t seed = 0;

  void validate() const;
};

// Gaussian draws squashed by tanh(x/3); labels are mode indices, rows are
// grouped by mode.
Dataset synth_mixture(const MixtureSpec& spec);

// Symmetric k-mode layout on a circle in 2D, handy for demos and tests.
MixtureSpec circle_mixture(std::size_t k, double radius, double stddev, std::size_t count, std::uint64_t seed);

// Plain or gzip-compressed IDX files. Pixels map as 2p/255 - 1.
Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels = {});

struct CsvOptions {
  bool label_column = false;  // final column holds integer labels
  bool rescale = true;        // global min/max to [-1, 1]
};

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& opts = {});
void write_csv(const std::filesystem::path& path, const Dataset& d);

// Labels from an IDX label file (plain or gzip) or a one-column CSV with a
// header row.
std::vector<int> load_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const std::vector<int>& labels);

}  // namespace hcmgan::data
