#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "samlab/feature_model.hpp"
#include "samlab/tensor.hpp"

namespace samlab {

enum class LabelDomain {
  kPlusMinusOne,  // binary labels in {-1, +1}
  kClassIds,      // labels in {0, ..., num_classes - 1}
};

struct DatasetMeta {
  std::string generator;  // "feature_model", "mixture2d", "delimited"
  std::uint64_t seed = 0;
  std::string source;  // file path for loaded datasets
};

/// Feature matrix plus labels. Invariants: at least one sample, every entry
/// finite (enforced by Tensor), labels inside the declared domain.
struct Dataset {
  Tensor x;  // {N, d}
  std::vector<int> y;
  LabelDomain domain = LabelDomain::kPlusMinusOne;
  int num_classes = 2;
  DatasetMeta meta;

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return x.shape()[1]; }
};

/// Samples the synthetic feature-model distribution: labels uniform on ±1,
/// x1 = +y with probability p (else -y), remaining n coordinates i.i.d.
/// N(eta*y, 1). Per sample the generator draws, in order: one uniform for y,
/// one uniform for x1, then ceil(n/2) Box-Muller pairs.
Dataset sample_feature_model(const FeatureModelSpec& spec, std::size_t n_samples,
                             std::uint64_t seed);

/// Balanced Gaussian blobs in the plane, one class per center; sample i
/// belongs to class i mod #centers. spread is the per-coordinate standard
/// deviation.
Dataset sample_mixture2d(std::span<const std::array<double, 2>> centers, double spread,
                         std::size_t n_samples, std::uint64_t seed);

struct DelimitedSchema {
  std::size_t dim = 0;  // feature count per row; label comes last
  LabelDomain domain = LabelDomain::kPlusMinusOne;
  int num_classes = 2;
};

/// Reads comma-separated rows of dim reals followed by one label. Malformed
/// rows and out-of-domain labels raise errors naming the line.
Dataset load_delimited(const std::string& path, const DelimitedSchema& schema);

/// Writes the matching format with 17-significant-digit reals, so a reload
/// is value-exact.
void save_delimited(const Dataset& dataset, const std::string& path);

}  // namespace samlab
