#include "samlab/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "samlab/rng.hpp"

namespace samlab {

namespace {

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_label(int label, LabelDomain domain, int num_classes, const std::string& where) {
  if (domain == LabelDomain::kPlusMinusOne) {
    if (label != -1 && label != 1) {
      throw std::invalid_argument(where + ": label " + std::to_string(label) +
                                  " outside {-1, +1}");
    }
    return;
  }
  if (label < 0 || label >= num_classes) {
    throw std::invalid_argument(where + ": label " + std::to_string(label) + " outside [0, " +
                                std::to_string(num_classes) + ")");
  }
}

}  // namespace

Dataset sample_feature_model(const FeatureModelSpec& spec, std::size_t n_samples,
                             std::uint64_t seed) {
  spec.validate();
  if (n_samples == 0) throw std::invalid_argument("sample_feature_model: need at least 1 sample");

  const std::size_t dim = spec.n + 1;
  Rng rng(seed);
  std::vector<double> x(n_samples * dim);
  std::vector<int> y(n_samples);
  std::vector<double> gaussians(spec.n);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const int label = rng.uniform() < 0.5 ? 1 : -1;
    y[i] = label;
    x[i * dim] = rng.uniform() < spec.p ? label : -label;
    rng.fill_normal(gaussians, spec.eta * label, 1.0);
    for (std::size_t j = 0; j < spec.n; ++j) x[i * dim + 1 + j] = gaussians[j];
  }

  Dataset dataset;
  dataset.x = Tensor::matrix(n_samples, dim, std::move(x));
  dataset.y = std::move(y);
  dataset.domain = LabelDomain::kPlusMinusOne;
  dataset.num_classes = 2;
  dataset.meta = {"feature_model", seed, ""};
  return dataset;
}

Dataset sample_mixture2d(std::span<const std::array<double, 2>> centers, double spread,
                         std::size_t n_samples, std::uint64_t seed) {
  if (centers.size() < 2) throw std::invalid_argument("sample_mixture2d: need at least 2 centers");
  if (!(spread > 0.0) || !std::isfinite(spread)) {
    throw std::invalid_argument("sample_mixture2d: spread must be positive");
  }
  if (n_samples == 0) throw std::invalid_argument("sample_mixture2d: need at least 1 sample");

  Rng rng(seed);
  std::vector<double> x(n_samples * 2);
  std::vector<int> y(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const std::size_t cls = i % centers.size();
    const auto [z0, z1] = rng.normal_pair();
    x[i * 2] = centers[cls][0] + spread * z0;
    x[i * 2 + 1] = centers[cls][1] + spread * z1;
    y[i] = static_cast<int>(cls);
  }

  Dataset dataset;
  dataset.x = Tensor::matrix(n_samples, 2, std::move(x));
  dataset.y = std::move(y);
  dataset.domain = LabelDomain::kClassIds;
  dataset.num_classes = static_cast<int>(centers.size());
  dataset.meta = {"mixture2d", seed, ""};
  return dataset;
}

Dataset load_delimited(const std::string& path, const DelimitedSchema& schema) {
  if (schema.dim == 0) throw std::invalid_argument("load_delimited: schema.dim must be positive");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_delimited: cannot open " + path);

  std::vector<double> x;
  std::vector<int> y;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const std::string where = path + ":" + std::to_string(line_no);

    std::vector<std::string> fields;
    std::string field;
    std::istringstream row(line);
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() != schema.dim + 1) {
      throw std::invalid_argument(where + ": expected " + std::to_string(schema.dim + 1) +
                                  " fields, found " + std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < schema.dim; ++j) {
      std::size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(fields[j], &used);
      } catch (const std::exception&) {
        throw std::invalid_argument(where + ": field " + std::to_string(j + 1) +
                                    " is not a real number: '" + fields[j] + "'");
      }
      if (used != fields[j].size() || !std::isfinite(value)) {
        throw std::invalid_argument(where + ": field " + std::to_string(j + 1) +
                                    " is not a finite real: '" + fields[j] + "'");
      }
      x.push_back(value);
    }
    int label = 0;
    try {
      std::size_t used = 0;
      label = std::stoi(fields.back(), &used);
      if (used != fields.back().size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw std::invalid_argument(where + ": label is not an integer: '" + fields.back() + "'");
    }
    check_label(label, schema.domain, schema.num_classes, where);
    y.push_back(label);
  }
  if (y.empty()) throw std::runtime_error("load_delimited: " + path + " holds no samples");

  Dataset dataset;
  dataset.x = Tensor::matrix(y.size(), schema.dim, std::move(x));
  dataset.y = std::move(y);
  dataset.domain = schema.domain;
  dataset.num_classes = schema.num_classes;
  dataset.meta = {"delimited", 0, path};
  return dataset;
}

void save_delimited(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_delimited: cannot open " + path + " for writing");
  const auto values = dataset.x.values();
  const std::size_t dim = dataset.dim();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      out << format_real(values[i * dim + j]) << ',';
    }
    out << dataset.y[i] << '\n';
  }
  if (!out) throw std::runtime_error("save_delimited: write to " + path + " failed");
}

}  // namespace samlab
