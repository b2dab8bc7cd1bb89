#include "comkd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "comkd/checkpoint.hpp"
#include "comkd/errors.hpp"
#include "comkd/random.hpp"

namespace comkd {

namespace {

std::vector<double> random_unit_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double sq = 0.0;
  do {
    sq = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      sq += x * x;
    }
  } while (sq < 1e-24);
  const double inv = 1.0 / std::sqrt(sq);
  for (auto& x : v) x *= inv;
  return v;
}

std::string provenance_text(const SyntheticSpec& s) {
  char buf[64];
  std::ostringstream out;
  out << "seed = " << s.seed << "\n"
      << "classes = " << s.classes << "\n"
      << "dim = " << s.dim << "\n"
      << "per_class = " << s.per_class << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", s.sigma);
  out << "sigma = " << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", s.radius);
  out << "radius = " << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", s.shift);
  out << "shift = " << buf << "\n";
  out << "stream = " << s.stream << "\n";
  return out.str();
}

std::optional<SyntheticSpec> parse_provenance(const std::string& text) {
  if (text.empty()) return std::nullopt;
  SyntheticSpec s;
  std::istringstream in(text);
  std::string key, eq, value;
  while (in >> key >> eq >> value) {
    if (eq != "=") return std::nullopt;
    if (key == "seed") s.seed = std::stoull(value);
    else if (key == "classes") s.classes = std::stoull(value);
    else if (key == "dim") s.dim = std::stoull(value);
    else if (key == "per_class") s.per_class = std::stoull(value);
    else if (key == "sigma") s.sigma = std::stod(value);
    else if (key == "radius") s.radius = std::stod(value);
    else if (key == "shift") s.shift = std::stod(value);
    else if (key == "stream") s.stream = std::stoull(value);
    else return std::nullopt;
  }
  return s;
}

}  // namespace

Dataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw ParameterError("gen_synthetic: need at least 2 classes");
  if (spec.dim < 2) throw ParameterError("gen_synthetic: need dim >= 2");
  if (spec.per_class < 1) throw ParameterError("gen_synthetic: need at least 1 sample per class");
  if (!(spec.sigma > 0.0) || !std::isfinite(spec.sigma)) {
    throw ParameterError("gen_synthetic: sigma must be positive");
  }
  if (!(spec.radius > 0.0)) throw ParameterError("gen_synthetic: radius must be positive");

  // Means and shift direction come from the seed alone so every stream and
  // shift magnitude shares them.
  Rng layout(derive_seed(spec.seed, "synthetic-layout"));
  std::vector<std::vector<double>> means(spec.classes);
  for (auto& m : means) {
    m = random_unit_vector(layout, spec.dim);
    for (auto& x : m) x *= spec.radius;
  }
  const std::vector<double> shift_dir = random_unit_vector(layout, spec.dim);

  Rng noise(derive_seed(derive_seed(spec.seed, "synthetic-noise"), std::to_string(spec.stream)));
  const std::size_t m = spec.classes * spec.per_class;
  std::vector<float> values(m * spec.dim);
  std::vector<int> labels(m);
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t i = 0; i < spec.per_class; ++i, ++row) {
      labels[row] = static_cast<int>(c);
      for (std::size_t j = 0; j < spec.dim; ++j) {
        double x = means[c][j] + spec.sigma * noise.normal();
        if (spec.shift != 0.0) x += spec.shift * shift_dir[j];
        values[row * spec.dim + j] = static_cast<float>(x);
      }
    }
  }
  Dataset out;
  out.inputs = Tensor::from({m, spec.dim}, std::move(values));
  out.labels = std::move(labels);
  out.class_count = spec.classes;
  out.provenance = spec;
  return out;
}

Dataset Dataset::filter_classes(std::span<const int> classes) const {
  if (!labels) throw ParameterError("filter_classes needs a labeled dataset");
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < labels->size(); ++i) {
    if (std::find(classes.begin(), classes.end(), (*labels)[i]) != classes.end()) rows.push_back(i);
  }
  return subset(rows);
}

Dataset Dataset::without_labels() const {
  Dataset out = *this;
  out.labels.reset();
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  const std::size_t k = dim();
  std::vector<float> values;
  values.reserve(rows.size() * k);
  std::vector<int> picked;
  for (auto r : rows) {
    if (r >= size()) throw ParameterError("subset: row " + std::to_string(r) + " out of range");
    const auto src = inputs.data().subspan(r * k, k);
    values.insert(values.end(), src.begin(), src.end());
    if (labels) picked.push_back((*labels)[r]);
  }
  Dataset out;
  out.inputs = Tensor::from({rows.size(), k}, std::move(values));
  if (labels) out.labels = std::move(picked);
  out.class_count = class_count;
  out.provenance = provenance;
  return out;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  Checkpoint c;
  c.entries.push_back({"inputs", data.inputs});
  if (data.labels) {
    std::vector<float> encoded(data.labels->begin(), data.labels->end());
    const std::size_t n = encoded.size();
    c.entries.push_back({"labels", Tensor::from({n}, std::move(encoded))});
  }
  c.entries.push_back({"meta", Tensor::vector({static_cast<float>(data.class_count)})});
  if (data.provenance) c.trailer = provenance_text(*data.provenance);
  write_file(path, encode_checkpoint(c));
}

Dataset load_dataset(const std::filesystem::path& path) {
  const Checkpoint c = decode_checkpoint(read_file(path));
  Dataset out;
  const TensorEntry* inputs = nullptr;
  const TensorEntry* labels = nullptr;
  const TensorEntry* meta = nullptr;
  for (const auto& e : c.entries) {
    if (e.name == "inputs") inputs = &e;
    else if (e.name == "labels") labels = &e;
    else if (e.name == "meta") meta = &e;
    else throw FormatError("unknown tensor name '" + e.name + "' in dataset file", e.offset);
  }
  if (!inputs || inputs->tensor.rank() != 2) throw FormatError("dataset lacks an [M x k] 'inputs' entry", 0);
  if (!meta || meta->tensor.numel() != 1) throw FormatError("dataset lacks a 'meta' entry", 0);
  out.inputs = inputs->tensor;
  const float classes = meta->tensor.item();
  if (!(classes >= 1.0f) || classes != std::floor(classes)) {
    throw FormatError("bad class count in 'meta'", meta->offset);
  }
  out.class_count = static_cast<std::size_t>(classes);
  if (labels) {
    if (labels->tensor.rank() != 1 || labels->tensor.dim(0) != inputs->tensor.dim(0)) {
      throw FormatError("'labels' does not match 'inputs'", labels->offset);
    }
    std::vector<int> decoded;
    decoded.reserve(labels->tensor.numel());
    for (float v : labels->tensor.data()) {
      if (!(v >= 0.0f) || v != std::floor(v) || v >= classes) {
        throw FormatError("label value out of range", labels->offset);
      }
      decoded.push_back(static_cast<int>(v));
    }
    out.labels = std::move(decoded);
  }
  try {
    out.provenance = parse_provenance(c.trailer);
  } catch (const std::exception&) {
    out.provenance.reset();
  }
  return out;
}

}  // namespace comkd
