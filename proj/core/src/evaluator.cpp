#include "comkd/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

#include "comkd/errors.hpp"

namespace comkd {

namespace {

std::string two_decimals(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

SplitSpec SplitSpec::halves(std::size_t classes) {
  SplitSpec s;
  const std::size_t base = (classes + 1) / 2;
  for (std::size_t c = 0; c < classes; ++c) {
    (c < base ? s.base_classes : s.novel_classes).push_back(static_cast<int>(c));
  }
  return s;
}

double harmonic_mean(double base, double novel) {
  if (base < 0.0 || novel < 0.0) throw ParameterError("harmonic_mean: accuracies must be >= 0");
  if (base == 0.0 || novel == 0.0) return 0.0;
  return 2.0 * base * novel / (base + novel);
}

double accuracy(const ImageClassifier& model, const Dataset& data,
                std::span<const int> class_subset) {
  if (class_subset.empty()) throw ParameterError("accuracy: empty class subset");
  if (!data.labels) throw ParameterError("accuracy: dataset has no labels");
  const std::size_t n = model.class_count();
  for (int c : class_subset) {
    if (c < 0 || static_cast<std::size_t>(c) >= n) {
      throw ParameterError("accuracy: class " + std::to_string(c) + " outside the model's " +
                           std::to_string(n) + " classes");
    }
  }
  const Dataset eval = data.filter_classes(class_subset);
  if (eval.size() == 0) throw ParameterError("accuracy: no samples from the requested classes");
  const Tensor logits = model.predict(eval.inputs).values;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    int best = class_subset[0];
    float best_score = logits.at(i, static_cast<std::size_t>(best));
    for (int c : class_subset) {
      const float s = logits.at(i, static_cast<std::size_t>(c));
      if (s > best_score) {
        best = c;
        best_score = s;
      }
    }
    if (best == (*eval.labels)[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(eval.size());
}

Metrics evaluate_base_novel(const ImageClassifier& model, const Dataset& test,
                            const SplitSpec& split) {
  if (split.base_classes.empty() || split.novel_classes.empty()) {
    throw ParameterError("evaluate_base_novel: both class groups must be non-empty");
  }
  for (int c : split.base_classes) {
    if (std::find(split.novel_classes.begin(), split.novel_classes.end(), c) !=
        split.novel_classes.end()) {
      throw ParameterError("evaluate_base_novel: class " + std::to_string(c) +
                           " is both base and novel");
    }
  }
  Metrics m;
  m.base_acc = accuracy(model, test, split.base_classes);
  m.novel_acc = accuracy(model, test, split.novel_classes);
  m.hm = harmonic_mean(m.base_acc, m.novel_acc);
  return m;
}

double evaluate_transfer(const ImageClassifier& model, const Dataset& target) {
  if (target.class_count != model.class_count()) {
    throw ConfigError("target has " + std::to_string(target.class_count) +
                      " classes but the model scores " + std::to_string(model.class_count()));
  }
  std::vector<int> all(model.class_count());
  for (std::size_t c = 0; c < all.size(); ++c) all[c] = static_cast<int>(c);
  return accuracy(model, target, all);
}

void print_metrics_table(std::ostream& out, std::span<const std::string> names,
                         std::span<const Metrics> rows) {
  std::size_t width = 6;
  for (const auto& n : names) width = std::max(width, n.size());
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(w, s.size()), ' ');
    return s;
  };
  out << pad("Method", width) << "   Base    Novel   HM\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << pad(names[i], width) << "  " << pad(two_decimals(rows[i].base_acc), 7) << " "
        << pad(two_decimals(rows[i].novel_acc), 7) << " " << two_decimals(rows[i].hm) << "\n";
  }
}

void write_metrics_csv(std::ostream& out, std::span<const std::string> names,
                       std::span<const Metrics> rows) {
  out << "split,base,novel,hm\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << names[i] << "," << two_decimals(rows[i].base_acc) << ","
        << two_decimals(rows[i].novel_acc) << "," << two_decimals(rows[i].hm) << "\n";
  }
}

}  // namespace comkd
