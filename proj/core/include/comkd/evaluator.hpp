#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "comkd/dataset.hpp"
#include "comkd/models.hpp"

namespace comkd {

struct SplitSpec {
  std::vector<int> base_classes;
  std::vector<int> novel_classes;

  // First ceil(N/2) classes are base, the rest novel.
  static SplitSpec halves(std::size_t classes);
  SplitSpec swapped() const { return {novel_classes, base_classes}; }
};

// Accuracies in percent.
struct Metrics {
  double base_acc = 0.0;
  double novel_acc = 0.0;
  double hm = 0.0;

  bool operator==(const Metrics&) const = default;
};

// 2ab / (a + b); 0 when either side is 0. Negative input is a ParameterError.
double harmonic_mean(double base, double novel);

// Percentage of samples labeled inside `class_subset` whose argmax over the
// logits restricted to `class_subset` is their label.
double accuracy(const ImageClassifier& model, const Dataset& data,
                std::span<const int> class_subset);

Metrics evaluate_base_novel(const ImageClassifier& model, const Dataset& test,
                            const SplitSpec& split);

// All-class accuracy on a target set whose class count must match the model.
double evaluate_transfer(const ImageClassifier& model, const Dataset& target);

// Text table with two-decimal percentages.
void print_metrics_table(std::ostream& out, std::span<const std::string> names,
                         std::span<const Metrics> rows);
// `split,base,novel,hm` header plus one row per entry.
void write_metrics_csv(std::ostream& out, std::span<const std::string> names,
                       std::span<const Metrics> rows);

}  // namespace comkd
