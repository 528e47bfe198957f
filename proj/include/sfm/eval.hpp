#pragma once

#include <string>
#include <vector>

#include "sfm/common.hpp"

namespace sfm {

enum class Averaging { Binary, Macro };

// BINARY expects labels in {0, 1} with 1 the positive class. MACRO averages
// per-class binary F1 over the union of labels seen in truth or predictions;
// a class with zero support and zero predictions scores 1, zero support with
// predictions (or support with none) scores 0.
double f1(const std::vector<int>& preds, const std::vector<int>& truth, Averaging averaging);

struct ConfusionMatrix {
  std::vector<int> classes;            // ordered labels
  std::vector<std::vector<long>> counts;  // rows = truth, cols = prediction

  long total() const;
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truth,
                          const std::vector<int>& classes);

}  // namespace sfm
