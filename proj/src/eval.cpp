#include "sfm/eval.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace sfm {

namespace {

double binary_f1_from_counts(long tp, long fp, long fn) {
  if (tp == 0 && fp == 0 && fn == 0) return 1.0;  // absent class, never predicted
  if (tp == 0) return 0.0;
  const double p = static_cast<double>(tp) / (tp + fp);
  const double r = static_cast<double>(tp) / (tp + fn);
  return 2.0 * p * r / (p + r);
}

}  // namespace

double f1(const std::vector<int>& preds, const std::vector<int>& truth, Averaging averaging) {
  if (preds.size() != truth.size())
    throw ShapeError("f1: predictions and truth differ in length");

  if (averaging == Averaging::Binary) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i] != 0 && preds[i] != 1)
        throw InvalidInputError("f1: binary averaging expects labels in {0, 1}");
      if (truth[i] != 0 && truth[i] != 1)
        throw InvalidInputError("f1: binary averaging expects labels in {0, 1}");
      if (preds[i] == 1 && truth[i] == 1) ++tp;
      else if (preds[i] == 1) ++fp;
      else if (truth[i] == 1) ++fn;
    }
    return binary_f1_from_counts(tp, fp, fn);
  }

  std::set<int> classes(truth.begin(), truth.end());
  classes.insert(preds.begin(), preds.end());
  if (classes.empty()) return 1.0;

  double sum = 0.0;
  for (int c : classes) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i] == c && truth[i] == c) ++tp;
      else if (preds[i] == c) ++fp;
      else if (truth[i] == c) ++fn;
    }
    sum += binary_f1_from_counts(tp, fp, fn);
  }
  return sum / static_cast<double>(classes.size());
}

long ConfusionMatrix::total() const {
  long n = 0;
  for (const auto& row : counts)
    for (long v : row) n += v;
  return n;
}

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truth,
                          const std::vector<int>& classes) {
  if (preds.size() != truth.size())
    throw ShapeError("confusion: predictions and truth differ in length");

  std::map<int, std::size_t> index;
  for (std::size_t i = 0; i < classes.size(); ++i) index[classes[i]] = i;
  if (index.size() != classes.size())
    throw InvalidInputError("confusion: duplicate class label");

  ConfusionMatrix m;
  m.classes = classes;
  m.counts.assign(classes.size(), std::vector<long>(classes.size(), 0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto t = index.find(truth[i]);
    const auto p = index.find(preds[i]);
    if (t == index.end())
      throw InvalidInputError("confusion: truth label " + std::to_string(truth[i]) +
                              " not in class set");
    if (p == index.end())
      throw InvalidInputError("confusion: predicted label " + std::to_string(preds[i]) +
                              " not in class set");
    ++m.counts[t->second][p->second];
  }
  return m;
}

}  // namespace sfm
