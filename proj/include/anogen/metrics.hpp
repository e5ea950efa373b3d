#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "anogen/trace_data.hpp"

namespace anogen {

// Anomaly is the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix confusion(std::span<const Label> truth, std::span<const Label> predicted);

// Each returns 0 when its denominator is 0.
double recall(const ConfusionMatrix& cm);     // tp / (tp + fn)
double precision(const ConfusionMatrix& cm);  // tp / (tp + fp)
double f1(const ConfusionMatrix& cm);         // 2tp / (2tp + fp + fn)

// Mann-Whitney AUC: probability that a random anomaly outscores a random
// normal, ties counting one half. Computed from midranks in O(n log n).
// Throws DataError if either class is absent.
double roc_auc(std::span<const Label> truth, std::span<const double> scores);

enum class Approach { Imbalanced, Smote, CycleGan };
std::string_view to_string(Approach a);

struct EvaluationReport {
  Approach approach = Approach::Imbalanced;
  ConfusionMatrix cm;
  double recall = 0, precision = 0, f1 = 0, auc = 0;
};

EvaluationReport evaluate(Approach approach, std::span<const Label> truth, std::span<const double> scores,
                          double threshold);

// Header `approach,tp,tn,fp,fn,recall,f1,auc`; rates as percentages with
// two decimals.
std::string reports_to_csv(std::span<const EvaluationReport> reports);
std::string reports_to_json(std::span<const EvaluationReport> reports);

}  // namespace anogen
