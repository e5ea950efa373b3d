#include "anogen/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "json.hpp"

#include "anogen/errors.hpp"

namespace anogen {

ConfusionMatrix confusion(std::span<const Label> truth, std::span<const Label> predicted) {
  if (truth.size() != predicted.size()) {
    throw DataError("confusion: " + std::to_string(truth.size()) + " truth labels vs " +
                    std::to_string(predicted.size()) + " predictions");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool pos = truth[i] == Label::Anomaly, pred = predicted[i] == Label::Anomaly;
    if (pos && pred) ++cm.tp;
    else if (pos) ++cm.fn;
    else if (pred) ++cm.fp;
    else ++cm.tn;
  }
  return cm;
}

namespace {
double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace

double recall(const ConfusionMatrix& cm) { return ratio(cm.tp, cm.tp + cm.fn); }
double precision(const ConfusionMatrix& cm) { return ratio(cm.tp, cm.tp + cm.fp); }
double f1(const ConfusionMatrix& cm) { return ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn); }

double roc_auc(std::span<const Label> truth, std::span<const double> scores) {
  if (truth.size() != scores.size()) throw DataError("roc_auc: truth and scores differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of 1-based midranks of the positives.
  double rank_sum = 0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (truth[order[k]] == Label::Anomaly) {
        rank_sum += midrank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw DataError("roc_auc: both classes must be present");
  const double p = static_cast<double>(positives), q = static_cast<double>(negatives);
  return (rank_sum - p * (p + 1) / 2) / (p * q);
}

std::string_view to_string(Approach a) {
  switch (a) {
    case Approach::Imbalanced:
      return "imbalanced";
    case Approach::Smote:
      return "smote";
    case Approach::CycleGan:
      return "cyclegan";
  }
  return "unknown";
}

EvaluationReport evaluate(Approach approach, std::span<const Label> truth, std::span<const double> scores,
                          double threshold) {
  std::vector<Label> predicted;
  predicted.reserve(scores.size());
  for (const double s : scores) predicted.push_back(s >= threshold ? Label::Anomaly : Label::Normal);
  EvaluationReport r;
  r.approach = approach;
  r.cm = confusion(truth, predicted);
  r.recall = recall(r.cm);
  r.precision = precision(r.cm);
  r.f1 = f1(r.cm);
  r.auc = roc_auc(truth, scores);
  return r;
}

std::string reports_to_csv(std::span<const EvaluationReport> reports) {
  std::string out = "approach,tp,tn,fp,fn,recall,f1,auc\n";
  char line[160];
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%s,%zu,%zu,%zu,%zu,%.2f,%.2f,%.2f\n", std::string(to_string(r.approach)).c_str(),
                  r.cm.tp, r.cm.tn, r.cm.fp, r.cm.fn, 100 * r.recall, 100 * r.f1, 100 * r.auc);
    out += line;
  }
  return out;
}

std::string reports_to_json(std::span<const EvaluationReport> reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    arr.push_back({{"approach", to_string(r.approach)},
                   {"tp", r.cm.tp},
                   {"tn", r.cm.tn},
                   {"fp", r.cm.fp},
                   {"fn", r.cm.fn},
                   {"recall", r.recall},
                   {"precision", r.precision},
                   {"f1", r.f1},
                   {"auc", r.auc}});
  }
  nlohmann::ordered_json doc = {
      {"reports", arr},
      {"notes", "positive class = anomaly; recall/precision/f1 are 0 when their denominator is 0; "
                "labels use score >= threshold"}};
  return doc.dump(2) + "\n";
}

}  // namespace anogen
