#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

namespace rkgcn {

/// Rank-based AUC (Mann-Whitney U) with average ranks for tied scores.
/// Throws when the labels contain a single class.
double auc(std::span<const double> scores, std::span<const int> labels);

/// (TP + TN) / N with prediction = score >= threshold.
double acc(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

struct MetricReport {
  std::string split;
  double auc = 0;
  double acc = 0;
  std::size_t n_examples = 0;
  std::size_t skipped = 0;  // cold-start examples (user without train history)
  std::uint64_t seed = 0;

  static std::string csv_header();  // split,auc,acc,n,skipped,seed
  std::string csv_row() const;
};

}  // namespace rkgcn
