#include "rkgcn/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <vector>

#include "rkgcn/common.hpp"

namespace rkgcn {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of positive ranks, doubled so tied (half-integer) ranks stay integral.
  double rank_sum_x2 = 0;
  std::size_t positives = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_x2 = static_cast<double>(i + 1 + j);  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum_x2 += avg_x2;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw Error("auc is undefined for single-class labels");
  const double np = static_cast<double>(positives);
  const double u = (rank_sum_x2 - np * (np + 1.0)) / 2.0;
  return u / (np * static_cast<double>(negatives));
}

double acc(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.empty() || scores.size() != labels.size()) throw Error("acc: empty or mismatched input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int predicted = scores[i] >= threshold ? 1 : 0;
    if (predicted == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

std::string MetricReport::csv_header() { return "split,auc,acc,n,skipped,seed"; }

std::string MetricReport::csv_row() const {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed << split << ',' << auc << ',' << acc << ',' << n_examples << ',' << skipped << ',' << seed;
  return out.str();
}

}  // namespace rkgcn
