#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace limi {

/// Area under the ROC curve as a Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ordered correctly, ties worth one half.
/// Throws InvalidArgument when either class is absent or lengths differ.
double auc(std::span<const double> scores, std::span<const int> labels);

/// O(P * N) reference implementation of auc().
double auc_brute_force(std::span<const double> scores, std::span<const int> labels);

struct ResultsRow {
  std::string arm;
  std::string bound;       // "none" for the supervised baseline
  std::string probe_mode;  // frozen | finetune
  std::string task;        // region<n> or "mean"
  double mean_auc = 0.0;
  double stdev = 0.0;
  std::size_t n_seeds = 0;

  friend bool operator==(const ResultsRow&, const ResultsRow&) = default;
};

struct MeanStdev {
  double mean = 0.0;
  double stdev = 0.0;  // population
};

/// Mean and population standard deviation. Values are summed in sorted
/// order so the result does not depend on the order seeds finished in.
MeanStdev aggregate(std::span<const double> values);

ResultsRow make_row(std::string arm, std::string bound, std::string probe_mode,
                    std::string task, std::span<const double> per_seed);

void write_results_csv(std::ostream& out, std::span<const ResultsRow> rows);
std::vector<ResultsRow> read_results_csv(std::istream& in);
/// Fixed-width columns for terminal display.
void write_results_text(std::ostream& out, std::span<const ResultsRow> rows);

/// Shortest round-trippable decimal form of a double.
std::string format_double(double v);

}  // namespace limi
