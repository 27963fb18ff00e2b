#include "limi/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <sstream>

#include "limi/error.hpp"

namespace limi {

namespace {

void check_sets(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw InvalidArgument("auc: " + std::to_string(scores.size()) + " scores but " +
                          std::to_string(labels.size()) + " labels");
  }
  std::size_t pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw InvalidArgument("auc: labels must be 0 or 1");
    pos += static_cast<std::size_t>(l);
  }
  if (pos == 0 || pos == labels.size()) {
    throw InvalidArgument("auc: needs at least one positive and one negative label");
  }
  for (double s : scores)
    if (std::isnan(s)) throw InvalidArgument("auc: NaN score");
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_sets(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the Mann-Whitney U in integers: each positive earns 2 per lower
  // negative and 1 per tied negative.
  std::uint64_t twice_u = 0, pos = 0, neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t p = 0, n = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? p : n) += 1;
      ++j;
    }
    twice_u += p * (2 * neg_below + n);
    neg_below += n;
    pos += p;
    i = j;
  }
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos * neg_below));
}

double auc_brute_force(std::span<const double> scores, std::span<const int> labels) {
  check_sets(scores, labels);
  std::uint64_t twice = 0, pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) twice += 2;
      else if (scores[i] == scores[j]) twice += 1;
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pairs));
}

MeanStdev aggregate(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("aggregate: no values");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / n)};
}

ResultsRow make_row(std::string arm, std::string bound, std::string probe_mode,
                    std::string task, std::span<const double> per_seed) {
  const auto a = aggregate(per_seed);
  return {std::move(arm), std::move(bound), std::move(probe_mode), std::move(task),
          a.mean, a.stdev, per_seed.size()};
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

constexpr const char* kHeader = "arm,bound,probe_mode,task,mean_auc,stdev,n_seeds";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw IoError("results csv: bad number '" + s + "'");
  return v;
}

}  // namespace

void write_results_csv(std::ostream& out, std::span<const ResultsRow> rows) {
  out << kHeader << '\n';
  for (const auto& r : rows) {
    out << r.arm << ',' << r.bound << ',' << r.probe_mode << ',' << r.task << ','
        << format_double(r.mean_auc) << ',' << format_double(r.stdev) << ',' << r.n_seeds
        << '\n';
  }
}

std::vector<ResultsRow> read_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw IoError("results csv: bad header");
  std::vector<ResultsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 7) throw IoError("results csv: expected 7 fields in '" + line + "'");
    rows.push_back({f[0], f[1], f[2], f[3], parse_double(f[4]), parse_double(f[5]),
                    static_cast<std::size_t>(parse_double(f[6]))});
  }
  return rows;
}

void write_results_text(std::ostream& out, std::span<const ResultsRow> rows) {
  const std::vector<std::string> head{"arm", "bound", "probe_mode", "task",
                                      "mean_auc", "stdev", "n_seeds"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    char mean[32], sd[32];
    std::snprintf(mean, sizeof mean, "%.4f", r.mean_auc);
    std::snprintf(sd, sizeof sd, "%.4f", r.stdev);
    cells.push_back({r.arm, r.bound, r.probe_mode, r.task, mean, sd, std::to_string(r.n_seeds)});
  }
  std::vector<std::size_t> width(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    width[c] = head[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  auto emit = [&](const std::vector<std::string>& row) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      // Text columns left-aligned, numbers right-aligned.
      const std::string pad(width[c] - row[c].size(), ' ');
      line += c < 4 ? row[c] + pad : pad + row[c];
      if (c + 1 < row.size()) line += "  ";
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  };
  emit(head);
  std::string rule;
  for (std::size_t c = 0; c < head.size(); ++c) {
    rule += std::string(width[c], '-');
    if (c + 1 < head.size()) rule += "  ";
  }
  out << rule << '\n';
  for (const auto& row : cells) emit(row);
}

}  // namespace limi
