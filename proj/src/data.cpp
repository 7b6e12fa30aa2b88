#include "tsrobust/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "tsrobust/rng.hpp"

namespace tsrobust {

void Dataset::validate() const {
  if (labels.empty()) throw DataError("dataset is empty");
  if (series.size() != static_cast<std::size_t>(labels.size()) * k)
    throw DataError("series buffer does not match n*k");
  for (int y : labels)
    if (y < 0 || y >= num_classes)
      throw DataError("label " + std::to_string(y) + " outside [0, " +
                      std::to_string(num_classes) + ")");
  for (double v : series)
    if (!std::isfinite(v)) throw DataError("non-finite value in series");
}

namespace {

double parse_token(const std::string& tok, int line_no) {
  double v = 0.0;
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end)
    throw FormatError("line " + std::to_string(line_no) + ": cannot parse '" + tok +
                      "' as a number");
  return v;
}

}  // namespace

Dataset load_ucr_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  std::vector<double> raw_labels;
  std::vector<double> series;
  int k = -1;
  int line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> toks;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      toks.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (toks.size() < 2)
      throw FormatError("line " + std::to_string(line_no) + ": expected label and values");
    const int row_k = static_cast<int>(toks.size()) - 1;
    if (k < 0) k = row_k;
    if (row_k != k)
      throw FormatError("line " + std::to_string(line_no) + ": row has " +
                        std::to_string(row_k) + " values, expected " + std::to_string(k));
    raw_labels.push_back(parse_token(toks[0], line_no));
    for (int i = 1; i <= k; ++i) series.push_back(parse_token(toks[i], line_no));
  }
  if (raw_labels.empty()) throw DataError("empty dataset: " + path);

  // remap raw labels to contiguous [0, C) preserving ascending raw order
  std::map<double, int> remap;
  for (double rl : raw_labels) remap.emplace(rl, 0);
  int next = 0;
  for (auto& [rl, idx] : remap) idx = next++;

  Dataset d;
  d.series = std::move(series);
  d.labels.reserve(raw_labels.size());
  for (double rl : raw_labels) d.labels.push_back(remap.at(rl));
  d.k = k;
  d.num_classes = next;
  d.name = path;
  d.validate();
  return d;
}

void save_ucr_tsv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  char buf[40];
  for (int i = 0; i < d.size(); ++i) {
    out << d.labels[i];
    auto row = d.row(i);
    for (double v : row) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << '\t' << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

Dataset z_normalize(const Dataset& d) {
  Dataset out = d;
  for (int i = 0; i < d.size(); ++i) {
    double* row = out.series.data() + static_cast<std::size_t>(i) * d.k;
    double mean = 0.0;
    for (int t = 0; t < d.k; ++t) mean += row[t];
    mean /= d.k;
    double var = 0.0;
    for (int t = 0; t < d.k; ++t) {
      const double c = row[t] - mean;
      var += c * c;
    }
    var /= d.k;  // population variance
    if (var == 0.0) {
      for (int t = 0; t < d.k; ++t) row[t] = 0.0;
    } else {
      const double inv = 1.0 / std::sqrt(var);
      for (int t = 0; t < d.k; ++t) row[t] = (row[t] - mean) * inv;
    }
  }
  return out;
}

std::pair<Dataset, Dataset> synth_two_class(int n_per_class, int k, std::uint64_t seed,
                                            double noise_amplitude) {
  if (n_per_class < 10 || k < 32)
    throw ConfigError("synth_two_class: need n_per_class >= 10 and k >= 32");

  Rng rng(derive_seed(seed, 0x73796e7468ULL));
  const double omega = 2.0 * std::numbers::pi * 3.0 / k;

  auto make = [&](const std::string& split) {
    Dataset d;
    d.k = k;
    d.num_classes = 2;
    d.split = split;
    d.name = "synth-two-class";
    for (int cls = 0; cls < 2; ++cls) {
      const double phase = cls == 0 ? 0.0 : std::numbers::pi / 2.0;
      for (int i = 0; i < n_per_class; ++i) {
        for (int t = 0; t < k; ++t)
          d.series.push_back(std::sin(omega * t + phase) +
                             noise_amplitude * rng.normal(0.0, 1.0));
        d.labels.push_back(cls);
      }
    }
    return z_normalize(d);
  };

  Dataset train = make("train");
  Dataset test = make("test");
  return {std::move(train), std::move(test)};
}

}  // namespace tsrobust
