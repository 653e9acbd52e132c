#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace foss::bench {

struct Options {
  std::vector<std::size_t> lengths = {256, 512, 1024, 2048, 4096, 8192};
  std::vector<std::string> components = {"selective_scan", "helixsort", "fd_branch", "fuse", "naive_attention"};
  std::size_t repeats = 5;
  std::size_t d_model = 32;
  std::size_t state_size = 16;
  std::uint64_t seed = 0;
};

struct Row {
  std::string component;
  std::size_t length = 0;
  double median_seconds = 0.0;
  double ops_estimate = 0.0;
  std::size_t param_count = 0;
};

std::vector<Row> run(const Options& options);

double median(std::vector<double> values);

/// Median over consecutive lengths of time(T_{i+1}) / time(T_i) for one
/// component, restricted to lengths in `window` (all lengths if empty).
double scaling_ratio(std::span<const Row> rows, const std::string& component,
                     std::span<const std::size_t> window = {});

/// Row-by-row softmax(q k^T / sqrt(d)) v on [T x d] inputs; O(T^2 d) time and
/// O(T) extra memory. Baseline only, not differentiable.
std::vector<double> naive_attention(std::span<const double> q, std::span<const double> k,
                                    std::span<const double> v, std::size_t length, std::size_t dim);

std::string csv_header();
std::string csv_row(const Row& r);

}  // namespace foss::bench
