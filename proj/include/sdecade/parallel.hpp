#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace sdecade {

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). Work is split into contiguous static blocks. If any call
/// throws, the exception raised at the smallest index is rethrown after all
/// workers join.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

/// Pairwise (tree) summation with a fixed split shape, so the rounding of the
/// result depends only on the input order, never on the thread count.
double pairwise_sum(std::span<const double> values);

struct MeanAndError {
  double mean = 0.0;
  double std_error = 0.0;  // sample standard deviation / sqrt(N); 0 when N < 2
};

MeanAndError mean_and_error(std::span<const double> values);

}  // namespace sdecade
