#pragma once

#include <cstddef>
#include <exception>
#include <type_traits>
#include <utility>
#include <vector>

#include <omp.h>

namespace msgam {

/// Serial runs the reference loop; parallel distributes independent jobs over
/// OpenMP threads. Both produce identical results because every job derives
/// its randomness from its own index.
enum class Execution { serial, parallel };

/// Evaluate fn(i) for i in [0, n) and collect the results in index order.
template <class Fn>
auto map_indexed(std::size_t n, Fn&& fn, Execution exec = Execution::parallel)
    -> std::vector<std::invoke_result_t<Fn&, std::size_t>> {
  using Result = std::invoke_result_t<Fn&, std::size_t>;
  std::vector<Result> out(n);
  if (exec == Execution::serial || n < 2 || omp_in_parallel()) {
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = fn(i);
    }
    return out;
  }
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < count; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
  return out;
}

/// Set the worker count used by parallel maps; 0 keeps the OpenMP default.
inline void set_thread_count(int threads) {
  if (threads > 0) {
    omp_set_num_threads(threads);
  }
}

}  // namespace msgam
