#pragma once

#include <exception>

#include <omp.h>

namespace dbo {

/// Selects how per-agent loops run. `serial` is the reference path used to
/// check the OpenMP path; both write disjoint per-agent blocks, so results
/// are bit-identical.
enum class Exec { serial, parallel };

template <class Fn>
void for_each_agent(Exec exec, int n, Fn&& fn) {
  if (exec == Exec::parallel && n > 1) {
    // exceptions must not escape an OpenMP region; keep the first, rethrow after
    std::exception_ptr first;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
#pragma omp critical(dbo_for_each_agent)
        if (!first) first = std::current_exception();
      }
    }
    if (first) std::rethrow_exception(first);
  } else {
    for (int i = 0; i < n; ++i) fn(i);
  }
}

}  // namespace dbo
