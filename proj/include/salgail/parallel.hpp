#pragma once

#include <cstddef>
#include <future>
#include <vector>

namespace salgail {

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Work items must not
/// share mutable state; results are therefore independent of `jobs`.
/// The first exception thrown by any item is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(jobs)) {
    std::vector<std::future<void>> batch;
    for (std::size_t i = start; i < n && i < start + static_cast<std::size_t>(jobs); ++i) {
      batch.push_back(std::async(std::launch::async, [&fn, i] { fn(i); }));
    }
    for (auto& f : batch) f.get();
  }
}

}  // namespace salgail
