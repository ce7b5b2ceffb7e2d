#pragma once

#include <algorithm>
#include <future>
#include <thread>
#include <vector>

namespace toder {

/// Runs f(i) for i in [0, n) on all hardware threads. Iterations must be independent;
/// results are identical to a serial loop because each index writes its own output.
template <typename Func>
void parallel_for(int n, Func&& f) {
  const int workers = std::max(1, std::min<int>(n, static_cast<int>(std::thread::hardware_concurrency())));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::future<void>> futures;
  futures.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [w, n, workers, &f] {
      for (int i = w; i < n; i += workers) f(i);
    }));
  }
  for (auto& fut : futures) fut.get();
}

}  // namespace toder
