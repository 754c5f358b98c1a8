#ifndef LQSADP_PARALLEL_HPP
#define LQSADP_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace lqsadp {

inline constexpr const char* kWorkersEnv = "LQSADP_WORKERS";

/// Worker count from LQSADP_WORKERS, defaulting to all cores.
inline std::size_t default_workers() {
  if (const char* env = std::getenv(kWorkersEnv)) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs task(i) for i in [0, count) on up to `workers` threads. Tasks must
/// write only to their own output slot. If any tasks throw, the exception of
/// the lowest-indexed failing task is rethrown.
template <typename Task>
void parallel_tasks(std::size_t count, std::size_t workers, Task&& task) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  std::vector<std::exception_ptr> errors(count);
  auto body = [&](std::atomic<std::size_t>& next) {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::atomic<std::size_t> next{0};
  if (workers == 1) {
    body(next);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back([&] { body(next); });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace lqsadp

#endif  // LQSADP_PARALLEL_HPP
