#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ewel {

//! Runs fn(i) for i in [0, count) on up to `jobs` threads. Work items must
//! write to disjoint outputs; the first exception (lowest index) is rethrown
//! after all workers have stopped, so failures are independent of scheduling.
template<class Fn>
void parallel_for(std::size_t count, unsigned jobs, Fn&& fn)
{
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i)
      fn(i);
    return;
  }
  std::atomic<std::size_t> next{ 0 };
  std::mutex mutex;
  std::exception_ptr error;
  std::size_t error_index = count;
  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count)
        return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mutex);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };
  const unsigned n = static_cast<unsigned>(std::min<std::size_t>(jobs, count));
  std::vector<std::thread> threads;
  threads.reserve(n);
  for (unsigned k = 0; k < n; ++k)
    threads.emplace_back(worker);
  for (auto& t : threads)
    t.join();
  if (error)
    std::rethrow_exception(error);
}

} // namespace ewel
