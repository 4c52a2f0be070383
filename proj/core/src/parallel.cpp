#include "hcd/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace hcd {
namespace {

std::atomic<std::size_t> g_max_workers{0};

std::size_t env_workers() {
  const char* value = std::getenv("HCD_THREADS");
  if (value == nullptr || *value == '\0') {
    return 0;
  }
  try {
    const long parsed = std::stol(value);
    return parsed > 0 ? static_cast<std::size_t>(parsed) : 0;
  } catch (const std::exception&) {
    return 0;
  }
}

}  // namespace

std::size_t worker_count() {
  std::size_t workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const std::size_t env = env_workers(); env > 0) {
    workers = env;
  }
  if (const std::size_t cap = g_max_workers.load(); cap > 0) {
    workers = std::min(workers, cap);
  }
  return std::max<std::size_t>(1, workers);
}

void set_max_workers(std::size_t workers) { g_max_workers.store(workers); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk) {
  if (n == 0) {
    return;
  }
  min_chunk = std::max<std::size_t>(1, min_chunk);
  const std::size_t max_chunks = (n + min_chunk - 1) / min_chunk;
  const std::size_t workers = std::min(worker_count(), max_chunks);
  if (workers <= 1) {
    body(0, n);
    return;
  }

  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  const std::size_t base = n / workers;
  const std::size_t extra = n % workers;
  std::size_t begin = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t end = begin + base + (w < extra ? 1 : 0);
    threads.emplace_back([&, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) {
          failure = std::current_exception();
        }
      }
    });
    begin = end;
  }
  for (auto& thread : threads) {
    thread.join();
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
}

}  // namespace hcd
