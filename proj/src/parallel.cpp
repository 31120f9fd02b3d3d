#include "gcate/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gcate {
namespace {

int default_threads() {
  if (const char* env = std::getenv("GCATE_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

std::atomic<int>& thread_setting() {
  static std::atomic<int> threads{default_threads()};
  return threads;
}

}  // namespace

int num_threads() { return thread_setting().load(); }

void set_num_threads(int threads) { thread_setting().store(std::max(1, threads)); }

void parallel_for(std::ptrdiff_t count, const std::function<void(std::ptrdiff_t)>& body) {
  const auto workers = static_cast<std::ptrdiff_t>(std::min<std::ptrdiff_t>(num_threads(), count));
  if (workers <= 1 || count < 64) {
    for (std::ptrdiff_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const std::ptrdiff_t chunk = (count + workers - 1) / workers;
  for (std::ptrdiff_t w = 0; w < workers; ++w) {
    const std::ptrdiff_t begin = w * chunk;
    const std::ptrdiff_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::ptrdiff_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace gcate
