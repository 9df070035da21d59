#include "core/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace ddnet {
namespace {

std::atomic<long> g_override{-1};

std::size_t threads_from_env() {
  const char* env = std::getenv("DDNET_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  try {
    const long v = std::stol(env);
    return v <= 0 ? 1 : static_cast<std::size_t>(v);
  } catch (...) {
    return 1;
  }
}

}  // namespace

std::size_t worker_threads() {
  const long o = g_override.load();
  if (o >= 0) return o == 0 ? 1 : static_cast<std::size_t>(o);
  static const std::size_t from_env = threads_from_env();
  return from_env;
}

void set_worker_threads(std::size_t n) { g_override.store(static_cast<long>(n)); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_threads(), n);
  if (workers <= 1) {
    if (n > 0) fn(0, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t b = w * chunk;
    const std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace ddnet
