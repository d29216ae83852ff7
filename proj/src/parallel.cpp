#include "mtre/parallel.hpp"

#include <atomic>

namespace mtre {
namespace {
std::atomic<int> g_threads{0};
}

void set_default_threads(int threads) { g_threads = std::max(threads, 0); }

int default_threads() {
  const int configured = g_threads.load();
  if (configured > 0) return configured;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

}  // namespace mtre
