#include "psm/parallel.hpp"

#include <cstdlib>
#include <string>

namespace psm {

namespace {

std::size_t read_env_limit() {
  const char* v = std::getenv("PSM_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (end == v || n <= 1) return 1;
  const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  return std::min<std::size_t>(static_cast<std::size_t>(n), hw);
}

std::size_t g_limit = 0;  // 0 = not yet initialised

}  // namespace

std::size_t thread_limit() {
  if (g_limit == 0) g_limit = read_env_limit();
  return g_limit;
}

void set_thread_limit(std::size_t n) { g_limit = n == 0 ? 1 : n; }

}  // namespace psm
