#include "weft/common.hpp"

#include <atomic>
#include <cstdlib>
#include <sstream>

namespace weft {

void fail(const std::string& msg) { throw Error(msg); }

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

i64 shape_numel(const Shape& s) {
  i64 n = 1;
  for (i64 d : s) n *= d;
  return n;
}

namespace {

int read_thread_env() {
  if (const char* e = std::getenv("WEFT_THREADS")) {
    int v = std::atoi(e);
    if (v >= 1) return v;
  }
  return 1;
}

std::atomic<int> g_threads{read_thread_env()};

#ifdef NDEBUG
std::atomic<bool> g_debug_checks{false};
#else
std::atomic<bool> g_debug_checks{true};
#endif

std::atomic<u64> g_bytes_live{0};
std::atomic<u64> g_bytes_peak{0};

}  // namespace

int max_threads() { return g_threads.load(std::memory_order_relaxed); }
void set_max_threads(int n) { g_threads.store(n < 1 ? 1 : n); }

bool debug_checks_enabled() { return g_debug_checks.load(std::memory_order_relaxed); }
void set_debug_checks(bool on) { g_debug_checks.store(on); }

u64 storage_bytes_live() { return g_bytes_live.load(); }
u64 storage_bytes_peak() { return g_bytes_peak.load(); }
void reset_storage_peak() { g_bytes_peak.store(g_bytes_live.load()); }

namespace detail {
void storage_track_alloc(u64 bytes) {
  u64 live = g_bytes_live.fetch_add(bytes) + bytes;
  u64 peak = g_bytes_peak.load();
  while (live > peak && !g_bytes_peak.compare_exchange_weak(peak, live)) {
  }
}
void storage_track_free(u64 bytes) { g_bytes_live.fetch_sub(bytes); }
}  // namespace detail

}  // namespace weft
