#pragma once

// Worker-count policy shared by the parallel code paths.

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>

namespace deltavar::detail {

/// `requested` when positive, else the hardware concurrency; capped by the
/// DELTAVAR_THREADS environment variable when it holds a positive integer.
inline unsigned worker_count(unsigned requested = 0) {
  unsigned n = requested > 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DELTAVAR_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap > 0) n = std::min(n, static_cast<unsigned>(cap));
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, n);
}

}  // namespace deltavar::detail
