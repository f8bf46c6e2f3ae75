#include "dplab/parallel.hpp"

#include <cstdlib>
#include <string>

namespace dplab {

int resolve_jobs(int requested) {
  if (const char* env = std::getenv("DPLAB_JOBS"); env != nullptr && *env != '\0') {
    try {
      const int v = std::stoi(env);
      if (v > 0) return v;
    } catch (const std::exception&) {
    }
  }
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace dplab
