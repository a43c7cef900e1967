#include "cdcl/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

namespace cdcl {

void set_num_threads(int threads) {
  omp_set_num_threads(threads < 1 ? omp_get_num_procs() : threads);
}

int num_threads() { return omp_get_max_threads(); }

void configure_threads_from_env() {
  if (const char* value = std::getenv("CDCL_THREADS")) {
    try {
      set_num_threads(std::stoi(value));
    } catch (const std::exception&) {
      // Malformed values fall back to the runtime default.
      set_num_threads(0);
    }
  }
}

}  // namespace cdcl
