#pragma once

namespace cdcl {

// Caps OpenMP worker threads for all parallel kernels. Values < 1 restore the
// runtime default.
void set_num_threads(int threads);
int num_threads();
// Applies CDCL_THREADS from the environment when set.
void configure_threads_from_env();

}  // namespace cdcl
