#pragma once

#include <cstddef>
#include <functional>

namespace reimagine {

// Thread count used by parallel_for. Defaults to REIMAGINE_THREADS when set,
// otherwise 1.
int thread_count();
void set_thread_count(int n);

// Runs body(i) for i in [0, n) over a static partition. Each index is
// processed exactly once, so callers writing to slot i get results that do
// not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace reimagine
