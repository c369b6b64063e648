#pragma once

#include <cstddef>
#include <functional>

namespace dts {

/// Default worker count: DTS_THREADS if set, else 1.
int default_threads();
void set_default_threads(int n);

/// Runs body(begin, end) over a static partition of [0, n). Each index is owned by exactly one
/// chunk, so per-index results do not depend on the thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace dts
