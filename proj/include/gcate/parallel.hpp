#pragma once

#include <cstddef>
#include <functional>

namespace gcate {

/// Worker count used by parallel_for. Defaults to GCATE_THREADS when set,
/// otherwise the hardware concurrency.
int num_threads();
void set_num_threads(int threads);

/// Runs body(i) for i in [0, count). Each index is written by exactly one
/// worker, so results do not depend on the thread count.
void parallel_for(std::ptrdiff_t count, const std::function<void(std::ptrdiff_t)>& body);

}  // namespace gcate
