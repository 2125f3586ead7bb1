#pragma once

#include <cstddef>
#include <functional>

namespace borderlab {

/// Process-wide cap on worker threads used by the library (1 = serial).
void set_max_threads(std::size_t n);
std::size_t max_threads();

/// Runs body(i) for i in [0, n). Each index must write only to its own slot, so
/// results do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace borderlab
