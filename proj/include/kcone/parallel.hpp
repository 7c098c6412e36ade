#pragma once

#include <cstddef>
#include <functional>

namespace kcone {

// Runs body(i) for i in [0, count) on up to `jobs` threads (jobs <= 0: one per
// hardware thread). Callers write results into slot i, so output never depends
// on scheduling. If any call throws, the exception of the lowest failing index
// is rethrown after all workers stop.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body);

int resolve_jobs(int jobs);

}  // namespace kcone
