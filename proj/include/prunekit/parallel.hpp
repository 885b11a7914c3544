#pragma once

#include <cstddef>
#include <functional>

namespace prunekit {

// Worker count from PRUNEKIT_THREADS (0 or unset = hardware concurrency).
std::size_t worker_count();

// Override for tests; 0 restores the environment-derived value.
void set_worker_count(std::size_t n);

// Runs body(task, worker) for task in [0, tasks). Tasks are handed out in
// contiguous blocks; callers must merge per-task results in task order so the
// outcome does not depend on the number of workers.
void parallel_for(std::size_t tasks, const std::function<void(std::size_t task, std::size_t worker)>& body);

}  // namespace prunekit
