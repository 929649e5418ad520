#pragma once

#include <cstddef>
#include <functional>

namespace modeflow {

/// Runs `task(i)` for i in [0, count) on at most `parallelism` threads.
/// The first exception thrown by any task is rethrown after all workers
/// have joined; remaining indices are abandoned once a task has failed.
void parallel_for(std::size_t count, std::size_t parallelism,
                  const std::function<void(std::size_t)>& task);

}  // namespace modeflow
