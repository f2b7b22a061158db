#pragma once

#include <functional>

namespace pmfield {

// Worker count: PMFIELD_THREADS env var if set, otherwise hardware concurrency.
int thread_count();

// Runs fn(i) for i in [0, n). Work items must be independent; exceptions are
// captured and the first one is rethrown on the calling thread after join.
// Falls back to a plain loop when n is small or one thread is configured.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace pmfield
