#pragma once
// parallel_for used by rendering and evaluation.  Work item i writes only to
// slot i; callers reduce sequentially afterwards, so results are independent
// of the thread count.  Training never goes through here.

#include <cstddef>
#include <functional>

namespace draw {

// Honors DRAWBENCH_THREADS (>=1); defaults to hardware concurrency.
int worker_count();

void parallel_for(long n, const std::function<void(long)>& fn);

}  // namespace draw
