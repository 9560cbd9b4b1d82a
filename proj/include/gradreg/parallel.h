#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace gradreg {

// Worker count: GRADREG_THREADS if set (clamped to >= 1), else hardware
// concurrency. Read once per process.
int thread_count();

// Runs fn(i) for every i in [0, n). Work items must write disjoint outputs;
// scheduling is dynamic, so nothing order-dependent may happen inside fn.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

// Fixed-shape pairwise tree sum. Identical result for any thread count, since
// the tree depends only on n. Inputs come from fixed-order partials (one per
// z-slab or fixed-size chunk), never from thread-local accumulation.
double pairwise_sum(const double* v, std::size_t n);

}  // namespace gradreg
