#pragma once

#include <cstddef>
#include <functional>

namespace shrubmap {

/// Process-wide worker count used by parallel_for; 0 means hardware concurrency.
void set_worker_count(std::size_t n);
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) over contiguous static chunks. Callers write
/// results into per-index slots, so output never depends on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Chunked form: fn(begin, end) per worker range.
void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace shrubmap
