#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace megacurate {

// Process-wide worker count for data-parallel loops. 0 = hardware default.
void set_thread_count(unsigned n);
unsigned thread_count();

// Runs fn(block_index, begin, end) over fixed-size blocks of [0, n).
// The block decomposition depends only on (n, block_size), never on the
// worker count, so per-block outputs (and reductions combined in block
// order) are identical for any thread count.
void parallel_for_blocks(std::size_t n, std::size_t block_size,
                         const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

inline std::size_t block_count(std::size_t n, std::size_t block_size) {
    return block_size == 0 ? 0 : (n + block_size - 1) / block_size;
}

} // namespace megacurate
