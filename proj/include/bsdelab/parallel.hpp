#pragma once

#include <cstddef>
#include <functional>

namespace bsdelab
{
	/// Caps the number of worker threads used by every data-parallel loop.
	/// 0 restores the default (hardware concurrency).
	void set_max_threads(unsigned threads);
	unsigned max_threads();

	/// Runs body(begin, end) over [0, n) split into contiguous blocks of at
	/// most `grain` items. Blocks are assigned to workers statically; callers
	/// write results into per-index slots so output never depends on the
	/// thread count.
	void parallel_for(std::size_t n, std::size_t grain, const std::function<void(std::size_t, std::size_t)> &body);
} // namespace bsdelab
