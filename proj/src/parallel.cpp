#include <bsdelab/parallel.hpp>

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace bsdelab
{
	namespace
	{
		std::atomic<unsigned> g_max_threads{0};
		// nested loops run serially inside a worker
		thread_local bool t_in_parallel = false;

		struct NestingGuard
		{
			bool saved;
			NestingGuard() : saved(t_in_parallel) { t_in_parallel = true; }
			~NestingGuard() { t_in_parallel = saved; }
		};
	}

	void set_max_threads(unsigned threads) { g_max_threads = threads; }

	unsigned max_threads()
	{
		const unsigned requested = g_max_threads.load();
		if (requested > 0)
			return requested;
		return std::max(1u, std::thread::hardware_concurrency());
	}

	void parallel_for(std::size_t n, std::size_t grain, const std::function<void(std::size_t, std::size_t)> &body)
	{
		if (n == 0)
			return;
		grain = std::max<std::size_t>(grain, 1);
		const std::size_t blocks = (n + grain - 1) / grain;
		const std::size_t workers = std::min<std::size_t>(max_threads(), blocks);
		if (workers <= 1 || t_in_parallel)
		{
			NestingGuard guard;
			for (std::size_t b = 0; b < blocks; ++b)
				body(b * grain, std::min(n, (b + 1) * grain));
			return;
		}

		std::exception_ptr failure;
		std::mutex failure_mutex;
		std::vector<std::thread> pool;
		pool.reserve(workers);
		for (std::size_t w = 0; w < workers; ++w)
		{
			pool.emplace_back([&, w] {
				NestingGuard guard;
				try
				{
					for (std::size_t b = w; b < blocks; b += workers)
						body(b * grain, std::min(n, (b + 1) * grain));
				}
				catch (...)
				{
					std::lock_guard lock(failure_mutex);
					if (!failure)
						failure = std::current_exception();
				}
			});
		}
		for (auto &t : pool)
			t.join();
		if (failure)
			std::rethrow_exception(failure);
	}
} // namespace bsdelab
