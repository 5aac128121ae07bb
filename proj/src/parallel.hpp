#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace lena::detail
{
	/// Runs body(i) for i in [0, n) on up to `threads` workers, each taking a contiguous block; rethrows the first failure.
	template<typename Body>
	void parallel_for(std::size_t n, std::size_t threads, Body &&body)
	{
		const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
		if (workers == 1)
		{
			for (std::size_t i = 0; i < n; i++)
				body(i);
			return;
		}
		std::vector<std::exception_ptr> errors(workers);
		std::vector<std::thread> pool;
		for (std::size_t w = 0; w < workers; w++)
			pool.emplace_back([&, w]
			{
				try
				{
					for (std::size_t i = n * w / workers; i < n * (w + 1) / workers; i++)
						body(i);
				} catch (...)
				{
					errors[w] = std::current_exception();
				}
			});
		for (std::thread &t : pool)
			t.join();
		for (const std::exception_ptr &e : errors)
			if (e)
				std::rethrow_exception(e);
	}
}
