#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

namespace lena
{
	/*
	 * Seeded generator with distribution code of our own on top of the
	 * standardized mt19937_64 stream, so sequences do not depend on the
	 * standard library's distribution implementations.
	 */
	class Rng
	{
		public:
			explicit Rng(std::uint64_t seed) :
					m_engine(seed)
			{
			}

			std::uint64_t next() noexcept { return m_engine(); }

			/// Uniform in [0, 1) with 53 random bits.
			double uniform() noexcept { return static_cast<double>(m_engine() >> 11) * 0x1.0p-53; }
			double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

			/// Uniform in [0, n) without modulo bias.
			std::uint64_t index(std::uint64_t n) noexcept
			{
				const std::uint64_t limit = ~std::uint64_t { 0 } - (~std::uint64_t { 0 } % n);
				std::uint64_t x;
				do
					x = m_engine();
				while (x >= limit);
				return x % n;
			}

			double normal() noexcept
			{
				double u1 = uniform();
				while (u1 <= 0.0)
					u1 = uniform();
				const double u2 = uniform();
				return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
			}

			template<typename T>
			void shuffle(std::vector<T> &items) noexcept
			{
				for (std::size_t i = items.size(); i > 1; i--)
					std::swap(items[i - 1], items[index(i)]);
			}

		private:
			std::mt19937_64 m_engine;
	};
}
