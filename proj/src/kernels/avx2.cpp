#include <lena/kernels.hpp>

#include <immintrin.h>

/*
 * Built with -mavx2 -mfma; only reached after a runtime CPU check. Reductions
 * keep two 4-lane accumulators and fold them in a fixed order, so results are
 * deterministic but differ from the scalar loop by rounding.
 */
namespace lena::kernels::avx2
{
	namespace
	{
		inline double horizontal_sum(__m256d v) noexcept
		{
			const __m128d lo = _mm256_castpd256_pd128(v);
			const __m128d hi = _mm256_extractf128_pd(v, 1);
			const __m128d pair = _mm_add_pd(lo, hi);
			return _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)));
		}
	}

	double dot(const double *x, const double *y, std::size_t n) noexcept
	{
		__m256d acc0 = _mm256_setzero_pd();
		__m256d acc1 = _mm256_setzero_pd();
		std::size_t i = 0;
		for (; i + 8 <= n; i += 8)
		{
			acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
			acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
		}
		if (i + 4 <= n)
		{
			acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
			i += 4;
		}
		double result = horizontal_sum(_mm256_add_pd(acc0, acc1));
		for (; i < n; i++)
			result += x[i] * y[i];
		return result;
	}

	void axpy(double a, const double *x, double *y, std::size_t n) noexcept
	{
		const __m256d va = _mm256_set1_pd(a);
		std::size_t i = 0;
		for (; i + 4 <= n; i += 4)
			_mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
		for (; i < n; i++)
			y[i] += a * x[i];
	}

	double sum(const double *x, std::size_t n) noexcept
	{
		__m256d acc0 = _mm256_setzero_pd();
		__m256d acc1 = _mm256_setzero_pd();
		std::size_t i = 0;
		for (; i + 8 <= n; i += 8)
		{
			acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
			acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
		}
		if (i + 4 <= n)
		{
			acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
			i += 4;
		}
		double result = horizontal_sum(_mm256_add_pd(acc0, acc1));
		for (; i < n; i++)
			result += x[i];
		return result;
	}

	void scale(double a, double *x, std::size_t n) noexcept
	{
		const __m256d va = _mm256_set1_pd(a);
		std::size_t i = 0;
		for (; i + 4 <= n; i += 4)
			_mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
		for (; i < n; i++)
			x[i] *= a;
	}
}
