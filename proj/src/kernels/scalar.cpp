#include <lena/kernels.hpp>

namespace lena::kernels::scalar
{
	double dot(const double *x, const double *y, std::size_t n) noexcept
	{
		double acc = 0.0;
		for (std::size_t i = 0; i < n; i++)
			acc += x[i] * y[i];
		return acc;
	}
	void axpy(double a, const double *x, double *y, std::size_t n) noexcept
	{
		for (std::size_t i = 0; i < n; i++)
			y[i] += a * x[i];
	}
	double sum(const double *x, std::size_t n) noexcept
	{
		double acc = 0.0;
		for (std::size_t i = 0; i < n; i++)
			acc += x[i];
		return acc;
	}
	void scale(double a, double *x, std::size_t n) noexcept
	{
		for (std::size_t i = 0; i < n; i++)
			x[i] *= a;
	}
}
