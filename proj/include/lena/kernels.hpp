#pragma once

#include <cstddef>
#include <span>
#include <string_view>

/*
 * Inner-loop kernels with a portable scalar reference and optional AVX2/FMA
 * variants. The variant is chosen once at startup from CPU features and can be
 * overridden with LENA_SIMD=scalar|avx2 or kernels::select().
 */
namespace lena::kernels
{
	enum class Isa
	{
		Scalar,
		Avx2
	};

	struct KernelTable
	{
			Isa isa;
			std::string_view name;
			double (*dot)(const double *x, const double *y, std::size_t n);
			/// y += a * x
			void (*axpy)(double a, const double *x, double *y, std::size_t n);
			double (*sum)(const double *x, std::size_t n);
			/// x *= a
			void (*scale)(double a, double *x, std::size_t n);
	};

	bool supported(Isa isa) noexcept;
	/// Throws InvalidArgument when the ISA is not compiled in or not supported by the CPU.
	const KernelTable& table(Isa isa);
	const KernelTable& active() noexcept;
	void select(Isa isa);
	Isa parse_isa(std::string_view name);

	inline double dot(std::span<const double> x, std::span<const double> y) noexcept
	{
		return active().dot(x.data(), y.data(), x.size());
	}
	inline void axpy(double a, std::span<const double> x, std::span<double> y) noexcept
	{
		active().axpy(a, x.data(), y.data(), x.size());
	}
	inline double sum(std::span<const double> x) noexcept
	{
		return active().sum(x.data(), x.size());
	}
	inline void scale(double a, std::span<double> x) noexcept
	{
		active().scale(a, x.data(), x.size());
	}

	namespace scalar
	{
		double dot(const double *x, const double *y, std::size_t n) noexcept;
		void axpy(double a, const double *x, double *y, std::size_t n) noexcept;
		double sum(const double *x, std::size_t n) noexcept;
		void scale(double a, double *x, std::size_t n) noexcept;
	}
#if defined(LENA_HAVE_AVX2)
	namespace avx2
	{
		double dot(const double *x, const double *y, std::size_t n) noexcept;
		void axpy(double a, const double *x, double *y, std::size_t n) noexcept;
		double sum(const double *x, std::size_t n) noexcept;
		void scale(double a, double *x, std::size_t n) noexcept;
	}
#endif
}
