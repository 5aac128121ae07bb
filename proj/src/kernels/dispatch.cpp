#include <lena/error.hpp>
#include <lena/kernels.hpp>

#include <atomic>
#include <cstdlib>
#include <string>

namespace lena::kernels
{
	namespace
	{
		constexpr KernelTable scalar_table { Isa::Scalar, "scalar", scalar::dot, scalar::axpy, scalar::sum, scalar::scale };
#if defined(LENA_HAVE_AVX2)
		constexpr KernelTable avx2_table { Isa::Avx2, "avx2", avx2::dot, avx2::axpy, avx2::sum, avx2::scale };
#endif

		const KernelTable* initial_table() noexcept
		{
			if (const char *env = std::getenv("LENA_SIMD"))
			{
				try
				{
					return &table(parse_isa(env));
				} catch (const std::exception&)
				{
					// unknown or unsupported request falls back to detection
				}
			}
#if defined(LENA_HAVE_AVX2)
			if (supported(Isa::Avx2))
				return &avx2_table;
#endif
			return &scalar_table;
		}

		std::atomic<const KernelTable*>& active_slot() noexcept
		{
			static std::atomic<const KernelTable*> slot { initial_table() };
			return slot;
		}
	}

	bool supported(Isa isa) noexcept
	{
		switch (isa)
		{
			case Isa::Scalar:
				return true;
			case Isa::Avx2:
#if defined(LENA_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
				return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
				return false;
#endif
		}
		return false;
	}

	const KernelTable& table(Isa isa)
	{
		if (!supported(isa))
			throw InvalidArgument("kernel ISA not available on this build/CPU");
#if defined(LENA_HAVE_AVX2)
		if (isa == Isa::Avx2)
			return avx2_table;
#endif
		return scalar_table;
	}

	const KernelTable& active() noexcept
	{
		return *active_slot().load(std::memory_order_acquire);
	}

	void select(Isa isa)
	{
		active_slot().store(&table(isa), std::memory_order_release);
	}

	Isa parse_isa(std::string_view name)
	{
		if (name == "scalar")
			return Isa::Scalar;
		if (name == "avx2")
			return Isa::Avx2;
		throw InvalidArgument("unknown kernel ISA '" + std::string(name) + "' (expected scalar or avx2)");
	}
}
