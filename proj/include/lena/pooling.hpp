#pragma once

#include <lena/tensor.hpp>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lena
{
	enum class PoolingMode
	{
		Gap,
		Gmp,
		Gnap,
		Lena
	};

	std::string_view to_string(PoolingMode mode) noexcept;
	PoolingMode parse_pooling_mode(std::string_view name);

	/// Per-channel pooling fractions, each kept inside [0, 1].
	class EtaVector
	{
		public:
			EtaVector() = default;
			/// Throws InvalidArgument if any value lies outside [0, 1] or is not finite.
			explicit EtaVector(std::vector<double> values);
			static EtaVector filled(std::size_t channels, double value);

			std::size_t size() const noexcept { return m_values.size(); }
			double operator[](std::size_t i) const noexcept { return m_values[i]; }
			std::span<const double> values() const noexcept { return m_values; }

			/// Stores value clamped to [0, 1].
			void set_clamped(std::size_t i, double value);

			bool operator==(const EtaVector&) const = default;

		private:
			std::vector<double> m_values;
	};

	/// 1 + ceil(eta * (W*H - 1)); eta must lie in [0, 1].
	std::size_t top_n_count(double eta, std::size_t width, std::size_t height);
	std::size_t top_n_count(double eta, std::size_t pixels);

	/*
	 * Result of global pooling over an (L, H, W) feature stack. For each channel
	 * the support lists, in ascending row-major order, the pixels whose values
	 * were averaged. Ranking is by value descending, ties going to the lower
	 * pixel index. eta_slope caches the trend estimate of the pooled value with
	 * respect to eta (only filled by LENA pooling).
	 */
	struct PoolResult
	{
			std::vector<double> pooled;
			std::vector<std::vector<std::uint32_t>> support;
			std::vector<std::size_t> n_used;
			std::vector<double> eta_slope;
			std::size_t channels = 0;
			std::size_t height = 0;
			std::size_t width = 0;
	};

	struct TopNAverage
	{
			double value = 0.0;
			std::vector<std::uint32_t> support;
	};

	/// Mean of the N_eta largest values of one channel.
	TopNAverage topn_average(std::span<const double> feature, double eta);

	/// Features are (L, H, W) or (1, L, H, W).
	PoolResult lena_forward(const Tensor &features, const EtaVector &etas);
	PoolResult gap_forward(const Tensor &features);
	PoolResult gmp_forward(const Tensor &features);
	/// Same arithmetic as LENA with fixed etas; eta_slope is left empty.
	PoolResult gnap_forward(const Tensor &features, const EtaVector &fixed_etas);
	/// Dispatches on mode; GAP and GMP ignore etas.
	PoolResult pool_forward(PoolingMode mode, const Tensor &features, const EtaVector &etas);

	/// Routes grad_pooled[l] / n_used[l] to every support pixel of channel l.
	Tensor lena_backward_features(const PoolResult &result, std::span<const double> grad_pooled, std::span<const std::size_t> shape);

	/*
	 * Central difference of the top-N average between N-1 and N+1 pixels, over
	 * an eta step of 1/(W*H - 1). Falls back to a one-sided difference at the
	 * ends of [0, 1]; zero for a single-pixel map. Never positive.
	 */
	double lena_eta_derivative(std::span<const double> feature, double eta);
	std::vector<double> lena_eta_grad(const Tensor &features, const EtaVector &etas, std::span<const double> grad_pooled);
	/// Chain rule using the slopes cached by lena_forward.
	std::vector<double> lena_eta_grad(const PoolResult &result, std::span<const double> grad_pooled);
}
