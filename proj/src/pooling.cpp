#include <lena/error.hpp>
#include <lena/kernels.hpp>
#include <lena/pooling.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <limits>

namespace lena
{
	namespace
	{
		struct FeatureView
		{
				std::size_t channels, height, width;
				std::span<const double> data;

				std::size_t pixels() const noexcept { return height * width; }
				std::span<const double> channel(std::size_t l) const noexcept { return data.subspan(l * pixels(), pixels()); }
		};

		FeatureView view_features(const Tensor &features)
		{
			if (features.rank() == 3)
				return { features.dim(0), features.dim(1), features.dim(2), features.data() };
			if (features.rank() == 4 && features.dim(0) == 1)
				return { features.dim(1), features.dim(2), features.dim(3), features.data() };
			throw ShapeError("global pooling expects (L,H,W) or (1,L,H,W) features, got " + features.shape_string());
		}

		void require_finite(std::span<const double> values)
		{
			for (double v : values)
				if (!std::isfinite(v))
					throw NumericError("global pooling received a non-finite feature value");
		}

		// Selection of the N largest values of one channel under the
		// (value descending, index ascending) order.
		struct Selection
		{
				std::vector<std::uint32_t> support;
				double sum = 0.0;
				double nth = 0.0; // N-th largest value, the one dropped when going to N-1
				double next = 0.0; // (N+1)-th largest value, valid when N < pixels
		};

		/*
		 * k-th largest value (0-based) of values[0, m), reordering the buffer.
		 * Three-way quickselect with branch-free partitioning; ReLU maps carry
		 * long runs of equal zeros, which the middle band absorbs in one pass.
		 */
		double kth_largest(double *values, std::size_t m, std::size_t k)
		{
			while (m > 16)
			{
				const double x = values[0], y = values[m / 2], z = values[m - 1];
				const double pivot = std::max(std::min(x, y), std::min(std::max(x, y), z));
				std::size_t above = 0;
				for (std::size_t i = 0; i < m; i++)
				{
					const double v = values[i];
					values[i] = values[above];
					values[above] = v;
					above += v > pivot;
				}
				if (k < above)
				{
					m = above;
					continue;
				}
				std::size_t equal = above;
				for (std::size_t i = above; i < m; i++)
				{
					const double v = values[i];
					values[i] = values[equal];
					values[equal] = v;
					equal += v == pivot;
				}
				if (k < equal)
					return pivot;
				values += equal;
				m -= equal;
				k -= equal;
			}
			std::sort(values, values + m, std::greater<double>());
			return values[k];
		}

		Selection select_top(std::span<const double> feature, std::size_t count, std::vector<double> &scratch)
		{
			const std::size_t n = feature.size();
			Selection sel;
			if (count == n)
			{
				sel.support.resize(n);
				for (std::size_t i = 0; i < n; i++)
					sel.support[i] = static_cast<std::uint32_t>(i);
				sel.sum = kernels::sum(feature);
				sel.nth = *std::min_element(feature.begin(), feature.end());
				return sel;
			}

			scratch.clear();
			if (count == 1)
			{
				const std::size_t best = static_cast<std::size_t>(std::max_element(feature.begin(), feature.end()) - feature.begin());
				double runner_up = best == 0 ? feature[1] : feature[0];
				for (std::size_t i = 0; i < n; i++)
					if (i != best)
						runner_up = std::max(runner_up, feature[i]);
				sel.support.push_back(static_cast<std::uint32_t>(best));
				sel.nth = feature[best];
				sel.next = runner_up;
				scratch.push_back(feature[best]);
				sel.sum = kernels::sum(scratch);
				return sel;
			}

			scratch.assign(feature.begin(), feature.end());
			sel.nth = kth_largest(scratch.data(), n, count - 1);

			// The (N+1)-th value is nth itself when a tie straddles the cut, else the largest value below it.
			std::size_t greater = 0, at_least = 0;
			double below = -std::numeric_limits<double>::infinity();
			for (double v : feature)
			{
				greater += v > sel.nth;
				at_least += v >= sel.nth;
				below = std::max(below, v < sel.nth ? v : -std::numeric_limits<double>::infinity());
			}
			sel.next = at_least > count ? sel.nth : below;

			std::size_t ties_left = count - greater;
			sel.support.resize(n);
			std::size_t kept = 0;
			for (std::size_t i = 0; i < n; i++)
			{
				const double v = feature[i];
				const bool tie = v == sel.nth;
				const bool take = (v > sel.nth) | (tie & (ties_left > 0));
				ties_left -= tie & take;
				sel.support[kept] = static_cast<std::uint32_t>(i);
				scratch[kept] = v;
				kept += take;
			}
			sel.support.resize(count);
			sel.sum = kernels::sum(std::span<const double>(scratch.data(), count));
			return sel;
		}

		/*
		 * With D = sum over the support of (v - nth) >= 0 and e = next - nth <= 0:
		 *   g(N-1) = nth + D/(N-1),  g(N) = nth + D/N,  g(N+1) = nth + (D + e)/(N+1)
		 * so every difference below is a sum of non-positive terms, which keeps the
		 * estimate <= 0 under rounding and exactly 0 for flat maps.
		 */
		double eta_slope(std::span<const double> feature, const Selection &sel, double eta)
		{
			const std::size_t n = feature.size();
			if (n < 2)
				return 0.0;
			const std::size_t count = sel.support.size();
			const double steps = static_cast<double>(n - 1); // 1 / delta
			const double delta = 1.0 / steps;

			double deviation = 0.0;
			for (std::uint32_t i : sel.support)
				deviation += feature[i] - sel.nth;
			const double N = static_cast<double>(count);
			const double e = sel.next - sel.nth;
			const bool has_lower = count >= 2;
			const bool has_upper = count + 1 <= n;

			double slope = 0.0;
			if (has_lower && has_upper && eta >= delta && eta <= 1.0 - delta)
				slope = ((-2.0 * deviation / (N - 1.0)) + e) / (N + 1.0) * steps / 2.0;
			else if (has_upper && (eta < delta || !has_lower))
				slope = ((-deviation / N) + e) / (N + 1.0) * steps;
			else if (has_lower)
				slope = (-deviation / N) / (N - 1.0) * steps;
			return slope + 0.0; // no negative zero
		}

		PoolResult pool_with_counts(const FeatureView &view, std::span<const double> etas, bool with_slope,
				const std::function<std::size_t(std::size_t)> &count_for)
		{
			require_finite(view.data);
			PoolResult result;
			result.channels = view.channels;
			result.height = view.height;
			result.width = view.width;
			result.pooled.resize(view.channels);
			result.support.resize(view.channels);
			result.n_used.resize(view.channels);
			if (with_slope)
				result.eta_slope.resize(view.channels);
			std::vector<double> scratch;
			scratch.reserve(view.pixels());
			for (std::size_t l = 0; l < view.channels; l++)
			{
				const std::span<const double> feature = view.channel(l);
				const std::size_t count = count_for(l);
				Selection sel = select_top(feature, count, scratch);
				result.pooled[l] = sel.sum / static_cast<double>(count);
				result.n_used[l] = count;
				if (with_slope)
					result.eta_slope[l] = eta_slope(feature, sel, etas[l]);
				result.support[l] = std::move(sel.support);
			}
			return result;
		}

		void check_eta_count(const FeatureView &view, const EtaVector &etas)
		{
			if (etas.size() != view.channels)
				throw ShapeError("eta vector has " + std::to_string(etas.size()) + " entries for " + std::to_string(view.channels) + " channels");
		}
	}

	std::string_view to_string(PoolingMode mode) noexcept
	{
		switch (mode)
		{
			case PoolingMode::Gap:
				return "gap";
			case PoolingMode::Gmp:
				return "gmp";
			case PoolingMode::Gnap:
				return "gnap";
			case PoolingMode::Lena:
				return "lena";
		}
		return "unknown";
	}

	PoolingMode parse_pooling_mode(std::string_view name)
	{
		std::string lower(name);
		std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
		if (lower == "gap")
			return PoolingMode::Gap;
		if (lower == "gmp")
			return PoolingMode::Gmp;
		if (lower == "gnap")
			return PoolingMode::Gnap;
		if (lower == "lena")
			return PoolingMode::Lena;
		throw InvalidArgument("unknown pooling mode '" + std::string(name) + "' (expected gap, gmp, gnap or lena)");
	}

	EtaVector::EtaVector(std::vector<double> values) :
			m_values(std::move(values))
	{
		for (double v : m_values)
			if (!(v >= 0.0 && v <= 1.0))
				throw InvalidArgument("eta values must lie in [0,1], got " + std::to_string(v));
	}
	EtaVector EtaVector::filled(std::size_t channels, double value)
	{
		return EtaVector(std::vector<double>(channels, value));
	}
	void EtaVector::set_clamped(std::size_t i, double value)
	{
		if (std::isnan(value))
			throw NumericError("eta update produced NaN for channel " + std::to_string(i));
		m_values.at(i) = std::clamp(value, 0.0, 1.0);
	}

	std::size_t top_n_count(double eta, std::size_t pixels)
	{
		if (pixels == 0)
			throw InvalidArgument("top_n_count needs at least one pixel");
		if (!(eta >= 0.0 && eta <= 1.0))
			throw InvalidArgument("eta must lie in [0,1], got " + std::to_string(eta));
		double scaled = eta * static_cast<double>(pixels - 1);
		// eta values that are multiples of 1/(WH-1) can land one ulp above the integer
		const double nearest = std::nearbyint(scaled);
		if (std::abs(scaled - nearest) <= 1e-9 * std::max(1.0, nearest))
			scaled = nearest;
		const std::size_t count = 1 + static_cast<std::size_t>(std::ceil(scaled));
		return std::min(count, pixels);
	}
	std::size_t top_n_count(double eta, std::size_t width, std::size_t height)
	{
		return top_n_count(eta, width * height);
	}

	TopNAverage topn_average(std::span<const double> feature, double eta)
	{
		const std::size_t count = top_n_count(eta, feature.size());
		require_finite(feature);
		std::vector<double> scratch;
		Selection sel = select_top(feature, count, scratch);
		return { sel.sum / static_cast<double>(count), std::move(sel.support) };
	}

	PoolResult lena_forward(const Tensor &features, const EtaVector &etas)
	{
		const FeatureView view = view_features(features);
		check_eta_count(view, etas);
		return pool_with_counts(view, etas.values(), true, [&](std::size_t l) { return top_n_count(etas[l], view.pixels()); });
	}

	PoolResult gnap_forward(const Tensor &features, const EtaVector &fixed_etas)
	{
		const FeatureView view = view_features(features);
		check_eta_count(view, fixed_etas);
		return pool_with_counts(view, fixed_etas.values(), false, [&](std::size_t l) { return top_n_count(fixed_etas[l], view.pixels()); });
	}

	PoolResult gap_forward(const Tensor &features)
	{
		const FeatureView view = view_features(features);
		return pool_with_counts(view, { }, false, [&](std::size_t) { return view.pixels(); });
	}

	PoolResult gmp_forward(const Tensor &features)
	{
		const FeatureView view = view_features(features);
		return pool_with_counts(view, { }, false, [](std::size_t) { return std::size_t { 1 }; });
	}

	PoolResult pool_forward(PoolingMode mode, const Tensor &features, const EtaVector &etas)
	{
		switch (mode)
		{
			case PoolingMode::Gap:
				return gap_forward(features);
			case PoolingMode::Gmp:
				return gmp_forward(features);
			case PoolingMode::Gnap:
				return gnap_forward(features, etas);
			case PoolingMode::Lena:
				return lena_forward(features, etas);
		}
		throw InvalidArgument("unknown pooling mode");
	}

	Tensor lena_backward_features(const PoolResult &result, std::span<const double> grad_pooled, std::span<const std::size_t> shape)
	{
		const std::vector<std::size_t> dims(shape.begin(), shape.end());
		Tensor grad(dims);
		const FeatureView view = view_features(grad);
		if (view.channels != result.channels || view.height != result.height || view.width != result.width
				|| result.support.size() != result.channels || result.n_used.size() != result.channels)
			throw ShapeError("pool result for (" + std::to_string(result.channels) + "," + std::to_string(result.height) + ","
					+ std::to_string(result.width) + ") does not match gradient shape " + shape_string(shape));
		if (grad_pooled.size() != result.channels)
			throw ShapeError("grad_pooled has " + std::to_string(grad_pooled.size()) + " entries for " + std::to_string(result.channels)
					+ " channels");
		std::span<double> out = grad.data();
		const std::size_t pixels = view.pixels();
		for (std::size_t l = 0; l < result.channels; l++)
		{
			if (result.support[l].size() != result.n_used[l] || result.n_used[l] == 0)
				throw ShapeError("pool result for channel " + std::to_string(l) + " is inconsistent");
			const double share = grad_pooled[l] / static_cast<double>(result.n_used[l]);
			for (std::uint32_t index : result.support[l])
			{
				if (index >= pixels)
					throw ShapeError("support index " + std::to_string(index) + " out of range for " + std::to_string(pixels) + " pixels");
				out[l * pixels + index] = share;
			}
		}
		return grad;
	}

	double lena_eta_derivative(std::span<const double> feature, double eta)
	{
		const std::size_t count = top_n_count(eta, feature.size());
		require_finite(feature);
		std::vector<double> scratch;
		const Selection sel = select_top(feature, count, scratch);
		return eta_slope(feature, sel, eta);
	}

	std::vector<double> lena_eta_grad(const Tensor &features, const EtaVector &etas, std::span<const double> grad_pooled)
	{
		const FeatureView view = view_features(features);
		check_eta_count(view, etas);
		if (grad_pooled.size() != view.channels)
			throw ShapeError("grad_pooled has " + std::to_string(grad_pooled.size()) + " entries for " + std::to_string(view.channels)
					+ " channels");
		std::vector<double> grad(view.channels);
		for (std::size_t l = 0; l < view.channels; l++)
			grad[l] = grad_pooled[l] * lena_eta_derivative(view.channel(l), etas[l]);
		return grad;
	}

	std::vector<double> lena_eta_grad(const PoolResult &result, std::span<const double> grad_pooled)
	{
		if (result.eta_slope.size() != result.channels)
			throw ShapeError("pool result carries no eta slopes (not produced by lena_forward)");
		if (grad_pooled.size() != result.channels)
			throw ShapeError("grad_pooled has " + std::to_string(grad_pooled.size()) + " entries for " + std::to_string(result.channels)
					+ " channels");
		std::vector<double> grad(result.channels);
		for (std::size_t l = 0; l < result.channels; l++)
			grad[l] = grad_pooled[l] * result.eta_slope[l];
		return grad;
	}
}
