#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lena
{
	/// Dense row-major array of doubles with up to four extents, laid out as
	/// (batch, channels, height, width) when the rank is four.
	class Tensor
	{
		public:
			static constexpr std::size_t max_rank = 4;

			Tensor() = default;
			explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
			Tensor(std::vector<std::size_t> shape, std::vector<double> data);

			const std::vector<std::size_t>& shape() const noexcept { return m_shape; }
			std::size_t rank() const noexcept { return m_shape.size(); }
			std::size_t dim(std::size_t axis) const;
			std::size_t size() const noexcept { return m_data.size(); }
			bool empty() const noexcept { return m_data.empty(); }

			std::span<double> data() noexcept { return m_data; }
			std::span<const double> data() const noexcept { return m_data; }
			const std::vector<double>& values() const noexcept { return m_data; }

			double& operator[](std::size_t i) noexcept { return m_data[i]; }
			double operator[](std::size_t i) const noexcept { return m_data[i]; }

			// rank-4 accessors
			double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
			double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;
			/// One H×W slice of a rank-4 tensor.
			std::span<double> plane(std::size_t n, std::size_t c);
			std::span<const double> plane(std::size_t n, std::size_t c) const;

			void fill(double value) noexcept;
			bool all_finite() const noexcept;
			bool same_shape(const Tensor &other) const noexcept { return m_shape == other.m_shape; }
			std::string shape_string() const;

			static Tensor zeros_like(const Tensor &other) { return Tensor(other.m_shape); }

		private:
			std::vector<std::size_t> m_shape;
			std::vector<double> m_data;
	};

	std::string shape_string(std::span<const std::size_t> shape);

	/// Bitwise equality of shape and every stored double.
	bool bitwise_equal(const Tensor &a, const Tensor &b) noexcept;
	bool bitwise_equal(std::span<const double> a, std::span<const double> b) noexcept;
}
