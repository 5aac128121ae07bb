#include <lena/error.hpp>
#include <lena/tensor.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

namespace
{
	std::size_t checked_volume(const std::vector<std::size_t> &shape)
	{
		if (shape.empty() || shape.size() > lena::Tensor::max_rank)
			throw lena::ShapeError("tensor rank must be between 1 and 4, got " + std::to_string(shape.size()));
		std::size_t volume = 1;
		for (std::size_t extent : shape)
		{
			if (extent == 0)
				throw lena::ShapeError("tensor extents must be positive, got " + lena::shape_string(shape));
			volume *= extent;
		}
		return volume;
	}
}

namespace lena
{
	Tensor::Tensor(std::vector<std::size_t> shape, double fill) :
			m_shape(std::move(shape))
	{
		m_data.assign(checked_volume(m_shape), fill);
	}
	Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data) :
			m_shape(std::move(shape)),
			m_data(std::move(data))
	{
		const std::size_t volume = checked_volume(m_shape);
		if (volume != m_data.size())
			throw ShapeError("tensor " + lena::shape_string(m_shape) + " needs " + std::to_string(volume) + " values, got "
					+ std::to_string(m_data.size()));
	}

	std::size_t Tensor::dim(std::size_t axis) const
	{
		if (axis >= m_shape.size())
			throw ShapeError("axis " + std::to_string(axis) + " out of range for tensor " + shape_string());
		return m_shape[axis];
	}

	double& Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w)
	{
		return m_data[((n * m_shape[1] + c) * m_shape[2] + h) * m_shape[3] + w];
	}
	double Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const
	{
		return m_data[((n * m_shape[1] + c) * m_shape[2] + h) * m_shape[3] + w];
	}

	std::span<double> Tensor::plane(std::size_t n, std::size_t c)
	{
		const std::size_t hw = m_shape[2] * m_shape[3];
		return std::span<double>(m_data).subspan((n * m_shape[1] + c) * hw, hw);
	}
	std::span<const double> Tensor::plane(std::size_t n, std::size_t c) const
	{
		const std::size_t hw = m_shape[2] * m_shape[3];
		return std::span<const double>(m_data).subspan((n * m_shape[1] + c) * hw, hw);
	}

	void Tensor::fill(double value) noexcept
	{
		std::fill(m_data.begin(), m_data.end(), value);
	}
	bool Tensor::all_finite() const noexcept
	{
		return std::all_of(m_data.begin(), m_data.end(), [](double x) { return std::isfinite(x); });
	}
	std::string Tensor::shape_string() const
	{
		return lena::shape_string(m_shape);
	}

	std::string shape_string(std::span<const std::size_t> shape)
	{
		std::ostringstream out;
		out << '(';
		for (std::size_t i = 0; i < shape.size(); i++)
			out << (i ? "x" : "") << shape[i];
		out << ')';
		return out.str();
	}

	bool bitwise_equal(std::span<const double> a, std::span<const double> b) noexcept
	{
		if (a.size() != b.size())
			return false;
		for (std::size_t i = 0; i < a.size(); i++)
			if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i]))
				return false;
		return true;
	}
	bool bitwise_equal(const Tensor &a, const Tensor &b) noexcept
	{
		return a.shape() == b.shape() && bitwise_equal(a.data(), b.data());
	}
}
