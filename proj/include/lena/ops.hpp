#pragma once

#include <lena/tensor.hpp>

#include <cstddef>
#include <span>
#include <vector>

namespace lena
{
	struct ConvParams
	{
			Tensor weights; // (out_channels, in_channels, kernel_h, kernel_w)
			std::vector<double> bias; // out_channels
			std::size_t stride = 1;
			std::size_t padding = 0;

			std::size_t out_channels() const { return weights.dim(0); }
			std::size_t in_channels() const { return weights.dim(1); }
			std::size_t kernel_h() const { return weights.dim(2); }
			std::size_t kernel_w() const { return weights.dim(3); }

			/// Throws ShapeError unless weights are rank 4 and bias matches.
			void validate() const;
	};

	struct ConvGrads
	{
			Tensor grad_input;
			Tensor grad_weights;
			std::vector<double> grad_bias;
	};

	/// floor((in + 2*padding - kernel) / stride) + 1, or ShapeError if that is below one.
	std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

	/// Cross-correlation with bias over an (N, C, H, W) input.
	Tensor conv2d_forward(const Tensor &input, const ConvParams &params);
	/// grad_input is left empty when need_input_grad is false.
	ConvGrads conv2d_backward(const Tensor &input, const ConvParams &params, const Tensor &grad_out, bool need_input_grad = true);

	Tensor relu_forward(const Tensor &input);
	/// Passes grad_out where input > 0; zero elsewhere, including input == 0.
	Tensor relu_backward(const Tensor &input, const Tensor &grad_out);

	struct InnerProductParams
	{
			Tensor weights; // (outputs, channels)
			std::vector<double> bias; // outputs

			std::size_t outputs() const { return weights.dim(0); }
			std::size_t inputs() const { return weights.dim(1); }
			std::span<const double> row(std::size_t k) const;
			void validate() const;
	};

	struct InnerProductGrads
	{
			std::vector<double> grad_input;
			Tensor grad_weights;
			std::vector<double> grad_bias;
	};

	std::vector<double> inner_product_forward(std::span<const double> pooled, const InnerProductParams &params);
	InnerProductGrads inner_product_backward(std::span<const double> pooled, const InnerProductParams &params,
			std::span<const double> grad_out);

	/*
	 * Align-corners bilinear interpolation: output pixel i samples the source at
	 * i * (src - 1) / (dst - 1), so corner pixels map onto corner pixels.
	 * Works on the last two axes of a tensor of rank 2 to 4.
	 */
	Tensor bilinear_resize(const Tensor &map, std::size_t target_h, std::size_t target_w);
	void bilinear_resize_plane(std::span<const double> src, std::size_t src_h, std::size_t src_w, std::span<double> dst,
			std::size_t dst_h, std::size_t dst_w);
}
