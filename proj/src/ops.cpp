#include <lena/error.hpp>
#include <lena/kernels.hpp>
#include <lena/ops.hpp>

#include <algorithm>
#include <cmath>

namespace lena
{
	namespace
	{
		struct ConvGeometry
		{
				std::size_t batch, channels, in_h, in_w;
				std::size_t kernel_h, kernel_w, stride, padding;
				std::size_t out_c, out_h, out_w;

				std::size_t patch() const noexcept { return channels * kernel_h * kernel_w; }
				std::size_t pixels() const noexcept { return out_h * out_w; }
		};

		ConvGeometry conv_geometry(const Tensor &input, const ConvParams &params)
		{
			params.validate();
			if (input.rank() != 4)
				throw ShapeError("conv2d expects an (N,C,H,W) input, got " + input.shape_string());
			if (input.dim(1) != params.in_channels())
				throw ShapeError("conv2d input " + input.shape_string() + " has " + std::to_string(input.dim(1))
						+ " channels but weights " + params.weights.shape_string() + " expect "
						+ std::to_string(params.in_channels()));
			ConvGeometry g { };
			g.batch = input.dim(0);
			g.channels = input.dim(1);
			g.in_h = input.dim(2);
			g.in_w = input.dim(3);
			g.kernel_h = params.kernel_h();
			g.kernel_w = params.kernel_w();
			g.stride = params.stride;
			g.padding = params.padding;
			g.out_c = params.out_channels();
			g.out_h = conv_output_extent(g.in_h, g.kernel_h, g.stride, g.padding);
			g.out_w = conv_output_extent(g.in_w, g.kernel_w, g.stride, g.padding);
			return g;
		}

		// column matrix is (patch x pixels), row-major
		void im2col(std::span<const double> image, const ConvGeometry &g, std::vector<double> &col)
		{
			const std::size_t pixels = g.pixels();
			std::size_t row = 0;
			for (std::size_t c = 0; c < g.channels; c++)
				for (std::size_t ky = 0; ky < g.kernel_h; ky++)
					for (std::size_t kx = 0; kx < g.kernel_w; kx++, row++)
					{
						double *dst = col.data() + row * pixels;
						for (std::size_t oy = 0; oy < g.out_h; oy++)
						{
							const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.padding);
							for (std::size_t ox = 0; ox < g.out_w; ox++)
							{
								const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx)
										- static_cast<std::ptrdiff_t>(g.padding);
								const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.in_h)
										&& ix < static_cast<std::ptrdiff_t>(g.in_w);
								dst[oy * g.out_w + ox] = inside ? image[(c * g.in_h + iy) * g.in_w + ix] : 0.0;
							}
						}
					}
		}

		void col2im_add(const std::vector<double> &col, const ConvGeometry &g, std::span<double> image)
		{
			const std::size_t pixels = g.pixels();
			std::size_t row = 0;
			for (std::size_t c = 0; c < g.channels; c++)
				for (std::size_t ky = 0; ky < g.kernel_h; ky++)
					for (std::size_t kx = 0; kx < g.kernel_w; kx++, row++)
					{
						const double *src = col.data() + row * pixels;
						for (std::size_t oy = 0; oy < g.out_h; oy++)
						{
							const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.padding);
							if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h))
								continue;
							for (std::size_t ox = 0; ox < g.out_w; ox++)
							{
								const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx)
										- static_cast<std::ptrdiff_t>(g.padding);
								if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_w))
									image[(c * g.in_h + iy) * g.in_w + ix] += src[oy * g.out_w + ox];
							}
						}
					}
		}
	}

	void ConvParams::validate() const
	{
		if (weights.rank() != 4)
			throw ShapeError("conv weights must be (outC,inC,kH,kW), got " + weights.shape_string());
		if (bias.size() != weights.dim(0))
			throw ShapeError("conv bias has " + std::to_string(bias.size()) + " entries for " + std::to_string(weights.dim(0))
					+ " output channels");
		if (stride == 0)
			throw ShapeError("conv stride must be positive");
	}

	std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding)
	{
		if (stride == 0)
			throw ShapeError("conv stride must be positive");
		if (in + 2 * padding < kernel)
			throw ShapeError("conv kernel " + std::to_string(kernel) + " larger than padded input " + std::to_string(in + 2 * padding));
		return (in + 2 * padding - kernel) / stride + 1;
	}

	Tensor conv2d_forward(const Tensor &input, const ConvParams &params)
	{
		const ConvGeometry g = conv_geometry(input, params);
		Tensor output( { g.batch, g.out_c, g.out_h, g.out_w });
		std::vector<double> col(g.patch() * g.pixels());
		const std::span<const double> weights = params.weights.data();
		for (std::size_t n = 0; n < g.batch; n++)
		{
			im2col(input.data().subspan(n * g.channels * g.in_h * g.in_w, g.channels * g.in_h * g.in_w), g, col);
			for (std::size_t oc = 0; oc < g.out_c; oc++)
			{
				std::span<double> out = output.plane(n, oc);
				std::fill(out.begin(), out.end(), params.bias[oc]);
				for (std::size_t k = 0; k < g.patch(); k++)
					kernels::axpy(weights[oc * g.patch() + k], std::span<const double>(col).subspan(k * g.pixels(), g.pixels()), out);
			}
		}
		return output;
	}

	ConvGrads conv2d_backward(const Tensor &input, const ConvParams &params, const Tensor &grad_out, bool need_input_grad)
	{
		const ConvGeometry g = conv_geometry(input, params);
		if (grad_out.shape() != std::vector<std::size_t> { g.batch, g.out_c, g.out_h, g.out_w })
			throw ShapeError("conv2d_backward grad " + grad_out.shape_string() + " does not match output "
					+ shape_string(std::vector<std::size_t> { g.batch, g.out_c, g.out_h, g.out_w }));

		ConvGrads grads { need_input_grad ? Tensor::zeros_like(input) : Tensor(), Tensor::zeros_like(params.weights), std::vector<double>(
				g.out_c, 0.0) };
		std::vector<double> col(g.patch() * g.pixels());
		std::vector<double> grad_col(need_input_grad ? col.size() : 0);
		const std::span<const double> weights = params.weights.data();
		std::span<double> grad_weights = grads.grad_weights.data();
		const std::size_t image_volume = g.channels * g.in_h * g.in_w;
		for (std::size_t n = 0; n < g.batch; n++)
		{
			im2col(input.data().subspan(n * image_volume, image_volume), g, col);
			std::fill(grad_col.begin(), grad_col.end(), 0.0);
			for (std::size_t oc = 0; oc < g.out_c; oc++)
			{
				const std::span<const double> go = grad_out.plane(n, oc);
				grads.grad_bias[oc] += kernels::sum(go);
				for (std::size_t k = 0; k < g.patch(); k++)
				{
					const std::span<const double> col_row = std::span<const double>(col).subspan(k * g.pixels(), g.pixels());
					grad_weights[oc * g.patch() + k] += kernels::dot(go, col_row);
					if (need_input_grad)
						kernels::axpy(weights[oc * g.patch() + k], go, std::span<double>(grad_col).subspan(k * g.pixels(), g.pixels()));
				}
			}
			if (need_input_grad)
				col2im_add(grad_col, g, grads.grad_input.data().subspan(n * image_volume, image_volume));
		}
		return grads;
	}

	Tensor relu_forward(const Tensor &input)
	{
		Tensor output = input;
		for (double &x : output.data())
			x = x > 0.0 ? x : 0.0;
		return output;
	}

	Tensor relu_backward(const Tensor &input, const Tensor &grad_out)
	{
		if (!input.same_shape(grad_out))
			throw ShapeError("relu_backward shapes differ: " + input.shape_string() + " vs " + grad_out.shape_string());
		Tensor grad = grad_out;
		for (std::size_t i = 0; i < grad.size(); i++)
			if (!(input[i] > 0.0))
				grad[i] = 0.0;
		return grad;
	}

	std::span<const double> InnerProductParams::row(std::size_t k) const
	{
		if (k >= outputs())
			throw InvalidArgument("class index " + std::to_string(k) + " out of range for " + std::to_string(outputs()) + " outputs");
		return weights.data().subspan(k * inputs(), inputs());
	}

	void InnerProductParams::validate() const
	{
		if (weights.rank() != 2)
			throw ShapeError("inner product weights must be (K,L), got " + weights.shape_string());
		if (bias.size() != weights.dim(0))
			throw ShapeError("inner product bias has " + std::to_string(bias.size()) + " entries for " + std::to_string(weights.dim(0))
					+ " outputs");
	}

	std::vector<double> inner_product_forward(std::span<const double> pooled, const InnerProductParams &params)
	{
		params.validate();
		if (pooled.size() != params.inputs())
			throw ShapeError("inner product expects " + std::to_string(params.inputs()) + " inputs, got " + std::to_string(pooled.size()));
		std::vector<double> out(params.outputs());
		for (std::size_t k = 0; k < out.size(); k++)
			out[k] = kernels::dot(params.row(k), pooled) + params.bias[k];
		return out;
	}

	InnerProductGrads inner_product_backward(std::span<const double> pooled, const InnerProductParams &params,
			std::span<const double> grad_out)
	{
		params.validate();
		if (pooled.size() != params.inputs())
			throw ShapeError("inner product expects " + std::to_string(params.inputs()) + " inputs, got " + std::to_string(pooled.size()));
		if (grad_out.size() != params.outputs())
			throw ShapeError("inner product grad has " + std::to_string(grad_out.size()) + " entries for " + std::to_string(params.outputs())
					+ " outputs");
		InnerProductGrads grads { std::vector<double>(params.inputs(), 0.0), Tensor::zeros_like(params.weights), std::vector<double>(
				grad_out.begin(), grad_out.end()) };
		std::span<double> gw = grads.grad_weights.data();
		for (std::size_t k = 0; k < params.outputs(); k++)
		{
			kernels::axpy(grad_out[k], params.row(k), grads.grad_input);
			kernels::axpy(grad_out[k], pooled, gw.subspan(k * params.inputs(), params.inputs()));
		}
		return grads;
	}

	void bilinear_resize_plane(std::span<const double> src, std::size_t src_h, std::size_t src_w, std::span<double> dst,
			std::size_t dst_h, std::size_t dst_w)
	{
		if (src_h == 0 || src_w == 0 || dst_h == 0 || dst_w == 0)
			throw ShapeError("bilinear_resize extents must be positive");
		if (src.size() != src_h * src_w || dst.size() != dst_h * dst_w)
			throw ShapeError("bilinear_resize buffer sizes do not match extents");
		if (src_h == dst_h && src_w == dst_w)
		{
			std::copy(src.begin(), src.end(), dst.begin());
			return;
		}
		auto source_coord = [](std::size_t i, std::size_t from, std::size_t to) {
			if (from == 1 || to == 1)
				return 0.0;
			return static_cast<double>(i * (from - 1)) / static_cast<double>(to - 1);
		};
		for (std::size_t y = 0; y < dst_h; y++)
		{
			const double sy = source_coord(y, src_h, dst_h);
			const std::size_t y0 = std::min(static_cast<std::size_t>(sy), src_h - 1);
			const std::size_t y1 = std::min(y0 + 1, src_h - 1);
			const double ty = sy - static_cast<double>(y0);
			for (std::size_t x = 0; x < dst_w; x++)
			{
				const double sx = source_coord(x, src_w, dst_w);
				const std::size_t x0 = std::min(static_cast<std::size_t>(sx), src_w - 1);
				const std::size_t x1 = std::min(x0 + 1, src_w - 1);
				const double tx = sx - static_cast<double>(x0);
				// a + t*(b - a) keeps constant regions exact
				const double a = src[y0 * src_w + x0], b = src[y0 * src_w + x1];
				const double c = src[y1 * src_w + x0], d = src[y1 * src_w + x1];
				const double top = a + tx * (b - a);
				const double bottom = c + tx * (d - c);
				dst[y * dst_w + x] = top + ty * (bottom - top);
			}
		}
	}

	Tensor bilinear_resize(const Tensor &map, std::size_t target_h, std::size_t target_w)
	{
		if (target_h == 0 || target_w == 0)
			throw ShapeError("bilinear_resize target extents must be positive");
		if (map.rank() < 2)
			throw ShapeError("bilinear_resize needs at least two axes, got " + map.shape_string());
		std::vector<std::size_t> shape = map.shape();
		const std::size_t src_h = shape[shape.size() - 2];
		const std::size_t src_w = shape[shape.size() - 1];
		shape[shape.size() - 2] = target_h;
		shape[shape.size() - 1] = target_w;
		Tensor out(shape);
		const std::size_t planes = map.size() / (src_h * src_w);
		for (std::size_t p = 0; p < planes; p++)
			bilinear_resize_plane(map.data().subspan(p * src_h * src_w, src_h * src_w), src_h, src_w,
					out.data().subspan(p * target_h * target_w, target_h * target_w), target_h, target_w);
		return out;
	}
}
