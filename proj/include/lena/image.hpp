#pragma once

#include <lena/tensor.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace lena
{
	/// 8-bit interleaved RGB.
	struct RgbImage
	{
			std::size_t width = 0;
			std::size_t height = 0;
			std::vector<std::uint8_t> pixels; // width * height * 3

			RgbImage() = default;
			RgbImage(std::size_t w, std::size_t h) :
					width(w),
					height(h),
					pixels(w * h * 3, 0)
			{
			}
			std::uint8_t* at(std::size_t x, std::size_t y) { return pixels.data() + (y * width + x) * 3; }
			const std::uint8_t* at(std::size_t x, std::size_t y) const { return pixels.data() + (y * width + x) * 3; }
			bool operator==(const RgbImage&) const = default;
	};

	struct GrayImage
	{
			std::size_t width = 0;
			std::size_t height = 0;
			std::vector<std::uint8_t> pixels;
	};

	/// Pixel-wise ground truth; 1 marks a positive pixel.
	struct BinaryMask
	{
			std::size_t width = 0;
			std::size_t height = 0;
			std::vector<std::uint8_t> pixels;

			std::size_t count() const noexcept;
			bool operator==(const BinaryMask&) const = default;
	};

	// Format is picked from the extension: .png, .ppm (P6), .pgm (P5).
	RgbImage load_image(const std::filesystem::path &path);
	void save_image(const std::filesystem::path &path, const RgbImage &image);
	GrayImage load_gray(const std::filesystem::path &path);
	void save_gray(const std::filesystem::path &path, const GrayImage &image);
	/// Pixels above 127 are positive.
	BinaryMask load_mask(const std::filesystem::path &path);
	void save_mask(const std::filesystem::path &path, const BinaryMask &mask);

	std::vector<std::uint8_t> encode_ppm(const RgbImage &image);

	/// (1, 3, H, W) tensor with values in [0, 1].
	Tensor image_to_tensor(const RgbImage &image);
	/// Rounds and clamps a (1, 3, H, W) tensor back to 8 bits.
	RgbImage tensor_to_image(const Tensor &tensor);
	/// (1, 1, H, W) tensor with values in [0, 1].
	Tensor gray_to_tensor(const GrayImage &image);
	GrayImage plane_to_gray(std::span<const double> values, std::size_t width, std::size_t height);
}
