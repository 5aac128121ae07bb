#include <lena/error.hpp>
#include <lena/image.hpp>

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace lena
{
	namespace
	{
		std::string lower_extension(const std::filesystem::path &path)
		{
			std::string ext = path.extension().string();
			std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
			return ext;
		}

		std::vector<std::uint8_t> read_file(const std::filesystem::path &path)
		{
			std::ifstream in(path, std::ios::binary);
			if (!in)
				throw IoError("cannot open " + path.string());
			return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
		}

		void write_file(const std::filesystem::path &path, const std::vector<std::uint8_t> &bytes)
		{
			std::ofstream out(path, std::ios::binary | std::ios::trunc);
			if (!out)
				throw IoError("cannot write " + path.string());
			out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
			if (!out)
				throw IoError("short write to " + path.string());
		}

		struct Pnm
		{
				char kind = 0; // '5' or '6'
				std::size_t width = 0, height = 0;
				std::vector<std::uint8_t> pixels;
		};

		Pnm parse_pnm(const std::vector<std::uint8_t> &bytes, const std::string &name)
		{
			std::size_t pos = 0;
			auto fail = [&](const std::string &what) {
				throw ParseError(name + ": byte " + std::to_string(pos) + ": " + what);
			};
			auto skip_space = [&] {
				while (pos < bytes.size())
				{
					if (bytes[pos] == '#')
						while (pos < bytes.size() && bytes[pos] != '\n')
							pos++;
					else if (std::isspace(bytes[pos]))
						pos++;
					else
						break;
				}
			};
			auto read_number = [&] {
				skip_space();
				if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
					fail("expected an unsigned integer in the header");
				std::size_t value = 0;
				while (pos < bytes.size() && std::isdigit(bytes[pos]))
				{
					value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
					if (value > (1u << 24))
						fail("header value too large");
					pos++;
				}
				return value;
			};
			if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
				fail("not a binary PGM (P5) or PPM (P6) file");
			Pnm pnm;
			pnm.kind = static_cast<char>(bytes[1]);
			pos = 2;
			pnm.width = read_number();
			pnm.height = read_number();
			const std::size_t maxval = read_number();
			if (pnm.width == 0 || pnm.height == 0)
				fail("zero image extent");
			if (maxval == 0 || maxval > 255)
				fail("only 8-bit maxval (1..255) is supported");
			if (pos >= bytes.size() || !std::isspace(bytes[pos]))
				fail("missing whitespace after header");
			pos++;
			const std::size_t channels = pnm.kind == '6' ? 3 : 1;
			const std::size_t expected = pnm.width * pnm.height * channels;
			if (bytes.size() - pos < expected)
				fail("truncated pixel data: need " + std::to_string(expected) + " bytes, have " + std::to_string(bytes.size() - pos));
			pnm.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + expected));
			if (maxval != 255)
				for (std::uint8_t &p : pnm.pixels)
					p = static_cast<std::uint8_t>(std::min<std::size_t>(255, (p * 255 + maxval / 2) / maxval));
			return pnm;
		}

		std::vector<std::uint8_t> encode_pnm(char kind, std::size_t width, std::size_t height, const std::vector<std::uint8_t> &pixels)
		{
			const std::string header = std::string("P") + kind + "\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
			std::vector<std::uint8_t> bytes(header.begin(), header.end());
			bytes.insert(bytes.end(), pixels.begin(), pixels.end());
			return bytes;
		}

		std::vector<std::uint8_t> read_png(const std::filesystem::path &path, png_uint_32 format, std::size_t channels, std::size_t &width,
				std::size_t &height)
		{
			png_image image;
			std::memset(&image, 0, sizeof(image));
			image.version = PNG_IMAGE_VERSION;
			if (!png_image_begin_read_from_file(&image, path.string().c_str()))
				throw ParseError(path.string() + ": " + image.message);
			image.format = format;
			std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
			if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr))
			{
				const std::string message = image.message;
				png_image_free(&image);
				throw ParseError(path.string() + ": " + message);
			}
			width = image.width;
			height = image.height;
			if (pixels.size() != width * height * channels)
				throw ParseError(path.string() + ": unexpected decoded size");
			return pixels;
		}

		void write_png(const std::filesystem::path &path, png_uint_32 format, std::size_t width, std::size_t height,
				const std::vector<std::uint8_t> &pixels)
		{
			png_image image;
			std::memset(&image, 0, sizeof(image));
			image.version = PNG_IMAGE_VERSION;
			image.width = static_cast<png_uint_32>(width);
			image.height = static_cast<png_uint_32>(height);
			image.format = format;
			if (!png_image_write_to_file(&image, path.string().c_str(), 0, pixels.data(), 0, nullptr))
				throw IoError(path.string() + ": " + image.message);
		}
	}

	std::size_t BinaryMask::count() const noexcept
	{
		return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), std::uint8_t { 1 }));
	}

	RgbImage load_image(const std::filesystem::path &path)
	{
		const std::string ext = lower_extension(path);
		RgbImage image;
		if (ext == ".png")
		{
			image.pixels = read_png(path, PNG_FORMAT_RGB, 3, image.width, image.height);
			return image;
		}
		if (ext == ".ppm" || ext == ".pnm")
		{
			Pnm pnm = parse_pnm(read_file(path), path.string());
			if (pnm.kind != '6')
				throw ParseError(path.string() + ": byte 0: expected an RGB (P6) image");
			image.width = pnm.width;
			image.height = pnm.height;
			image.pixels = std::move(pnm.pixels);
			return image;
		}
		throw IoError("unsupported image format '" + ext + "' for " + path.string());
	}

	void save_image(const std::filesystem::path &path, const RgbImage &image)
	{
		if (image.pixels.size() != image.width * image.height * 3)
			throw ShapeError("RGB image buffer does not match its extents");
		const std::string ext = lower_extension(path);
		if (ext == ".png")
			write_png(path, PNG_FORMAT_RGB, image.width, image.height, image.pixels);
		else if (ext == ".ppm" || ext == ".pnm")
			write_file(path, encode_ppm(image));
		else
			throw IoError("unsupported image format '" + ext + "' for " + path.string());
	}

	std::vector<std::uint8_t> encode_ppm(const RgbImage &image)
	{
		return encode_pnm('6', image.width, image.height, image.pixels);
	}

	GrayImage load_gray(const std::filesystem::path &path)
	{
		const std::string ext = lower_extension(path);
		GrayImage image;
		if (ext == ".png")
		{
			image.pixels = read_png(path, PNG_FORMAT_GRAY, 1, image.width, image.height);
			return image;
		}
		if (ext == ".pgm" || ext == ".pnm")
		{
			Pnm pnm = parse_pnm(read_file(path), path.string());
			if (pnm.kind != '5')
				throw ParseError(path.string() + ": byte 0: expected a grayscale (P5) image");
			image.width = pnm.width;
			image.height = pnm.height;
			image.pixels = std::move(pnm.pixels);
			return image;
		}
		throw IoError("unsupported grayscale format '" + ext + "' for " + path.string());
	}

	void save_gray(const std::filesystem::path &path, const GrayImage &image)
	{
		if (image.pixels.size() != image.width * image.height)
			throw ShapeError("gray image buffer does not match its extents");
		const std::string ext = lower_extension(path);
		if (ext == ".png")
			write_png(path, PNG_FORMAT_GRAY, image.width, image.height, image.pixels);
		else if (ext == ".pgm" || ext == ".pnm")
			write_file(path, encode_pnm('5', image.width, image.height, image.pixels));
		else
			throw IoError("unsupported grayscale format '" + ext + "' for " + path.string());
	}

	BinaryMask load_mask(const std::filesystem::path &path)
	{
		const GrayImage gray = load_gray(path);
		BinaryMask mask { gray.width, gray.height, std::vector<std::uint8_t>(gray.pixels.size()) };
		for (std::size_t i = 0; i < gray.pixels.size(); i++)
			mask.pixels[i] = gray.pixels[i] > 127 ? 1 : 0;
		return mask;
	}

	void save_mask(const std::filesystem::path &path, const BinaryMask &mask)
	{
		GrayImage gray { mask.width, mask.height, std::vector<std::uint8_t>(mask.pixels.size()) };
		for (std::size_t i = 0; i < mask.pixels.size(); i++)
			gray.pixels[i] = mask.pixels[i] ? 255 : 0;
		save_gray(path, gray);
	}

	Tensor image_to_tensor(const RgbImage &image)
	{
		Tensor t( { 1, 3, image.height, image.width });
		for (std::size_t y = 0; y < image.height; y++)
			for (std::size_t x = 0; x < image.width; x++)
				for (std::size_t c = 0; c < 3; c++)
					t.at(0, c, y, x) = image.at(x, y)[c] / 255.0;
		return t;
	}

	RgbImage tensor_to_image(const Tensor &tensor)
	{
		if (tensor.rank() != 4 || tensor.dim(0) != 1 || tensor.dim(1) != 3)
			throw ShapeError("expected a (1,3,H,W) tensor, got " + tensor.shape_string());
		RgbImage image(tensor.dim(3), tensor.dim(2));
		for (std::size_t y = 0; y < image.height; y++)
			for (std::size_t x = 0; x < image.width; x++)
				for (std::size_t c = 0; c < 3; c++)
					image.at(x, y)[c] = static_cast<std::uint8_t>(std::lround(std::clamp(tensor.at(0, c, y, x), 0.0, 1.0) * 255.0));
		return image;
	}

	Tensor gray_to_tensor(const GrayImage &image)
	{
		Tensor t( { 1, 1, image.height, image.width });
		for (std::size_t i = 0; i < image.pixels.size(); i++)
			t[i] = image.pixels[i] / 255.0;
		return t;
	}

	GrayImage plane_to_gray(std::span<const double> values, std::size_t width, std::size_t height)
	{
		if (values.size() != width * height)
			throw ShapeError("plane size does not match extents");
		GrayImage image { width, height, std::vector<std::uint8_t>(values.size()) };
		for (std::size_t i = 0; i < values.size(); i++)
			image.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(values[i], 0.0, 1.0) * 255.0));
		return image;
	}
}
