#include <lena/error.hpp>
#include <lena/viraliency.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace lena
{
	namespace
	{
		std::pair<std::size_t, std::size_t> map_extent(const Tensor &map)
		{
			if (map.rank() == 2)
				return { map.dim(0), map.dim(1) };
			if (map.rank() == 4 && map.dim(0) == 1 && map.dim(1) == 1)
				return { map.dim(2), map.dim(3) };
			throw ShapeError("expected an (H,W) map, got " + map.shape_string());
		}
	}

	EtaVector effective_etas(PoolingMode mode, std::size_t channels, const EtaVector &etas)
	{
		switch (mode)
		{
			case PoolingMode::Gap:
				return EtaVector::filled(channels, 1.0);
			case PoolingMode::Gmp:
				return EtaVector::filled(channels, 0.0);
			default:
				if (etas.size() != channels)
					throw ShapeError("eta vector has " + std::to_string(etas.size()) + " entries for " + std::to_string(channels) + " channels");
				return etas;
		}
	}

	ViraliencyMap activation_map(const Tensor &features, const InnerProductParams &classifier, std::size_t class_index,
			const EtaVector &etas, PoolingMode mode)
	{
		classifier.validate();
		const std::span<const double> weights = classifier.row(class_index);
		const std::size_t offset = features.rank() == 4 ? 1 : 0;
		if (features.rank() != 3 + offset || (offset && features.dim(0) != 1))
			throw ShapeError("activation_map expects (L,H,W) features, got " + features.shape_string());
		const std::size_t channels = features.dim(offset), height = features.dim(offset + 1), width = features.dim(offset + 2);
		if (weights.size() != channels)
			throw ShapeError("classifier has " + std::to_string(weights.size()) + " columns for " + std::to_string(channels) + " channels");

		ViraliencyMap map { Tensor( { height, width }), class_index, mode, effective_etas(mode, channels, etas) };
		const PoolResult pooled = pool_forward(mode, features, map.etas_used);
		const std::size_t pixels = height * width;
		std::span<double> out = map.values.data();
		for (std::size_t l = 0; l < channels; l++)
		{
			const std::span<const double> channel = features.data().subspan(l * pixels, pixels);
			for (std::uint32_t i : pooled.support[l])
				out[i] += weights[l] * channel[i];
		}
		return map;
	}

	Tensor normalize_map(const Tensor &map)
	{
		map_extent(map);
		if (!map.all_finite())
			throw NumericError("cannot normalize a map with non-finite values");
		const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
		const double min = *lo, range = *hi - *lo;
		Tensor out(map.shape());
		if (range > 0.0)
			for (std::size_t i = 0; i < map.size(); i++)
				out[i] = std::min(1.0, (map[i] - min) / range);
		return out;
	}
	Tensor normalize_map(const ViraliencyMap &map)
	{
		return normalize_map(map.values);
	}

	std::array<std::uint8_t, 3> heat_color(double value01) noexcept
	{
		const double v = std::isfinite(value01) ? std::clamp(value01, 0.0, 1.0) : 0.0;
		return heat_colormap[static_cast<std::size_t>(std::min(255.0, std::floor(v * 255.0 + 0.5)))];
	}

	RgbImage render_heatmap(const Tensor &map01, const RgbImage *background, std::size_t target_h, std::size_t target_w)
	{
		const auto [h, w] = map_extent(map01);
		if (background && (background->width != target_w || background->height != target_h))
			throw ShapeError("overlay image is " + std::to_string(background->width) + "x" + std::to_string(background->height)
					+ " but the requested target is " + std::to_string(target_w) + "x" + std::to_string(target_h));
		Tensor resized( { target_h, target_w });
		bilinear_resize_plane(map01.data(), h, w, resized.data(), target_h, target_w);
		RgbImage out(target_w, target_h);
		for (std::size_t y = 0; y < target_h; y++)
			for (std::size_t x = 0; x < target_w; x++)
			{
				const std::array<std::uint8_t, 3> color = heat_color(resized[y * target_w + x]);
				std::uint8_t *px = out.at(x, y);
				for (std::size_t c = 0; c < 3; c++)
					px[c] = background ? static_cast<std::uint8_t>((color[c] + background->at(x, y)[c] + 1) / 2) : color[c];
			}
		return out;
	}

	LocalizationScore localization_pr(const Tensor &map01, const BinaryMask &truth, double threshold)
	{
		const auto [h, w] = map_extent(map01);
		if (truth.width == 0 || truth.height == 0 || truth.pixels.size() != truth.width * truth.height)
			throw ShapeError("truth mask buffer does not match its extents");
		Tensor resized( { truth.height, truth.width });
		bilinear_resize_plane(map01.data(), h, w, resized.data(), truth.height, truth.width);

		LocalizationScore score;
		score.threshold = threshold;
		score.pixels_evaluated = resized.size();
		for (std::size_t i = 0; i < resized.size(); i++)
		{
			const bool predicted = resized[i] >= threshold;
			const bool actual = truth.pixels[i] != 0;
			score.true_positives += predicted && actual;
			score.false_positives += predicted && !actual;
			score.false_negatives += !predicted && actual;
		}
		return pool_scores(std::span<const LocalizationScore>(&score, 1));
	}

	LocalizationScore pool_scores(std::span<const LocalizationScore> scores)
	{
		LocalizationScore total;
		if (!scores.empty())
			total.threshold = scores.front().threshold;
		for (const LocalizationScore &s : scores)
		{
			total.pixels_evaluated += s.pixels_evaluated;
			total.true_positives += s.true_positives;
			total.false_positives += s.false_positives;
			total.false_negatives += s.false_negatives;
		}
		const std::size_t predicted = total.true_positives + total.false_positives;
		const std::size_t actual = total.true_positives + total.false_negatives;
		if (predicted > 0)
			total.precision = static_cast<double>(total.true_positives) / static_cast<double>(predicted);
		if (actual > 0)
			total.recall = static_cast<double>(total.true_positives) / static_cast<double>(actual);
		return total;
	}

	void write_map_csv(const std::filesystem::path &path, const Tensor &map)
	{
		const auto [h, w] = map_extent(map);
		std::ofstream out(path, std::ios::trunc);
		if (!out)
			throw IoError("cannot write " + path.string());
		out << "row,col,value\n" << std::setprecision(17);
		for (std::size_t y = 0; y < h; y++)
			for (std::size_t x = 0; x < w; x++)
				out << y << ',' << x << ',' << map[y * w + x] << '\n';
	}
}
