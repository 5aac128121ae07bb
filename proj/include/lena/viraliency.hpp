#pragma once

#include <lena/image.hpp>
#include <lena/ops.hpp>
#include <lena/pooling.hpp>
#include <lena/tensor.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>

namespace lena
{
	/// Class activation map a_k(h, w) of one class, stored as an (H, W) tensor.
	struct ViraliencyMap
	{
			Tensor values;
			std::size_t class_index = 0;
			PoolingMode mode = PoolingMode::Lena;
			EtaVector etas_used;
	};

	/// The eta vector a pooling mode actually applies: ones for GAP, zeros for GMP.
	EtaVector effective_etas(PoolingMode mode, std::size_t channels, const EtaVector &etas);

	/*
	 * a_k(h, w) = sum_l w_kl * f_l(h, w) over the pixels each channel pooled;
	 * non-support pixels contribute nothing and the bias is left out.
	 */
	ViraliencyMap activation_map(const Tensor &features, const InnerProductParams &classifier, std::size_t class_index,
			const EtaVector &etas, PoolingMode mode);

	/// Min-max rescale to [0, 1]; a constant map becomes all zeros.
	Tensor normalize_map(const Tensor &map);
	Tensor normalize_map(const ViraliencyMap &map);

	extern const std::array<std::array<std::uint8_t, 3>, 256> heat_colormap;
	std::array<std::uint8_t, 3> heat_color(double value01) noexcept;

	/// Resizes map01 to the target size, colors it and, when given, blends it 50/50 over the image.
	RgbImage render_heatmap(const Tensor &map01, const RgbImage *background, std::size_t target_h, std::size_t target_w);

	struct LocalizationScore
	{
			std::optional<double> precision; // empty: no positive predictions
			std::optional<double> recall; // empty: no positive truth pixels
			double threshold = 0.5;
			std::size_t pixels_evaluated = 0;
			std::size_t true_positives = 0;
			std::size_t false_positives = 0;
			std::size_t false_negatives = 0;
	};

	/// Pixel-wise precision/recall of (map01 >= threshold) against the mask, at mask resolution.
	LocalizationScore localization_pr(const Tensor &map01, const BinaryMask &truth, double threshold);
	/// Pools the confusion counts of several images into one score.
	LocalizationScore pool_scores(std::span<const LocalizationScore> scores);

	void write_map_csv(const std::filesystem::path &path, const Tensor &map);
}
