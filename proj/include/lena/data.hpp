#pragma once

#include <lena/image.hpp>
#include <lena/tensor.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lena
{
	struct EngagementRecord
	{
			std::string id;
			double likes = 0.0; // may be negative (upvotes minus downvotes)
			double resubmissions = 0.0; // must be positive to be scored
			bool operator==(const EngagementRecord&) const = default;
	};

	struct ScoredImage
	{
			std::string id;
			double virality = 0.0;
	};

	struct EngagementMeans
	{
			double likes = 0.0;
			double resubmissions = 0.0;
	};

	/// (L_i / mean_L) * ln(M_i / mean_M); throws InvalidArgument for a non-positive log argument or zero mean_L.
	double virality_score(const EngagementRecord &record, double mean_likes, double mean_resubmissions);
	EngagementMeans engagement_means(const std::vector<EngagementRecord> &records);
	std::vector<ScoredImage> score_records(const std::vector<EngagementRecord> &records);

	enum class PairLabel
	{
		AMoreViral,
		BMoreViral
	};

	struct LabeledPair
	{
			std::string id_a;
			std::string id_b;
			PairLabel label = PairLabel::AMoreViral;
			bool operator==(const LabeledPair&) const = default;
	};

	struct PairMode
	{
			enum class Kind
			{
				MedianSplit, // one above-median image against one below-median image
				Extremes // one of the top_k most viral against one of the bottom_k least viral
			};
			Kind kind = Kind::MedianSplit;
			std::size_t top_k = 0;
			std::size_t bottom_k = 0;

			static PairMode median_split() { return { Kind::MedianSplit, 0, 0 }; }
			static PairMode extremes(std::size_t top, std::size_t bottom) { return { Kind::Extremes, top, bottom }; }
	};

	/// Distinct unordered cross pairs; which image lands in slot a is a seeded coin flip.
	std::vector<LabeledPair> build_pairs(const std::vector<ScoredImage> &scored, PairMode mode, std::size_t count, std::uint64_t seed);

	struct PairSets
	{
			std::vector<LabeledPair> train;
			std::vector<LabeledPair> test;
			std::vector<std::string> train_ids;
			std::vector<std::string> test_ids;
	};

	/// Splits the images into disjoint train/test pools first, then pairs within each pool.
	PairSets build_train_test_pairs(const std::vector<ScoredImage> &scored, std::size_t test_images, std::size_t train_pairs,
			PairMode test_mode, std::size_t test_pairs, std::uint64_t seed);

	struct SynthSpec
	{
			std::size_t height = 64;
			std::size_t width = 64;
			std::size_t num_images = 1000;
			double viral_fraction = 0.5;
			double blob_radius_min = 5.0;
			double blob_radius_max = 9.0;
			double blob_amplitude = 0.45;
			double noise_level = 1.0;
			double distractor_prob = 0.5;
			std::size_t side_maps = 0;
			std::size_t side_scale = 2;
			std::uint64_t seed = 1;
	};

	struct SynthImage
	{
			std::string id;
			Tensor image; // (1, 3, H, W) in [0, 1]
			bool viral = false;
			BinaryMask mask; // planted footprint; all zero for non-viral images
			double blob_radius = 0.0;
			double blob_cy = 0.0;
			double blob_cx = 0.0;
			EngagementRecord engagement;
			Tensor side; // (1, K', h, w) objectness-style maps, empty when side_maps == 0
	};

	std::vector<SynthImage> generate_synthetic(const SynthSpec &spec);

	// CSV files carry a header row; errors report file, line and column.
	std::vector<EngagementRecord> load_metadata_csv(const std::filesystem::path &path);
	std::vector<EngagementRecord> parse_metadata_csv(const std::string &text, const std::string &name = "<metadata>");
	void save_metadata_csv(const std::filesystem::path &path, const std::vector<EngagementRecord> &records);
	/// Columns id_a,id_b,label with label 1 when a is more viral and 0 otherwise.
	std::vector<LabeledPair> load_pairs_csv(const std::filesystem::path &path);
	std::vector<LabeledPair> parse_pairs_csv(const std::string &text, const std::string &name = "<pairs>");
	void save_pairs_csv(const std::filesystem::path &path, const std::vector<LabeledPair> &pairs);
}
