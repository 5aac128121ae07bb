#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"

#include <lena/data.hpp>
#include <lena/error.hpp>
#include <lena/random.hpp>

#include <fstream>
#include <map>

#include <numbers>
#include <set>

using namespace lena;
using namespace lena::testing;

namespace
{
	std::filesystem::path scratch_dir(const std::string &name)
	{
		const std::filesystem::path dir = std::filesystem::temp_directory_path() / ("lena_test_data_" + name);
		std::filesystem::remove_all(dir);
		std::filesystem::create_directories(dir);
		return dir;
	}

	std::set<std::string> ids_of(const std::vector<LabeledPair> &pairs)
	{
		std::set<std::string> ids;
		for (const LabeledPair &p : pairs)
		{
			ids.insert(p.id_a);
			ids.insert(p.id_b);
		}
		return ids;
	}
}

TEST_CASE("virality score")
{
	CHECK(virality_score( { "a", 40.0, 7.0 }, 40.0, 7.0) == 0.0);
	CHECK(virality_score( { "a", 80.0, 7.0 * std::numbers::e }, 40.0, 7.0) == doctest::Approx(2.0).epsilon(1e-15));
	CHECK(virality_score( { "a", -5.0, 3.0 }, 2.0, 1.0) == doctest::Approx(-2.5 * std::log(3.0)).epsilon(1e-15));
	CHECK_THROWS_AS(virality_score( { "a", 1.0, 0.0 }, 1.0, 1.0), InvalidArgument);
	CHECK_THROWS_AS(virality_score( { "a", 1.0, 1.0 }, 0.0, 1.0), InvalidArgument);
	CHECK_THROWS_AS(virality_score( { "a", 1.0, 1.0 }, 1.0, -2.0), InvalidArgument);

	SUBCASE("batch against brute force")
	{
		Rng rng(9);
		std::vector<EngagementRecord> records;
		for (int i = 0; i < 100; i++)
			records.push_back( { "r" + std::to_string(i), rng.uniform(-50, 500), rng.uniform(0.5, 80) });
		double sum_l = 0.0, sum_m = 0.0;
		for (const EngagementRecord &r : records)
		{
			sum_l += r.likes;
			sum_m += r.resubmissions;
		}
		const std::vector<ScoredImage> scored = score_records(records);
		REQUIRE(scored.size() == records.size());
		for (std::size_t i = 0; i < records.size(); i++)
		{
			const double brute = records[i].likes / (sum_l / 100.0) * std::log(records[i].resubmissions / (sum_m / 100.0));
			CHECK(scored[i].id == records[i].id);
			CHECK(std::abs(scored[i].virality - brute) <= 1e-12 * std::max(1.0, std::abs(brute)));
		}
	}
	SUBCASE("homogeneous in likes, zero at mean resubmissions")
	{
		Rng rng(10);
		for (int i = 0; i < 100; i++)
		{
			const double ml = rng.uniform(1, 100), mm = rng.uniform(1, 100);
			const EngagementRecord r { "x", rng.uniform(-100, 100), rng.uniform(0.1, 200) };
			const EngagementRecord doubled { "x", 2.0 * r.likes, r.resubmissions };
			CHECK(virality_score(doubled, ml, mm) == doctest::Approx(2.0 * virality_score(r, ml, mm)).epsilon(1e-14));
			CHECK(virality_score( { "y", r.likes, mm }, ml, mm) == 0.0);
		}
	}
}

TEST_CASE("build_pairs")
{
	SUBCASE("single cross pair")
	{
		const std::vector<LabeledPair> pairs = build_pairs( { { "hi", 5.0 }, { "lo", 1.0 } }, PairMode::median_split(), 1, 3);
		REQUIRE(pairs.size() == 1);
		const LabeledPair &p = pairs[0];
		CHECK(((p.id_a == "hi" && p.label == PairLabel::AMoreViral) || (p.id_b == "hi" && p.label == PairLabel::BMoreViral)));
	}
	SUBCASE("extremes pick the order statistics")
	{
		const std::vector<LabeledPair> pairs = build_pairs( { { "mid", 5.0 }, { "top", 9.0 }, { "low", 1.0 } }, PairMode::extremes(1, 1), 1,
				4);
		REQUIRE(pairs.size() == 1);
		CHECK(ids_of(pairs) == std::set<std::string> { "top", "low" });
		const std::string &more = pairs[0].label == PairLabel::AMoreViral ? pairs[0].id_a : pairs[0].id_b;
		CHECK(more == "top");
	}
	SUBCASE("insufficient images")
	{
		CHECK_THROWS_AS(build_pairs( { { "a", 1.0 } }, PairMode::median_split(), 1, 1), InvalidArgument);
		CHECK_THROWS_AS(build_pairs( { { "a", 1.0 }, { "b", 2.0 } }, PairMode::median_split(), 2, 1), InvalidArgument);
		CHECK_THROWS_AS(build_pairs( { { "a", 1.0 }, { "b", 2.0 } }, PairMode::extremes(2, 1), 1, 1), InvalidArgument);
	}
	SUBCASE("structural invariants on random instances")
	{
		Rng rng(12);
		for (int trial = 0; trial < 40; trial++)
		{
			const std::size_t n = 4 + rng.index(60);
			std::vector<ScoredImage> scored;
			for (std::size_t i = 0; i < n; i++)
				scored.push_back( { "i" + std::to_string(i), rng.uniform(-3, 3) });
			std::vector<double> sorted;
			for (const ScoredImage &s : scored)
				sorted.push_back(s.virality);
			std::sort(sorted.begin(), sorted.end(), std::greater<double>());
			const double median_hi = sorted[n / 2 - 1], median_lo = sorted[n - n / 2];
			std::map<std::string, double> score;
			for (const ScoredImage &s : scored)
				score[s.id] = s.virality;

			const std::size_t half = n / 2;
			const std::size_t count = 1 + rng.index(half * half);
			const std::vector<LabeledPair> pairs = build_pairs(scored, PairMode::median_split(), count, rng.next());
			REQUIRE(pairs.size() == count);
			std::set<std::pair<std::string, std::string>> unordered;
			for (const LabeledPair &p : pairs)
			{
				const double sa = score[p.id_a], sb = score[p.id_b];
				REQUIRE((sa >= median_hi) != (sb >= median_hi));
				REQUIRE(std::min(sa, sb) <= median_lo);
				REQUIRE((p.label == PairLabel::AMoreViral) == (sa > sb));
				REQUIRE(unordered.insert(std::minmax(p.id_a, p.id_b)).second);
			}
			const std::uint64_t seed = rng.next();
			REQUIRE(build_pairs(scored, PairMode::median_split(), count, seed) == build_pairs(scored, PairMode::median_split(), count, seed));
		}
	}
	SUBCASE("train and test images are disjoint")
	{
		Rng rng(13);
		for (int trial = 0; trial < 20; trial++)
		{
			std::vector<ScoredImage> scored;
			for (int i = 0; i < 120; i++)
				scored.push_back( { "i" + std::to_string(i), rng.uniform(-3, 3) });
			const PairSets sets = build_train_test_pairs(scored, 40, 300, PairMode::extremes(10, 10), 60, rng.next());
			const std::set<std::string> train = ids_of(sets.train), test = ids_of(sets.test);
			for (const std::string &id : test)
				REQUIRE(train.count(id) == 0);
			REQUIRE(sets.test_ids.size() == 40);
			REQUIRE(sets.train_ids.size() == 80);
		}
	}
}

TEST_CASE("synthetic dataset")
{
	SynthSpec spec;
	spec.height = 32;
	spec.width = 32;
	spec.num_images = 40;
	spec.blob_radius_min = 3.0;
	spec.blob_radius_max = 6.0;
	spec.seed = 77;

	SUBCASE("deterministic from the seed")
	{
		const std::vector<SynthImage> a = generate_synthetic(spec), b = generate_synthetic(spec);
		REQUIRE(a.size() == b.size());
		for (std::size_t i = 0; i < a.size(); i++)
		{
			CHECK(bitwise_equal(a[i].image, b[i].image));
			CHECK(a[i].mask == b[i].mask);
			CHECK(a[i].engagement == b[i].engagement);
		}
	}
	SUBCASE("noise-free images differ exactly on the footprint")
	{
		spec.noise_level = 0.0;
		spec.distractor_prob = 0.0;
		const std::vector<SynthImage> images = generate_synthetic(spec);
		const SynthImage *plain = nullptr;
		for (const SynthImage &s : images)
			if (!s.viral)
				plain = &s;
		REQUIRE(plain != nullptr);
		std::size_t viral = 0;
		for (const SynthImage &s : images)
		{
			if (!s.viral)
			{
				CHECK(bitwise_equal(s.image, plain->image));
				CHECK(s.mask.count() == 0);
				continue;
			}
			viral++;
			for (std::size_t i = 0; i < 32 * 32; i++)
			{
				bool differs = false;
				for (std::size_t c = 0; c < 3; c++)
					differs = differs || s.image[c * 1024 + i] != plain->image[c * 1024 + i];
				REQUIRE(differs == (s.mask.pixels[i] == 1));
			}
		}
		CHECK(viral == 20);
	}
	SUBCASE("mask area follows the disk geometry")
	{
		for (const SynthImage &s : generate_synthetic(spec))
		{
			if (!s.viral)
				continue;
			// brute-force count of pixel centres inside the disk
			std::size_t inside = 0;
			for (std::size_t y = 0; y < 32; y++)
				for (std::size_t x = 0; x < 32; x++)
				{
					const double dy = y - s.blob_cy, dx = x - s.blob_cx;
					inside += dy * dy + dx * dx <= s.blob_radius * s.blob_radius;
				}
			CHECK(s.mask.count() == inside);
			const double area = std::numbers::pi * s.blob_radius * s.blob_radius;
			CHECK(std::abs(static_cast<double>(s.mask.count()) - area) <= 2.0 * std::numbers::pi * s.blob_radius + 1.0);
		}
	}
	SUBCASE("viral images score higher")
	{
		const std::vector<SynthImage> images = generate_synthetic(spec);
		std::vector<EngagementRecord> records;
		for (const SynthImage &s : images)
			records.push_back(s.engagement);
		const std::vector<ScoredImage> scored = score_records(records);
		double min_viral = 1e300, max_plain = -1e300;
		for (std::size_t i = 0; i < images.size(); i++)
			(images[i].viral ? min_viral : max_plain) = images[i].viral ? std::min(min_viral, scored[i].virality) : std::max(max_plain,
					scored[i].virality);
		CHECK(min_viral > max_plain);
	}
	SUBCASE("side maps")
	{
		spec.side_maps = 2;
		spec.num_images = 3;
		const std::vector<SynthImage> images = generate_synthetic(spec);
		CHECK(images[0].side.shape() == std::vector<std::size_t> { 1, 2, 16, 16 });
		for (double v : images[0].side.data())
			CHECK((v >= 0.0 && v <= 1.0));
	}
	SUBCASE("bad spec")
	{
		spec.blob_radius_max = 20.0;
		CHECK_THROWS_AS(generate_synthetic(spec), InvalidArgument);
	}
}

TEST_CASE("file formats")
{
	const std::filesystem::path dir = scratch_dir("formats");
	SUBCASE("image round trip within quantization")
	{
		std::mt19937_64 rng(1);
		const Tensor t = random_tensor( { 1, 3, 5, 7 }, rng, 0.0, 1.0);
		for (const char *name : { "a.png", "a.ppm" })
		{
			save_image(dir / name, tensor_to_image(t));
			const Tensor back = image_to_tensor(load_image(dir / name));
			REQUIRE(back.shape() == t.shape());
			for (std::size_t i = 0; i < t.size(); i++)
				CHECK(std::abs(back[i] - t[i]) <= 0.5 / 255.0 + 1e-12);
		}
		CHECK_THROWS_AS(save_image(dir / "a.bmp", tensor_to_image(t)), IoError);
	}
	SUBCASE("masks threshold at 127")
	{
		const GrayImage gray { 3, 1, { 0, 255, 128 } };
		save_gray(dir / "m.pgm", gray);
		save_gray(dir / "m.png", GrayImage { 2, 1, { 255, 0 } });
		CHECK(load_mask(dir / "m.pgm") == BinaryMask { 3, 1, { 0, 1, 1 } });
		CHECK(load_mask(dir / "m.png") == BinaryMask { 2, 1, { 1, 0 } });
		const BinaryMask mask { 2, 2, { 1, 0, 0, 1 } };
		save_mask(dir / "k.pgm", mask);
		CHECK(load_mask(dir / "k.pgm") == mask);
	}
	SUBCASE("malformed images report a position")
	{
		std::ofstream(dir / "bad.ppm", std::ios::binary) << "P6\n4 x\n255\n";
		CHECK_THROWS_WITH_AS(load_image(dir / "bad.ppm"), doctest::Contains("byte 5"), ParseError);
		std::ofstream(dir / "short.ppm", std::ios::binary) << "P6\n2 2\n255\nabc";
		CHECK_THROWS_WITH_AS(load_image(dir / "short.ppm"), doctest::Contains("truncated"), ParseError);
		CHECK_THROWS_AS(load_image(dir / "missing.png"), ParseError);
	}
	SUBCASE("metadata csv")
	{
		const std::vector<EngagementRecord> rows = parse_metadata_csv("id,likes,resubmissions\nimg1,10,3\n");
		REQUIRE(rows.size() == 1);
		CHECK(rows[0] == EngagementRecord { "img1", 10.0, 3.0 });
		CHECK_THROWS_WITH_AS(parse_metadata_csv("id,likes,resubmissions\nimg1,1x,3\n", "m.csv"), doctest::Contains("m.csv:2:6"), ParseError);
		CHECK_THROWS_WITH_AS(parse_metadata_csv("id,likes\nimg1,1\n", "m.csv"), doctest::Contains("m.csv:1:1"), ParseError);
		CHECK_THROWS_WITH_AS(parse_metadata_csv("id,likes,resubmissions\nimg1,1\n", "m.csv"), doctest::Contains("m.csv:2:1"), ParseError);
		const std::vector<EngagementRecord> records { { "a", -3.5, 2.0 }, { "b", 0.1, 7.25 } };
		save_metadata_csv(dir / "meta.csv", records);
		CHECK(load_metadata_csv(dir / "meta.csv") == records);
	}
	SUBCASE("pairs csv")
	{
		const std::vector<LabeledPair> pairs { { "a", "b", PairLabel::AMoreViral }, { "c", "d", PairLabel::BMoreViral } };
		save_pairs_csv(dir / "pairs.csv", pairs);
		CHECK(load_pairs_csv(dir / "pairs.csv") == pairs);
		CHECK_THROWS_WITH_AS(parse_pairs_csv("id_a,id_b,label\na,b,2\n", "p.csv"), doctest::Contains("p.csv:2:5"), ParseError);
	}
}
