#include <lena/data.hpp>
#include <lena/error.hpp>
#include <lena/random.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace lena
{
	namespace
	{
		std::vector<std::size_t> order_by_virality(const std::vector<ScoredImage> &scored)
		{
			std::vector<std::size_t> order(scored.size());
			for (std::size_t i = 0; i < order.size(); i++)
				order[i] = i;
			std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
				if (scored[a].virality != scored[b].virality)
					return scored[a].virality > scored[b].virality;
				return scored[a].id < scored[b].id;
			});
			return order;
		}

		std::vector<LabeledPair> sample_cross_pairs(const std::vector<ScoredImage> &scored, const std::vector<std::size_t> &high,
				const std::vector<std::size_t> &low, std::size_t count, Rng &rng)
		{
			const std::size_t possible = high.size() * low.size();
			if (high.empty() || low.empty() || count > possible)
				throw InvalidArgument("insufficient images: " + std::to_string(high.size()) + " high and " + std::to_string(low.size())
						+ " low images cannot form " + std::to_string(count) + " distinct pairs");
			std::vector<std::pair<std::size_t, std::size_t>> chosen;
			chosen.reserve(count);
			if (2 * count > possible)
			{
				for (std::size_t h : high)
					for (std::size_t l : low)
						chosen.emplace_back(h, l);
				rng.shuffle(chosen);
				chosen.resize(count);
			}
			else
			{
				std::set<std::pair<std::size_t, std::size_t>> seen;
				while (chosen.size() < count)
				{
					const std::pair<std::size_t, std::size_t> p { high[rng.index(high.size())], low[rng.index(low.size())] };
					if (seen.insert(p).second)
						chosen.push_back(p);
				}
			}
			std::vector<LabeledPair> pairs;
			pairs.reserve(count);
			for (const auto &[h, l] : chosen)
			{
				if (rng.index(2) == 0)
					pairs.push_back( { scored[h].id, scored[l].id, PairLabel::AMoreViral });
				else
					pairs.push_back( { scored[l].id, scored[h].id, PairLabel::BMoreViral });
			}
			return pairs;
		}

		std::string read_text(const std::filesystem::path &path)
		{
			std::ifstream in(path, std::ios::binary);
			if (!in)
				throw IoError("cannot open " + path.string());
			std::ostringstream buffer;
			buffer << in.rdbuf();
			return buffer.str();
		}

		struct CsvRow
		{
				std::size_t line;
				std::vector<std::string> fields;
		};

		std::vector<CsvRow> split_csv(const std::string &text, const std::string &name, const std::vector<std::string> &header)
		{
			std::vector<CsvRow> rows;
			std::istringstream in(text);
			std::string line;
			std::size_t line_no = 0;
			bool header_seen = false;
			while (std::getline(in, line))
			{
				line_no++;
				if (!line.empty() && line.back() == '\r')
					line.pop_back();
				if (line_no == 1 && line.starts_with("\xEF\xBB\xBF"))
					line.erase(0, 3);
				if (line.empty())
					continue;
				CsvRow row { line_no, { } };
				std::size_t start = 0;
				while (true)
				{
					const std::size_t comma = line.find(',', start);
					row.fields.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
					if (comma == std::string::npos)
						break;
					start = comma + 1;
				}
				if (!header_seen)
				{
					if (row.fields != header)
					{
						std::string expected;
						for (const std::string &h : header)
							expected += (expected.empty() ? "" : ",") + h;
						throw ParseError(name + ":" + std::to_string(line_no) + ":1: expected header '" + expected + "'");
					}
					header_seen = true;
					continue;
				}
				if (row.fields.size() != header.size())
					throw ParseError(name + ":" + std::to_string(line_no) + ":1: expected " + std::to_string(header.size()) + " fields, got "
							+ std::to_string(row.fields.size()));
				rows.push_back(std::move(row));
			}
			if (!header_seen)
				throw ParseError(name + ":1:1: missing header row");
			return rows;
		}

		std::size_t column_of(const CsvRow &row, std::size_t field)
		{
			std::size_t col = 1;
			for (std::size_t i = 0; i < field; i++)
				col += row.fields[i].size() + 1;
			return col;
		}

		double parse_number(const CsvRow &row, std::size_t field, const std::string &name)
		{
			const std::string &text = row.fields[field];
			double value = 0.0;
			const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
			if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value))
				throw ParseError(name + ":" + std::to_string(row.line) + ":" + std::to_string(column_of(row, field)) + ": invalid number '" + text
						+ "'");
			return value;
		}

		std::vector<std::uint8_t> disk_mask(std::size_t h, std::size_t w, double cy, double cx, double r)
		{
			std::vector<std::uint8_t> mask(h * w, 0);
			for (std::size_t y = 0; y < h; y++)
				for (std::size_t x = 0; x < w; x++)
				{
					const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
					mask[y * w + x] = dy * dy + dx * dx <= r * r ? 1 : 0;
				}
			return mask;
		}
	}

	double virality_score(const EngagementRecord &record, double mean_likes, double mean_resubmissions)
	{
		if (mean_likes == 0.0 || !std::isfinite(mean_likes))
			throw InvalidArgument("invalid record '" + record.id + "': mean likes must be finite and non-zero");
		if (!(mean_resubmissions > 0.0) || !std::isfinite(mean_resubmissions))
			throw InvalidArgument("invalid record '" + record.id + "': mean resubmissions must be positive");
		if (!(record.resubmissions > 0.0) || !std::isfinite(record.resubmissions) || !std::isfinite(record.likes))
			throw InvalidArgument("invalid record '" + record.id + "': resubmissions must be positive");
		return (record.likes / mean_likes) * std::log(record.resubmissions / mean_resubmissions);
	}

	EngagementMeans engagement_means(const std::vector<EngagementRecord> &records)
	{
		if (records.empty())
			throw InvalidArgument("cannot average an empty record set");
		EngagementMeans means;
		for (const EngagementRecord &r : records)
		{
			means.likes += r.likes;
			means.resubmissions += r.resubmissions;
		}
		means.likes /= static_cast<double>(records.size());
		means.resubmissions /= static_cast<double>(records.size());
		return means;
	}

	std::vector<ScoredImage> score_records(const std::vector<EngagementRecord> &records)
	{
		const EngagementMeans means = engagement_means(records);
		std::vector<ScoredImage> scored;
		scored.reserve(records.size());
		for (const EngagementRecord &r : records)
			scored.push_back( { r.id, virality_score(r, means.likes, means.resubmissions) });
		return scored;
	}

	std::vector<LabeledPair> build_pairs(const std::vector<ScoredImage> &scored, PairMode mode, std::size_t count, std::uint64_t seed)
	{
		const std::vector<std::size_t> order = order_by_virality(scored);
		std::vector<std::size_t> high, low;
		if (mode.kind == PairMode::Kind::MedianSplit)
		{
			const std::size_t half = order.size() / 2;
			high.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
			low.assign(order.end() - static_cast<std::ptrdiff_t>(half), order.end());
		}
		else
		{
			if (mode.top_k + mode.bottom_k > order.size())
				throw InvalidArgument("insufficient images: top " + std::to_string(mode.top_k) + " + bottom " + std::to_string(mode.bottom_k)
						+ " exceeds " + std::to_string(order.size()) + " images");
			high.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(mode.top_k));
			low.assign(order.end() - static_cast<std::ptrdiff_t>(mode.bottom_k), order.end());
		}
		Rng rng(seed);
		return sample_cross_pairs(scored, high, low, count, rng);
	}

	PairSets build_train_test_pairs(const std::vector<ScoredImage> &scored, std::size_t test_images, std::size_t train_pairs,
			PairMode test_mode, std::size_t test_pairs, std::uint64_t seed)
	{
		if (test_images >= scored.size())
			throw InvalidArgument("insufficient images: cannot hold out " + std::to_string(test_images) + " of " + std::to_string(scored.size()));
		std::vector<std::size_t> order(scored.size());
		for (std::size_t i = 0; i < order.size(); i++)
			order[i] = i;
		Rng rng(seed);
		rng.shuffle(order);

		std::vector<ScoredImage> train_pool, test_pool;
		for (std::size_t i = 0; i < order.size(); i++)
			(i < test_images ? test_pool : train_pool).push_back(scored[order[i]]);

		PairSets sets;
		sets.train = build_pairs(train_pool, PairMode::median_split(), train_pairs, rng.next());
		sets.test = build_pairs(test_pool, test_mode, test_pairs, rng.next());
		for (const ScoredImage &s : train_pool)
			sets.train_ids.push_back(s.id);
		for (const ScoredImage &s : test_pool)
			sets.test_ids.push_back(s.id);
		std::sort(sets.train_ids.begin(), sets.train_ids.end());
		std::sort(sets.test_ids.begin(), sets.test_ids.end());
		return sets;
	}

	std::vector<SynthImage> generate_synthetic(const SynthSpec &spec)
	{
		if (spec.height == 0 || spec.width == 0 || spec.num_images == 0)
			throw InvalidArgument("synthetic spec needs positive image size and count");
		if (spec.blob_radius_min <= 0.0 || spec.blob_radius_max < spec.blob_radius_min
				|| 2.0 * spec.blob_radius_max + 1.0 > static_cast<double>(std::min(spec.height, spec.width)))
			throw InvalidArgument("blob radius range does not fit the image");
		if (spec.side_maps > 0 && (spec.side_scale == 0 || spec.height < spec.side_scale || spec.width < spec.side_scale))
			throw InvalidArgument("side_scale must be positive and no larger than the image");

		const std::size_t h = spec.height, w = spec.width;
		const std::size_t viral_count = static_cast<std::size_t>(std::llround(spec.viral_fraction * static_cast<double>(spec.num_images)));
		std::vector<bool> viral(spec.num_images, false);
		for (std::size_t i = 0; i < std::min(viral_count, spec.num_images); i++)
			viral[i] = true;
		Rng rng(spec.seed);
		rng.shuffle(viral);

		const int digits = static_cast<int>(std::to_string(spec.num_images - 1).size());
		std::vector<SynthImage> images;
		images.reserve(spec.num_images);
		for (std::size_t n = 0; n < spec.num_images; n++)
		{
			SynthImage item;
			std::ostringstream id;
			id << "img" << std::setw(std::max(4, digits)) << std::setfill('0') << n;
			item.id = id.str();
			item.viral = viral[n];
			item.image = Tensor( { 1, 3, h, w }, 0.45);

			// smooth background texture plus pixel noise, both scaled by noise_level
			for (std::size_t c = 0; c < 3; c++)
			{
				std::span<double> plane = item.image.plane(0, c);
				for (int wave = 0; wave < 3; wave++)
				{
					const double fy = rng.uniform(0.5, 3.0) * 2.0 * std::numbers::pi / static_cast<double>(h);
					const double fx = rng.uniform(0.5, 3.0) * 2.0 * std::numbers::pi / static_cast<double>(w);
					const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
					const double amp = 0.08 * spec.noise_level;
					for (std::size_t y = 0; y < h; y++)
						for (std::size_t x = 0; x < w; x++)
							plane[y * w + x] += amp * std::sin(fy * static_cast<double>(y) + fx * static_cast<double>(x) + phase);
				}
				for (double &v : plane)
					v += 0.05 * spec.noise_level * rng.normal();
			}

			if (rng.uniform() < spec.distractor_prob)
			{
				const double half = rng.uniform(spec.blob_radius_min, spec.blob_radius_max);
				const double cy = rng.uniform(half, static_cast<double>(h - 1) - half);
				const double cx = rng.uniform(half, static_cast<double>(w - 1) - half);
				for (std::size_t y = 0; y < h; y++)
					for (std::size_t x = 0; x < w; x++)
						if (std::abs(static_cast<double>(y) - cy) <= half && std::abs(static_cast<double>(x) - cx) <= half)
							for (std::size_t c = 0; c < 3; c++)
								item.image.at(0, c, y, x) -= 0.3;
			}

			double radius = 0.0;
			item.mask = BinaryMask { w, h, std::vector<std::uint8_t>(h * w, 0) };
			if (item.viral)
			{
				radius = rng.uniform(spec.blob_radius_min, spec.blob_radius_max);
				const double cy = rng.uniform(radius, static_cast<double>(h - 1) - radius);
				const double cx = rng.uniform(radius, static_cast<double>(w - 1) - radius);
				item.mask.pixels = disk_mask(h, w, cy, cx, radius);
				item.blob_radius = radius;
				item.blob_cy = cy;
				item.blob_cx = cx;
				const double tint[3] = { 1.0, 0.85, 0.3 };
				for (std::size_t c = 0; c < 3; c++)
				{
					std::span<double> plane = item.image.plane(0, c);
					for (std::size_t i = 0; i < h * w; i++)
						if (item.mask.pixels[i])
							plane[i] += spec.blob_amplitude * tint[c];
				}
			}
			for (double &v : item.image.data())
				v = std::clamp(v, 0.0, 1.0);

			// engagement grows with the planted pattern's size
			const double span = spec.blob_radius_max - spec.blob_radius_min;
			const double size01 = item.viral ? (span > 0.0 ? (radius - spec.blob_radius_min) / span : 1.0) : 0.0;
			const double log_resub = (item.viral ? 1.5 + 1.5 * size01 : 0.0) + 0.25 * rng.normal();
			item.engagement = { item.id, std::round(100.0 * (item.viral ? 1.5 : 1.0) * std::exp(0.2 * rng.normal())), std::max(1.0, std::round(
					10.0 * std::exp(log_resub))) };

			if (spec.side_maps > 0)
			{
				const std::size_t sh = h / spec.side_scale, sw = w / spec.side_scale;
				item.side = Tensor( { 1, spec.side_maps, sh, sw });
				std::vector<double> luminance(sh * sw, 0.0);
				const double cell = static_cast<double>(spec.side_scale * spec.side_scale);
				for (std::size_t y = 0; y < sh * spec.side_scale; y++)
					for (std::size_t x = 0; x < sw * spec.side_scale; x++)
					{
						double lum = 0.0;
						for (std::size_t c = 0; c < 3; c++)
							lum += item.image.at(0, c, y, x) / 3.0;
						luminance[(y / spec.side_scale) * sw + x / spec.side_scale] += lum / cell;
					}
				for (std::size_t k = 0; k < spec.side_maps; k++)
				{
					const std::ptrdiff_t radius_k = k == 0 ? 0 : (std::ptrdiff_t { 1 } << (k - 1));
					std::span<double> out = item.side.plane(0, k);
					for (std::ptrdiff_t y = 0; y < static_cast<std::ptrdiff_t>(sh); y++)
						for (std::ptrdiff_t x = 0; x < static_cast<std::ptrdiff_t>(sw); x++)
						{
							double acc = 0.0;
							int taps = 0;
							for (std::ptrdiff_t dy = -radius_k; dy <= radius_k; dy++)
								for (std::ptrdiff_t dx = -radius_k; dx <= radius_k; dx++)
								{
									const std::ptrdiff_t yy = y + dy, xx = x + dx;
									if (yy >= 0 && xx >= 0 && yy < static_cast<std::ptrdiff_t>(sh) && xx < static_cast<std::ptrdiff_t>(sw))
									{
										acc += luminance[static_cast<std::size_t>(yy) * sw + static_cast<std::size_t>(xx)];
										taps++;
									}
								}
							out[static_cast<std::size_t>(y) * sw + static_cast<std::size_t>(x)] = acc / taps;
						}
				}
			}
			images.push_back(std::move(item));
		}
		return images;
	}

	std::vector<EngagementRecord> parse_metadata_csv(const std::string &text, const std::string &name)
	{
		std::vector<EngagementRecord> records;
		for (const CsvRow &row : split_csv(text, name, { "id", "likes", "resubmissions" }))
		{
			if (row.fields[0].empty())
				throw ParseError(name + ":" + std::to_string(row.line) + ":1: empty id");
			records.push_back( { row.fields[0], parse_number(row, 1, name), parse_number(row, 2, name) });
		}
		return records;
	}

	std::vector<EngagementRecord> load_metadata_csv(const std::filesystem::path &path)
	{
		return parse_metadata_csv(read_text(path), path.string());
	}

	void save_metadata_csv(const std::filesystem::path &path, const std::vector<EngagementRecord> &records)
	{
		std::ofstream out(path, std::ios::trunc);
		if (!out)
			throw IoError("cannot write " + path.string());
		out << "id,likes,resubmissions\n" << std::setprecision(17);
		for (const EngagementRecord &r : records)
			out << r.id << ',' << r.likes << ',' << r.resubmissions << '\n';
	}

	std::vector<LabeledPair> parse_pairs_csv(const std::string &text, const std::string &name)
	{
		std::vector<LabeledPair> pairs;
		for (const CsvRow &row : split_csv(text, name, { "id_a", "id_b", "label" }))
		{
			const std::string &label = row.fields[2];
			if (label != "0" && label != "1")
				throw ParseError(name + ":" + std::to_string(row.line) + ":" + std::to_string(column_of(row, 2)) + ": label must be 0 or 1, got '"
						+ label + "'");
			pairs.push_back( { row.fields[0], row.fields[1], label == "1" ? PairLabel::AMoreViral : PairLabel::BMoreViral });
		}
		return pairs;
	}

	std::vector<LabeledPair> load_pairs_csv(const std::filesystem::path &path)
	{
		return parse_pairs_csv(read_text(path), path.string());
	}

	void save_pairs_csv(const std::filesystem::path &path, const std::vector<LabeledPair> &pairs)
	{
		std::ofstream out(path, std::ios::trunc);
		if (!out)
			throw IoError("cannot write " + path.string());
		out << "id_a,id_b,label\n";
		for (const LabeledPair &p : pairs)
			out << p.id_a << ',' << p.id_b << ',' << (p.label == PairLabel::AMoreViral ? 1 : 0) << '\n';
	}
}
