#include "parallel.hpp"

#include <lena/error.hpp>
#include <lena/image.hpp>
#include <lena/random.hpp>
#include <lena/train.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace lena
{
	namespace
	{
		// Keeps the shuffling stream apart from the initialization stream of the same seed.
		constexpr std::uint64_t shuffle_stream = 0x9e3779b97f4a7c15ULL;

		std::string format_double(double v)
		{
			char buf[32];
			const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
			return std::string(buf, end);
		}

		std::ofstream open_output(const std::filesystem::path &path)
		{
			std::ofstream out(path, std::ios::trunc);
			if (!out)
				throw IoError("cannot open " + path.string() + " for writing");
			return out;
		}

		double min_abs(std::span<const double> values)
		{
			double m = INFINITY;
			for (double v : values)
				m = std::min(m, std::abs(v));
			return m;
		}

		double rank_margin(const BranchCache &cache)
		{
			double margin = INFINITY;
			const std::size_t pixels = cache.pooled.height * cache.pooled.width;
			std::vector<double> sorted(pixels);
			for (std::size_t l = 0; l < cache.pooled.channels; l++)
			{
				const std::span<const double> f = cache.features.data().subspan(l * pixels, pixels);
				std::copy(f.begin(), f.end(), sorted.begin());
				std::sort(sorted.begin(), sorted.end(), std::greater<double>());
				const std::size_t n = cache.pooled.n_used[l];
				for (std::size_t k : { n - 1, n })
					// ties among ReLU-dead pixels stay tied under small perturbations
					if (k >= 1 && k < pixels && !(sorted[k - 1] == 0.0 && sorted[k] == 0.0))
						margin = std::min(margin, sorted[k - 1] - sorted[k]);
			}
			return margin;
		}

		// Standalone evaluation of the eta estimator: full stable sort, explicit top-k means.
		double reference_eta_slope(std::span<const double> f, double eta)
		{
			const std::size_t n = f.size();
			if (n < 2)
				return 0.0;
			std::vector<std::size_t> order(n);
			std::iota(order.begin(), order.end(), 0);
			std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b)
			{	return f[a] > f[b];});
			auto mean_top = [&](std::size_t k)
			{
				double acc = 0.0;
				for (std::size_t i = 0; i < k; i++)
					acc += f[order[i]];
				return acc / static_cast<double>(k);
			};
			const double delta = 1.0 / static_cast<double>(n - 1);
			const std::size_t count = top_n_count(eta, n);
			const bool lower = count >= 2, upper = count + 1 <= n;
			if (lower && upper && eta >= delta && eta <= 1.0 - delta)
				return (mean_top(count + 1) - mean_top(count - 1)) / (2.0 * delta);
			if (upper && (eta < delta || !lower))
				return (mean_top(count + 1) - mean_top(count)) / delta;
			return (mean_top(count) - mean_top(count - 1)) / delta;
		}

		void jitter_tensor(Tensor &t, Rng &rng, double scale)
		{
			for (double &x : t.data())
				x += rng.uniform(-scale, scale);
		}
	}

	void TrainConfig::validate() const
	{
		if (!(base_lr > 0.0) || !std::isfinite(base_lr))
			throw InvalidArgument("base_lr must be positive");
		if (!(momentum >= 0.0 && momentum < 1.0))
			throw InvalidArgument("momentum must lie in [0, 1)");
		if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
			throw InvalidArgument("weight_decay must be non-negative");
		if (lr_step_every == 0)
			throw InvalidArgument("lr_step_every must be positive");
		if (!(lr_step_factor > 0.0 && lr_step_factor <= 1.0))
			throw InvalidArgument("lr_step_factor must lie in (0, 1]");
		if (batch_size == 0)
			throw InvalidArgument("batch_size must be positive");
		if (!(eta_lr_multiplier >= 0.0) || !std::isfinite(eta_lr_multiplier))
			throw InvalidArgument("eta_lr_multiplier must be non-negative");
		if (eta_snapshot_every == 0)
			throw InvalidArgument("eta_snapshot_every must be positive");
	}

	double lr_at(std::size_t iteration, const TrainConfig &config)
	{
		return config.base_lr * std::pow(config.lr_step_factor, static_cast<double>(iteration / config.lr_step_every));
	}

	void sgd_step(Model &model, ModelGrads &grads, ModelGrads &velocity, double lr, const TrainConfig &config)
	{
		std::vector<NamedSpan> params = model.parameters(), g = grads.parameters(), v = velocity.parameters();
		if (g.size() != params.size() || v.size() != params.size() || grads.eta.size() != model.etas.size()
				|| velocity.eta.size() != model.etas.size())
			throw ShapeError("gradient or velocity state does not match the model");
		for (std::size_t i = 0; i < params.size(); i++)
		{
			if (g[i].values.size() != params[i].values.size() || v[i].values.size() != params[i].values.size())
				throw ShapeError("gradient for " + params[i].name + " has the wrong size");
			for (double x : g[i].values)
				if (!std::isfinite(x))
					throw NumericError("non-finite gradient in " + params[i].name);
		}
		for (double x : grads.eta)
			if (!std::isfinite(x))
				throw NumericError("non-finite gradient in eta");

		const double mu = config.momentum, decay = config.weight_decay;
		for (std::size_t i = 0; i < params.size(); i++)
			for (std::size_t j = 0; j < params[i].values.size(); j++)
			{
				double &theta = params[i].values[j];
				double &vel = v[i].values[j];
				vel = mu * vel - lr * (g[i].values[j] + decay * theta);
				theta += vel;
			}
		const double eta_lr = lr * config.eta_lr_multiplier;
		for (std::size_t l = 0; l < model.etas.size(); l++)
		{
			velocity.eta[l] = mu * velocity.eta[l] - eta_lr * grads.eta[l];
			model.etas.set_clamped(l, model.etas[l] + velocity.eta[l]);
		}
		model.mark_modified();
	}

	PairSample PairDataset::sample(std::size_t pair) const
	{
		const IndexedPair &p = pairs.at(pair);
		PairSample s { images.at(p.a), images.at(p.b), p.label, { }, { } };
		if (!sides.empty())
		{
			s.side_a = sides.at(p.a);
			s.side_b = sides.at(p.b);
		}
		return s;
	}

	std::size_t PairDataset::index_of(const std::string &id) const
	{
		const auto it = std::find(ids.begin(), ids.end(), id);
		if (it == ids.end())
			throw InvalidArgument("unknown image id '" + id + "'");
		return static_cast<std::size_t>(it - ids.begin());
	}

	PairDataset load_pair_dataset(const std::filesystem::path &dir, const std::vector<LabeledPair> &pairs, std::size_t side_maps)
	{
		PairDataset data;
		std::unordered_map<std::string, std::size_t> index;
		auto load = [&](const std::string &id)
		{
			if (const auto it = index.find(id); it != index.end())
				return it->second;
			const std::size_t i = data.ids.size();
			index.emplace(id, i);
			data.ids.push_back(id);
			data.images.push_back(image_to_tensor(load_image(dir / "images" / (id + ".png"))));
			if (side_maps > 0)
			{
				std::vector<Tensor> planes;
				for (std::size_t k = 0; k < side_maps; k++)
					planes.push_back(gray_to_tensor(load_gray(dir / "side" / (id + "_" + std::to_string(k) + ".pgm"))));
				const std::size_t h = planes[0].dim(2), w = planes[0].dim(3);
				Tensor side( { 1, side_maps, h, w });
				for (std::size_t k = 0; k < side_maps; k++)
				{
					if (planes[k].dim(2) != h || planes[k].dim(3) != w)
						throw ShapeError("side maps of " + id + " differ in size");
					std::copy(planes[k].data().begin(), planes[k].data().end(), side.plane(0, k).begin());
				}
				data.sides.push_back(std::move(side));
			}
			return i;
		};
		for (const LabeledPair &p : pairs)
			data.pairs.push_back( { load(p.id_a), load(p.id_b), p.label });
		return data;
	}

	BatchResult batch_gradients(const Model &model, const PairDataset &data, std::span<const std::size_t> pairs, std::size_t threads)
	{
		if (pairs.empty())
			throw InvalidArgument("empty batch");
		std::vector<ModelGrads> grads(pairs.size());
		std::vector<double> losses(pairs.size());
		detail::parallel_for(pairs.size(), threads, [&](std::size_t i)
		{
			const IndexedPair &p = data.pairs.at(pairs[i]);
			const bool side = !data.sides.empty() && model.fusion;
			const PairForward fw = pair_forward(model, data.images[p.a], data.images[p.b], side ? &data.sides[p.a] : nullptr,
					side ? &data.sides[p.b] : nullptr);
			const LossValue loss = pair_loss(fw.logit, p.label);
			losses[i] = loss.loss;
			grads[i] = pair_backward(model, fw, loss.grad);
		});
		BatchResult result { 0.0, std::move(grads[0]) };
		result.loss = losses[0];
		for (std::size_t i = 1; i < pairs.size(); i++)
		{
			result.grads.accumulate(grads[i]);
			result.loss += losses[i];
		}
		const double inv = 1.0 / static_cast<double>(pairs.size());
		result.grads.scale(inv);
		result.loss *= inv;
		return result;
	}

	TrainResult train(const PairDataset &data, Model model, const TrainConfig &config, const TrainCallback &callback)
	{
		config.validate();
		if (data.pairs.empty())
			throw InvalidArgument("training set has no pairs");
		Rng rng(config.seed ^ shuffle_stream);
		std::vector<std::size_t> order(data.pairs.size());
		std::iota(order.begin(), order.end(), 0);
		std::size_t cursor = order.size();

		TrainResult result;
		ModelGrads velocity = ModelGrads::zeros_like(model);
		result.trace.iterations.push_back(0);
		result.trace.snapshots.push_back(model.etas);
		std::vector<std::size_t> batch(config.batch_size);
		for (std::size_t it = 0; it < config.max_iters; it++)
		{
			for (std::size_t &b : batch)
			{
				if (cursor == order.size())
				{
					rng.shuffle(order);
					cursor = 0;
				}
				b = order[cursor++];
			}
			const double lr = lr_at(it, config);
			BatchResult br;
			try
			{
				br = batch_gradients(model, data, batch, config.threads);
				if (!std::isfinite(br.loss))
					throw NumericError("non-finite loss");
				sgd_step(model, br.grads, velocity, lr, config);
			} catch (const NumericError &e)
			{
				throw NumericError("training diverged at iteration " + std::to_string(it) + ": " + e.what());
			}
			result.loss_curve.push_back( { it, lr, br.loss });
			if ((it + 1) % config.eta_snapshot_every == 0 || it + 1 == config.max_iters)
			{
				result.trace.iterations.push_back(it + 1);
				result.trace.snapshots.push_back(model.etas);
			}
			if (callback)
				callback(it + 1, br.loss);
		}
		result.model = std::move(model);
		return result;
	}

	PairPrediction predict_pairs(const Model &model, const PairDataset &data, std::size_t threads)
	{
		PairPrediction out;
		out.logits.resize(data.pairs.size());
		detail::parallel_for(data.pairs.size(), threads, [&](std::size_t i)
		{
			const IndexedPair &p = data.pairs[i];
			const bool side = !data.sides.empty() && model.fusion;
			out.logits[i] = pair_forward(model, data.images[p.a], data.images[p.b], side ? &data.sides[p.a] : nullptr,
					side ? &data.sides[p.b] : nullptr).logit;
		});
		std::size_t correct = 0;
		for (std::size_t i = 0; i < data.pairs.size(); i++)
			correct += data.pairs[i].label == PairLabel::AMoreViral ? out.logits[i] > 0.0 : out.logits[i] < 0.0;
		out.accuracy = data.pairs.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.pairs.size());
		return out;
	}

	void write_loss_csv(const std::filesystem::path &path, const std::vector<LossPoint> &curve)
	{
		std::ofstream out = open_output(path);
		out << "iteration,lr,loss\n";
		for (const LossPoint &p : curve)
			out << p.iteration << ',' << format_double(p.lr) << ',' << format_double(p.loss) << '\n';
		if (!out)
			throw IoError("failed writing " + path.string());
	}

	void write_eta_trace_csv(const std::filesystem::path &path, const EtaTrace &trace)
	{
		std::ofstream out = open_output(path);
		const std::size_t channels = trace.snapshots.empty() ? 0 : trace.snapshots[0].size();
		out << "iteration";
		for (std::size_t l = 0; l < channels; l++)
			out << ",eta_" << l;
		out << '\n';
		for (std::size_t i = 0; i < trace.snapshots.size(); i++)
		{
			out << trace.iterations[i];
			for (double e : trace.snapshots[i].values())
				out << ',' << format_double(e);
			out << '\n';
		}
		if (!out)
			throw IoError("failed writing " + path.string());
	}

	EtaTrace read_eta_trace_csv(const std::filesystem::path &path)
	{
		std::ifstream in(path);
		if (!in)
			throw IoError("cannot open " + path.string());
		const std::string name = path.string();
		std::string line;
		if (!std::getline(in, line) || !line.starts_with("iteration"))
			throw ParseError(name + ":1:1: expected header starting with 'iteration'");
		const std::size_t channels = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
		EtaTrace trace;
		for (std::size_t number = 2; std::getline(in, line); number++)
		{
			if (line.empty())
				continue;
			std::vector<double> fields;
			std::size_t start = 0;
			while (true)
			{
				const std::size_t comma = std::min(line.find(',', start), line.size());
				double v = 0.0;
				const auto [ptr, ec] = std::from_chars(line.data() + start, line.data() + comma, v);
				if (ec != std::errc() || ptr != line.data() + comma)
					throw ParseError(name + ":" + std::to_string(number) + ":" + std::to_string(start + 1) + ": not a number");
				fields.push_back(v);
				if (comma == line.size())
					break;
				start = comma + 1;
			}
			if (fields.size() != channels + 1)
				throw ParseError(name + ":" + std::to_string(number) + ":1: expected " + std::to_string(channels + 1) + " fields, got "
						+ std::to_string(fields.size()));
			if (fields[0] < 0 || fields[0] != std::floor(fields[0]))
				throw ParseError(name + ":" + std::to_string(number) + ":1: iteration must be a non-negative integer");
			trace.iterations.push_back(static_cast<std::size_t>(fields[0]));
			try
			{
				trace.snapshots.emplace_back(std::vector<double>(fields.begin() + 1, fields.end()));
			} catch (const InvalidArgument &e)
			{
				throw ParseError(name + ":" + std::to_string(number) + ": " + e.what());
			}
		}
		return trace;
	}

	double kink_margin(const PairForward &forward)
	{
		double margin = std::min(rank_margin(forward.a), rank_margin(forward.b));
		for (const BranchCache *c : { &forward.a, &forward.b })
		{
			if (c->model && c->model->config.relu)
				for (const Tensor &t : c->conv_outputs)
					margin = std::min(margin, min_abs(t.data()));
			if (c->fusion_output.size() > 0)
				margin = std::min(margin, min_abs(c->fusion_output.data()));
		}
		return margin;
	}

	double GradCheckReport::worst_weight_error() const
	{
		double worst = 0.0;
		for (const GradCheckGroup &g : groups)
			if (g.name != "eta")
				worst = std::max(worst, g.max_rel_error);
		return worst;
	}

	double GradCheckReport::eta_error() const
	{
		for (const GradCheckGroup &g : groups)
			if (g.name == "eta")
				return g.max_rel_error;
		return 0.0;
	}

	GradCheckReport grad_check(Model model, PairSample sample, const GradCheckOptions &options)
	{
		GradCheckReport report;
		Rng rng(options.seed);
		report.margin = kink_margin(pair_forward(model, sample));
		const PairSample original = sample;
		while (report.margin < options.min_margin && report.jitters < options.max_jitters)
		{
			PairSample candidate = original;
			jitter_tensor(candidate.image_a, rng, options.jitter);
			jitter_tensor(candidate.image_b, rng, options.jitter);
			report.jitters++;
			const double m = kink_margin(pair_forward(model, candidate));
			if (m > report.margin)
			{
				report.margin = m;
				sample = std::move(candidate);
			}
		}

		const PairForward fw = pair_forward(model, sample);
		const LossValue loss = pair_loss(fw.logit, sample.label);
		report.loss = loss.loss;
		ModelGrads analytic = pair_backward(model, fw, loss.grad);
		auto total_loss = [&]
		{
			return pair_loss(pair_logit(model, sample), sample.label).loss;
		};

		std::vector<NamedSpan> params = model.parameters(), grads = analytic.parameters();
		const double h = options.step;
		for (std::size_t i = 0; i < params.size(); i++)
		{
			GradCheckGroup group { params[i].name, params[i].values.size(), 0.0, 0.0 };
			for (std::size_t j = 0; j < params[i].values.size(); j++)
			{
				double &theta = params[i].values[j];
				const double saved = theta;
				double f[4];
				const double offsets[4] = { -2.0, -1.0, 1.0, 2.0 };
				for (int k = 0; k < 4; k++)
				{
					theta = saved + offsets[k] * h;
					f[k] = total_loss();
				}
				theta = saved;
				const double numeric = (f[0] - 8.0 * f[1] + 8.0 * f[2] - f[3]) / (12.0 * h);
				const double a = grads[i].values[j], diff = std::abs(a - numeric);
				group.max_abs_error = std::max(group.max_abs_error, diff);
				group.max_rel_error = std::max(group.max_rel_error, diff / std::max( { std::abs(a), std::abs(numeric), options.floor }));
			}
			report.groups.push_back(group);
		}

		GradCheckGroup eta { "eta", model.etas.size(), 0.0, 0.0 };
		const std::size_t channels = model.etas.size();
		for (std::size_t l = 0; l < channels; l++)
		{
			double expected = 0.0, scale = 0.0;
			if (model.config.pooling_mode == PoolingMode::Lena)
			{
				double weight = 0.0;
				for (std::size_t k = 0; k < model.classifier.outputs(); k++)
					weight += (k == 0 ? loss.grad : 0.0) * model.classifier.weights[k * channels + l];
				for (const auto &[cache, sign] : { std::pair { &fw.a, 1.0 }, std::pair { &fw.b, -1.0 } })
				{
					const std::size_t pixels = cache->pooled.height * cache->pooled.width;
					const double term = sign * weight * reference_eta_slope(cache->features.data().subspan(l * pixels, pixels), model.etas[l]);
					expected += term;
					scale += std::abs(term);
				}
			}
			const double a = analytic.eta[l], diff = std::abs(a - expected);
			eta.max_abs_error = std::max(eta.max_abs_error, diff);
			// relative to the branch terms, so cancellation between the two branches is not amplified
			eta.max_rel_error = std::max(eta.max_rel_error, diff / std::max( { std::abs(a), scale, 1e-300 }));
		}
		report.groups.push_back(eta);
		return report;
	}
}
