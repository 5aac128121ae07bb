#include "commands.hpp"
#include "run_config.hpp"

#include <lena/data.hpp>
#include <lena/error.hpp>
#include <lena/image.hpp>
#include <lena/pooling.hpp>
#include <lena/random.hpp>
#include <lena/siamese.hpp>
#include <lena/train.hpp>
#include <lena/viraliency.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

namespace lena::cli
{
	namespace fs = std::filesystem;

	namespace
	{
		std::string fmt(double v)
		{
			char buf[32];
			const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
			return std::string(buf, end);
		}

		std::string fmt(const std::optional<double> &v)
		{
			return v ? fmt(*v) : std::string();
		}

		std::ofstream open_output(const fs::path &path)
		{
			if (path.has_parent_path())
				fs::create_directories(path.parent_path());
			std::ofstream out(path, std::ios::binary);
			if (!out)
				throw IoError("cannot write " + path.string());
			return out;
		}

		/// Writes to the file when a path is given, otherwise to stdout.
		void emit(const fs::path &path, const std::string &text)
		{
			if (path.empty())
			{
				std::cout << text;
				return;
			}
			std::ofstream out = open_output(path);
			out << text;
			if (!out)
				throw IoError("failed writing " + path.string());
		}

		std::size_t side_map_count(const ModelConfig &config)
		{
			return config.objectness ? config.objectness->num_side_maps : 0;
		}

		Tensor load_side_maps(const fs::path &dir, const std::string &id, std::size_t count)
		{
			if (count == 0)
				return { };
			// load_pair_dataset already knows the layout; reuse it through a one-image pair.
			PairDataset one = load_pair_dataset(dir, { LabeledPair { id, id, PairLabel::AMoreViral } }, count);
			return one.sides.at(0);
		}

		std::vector<std::string> read_id_list(const fs::path &path)
		{
			std::ifstream in(path);
			if (!in)
				throw IoError("cannot open " + path.string());
			std::vector<std::string> ids;
			std::string line;
			std::size_t line_no = 0;
			while (std::getline(in, line))
			{
				line_no++;
				if (!line.empty() && line.back() == '\r')
					line.pop_back();
				if (line_no == 1)
				{
					if (line != "id")
						throw ParseError(path.string() + ":1:1: expected header 'id'");
					continue;
				}
				if (line.empty())
					continue;
				if (line.find(',') != std::string::npos)
					throw ParseError(path.string() + ":" + std::to_string(line_no) + ":1: expected a single id");
				ids.push_back(line);
			}
			if (line_no == 0)
				throw ParseError(path.string() + ":1:1: empty file");
			return ids;
		}

		void add_threads_option(CLI::App &command, std::optional<std::size_t> &threads)
		{
			command.add_option("--threads", threads, "worker threads (default: LENA_THREADS, else all cores); results do not depend on it");
		}
	}

	void add_synth_command(CLI::App &app)
	{
		struct Options
		{
				SynthSpec spec;
				fs::path out;
				std::size_t test_images = 200;
				std::size_t train_pairs = 800;
				std::size_t test_pairs = 200;
				std::size_t top = 50;
				std::size_t bottom = 50;
		};
		auto opt = std::make_shared<Options>();
		CLI::App *cmd = app.add_subcommand("synth", "Generate the planted-signal dataset");
		cmd->add_option("--out", opt->out, "dataset directory to create")->required();
		cmd->add_option("--num-images", opt->spec.num_images, "number of images")->capture_default_str();
		cmd->add_option("--height", opt->spec.height, "image height")->capture_default_str();
		cmd->add_option("--width", opt->spec.width, "image width")->capture_default_str();
		cmd->add_option("--viral-fraction", opt->spec.viral_fraction, "fraction of images carrying the planted pattern")->capture_default_str();
		cmd->add_option("--radius-min", opt->spec.blob_radius_min, "smallest pattern radius in pixels")->capture_default_str();
		cmd->add_option("--radius-max", opt->spec.blob_radius_max, "largest pattern radius in pixels")->capture_default_str();
		cmd->add_option("--amplitude", opt->spec.blob_amplitude, "pattern contrast")->capture_default_str();
		cmd->add_option("--noise", opt->spec.noise_level, "background texture strength")->capture_default_str();
		cmd->add_option("--distractor-prob", opt->spec.distractor_prob, "chance of a distractor blob per image")->capture_default_str();
		cmd->add_option("--side-maps", opt->spec.side_maps, "objectness-style side maps per image")->capture_default_str();
		cmd->add_option("--side-scale", opt->spec.side_scale, "downsampling factor of the side maps")->capture_default_str();
		cmd->add_option("--test-images", opt->test_images, "images held out for testing")->capture_default_str();
		cmd->add_option("--train-pairs", opt->train_pairs, "training pairs (above vs below median)")->capture_default_str();
		cmd->add_option("--test-pairs", opt->test_pairs, "test pairs (top vs bottom of the test pool)")->capture_default_str();
		cmd->add_option("--top", opt->top, "most viral test images eligible for test pairs")->capture_default_str();
		cmd->add_option("--bottom", opt->bottom, "least viral test images eligible for test pairs")->capture_default_str();
		cmd->add_option("--seed", opt->spec.seed, "seed for images and pairs")->capture_default_str();
		cmd->callback([opt]
		{
			const std::vector<SynthImage> images = generate_synthetic(opt->spec);
			fs::create_directories(opt->out / "images");
			fs::create_directories(opt->out / "masks");
			if (opt->spec.side_maps > 0)
				fs::create_directories(opt->out / "side");
			std::vector<EngagementRecord> records;
			for (const SynthImage &im : images)
			{
				save_image(opt->out / "images" / (im.id + ".png"), tensor_to_image(im.image));
				save_mask(opt->out / "masks" / (im.id + ".pgm"), im.mask);
				for (std::size_t k = 0; k < opt->spec.side_maps; k++)
					save_gray(opt->out / "side" / (im.id + "_" + std::to_string(k) + ".pgm"),
							plane_to_gray(im.side.plane(0, k), im.side.dim(3), im.side.dim(2)));
				records.push_back(im.engagement);
			}
			save_metadata_csv(opt->out / "metadata.csv", records);
			const PairSets sets = build_train_test_pairs(score_records(records), opt->test_images, opt->train_pairs,
					PairMode::extremes(opt->top, opt->bottom), opt->test_pairs, opt->spec.seed);
			save_pairs_csv(opt->out / "train_pairs.csv", sets.train);
			save_pairs_csv(opt->out / "test_pairs.csv", sets.test);
			std::string ids = "id\n";
			for (const std::string &id : sets.test_ids)
				ids += id + "\n";
			emit(opt->out / "test_images.csv", ids);
			std::cout << "images,train_pairs,test_pairs\n" << images.size() << ',' << sets.train.size() << ',' << sets.test.size() << '\n';
		});
	}

	void add_train_command(CLI::App &app)
	{
		struct Options
		{
				RunConfigBinder binder;
				std::optional<std::size_t> threads;
				std::size_t log_every = 100;
		};
		auto opt = std::make_shared<Options>();
		CLI::App *cmd = app.add_subcommand("train", "Train a siamese model; writes checkpoint.bin, loss.csv, eta_trace.csv, run_config.json");
		opt->binder.attach(*cmd, true);
		add_threads_option(*cmd, opt->threads);
		cmd->add_option("--log-every", opt->log_every, "progress line on stderr every N iterations (0: silent)")->capture_default_str();
		cmd->callback([opt]
		{
			RunConfig rc = opt->binder.resolve();
			if (rc.dataset.empty())
				throw InvalidArgument("--dataset is required");
			if (rc.pairs.empty())
				rc.pairs = rc.dataset / "train_pairs.csv";
			rc.train.threads = resolve_threads(opt->threads);
			rc.model.validate();
			rc.train.validate();

			const PairDataset data = load_pair_dataset(rc.dataset, load_pairs_csv(rc.pairs), side_map_count(rc.model));
			const Model initial = Model::initialize(rc.model, rc.train.seed);
			const std::size_t every = opt->log_every;
			const TrainResult result = train(data, initial, rc.train, [every](std::size_t it, double loss)
			{
				if (every > 0 && it % every == 0)
					std::cerr << "iteration " << it << " loss " << fmt(loss) << '\n';
			});

			fs::create_directories(rc.out);
			save_checkpoint(rc.out / "checkpoint.bin", result.model);
			write_loss_csv(rc.out / "loss.csv", result.loss_curve);
			write_eta_trace_csv(rc.out / "eta_trace.csv", result.trace);
			emit(rc.out / "run_config.json", run_config_to_json(rc));
			const double final_loss = result.loss_curve.empty() ? 0.0 : result.loss_curve.back().loss;
			std::cout << "iterations,final_loss\n" << rc.train.max_iters << ',' << fmt(final_loss) << '\n';
		});
	}

	void add_predict_command(CLI::App &app)
	{
		struct Options
		{
				fs::path checkpoint;
				fs::path dataset;
				fs::path pairs;
				fs::path out;
				std::optional<std::size_t> threads;
		};
		auto opt = std::make_shared<Options>();
		CLI::App *cmd = app.add_subcommand("predict", "Score labeled pairs and report pairwise accuracy");
		cmd->add_option("--checkpoint", opt->checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
		cmd->add_option("--dataset", opt->dataset, "dataset directory holding images/ (and side/)")->required()->check(CLI::ExistingDirectory);
		cmd->add_option("--pairs", opt->pairs, "pairs CSV (default: <dataset>/test_pairs.csv)");
		cmd->add_option("--out", opt->out, "per-pair CSV id_a,id_b,label,logit,correct");
		add_threads_option(*cmd, opt->threads);
		cmd->callback([opt]
		{
			const Model model = load_checkpoint(opt->checkpoint);
			const fs::path pairs_path = opt->pairs.empty() ? opt->dataset / "test_pairs.csv" : opt->pairs;
			const std::vector<LabeledPair> pairs = load_pairs_csv(pairs_path);
			const PairDataset data = load_pair_dataset(opt->dataset, pairs, side_map_count(model.config));
			const PairPrediction pred = predict_pairs(model, data, resolve_threads(opt->threads));
			std::size_t correct = 0;
			std::ostringstream table;
			table << "id_a,id_b,label,logit,correct\n";
			for (std::size_t i = 0; i < pairs.size(); i++)
			{
				const double z = pred.logits[i];
				const bool ok = pairs[i].label == PairLabel::AMoreViral ? z > 0.0 : z < 0.0;
				correct += ok;
				table << pairs[i].id_a << ',' << pairs[i].id_b << ',' << (pairs[i].label == PairLabel::AMoreViral ? 1 : 0) << ',' << fmt(z) << ','
						<< (ok ? 1 : 0) << '\n';
			}
			if (!opt->out.empty())
				emit(opt->out, table.str());
			std::cout << "pairs,correct,accuracy\n" << pairs.size() << ',' << correct << ',' << fmt(pred.accuracy) << '\n';
		});
	}

	void add_map_command(CLI::App &app)
	{
		struct Options
		{
				fs::path checkpoint;
				fs::path image;
				std::vector<fs::path> side;
				std::string mode;
				fs::path out;
				fs::path csv;
				std::size_t size = 0;
				bool no_overlay = false;
		};
		auto opt = std::make_shared<Options>();
		CLI::App *cmd = app.add_subcommand("map", "Render the viraliency map of one image as a PNG heatmap plus raw CSV");
		cmd->add_option("--checkpoint", opt->checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
		cmd->add_option("--image", opt->image, "input image (.png, .ppm)")->required()->check(CLI::ExistingFile);
		cmd->add_option("--side", opt->side, "side maps (.pgm), one per objectness channel, in order")->check(CLI::ExistingFile);
		cmd->add_option("--mode", opt->mode, "pooling support used for the map: gap, gmp, gnap or lena (default: the model's)");
		cmd->add_option("--out", opt->out, "output PNG")->required();
		cmd->add_option("--csv", opt->csv, "raw map CSV (default: --out with .csv)");
		cmd->add_option("--size", opt->size, "heatmap size in pixels (default: the image size)");
		cmd->add_flag("--no-overlay", opt->no_overlay, "heatmap only, without blending over the image");
		cmd->callback([opt]
		{
			const Model model = load_checkpoint(opt->checkpoint);
			const RgbImage rgb = load_image(opt->image);
			const std::size_t k = side_map_count(model.config);
			if (opt->side.size() != k)
				throw InvalidArgument("model expects " + std::to_string(k) + " side maps, got " + std::to_string(opt->side.size()));
			Tensor side;
			if (k > 0)
			{
				const GrayImage first = load_gray(opt->side[0]);
				side = Tensor( { 1, k, first.height, first.width });
				for (std::size_t c = 0; c < k; c++)
				{
					const Tensor plane = gray_to_tensor(load_gray(opt->side[c]));
					if (plane.dim(2) != first.height || plane.dim(3) != first.width)
						throw ShapeError("side maps differ in size");
					std::copy(plane.data().begin(), plane.data().end(), side.plane(0, c).begin());
				}
			}
			const PoolingMode mode = opt->mode.empty() ? model.config.pooling_mode : parse_pooling_mode(opt->mode);
			const ScoreResult s = score(model, image_to_tensor(rgb), k > 0 ? &side : nullptr);
			const ViraliencyMap map = activation_map(s.cache.features, model.classifier, 0, model.etas, mode);
			const Tensor map01 = normalize_map(map);
			const std::size_t h = opt->size ? opt->size : rgb.height;
			const std::size_t w = opt->size ? opt->size : rgb.width;
			save_image(opt->out, render_heatmap(map01, opt->no_overlay ? nullptr : &rgb, h, w));
			fs::path csv = opt->csv;
			if (csv.empty())
				csv = fs::path(opt->out).replace_extension(".csv");
			write_map_csv(csv, map.values);
			std::cout << "score,mode,map_height,map_width\n" << fmt(s.score) << ',' << to_string(mode) << ',' << map.values.dim(0) << ','
					<< map.values.dim(1) << '\n';
		});
	}

	void add_gradcheck_command(CLI::App &app)
	{
		struct Options
		{
				RunConfigBinder binder;
				GradCheckOptions check;
				double tolerance = 1e-5;
				double eta_tolerance = 1e-12;
				fs::path report;
		};
		auto opt = std::make_shared<Options>();
		CLI::App *cmd = app.add_subcommand("gradcheck", "Compare analytic gradients against finite differences on a seeded random pair");
		opt->binder.attach(*cmd, false);
		cmd->add_option("--step", opt->check.step, "finite-difference step")->capture_default_str();
		cmd->add_option("--floor", opt->check.floor, "denominator floor of the relative error")->capture_default_str();
		cmd->add_option("--min-margin", opt->check.min_margin, "required distance from ReLU kinks and rank ties")->capture_default_str();
		cmd->add_option("--max-jitters", opt->check.max_jitters, "input re-draws allowed to reach the margin")->capture_default_str();
		cmd->add_option("--tolerance", opt->tolerance, "max relative error for weights and biases")->capture_default_str();
		cmd->add_option("--eta-tolerance", opt->eta_tolerance, "max relative error for eta")->capture_default_str();
		cmd->add_option("--report", opt->report, "write the report CSV here instead of stdout");
		cmd->callback([opt]
		{
			const RunConfig rc = opt->binder.resolve();
			rc.model.validate();
			const ModelConfig &mc = rc.model;
			Model model = Model::initialize(mc, rc.train.seed);
			Rng rng(rc.train.seed ^ 0x5851f42d4c957f2dULL);
			PairSample sample;
			sample.image_a = Tensor( { 1, mc.input_channels, mc.input_height, mc.input_width });
			sample.image_b = Tensor::zeros_like(sample.image_a);
			// zero-mean pixels keep whole channels from sitting exactly on a ReLU kink
			for (double &v : sample.image_a.data())
				v = rng.uniform(-1.0, 1.0);
			for (double &v : sample.image_b.data())
				v = rng.uniform(-1.0, 1.0);
			if (mc.objectness)
			{
				const auto [fh, fw] = mc.feature_extent();
				for (Tensor *side : { &sample.side_a, &sample.side_b })
				{
					*side = Tensor( { 1, mc.objectness->num_side_maps, fh, fw });
					for (double &v : side->data())
						v = rng.uniform();
				}
			}
			sample.label = rng.uniform() < 0.5 ? PairLabel::AMoreViral : PairLabel::BMoreViral;
			GradCheckOptions check = opt->check;
			check.seed = rc.train.seed;
			const GradCheckReport report = grad_check(model, sample, check);

			std::ostringstream out;
			out << "group,size,max_rel_error,max_abs_error\n";
			for (const GradCheckGroup &g : report.groups)
				out << g.name << ',' << g.size << ',' << fmt(g.max_rel_error) << ',' << fmt(g.max_abs_error) << '\n';
			out << "# margin=" << fmt(report.margin) << " jitters=" << report.jitters << " loss=" << fmt(report.loss) << '\n';
			emit(opt->report, out.str());
			if (report.margin < check.min_margin)
				throw CheckFailed("kink margin " + fmt(report.margin) + " below " + fmt(check.min_margin));
			if (report.worst_weight_error() >= opt->tolerance)
				throw CheckFailed("weight gradient error " + fmt(report.worst_weight_error()) + " >= " + fmt(opt->tolerance));
			if (report.eta_error() > opt->eta_tolerance)
				throw CheckFailed("eta gradient error " + fmt(report.eta_error()) + " > " + fmt(opt->eta_tolerance));
		});
	}

	void add_eval_local_command(CLI::App &app)
	{
		struct Options
		{
				fs::path checkpoint;
				fs::path dataset;
				fs::path images;
				std::size_t top = 50;
				double threshold = 0.5;
				std::string mode;
				fs::path out;
		};
		auto opt = std::make_shared<Options>();
		CLI::App *cmd = app.add_subcommand("eval-local", "Pixel precision/recall of thresholded viraliency maps on the most viral images");
		cmd->add_option("--checkpoint", opt->checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
		cmd->add_option("--dataset", opt->dataset, "dataset directory with images/, masks/ and metadata.csv")->required()->check(
				CLI::ExistingDirectory);
		cmd->add_option("--images", opt->images, "CSV of candidate ids (default: <dataset>/test_images.csv)");
		cmd->add_option("--top", opt->top, "evaluate the N most viral candidates")->capture_default_str();
		cmd->add_option("--threshold", opt->threshold, "map threshold after min-max normalization")->capture_default_str();
		cmd->add_option("--mode", opt->mode, "pooling support used for the maps (default: the model's)");
		cmd->add_option("--out", opt->out, "write the table here instead of stdout");
		cmd->callback([opt]
		{
			const Model model = load_checkpoint(opt->checkpoint);
			const PoolingMode mode = opt->mode.empty() ? model.config.pooling_mode : parse_pooling_mode(opt->mode);
			const std::vector<std::string> candidates = read_id_list(opt->images.empty() ? opt->dataset / "test_images.csv" : opt->images);
			std::map<std::string, double> virality;
			for (const ScoredImage &s : score_records(load_metadata_csv(opt->dataset / "metadata.csv")))
				virality[s.id] = s.virality;
			std::vector<std::pair<double, std::string>> ranked;
			for (const std::string &id : candidates)
			{
				const auto it = virality.find(id);
				if (it == virality.end())
					throw InvalidArgument("image " + id + " has no metadata row");
				ranked.emplace_back(it->second, id);
			}
			std::stable_sort(ranked.begin(), ranked.end(), [](const auto &x, const auto &y)
			{	return x.first > y.first;});
			if (ranked.size() > opt->top)
				ranked.resize(opt->top);

			const std::size_t k = side_map_count(model.config);
			std::vector<LocalizationScore> scores;
			std::ostringstream out;
			out << "id,virality,precision,recall,true_positives,false_positives,false_negatives\n";
			for (const auto &[v, id] : ranked)
			{
				const Tensor side = load_side_maps(opt->dataset, id, k);
				const ScoreResult s = score(model, image_to_tensor(load_image(opt->dataset / "images" / (id + ".png"))), k > 0 ? &side : nullptr);
				const Tensor map01 = normalize_map(activation_map(s.cache.features, model.classifier, 0, model.etas, mode));
				const LocalizationScore ls = localization_pr(map01, load_mask(opt->dataset / "masks" / (id + ".pgm")), opt->threshold);
				scores.push_back(ls);
				out << id << ',' << fmt(v) << ',' << fmt(ls.precision) << ',' << fmt(ls.recall) << ',' << ls.true_positives << ','
						<< ls.false_positives << ',' << ls.false_negatives << '\n';
			}
			const LocalizationScore pooled = pool_scores(scores);
			out << "pooled,," << fmt(pooled.precision) << ',' << fmt(pooled.recall) << ',' << pooled.true_positives << ','
					<< pooled.false_positives << ',' << pooled.false_negatives << '\n';
			emit(opt->out, out.str());
			if (!opt->out.empty())
				std::cout << "images,precision,recall\n" << scores.size() << ',' << fmt(pooled.precision) << ',' << fmt(pooled.recall) << '\n';
		});
	}

	void add_eta_hist_command(CLI::App &app)
	{
		struct Options
		{
				fs::path trace;
				std::size_t bins = 10;
				fs::path out;
		};
		auto opt = std::make_shared<Options>();
		CLI::App *cmd = app.add_subcommand("eta-hist", "Histogram of the final eta values of a training trace");
		cmd->add_option("--trace", opt->trace, "eta_trace.csv written by train")->required()->check(CLI::ExistingFile);
		cmd->add_option("--bins", opt->bins, "equal-width bins over [0, 1]; the last bin includes 1")->capture_default_str()->check(
				CLI::PositiveNumber);
		cmd->add_option("--out", opt->out, "write the histogram here instead of stdout");
		cmd->callback([opt]
		{
			const EtaTrace trace = read_eta_trace_csv(opt->trace);
			if (trace.snapshots.empty())
				throw InvalidArgument(opt->trace.string() + " holds no snapshots");
			const EtaVector &last = trace.snapshots.back();
			const std::size_t bins = opt->bins;
			auto edge = [bins](std::size_t i)
			{	return static_cast<double>(i) / static_cast<double>(bins);};
			std::vector<std::size_t> counts(bins, 0);
			for (double e : last.values())
			{
				std::size_t b = std::min(bins - 1, static_cast<std::size_t>(e * static_cast<double>(bins)));
				while (b > 0 && e < edge(b))
					b--;
				while (b + 1 < bins && e >= edge(b + 1))
					b++;
				counts[b]++;
			}
			std::ostringstream out;
			out << "bin_lo,bin_hi,count,mass\n";
			for (std::size_t b = 0; b < bins; b++)
				out << fmt(edge(b)) << ',' << fmt(edge(b + 1)) << ',' << counts[b] << ','
						<< fmt(last.size() ? static_cast<double>(counts[b]) / static_cast<double>(last.size()) : 0.0) << '\n';
			emit(opt->out, out.str());
		});
	}

	void add_bench_command(CLI::App &app)
	{
		struct Options
		{
				std::size_t channels = 512;
				std::size_t size = 13;
				std::string scaling = "64,128,256,512,1024";
				std::size_t reps = 20;
				std::size_t rounds = 7;
				std::uint64_t seed = 1;
				fs::path out;
		};
		auto opt = std::make_shared<Options>();
		CLI::App *cmd = app.add_subcommand("bench", "Time pooling forward+backward per mode, and LENA against GMP as the channel count grows");
		cmd->add_option("--channels", opt->channels, "channels for the per-mode comparison")->capture_default_str();
		cmd->add_option("--size", opt->size, "feature map height and width")->capture_default_str();
		cmd->add_option("--scaling", opt->scaling, "comma-separated channel counts for the scaling rows (empty: none)")->capture_default_str();
		cmd->add_option("--reps", opt->reps, "calls per timing round")->capture_default_str()->check(CLI::PositiveNumber);
		cmd->add_option("--rounds", opt->rounds, "timing rounds; the fastest is kept")->capture_default_str()->check(CLI::PositiveNumber);
		cmd->add_option("--seed", opt->seed, "seed for the random features and etas")->capture_default_str();
		cmd->add_option("--out", opt->out, "write the CSV here instead of stdout");
		cmd->callback([opt]
		{
			auto time_mode = [&](PoolingMode mode, std::size_t channels)
			{
				Rng rng(opt->seed);
				Tensor features( { 1, channels, opt->size, opt->size });
				for (double &v : features.data())
					v = rng.normal();
				std::vector<double> eta_values(channels), grad(channels);
				for (std::size_t l = 0; l < channels; l++)
				{
					eta_values[l] = rng.uniform();
					grad[l] = rng.normal();
				}
				const EtaVector etas(eta_values);
				double sink = 0.0;
				auto once = [&]
				{
					const PoolResult r = pool_forward(mode, features, etas);
					const Tensor g = lena_backward_features(r, grad, features.shape());
					sink += g[0];
					if (mode == PoolingMode::Lena)
						sink += lena_eta_grad(r, grad)[0];
				};
				once();
				double best = 1e300;
				for (std::size_t round = 0; round < opt->rounds; round++)
				{
					const auto t0 = std::chrono::steady_clock::now();
					for (std::size_t i = 0; i < opt->reps; i++)
						once();
					const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
					best = std::min(best, dt / static_cast<double>(opt->reps));
				}
				if (!std::isfinite(sink))
					throw NumericError("benchmark produced a non-finite checksum");
				return best;
			};

			std::ostringstream out;
			out << "section,mode,channels,height,width,seconds,ratio_to_gmp\n";
			const double gmp = time_mode(PoolingMode::Gmp, opt->channels);
			for (PoolingMode mode : { PoolingMode::Gmp, PoolingMode::Gap, PoolingMode::Gnap, PoolingMode::Lena })
			{
				const double t = mode == PoolingMode::Gmp ? gmp : time_mode(mode, opt->channels);
				out << "modes," << to_string(mode) << ',' << opt->channels << ',' << opt->size << ',' << opt->size << ',' << fmt(t) << ','
						<< fmt(t / gmp) << '\n';
			}
			std::istringstream list(opt->scaling);
			std::string item;
			while (std::getline(list, item, ','))
			{
				std::size_t channels = 0;
				const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), channels);
				if (ec != std::errc() || ptr != item.data() + item.size() || channels == 0)
					throw InvalidArgument("--scaling: bad channel count '" + item + "'");
				const double g = time_mode(PoolingMode::Gmp, channels);
				const double t = time_mode(PoolingMode::Lena, channels);
				out << "scaling,gmp," << channels << ',' << opt->size << ',' << opt->size << ',' << fmt(g) << ",1\n";
				out << "scaling,lena," << channels << ',' << opt->size << ',' << opt->size << ',' << fmt(t) << ',' << fmt(t / g) << '\n';
			}
			emit(opt->out, out.str());
		});
	}
}
