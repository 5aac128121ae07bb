#include <lena/error.hpp>
#include <lena/random.hpp>
#include <lena/siamese.hpp>

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace lena
{
	namespace
	{
		using json = nlohmann::json;

		constexpr std::string_view checkpoint_magic = "LENACKPT";
		constexpr std::uint32_t checkpoint_version = 1;

		void check_keys(const json &object, std::initializer_list<std::string_view> allowed, const std::string &where)
		{
			if (!object.is_object())
				throw ParseError(where + " must be a JSON object");
			for (const auto &[key, value] : object.items())
				if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
					throw ParseError("unknown key '" + key + "' in " + where);
		}

		void add_into(std::span<double> dst, std::span<const double> src)
		{
			for (std::size_t i = 0; i < dst.size(); i++)
				dst[i] += src[i];
		}

		void require_finite(const Tensor &t, const std::string &stage)
		{
			if (!t.all_finite())
				throw NumericError("non-finite activations after " + stage);
		}

		// features (1,L,h,w) followed by the side maps (1,K,h',w') resized to h x w
		Tensor join_side(const Tensor &features, const Tensor &side)
		{
			const std::size_t h = features.dim(2), w = features.dim(3);
			const Tensor resized = bilinear_resize(side, h, w);
			Tensor joined( { 1, features.dim(1) + side.dim(1), h, w });
			std::copy(features.data().begin(), features.data().end(), joined.data().begin());
			std::copy(resized.data().begin(), resized.data().end(), joined.data().begin() + static_cast<std::ptrdiff_t>(features.size()));
			return joined;
		}

		class Writer
		{
			public:
				void u32(std::uint32_t v)
				{
					for (int i = 0; i < 4; i++)
						m_out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
				}
				void u64(std::uint64_t v)
				{
					for (int i = 0; i < 8; i++)
						m_out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
				}
				void bytes(std::string_view s) { m_out.append(s); }
				void tensor(const std::string &name, std::span<const std::size_t> shape, std::span<const double> values)
				{
					u32(static_cast<std::uint32_t>(name.size()));
					bytes(name);
					u32(static_cast<std::uint32_t>(shape.size()));
					for (std::size_t d : shape)
						u64(d);
					for (double v : values)
						u64(std::bit_cast<std::uint64_t>(v));
				}
				std::string take() { return std::move(m_out); }

			private:
				std::string m_out;
		};

		class Reader
		{
			public:
				Reader(std::string_view data, const std::string &name) :
						m_data(data),
						m_name(name)
				{
				}
				std::uint64_t uint(int width)
				{
					need(width);
					std::uint64_t v = 0;
					for (int i = 0; i < width; i++)
						v |= static_cast<std::uint64_t>(static_cast<unsigned char>(m_data[m_pos + i])) << (8 * i);
					m_pos += width;
					return v;
				}
				std::string_view bytes(std::size_t n)
				{
					need(n);
					const std::string_view s = m_data.substr(m_pos, n);
					m_pos += n;
					return s;
				}
				bool done() const noexcept { return m_pos == m_data.size(); }
				[[noreturn]] void fail(const std::string &what) const
				{
					throw ParseError(m_name + ": byte " + std::to_string(m_pos) + ": " + what);
				}

			private:
				void need(std::size_t n) const
				{
					if (m_data.size() - m_pos < n)
						fail("truncated checkpoint");
				}
				std::string_view m_data;
				std::string m_name;
				std::size_t m_pos = 0;
		};

		struct TensorSlot
		{
				std::vector<std::size_t> shape;
				std::span<double> values;
		};

		std::vector<std::pair<std::string, TensorSlot>> tensor_slots(Model &model)
		{
			std::vector<std::pair<std::string, TensorSlot>> slots;
			for (NamedSpan &p : model.parameters())
			{
				std::vector<std::size_t> shape { p.values.size() };
				if (p.name.ends_with(".weight"))
				{
					const std::string prefix = p.name.substr(0, p.name.size() - 7);
					if (prefix == "ip")
						shape = model.classifier.weights.shape();
					else if (prefix == "fusion")
						shape = model.fusion->weights.shape();
					else
						shape = model.convs[std::stoul(prefix.substr(4))].weights.shape();
				}
				slots.push_back( { p.name, { shape, p.values } });
			}
			return slots;
		}
	}

	void ModelConfig::validate() const
	{
		if (input_channels == 0 || input_height == 0 || input_width == 0)
			throw InvalidArgument("input shape must be positive");
		if (conv_layers.empty())
			throw InvalidArgument("model needs at least one conv layer");
		for (std::size_t i = 0; i < conv_layers.size(); i++)
			if (conv_layers[i].out_channels == 0 || conv_layers[i].kernel == 0 || conv_layers[i].stride == 0)
				throw InvalidArgument("conv layer " + std::to_string(i) + " needs positive channels, kernel and stride");
		if (output_dim != 1)
			throw InvalidArgument("output_dim must be 1 (a single virality score), got " + std::to_string(output_dim));
		const std::size_t channels = conv_layers.back().out_channels;
		if (eta_init.size() != 1 && eta_init.size() != channels)
			throw InvalidArgument("eta_init has " + std::to_string(eta_init.size()) + " values for " + std::to_string(channels)
					+ " channels");
		for (double e : eta_init)
			if (!(e >= 0.0 && e <= 1.0))
				throw InvalidArgument("eta_init values must lie in [0, 1]");
		if (input_mean.size() > 1 && input_mean.size() != input_channels)
			throw InvalidArgument("input_mean has " + std::to_string(input_mean.size()) + " values for " + std::to_string(input_channels)
					+ " input channels");
		for (double m : input_mean)
			if (!std::isfinite(m))
				throw InvalidArgument("input_mean values must be finite");
		if (objectness)
		{
			if (objectness->num_side_maps == 0)
				throw InvalidArgument("objectness needs at least one side map");
			if (objectness->fusion_kernel % 2 == 0)
				throw InvalidArgument("fusion kernel must be odd, got " + std::to_string(objectness->fusion_kernel));
		}
		feature_extent();
	}

	std::size_t ModelConfig::feature_channels() const
	{
		if (conv_layers.empty())
			throw InvalidArgument("model needs at least one conv layer");
		return conv_layers.back().out_channels;
	}

	std::pair<std::size_t, std::size_t> ModelConfig::feature_extent() const
	{
		std::size_t h = input_height, w = input_width;
		for (const ConvLayerSpec &c : conv_layers)
		{
			h = conv_output_extent(h, c.kernel, c.stride, c.padding);
			w = conv_output_extent(w, c.kernel, c.stride, c.padding);
		}
		return { h, w };
	}

	std::string config_to_json(const ModelConfig &config)
	{
		json j;
		j["input_channels"] = config.input_channels;
		j["input_height"] = config.input_height;
		j["input_width"] = config.input_width;
		j["conv_layers"] = json::array();
		for (const ConvLayerSpec &c : config.conv_layers)
			j["conv_layers"].push_back( { { "out_channels", c.out_channels }, { "kernel", c.kernel }, { "stride", c.stride }, { "padding",
					c.padding } });
		j["pooling_mode"] = std::string(to_string(config.pooling_mode));
		j["eta_init"] = config.eta_init;
		j["output_dim"] = config.output_dim;
		j["relu"] = config.relu;
		j["input_mean"] = config.input_mean;
		if (config.objectness)
			j["objectness"] = { { "num_side_maps", config.objectness->num_side_maps }, { "fusion_kernel", config.objectness->fusion_kernel } };
		else
			j["objectness"] = nullptr;
		return j.dump();
	}

	ModelConfig config_from_json(std::string_view text)
	{
		ModelConfig config;
		try
		{
			const json j = json::parse(text);
			check_keys(j, { "input_channels", "input_height", "input_width", "conv_layers", "pooling_mode", "eta_init", "output_dim", "relu",
					"input_mean", "objectness" }, "model config");
			config.input_channels = j.value("input_channels", config.input_channels);
			config.input_height = j.value("input_height", config.input_height);
			config.input_width = j.value("input_width", config.input_width);
			if (j.contains("conv_layers"))
				for (const json &c : j.at("conv_layers"))
				{
					check_keys(c, { "out_channels", "kernel", "stride", "padding" }, "conv layer");
					ConvLayerSpec spec;
					spec.out_channels = c.value("out_channels", spec.out_channels);
					spec.kernel = c.value("kernel", spec.kernel);
					spec.stride = c.value("stride", spec.stride);
					spec.padding = c.value("padding", spec.padding);
					config.conv_layers.push_back(spec);
				}
			if (j.contains("pooling_mode"))
				config.pooling_mode = parse_pooling_mode(j.at("pooling_mode").get<std::string>());
			if (j.contains("eta_init"))
				config.eta_init = j.at("eta_init").is_array() ? j.at("eta_init").get<std::vector<double>>() : std::vector<double> {
						j.at("eta_init").get<double>() };
			config.output_dim = j.value("output_dim", config.output_dim);
			config.relu = j.value("relu", config.relu);
			if (j.contains("input_mean"))
				config.input_mean = j.at("input_mean").is_array() ? j.at("input_mean").get<std::vector<double>>() : std::vector<double> {
						j.at("input_mean").get<double>() };
			if (j.contains("objectness") && !j.at("objectness").is_null())
			{
				const json &o = j.at("objectness");
				check_keys(o, { "num_side_maps", "fusion_kernel" }, "objectness");
				ObjectnessSpec spec;
				spec.num_side_maps = o.value("num_side_maps", spec.num_side_maps);
				spec.fusion_kernel = o.value("fusion_kernel", spec.fusion_kernel);
				config.objectness = spec;
			}
		} catch (const json::exception &e)
		{
			throw ParseError(std::string("model config: ") + e.what());
		}
		config.validate();
		return config;
	}

	Model Model::initialize(const ModelConfig &config, std::uint64_t seed)
	{
		config.validate();
		Model model;
		model.config = config;
		Rng rng(seed);
		auto he_uniform = [&](std::vector<std::size_t> shape, std::size_t fan_in)
		{
			Tensor t(std::move(shape));
			const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
			for (double &x : t.data())
				x = rng.uniform(-bound, bound);
			return t;
		};

		std::size_t channels = config.input_channels;
		for (const ConvLayerSpec &c : config.conv_layers)
		{
			ConvParams p;
			p.weights = he_uniform( { c.out_channels, channels, c.kernel, c.kernel }, channels * c.kernel * c.kernel);
			p.bias.assign(c.out_channels, 0.0);
			p.stride = c.stride;
			p.padding = c.padding;
			model.convs.push_back(std::move(p));
			channels = c.out_channels;
		}
		if (config.objectness)
		{
			const std::size_t k = config.objectness->fusion_kernel, in = channels + config.objectness->num_side_maps;
			ConvParams p;
			p.weights = he_uniform( { channels, in, k, k }, in * k * k);
			p.bias.assign(channels, 0.0);
			p.padding = (k - 1) / 2;
			model.fusion = std::move(p);
		}
		model.classifier.weights = he_uniform( { config.output_dim, channels }, channels);
		model.classifier.bias.assign(config.output_dim, 0.0);
		model.etas = config.eta_init.size() == 1 ? EtaVector::filled(channels, config.eta_init[0]) : EtaVector(config.eta_init);
		return model;
	}

	std::vector<NamedSpan> Model::parameters()
	{
		std::vector<NamedSpan> out;
		for (std::size_t i = 0; i < convs.size(); i++)
		{
			out.push_back( { "conv" + std::to_string(i) + ".weight", convs[i].weights.data() });
			out.push_back( { "conv" + std::to_string(i) + ".bias", convs[i].bias });
		}
		if (fusion)
		{
			out.push_back( { "fusion.weight", fusion->weights.data() });
			out.push_back( { "fusion.bias", fusion->bias });
		}
		out.push_back( { "ip.weight", classifier.weights.data() });
		out.push_back( { "ip.bias", classifier.bias });
		return out;
	}

	std::size_t Model::parameter_count() const
	{
		std::size_t n = classifier.weights.size() + classifier.bias.size() + etas.size();
		for (const ConvParams &c : convs)
			n += c.weights.size() + c.bias.size();
		if (fusion)
			n += fusion->weights.size() + fusion->bias.size();
		return n;
	}

	bool Model::operator==(const Model &other) const
	{
		if (config != other.config || convs.size() != other.convs.size() || fusion.has_value() != other.fusion.has_value() || etas != other.etas)
			return false;
		auto same = [](const ConvParams &a, const ConvParams &b)
		{
			return bitwise_equal(a.weights, b.weights) && bitwise_equal(std::span<const double>(a.bias), std::span<const double>(b.bias))
					&& a.stride == b.stride && a.padding == b.padding;
		};
		for (std::size_t i = 0; i < convs.size(); i++)
			if (!same(convs[i], other.convs[i]))
				return false;
		if (fusion && !same(*fusion, *other.fusion))
			return false;
		return bitwise_equal(classifier.weights, other.classifier.weights)
				&& bitwise_equal(std::span<const double>(classifier.bias), std::span<const double>(other.classifier.bias));
	}

	ModelGrads ModelGrads::zeros_like(const Model &model)
	{
		ModelGrads g;
		for (const ConvParams &c : model.convs)
		{
			g.conv_weights.push_back(Tensor::zeros_like(c.weights));
			g.conv_bias.emplace_back(c.bias.size(), 0.0);
		}
		if (model.fusion)
		{
			g.fusion_weights = Tensor::zeros_like(model.fusion->weights);
			g.fusion_bias.assign(model.fusion->bias.size(), 0.0);
		}
		g.classifier_weights = Tensor::zeros_like(model.classifier.weights);
		g.classifier_bias.assign(model.classifier.bias.size(), 0.0);
		g.eta.assign(model.etas.size(), 0.0);
		return g;
	}

	std::vector<NamedSpan> ModelGrads::parameters()
	{
		std::vector<NamedSpan> out;
		for (std::size_t i = 0; i < conv_weights.size(); i++)
		{
			out.push_back( { "conv" + std::to_string(i) + ".weight", conv_weights[i].data() });
			out.push_back( { "conv" + std::to_string(i) + ".bias", conv_bias[i] });
		}
		if (fusion_weights.size() > 0)
		{
			out.push_back( { "fusion.weight", fusion_weights.data() });
			out.push_back( { "fusion.bias", fusion_bias });
		}
		out.push_back( { "ip.weight", classifier_weights.data() });
		out.push_back( { "ip.bias", classifier_bias });
		return out;
	}

	void ModelGrads::accumulate(const ModelGrads &other)
	{
		if (conv_weights.size() != other.conv_weights.size() || eta.size() != other.eta.size())
			throw ShapeError("cannot accumulate gradients of different models");
		for (std::size_t i = 0; i < conv_weights.size(); i++)
		{
			add_into(conv_weights[i].data(), other.conv_weights[i].data());
			add_into(conv_bias[i], other.conv_bias[i]);
		}
		if (fusion_weights.size() > 0)
		{
			add_into(fusion_weights.data(), other.fusion_weights.data());
			add_into(fusion_bias, other.fusion_bias);
		}
		add_into(classifier_weights.data(), other.classifier_weights.data());
		add_into(classifier_bias, other.classifier_bias);
		add_into(eta, other.eta);
	}

	void ModelGrads::scale(double factor)
	{
		for (NamedSpan &p : parameters())
			for (double &x : p.values)
				x *= factor;
		for (double &x : eta)
			x *= factor;
	}

	Tensor fuse_objectness(const Tensor &features, const Tensor &side, const ConvParams &fusion)
	{
		if (features.rank() != 4 || features.dim(0) != 1 || side.rank() != 4 || side.dim(0) != 1)
			throw ShapeError("fusion expects (1,L,h,w) features and (1,K,h',w') side maps, got " + features.shape_string() + " and "
					+ side.shape_string());
		const std::size_t channels = features.dim(1);
		if (fusion.in_channels() != channels + side.dim(1) || fusion.out_channels() != channels)
			throw ShapeError("fusion weights " + fusion.weights.shape_string() + " do not map " + std::to_string(channels) + "+"
					+ std::to_string(side.dim(1)) + " channels to " + std::to_string(channels));
		return relu_forward(conv2d_forward(join_side(features, side), fusion));
	}

	ScoreResult score(const Model &model, const Tensor &image, const Tensor *side)
	{
		const ModelConfig &cfg = model.config;
		const std::vector<std::size_t> expected { 1, cfg.input_channels, cfg.input_height, cfg.input_width };
		if (image.shape() != expected)
			throw ShapeError("image " + image.shape_string() + " does not match the model input " + shape_string(expected));
		if (!image.all_finite())
			throw NumericError("input image contains non-finite values");

		ScoreResult result;
		BranchCache &cache = result.cache;
		cache.model = &model;
		cache.generation = model.generation();
		Tensor x = image;
		if (!cfg.input_mean.empty())
		{
			const std::size_t plane = cfg.input_height * cfg.input_width;
			const std::span<double> data = x.data();
			for (std::size_t c = 0; c < cfg.input_channels; c++)
			{
				const double m = cfg.input_mean.size() == 1 ? cfg.input_mean[0] : cfg.input_mean[c];
				for (std::size_t i = 0; i < plane; i++)
					data[c * plane + i] -= m;
			}
		}
		for (std::size_t i = 0; i < model.convs.size(); i++)
		{
			Tensor y = conv2d_forward(x, model.convs[i]);
			require_finite(y, "conv" + std::to_string(i));
			cache.conv_inputs.push_back(std::move(x));
			x = cfg.relu ? relu_forward(y) : y;
			cache.conv_outputs.push_back(std::move(y));
		}
		if (model.fusion)
		{
			const std::size_t k = cfg.objectness->num_side_maps;
			if (!side || side->rank() != 4 || side->dim(0) != 1 || side->dim(1) != k)
				throw ShapeError("model fuses " + std::to_string(k) + " side maps but got " + (side ? side->shape_string() : "none"));
			cache.fusion_input = join_side(x, *side);
			cache.fusion_output = conv2d_forward(cache.fusion_input, *model.fusion);
			require_finite(cache.fusion_output, "fusion");
			x = relu_forward(cache.fusion_output);
		}
		else if (side && side->size() > 0)
			throw ShapeError("side maps given to a model without objectness fusion");
		cache.features = std::move(x);
		cache.pooled = pool_forward(cfg.pooling_mode, cache.features, model.etas);
		cache.outputs = inner_product_forward(cache.pooled.pooled, model.classifier);
		result.score = cache.outputs[0];
		if (!std::isfinite(result.score))
			throw NumericError("non-finite score");
		return result;
	}

	PairForward pair_forward(const Model &model, const Tensor &image_a, const Tensor &image_b, const Tensor *side_a, const Tensor *side_b)
	{
		ScoreResult a = score(model, image_a, side_a);
		ScoreResult b = score(model, image_b, side_b);
		PairForward out;
		out.logit = a.score - b.score;
		out.a = std::move(a.cache);
		out.b = std::move(b.cache);
		return out;
	}

	PairForward pair_forward(const Model &model, const PairSample &sample)
	{
		if (model.fusion)
			return pair_forward(model, sample.image_a, sample.image_b, &sample.side_a, &sample.side_b);
		return pair_forward(model, sample.image_a, sample.image_b);
	}

	double pair_logit(const Model &model, const PairSample &sample)
	{
		return pair_forward(model, sample).logit;
	}

	LossValue pair_loss(double logit, PairLabel label) noexcept
	{
		auto softplus = [](double z)
		{
			return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
		};
		auto sigmoid = [](double z)
		{
			if (z >= 0.0)
				return 1.0 / (1.0 + std::exp(-z));
			const double e = std::exp(z);
			return e / (1.0 + e);
		};
		if (label == PairLabel::AMoreViral)
			return { softplus(-logit), -sigmoid(-logit) };
		return { softplus(logit), sigmoid(logit) };
	}

	void branch_backward(const Model &model, const BranchCache &cache, double grad_score, ModelGrads &grads)
	{
		if (cache.model != &model || cache.generation != model.generation())
			throw InvalidArgument("stale cache: the model changed after this forward pass");
		std::vector<double> grad_out(model.classifier.outputs(), 0.0);
		grad_out[0] = grad_score;
		const InnerProductGrads ip = inner_product_backward(cache.pooled.pooled, model.classifier, grad_out);
		add_into(grads.classifier_weights.data(), ip.grad_weights.data());
		add_into(grads.classifier_bias, ip.grad_bias);
		if (model.config.pooling_mode == PoolingMode::Lena)
			add_into(grads.eta, lena_eta_grad(cache.pooled, ip.grad_input));

		Tensor grad = lena_backward_features(cache.pooled, ip.grad_input, cache.features.shape());
		if (model.fusion)
		{
			const ConvGrads fg = conv2d_backward(cache.fusion_input, *model.fusion, relu_backward(cache.fusion_output, grad));
			add_into(grads.fusion_weights.data(), fg.grad_weights.data());
			add_into(grads.fusion_bias, fg.grad_bias);
			Tensor trimmed(cache.features.shape());
			std::copy_n(fg.grad_input.data().begin(), trimmed.size(), trimmed.data().begin());
			grad = std::move(trimmed);
		}
		for (std::size_t i = model.convs.size(); i-- > 0;)
		{
			const Tensor local = model.config.relu ? relu_backward(cache.conv_outputs[i], grad) : grad;
			ConvGrads cg = conv2d_backward(cache.conv_inputs[i], model.convs[i], local, i > 0);
			add_into(grads.conv_weights[i].data(), cg.grad_weights.data());
			add_into(grads.conv_bias[i], cg.grad_bias);
			grad = std::move(cg.grad_input);
		}
	}

	ModelGrads pair_backward(const Model &model, const PairForward &forward, double grad_logit)
	{
		ModelGrads a = ModelGrads::zeros_like(model);
		ModelGrads b = ModelGrads::zeros_like(model);
		branch_backward(model, forward.a, grad_logit, a);
		branch_backward(model, forward.b, -grad_logit, b);
		a.accumulate(b);
		return a;
	}

	std::string encode_checkpoint(const Model &model)
	{
		Model copy = model;
		Writer w;
		w.bytes(checkpoint_magic);
		w.u32(checkpoint_version);
		const std::string config = config_to_json(model.config);
		w.u64(config.size());
		w.bytes(config);
		const auto slots = tensor_slots(copy);
		w.u32(static_cast<std::uint32_t>(slots.size() + 1));
		for (const auto &[name, slot] : slots)
			w.tensor(name, slot.shape, slot.values);
		const std::vector<std::size_t> eta_shape { model.etas.size() };
		w.tensor("eta", eta_shape, model.etas.values());
		return w.take();
	}

	Model decode_checkpoint(std::string_view bytes, const std::string &name)
	{
		Reader r(bytes, name);
		if (r.bytes(checkpoint_magic.size()) != checkpoint_magic)
			r.fail("not a checkpoint (bad magic)");
		if (const std::uint64_t version = r.uint(4); version != checkpoint_version)
			r.fail("unsupported checkpoint version " + std::to_string(version));
		const std::uint64_t config_size = r.uint(8);
		Model model = Model::initialize(config_from_json(r.bytes(config_size)), 0);
		auto slots = tensor_slots(model);
		const std::uint64_t count = r.uint(4);
		if (count != slots.size() + 1)
			r.fail("expected " + std::to_string(slots.size() + 1) + " tensors, found " + std::to_string(count));
		std::set<std::string> seen;
		std::vector<double> etas;
		for (std::uint64_t t = 0; t < count; t++)
		{
			const std::string tensor_name(r.bytes(r.uint(4)));
			if (!seen.insert(tensor_name).second)
				r.fail("duplicate tensor '" + tensor_name + "'");
			std::vector<std::size_t> shape(r.uint(4));
			for (std::size_t &d : shape)
				d = r.uint(8);
			std::span<double> target;
			std::vector<std::size_t> expected;
			if (tensor_name == "eta")
			{
				expected = { model.etas.size() };
				etas.resize(model.etas.size());
				target = etas;
			}
			else
			{
				const auto it = std::find_if(slots.begin(), slots.end(), [&](const auto &s)
				{	return s.first == tensor_name;});
				if (it == slots.end())
					r.fail("unexpected tensor '" + tensor_name + "'");
				expected = it->second.shape;
				target = it->second.values;
			}
			if (shape != expected)
				r.fail("tensor '" + tensor_name + "' has shape " + shape_string(shape) + ", expected " + shape_string(expected));
			for (double &v : target)
				v = std::bit_cast<double>(r.uint(8));
		}
		if (!r.done())
			r.fail("trailing bytes after the last tensor");
		try
		{
			model.etas = EtaVector(std::move(etas));
		} catch (const InvalidArgument &e)
		{
			r.fail(e.what());
		}
		for (NamedSpan &p : model.parameters())
			for (double v : p.values)
				if (!std::isfinite(v))
					r.fail("tensor '" + p.name + "' holds non-finite values");
		return model;
	}

	void save_checkpoint(const std::filesystem::path &path, const Model &model)
	{
		const std::string bytes = encode_checkpoint(model);
		std::ofstream out(path, std::ios::binary | std::ios::trunc);
		if (!out)
			throw IoError("cannot open " + path.string() + " for writing");
		out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
		if (!out)
			throw IoError("failed writing " + path.string());
	}

	Model load_checkpoint(const std::filesystem::path &path)
	{
		std::ifstream in(path, std::ios::binary);
		if (!in)
			throw IoError("cannot open checkpoint " + path.string());
		std::ostringstream buffer;
		buffer << in.rdbuf();
		return decode_checkpoint(buffer.str(), path.string());
	}
}
