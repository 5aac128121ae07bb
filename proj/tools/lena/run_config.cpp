#include "run_config.hpp"

#include <lena/error.hpp>

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

namespace lena::cli
{
	namespace
	{
		using json = nlohmann::json;

		struct Key
		{
				std::string name;
				std::string help;
				bool is_path;
				std::function<void(RunConfig&, const std::string&)> apply;
				std::function<std::string(const RunConfig&)> show;
		};

		std::string flag_name(const std::string &key)
		{
			std::string flag = "--" + key;
			std::replace(flag.begin(), flag.end(), '_', '-');
			return flag;
		}

		template<typename T>
		T parse_number(const std::string &key, const std::string &text)
		{
			T value { };
			const char *end = text.data() + text.size();
			const auto [ptr, ec] = std::from_chars(text.data(), end, value);
			if (text.empty() || ec != std::errc() || ptr != end)
				throw ParseError(key + ": expected a number, got '" + text + "'");
			return value;
		}

		bool parse_bool(const std::string &key, const std::string &text)
		{
			if (text == "true" || text == "1")
				return true;
			if (text == "false" || text == "0")
				return false;
			throw ParseError(key + ": expected true or false, got '" + text + "'");
		}

		std::string show_double(double v)
		{
			char buf[32];
			const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
			return std::string(buf, end);
		}

		std::vector<std::string> split(const std::string &text, char sep)
		{
			std::vector<std::string> parts;
			std::string part;
			std::istringstream in(text);
			while (std::getline(in, part, sep))
				parts.push_back(part);
			if (!text.empty() && text.back() == sep)
				parts.push_back("");
			return parts;
		}

		const std::vector<Key>& key_table()
		{
			static const std::vector<Key> table = []
			{
				std::vector<Key> k;
				auto size_key = [&](std::string name, std::string help, std::function<std::size_t&(RunConfig&)> field)
				{
					k.push_back( { name, std::move(help), false, [name, field](RunConfig &c, const std::string &v)
					{	field(c) = parse_number<std::size_t>(name, v);}, [field](const RunConfig &c)
					{	return std::to_string(field(const_cast<RunConfig&>(c)));} });
				};
				auto real_key = [&](std::string name, std::string help, std::function<double&(RunConfig&)> field)
				{
					k.push_back( { name, std::move(help), false, [name, field](RunConfig &c, const std::string &v)
					{	field(c) = parse_number<double>(name, v);}, [field](const RunConfig &c)
					{	return show_double(field(const_cast<RunConfig&>(c)));} });
				};

				size_key("input_channels", "image channels", [](RunConfig &c) -> std::size_t&
				{	return c.model.input_channels;});
				size_key("input_height", "image height in pixels", [](RunConfig &c) -> std::size_t&
				{	return c.model.input_height;});
				size_key("input_width", "image width in pixels", [](RunConfig &c) -> std::size_t&
				{	return c.model.input_width;});
				k.push_back( { "conv_layers", "conv stack as out:kernel:stride:padding,...", false, [](RunConfig &c, const std::string &v)
				{	c.model.conv_layers = parse_conv_layers(v);}, [](const RunConfig &c)
				{	return format_conv_layers(c.model.conv_layers);} });
				k.push_back( { "pooling_mode", "global pooling: gap, gmp, gnap or lena", false, [](RunConfig &c, const std::string &v)
				{	c.model.pooling_mode = parse_pooling_mode(v);}, [](const RunConfig &c)
				{	return std::string(to_string(c.model.pooling_mode));} });
				k.push_back( { "eta_init", "initial eta, one value or one per channel (comma separated)", false, [](RunConfig &c,
						const std::string &v)
				{
					c.model.eta_init.clear();
					for (const std::string &part : split(v, ','))
						c.model.eta_init.push_back(parse_number<double>("eta_init", part));
				}, [](const RunConfig &c)
				{
					std::string s;
					for (double e : c.model.eta_init)
						s += (s.empty() ? "" : ",") + show_double(e);
					return s;
				} });
				k.push_back( { "input_mean", "value subtracted from each input channel, one or one per channel (empty: none)", false,
						[](RunConfig &c, const std::string &v)
						{
							c.model.input_mean.clear();
							if (!v.empty())
								for (const std::string &part : split(v, ','))
									c.model.input_mean.push_back(parse_number<double>("input_mean", part));
						}, [](const RunConfig &c)
						{
							std::string s;
							for (double m : c.model.input_mean)
								s += (s.empty() ? "" : ",") + show_double(m);
							return s;
						} });
				size_key("objectness_maps", "side maps fused into the features (0 disables fusion)", [](RunConfig &c) -> std::size_t&
				{
					if (!c.model.objectness)
						c.model.objectness = ObjectnessSpec { 0, 1 };
					return c.model.objectness->num_side_maps;
				});
				size_key("fusion_kernel", "fusion conv kernel size (odd)", [](RunConfig &c) -> std::size_t&
				{
					if (!c.model.objectness)
						c.model.objectness = ObjectnessSpec { 0, 1 };
					return c.model.objectness->fusion_kernel;
				});
				k.push_back( { "relu", "ReLU after each conv (true/false)", false, [](RunConfig &c, const std::string &v)
				{	c.model.relu = parse_bool("relu", v);}, [](const RunConfig &c)
				{	return std::string(c.model.relu ? "true" : "false");} });

				real_key("base_lr", "base learning rate", [](RunConfig &c) -> double&
				{	return c.train.base_lr;});
				real_key("momentum", "SGD momentum", [](RunConfig &c) -> double&
				{	return c.train.momentum;});
				real_key("weight_decay", "L2 weight decay (not applied to eta)", [](RunConfig &c) -> double&
				{	return c.train.weight_decay;});
				size_key("lr_step_every", "iterations between learning-rate drops", [](RunConfig &c) -> std::size_t&
				{	return c.train.lr_step_every;});
				real_key("lr_step_factor", "learning-rate drop factor", [](RunConfig &c) -> double&
				{	return c.train.lr_step_factor;});
				size_key("max_iters", "training iterations", [](RunConfig &c) -> std::size_t&
				{	return c.train.max_iters;});
				size_key("batch_size", "pairs per iteration", [](RunConfig &c) -> std::size_t&
				{	return c.train.batch_size;});
				real_key("eta_lr_multiplier", "learning-rate multiplier for eta", [](RunConfig &c) -> double&
				{	return c.train.eta_lr_multiplier;});
				size_key("eta_snapshot_every", "iterations between eta snapshots", [](RunConfig &c) -> std::size_t&
				{	return c.train.eta_snapshot_every;});
				k.push_back( { "seed", "seed for initialization and shuffling", false, [](RunConfig &c, const std::string &v)
				{	c.train.seed = parse_number<std::uint64_t>("seed", v);}, [](const RunConfig &c)
				{	return std::to_string(c.train.seed);} });

				k.push_back( { "dataset", "dataset directory", true, [](RunConfig &c, const std::string &v)
				{	c.dataset = v;}, [](const RunConfig &c)
				{	return c.dataset.string();} });
				k.push_back( { "pairs", "training pairs CSV (default: <dataset>/train_pairs.csv)", true, [](RunConfig &c, const std::string &v)
				{	c.pairs = v;}, [](const RunConfig &c)
				{	return c.pairs.string();} });
				k.push_back( { "out", "output directory", true, [](RunConfig &c, const std::string &v)
				{	c.out = v;}, [](const RunConfig &c)
				{	return c.out.string();} });
				return k;
			}();
			return table;
		}

		std::string json_to_text(const std::string &key, const json &value)
		{
			if (value.is_string())
				return value.get<std::string>();
			if (value.is_boolean())
				return value.get<bool>() ? "true" : "false";
			if (value.is_number_integer() || value.is_number_unsigned())
				return value.dump();
			if (value.is_number_float())
				return show_double(value.get<double>());
			if (value.is_array())
			{
				std::string s;
				for (const json &item : value)
					s += (s.empty() ? "" : ",") + json_to_text(key, item);
				return s;
			}
			throw ParseError(key + ": unsupported JSON value " + value.dump());
		}
	}

	RunConfig::RunConfig()
	{
		model.conv_layers = parse_conv_layers("8:3:2:1,16:3:2:1,16:3:1:1");
	}

	std::vector<ConvLayerSpec> parse_conv_layers(const std::string &text)
	{
		std::vector<ConvLayerSpec> layers;
		for (const std::string &entry : split(text, ','))
		{
			const std::vector<std::string> f = split(entry, ':');
			if (f.size() < 2 || f.size() > 4)
				throw ParseError("conv_layers: expected out:kernel[:stride[:padding]], got '" + entry + "'");
			ConvLayerSpec spec;
			spec.out_channels = parse_number<std::size_t>("conv_layers", f[0]);
			spec.kernel = parse_number<std::size_t>("conv_layers", f[1]);
			spec.stride = f.size() > 2 ? parse_number<std::size_t>("conv_layers", f[2]) : 1;
			spec.padding = f.size() > 3 ? parse_number<std::size_t>("conv_layers", f[3]) : 0;
			layers.push_back(spec);
		}
		return layers;
	}

	std::string format_conv_layers(const std::vector<ConvLayerSpec> &layers)
	{
		std::string s;
		for (const ConvLayerSpec &l : layers)
			s += (s.empty() ? "" : ",") + std::to_string(l.out_channels) + ":" + std::to_string(l.kernel) + ":" + std::to_string(l.stride) + ":"
					+ std::to_string(l.padding);
		return s;
	}

	void RunConfigBinder::attach(CLI::App &command, bool with_paths)
	{
		m_with_paths = with_paths;
		command.add_option("--config", m_config_file, "JSON file with any of the keys below; flags override it")->check(CLI::ExistingFile);
		for (const Key &key : key_table())
		{
			if (key.is_path && !with_paths)
				continue;
			const RunConfig defaults;
			std::string help = key.help;
			if (!key.is_path)
				help += " [" + key.show(defaults) + "]";
			m_options[key.name] = command.add_option(flag_name(key.name), m_flags[key.name], help);
		}
	}

	RunConfig RunConfigBinder::resolve() const
	{
		RunConfig config;
		if (!m_config_file.empty())
		{
			std::ifstream in(m_config_file);
			if (!in)
				throw IoError("cannot open config " + m_config_file);
			json j;
			try
			{
				j = json::parse(in);
			} catch (const json::exception &e)
			{
				throw ParseError(m_config_file + ": " + e.what());
			}
			if (!j.is_object())
				throw ParseError(m_config_file + ": top level must be an object");
			for (const auto &[name, value] : j.items())
			{
				const auto it = std::find_if(key_table().begin(), key_table().end(), [&](const Key &k)
				{	return k.name == name;});
				if (it == key_table().end() || (it->is_path && !m_with_paths))
					throw ParseError(m_config_file + ": unknown key '" + name + "'");
				it->apply(config, json_to_text(name, value));
			}
		}
		for (const Key &key : key_table())
		{
			const auto option = m_options.find(key.name);
			if (option != m_options.end() && option->second->count() > 0)
				key.apply(config, m_flags.at(key.name));
		}
		if (config.model.objectness && config.model.objectness->num_side_maps == 0)
			config.model.objectness.reset();
		return config;
	}

	std::vector<std::string> RunConfigBinder::keys()
	{
		std::vector<std::string> names;
		for (const Key &k : key_table())
			names.push_back(k.name);
		return names;
	}

	std::string run_config_to_json(const RunConfig &config)
	{
		json j = json::object();
		for (const Key &k : key_table())
			j[k.name] = k.show(config);
		return j.dump(2) + "\n";
	}

	std::size_t resolve_threads(std::optional<std::size_t> flag)
	{
		if (flag)
		{
			if (*flag == 0)
				throw InvalidArgument("--threads must be positive");
			return *flag;
		}
		if (const char *env = std::getenv("LENA_THREADS"); env && *env)
		{
			const std::size_t n = parse_number<std::size_t>("LENA_THREADS", env);
			if (n == 0)
				throw InvalidArgument("LENA_THREADS must be positive");
			return n;
		}
		return std::max(1u, std::thread::hardware_concurrency());
	}
}
