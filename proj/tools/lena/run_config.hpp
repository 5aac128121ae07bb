#pragma once

#include <lena/siamese.hpp>
#include <lena/train.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lena::cli
{
	/// Everything `train` and `gradcheck` read; JSON keys map one-to-one onto --flags (underscores become dashes).
	struct RunConfig
	{
			ModelConfig model;
			TrainConfig train;
			std::filesystem::path dataset;
			std::filesystem::path pairs; // defaults to <dataset>/train_pairs.csv
			std::filesystem::path out = ".";

			RunConfig();
	};

	/// Parses "out:kernel:stride:padding" entries separated by commas.
	std::vector<ConvLayerSpec> parse_conv_layers(const std::string &text);
	std::string format_conv_layers(const std::vector<ConvLayerSpec> &layers);

	class RunConfigBinder
	{
		public:
			/// Adds --config plus one flag per key to the subcommand.
			void attach(CLI::App &command, bool with_paths);
			/// Defaults, then the --config file, then explicit flags.
			RunConfig resolve() const;

			static std::vector<std::string> keys();

		private:
			std::map<std::string, std::string> m_flags;
			std::map<std::string, CLI::Option*> m_options;
			std::string m_config_file;
			bool m_with_paths = true;
	};

	std::string run_config_to_json(const RunConfig &config);

	/// --threads if given, else LENA_THREADS, else the machine's parallelism.
	std::size_t resolve_threads(std::optional<std::size_t> flag);
}
