#pragma once

#include <CLI11.hpp>

#include <stdexcept>

namespace lena::cli
{
	/// A check command ran to completion but its result is outside tolerance.
	class CheckFailed : public std::runtime_error
	{
		public:
			using std::runtime_error::runtime_error;
	};

	void add_synth_command(CLI::App &app);
	void add_train_command(CLI::App &app);
	void add_predict_command(CLI::App &app);
	void add_map_command(CLI::App &app);
	void add_gradcheck_command(CLI::App &app);
	void add_eval_local_command(CLI::App &app);
	void add_eta_hist_command(CLI::App &app);
	void add_bench_command(CLI::App &app);
}
