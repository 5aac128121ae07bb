#include "commands.hpp"

#include <lena/error.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string_view>

namespace
{
	enum ExitCode
	{
		Internal = 1,
		Usage = 2,
		Invalid = 3,
		Parse = 4,
		Io = 5,
		Numeric = 6,
		Shape = 7,
		Check = 8
	};

	int fail(std::string_view kind, std::string_view message, int code)
	{
		std::string line(message);
		for (char &c : line)
			if (c == '\n' || c == '\r')
				c = ' ';
		std::cerr << "lena-error: " << kind << ": " << line << '\n';
		return code;
	}
}

int main(int argc, char **argv)
{
	CLI::App app { "Siamese virality ranking with learnable top-N pooling", "lena" };
	app.require_subcommand(1);
	lena::cli::add_synth_command(app);
	lena::cli::add_train_command(app);
	lena::cli::add_predict_command(app);
	lena::cli::add_map_command(app);
	lena::cli::add_gradcheck_command(app);
	lena::cli::add_eval_local_command(app);
	lena::cli::add_eta_hist_command(app);
	lena::cli::add_bench_command(app);

	try
	{
		app.parse(argc, argv);
	} catch (const CLI::CallForHelp &e)
	{
		return app.exit(e);
	} catch (const CLI::CallForAllHelp &e)
	{
		return app.exit(e);
	} catch (const CLI::ParseError &e)
	{
		return fail("usage", e.what(), Usage);
	} catch (const lena::cli::CheckFailed &e)
	{
		return fail("check-failed", e.what(), Check);
	} catch (const lena::ParseError &e)
	{
		return fail("parse", e.what(), Parse);
	} catch (const lena::IoError &e)
	{
		return fail("io", e.what(), Io);
	} catch (const std::filesystem::filesystem_error &e)
	{
		return fail("io", e.what(), Io);
	} catch (const lena::NumericError &e)
	{
		return fail("numeric", e.what(), Numeric);
	} catch (const lena::ShapeError &e)
	{
		return fail("shape", e.what(), Shape);
	} catch (const lena::InvalidArgument &e)
	{
		return fail("invalid-argument", e.what(), Invalid);
	} catch (const std::exception &e)
	{
		return fail("internal", e.what(), Internal);
	}
	return 0;
}
