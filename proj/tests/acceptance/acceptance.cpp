// Runs the nine acceptance checks and prints one PASS/FAIL line for each.

#include "../process.hpp"

#include <lena/data.hpp>
#include <lena/pooling.hpp>
#include <lena/siamese.hpp>
#include <lena/train.hpp>
#include <lena/viraliency.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace lena;
using namespace lena::testing;
namespace fs = std::filesystem;

namespace
{
	const std::string cli = LENA_CLI_PATH;
	const fs::path recipe = LENA_RECIPE;
	const fs::path workdir = LENA_ACCEPTANCE_WORKDIR;

	struct Outcome
	{
			bool pass = false;
			std::string detail;
	};

	using Clock = std::chrono::steady_clock;

	double seconds_since(Clock::time_point t0)
	{
		return std::chrono::duration<double>(Clock::now() - t0).count();
	}

	std::string num(double v)
	{
		char buf[64];
		std::snprintf(buf, sizeof buf, "%.4g", v);
		return buf;
	}

	double uniform(std::mt19937_64 &rng, double lo, double hi)
	{
		return std::uniform_real_distribution<double>(lo, hi)(rng);
	}

	Tensor random_features(std::mt19937_64 &rng, std::size_t channels, std::size_t h, std::size_t w, bool with_ties)
	{
		Tensor t( { 1, channels, h, w });
		for (double &v : t.data())
			v = with_ties ? std::round(uniform(rng, -3.0, 3.0)) : uniform(rng, -3.0, 3.0);
		return t;
	}

	std::vector<std::vector<std::string>> csv_rows(const std::string &text)
	{
		std::vector<std::vector<std::string>> rows;
		std::istringstream in(text);
		std::string line;
		while (std::getline(in, line))
		{
			if (line.empty() || line[0] == '#')
				continue;
			std::vector<std::string> cells;
			std::string cell;
			std::istringstream fields(line);
			while (std::getline(fields, cell, ','))
				cells.push_back(cell);
			if (line.back() == ',')
				cells.push_back("");
			rows.push_back(cells);
		}
		return rows;
	}

	CommandResult run_cli(const std::vector<std::string> &args, const std::string &env = "")
	{
		CommandResult r = run_command(cli, args, workdir / "io", env);
		if (r.exit_code != 0)
			throw std::runtime_error("lena " + (args.empty() ? std::string() : args[0]) + " exited with " + std::to_string(r.exit_code) + ": " + r.err);
		return r;
	}

	Outcome limit_equivalence()
	{
		const auto t0 = Clock::now();
		std::mt19937_64 rng(101);
		const std::size_t channel_options[] = { 1, 8, 64 };
		const std::size_t size_options[] = { 2, 7, 13 };
		std::size_t gmp_mismatch = 0;
		double worst_gap = 0.0;
		for (int trial = 0; trial < 1000; trial++)
		{
			const std::size_t L = channel_options[trial % 3];
			const std::size_t S = size_options[(trial / 3) % 3];
			const Tensor f = random_features(rng, L, S, S, trial % 4 == 0);
			const PoolResult lo = lena_forward(f, EtaVector::filled(L, 0.0));
			const PoolResult gmp = gmp_forward(f);
			if (!bitwise_equal(lo.pooled, gmp.pooled) || lo.support != gmp.support)
				gmp_mismatch++;
			const PoolResult hi = lena_forward(f, EtaVector::filled(L, 1.0));
			const PoolResult gap = gap_forward(f);
			for (std::size_t l = 0; l < L; l++)
				worst_gap = std::max(worst_gap, std::abs(hi.pooled[l] - gap.pooled[l]) / std::max(std::abs(gap.pooled[l]), 1e-300));
		}
		const double t = seconds_since(t0);
		return { gmp_mismatch == 0 && worst_gap <= 1e-12 && t < 10.0, "1000 tensors; GMP mismatches " + std::to_string(gmp_mismatch)
				+ ", worst GAP relative error " + num(worst_gap) + ", " + num(t) + " s" };
	}

	Outcome eta_derivative_oracle()
	{
		const double hand = lena_eta_derivative(std::vector<double> { 4, 2, 0, 0 }, 1.0 / 3.0);
		std::mt19937_64 rng(202);
		std::size_t positive = 0, nonzero_flat = 0;
		double largest = -1e300;
		for (int trial = 0; trial < 10000; trial++)
		{
			const std::size_t n = 1 + rng() % 169;
			std::vector<double> map(n);
			for (double &v : map)
				v = trial % 3 == 0 ? std::round(uniform(rng, 0.0, 4.0)) : uniform(rng, -5.0, 5.0);
			const double eta = trial % 10 == 0 ? static_cast<double>(rng() % 3) / 2.0 : uniform(rng, 0.0, 1.0);
			const double d = lena_eta_derivative(map, eta);
			largest = std::max(largest, d);
			positive += d > 0.0;
			const std::vector<double> flat(n, uniform(rng, -5.0, 5.0));
			nonzero_flat += lena_eta_derivative(flat, eta) != 0.0;
		}
		return { hand == -3.0 && positive == 0 && nonzero_flat == 0, "[4,2,0,0] at 1/3 gives " + num(hand) + "; 10000 random maps, "
				+ std::to_string(positive) + " positive (max " + num(largest) + "), " + std::to_string(nonzero_flat) + " non-zero on constant maps" };
	}

	Outcome gradient_checks()
	{
		const auto t0 = Clock::now();
		std::mt19937_64 rng(303);
		ModelConfig c;
		c.input_channels = 3;
		c.input_height = 10;
		c.input_width = 10;
		c.conv_layers = { { 4, 3, 1, 0 }, { 6, 3, 1, 0 } };
		c.pooling_mode = PoolingMode::Lena;
		c.eta_init = { 0.1, 0.3, 0.5, 0.7, 0.9, 0.45 };
		double worst = 0.0, worst_eta = 0.0, worst_margin = 1e300;
		std::size_t params = 0;
		for (int trial = 0; trial < 3; trial++)
		{
			Model m = Model::initialize(c, rng());
			for (NamedSpan &p : m.parameters())
				if (p.name.ends_with("bias"))
					for (double &b : p.values)
						b = uniform(rng, -0.1, 0.1);
			params = m.parameter_count();
			PairSample s;
			s.image_a = Tensor( { 1, 3, 10, 10 });
			s.image_b = Tensor( { 1, 3, 10, 10 });
			for (double &v : s.image_a.data())
				v = uniform(rng, 0.0, 1.0);
			for (double &v : s.image_b.data())
				v = uniform(rng, 0.0, 1.0);
			s.label = trial % 2 ? PairLabel::BMoreViral : PairLabel::AMoreViral;
			const GradCheckReport r = grad_check(m, s);
			worst = std::max(worst, r.worst_weight_error());
			worst_eta = std::max(worst_eta, r.eta_error());
			worst_margin = std::min(worst_margin, r.margin);
		}
		const double t = seconds_since(t0);
		return { params < 10000 && worst < 1e-5 && worst_eta <= 1e-12 && worst_margin >= 1e-3 && t < 60.0, std::to_string(params)
				+ " parameters; worst weight error " + num(worst) + ", eta error " + num(worst_eta) + ", kink margin " + num(worst_margin) + ", "
				+ num(t) + " s" };
	}

	Outcome cam_identities()
	{
		std::mt19937_64 rng(404);
		double worst_gap = 0.0, worst_gmp = 0.0;
		for (int trial = 0; trial < 1000; trial++)
		{
			const std::size_t L = 1 + rng() % 16, H = 2 + rng() % 8, W = 2 + rng() % 8;
			const Tensor f = random_features(rng, L, H, W, trial % 5 == 0);
			InnerProductParams ip;
			ip.weights = Tensor( { 1, L });
			for (double &w : ip.weights.data())
				w = uniform(rng, -2.0, 2.0);
			ip.bias = { uniform(rng, -1.0, 1.0) };
			const EtaVector etas = EtaVector::filled(L, 0.5);
			for (PoolingMode mode : { PoolingMode::Gap, PoolingMode::Gmp })
			{
				const PoolResult pooled = pool_forward(mode, f, etas);
				double score = 0.0;
				for (std::size_t l = 0; l < L; l++)
					score += ip.weights[l] * pooled.pooled[l];
				const ViraliencyMap map = activation_map(f, ip, 0, etas, mode);
				double total = 0.0;
				for (double v : map.values.data())
					total += v;
				if (mode == PoolingMode::Gap)
					worst_gap = std::max(worst_gap, std::abs(total / static_cast<double>(H * W) - score));
				else
					worst_gmp = std::max(worst_gmp, std::abs(total - score));
			}
		}
		return { worst_gap <= 1e-10 && worst_gmp <= 1e-10, "1000 instances; GAP mean error " + num(worst_gap) + ", GMP sum error " + num(worst_gmp) };
	}

	struct SyntheticRun
	{
			double seconds = 0.0;
			double accuracy = 0.0;
			double precision = -1.0;
			double recall = -1.0;
			EtaTrace trace;
			std::string error;
	};

	const SyntheticRun& synthetic_run()
	{
		static const SyntheticRun run = []
		{
			SyntheticRun r;
			try
			{
				const fs::path ds = workdir / "synthetic";
				const fs::path out = workdir / "synthetic_run";
				fs::remove_all(ds);
				fs::remove_all(out);
				const auto t0 = Clock::now();
				run_cli( { "synth", "--out", ds.string() });
				run_cli( { "train", "--config", recipe.string(), "--dataset", ds.string(), "--out", out.string(), "--threads", "1", "--log-every",
						"0" });
				r.seconds = seconds_since(t0);
				const auto pred = csv_rows(run_cli( { "predict", "--checkpoint", (out / "checkpoint.bin").string(), "--dataset", ds.string(),
						"--threads", "1" }).out);
				r.accuracy = std::stod(pred.at(1).at(2));
				const auto eval = csv_rows(run_cli( { "eval-local", "--checkpoint", (out / "checkpoint.bin").string(), "--dataset", ds.string(),
						"--top", "50", "--threshold", "0.5", "--out", (out / "localization.csv").string() }).out);
				const std::vector<std::string> &pooled = eval.at(1);
				r.precision = pooled.at(1).empty() ? -1.0 : std::stod(pooled.at(1));
				r.recall = pooled.at(2).empty() ? -1.0 : std::stod(pooled.at(2));
				r.trace = read_eta_trace_csv(out / "eta_trace.csv");
				run_cli( { "eta-hist", "--trace", (out / "eta_trace.csv").string(), "--bins", "10", "--out", (out / "eta_hist.csv").string() });
			} catch (const std::exception &e)
			{
				r.error = e.what();
			}
			return r;
		}();
		return run;
	}

	Outcome end_to_end()
	{
		const SyntheticRun &r = synthetic_run();
		if (!r.error.empty())
			return { false, r.error };
		return { r.accuracy >= 0.9 && r.precision >= 0.5 && r.recall >= 0.5 && r.seconds < 300.0, "test accuracy " + num(r.accuracy) + ", Pr "
				+ num(r.precision) + ", Rc " + num(r.recall) + " on the 50 most viral test images, synth+train " + num(r.seconds) + " s" };
	}

	Outcome eta_dynamics()
	{
		const SyntheticRun &r = synthetic_run();
		if (!r.error.empty())
			return { false, r.error };
		if (r.trace.snapshots.size() < 2)
			return { false, "trace has fewer than two snapshots" };
		const EtaVector &first = r.trace.snapshots.front(), &last = r.trace.snapshots.back();
		std::size_t moved = 0, extreme = 0, middle = 0;
		for (std::size_t l = 0; l < last.size(); l++)
		{
			moved += std::abs(last[l] - first[l]) >= 0.1;
			extreme += last[l] <= 0.1 || last[l] >= 0.9;
			middle += last[l] >= 0.4 && last[l] <= 0.6;
		}
		const double fraction = static_cast<double>(moved) / static_cast<double>(last.size());
		bool started_at_half = true;
		for (double e : first.values())
			started_at_half = started_at_half && e == 0.5;
		return { started_at_half && fraction >= 0.25 && extreme > middle, std::to_string(moved) + "/" + std::to_string(last.size())
				+ " etas moved by >= 0.1; " + std::to_string(extreme) + " in [0,0.1]u[0.9,1] vs " + std::to_string(middle) + " in [0.4,0.6]" };
	}

	Outcome overhead_benchmark()
	{
		const auto rows = csv_rows(run_cli( { "bench", "--channels", "512", "--size", "13", "--scaling", "64,128,256,512,1024", "--reps", "20",
				"--rounds", "9" }).out);
		double ratio = -1.0;
		std::vector<double> log_l, log_t;
		for (const auto &row : rows)
		{
			if (row.at(0) == "modes" && row.at(1) == "lena")
				ratio = std::stod(row.at(6));
			if (row.at(0) == "scaling" && row.at(1) == "lena")
			{
				log_l.push_back(std::log(std::stod(row.at(2))));
				log_t.push_back(std::log(std::stod(row.at(5))));
			}
		}
		const double n = static_cast<double>(log_l.size());
		double ml = 0.0, mt = 0.0;
		for (std::size_t i = 0; i < log_l.size(); i++)
		{
			ml += log_l[i] / n;
			mt += log_t[i] / n;
		}
		double sxy = 0.0, sxx = 0.0;
		for (std::size_t i = 0; i < log_l.size(); i++)
		{
			sxy += (log_l[i] - ml) * (log_t[i] - mt);
			sxx += (log_l[i] - ml) * (log_l[i] - ml);
		}
		const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
		return { ratio > 0.0 && ratio <= 3.0 && slope > 0.8 && slope < 1.2, "LENA/GMP forward+backward on 512x13x13: " + num(ratio)
				+ "x; log-log slope of time vs channels " + num(slope) };
	}

	Outcome virality_scores()
	{
		const double at_mean = virality_score( { "m", 120.0, 7.0 }, 120.0, 7.0);
		std::mt19937_64 rng(808);
		std::vector<EngagementRecord> records;
		for (int i = 0; i < 100; i++)
			records.push_back( { "r" + std::to_string(i), std::round(uniform(rng, -50.0, 5000.0)), std::round(uniform(rng, 1.0, 400.0)) });
		const std::vector<ScoredImage> scored = score_records(records);
		long double sum_l = 0.0L, sum_m = 0.0L;
		for (const EngagementRecord &r : records)
		{
			sum_l += r.likes;
			sum_m += r.resubmissions;
		}
		const long double mean_l = sum_l / 100.0L, mean_m = sum_m / 100.0L;
		double worst = 0.0;
		for (std::size_t i = 0; i < records.size(); i++)
		{
			const long double expect = (records[i].likes / mean_l) * std::log(records[i].resubmissions / mean_m);
			worst = std::max(worst, static_cast<double>(std::abs(static_cast<long double>(scored[i].virality) - expect)));
		}
		return { at_mean == 0.0 && worst <= 1e-12, "V at the means " + num(at_mean) + "; 100-record batch worst error " + num(worst) };
	}

	Outcome determinism()
	{
		const fs::path ds = workdir / "determinism";
		fs::remove_all(ds);
		run_cli( { "synth", "--out", ds.string(), "--num-images", "200", "--test-images", "40", "--train-pairs", "160", "--test-pairs", "40", "--top",
				"10", "--bottom", "10" });
		std::vector<std::string> files;
		for (const char *threads : { "1", "3" })
		{
			const fs::path out = workdir / (std::string("determinism_run") + threads);
			fs::remove_all(out);
			run_cli( { "train", "--config", recipe.string(), "--dataset", ds.string(), "--max-iters", "150", "--out", out.string(), "--threads", threads,
					"--log-every", "0" });
			for (const char *name : { "checkpoint.bin", "loss.csv", "eta_trace.csv" })
				files.push_back(slurp(out / name));
		}
		const bool same = files[0] == files[3] && files[1] == files[4] && files[2] == files[5] && !files[0].empty();
		return { same, std::string(same ? "byte-identical" : "different") + " checkpoint (" + std::to_string(files[0].size())
				+ " bytes), loss CSV and eta trace across two runs (1 and 3 threads)" };
	}
}

int main()
{
	fs::create_directories(workdir);
	const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = { { "limit equivalence", limit_equivalence }, {
			"eta-derivative oracle", eta_derivative_oracle }, { "gradient checks", gradient_checks }, { "CAM identities", cam_identities }, {
			"end-to-end synthetic task", end_to_end }, { "eta dynamics", eta_dynamics }, { "overhead benchmark", overhead_benchmark }, {
			"virality score", virality_scores }, { "determinism", determinism } };
	int failures = 0;
	for (std::size_t i = 0; i < criteria.size(); i++)
	{
		Outcome o;
		try
		{
			o = criteria[i].second();
		} catch (const std::exception &e)
		{
			o = { false, std::string("error: ") + e.what() };
		}
		failures += !o.pass;
		std::cout << "criterion " << i + 1 << " " << (o.pass ? "PASS" : "FAIL") << ": " << criteria[i].first << ": " << o.detail << std::endl;
	}
	std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size() << " criteria passed" << std::endl;
	return failures == 0 ? 0 : 1;
}
