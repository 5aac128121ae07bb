#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"

#include <lena/error.hpp>
#include <lena/train.hpp>

#include <filesystem>
#include <fstream>

using namespace lena;
using namespace lena::testing;

namespace
{
	ModelConfig tiny_config(PoolingMode mode = PoolingMode::Lena)
	{
		ModelConfig c;
		c.input_channels = 1;
		c.input_height = 8;
		c.input_width = 8;
		c.conv_layers = { { 3, 3, 1, 0 }, { 4, 3, 1, 0 } };
		c.pooling_mode = mode;
		c.eta_init = { 0.5 };
		return c;
	}

	PairDataset random_dataset(const ModelConfig &c, std::size_t images, std::size_t pairs, std::mt19937_64 &rng)
	{
		PairDataset d;
		for (std::size_t i = 0; i < images; i++)
		{
			d.ids.push_back("i" + std::to_string(i));
			d.images.push_back(random_tensor( { 1, c.input_channels, c.input_height, c.input_width }, rng, 0.0, 1.0));
		}
		for (std::size_t p = 0; p < pairs; p++)
		{
			const std::size_t a = rng() % images, b = (a + 1 + rng() % (images - 1)) % images;
			d.pairs.push_back( { a, b, rng() % 2 ? PairLabel::AMoreViral : PairLabel::BMoreViral });
		}
		return d;
	}

	TrainConfig fast_config()
	{
		TrainConfig t;
		t.base_lr = 0.05;
		t.weight_decay = 1e-4;
		t.max_iters = 30;
		t.batch_size = 4;
		t.eta_snapshot_every = 10;
		t.seed = 3;
		return t;
	}
}

TEST_CASE("lr_at")
{
	const TrainConfig t;
	CHECK(lr_at(0, t) == 1e-4);
	CHECK(lr_at(4999, t) == 1e-4);
	CHECK(lr_at(5000, t) == doctest::Approx(1e-5).epsilon(1e-14));
	CHECK(lr_at(10000, t) == doctest::Approx(1e-6).epsilon(1e-14));
	for (std::size_t it = 1; it < 30000; it += 7)
		REQUIRE(lr_at(it, t) <= lr_at(it - 1, t));
}

TEST_CASE("TrainConfig validation")
{
	TrainConfig t;
	CHECK_NOTHROW(t.validate());
	for (auto breaker : std::vector<std::function<void(TrainConfig&)>> { [](TrainConfig &c) { c.base_lr = 0; },
			[](TrainConfig &c) { c.momentum = 1.0; }, [](TrainConfig &c) { c.weight_decay = -1; }, [](TrainConfig &c) { c.lr_step_every = 0; },
			[](TrainConfig &c) { c.lr_step_factor = 1.5; }, [](TrainConfig &c) { c.lr_step_factor = 0; },
			[](TrainConfig &c) { c.batch_size = 0; }, [](TrainConfig &c) { c.eta_lr_multiplier = -0.1; } })
	{
		TrainConfig bad;
		breaker(bad);
		CHECK_THROWS_AS(bad.validate(), InvalidArgument);
	}
}

TEST_CASE("sgd_step")
{
	const ModelConfig c = tiny_config();
	SUBCASE("zero gradients shrink the weights only")
	{
		Model m = Model::initialize(c, 1);
		for (NamedSpan &p : m.parameters())
			for (double &x : p.values)
				x = 0.75;
		m.etas = EtaVector::filled(4, 0.4);
		const Model before = m;
		ModelGrads g = ModelGrads::zeros_like(m), v = ModelGrads::zeros_like(m);
		TrainConfig t;
		sgd_step(m, g, v, 0.1, t);
		for (NamedSpan &p : m.parameters())
			for (double x : p.values)
				CHECK(x == doctest::Approx(0.75 * (1 - 0.1 * 0.05)).epsilon(1e-15));
		CHECK(m.etas == before.etas);
	}
	SUBCASE("eta is clamped after its step")
	{
		Model m = Model::initialize(c, 1);
		m.etas = EtaVector( { 0.9, 0.05, 0.5, 0.5 });
		ModelGrads g = ModelGrads::zeros_like(m), v = ModelGrads::zeros_like(m);
		g.eta = { -1.0, 1.0, 0.0, 0.5 };
		TrainConfig t;
		t.momentum = 0.0;
		sgd_step(m, g, v, 0.2, t);
		CHECK(m.etas[0] == 1.0);
		CHECK(m.etas[1] == 0.0);
		CHECK(m.etas[2] == 0.5);
		CHECK(m.etas[3] == doctest::Approx(0.4).epsilon(1e-15));
		t.eta_lr_multiplier = 3.0;
		m.etas = EtaVector::filled(4, 0.5);
		g.eta = { 0.1, 0.1, 0.1, 0.1 };
		sgd_step(m, g, v, 0.2, t);
		CHECK(m.etas[0] == doctest::Approx(0.5 - 0.06).epsilon(1e-15));
	}
	SUBCASE("momentum accumulates geometrically")
	{
		Model m = Model::initialize(c, 1);
		ModelGrads g = ModelGrads::zeros_like(m), v = ModelGrads::zeros_like(m);
		for (NamedSpan &p : g.parameters())
			for (double &x : p.values)
				x = 0.5;
		TrainConfig t;
		t.weight_decay = 0.0;
		const double start = m.classifier.weights[0];
		sgd_step(m, g, v, 0.1, t);
		const double first = m.classifier.weights[0] - start;
		const double mid = m.classifier.weights[0];
		sgd_step(m, g, v, 0.1, t);
		CHECK(m.classifier.weights[0] - mid == doctest::Approx(1.9 * first).epsilon(1e-13));
	}
	SUBCASE("plain gradient descent without momentum or decay")
	{
		std::mt19937_64 rng(5);
		Model m = Model::initialize(c, 2);
		const Model before = m;
		ModelGrads g = ModelGrads::zeros_like(m), v = ModelGrads::zeros_like(m);
		for (NamedSpan &p : g.parameters())
			for (double &x : p.values)
				x = uniform(rng, -3, 3);
		TrainConfig t;
		t.momentum = 0.0;
		t.weight_decay = 0.0;
		sgd_step(m, g, v, 0.01, t);
		Model copy = before;
		auto after = m.parameters(), orig = copy.parameters(), grads = g.parameters();
		for (std::size_t i = 0; i < after.size(); i++)
			for (std::size_t j = 0; j < after[i].values.size(); j++)
				REQUIRE(after[i].values[j] == orig[i].values[j] - 0.01 * grads[i].values[j]);
	}
	SUBCASE("weights are not clamped")
	{
		Model m = Model::initialize(c, 1);
		ModelGrads g = ModelGrads::zeros_like(m), v = ModelGrads::zeros_like(m);
		g.classifier_bias[0] = -100.0;
		sgd_step(m, g, v, 0.1, TrainConfig { });
		CHECK(m.classifier.bias[0] == doctest::Approx(10.0));
	}
	SUBCASE("non-finite gradients abort with the parameter name")
	{
		Model m = Model::initialize(c, 1);
		const Model before = m;
		ModelGrads g = ModelGrads::zeros_like(m), v = ModelGrads::zeros_like(m);
		g.conv_bias[1][2] = NAN;
		CHECK_THROWS_WITH_AS(sgd_step(m, g, v, 0.1, TrainConfig { }), doctest::Contains("conv1.bias"), NumericError);
		CHECK(m == before);
	}
	SUBCASE("eta moves against the pooled value when dL/dg is positive")
	{
		std::mt19937_64 rng(6);
		for (double sign : { 1.0, -1.0 })
		{
			Model m = Model::initialize(c, 4);
			m.etas = EtaVector::filled(4, 0.5);
			const Tensor image = random_tensor( { 1, 1, 8, 8 }, rng);
			const ScoreResult r = score(m, image);
			ModelGrads g = ModelGrads::zeros_like(m), v = ModelGrads::zeros_like(m);
			branch_backward(m, r.cache, sign, g);
			const Model before = m;
			TrainConfig t;
			sgd_step(m, g, v, 0.01, t);
			for (std::size_t l = 0; l < 4; l++)
			{
				const double dl_dg = sign * m.classifier.weights[l];
				const double slope = lena_eta_derivative(r.cache.features.data().subspan(l * 16, 16), 0.5);
				if (slope == 0.0 || dl_dg == 0.0)
					continue;
				// g falls as eta grows, so a loss that rises with g pushes eta up
				CHECK((m.etas[l] - before.etas[l] > 0) == (dl_dg > 0));
				const TopNAverage was = topn_average(r.cache.features.data().subspan(l * 16, 16), before.etas[l]);
				const TopNAverage now = topn_average(r.cache.features.data().subspan(l * 16, 16), m.etas[l]);
				CHECK((dl_dg > 0 ? now.value <= was.value : now.value >= was.value));
			}
		}
	}
}

TEST_CASE("batch_gradients")
{
	std::mt19937_64 rng(7);
	const ModelConfig c = tiny_config();
	const Model m = Model::initialize(c, 1);
	const PairDataset d = random_dataset(c, 10, 12, rng);
	const std::vector<std::size_t> batch { 3, 0, 7, 7, 11 };
	BatchResult one = batch_gradients(m, d, batch, 1), three = batch_gradients(m, d, batch, 3);
	CHECK(one.loss == three.loss);
	auto a = one.grads.parameters(), b = three.grads.parameters();
	for (std::size_t i = 0; i < a.size(); i++)
		CHECK(bitwise_equal(a[i].values, b[i].values));
	CHECK(bitwise_equal(std::span<const double>(one.grads.eta), std::span<const double>(three.grads.eta)));

	double mean = 0.0;
	for (std::size_t p : batch)
		mean += pair_loss(pair_logit(m, d.sample(p)), d.pairs[p].label).loss / 5.0;
	CHECK(one.loss == doctest::Approx(mean).epsilon(1e-14));
	CHECK_THROWS_AS(batch_gradients(m, d, std::vector<std::size_t> { }, 1), InvalidArgument);
}

TEST_CASE("train")
{
	std::mt19937_64 rng(8);
	const ModelConfig c = tiny_config();
	const PairDataset d = random_dataset(c, 12, 20, rng);
	const Model init = Model::initialize(c, 9);

	SUBCASE("no iterations keep the initialization")
	{
		TrainConfig t = fast_config();
		t.max_iters = 0;
		const TrainResult r = train(d, init, t);
		CHECK(r.model == init);
		CHECK(r.loss_curve.empty());
		CHECK(r.trace.iterations == std::vector<std::size_t> { 0 });
	}
	SUBCASE("fixed seed gives identical runs for any thread count")
	{
		TrainConfig t = fast_config();
		const TrainResult a = train(d, init, t);
		t.threads = 3;
		const TrainResult b = train(d, init, t);
		CHECK(encode_checkpoint(a.model) == encode_checkpoint(b.model));
		REQUIRE(a.loss_curve.size() == 30);
		for (std::size_t i = 0; i < 30; i++)
			CHECK(a.loss_curve[i].loss == b.loss_curve[i].loss);
		CHECK(a.trace.iterations == std::vector<std::size_t> { 0, 10, 20, 30 });
		CHECK(a.trace.snapshots == b.trace.snapshots);
		CHECK(!(a.model == init));
		t.seed = 4;
		CHECK(encode_checkpoint(train(d, init, t).model) != encode_checkpoint(a.model));
	}
	SUBCASE("a separable pair is learned")
	{
		PairDataset single;
		single.ids = { "bright", "dark" };
		single.images = { Tensor( { 1, 1, 8, 8 }, 0.9), Tensor( { 1, 1, 8, 8 }, 0.1) };
		for (std::size_t i = 0; i < 64; i += 5)
			single.images[0][i] = 0.2;
		single.pairs = { { 0, 1, PairLabel::AMoreViral } };
		TrainConfig t = fast_config();
		t.max_iters = 100;
		t.batch_size = 1;
		t.base_lr = 0.002;
		const TrainResult r = train(single, init, t);
		std::vector<double> window;
		for (std::size_t start = 0; start + 10 <= 100; start += 10)
		{
			double acc = 0.0;
			for (std::size_t i = start; i < start + 10; i++)
				acc += r.loss_curve[i].loss;
			window.push_back(acc / 10.0);
		}
		for (std::size_t i = 1; i < window.size(); i++)
			CHECK(window[i] <= window[i - 1]);
		CHECK(window.back() < 0.5 * window.front());
	}
	SUBCASE("divergence reports the iteration")
	{
		TrainConfig t = fast_config();
		t.base_lr = 1e200;
		CHECK_THROWS_WITH_AS(train(d, init, t), doctest::Contains("iteration"), NumericError);
		CHECK_THROWS_AS(train(PairDataset { }, init, t), InvalidArgument);
	}
	SUBCASE("eta stays inside [0, 1]")
	{
		TrainConfig t = fast_config();
		t.eta_lr_multiplier = 500.0;
		const TrainResult r = train(d, init, t);
		for (const EtaVector &e : r.trace.snapshots)
			for (double v : e.values())
				CHECK((v >= 0.0 && v <= 1.0));
	}
}

TEST_CASE("predict_pairs")
{
	ModelConfig c = tiny_config(PoolingMode::Gap);
	c.conv_layers = { { 1, 1, 1, 0 } };
	Model m = Model::initialize(c, 1);
	m.convs[0].weights[0] = 1.0;
	m.classifier.weights[0] = 1.0;
	// the score is the mean intensity, so brighter images win
	PairDataset d;
	d.ids = { "a", "b", "c" };
	d.images = { Tensor( { 1, 1, 8, 8 }, 0.2), Tensor( { 1, 1, 8, 8 }, 0.5), Tensor( { 1, 1, 8, 8 }, 0.8) };
	d.pairs = { { 1, 0, PairLabel::AMoreViral }, { 0, 2, PairLabel::BMoreViral }, { 2, 1, PairLabel::AMoreViral } };
	PairPrediction p = predict_pairs(m, d, 2);
	CHECK(p.accuracy == 1.0);
	CHECK(p.logits[1] == doctest::Approx(-0.6));
	d.pairs.push_back( { 0, 0, PairLabel::AMoreViral });
	d.pairs.push_back( { 0, 1, PairLabel::AMoreViral });
	p = predict_pairs(m, d);
	CHECK(p.accuracy == doctest::Approx(0.6));
}

TEST_CASE("csv outputs")
{
	const std::filesystem::path dir = std::filesystem::temp_directory_path() / "lena_test_train";
	std::filesystem::create_directories(dir);
	EtaTrace trace;
	trace.iterations = { 0, 100 };
	trace.snapshots = { EtaVector( { 0.5, 0.5 }), EtaVector( { 0.1 + 0.2, 1.0 }) };
	write_eta_trace_csv(dir / "eta.csv", trace);
	const EtaTrace back = read_eta_trace_csv(dir / "eta.csv");
	CHECK(back.iterations == trace.iterations);
	CHECK(back.snapshots == trace.snapshots);

	write_loss_csv(dir / "loss.csv", { { 0, 1e-4, 0.6931471805599453 }, { 1, 1e-4, 0.5 } });
	std::ifstream in(dir / "loss.csv");
	std::string header, row;
	std::getline(in, header);
	std::getline(in, row);
	CHECK(header == "iteration,lr,loss");
	CHECK(row == "0,1e-04,0.6931471805599453");

	std::ofstream(dir / "bad.csv") << "iteration,eta_0\n0,0.5\n10,1.5\n";
	CHECK_THROWS_WITH_AS(read_eta_trace_csv(dir / "bad.csv"), doctest::Contains("bad.csv:3"), ParseError);
	std::ofstream(dir / "bad2.csv") << "iteration,eta_0\n0,0.5,3\n";
	CHECK_THROWS_WITH_AS(read_eta_trace_csv(dir / "bad2.csv"), doctest::Contains("bad2.csv:2"), ParseError);
}

TEST_CASE("grad_check")
{
	std::mt19937_64 rng(10);
	SUBCASE("linear front-end")
	{
		for (PoolingMode mode : { PoolingMode::Lena, PoolingMode::Gap, PoolingMode::Gnap })
		{
			ModelConfig c = tiny_config(mode);
			c.relu = false;
			const Model m = Model::initialize(c, rng());
			PairDataset d = random_dataset(c, 2, 1, rng);
			GradCheckOptions o;
			o.step = 1e-3;
			o.floor = 1e-4;
			const GradCheckReport r = grad_check(m, d.sample(0), o);
			CHECK(r.worst_weight_error() < 1e-8);
			for (const GradCheckGroup &g : r.groups)
				CHECK(g.max_abs_error < 1e-10);
			CHECK(r.eta_error() < 1e-12);
		}
	}
	SUBCASE("relu network with jittered inputs")
	{
		for (int trial = 0; trial < 4; trial++)
		{
			const ModelConfig c = tiny_config(trial % 2 ? PoolingMode::Gmp : PoolingMode::Lena);
			Model m = Model::initialize(c, rng());
			for (NamedSpan &p : m.parameters())
				if (p.name.ends_with("bias"))
					for (double &b : p.values)
						b = uniform(rng, -0.1, 0.1);
			PairDataset d = random_dataset(c, 2, 1, rng);
			const GradCheckReport r = grad_check(m, d.sample(0));
			CHECK(r.margin >= 1e-3);
			CHECK(r.worst_weight_error() < 1e-5);
			CHECK(r.eta_error() < 1e-12);
			CHECK(r.groups.size() == 7);
			CHECK(r.groups.back().name == "eta");
		}
	}
	SUBCASE("constant feature maps give zero eta gradients")
	{
		Model m = Model::initialize(tiny_config(), 1);
		for (NamedSpan &p : m.parameters())
			if (p.name.starts_with("conv") && p.name.ends_with("weight"))
				for (double &w : p.values)
					w = 0.0;
		m.convs[1].bias = { 0.3, 0.1, 0.7, 0.2 };
		PairDataset d = random_dataset(m.config, 2, 1, rng);
		const GradCheckReport r = grad_check(m, d.sample(0));
		CHECK(r.groups.back().max_abs_error == 0.0);
		const PairForward fw = pair_forward(m, d.sample(0));
		for (double g : pair_backward(m, fw, 1.0).eta)
			CHECK(g == 0.0);
	}
}
