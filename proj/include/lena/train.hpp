#pragma once

#include <lena/siamese.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace lena
{
	struct TrainConfig
	{
			double base_lr = 1e-4;
			double momentum = 0.9;
			double weight_decay = 0.05;
			std::size_t lr_step_every = 5000;
			double lr_step_factor = 0.1;
			std::size_t max_iters = 10000;
			std::size_t batch_size = 16;
			double eta_lr_multiplier = 1.0;
			std::size_t eta_snapshot_every = 100;
			std::uint64_t seed = 1;
			std::size_t threads = 1;

			/// Throws InvalidArgument for non-positive rates or sizes, momentum outside [0, 1) or a step factor outside (0, 1].
			void validate() const;
	};

	/// base_lr * factor^floor(iteration / step_every).
	double lr_at(std::size_t iteration, const TrainConfig &config);

	/*
	 * Classical momentum on the decayed gradient: v <- mu*v - lr*(g + lambda*theta), theta <- theta + v.
	 * Etas take no decay, use lr * eta_lr_multiplier and are clamped to [0, 1] afterwards.
	 */
	void sgd_step(Model &model, ModelGrads &grads, ModelGrads &velocity, double lr, const TrainConfig &config);

	struct IndexedPair
	{
			std::size_t a = 0;
			std::size_t b = 0;
			PairLabel label = PairLabel::AMoreViral;
	};

	/// Images stored once and referenced by index from the pairs.
	struct PairDataset
	{
			std::vector<std::string> ids;
			std::vector<Tensor> images; // (1, C, H, W)
			std::vector<Tensor> sides; // (1, K', h, w) per image, or empty
			std::vector<IndexedPair> pairs;

			PairSample sample(std::size_t pair) const;
			std::size_t index_of(const std::string &id) const;
	};

	/// Loads images/<id>.png (and side/<id>_<k>.pgm when side_maps > 0) for every id named in the pairs.
	PairDataset load_pair_dataset(const std::filesystem::path &dir, const std::vector<LabeledPair> &pairs, std::size_t side_maps);

	struct BatchResult
	{
			double loss = 0.0; // mean over the batch
			ModelGrads grads; // mean over the batch
	};

	/// Per-pair gradients may be computed on several threads; they are summed in pair order.
	BatchResult batch_gradients(const Model &model, const PairDataset &data, std::span<const std::size_t> pairs, std::size_t threads);

	struct EtaTrace
	{
			std::vector<std::size_t> iterations;
			std::vector<EtaVector> snapshots;
	};

	struct LossPoint
	{
			std::size_t iteration = 0;
			double lr = 0.0;
			double loss = 0.0;
	};

	struct TrainResult
	{
			Model model;
			EtaTrace trace;
			std::vector<LossPoint> loss_curve;
	};

	/// Called after every update with the iteration count and the batch loss.
	using TrainCallback = std::function<void(std::size_t iteration, double loss)>;

	/// Shuffles the pairs once per epoch from the seed; throws NumericError naming the iteration if the loss diverges.
	TrainResult train(const PairDataset &data, Model model, const TrainConfig &config, const TrainCallback &callback = { });

	struct PairPrediction
	{
			std::vector<double> logits;
			double accuracy = 0.0; // a zero logit counts as wrong
	};

	PairPrediction predict_pairs(const Model &model, const PairDataset &data, std::size_t threads = 1);

	void write_loss_csv(const std::filesystem::path &path, const std::vector<LossPoint> &curve);
	void write_eta_trace_csv(const std::filesystem::path &path, const EtaTrace &trace);
	EtaTrace read_eta_trace_csv(const std::filesystem::path &path);

	struct GradCheckOptions
	{
			double step = 1e-4; // fourth-order central stencil at +-step, +-2 step
			double floor = 1e-6; // |a - n| / max(|a|, |n|, floor)
			double min_margin = 1e-3; // distance of pre-activations from ReLU kinks and of pooled values from rank ties
			std::size_t max_jitters = 200;
			double jitter = 1e-2;
			std::uint64_t seed = 1;
	};

	struct GradCheckGroup
	{
			std::string name;
			std::size_t size = 0;
			double max_rel_error = 0.0;
			double max_abs_error = 0.0;
	};

	struct GradCheckReport
	{
			std::vector<GradCheckGroup> groups; // every weight and bias tensor, then "eta"
			double margin = 0.0; // achieved after jittering
			std::size_t jitters = 0;
			double loss = 0.0;

			double worst_weight_error() const;
			double eta_error() const;
	};

	/// Smallest distance of any pre-activation from zero or any pooled boundary value from its rank neighbours.
	double kink_margin(const PairForward &forward);

	/*
	 * Compares analytic weight gradients with finite differences of the pair loss, and eta gradients
	 * with a standalone full-sort evaluation of the eta estimator. The inputs are jittered with seeded
	 * noise until kink_margin reaches min_margin (or the attempts run out; the best draw is kept).
	 */
	GradCheckReport grad_check(Model model, PairSample sample, const GradCheckOptions &options = { });
}
