#pragma once

#include <lena/data.hpp>
#include <lena/ops.hpp>
#include <lena/pooling.hpp>
#include <lena/tensor.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lena
{
	struct ConvLayerSpec
	{
			std::size_t out_channels = 8;
			std::size_t kernel = 3;
			std::size_t stride = 1;
			std::size_t padding = 0;
			bool operator==(const ConvLayerSpec&) const = default;
	};

	struct ObjectnessSpec
	{
			std::size_t num_side_maps = 1;
			std::size_t fusion_kernel = 1; // odd; padded to keep the feature size
			bool operator==(const ObjectnessSpec&) const = default;
	};

	struct ModelConfig
	{
			std::size_t input_channels = 3;
			std::size_t input_height = 64;
			std::size_t input_width = 64;
			std::vector<ConvLayerSpec> conv_layers;
			PoolingMode pooling_mode = PoolingMode::Lena;
			std::vector<double> eta_init { 0.5 }; // one value for every channel, or one per channel
			std::size_t output_dim = 1;
			std::optional<ObjectnessSpec> objectness;
			bool relu = true; // ReLU after every conv; off gives a linear front-end
			std::vector<double> input_mean; // subtracted from the image before conv0: empty, one value, or one per input channel

			bool operator==(const ModelConfig&) const = default;

			/// Throws InvalidArgument on an empty stack, bad eta_init or input_mean, even fusion kernel or output_dim != 1.
			void validate() const;
			/// Channel count L of the pooled feature maps.
			std::size_t feature_channels() const;
			/// (height, width) of the pooled feature maps.
			std::pair<std::size_t, std::size_t> feature_extent() const;
	};

	std::string config_to_json(const ModelConfig &config);
	ModelConfig config_from_json(std::string_view text);

	struct NamedSpan
	{
			std::string name;
			std::span<double> values;
	};

	struct Model
	{
			ModelConfig config;
			std::vector<ConvParams> convs;
			std::optional<ConvParams> fusion;
			InnerProductParams classifier;
			EtaVector etas;

			/// He-style uniform weights scaled by fan-in, zero biases, etas from eta_init.
			static Model initialize(const ModelConfig &config, std::uint64_t seed);

			/// Weights and biases in a fixed order; etas are handled separately.
			std::vector<NamedSpan> parameters();
			std::size_t parameter_count() const;

			/// Must be called after editing parameters in place so old caches are rejected.
			void mark_modified() noexcept { m_generation++; }
			std::uint64_t generation() const noexcept { return m_generation; }

			bool operator==(const Model &other) const;

		private:
			std::uint64_t m_generation = 0;
	};

	struct ModelGrads
	{
			std::vector<Tensor> conv_weights;
			std::vector<std::vector<double>> conv_bias;
			Tensor fusion_weights;
			std::vector<double> fusion_bias;
			Tensor classifier_weights;
			std::vector<double> classifier_bias;
			std::vector<double> eta;

			static ModelGrads zeros_like(const Model &model);
			/// Same order and names as Model::parameters().
			std::vector<NamedSpan> parameters();
			/// this += other, elementwise.
			void accumulate(const ModelGrads &other);
			void scale(double factor);
	};

	struct PairSample
	{
			Tensor image_a; // (1, C, H, W)
			Tensor image_b;
			PairLabel label = PairLabel::AMoreViral;
			Tensor side_a; // (1, K', h, w) when objectness is enabled; otherwise empty
			Tensor side_b;
	};

	struct BranchCache
	{
			std::vector<Tensor> conv_inputs;
			std::vector<Tensor> conv_outputs; // before ReLU
			Tensor fusion_input; // features concatenated with resized side maps
			Tensor fusion_output; // before ReLU
			Tensor features; // (1, L, h, w), the pooled maps
			PoolResult pooled;
			std::vector<double> outputs;
			const Model *model = nullptr;
			std::uint64_t generation = 0;
	};

	struct ScoreResult
	{
			double score = 0.0;
			BranchCache cache;
	};

	/// side is required exactly when the model has objectness fusion.
	ScoreResult score(const Model &model, const Tensor &image, const Tensor *side = nullptr);

	/// Resizes side maps to the feature size, concatenates them after the features and applies relu(fusion conv).
	Tensor fuse_objectness(const Tensor &features, const Tensor &side, const ConvParams &fusion);

	struct PairForward
	{
			double logit = 0.0;
			BranchCache a;
			BranchCache b;
	};

	/// logit = s(a) - s(b).
	PairForward pair_forward(const Model &model, const PairSample &sample);
	PairForward pair_forward(const Model &model, const Tensor &image_a, const Tensor &image_b, const Tensor *side_a = nullptr,
			const Tensor *side_b = nullptr);
	double pair_logit(const Model &model, const PairSample &sample);

	struct LossValue
	{
			double loss = 0.0;
			double grad = 0.0; // d loss / d logit
	};

	/// Sigmoid cross-entropy with target 1 for AMoreViral, in overflow-free softplus form.
	LossValue pair_loss(double logit, PairLabel label) noexcept;

	/// Adds d(score)/d(params) * grad_score into grads.
	void branch_backward(const Model &model, const BranchCache &cache, double grad_score, ModelGrads &grads);
	/// Gradients of a loss with d loss / d logit = grad_logit, summed over both branches.
	ModelGrads pair_backward(const Model &model, const PairForward &forward, double grad_logit);

	// Little-endian container: "LENACKPT", u32 version, u64 length + config JSON, u32 count,
	// then per tensor: u32 length + name, u32 rank, u64 extents, raw f64 values.
	void save_checkpoint(const std::filesystem::path &path, const Model &model);
	Model load_checkpoint(const std::filesystem::path &path);
	std::string encode_checkpoint(const Model &model);
	Model decode_checkpoint(std::string_view bytes, const std::string &name = "<checkpoint>");
}
