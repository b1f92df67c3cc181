#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pcqa/config.hpp"
#include "pcqa/datamodel.hpp"
#include "pcqa/encoders.hpp"

namespace pcqa {

// Two temporal convolutions (kernel 3, zero same-padding, rectifier between)
// followed by mean pooling over the frame axis. Operates on raw backbone
// features, before the vision adapter.
class TemporalPooler {
  public:
    TemporalPooler(int channels, Rng& rng);

    int channels() const { return channels_; }

    struct Cache {
        std::vector<Vec> input;  // T x C
        std::vector<Vec> pre1, act1, pre2;
        int frames = 0;
    };

    FeatureVector pool(const std::vector<FeatureVector>& frames) const;
    FeatureVector forward(const std::vector<FeatureVector>& frames, Cache& cache) const;
    // Returns d/d(input frame features), T x C.
    std::vector<Vec> backward(const Cache& cache, const Vec& d_out);

    std::vector<Tensor*> params() { return {&conv1_w_, &conv1_b_, &conv2_w_, &conv2_b_}; }
    Tensor& conv1_weight() { return conv1_w_; }
    Tensor& conv2_weight() { return conv2_w_; }
    Tensor& conv1_bias() { return conv1_b_; }
    Tensor& conv2_bias() { return conv2_b_; }

    // Center tap = identity map, other taps and biases zero.
    void set_identity();

  private:
    std::vector<Vec> conv1d(const std::vector<Vec>& in, const Tensor& w, const Tensor& b) const;

    int channels_;
    Tensor conv1_w_, conv1_b_;  // C x C x 3
    Tensor conv2_w_, conv2_b_;
};

// concatenation -> [v; t]; dot_product -> elementwise v * t.
FeatureVector mix(MixerKind kind, const FeatureVector& v, const FeatureVector& t);

// Affine -> rectifier -> affine, scalar output, no output activation.
class RegressionHead {
  public:
    RegressionHead(int in_dim, int hidden_dim, Rng& rng);

    struct Cache {
        Vec input;
        Vec pre_hidden;
    };

    double score(const FeatureVector& mixed) const;
    double forward(const FeatureVector& mixed, Cache& cache) const;
    Vec backward(const Cache& cache, double d_score);

    int in_dim() const { return in_dim_; }
    int hidden_dim() const { return hidden_dim_; }
    std::vector<Tensor*> params() { return {&w1_, &b1_, &w2_, &b2_}; }
    Tensor& layer1_weight() { return w1_; }
    Tensor& layer2_weight() { return w2_; }
    Tensor& layer1_bias() { return b1_; }
    Tensor& layer2_bias() { return b2_; }

  private:
    int in_dim_, hidden_dim_;
    Tensor w1_, b1_, w2_, b2_;
};

// Full prompt-conditioned model: trainable vision path, frozen hybrid text
// path, two adapters into a shared latent space, mixer, regression head.
// Scores live in normalized-MOS space.
class PCQAModel {
  public:
    PCQAModel(std::unique_ptr<VisionEncoder> vision, int latent_dim,
              std::unique_ptr<HybridTextEncoder> text, MixerKind mixer, int head_hidden,
              std::uint64_t seed, bool text_trainable = false);

    // frames: preprocessed [0,1] images, 1 <= T; T = 1 bypasses the pooler so
    // the video path degenerates to the image formula.
    double forward(const std::vector<Image>& frames, const std::string& prompt) const;
    double forward_image(const Image& image, const std::string& prompt) const;

    struct Cache {
        std::vector<std::unique_ptr<EncodeCache>> vision_caches;
        std::vector<FeatureVector> frame_features;
        TemporalPooler::Cache pooler_cache;
        bool pooled = false;
        FeatureVector vision_feature;   // pre-adapter
        FeatureVector prompt_feature;   // pre-adapter (hybrid output)
        FeatureVector vision_latent, prompt_latent;
        FeatureVector mixed;
        RegressionHead::Cache head_cache;
        std::string prompt;
        double score = 0.0;
    };

    Cache forward_train(const std::vector<Image>& frames, const std::string& prompt);
    void backward(const Cache& cache, double d_score);

    std::vector<Tensor*> trainable_params();
    std::vector<Tensor*> all_params();
    void zero_grads();

    VisionEncoder& vision_encoder() { return *vision_; }
    HybridTextEncoder& text_encoder() { return *text_; }
    const HybridTextEncoder& text_encoder() const { return *text_; }
    Adapter& vision_adapter() { return vision_adapter_; }
    Adapter& prompt_adapter() { return prompt_adapter_; }
    TemporalPooler& temporal_pooler() { return pooler_; }
    RegressionHead& head() { return head_; }
    MixerKind mixer_kind() const { return mixer_; }
    bool text_trainable() const { return text_trainable_; }

    MosStats mos_stats;

  private:
    FeatureVector pool_or_passthrough(const std::vector<FeatureVector>& frames,
                                      TemporalPooler::Cache* cache, bool* pooled) const;

    std::unique_ptr<VisionEncoder> vision_;
    std::unique_ptr<HybridTextEncoder> text_;
    Rng init_rng_;  // consumed once, at parameter initialization
    Adapter vision_adapter_;
    Adapter prompt_adapter_;
    TemporalPooler pooler_;
    MixerKind mixer_;
    RegressionHead head_;
    bool text_trainable_;
};

std::unique_ptr<PCQAModel> build_model(const TrainConfig& cfg);

// Resize to the configured resolution; pixel scaling to [0,1] happens at load.
Image preprocess_for_eval(const Image& img, const TrainConfig& cfg);

// Load, frame-sample (video), resize: the inference-side input pipeline.
std::vector<Image> load_model_input(const Sample& sample, const TrainConfig& cfg);

}  // namespace pcqa
