#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pcqa/common.hpp"
#include "pcqa/image.hpp"

namespace pcqa {

struct FeatureVector {
    Vec values;

    FeatureVector() = default;
    explicit FeatureVector(Vec v) : values(std::move(v)) {}

    int dim() const { return static_cast<int>(values.size()); }
    void check_finite(const std::string& where) const;
};

// Named parameter tensor with its gradient accumulator.
struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    Vec value;
    Vec grad;

    Tensor() = default;
    Tensor(std::string n, std::vector<std::size_t> s);

    std::size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

// Canonical byte serialization (little-endian float64, declaration order).
std::uint64_t checksum_params(const std::vector<Tensor*>& params);
inline bool assert_frozen(std::uint64_t before, std::uint64_t after) { return before == after; }

struct EncodeCache {
    virtual ~EncodeCache() = default;
};

// Image -> single pooled embedding, no spatial map.
class VisionEncoder {
  public:
    virtual ~VisionEncoder() = default;
    virtual const std::string& name() const = 0;
    virtual int output_dim() const = 0;
    virtual bool trainable() const = 0;
    // Per-channel standardization applied to [0,1] pixels before the stack.
    virtual double pixel_mean() const { return 0.5; }
    virtual double pixel_std() const { return 0.5; }
    virtual std::vector<Tensor*> params() = 0;
    virtual FeatureVector encode(const Image& img) const = 0;
    virtual std::unique_ptr<EncodeCache> forward(const Image& img, FeatureVector& out) = 0;
    virtual void backward(const EncodeCache& cache, const Vec& d_out) = 0;
};

// Batch contract: identical spatial sizes, finite pixels, one vector per image.
std::vector<FeatureVector> encode_vision(const VisionEncoder& enc, const std::vector<Image>& images);

class TextEncoder {
  public:
    virtual ~TextEncoder() = default;
    virtual const std::string& name() const = 0;
    virtual int output_dim() const = 0;
    virtual bool frozen() const = 0;
    virtual std::vector<Tensor*> params() = 0;
    virtual FeatureVector encode(const std::string& prompt) const = 0;
    // Gradient hook for the trainable-text ablation; no-op unless supported.
    virtual void accumulate_grad(const std::string& prompt, const Vec& d_out) { (void)prompt, (void)d_out; }
};

// Concatenation of member outputs in declared order; members stay frozen
// unless the trainable-text ablation flag is set at model level.
class HybridTextEncoder {
  public:
    explicit HybridTextEncoder(std::vector<std::unique_ptr<TextEncoder>> members);

    int output_dim() const { return output_dim_; }
    std::size_t member_count() const { return members_.size(); }
    TextEncoder& member(std::size_t i) { return *members_[i]; }
    const TextEncoder& member(std::size_t i) const { return *members_[i]; }

    FeatureVector encode(const std::string& prompt) const;
    void accumulate_grad(const std::string& prompt, const Vec& d_out);
    std::vector<Tensor*> params();
    std::vector<std::uint64_t> member_checksums() const;

  private:
    std::vector<std::unique_ptr<TextEncoder>> members_;
    int output_dim_ = 0;
};

// Single affine map, no nonlinearity.
class Adapter {
  public:
    Adapter(std::string name, int in_dim, int out_dim, Rng& rng);

    int in_dim() const { return in_dim_; }
    int out_dim() const { return out_dim_; }

    FeatureVector adapt(const FeatureVector& v) const;
    void backward(const FeatureVector& input, const Vec& d_out, Vec& d_in);
    std::vector<Tensor*> params() { return {&weight_, &bias_}; }
    Tensor& weight() { return weight_; }
    Tensor& bias() { return bias_; }

  private:
    int in_dim_, out_dim_;
    Tensor weight_;  // out_dim x in_dim, row-major
    Tensor bias_;    // out_dim
};

// Seeded toy stack: adaptive 8x12 average pool, two 3x3 convolutions with a
// rectifier, global mean pool, affine projection to output_dim.
std::unique_ptr<VisionEncoder> make_toy_vision_encoder(const std::string& name, int output_dim,
                                                       int channels, std::uint64_t seed);

// Byte-hash-seeded deterministic embedding: fixed prompt features projected
// through a seeded matrix. Frozen by default.
std::unique_ptr<TextEncoder> make_hash_text_encoder(const std::string& name, int output_dim,
                                                    std::uint64_t seed, bool frozen = true);

// Bridge hooks for real pretrained backbones: features precomputed offline,
// keyed by content hash (images) or prompt hash, one CSV row `key,v0,v1,...`.
std::unique_ptr<VisionEncoder> make_precomputed_vision_encoder(const std::string& name,
                                                               int output_dim,
                                                               const std::string& table_path);
std::unique_ptr<TextEncoder> make_precomputed_text_encoder(const std::string& name, int output_dim,
                                                           const std::string& table_path);

std::string image_content_key(const Image& img);
std::string prompt_content_key(const std::string& prompt);

// Token grammar: "toy_conv:DIM[:CHANNELS]" | "precomputed:DIM:PATH".
std::unique_ptr<VisionEncoder> make_vision_encoder(const std::string& token, std::uint64_t seed);
// Token grammar: "NAME:DIM" (hash toy) | "precomputed:NAME:DIM:PATH";
// comma-joined list for the hybrid.
std::unique_ptr<HybridTextEncoder> make_hybrid_text_encoder(const std::string& token_list,
                                                            std::uint64_t seed,
                                                            bool trainable = false);

void affine_init(Tensor& weight, Tensor& bias, int fan_in, Rng& rng);

}  // namespace pcqa
