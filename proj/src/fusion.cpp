#include "pcqa/fusion.hpp"

#include <cmath>

namespace pcqa {

// ---------------------------------------------------------------------------
// TemporalPooler

TemporalPooler::TemporalPooler(int channels, Rng& rng)
    : channels_(channels),
      conv1_w_("pooler.conv1.weight",
               {static_cast<std::size_t>(channels), static_cast<std::size_t>(channels), 3}),
      conv1_b_("pooler.conv1.bias", {static_cast<std::size_t>(channels)}),
      conv2_w_("pooler.conv2.weight",
               {static_cast<std::size_t>(channels), static_cast<std::size_t>(channels), 3}),
      conv2_b_("pooler.conv2.bias", {static_cast<std::size_t>(channels)}) {
    if (channels < 1) throw ConfigError("temporal pooler channels must be positive");
    affine_init(conv1_w_, conv1_b_, channels * 3, rng);
    affine_init(conv2_w_, conv2_b_, channels * 3, rng);
}

void TemporalPooler::set_identity() {
    std::fill(conv1_w_.value.begin(), conv1_w_.value.end(), 0.0);
    std::fill(conv2_w_.value.begin(), conv2_w_.value.end(), 0.0);
    std::fill(conv1_b_.value.begin(), conv1_b_.value.end(), 0.0);
    std::fill(conv2_b_.value.begin(), conv2_b_.value.end(), 0.0);
    for (int c = 0; c < channels_; ++c) {
        const std::size_t center = (static_cast<std::size_t>(c) * channels_ + c) * 3 + 1;
        conv1_w_.value[center] = 1.0;
        conv2_w_.value[center] = 1.0;
    }
}

std::vector<Vec> TemporalPooler::conv1d(const std::vector<Vec>& in, const Tensor& w,
                                        const Tensor& b) const {
    const int frames = static_cast<int>(in.size());
    std::vector<Vec> out(frames, Vec(channels_, 0.0));
    for (int t = 0; t < frames; ++t)
        for (int o = 0; o < channels_; ++o) {
            double acc = b.value[o];
            for (int k = 0; k < 3; ++k) {
                const int st = t + k - 1;
                if (st < 0 || st >= frames) continue;
                const double* wrow = &w.value[static_cast<std::size_t>(o) * channels_ * 3];
                for (int i = 0; i < channels_; ++i) acc += wrow[static_cast<std::size_t>(i) * 3 + k] * in[st][i];
            }
            out[t][o] = acc;
        }
    return out;
}

FeatureVector TemporalPooler::pool(const std::vector<FeatureVector>& frames) const {
    Cache cache;
    return forward(frames, cache);
}

FeatureVector TemporalPooler::forward(const std::vector<FeatureVector>& frames, Cache& cache) const {
    if (frames.size() < 2) throw DataError("temporal pooling requires T >= 2");
    cache.frames = static_cast<int>(frames.size());
    cache.input.clear();
    for (const auto& f : frames) {
        if (f.dim() != channels_) throw DataError("temporal pooler channel mismatch");
        cache.input.push_back(f.values);
    }
    cache.pre1 = conv1d(cache.input, conv1_w_, conv1_b_);
    cache.act1 = cache.pre1;
    for (auto& row : cache.act1)
        for (double& v : row) v = v > 0.0 ? v : 0.0;
    cache.pre2 = conv1d(cache.act1, conv2_w_, conv2_b_);

    Vec out(channels_, 0.0);
    for (const auto& row : cache.pre2)
        for (int c = 0; c < channels_; ++c) out[c] += row[c];
    for (double& v : out) v /= cache.frames;
    return FeatureVector(std::move(out));
}

std::vector<Vec> TemporalPooler::backward(const Cache& cache, const Vec& d_out) {
    const int frames = cache.frames;
    // mean over T
    std::vector<Vec> d_pre2(frames, Vec(channels_));
    for (int t = 0; t < frames; ++t)
        for (int c = 0; c < channels_; ++c) d_pre2[t][c] = d_out[c] / frames;

    auto conv_back = [&](const std::vector<Vec>& in, const std::vector<Vec>& d_o, Tensor& w,
                         Tensor& b) {
        std::vector<Vec> d_in(frames, Vec(channels_, 0.0));
        for (int t = 0; t < frames; ++t)
            for (int o = 0; o < channels_; ++o) {
                const double g = d_o[t][o];
                b.grad[o] += g;
                for (int k = 0; k < 3; ++k) {
                    const int st = t + k - 1;
                    if (st < 0 || st >= frames) continue;
                    for (int i = 0; i < channels_; ++i) {
                        const std::size_t wi = (static_cast<std::size_t>(o) * channels_ + i) * 3 + k;
                        w.grad[wi] += g * in[st][i];
                        d_in[st][i] += g * w.value[wi];
                    }
                }
            }
        return d_in;
    };

    auto d_act1 = conv_back(cache.act1, d_pre2, conv2_w_, conv2_b_);
    for (int t = 0; t < frames; ++t)
        for (int c = 0; c < channels_; ++c)
            if (cache.pre1[t][c] <= 0.0) d_act1[t][c] = 0.0;
    return conv_back(cache.input, d_act1, conv1_w_, conv1_b_);
}

// ---------------------------------------------------------------------------
// Mixer

FeatureVector mix(MixerKind kind, const FeatureVector& v, const FeatureVector& t) {
    if (kind == MixerKind::Concatenation) {
        Vec out;
        out.reserve(v.values.size() + t.values.size());
        out.insert(out.end(), v.values.begin(), v.values.end());
        out.insert(out.end(), t.values.begin(), t.values.end());
        return FeatureVector(std::move(out));
    }
    if (v.dim() != t.dim())
        throw DataError("dot-product mixer requires equal dims, got " + std::to_string(v.dim()) +
                        " and " + std::to_string(t.dim()));
    Vec out(v.values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = v.values[i] * t.values[i];
    return FeatureVector(std::move(out));
}

// ---------------------------------------------------------------------------
// RegressionHead

RegressionHead::RegressionHead(int in_dim, int hidden_dim, Rng& rng)
    : in_dim_(in_dim),
      hidden_dim_(hidden_dim),
      w1_("head.layer1.weight", {static_cast<std::size_t>(hidden_dim), static_cast<std::size_t>(in_dim)}),
      b1_("head.layer1.bias", {static_cast<std::size_t>(hidden_dim)}),
      w2_("head.layer2.weight", {1, static_cast<std::size_t>(hidden_dim)}),
      b2_("head.layer2.bias", {1}) {
    if (in_dim < 1 || hidden_dim < 1) throw ConfigError("regression head dims must be positive");
    affine_init(w1_, b1_, in_dim, rng);
    affine_init(w2_, b2_, hidden_dim, rng);
}

double RegressionHead::score(const FeatureVector& mixed) const {
    Cache cache;
    return forward(mixed, cache);
}

double RegressionHead::forward(const FeatureVector& mixed, Cache& cache) const {
    if (mixed.dim() != in_dim_)
        throw DataError("regression head input dim " + std::to_string(mixed.dim()) + " != " +
                        std::to_string(in_dim_));
    cache.input = mixed.values;
    cache.pre_hidden.assign(hidden_dim_, 0.0);
    for (int h = 0; h < hidden_dim_; ++h) {
        double acc = b1_.value[h];
        const double* row = &w1_.value[static_cast<std::size_t>(h) * in_dim_];
        for (int i = 0; i < in_dim_; ++i) acc += row[i] * mixed.values[i];
        cache.pre_hidden[h] = acc;
    }
    double out = b2_.value[0];
    for (int h = 0; h < hidden_dim_; ++h)
        out += w2_.value[h] * (cache.pre_hidden[h] > 0.0 ? cache.pre_hidden[h] : 0.0);
    return out;
}

Vec RegressionHead::backward(const Cache& cache, double d_score) {
    Vec d_in(in_dim_, 0.0);
    b2_.grad[0] += d_score;
    for (int h = 0; h < hidden_dim_; ++h) {
        const double act = cache.pre_hidden[h] > 0.0 ? cache.pre_hidden[h] : 0.0;
        w2_.grad[h] += d_score * act;
        if (cache.pre_hidden[h] <= 0.0) continue;
        const double g = d_score * w2_.value[h];
        b1_.grad[h] += g;
        double* wrow = &w1_.grad[static_cast<std::size_t>(h) * in_dim_];
        const double* row = &w1_.value[static_cast<std::size_t>(h) * in_dim_];
        for (int i = 0; i < in_dim_; ++i) {
            wrow[i] += g * cache.input[i];
            d_in[i] += g * row[i];
        }
    }
    return d_in;
}

// ---------------------------------------------------------------------------
// PCQAModel

namespace {
int mixer_out_dim(MixerKind kind, int latent) {
    return kind == MixerKind::Concatenation ? 2 * latent : latent;
}
}  // namespace

PCQAModel::PCQAModel(std::unique_ptr<VisionEncoder> vision, int latent_dim,
                     std::unique_ptr<HybridTextEncoder> text, MixerKind mixer, int head_hidden,
                     std::uint64_t seed, bool text_trainable)
    : vision_(std::move(vision)),
      text_(std::move(text)),
      init_rng_(mix_seed(seed, "model-init")),
      vision_adapter_("vision_adapter", vision_->output_dim(), latent_dim, init_rng_),
      prompt_adapter_("prompt_adapter", text_->output_dim(), latent_dim, init_rng_),
      pooler_(vision_->output_dim(), init_rng_),
      mixer_(mixer),
      head_(mixer_out_dim(mixer, latent_dim), head_hidden, init_rng_),
      text_trainable_(text_trainable) {}

std::unique_ptr<PCQAModel> build_model(const TrainConfig& cfg) {
    cfg.validate();
    auto vision = make_vision_encoder(cfg.vision_encoder, cfg.seed);
    auto text = make_hybrid_text_encoder(cfg.text_encoders, cfg.seed, cfg.text_trainable);
    return std::make_unique<PCQAModel>(std::move(vision), cfg.latent_dim, std::move(text),
                                       cfg.mixer_kind, cfg.head_hidden_dim, cfg.seed,
                                       cfg.text_trainable);
}

FeatureVector PCQAModel::pool_or_passthrough(const std::vector<FeatureVector>& frames,
                                             TemporalPooler::Cache* cache, bool* pooled) const {
    if (frames.empty()) throw DataError("forward requires at least one frame");
    if (frames.size() == 1) {
        if (pooled) *pooled = false;
        return frames.front();
    }
    if (pooled) *pooled = true;
    TemporalPooler::Cache local;
    return pooler_.forward(frames, cache ? *cache : local);
}

double PCQAModel::forward(const std::vector<Image>& frames, const std::string& prompt) const {
    auto features = encode_vision(*vision_, frames);
    const FeatureVector pooled = pool_or_passthrough(features, nullptr, nullptr);
    const FeatureVector v = vision_adapter_.adapt(pooled);
    const FeatureVector t = prompt_adapter_.adapt(text_->encode(prompt));
    return head_.score(mix(mixer_, v, t));
}

double PCQAModel::forward_image(const Image& image, const std::string& prompt) const {
    return forward({image}, prompt);
}

PCQAModel::Cache PCQAModel::forward_train(const std::vector<Image>& frames,
                                          const std::string& prompt) {
    Cache cache;
    cache.prompt = prompt;
    for (const auto& img : frames) {
        FeatureVector fv;
        cache.vision_caches.push_back(vision_->forward(img, fv));
        fv.check_finite("vision forward");
        cache.frame_features.push_back(std::move(fv));
    }
    cache.vision_feature =
        pool_or_passthrough(cache.frame_features, &cache.pooler_cache, &cache.pooled);
    cache.prompt_feature = text_->encode(prompt);
    cache.vision_latent = vision_adapter_.adapt(cache.vision_feature);
    cache.prompt_latent = prompt_adapter_.adapt(cache.prompt_feature);
    cache.mixed = mix(mixer_, cache.vision_latent, cache.prompt_latent);
    cache.score = head_.forward(cache.mixed, cache.head_cache);
    return cache;
}

void PCQAModel::backward(const Cache& cache, double d_score) {
    const Vec d_mixed = head_.backward(cache.head_cache, d_score);

    const int latent = vision_adapter_.out_dim();
    Vec d_v(latent), d_t(latent);
    if (mixer_ == MixerKind::Concatenation) {
        std::copy(d_mixed.begin(), d_mixed.begin() + latent, d_v.begin());
        std::copy(d_mixed.begin() + latent, d_mixed.end(), d_t.begin());
    } else {
        for (int i = 0; i < latent; ++i) {
            d_v[i] = d_mixed[i] * cache.prompt_latent.values[i];
            d_t[i] = d_mixed[i] * cache.vision_latent.values[i];
        }
    }

    Vec d_prompt_feature;
    prompt_adapter_.backward(cache.prompt_feature, d_t, d_prompt_feature);
    if (text_trainable_) text_->accumulate_grad(cache.prompt, d_prompt_feature);

    Vec d_vision_feature;
    vision_adapter_.backward(cache.vision_feature, d_v, d_vision_feature);

    if (cache.pooled) {
        auto d_frames = pooler_.backward(cache.pooler_cache, d_vision_feature);
        for (std::size_t f = 0; f < cache.vision_caches.size(); ++f)
            vision_->backward(*cache.vision_caches[f], d_frames[f]);
    } else {
        vision_->backward(*cache.vision_caches[0], d_vision_feature);
    }
}

std::vector<Tensor*> PCQAModel::trainable_params() {
    std::vector<Tensor*> out;
    if (vision_->trainable())
        for (Tensor* t : vision_->params()) out.push_back(t);
    for (Tensor* t : vision_adapter_.params()) out.push_back(t);
    for (Tensor* t : prompt_adapter_.params()) out.push_back(t);
    for (Tensor* t : pooler_.params()) out.push_back(t);
    for (Tensor* t : head_.params()) out.push_back(t);
    if (text_trainable_)
        for (Tensor* t : text_->params()) out.push_back(t);
    return out;
}

std::vector<Tensor*> PCQAModel::all_params() {
    std::vector<Tensor*> out;
    for (Tensor* t : vision_->params()) out.push_back(t);
    for (Tensor* t : vision_adapter_.params()) out.push_back(t);
    for (Tensor* t : prompt_adapter_.params()) out.push_back(t);
    for (Tensor* t : pooler_.params()) out.push_back(t);
    for (Tensor* t : head_.params()) out.push_back(t);
    for (Tensor* t : text_->params()) out.push_back(t);
    return out;
}

void PCQAModel::zero_grads() {
    for (Tensor* t : all_params()) t->zero_grad();
}

Image preprocess_for_eval(const Image& img, const TrainConfig& cfg) {
    return resize_bilinear(img, cfg.resolution_height, cfg.resolution_width);
}

std::vector<Image> load_model_input(const Sample& sample, const TrainConfig& cfg) {
    std::vector<std::string> paths;
    if (sample.media.kind == MediaKind::Image) paths = sample.media.paths;
    else paths = sample_frames(sample.media, cfg.max_frames);
    std::vector<Image> frames;
    frames.reserve(paths.size());
    for (const auto& p : paths) frames.push_back(preprocess_for_eval(load_image(p), cfg));
    return frames;
}

}  // namespace pcqa
