#include "pcqa/encoders.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "pcqa/csv.hpp"

namespace pcqa {

void FeatureVector::check_finite(const std::string& where) const {
    for (double v : values)
        if (!std::isfinite(v)) throw NumericError("non-finite feature value in " + where);
}

Tensor::Tensor(std::string n, std::vector<std::size_t> s) : name(std::move(n)), shape(std::move(s)) {
    std::size_t total = 1;
    for (std::size_t d : shape) total *= d;
    value.assign(total, 0.0);
    grad.assign(total, 0.0);
}

std::uint64_t checksum_params(const std::vector<Tensor*>& params) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const Tensor* t : params) {
        h = fnv1a64(t->name, h);
        h = fnv1a64(t->value.data(), t->value.size() * sizeof(double), h);
    }
    return h;
}

void affine_init(Tensor& weight, Tensor& bias, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
    for (double& w : weight.value) w = rng.uniform(-bound, bound);
    for (double& b : bias.value) b = rng.uniform(-bound, bound);
}

// ---------------------------------------------------------------------------
// Adapter

Adapter::Adapter(std::string name, int in_dim, int out_dim, Rng& rng)
    : in_dim_(in_dim),
      out_dim_(out_dim),
      weight_(name + ".weight", {static_cast<std::size_t>(out_dim), static_cast<std::size_t>(in_dim)}),
      bias_(name + ".bias", {static_cast<std::size_t>(out_dim)}) {
    if (in_dim < 1 || out_dim < 1) throw ConfigError("adapter dims must be positive");
    affine_init(weight_, bias_, in_dim, rng);
}

FeatureVector Adapter::adapt(const FeatureVector& v) const {
    if (v.dim() != in_dim_)
        throw DataError("adapter " + weight_.name + ": input dim " + std::to_string(v.dim()) +
                        " != " + std::to_string(in_dim_));
    Vec out(out_dim_);
    for (int o = 0; o < out_dim_; ++o) {
        double acc = bias_.value[o];
        const double* row = &weight_.value[static_cast<std::size_t>(o) * in_dim_];
        for (int i = 0; i < in_dim_; ++i) acc += row[i] * v.values[i];
        out[o] = acc;
    }
    return FeatureVector(std::move(out));
}

void Adapter::backward(const FeatureVector& input, const Vec& d_out, Vec& d_in) {
    d_in.assign(in_dim_, 0.0);
    for (int o = 0; o < out_dim_; ++o) {
        const double g = d_out[o];
        bias_.grad[o] += g;
        double* wrow = &weight_.grad[static_cast<std::size_t>(o) * in_dim_];
        const double* row = &weight_.value[static_cast<std::size_t>(o) * in_dim_];
        for (int i = 0; i < in_dim_; ++i) {
            wrow[i] += g * input.values[i];
            d_in[i] += g * row[i];
        }
    }
}

// ---------------------------------------------------------------------------
// Toy vision encoder

namespace {

constexpr int kGridH = 8;
constexpr int kGridW = 12;

struct ToyVisionCache : EncodeCache {
    Vec pooled;  // 3 x Gh x Gw, standardized
    Vec pre1, act1;
    Vec pre2, act2;
    Vec gap;  // channels
};

class ToyVisionEncoder final : public VisionEncoder {
  public:
    ToyVisionEncoder(std::string name, int output_dim, int channels, std::uint64_t seed)
        : name_(std::move(name)),
          output_dim_(output_dim),
          channels_(channels),
          conv1_w_(name_ + ".conv1.weight",
                   {static_cast<std::size_t>(channels), 3, 3, 3}),
          conv1_b_(name_ + ".conv1.bias", {static_cast<std::size_t>(channels)}),
          conv2_w_(name_ + ".conv2.weight",
                   {static_cast<std::size_t>(channels), static_cast<std::size_t>(channels), 3, 3}),
          conv2_b_(name_ + ".conv2.bias", {static_cast<std::size_t>(channels)}),
          proj_w_(name_ + ".proj.weight",
                  {static_cast<std::size_t>(output_dim), static_cast<std::size_t>(channels)}),
          proj_b_(name_ + ".proj.bias", {static_cast<std::size_t>(output_dim)}) {
        if (output_dim < 1 || channels < 1) throw ConfigError("toy vision encoder dims must be positive");
        Rng rng(mix_seed(seed, "vision:" + name_));
        affine_init(conv1_w_, conv1_b_, 3 * 9, rng);
        affine_init(conv2_w_, conv2_b_, channels * 9, rng);
        affine_init(proj_w_, proj_b_, channels, rng);
    }

    const std::string& name() const override { return name_; }
    int output_dim() const override { return output_dim_; }
    bool trainable() const override { return true; }

    std::vector<Tensor*> params() override {
        return {&conv1_w_, &conv1_b_, &conv2_w_, &conv2_b_, &proj_w_, &proj_b_};
    }

    FeatureVector encode(const Image& img) const override {
        ToyVisionCache cache;
        return run(img, cache);
    }

    std::unique_ptr<EncodeCache> forward(const Image& img, FeatureVector& out) override {
        auto cache = std::make_unique<ToyVisionCache>();
        out = run(img, *cache);
        return cache;
    }

    void backward(const EncodeCache& cache_base, const Vec& d_out) override {
        const auto& c = dynamic_cast<const ToyVisionCache&>(cache_base);
        const int C = channels_;
        const int cells = kGridH * kGridW;

        Vec d_gap(C, 0.0);
        for (int d = 0; d < output_dim_; ++d) {
            const double g = d_out[d];
            proj_b_.grad[d] += g;
            const double* row = &proj_w_.value[static_cast<std::size_t>(d) * C];
            double* grow = &proj_w_.grad[static_cast<std::size_t>(d) * C];
            for (int o = 0; o < C; ++o) {
                grow[o] += g * c.gap[o];
                d_gap[o] += g * row[o];
            }
        }

        Vec d_act2(static_cast<std::size_t>(C) * cells);
        for (int o = 0; o < C; ++o) {
            const double g = d_gap[o] / cells;
            for (int i = 0; i < cells; ++i) d_act2[static_cast<std::size_t>(o) * cells + i] = g;
        }
        Vec d_pre2 = relu_backward(c.pre2, d_act2);
        Vec d_act1(static_cast<std::size_t>(C) * cells, 0.0);
        conv_backward(c.act1, C, d_pre2, conv2_w_, conv2_b_, &d_act1);
        Vec d_pre1 = relu_backward(c.pre1, d_act1);
        conv_backward(c.pooled, 3, d_pre1, conv1_w_, conv1_b_, nullptr);
    }

  private:
    static std::size_t idx(int ch, int y, int x) {
        return (static_cast<std::size_t>(ch) * kGridH + y) * kGridW + x;
    }

    FeatureVector run(const Image& img, ToyVisionCache& cache) const {
        if (img.height < 1 || img.width < 1) throw DataError("empty image");
        const int C = channels_;
        const int cells = kGridH * kGridW;

        // Adaptive average pool to the fixed grid, then standardize.
        cache.pooled.assign(3u * cells, 0.0);
        for (int gy = 0; gy < kGridH; ++gy) {
            const int y0 = gy * img.height / kGridH;
            const int y1 = std::max(y0 + 1, (gy + 1) * img.height / kGridH);
            for (int gx = 0; gx < kGridW; ++gx) {
                const int x0 = gx * img.width / kGridW;
                const int x1 = std::max(x0 + 1, (gx + 1) * img.width / kGridW);
                double acc[3] = {0, 0, 0};
                for (int y = y0; y < y1; ++y)
                    for (int x = x0; x < x1; ++x)
                        for (int ch = 0; ch < 3; ++ch) {
                            const double v = img.at(y, x, ch);
                            if (!std::isfinite(v)) throw NumericError("non-finite pixel in " + name_);
                            acc[ch] += v;
                        }
                const double n = static_cast<double>((y1 - y0) * (x1 - x0));
                for (int ch = 0; ch < 3; ++ch)
                    cache.pooled[idx(ch, gy, gx)] = (acc[ch] / n - pixel_mean()) / pixel_std();
            }
        }

        cache.pre1.assign(static_cast<std::size_t>(C) * cells, 0.0);
        conv_forward(cache.pooled, 3, conv1_w_, conv1_b_, cache.pre1);
        cache.act1 = relu(cache.pre1);
        cache.pre2.assign(static_cast<std::size_t>(C) * cells, 0.0);
        conv_forward(cache.act1, C, conv2_w_, conv2_b_, cache.pre2);
        cache.act2 = relu(cache.pre2);

        cache.gap.assign(C, 0.0);
        for (int o = 0; o < C; ++o) {
            double s = 0.0;
            for (int i = 0; i < cells; ++i) s += cache.act2[static_cast<std::size_t>(o) * cells + i];
            cache.gap[o] = s / cells;
        }

        Vec out(output_dim_);
        for (int d = 0; d < output_dim_; ++d) {
            double acc = proj_b_.value[d];
            const double* row = &proj_w_.value[static_cast<std::size_t>(d) * C];
            for (int o = 0; o < C; ++o) acc += row[o] * cache.gap[o];
            out[d] = acc;
        }
        return FeatureVector(std::move(out));
    }

    static Vec relu(const Vec& v) {
        Vec out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
        return out;
    }

    static Vec relu_backward(const Vec& pre, const Vec& d_act) {
        Vec out(pre.size());
        for (std::size_t i = 0; i < pre.size(); ++i) out[i] = pre[i] > 0.0 ? d_act[i] : 0.0;
        return out;
    }

    // 3x3 convolution over the Gh x Gw grid, zero same-padding.
    void conv_forward(const Vec& in, int in_ch, const Tensor& w, const Tensor& b, Vec& out) const {
        const int out_ch = static_cast<int>(w.shape[0]);
        for (int o = 0; o < out_ch; ++o)
            for (int y = 0; y < kGridH; ++y)
                for (int x = 0; x < kGridW; ++x) {
                    double acc = b.value[o];
                    for (int i = 0; i < in_ch; ++i)
                        for (int ky = 0; ky < 3; ++ky) {
                            const int sy = y + ky - 1;
                            if (sy < 0 || sy >= kGridH) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int sx = x + kx - 1;
                                if (sx < 0 || sx >= kGridW) continue;
                                acc += w.value[((static_cast<std::size_t>(o) * in_ch + i) * 3 + ky) * 3 + kx] *
                                       in[(static_cast<std::size_t>(i) * kGridH + sy) * kGridW + sx];
                            }
                        }
                    out[(static_cast<std::size_t>(o) * kGridH + y) * kGridW + x] = acc;
                }
    }

    void conv_backward(const Vec& in, int in_ch, const Vec& d_out, Tensor& w, Tensor& b,
                       Vec* d_in) const {
        const int out_ch = static_cast<int>(w.shape[0]);
        for (int o = 0; o < out_ch; ++o)
            for (int y = 0; y < kGridH; ++y)
                for (int x = 0; x < kGridW; ++x) {
                    const double g = d_out[(static_cast<std::size_t>(o) * kGridH + y) * kGridW + x];
                    if (g == 0.0) continue;
                    b.grad[o] += g;
                    for (int i = 0; i < in_ch; ++i)
                        for (int ky = 0; ky < 3; ++ky) {
                            const int sy = y + ky - 1;
                            if (sy < 0 || sy >= kGridH) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int sx = x + kx - 1;
                                if (sx < 0 || sx >= kGridW) continue;
                                const std::size_t wi =
                                    ((static_cast<std::size_t>(o) * in_ch + i) * 3 + ky) * 3 + kx;
                                const std::size_t si =
                                    (static_cast<std::size_t>(i) * kGridH + sy) * kGridW + sx;
                                w.grad[wi] += g * in[si];
                                if (d_in) (*d_in)[si] += g * w.value[wi];
                            }
                        }
                }
    }

    std::string name_;
    int output_dim_;
    int channels_;
    Tensor conv1_w_, conv1_b_, conv2_w_, conv2_b_, proj_w_, proj_b_;
};

// ---------------------------------------------------------------------------
// Hash text encoder

constexpr int kPromptFeatures = 16;
constexpr int kBigramBuckets = 12;

Vec prompt_features(const std::string& prompt) {
    Vec f(kPromptFeatures, 0.0);
    const auto len = static_cast<double>(prompt.size());
    f[0] = 1.0;
    f[1] = len / (len + 32.0);
    if (!prompt.empty()) {
        double sum = 0.0;
        for (unsigned char ch : prompt) sum += ch;
        const double mean = sum / len;
        double ss = 0.0;
        for (unsigned char ch : prompt) {
            const double d = ch - mean;
            ss += d * d;
        }
        f[2] = mean / 255.0;
        f[3] = std::sqrt(ss / len) / 255.0;
    }
    for (std::size_t p = 0; p + 1 < prompt.size(); ++p) {
        unsigned char pair[2] = {static_cast<unsigned char>(prompt[p]),
                                 static_cast<unsigned char>(prompt[p + 1])};
        const auto bucket = fnv1a64(pair, 2) % kBigramBuckets;
        f[4 + bucket] += 1.0 / (len + 1.0);
    }
    return f;
}

class HashTextEncoder final : public TextEncoder {
  public:
    HashTextEncoder(std::string name, int output_dim, std::uint64_t seed, bool frozen)
        : name_(std::move(name)),
          output_dim_(output_dim),
          frozen_(frozen),
          embed_(name_ + ".embed",
                 {static_cast<std::size_t>(output_dim), kPromptFeatures}) {
        if (output_dim < 1) throw ConfigError("text encoder dim must be positive");
        Rng rng(mix_seed(seed, "text:" + name_));
        const double bound = 1.0 / std::sqrt(static_cast<double>(kPromptFeatures));
        for (double& w : embed_.value) w = rng.uniform(-bound, bound);
    }

    const std::string& name() const override { return name_; }
    int output_dim() const override { return output_dim_; }
    bool frozen() const override { return frozen_; }
    std::vector<Tensor*> params() override { return {&embed_}; }

    FeatureVector encode(const std::string& prompt) const override {
        const Vec f = prompt_features(prompt);
        Vec out(output_dim_);
        for (int d = 0; d < output_dim_; ++d) {
            double acc = 0.0;
            const double* row = &embed_.value[static_cast<std::size_t>(d) * kPromptFeatures];
            for (int k = 0; k < kPromptFeatures; ++k) acc += row[k] * f[k];
            out[d] = acc;
        }
        return FeatureVector(std::move(out));
    }

    void accumulate_grad(const std::string& prompt, const Vec& d_out) override {
        const Vec f = prompt_features(prompt);
        for (int d = 0; d < output_dim_; ++d) {
            double* row = &embed_.grad[static_cast<std::size_t>(d) * kPromptFeatures];
            for (int k = 0; k < kPromptFeatures; ++k) row[k] += d_out[d] * f[k];
        }
    }

  private:
    std::string name_;
    int output_dim_;
    bool frozen_;
    Tensor embed_;
};

// ---------------------------------------------------------------------------
// Precomputed feature tables (bridge for real backbones)

std::unordered_map<std::string, Vec> load_feature_table(const std::string& path, int dim) {
    std::unordered_map<std::string, Vec> table;
    for (const auto& line : read_lines(path)) {
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (static_cast<int>(fields.size()) != dim + 1)
            throw DataError("feature table row in " + path + " has wrong arity");
        Vec v(dim);
        for (int i = 0; i < dim; ++i) v[i] = std::stod(fields[i + 1]);
        table.emplace(fields[0], std::move(v));
    }
    return table;
}

class PrecomputedVisionEncoder final : public VisionEncoder {
  public:
    PrecomputedVisionEncoder(std::string name, int output_dim, const std::string& table_path)
        : name_(std::move(name)), output_dim_(output_dim), table_(load_feature_table(table_path, output_dim)) {}

    const std::string& name() const override { return name_; }
    int output_dim() const override { return output_dim_; }
    bool trainable() const override { return false; }
    std::vector<Tensor*> params() override { return {}; }

    FeatureVector encode(const Image& img) const override {
        const auto key = image_content_key(img);
        auto it = table_.find(key);
        if (it == table_.end())
            throw DataError("no precomputed feature for image key " + key + " in encoder " + name_);
        return FeatureVector(it->second);
    }

    std::unique_ptr<EncodeCache> forward(const Image& img, FeatureVector& out) override {
        out = encode(img);
        return std::make_unique<EncodeCache>();
    }

    void backward(const EncodeCache&, const Vec&) override {}

  private:
    std::string name_;
    int output_dim_;
    std::unordered_map<std::string, Vec> table_;
};

class PrecomputedTextEncoder final : public TextEncoder {
  public:
    PrecomputedTextEncoder(std::string name, int output_dim, const std::string& table_path)
        : name_(std::move(name)), output_dim_(output_dim), table_(load_feature_table(table_path, output_dim)) {}

    const std::string& name() const override { return name_; }
    int output_dim() const override { return output_dim_; }
    bool frozen() const override { return true; }
    std::vector<Tensor*> params() override { return {}; }

    FeatureVector encode(const std::string& prompt) const override {
        const auto key = prompt_content_key(prompt);
        auto it = table_.find(key);
        if (it == table_.end())
            throw DataError("no precomputed feature for prompt key " + key + " in encoder " + name_);
        return FeatureVector(it->second);
    }

  private:
    std::string name_;
    int output_dim_;
    std::unordered_map<std::string, Vec> table_;
};

std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

int parse_positive_int(const std::string& s, const std::string& what) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || v < 1)
        throw ConfigError("invalid " + what + ": " + s);
    return v;
}

}  // namespace

std::string image_content_key(const Image& img) {
    std::vector<unsigned char> bytes;
    bytes.reserve(img.data.size() + 8);
    auto push32 = [&](int v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
    };
    push32(img.height);
    push32(img.width);
    for (double v : img.data)
        bytes.push_back(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    return hex64(fnv1a64(bytes.data(), bytes.size()));
}

std::string prompt_content_key(const std::string& prompt) { return hex64(fnv1a64(prompt)); }

std::vector<FeatureVector> encode_vision(const VisionEncoder& enc, const std::vector<Image>& images) {
    std::vector<FeatureVector> out;
    out.reserve(images.size());
    for (const auto& img : images) {
        if (img.height != images.front().height || img.width != images.front().width)
            throw DataError("mixed spatial sizes in vision batch");
        auto fv = enc.encode(img);
        fv.check_finite("encode_vision(" + enc.name() + ")");
        out.push_back(std::move(fv));
    }
    return out;
}

HybridTextEncoder::HybridTextEncoder(std::vector<std::unique_ptr<TextEncoder>> members)
    : members_(std::move(members)) {
    if (members_.empty()) throw ConfigError("hybrid text encoder needs at least one member");
    for (const auto& m : members_) output_dim_ += m->output_dim();
}

FeatureVector HybridTextEncoder::encode(const std::string& prompt) const {
    Vec out;
    out.reserve(output_dim_);
    for (const auto& m : members_) {
        FeatureVector part;
        try {
            part = m->encode(prompt);
        } catch (const std::exception& e) {
            throw DataError("text encoder '" + m->name() + "' failed: " + e.what());
        }
        if (part.dim() != m->output_dim())
            throw NumericError("text encoder '" + m->name() + "' produced wrong dim");
        out.insert(out.end(), part.values.begin(), part.values.end());
    }
    return FeatureVector(std::move(out));
}

void HybridTextEncoder::accumulate_grad(const std::string& prompt, const Vec& d_out) {
    std::size_t offset = 0;
    for (auto& m : members_) {
        const auto d = static_cast<std::size_t>(m->output_dim());
        if (!m->frozen()) {
            Vec slice(d_out.begin() + offset, d_out.begin() + offset + d);
            m->accumulate_grad(prompt, slice);
        }
        offset += d;
    }
}

std::vector<Tensor*> HybridTextEncoder::params() {
    std::vector<Tensor*> out;
    for (auto& m : members_)
        for (Tensor* t : m->params()) out.push_back(t);
    return out;
}

std::vector<std::uint64_t> HybridTextEncoder::member_checksums() const {
    std::vector<std::uint64_t> out;
    for (const auto& m : members_)
        out.push_back(checksum_params(const_cast<TextEncoder&>(*m).params()));
    return out;
}

std::unique_ptr<VisionEncoder> make_toy_vision_encoder(const std::string& name, int output_dim,
                                                       int channels, std::uint64_t seed) {
    return std::make_unique<ToyVisionEncoder>(name, output_dim, channels, seed);
}

std::unique_ptr<TextEncoder> make_hash_text_encoder(const std::string& name, int output_dim,
                                                    std::uint64_t seed, bool frozen) {
    return std::make_unique<HashTextEncoder>(name, output_dim, seed, frozen);
}

std::unique_ptr<VisionEncoder> make_precomputed_vision_encoder(const std::string& name,
                                                               int output_dim,
                                                               const std::string& table_path) {
    return std::make_unique<PrecomputedVisionEncoder>(name, output_dim, table_path);
}

std::unique_ptr<TextEncoder> make_precomputed_text_encoder(const std::string& name, int output_dim,
                                                           const std::string& table_path) {
    return std::make_unique<PrecomputedTextEncoder>(name, output_dim, table_path);
}

std::unique_ptr<VisionEncoder> make_vision_encoder(const std::string& token, std::uint64_t seed) {
    auto parts = split(token, ':');
    if (parts[0] == "toy_conv") {
        if (parts.size() < 2 || parts.size() > 3)
            throw ConfigError("vision encoder token: expected toy_conv:DIM[:CHANNELS], got " + token);
        const int dim = parse_positive_int(parts[1], "vision encoder dim");
        const int channels = parts.size() == 3 ? parse_positive_int(parts[2], "vision channels") : 8;
        return make_toy_vision_encoder(parts[0], dim, channels, seed);
    }
    if (parts[0] == "precomputed") {
        if (parts.size() != 3)
            throw ConfigError("vision encoder token: expected precomputed:DIM:PATH, got " + token);
        return make_precomputed_vision_encoder("precomputed",
                                               parse_positive_int(parts[1], "vision encoder dim"),
                                               parts[2]);
    }
    throw ConfigError("unknown vision encoder: " + token);
}

std::unique_ptr<HybridTextEncoder> make_hybrid_text_encoder(const std::string& token_list,
                                                            std::uint64_t seed, bool trainable) {
    std::vector<std::unique_ptr<TextEncoder>> members;
    for (const auto& token : split(token_list, ',')) {
        auto parts = split(token, ':');
        if (parts[0] == "precomputed") {
            if (parts.size() != 4)
                throw ConfigError("text encoder token: expected precomputed:NAME:DIM:PATH, got " + token);
            members.push_back(make_precomputed_text_encoder(
                parts[1], parse_positive_int(parts[2], "text encoder dim"), parts[3]));
        } else {
            if (parts.size() != 2)
                throw ConfigError("text encoder token: expected NAME:DIM, got " + token);
            members.push_back(make_hash_text_encoder(
                parts[0], parse_positive_int(parts[1], "text encoder dim"), seed, !trainable));
        }
    }
    return std::make_unique<HybridTextEncoder>(std::move(members));
}

}  // namespace pcqa
