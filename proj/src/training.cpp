#include "pcqa/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "pcqa/evaluation.hpp"

namespace pcqa {

// ---------------------------------------------------------------------------
// TrainConfig

MixerKind parse_mixer_kind(const std::string& s) {
    if (s == "concatenation") return MixerKind::Concatenation;
    if (s == "dot_product") return MixerKind::DotProduct;
    throw ConfigError("unknown mixer_kind: " + s);
}

std::string mixer_kind_name(MixerKind k) {
    return k == MixerKind::Concatenation ? "concatenation" : "dot_product";
}

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr_max > 0.0)) throw ConfigError("lr_max must be > 0");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0))
        throw ConfigError("warmup_fraction must be in (0,1)");
    if (!(grad_clip_norm > 0.0)) throw ConfigError("grad_clip_norm must be > 0");
    if (resolution_height < 1 || resolution_width < 1)
        throw ConfigError("resolution must be positive");
    if (max_frames < 1) throw ConfigError("max_frames must be >= 1");
    if (flip_prob < 0.0 || flip_prob > 1.0) throw ConfigError("flip_prob must be in [0,1]");
    if (!(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0))
        throw ConfigError("crop_scale range must satisfy 0 < min <= max <= 1");
    if (brightness_jitter < 0.0 || contrast_jitter < 0.0)
        throw ConfigError("jitter amounts must be >= 0");
    if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
    if (head_hidden_dim < 1) throw ConfigError("head_hidden_dim must be >= 1");
    if (vision_encoder.empty() || text_encoders.empty())
        throw ConfigError("encoder specs must be non-empty");
}

namespace {

double parse_double(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("invalid value for " + key + ": " + v);
    }
}

long parse_long(const std::string& v, const std::string& key) {
    long x = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        throw ConfigError("invalid value for " + key + ": " + v);
    return x;
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("invalid boolean for " + key + ": " + v);
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + " is not key=value: " + line);
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "epochs") cfg.epochs = static_cast<int>(parse_long(value, key));
        else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_long(value, key));
        else if (key == "lr_max") cfg.lr_max = parse_double(value, key);
        else if (key == "weight_decay") cfg.weight_decay = parse_double(value, key);
        else if (key == "warmup_fraction") cfg.warmup_fraction = parse_double(value, key);
        else if (key == "grad_clip_norm") cfg.grad_clip_norm = parse_double(value, key);
        else if (key == "resolution_height") cfg.resolution_height = static_cast<int>(parse_long(value, key));
        else if (key == "resolution_width") cfg.resolution_width = static_cast<int>(parse_long(value, key));
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_long(value, key));
        else if (key == "mixer_kind") cfg.mixer_kind = parse_mixer_kind(value);
        else if (key == "max_frames") cfg.max_frames = static_cast<int>(parse_long(value, key));
        else if (key == "flip_prob") cfg.flip_prob = parse_double(value, key);
        else if (key == "crop_scale_min") cfg.crop_scale_min = parse_double(value, key);
        else if (key == "crop_scale_max") cfg.crop_scale_max = parse_double(value, key);
        else if (key == "brightness_jitter") cfg.brightness_jitter = parse_double(value, key);
        else if (key == "contrast_jitter") cfg.contrast_jitter = parse_double(value, key);
        else if (key == "mixed_precision") cfg.mixed_precision = parse_bool(value, key);
        else if (key == "latent_dim") cfg.latent_dim = static_cast<int>(parse_long(value, key));
        else if (key == "head_hidden_dim") cfg.head_hidden_dim = static_cast<int>(parse_long(value, key));
        else if (key == "vision_encoder") cfg.vision_encoder = value;
        else if (key == "text_encoders") cfg.text_encoders = value;
        else if (key == "text_trainable") cfg.text_trainable = parse_bool(value, key);
        else throw ConfigError("unknown config key: " + key);
    }
    cfg.validate();
    return cfg;
}

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string serialize_config(const TrainConfig& cfg) {
    std::ostringstream out;
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    out << "epochs=" << cfg.epochs << '\n'
        << "batch_size=" << cfg.batch_size << '\n'
        << "lr_max=" << num(cfg.lr_max) << '\n'
        << "weight_decay=" << num(cfg.weight_decay) << '\n'
        << "warmup_fraction=" << num(cfg.warmup_fraction) << '\n'
        << "grad_clip_norm=" << num(cfg.grad_clip_norm) << '\n'
        << "resolution_height=" << cfg.resolution_height << '\n'
        << "resolution_width=" << cfg.resolution_width << '\n'
        << "seed=" << cfg.seed << '\n'
        << "mixer_kind=" << mixer_kind_name(cfg.mixer_kind) << '\n'
        << "max_frames=" << cfg.max_frames << '\n'
        << "flip_prob=" << num(cfg.flip_prob) << '\n'
        << "crop_scale_min=" << num(cfg.crop_scale_min) << '\n'
        << "crop_scale_max=" << num(cfg.crop_scale_max) << '\n'
        << "brightness_jitter=" << num(cfg.brightness_jitter) << '\n'
        << "contrast_jitter=" << num(cfg.contrast_jitter) << '\n'
        << "mixed_precision=" << (cfg.mixed_precision ? "true" : "false") << '\n'
        << "latent_dim=" << cfg.latent_dim << '\n'
        << "head_hidden_dim=" << cfg.head_hidden_dim << '\n'
        << "vision_encoder=" << cfg.vision_encoder << '\n'
        << "text_encoders=" << cfg.text_encoders << '\n'
        << "text_trainable=" << (cfg.text_trainable ? "true" : "false") << '\n';
    return out.str();
}

void save_config(const TrainConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config: " + path);
    out << serialize_config(cfg);
}

// ---------------------------------------------------------------------------
// Augmentation

AugmentParams draw_augment_params(Rng& rng, const TrainConfig& cfg) {
    AugmentParams p;
    p.flip = rng.uniform() < cfg.flip_prob;
    p.crop_scale = rng.uniform(cfg.crop_scale_min, cfg.crop_scale_max);
    p.offset_y = rng.uniform();
    p.offset_x = rng.uniform();
    p.brightness = 1.0 + cfg.brightness_jitter * (2.0 * rng.uniform() - 1.0);
    p.contrast = 1.0 + cfg.contrast_jitter * (2.0 * rng.uniform() - 1.0);
    return p;
}

Image apply_augment(const Image& img, const AugmentParams& p, const TrainConfig& cfg) {
    const double side = std::sqrt(p.crop_scale);
    const int ch = std::clamp<int>(static_cast<int>(std::lround(img.height * side)), 1, img.height);
    const int cw = std::clamp<int>(static_cast<int>(std::lround(img.width * side)), 1, img.width);
    const int y0 = static_cast<int>(p.offset_y * (img.height - ch + 1));
    const int x0 = static_cast<int>(p.offset_x * (img.width - cw + 1));
    Image out = resize_bilinear(crop(img, std::min(y0, img.height - ch), std::min(x0, img.width - cw), ch, cw),
                                cfg.resolution_height, cfg.resolution_width);
    if (p.flip) out = hflip(out);
    if (p.brightness != 1.0)
        for (double& v : out.data) v *= p.brightness;
    if (p.contrast != 1.0) {
        const double m = out.mean();
        for (double& v : out.data) v = (v - m) * p.contrast + m;
    }
    clamp01(out);
    return out;
}

Image augment(const Image& img, Rng& rng, const TrainConfig& cfg) {
    return apply_augment(img, draw_augment_params(rng, cfg), cfg);
}

// ---------------------------------------------------------------------------
// Loss, schedule, clipping, optimizer

double mse_loss(const Vec& pred, const Vec& target) {
    if (pred.size() != target.size()) throw DataError("mse_loss length mismatch");
    if (pred.empty()) throw DataError("mse_loss on empty vectors");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

double lr_at(long step, long total_steps, const TrainConfig& cfg) {
    if (total_steps <= 0) throw ConfigError("lr_at requires total_steps > 0");
    if (step < 0 || step > total_steps) throw ConfigError("lr_at step out of range");
    const long warmup = std::lround(cfg.warmup_fraction * static_cast<double>(total_steps));
    if (warmup < 1) throw ConfigError("warmup window rounds to zero steps");
    if (step < warmup)
        return cfg.lr_max * static_cast<double>(step) / static_cast<double>(warmup);
    if (total_steps == warmup) return cfg.lr_max;
    const double progress = static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
    return cfg.lr_max * 0.5 * (1.0 + std::cos(M_PI * progress));
}

double clip_gradients(const std::vector<Tensor*>& params, double max_norm) {
    if (!(max_norm > 0.0)) throw ConfigError("max_norm must be > 0");
    double ss = 0.0;
    for (const Tensor* t : params)
        for (double g : t->grad) {
            if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + t->name);
            ss += g * g;
        }
    const double norm = std::sqrt(ss);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (Tensor* t : params)
            for (double& g : t->grad) g *= scale;
    }
    return norm;
}

AdamW::AdamW(std::vector<Tensor*> params, double weight_decay, double beta1, double beta2,
             double epsilon)
    : params_(std::move(params)),
      weight_decay_(weight_decay),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon) {
    for (const Tensor* t : params_) {
        m_.emplace_back(t->size(), 0.0);
        v_.emplace_back(t->size(), 0.0);
    }
}

void AdamW::step(double lr) {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
        Tensor& t = *params_[p];
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double g = t.grad[i];
            m_[p][i] = beta1_ * m_[p][i] + (1.0 - beta1_) * g;
            v_[p][i] = beta2_ * v_[p][i] + (1.0 - beta2_) * g * g;
            const double m_hat = m_[p][i] / bc1;
            const double v_hat = v_[p][i] / bc2;
            // decoupled weight decay: applied to the weight directly
            t.value[i] -= lr * (m_hat / (std::sqrt(v_hat) + epsilon_) + weight_decay_ * t.value[i]);
        }
    }
}

// ---------------------------------------------------------------------------
// Train loop

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.next_u64() % i;
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

// Originals cached in memory at native size; augmentation crops the original.
std::vector<std::vector<Image>> load_originals(const std::vector<Sample>& samples,
                                               const TrainConfig& cfg) {
    std::vector<std::vector<Image>> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        std::vector<std::string> paths = s.media.kind == MediaKind::Image
                                             ? s.media.paths
                                             : sample_frames(s.media, cfg.max_frames);
        std::vector<Image> frames;
        frames.reserve(paths.size());
        for (const auto& p : paths) frames.push_back(load_image(p));
        out.push_back(std::move(frames));
    }
    return out;
}

}  // namespace

std::string metrics_csv_header() { return "epoch,train_loss,val_srcc,val_plcc,val_score,lr_last"; }

std::string metrics_csv_row(const EpochMetrics& m) {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g", m.epoch, m.train_loss, m.val_srcc,
                  m.val_plcc, m.val_score, m.lr_last);
    return buf;
}

TrainResult train(PCQAModel& model, const TrainConfig& cfg, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainCallbacks& callbacks) {
    cfg.validate();
    if (train_set.empty()) throw DataError("empty training set");
    if (val_set.empty()) throw DataError("empty validation set");
    model.mos_stats = compute_mos_stats(train_set);

    TrainResult result;
    if (cfg.epochs == 0) {
        if (callbacks.on_checkpoint) callbacks.on_checkpoint(model, true);
        return result;
    }

    const auto train_images = load_originals(train_set, cfg);
    // Validation inputs are resized once; the eval path applies no augmentation.
    std::vector<std::vector<Image>> val_inputs;
    Vec val_gt;
    for (const auto& s : val_set) {
        if (!s.mos) throw DataError("validation sample without mos: " + s.id);
        val_gt.push_back(*s.mos);
    }
    {
        const auto originals = load_originals(val_set, cfg);
        for (const auto& frames : originals) {
            std::vector<Image> resized;
            for (const auto& f : frames) resized.push_back(preprocess_for_eval(f, cfg));
            val_inputs.push_back(std::move(resized));
        }
    }

    Vec train_targets;
    for (const auto& s : train_set) {
        if (!s.mos) throw DataError("training sample without mos: " + s.id);
        train_targets.push_back(normalize_mos(*s.mos, model.mos_stats));
    }

    const auto frozen_before = model.text_encoder().member_checksums();
    auto trainable = model.trainable_params();
    AdamW optimizer(trainable, cfg.weight_decay);

    const long steps_per_epoch =
        (static_cast<long>(train_set.size()) + cfg.batch_size - 1) / cfg.batch_size;
    const long total_steps = static_cast<long>(cfg.epochs) * steps_per_epoch;

    long global_step = 0;
    double lr_last = 0.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffled_indices(train_set.size(), mix_seed(cfg.seed, "shuffle", epoch));
        double loss_sum = 0.0;
        for (long step = 0; step < steps_per_epoch; ++step) {
            model.zero_grads();
            const std::size_t begin = static_cast<std::size_t>(step) * cfg.batch_size;
            const std::size_t end = std::min(begin + cfg.batch_size, train_set.size());
            const double batch_n = static_cast<double>(end - begin);
            for (std::size_t k = begin; k < end; ++k) {
                const std::size_t i = order[k];
                const Sample& s = train_set[i];
                Rng rng(mix_seed(cfg.seed, "augment:" + s.id, static_cast<std::uint64_t>(epoch)));
                // one parameter draw per clip, applied to every frame
                const AugmentParams p = draw_augment_params(rng, cfg);
                std::vector<Image> frames;
                frames.reserve(train_images[i].size());
                for (const auto& f : train_images[i]) frames.push_back(apply_augment(f, p, cfg));

                auto cache = model.forward_train(frames, s.prompt);
                if (!std::isfinite(cache.score)) throw NumericError("non-finite model output");
                const double err = cache.score - train_targets[i];
                loss_sum += err * err;
                model.backward(cache, 2.0 * err / batch_n);
            }
            if (cfg.mixed_precision)
                for (Tensor* t : trainable) round_to_f32(t->grad);
            clip_gradients(trainable, cfg.grad_clip_norm);
            lr_last = lr_at(global_step, total_steps, cfg);
            optimizer.step(lr_last);
            ++global_step;
        }
        const double train_loss = loss_sum / static_cast<double>(train_set.size());
        if (!std::isfinite(train_loss)) throw NumericError("non-finite training loss");

        if (!model.text_trainable()) {
            const auto frozen_after = model.text_encoder().member_checksums();
            if (frozen_after != frozen_before)
                throw NumericError("frozen text encoder parameters changed during training");
        }

        Vec val_pred;
        val_pred.reserve(val_inputs.size());
        for (std::size_t i = 0; i < val_inputs.size(); ++i)
            val_pred.push_back(model.forward(val_inputs[i], val_set[i].prompt));

        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = train_loss;
        m.val_srcc = srcc(val_pred, val_gt);
        m.val_plcc = plcc(val_pred, val_gt);
        m.val_score = (m.val_srcc + m.val_plcc) / 2.0;
        m.lr_last = lr_last;
        result.log.push_back(m);

        const bool is_best = result.best_epoch < 0 || m.val_score > result.best_val_score;
        if (is_best) {
            result.best_epoch = epoch;
            result.best_val_score = m.val_score;
        }
        if (callbacks.on_epoch) callbacks.on_epoch(m, is_best);
        if (callbacks.on_checkpoint) callbacks.on_checkpoint(model, is_best);
    }
    return result;
}

std::vector<double> predict_scores(const PCQAModel& model, const TrainConfig& cfg,
                                   const std::vector<Sample>& samples, bool tta) {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        const auto frames = load_model_input(s, cfg);
        out.push_back(tta ? tta_flip(model, frames, s.prompt) : model.forward(frames, s.prompt));
    }
    return out;
}

}  // namespace pcqa
