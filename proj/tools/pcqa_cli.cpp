#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcqa/checkpoint.hpp"
#include "pcqa/csv.hpp"
#include "pcqa/evaluation.hpp"
#include "pcqa/training.hpp"

namespace fs = std::filesystem;
using namespace pcqa;

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

void apply_seed_override(TrainConfig& cfg) {
    if (const char* env = std::getenv("PCQA_SEED")) {
        try {
            cfg.seed = std::stoull(env);
        } catch (const std::exception&) {
            throw ConfigError(std::string("invalid PCQA_SEED: ") + env);
        }
    }
}

int cmd_train(const std::string& config_path, const std::string& train_path,
              const std::string& val_path, const std::string& out_dir) {
    TrainConfig cfg = load_config(config_path);
    apply_seed_override(cfg);
    const auto train_set = load_manifest(train_path);
    const auto val_set = load_manifest(val_path);

    fs::create_directories(out_dir);
    save_config(cfg, (fs::path(out_dir) / "resolved_config.txt").string());

    auto model = build_model(cfg);
    std::ofstream metrics((fs::path(out_dir) / "metrics.csv").string());
    if (!metrics) throw DataError("cannot write metrics log in " + out_dir);
    metrics << metrics_csv_header() << '\n';

    TrainCallbacks callbacks;
    callbacks.on_epoch = [&](const EpochMetrics& m, bool) {
        metrics << metrics_csv_row(m) << '\n';
        metrics.flush();
    };
    callbacks.on_checkpoint = [&](PCQAModel& m, bool is_best) {
        save_checkpoint((fs::path(out_dir) / "last.ckpt").string(), m, cfg);
        if (is_best) save_checkpoint((fs::path(out_dir) / "best.ckpt").string(), m, cfg);
    };
    const auto result = train(*model, cfg, train_set, val_set, callbacks);
    if (result.best_epoch >= 0)
        std::cout << "best epoch " << result.best_epoch << " val_score " << result.best_val_score
                  << '\n';
    return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& manifest_path,
                const std::string& out_path, bool tta) {
    auto loaded = load_checkpoint(ckpt_path);
    const auto samples = load_manifest(manifest_path);
    const auto scores = predict_scores(*loaded.model, loaded.config, samples, tta);
    PredictionSet preds;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        preds.ids.push_back(samples[i].id);
        preds.scores.push_back(scores[i]);
    }
    write_predictions(preds, out_path);
    return 0;
}

int cmd_ensemble(const std::string& inputs, const std::string& out_path) {
    std::vector<PredictionSet> members;
    for (const auto& path : split_list(inputs)) members.push_back(read_predictions(path));
    if (members.empty()) throw DataError("ensemble requires at least one input file");
    write_predictions(ensemble_blend(members), out_path);
    return 0;
}

int cmd_evaluate(const std::string& pred_path, const std::string& manifest_path) {
    const auto preds = read_predictions(pred_path);
    const auto samples = load_manifest(manifest_path);
    std::map<std::string, double> labels;
    for (const auto& s : samples) {
        if (!s.mos) throw DataError("manifest sample without mos: " + s.id);
        labels[s.id] = *s.mos;
    }
    Vec gt;
    for (const auto& id : preds.ids) {
        auto it = labels.find(id);
        if (it == labels.end()) throw DataError("prediction id not in manifest: " + id);
        gt.push_back(it->second);
    }
    const double s = srcc(preds.scores, gt);
    const double p = plcc(preds.scores, gt);
    std::printf("%.9g,%.9g,%.9g\n", s, p, (s + p) / 2.0);
    return 0;
}

int cmd_report(const std::string& runs, const std::string& out_path) {
    std::ofstream out(out_path);
    if (!out) throw DataError("cannot write report: " + out_path);
    out << "run,vision_encoder,text_encoders,mixer_kind,epochs,best_epoch,"
           "best_val_srcc,best_val_plcc,best_val_score\n";
    for (const auto& dir : split_list(runs)) {
        const TrainConfig cfg = load_config((fs::path(dir) / "resolved_config.txt").string());
        const auto lines = read_lines((fs::path(dir) / "metrics.csv").string());
        if (lines.empty() || lines[0] != metrics_csv_header())
            throw DataError("malformed metrics log in " + dir);
        int best_epoch = -1;
        double best_srcc = 0, best_plcc = 0, best_score = 0;
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            const auto f = split_csv_line(lines[i]);
            if (f.size() != 6) throw DataError("malformed metrics row in " + dir);
            const double score = std::stod(f[4]);
            if (best_epoch < 0 || score > best_score) {
                best_epoch = std::stoi(f[0]);
                best_srcc = std::stod(f[2]);
                best_plcc = std::stod(f[3]);
                best_score = score;
            }
        }
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g", best_epoch, best_srcc, best_plcc,
                      best_score);
        out << csv_escape(fs::path(dir).filename().string()) << ',' << csv_escape(cfg.vision_encoder)
            << ',' << csv_escape(cfg.text_encoders) << ',' << mixer_kind_name(cfg.mixer_kind) << ','
            << cfg.epochs << ',' << buf << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prompt-conditioned quality assessment"};
    app.require_subcommand(1);

    std::string config_path, train_manifest, val_manifest, out_dir;
    auto* train_cmd = app.add_subcommand("train", "train a model");
    train_cmd->add_option("--config", config_path)->required();
    train_cmd->add_option("--train", train_manifest)->required();
    train_cmd->add_option("--val", val_manifest)->required();
    train_cmd->add_option("--out", out_dir)->required();

    std::string ckpt_path, manifest_path, out_file;
    bool tta = false;
    auto* predict_cmd = app.add_subcommand("predict", "score a manifest");
    predict_cmd->add_option("--checkpoint", ckpt_path)->required();
    predict_cmd->add_option("--manifest", manifest_path)->required();
    predict_cmd->add_option("--out", out_file)->required();
    predict_cmd->add_flag("--tta", tta, "average with horizontally flipped input");

    std::string inputs, ens_out;
    auto* ensemble_cmd = app.add_subcommand("ensemble", "normalized average blending");
    ensemble_cmd->add_option("--inputs", inputs)->required();
    ensemble_cmd->add_option("--out", ens_out)->required();

    std::string pred_path, eval_manifest;
    auto* eval_cmd = app.add_subcommand("evaluate", "srcc,plcc,val_score of a prediction file");
    eval_cmd->add_option("--pred", pred_path)->required();
    eval_cmd->add_option("--manifest", eval_manifest)->required();

    std::string runs, report_out;
    auto* report_cmd = app.add_subcommand("report", "summarize training runs as CSV");
    report_cmd->add_option("--runs", runs)->required();
    report_cmd->add_option("--out", report_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    }

    try {
        if (*train_cmd) return cmd_train(config_path, train_manifest, val_manifest, out_dir);
        if (*predict_cmd) return cmd_predict(ckpt_path, manifest_path, out_file, tta);
        if (*ensemble_cmd) return cmd_ensemble(inputs, ens_out);
        if (*eval_cmd) return cmd_evaluate(pred_path, eval_manifest);
        if (*report_cmd) return cmd_report(runs, report_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
