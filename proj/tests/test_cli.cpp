#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "pcqa/csv.hpp"
#include "pcqa/evaluation.hpp"
#include "pcqa/training.hpp"
#include "test_util.hpp"

using namespace pcqa;
using namespace pcqa_test;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(PCQA_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

int run_cli_capture(const std::string& args, const std::string& stdout_path) {
    const std::string cmd =
        std::string(PCQA_CLI_PATH) + " " + args + " >" + stdout_path + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Small labeled dataset: noise images plus train/val manifests and a config file.
struct Fixture {
    std::string config, train_manifest, val_manifest;

    explicit Fixture(const TempDir& dir, int epochs = 2) {
        TrainConfig cfg = toy_config();
        cfg.epochs = epochs;
        config = dir.str("config.txt");
        save_config(cfg, config);

        auto add = [&](std::ostream& out, const std::string& id, int img_seed, double mos) {
            const std::string name = id + ".png";
            save_image_png(noise_image(20, 30, img_seed), dir.str(name));
            out << id << "," << name << ",prompt for " << id << "," << mos << "\n";
        };
        {
            std::ofstream out(dir.str("train.csv"));
            out << "id,media,prompt,mos\n";
            for (int i = 0; i < 6; ++i)
                add(out, "t" + std::to_string(i), 200 + i, 1.0 + 0.7 * i);
        }
        {
            std::ofstream out(dir.str("val.csv"));
            out << "id,media,prompt,mos\n";
            for (int i = 0; i < 4; ++i)
                add(out, "v" + std::to_string(i), 300 + i, 1.5 + 0.9 * i);
        }
        train_manifest = dir.str("train.csv");
        val_manifest = dir.str("val.csv");
    }
};

}  // namespace

TEST_CASE("cli rejects bad invocations with exit code 2") {
    CHECK(run_cli("") == 2);
    CHECK(run_cli("no-such-command") == 2);
    CHECK(run_cli("train --config only") == 2);
    CHECK(run_cli("predict --checkpoint a --manifest b --out c --bogus") == 2);
}

TEST_CASE("cli maps error categories to exit codes") {
    TempDir dir("cli_err");
    Fixture fx(dir);

    SUBCASE("unknown config key is a config error") {
        write_file(dir.str("bad.txt"), "epochs=1\nno_such_key=3\n");
        CHECK(run_cli("train --config " + dir.str("bad.txt") + " --train " + fx.train_manifest +
                      " --val " + fx.val_manifest + " --out " + dir.str("run")) == 2);
    }
    SUBCASE("missing manifest is a data error") {
        CHECK(run_cli("train --config " + fx.config + " --train " + dir.str("absent.csv") +
                      " --val " + fx.val_manifest + " --out " + dir.str("run")) == 3);
    }
    SUBCASE("constant ensemble member is a numeric error") {
        write_file(dir.str("const.csv"), "id,score\na,1\nb,1\nc,1\n");
        CHECK(run_cli("ensemble --inputs " + dir.str("const.csv") + " --out " +
                      dir.str("blend.csv")) == 4);
    }
    SUBCASE("disjoint ensemble ids are a data error") {
        write_file(dir.str("p1.csv"), "id,score\na,1\nb,2\n");
        write_file(dir.str("p2.csv"), "id,score\nc,1\nd,2\n");
        CHECK(run_cli("ensemble --inputs " + dir.str("p1.csv") + "," + dir.str("p2.csv") +
                      " --out " + dir.str("blend.csv")) == 3);
    }
    SUBCASE("invalid PCQA_SEED is a config error") {
        const std::string cmd = "PCQA_SEED=notanumber " + std::string(PCQA_CLI_PATH) +
                                " train --config " + fx.config + " --train " + fx.train_manifest +
                                " --val " + fx.val_manifest + " --out " + dir.str("run") +
                                " >/dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        REQUIRE(WIFEXITED(status));
        CHECK(WEXITSTATUS(status) == 2);
    }
}

TEST_CASE("train with epochs=0 still writes artifacts") {
    TempDir dir("cli_e0");
    Fixture fx(dir, 0);
    const std::string run = dir.str("run");
    REQUIRE(run_cli("train --config " + fx.config + " --train " + fx.train_manifest + " --val " +
                    fx.val_manifest + " --out " + run) == 0);
    CHECK(std::filesystem::exists(run + "/resolved_config.txt"));
    CHECK(std::filesystem::exists(run + "/last.ckpt"));
    CHECK(slurp(run + "/metrics.csv") == metrics_csv_header() + "\n");
    const TrainConfig resolved = load_config(run + "/resolved_config.txt");
    CHECK(resolved.epochs == 0);
    CHECK(resolved.vision_encoder == toy_config().vision_encoder);
}

TEST_CASE("train, predict, ensemble, evaluate, report pipeline") {
    TempDir dir("cli_pipe");
    Fixture fx(dir);
    const std::string run = dir.str("run");
    REQUIRE(run_cli("train --config " + fx.config + " --train " + fx.train_manifest + " --val " +
                    fx.val_manifest + " --out " + run) == 0);
    REQUIRE(std::filesystem::exists(run + "/best.ckpt"));

    const auto metrics = read_lines(run + "/metrics.csv");
    REQUIRE(metrics.size() >= 3);  // header + 2 epochs
    CHECK(metrics[0] == metrics_csv_header());

    SUBCASE("predict is bit-reproducible") {
        REQUIRE(run_cli("predict --checkpoint " + run + "/best.ckpt --manifest " +
                        fx.val_manifest + " --out " + dir.str("p1.csv")) == 0);
        REQUIRE(run_cli("predict --checkpoint " + run + "/best.ckpt --manifest " +
                        fx.val_manifest + " --out " + dir.str("p2.csv")) == 0);
        const std::string p1 = slurp(dir.str("p1.csv"));
        CHECK(p1 == slurp(dir.str("p2.csv")));
        CHECK(p1.rfind("id,score\n", 0) == 0);
        CHECK(read_predictions(dir.str("p1.csv")).ids ==
              std::vector<std::string>{"v0", "v1", "v2", "v3"});
    }
    SUBCASE("ensemble blends prediction files like the library") {
        REQUIRE(run_cli("predict --checkpoint " + run + "/best.ckpt --manifest " +
                        fx.val_manifest + " --out " + dir.str("p1.csv")) == 0);
        REQUIRE(run_cli("predict --checkpoint " + run + "/last.ckpt --manifest " +
                        fx.val_manifest + " --out " + dir.str("p2.csv") + " --tta") == 0);
        REQUIRE(run_cli("ensemble --inputs " + dir.str("p1.csv") + "," + dir.str("p2.csv") +
                        " --out " + dir.str("blend.csv")) == 0);
        const auto expected = ensemble_blend(
            {read_predictions(dir.str("p1.csv")), read_predictions(dir.str("p2.csv"))});
        const auto got = read_predictions(dir.str("blend.csv"));
        REQUIRE(got.ids == expected.ids);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got.scores[i] == doctest::Approx(expected.scores[i]).epsilon(1e-7));
    }
    SUBCASE("evaluate on the labels themselves yields perfect correlation") {
        write_file(dir.str("oracle.csv"), "id,score\nv0,1.5\nv1,2.4\nv2,3.3\nv3,4.2\n");
        REQUIRE(run_cli_capture("evaluate --pred " + dir.str("oracle.csv") + " --manifest " +
                                fx.val_manifest, dir.str("eval.txt")) == 0);
        CHECK(slurp(dir.str("eval.txt")) == "1,1,1\n");
    }
    SUBCASE("report summarizes the run") {
        REQUIRE(run_cli("report --runs " + run + " --out " + dir.str("report.csv")) == 0);
        const auto lines = read_lines(dir.str("report.csv"));
        REQUIRE(lines.size() >= 2);
        CHECK(lines[0] ==
              "run,vision_encoder,text_encoders,mixer_kind,epochs,best_epoch,"
              "best_val_srcc,best_val_plcc,best_val_score");
        const auto row = split_csv_line(lines[1]);
        REQUIRE(row.size() == 9);
        CHECK(row[0] == "run");
        CHECK(row[1] == toy_config().vision_encoder);
        CHECK(row[2] == toy_config().text_encoders);
        CHECK(row[4] == "2");
    }
}

TEST_CASE("predict --tta is a no-op on mirror-symmetric images") {
    TempDir dir("cli_tta");
    Fixture fx(dir, 0);
    const std::string run = dir.str("run");
    REQUIRE(run_cli("train --config " + fx.config + " --train " + fx.train_manifest + " --val " +
                    fx.val_manifest + " --out " + run) == 0);

    Image sym = noise_image(20, 30, 400);
    for (int y = 0; y < sym.height; ++y)
        for (int x = 0; x < sym.width / 2; ++x)
            for (int c = 0; c < 3; ++c) sym.at(y, sym.width - 1 - x, c) = sym.at(y, x, c);
    Image plain = noise_image(20, 30, 401);
    save_image_png(sym, dir.str("sym.png"));
    save_image_png(plain, dir.str("plain.png"));
    write_file(dir.str("m.csv"), "id,media,prompt\nsym,sym.png,p\nplain,plain.png,q\n");

    REQUIRE(run_cli("predict --checkpoint " + run + "/last.ckpt --manifest " + dir.str("m.csv") +
                    " --out " + dir.str("base.csv")) == 0);
    REQUIRE(run_cli("predict --checkpoint " + run + "/last.ckpt --manifest " + dir.str("m.csv") +
                    " --out " + dir.str("tta.csv") + " --tta") == 0);
    const auto base = read_predictions(dir.str("base.csv"));
    const auto tta = read_predictions(dir.str("tta.csv"));
    CHECK(std::abs(tta.scores[0] - base.scores[0]) < 1e-6);
    CHECK(std::abs(tta.scores[1] - base.scores[1]) > 1e-12);
}

TEST_CASE("PCQA_SEED overrides the configured seed") {
    TempDir dir("cli_seed");
    Fixture fx(dir, 0);
    auto train_with = [&](const std::string& env_prefix, const std::string& out) {
        const std::string cmd = env_prefix + std::string(PCQA_CLI_PATH) + " train --config " +
                                fx.config + " --train " + fx.train_manifest + " --val " +
                                fx.val_manifest + " --out " + out + " >/dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        REQUIRE(WIFEXITED(status));
        REQUIRE(WEXITSTATUS(status) == 0);
    };
    train_with("", dir.str("a"));
    train_with("PCQA_SEED=99 ", dir.str("b"));
    train_with("PCQA_SEED=99 ", dir.str("c"));
    const std::string a = slurp(dir.str("a") + "/last.ckpt");
    const std::string b = slurp(dir.str("b") + "/last.ckpt");
    CHECK(a != b);
    CHECK(b == slurp(dir.str("c") + "/last.ckpt"));
    CHECK(load_config(dir.str("b") + "/resolved_config.txt").seed == 99);
}
