#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "pcqa/evaluation.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace pcqa;
using namespace pcqa_test;

TEST_CASE("srcc") {
    CHECK(srcc({1, 2, 3}, {10, 20, 30}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(srcc({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-15));
    // ranks [1, 2.5, 2.5, 4] vs [1,2,3,4]
    CHECK(srcc({1, 2, 2, 3}, {1, 2, 3, 4}) ==
          doctest::Approx(0.9486832980505138).epsilon(1e-14));
    CHECK(srcc({1, 2, 2, 3}, {1, 2, 3, 4}) ==
          doctest::Approx(oracle_srcc({1, 2, 2, 3}, {1, 2, 3, 4})).epsilon(1e-14));

    SUBCASE("errors") {
        CHECK_THROWS_AS(srcc({1, 1, 1}, {1, 2, 3}), DataError);
        CHECK_THROWS_AS(srcc({1, 2}, {1, 2, 3}), DataError);
        CHECK_THROWS_AS(srcc({1}, {2}), DataError);
    }
    SUBCASE("invariant under strictly increasing transforms") {
        Rng rng(5);
        Vec a(20), b(20);
        for (int i = 0; i < 20; ++i) {
            a[i] = rng.uniform(-3, 3);
            b[i] = rng.uniform(-3, 3);
        }
        const double base = srcc(a, b);
        Vec a2 = a;
        for (double& x : a2) x = std::exp(x) + 3 * x;
        Vec b2 = b;
        for (double& x : b2) x = std::atan(x);
        CHECK(srcc(a2, b2) == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("plcc") {
    Rng rng(6);
    Vec x(15);
    for (double& v : x) v = rng.uniform(-2, 2);
    Vec affine = x;
    for (double& v : affine) v = 2 * v + 1;
    Vec neg = x;
    for (double& v : neg) v = -v;

    CHECK(plcc(x, affine) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(plcc(x, neg) == doctest::Approx(-1.0).epsilon(1e-12));
    // hand value: 10 / sqrt(8.75 * 14)
    CHECK(plcc({1, 2, 3, 5}, {1, 3, 2, 6}) ==
          doctest::Approx(0.90350790290525124).epsilon(1e-14));
    CHECK(plcc({1, 2, 3, 5}, {1, 3, 2, 6}) ==
          doctest::Approx(oracle_plcc({1, 2, 3, 5}, {1, 3, 2, 6})).epsilon(1e-14));
    CHECK_THROWS_AS(plcc({2, 2}, {1, 3}), DataError);
}

TEST_CASE("metrics agree with the brute-force oracle on all permutation pairs n <= 5") {
    for (int n = 2; n <= 5; ++n) {
        Vec base(n);
        for (int i = 0; i < n; ++i) base[i] = i + 1;
        Vec p1 = base;
        do {
            Vec p2 = base;
            do {
                CHECK(std::abs(srcc(p1, p2) - oracle_srcc(p1, p2)) < 1e-12);
                CHECK(std::abs(plcc(p1, p2) - oracle_plcc(p1, p2)) < 1e-12);
            } while (std::next_permutation(p2.begin(), p2.end()));
        } while (std::next_permutation(p1.begin(), p1.end()));
    }
}

TEST_CASE("val score reproduces the reported roundings") {
    auto rounded2 = [](double v) { return std::lround(v * 100.0) / 100.0; };
    CHECK(rounded2((0.90 + 0.93) / 2.0) == doctest::Approx(0.92));
    CHECK(rounded2((0.82 + 0.84) / 2.0) == doctest::Approx(0.83));

    Rng rng(8);
    Vec a(10), b(10);
    for (int i = 0; i < 10; ++i) {
        a[i] = rng.uniform(0, 1);
        b[i] = rng.uniform(0, 1);
    }
    CHECK(val_score(a, b) == doctest::Approx((srcc(a, b) + plcc(a, b)) / 2.0).epsilon(1e-15));
    Vec mono = a;
    for (double& v : mono) v = 3 * v + 2;
    CHECK(val_score(a, mono) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("normalize_predictions") {
    PredictionSet p;
    p.ids = {"a", "b", "c"};
    p.scores = {1, 2, 3};

    SUBCASE("hand oracle with population std") {
        const auto z = normalize_predictions(p);
        CHECK(z.scores[0] == doctest::Approx(-1.2247448713915890).epsilon(1e-9));
        CHECK(z.scores[1] == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(z.scores[2] == doctest::Approx(1.2247448713915890).epsilon(1e-9));
    }
    SUBCASE("idempotent on already-normalized input") {
        const auto z = normalize_predictions(p);
        const auto zz = normalize_predictions(z);
        for (std::size_t i = 0; i < z.size(); ++i)
            CHECK(zz.scores[i] == doctest::Approx(z.scores[i]).epsilon(1e-12));
    }
    SUBCASE("constant scores rejected") {
        p.scores = {5, 5, 5};
        CHECK_THROWS_AS(normalize_predictions(p), NumericError);
    }
    SUBCASE("duplicate ids rejected") {
        p.ids = {"a", "a", "c"};
        CHECK_THROWS_AS(normalize_predictions(p), DataError);
    }
}

TEST_CASE("ensemble blending") {
    auto make = [](std::vector<std::string> ids, Vec scores) {
        PredictionSet p;
        p.ids = std::move(ids);
        p.scores = std::move(scores);
        return p;
    };

    SUBCASE("single set reduces to its z-scores") {
        const auto p = make({"a", "b", "c"}, {1, 2, 4});
        const auto blend = ensemble_blend({p});
        const auto z = normalize_predictions(p);
        for (std::size_t i = 0; i < z.size(); ++i)
            CHECK(blend.scores[i] == doctest::Approx(z.scores[i]).epsilon(1e-12));
    }
    SUBCASE("positive affine member collapses onto the base z-scores") {
        const auto p = make({"a", "b", "c", "d"}, {0.1, 0.9, 0.4, 0.6});
        auto q = p;
        for (double& s : q.scores) s = 3.5 * s - 2.0;
        const auto blend = ensemble_blend({p, q});
        const auto z = normalize_predictions(p);
        for (std::size_t i = 0; i < z.size(); ++i)
            CHECK(blend.scores[i] == doctest::Approx(z.scores[i]).epsilon(1e-12));
    }
    SUBCASE("three members match the hand oracle over 4 ids") {
        const std::vector<std::vector<double>> raw{
            {1, 2, 3, 4}, {2, 1, 5, 4}, {0.5, 0.25, 0.75, 1.0}};
        std::vector<PredictionSet> members;
        for (const auto& r : raw) members.push_back(make({"a", "b", "c", "d"}, Vec(r)));
        const auto blend = ensemble_blend(members);
        const auto expected = oracle_blend(raw);
        for (int i = 0; i < 4; ++i)
            CHECK(blend.scores[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    }
    SUBCASE("member order does not change the blend") {
        const auto p = make({"a", "b", "c"}, {1, 5, 2});
        const auto q = make({"a", "b", "c"}, {0, 1, 4});
        const auto ab = ensemble_blend({p, q});
        const auto ba = ensemble_blend({q, p});
        for (std::size_t i = 0; i < ab.size(); ++i)
            CHECK(ab.scores[i] == doctest::Approx(ba.scores[i]).epsilon(1e-12));
    }
    SUBCASE("id order of the first member is respected with shuffled members") {
        const auto p = make({"a", "b", "c"}, {1, 5, 2});
        const auto q = make({"c", "a", "b"}, {4, 0, 1});
        const auto blend = ensemble_blend({p, q});
        const auto direct = ensemble_blend({p, make({"a", "b", "c"}, {0, 1, 4})});
        CHECK(blend.ids == std::vector<std::string>{"a", "b", "c"});
        for (std::size_t i = 0; i < blend.size(); ++i)
            CHECK(blend.scores[i] == doctest::Approx(direct.scores[i]).epsilon(1e-12));
    }
    SUBCASE("errors") {
        const auto p = make({"a", "b", "c"}, {1, 5, 2});
        CHECK_THROWS_AS(ensemble_blend({}), DataError);
        CHECK_THROWS_AS(ensemble_blend({p, make({"a", "b", "x"}, {1, 2, 3})}), DataError);
        CHECK_THROWS_AS(ensemble_blend({p, make({"a", "b", "c"}, {2, 2, 2})}), NumericError);
    }
}

TEST_CASE("test-time flip augmentation") {
    auto model = build_model(toy_config());

    SUBCASE("symmetric input is a fixpoint") {
        Image sym = noise_image(32, 48, 70);
        // mirror the left half onto the right
        for (int y = 0; y < sym.height; ++y)
            for (int x = 0; x < sym.width / 2; ++x)
                for (int c = 0; c < 3; ++c)
                    sym.at(y, sym.width - 1 - x, c) = sym.at(y, x, c);
        const double plain = model->forward({sym}, "p");
        CHECK(std::abs(tta_flip(*model, {sym}, "p") - plain) < 1e-6);
    }
    SUBCASE("equals the hand mean of both branches") {
        const Image img = noise_image(32, 48, 71);
        const double a = model->forward({img}, "p");
        const double b = model->forward({hflip(img)}, "p");
        CHECK(tta_flip(*model, {img}, "p") == doctest::Approx((a + b) / 2.0).epsilon(1e-15));
    }
    SUBCASE("symmetric in the flip") {
        const Image img = noise_image(32, 48, 72);
        CHECK(tta_flip(*model, {img}, "p") ==
              doctest::Approx(tta_flip(*model, {hflip(img)}, "p")).epsilon(1e-15));
    }
    SUBCASE("video flips are clip consistent") {
        const std::vector<Image> clip{noise_image(32, 48, 73), noise_image(32, 48, 74)};
        std::vector<Image> flipped;
        for (const auto& f : clip) flipped.push_back(hflip(f));
        const double mean = (model->forward(clip, "p") + model->forward(flipped, "p")) / 2.0;
        CHECK(tta_flip(*model, clip, "p") == doctest::Approx(mean).epsilon(1e-15));
    }
}

TEST_CASE("prediction file round-trip") {
    TempDir dir("pred");
    PredictionSet p;
    p.ids = {"a", "quoted,id", "c"};
    p.scores = {1.234567891234, -0.5, 3e-7};
    write_predictions(p, dir.str("p.csv"));
    const auto q = read_predictions(dir.str("p.csv"));
    CHECK(q.ids == p.ids);
    for (std::size_t i = 0; i < p.size(); ++i)
        CHECK(q.scores[i] == doctest::Approx(p.scores[i]).epsilon(1e-9));

    SUBCASE("malformed header rejected") {
        write_file(dir.str("bad.csv"), "score,id\n1,a\n");
        CHECK_THROWS_AS(read_predictions(dir.str("bad.csv")), DataError);
    }
}
