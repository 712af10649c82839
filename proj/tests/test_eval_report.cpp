#include "doctest.h"

#include "bic/errors.hpp"
#include "bic/eval_report.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace bic;

namespace {

/// One zero-weight layer whose bias makes `winner` the argmax everywhere.
NetworkModel constant_model(std::size_t in, std::size_t classes, std::size_t winner) {
    std::vector<double> bias(classes, 0.0);
    bias[winner] = 1.0;
    return NetworkModel({DenseLayer{DenseMatrix(classes, in), bias}});
}

std::vector<LabeledSample> uniform_test(std::size_t classes, std::size_t per_class) {
    std::vector<LabeledSample> out;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i) out.push_back({{0.0, 1.0}, c, out.size()});
    }
    return out;
}

ConfusionMatrix matrix_of(std::size_t c, const std::vector<std::uint64_t>& v) {
    ConfusionMatrix cm(c);
    for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t j = 0; j < c; ++j) cm.add(i, j, v[i * c + j]);
    }
    return cm;
}

RunReport fake_run(std::size_t steps) {
    RunReport r;
    r.variant = "bic";
    r.seed = 3;
    r.config = {{"run.seed", "3"}, {"train.epochs", "2"}};
    for (std::size_t k = 0; k < 2 * steps; ++k) r.class_order.push_back(10 - k);
    for (std::size_t t = 0; t < steps; ++t) {
        StepReport s;
        s.step = t;
        s.old_classes = 2 * t;
        s.new_classes = 2;
        s.lambda = t == 0 ? 0.0 : double(2 * t) / double(2 * t + 2);
        s.confusion = ConfusionMatrix(2 * t + 2);
        for (std::size_t i = 0; i < 2 * t + 2; ++i) s.confusion.add(i, (i * 7 + t) % (2 * t + 2), 3 + i);
        s.accuracy = s.confusion.accuracy();
        if (t > 0) {
            s.bias = BiasParams{0.9 - 0.01 * t, -0.123456789 * t, 2 * t, 2};
            s.bias_ratio = 0.1 * t;
        }
        s.exemplar_counts = std::vector<std::size_t>(2 * t + 2, 5);
        s.stage1_loss = 1.0 / (t + 1.0);
        r.steps.push_back(s);
    }
    return r;
}

}  // namespace

TEST_CASE("constant predictor scores one over C") {
    for (std::size_t classes : {2u, 5u, 10u}) {
        auto model = constant_model(2, classes, 0);
        auto r = evaluate(model, std::nullopt, uniform_test(classes, 4), 0, classes);
        CHECK(r.accuracy == doctest::Approx(1.0 / double(classes)));
        CHECK(r.confusion.trace() == 4);
        CHECK(double(r.confusion.trace()) / double(r.confusion.total()) == r.accuracy);
        for (std::size_t c = 0; c < classes; ++c) CHECK(r.confusion.row_sum(c) == 4);
    }
}

TEST_CASE("identity bias does not change predictions") {
    Rng rng(6);
    NetworkModel m(2, {4}, 5, rng);
    auto test = uniform_test(5, 3);
    std::mt19937_64 gen(1);
    for (auto& s : test) s.features = {std::uniform_real_distribution<>(-1, 1)(gen), 0.5};
    auto raw = evaluate(m, std::nullopt, test, 3, 2);
    auto same = evaluate(m, BiasParams::identity(3, 2), test, 3, 2);
    CHECK(raw.confusion == same.confusion);
}

TEST_CASE("evaluate rejects unseen labels") {
    auto model = constant_model(2, 3, 1);
    CHECK_THROWS_AS(evaluate(model, std::nullopt, uniform_test(4, 1), 1, 2), DataError);
}

TEST_CASE("new-class bias ratio") {
    CHECK(new_class_bias_ratio(matrix_of(4, {5, 1, 0, 0, 2, 6, 0, 0, 0, 0, 4, 1, 0, 0, 3, 3}), 2, 2) ==
          0.0);
    CHECK(new_class_bias_ratio(matrix_of(3, {0, 0, 4, 0, 0, 2, 0, 0, 9}), 2, 1) == 1.0);
    CHECK_THROWS_AS(new_class_bias_ratio(matrix_of(3, {0, 0, 0, 0, 0, 0, 1, 1, 1}), 2, 1),
                    DataError);

    std::mt19937_64 gen(9);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::uint64_t> v(16);
        for (auto& x : v) x = gen() % 10;
        v[0] += 1;
        auto cm = matrix_of(4, v);
        for (std::size_t n = 1; n < 4; ++n) {
            double num = 0, den = 0;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < 4; ++j) {
                    den += double(v[i * 4 + j]);
                    if (j >= n) num += double(v[i * 4 + j]);
                }
            }
            CHECK(new_class_bias_ratio(cm, n, 4 - n) == doctest::Approx(num / den));
        }
    }
}

TEST_CASE("emit_report writes one file set per run") {
    auto dir = testing::fresh_dir("emit");
    const auto run = fake_run(5);
    emit_report(run, dir);
    std::size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        (void)e;
        ++files;
    }
    CHECK(files == 7);

    const auto csv = testing::slurp(dir / "accuracy.csv");
    CHECK(csv.rfind("step,classes_seen,variant,accuracy\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);

    for (std::size_t t = 0; t < 5; ++t) {
        auto back = read_confusion_csv(dir / ("confusion_step" + std::to_string(t) + ".csv"));
        CHECK(back.matrix == run.steps[t].confusion);
        CHECK(back.class_ids.size() == 2 * t + 2);
        CHECK(back.class_ids.front() == 10);
    }

    auto j = nlohmann::json::parse(testing::slurp(dir / "summary.json"));
    CHECK(j["steps"][0]["bias"].is_null());
    for (std::size_t t = 1; t < 5; ++t) CHECK(j["steps"][t]["bias"].contains("alpha"));

    auto back = read_summary(dir / "summary.json");
    CHECK(back.steps.size() == 5);
    for (std::size_t t = 0; t < 5; ++t) {
        CHECK(back.steps[t].accuracy == doctest::Approx(run.steps[t].accuracy).epsilon(1e-6));
        CHECK(back.steps[t].confusion == run.steps[t].confusion);
    }
    CHECK(back.steps[3].bias->beta == doctest::Approx(run.steps[3].bias->beta).epsilon(1e-6));
    CHECK(!back.steps[0].bias.has_value());
    CHECK(back.config == run.config);

    // Re-emitting replaces the files and leaves no temporaries.
    emit_report(run, dir);
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        CHECK(e.path().extension() != ".tmp");
    }
}

TEST_CASE("degradation is the joint accuracy minus the final accuracy") {
    auto run = fake_run(2);
    CHECK(!run.degradation().has_value());
    run.joint_final_accuracy = 0.95;
    CHECK(*run.degradation() == doctest::Approx(0.95 - run.final_accuracy()));
}

TEST_CASE("number formatting ignores the locale") {
    CHECK(format_number(0.5) == "0.5");
    CHECK(format_number(1.0 / 3.0) == "0.333333");
    CHECK(format_number(0.0) == "0");
}

TEST_CASE("emit_report surfaces the path on I/O failure") {
    auto dir = testing::fresh_dir("emit_fail");
    std::ofstream(dir / "blocker") << "x";
    try {
        emit_report(fake_run(1), dir / "blocker" / "sub");
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("blocker") != std::string::npos);
    }
}
