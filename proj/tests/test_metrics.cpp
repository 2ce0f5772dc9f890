#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "latentg/metrics.hpp"

using namespace latentg;

namespace {

// preds/labels realizing the confusion matrix [[8,2],[1,9]] (rows = true class)
void example_pairs(std::vector<int>& preds, std::vector<int>& labels) {
    preds.clear();
    labels.clear();
    auto add = [&](int t, int p, int count) {
        for (int i = 0; i < count; ++i) {
            labels.push_back(t);
            preds.push_back(p);
        }
    };
    add(0, 0, 8);
    add(0, 1, 2);
    add(1, 0, 1);
    add(1, 1, 9);
}

}  // namespace

TEST_CASE("worked example confusion [[8,2],[1,9]]") {
    std::vector<int> preds, labels;
    example_pairs(preds, labels);
    auto r = compute_metrics(preds, labels, 2);
    CHECK(r.at(0, 0) == 8);
    CHECK(r.at(0, 1) == 2);
    CHECK(r.at(1, 0) == 1);
    CHECK(r.at(1, 1) == 9);
    CHECK(r.accuracy == Catch::Approx(0.85).margin(1e-12));
    CHECK(r.precision[0] == Catch::Approx(8.0 / 9.0).margin(1e-12));
    CHECK(r.recall[0] == Catch::Approx(0.8).margin(1e-12));
    CHECK(r.f1[0] == Catch::Approx(0.842105).margin(1e-6));
    CHECK(r.precision[1] == Catch::Approx(9.0 / 11.0).margin(1e-12));
    CHECK(r.recall[1] == Catch::Approx(0.9).margin(1e-12));
    CHECK(r.f1[1] == Catch::Approx(0.857143).margin(1e-6));
    CHECK(r.support == std::vector<std::int64_t>{10, 10});
    CHECK(r.weighted_f1 == Catch::Approx(0.8496).margin(1e-4));
    CHECK(r.macro_f1 == Catch::Approx(r.weighted_f1).margin(1e-12));  // equal support
}

TEST_CASE("perfect predictions") {
    std::vector<int> labels = {0, 1, 2, 1, 0, 2};
    auto r = compute_metrics(labels, labels, 3);
    CHECK(r.accuracy == 1.0);
    for (int c = 0; c < 3; ++c) {
        CHECK(r.precision[static_cast<std::size_t>(c)] == 1.0);
        CHECK(r.recall[static_cast<std::size_t>(c)] == 1.0);
        CHECK(r.f1[static_cast<std::size_t>(c)] == 1.0);
    }
    CHECK(r.weighted_f1 == 1.0);
    CHECK(r.macro_f1 == 1.0);
}

TEST_CASE("absent classes report zero, never NaN") {
    // class 2 never appears in labels or predictions
    std::vector<int> labels = {0, 0, 1, 1};
    std::vector<int> preds = {0, 1, 1, 1};
    auto r = compute_metrics(preds, labels, 3);
    CHECK(r.support[2] == 0);
    CHECK(r.precision[2] == 0.0);
    CHECK(r.recall[2] == 0.0);
    CHECK(r.f1[2] == 0.0);
    for (double v : {r.macro_f1, r.weighted_f1, r.accuracy}) CHECK(std::isfinite(v));
    // class predicted but never true: recall undefined -> 0
    std::vector<int> labels2 = {0, 0};
    std::vector<int> preds2 = {0, 1};
    auto r2 = compute_metrics(preds2, labels2, 2);
    CHECK(r2.recall[1] == 0.0);
    CHECK(r2.precision[1] == 0.0);  // diag 0 / col 1
}

TEST_CASE("metrics agree with a brute-force recount on random pairs") {
    Rng rng(55);
    for (int trial = 0; trial < 20; ++trial) {
        const int k = 2 + static_cast<int>(rng.index(5));
        const std::size_t n = 20 + rng.index(80);
        std::vector<int> preds, labels;
        for (std::size_t i = 0; i < n; ++i) {
            preds.push_back(static_cast<int>(rng.index(static_cast<std::size_t>(k))));
            labels.push_back(static_cast<int>(rng.index(static_cast<std::size_t>(k))));
        }
        auto r = compute_metrics(preds, labels, k);

        // recount from scratch
        std::size_t correct = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (preds[i] == labels[i]) ++correct;
        CHECK(r.accuracy ==
              Catch::Approx(static_cast<double>(correct) / static_cast<double>(n))
                  .margin(1e-12));
        std::int64_t total = 0;
        for (auto v : r.confusion) total += v;
        CHECK(total == static_cast<std::int64_t>(n));
        for (int c = 0; c < k; ++c) {
            std::int64_t tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (preds[i] == c && labels[i] == c) ++tp;
                if (preds[i] == c && labels[i] != c) ++fp;
                if (preds[i] != c && labels[i] == c) ++fn;
            }
            const double p = (tp + fp) > 0 ? double(tp) / double(tp + fp) : 0.0;
            const double rc = (tp + fn) > 0 ? double(tp) / double(tp + fn) : 0.0;
            CHECK(r.precision[static_cast<std::size_t>(c)] ==
                  Catch::Approx(p).margin(1e-12));
            CHECK(r.recall[static_cast<std::size_t>(c)] ==
                  Catch::Approx(rc).margin(1e-12));
        }
    }
}

TEST_CASE("metrics input validation") {
    CHECK_THROWS_AS(compute_metrics({0, 1}, {0}, 2), ShapeError);
    CHECK_THROWS_AS(compute_metrics({}, {}, 2), ValidationError);
}

TEST_CASE("metrics json and confusion csv outputs") {
    std::vector<int> preds, labels;
    example_pairs(preds, labels);
    auto r = compute_metrics(preds, labels, 2);
    auto j = metrics_to_json(r);
    CHECK(j.at("accuracy").get<double>() == Catch::Approx(0.85).margin(1e-12));
    CHECK(j.at("confusion").size() == 4);

    const std::string json_path = "/tmp/latentg_test_metrics.json";
    save_metrics_json(r, json_path, {{"config_digest", "deadbeef"}});
    std::ifstream in(json_path);
    nlohmann::json loaded;
    in >> loaded;
    CHECK(loaded.at("config_digest") == "deadbeef");
    CHECK(loaded.at("weighted").at("f1").get<double>() ==
          Catch::Approx(r.weighted_f1).margin(1e-12));

    const std::string csv_path = "/tmp/latentg_test_confusion.csv";
    save_confusion_csv(r, csv_path);
    std::ifstream csv(csv_path);
    std::string line;
    std::getline(csv, line);
    CHECK(line == "8,2");
    std::getline(csv, line);
    CHECK(line == "1,9");
}
