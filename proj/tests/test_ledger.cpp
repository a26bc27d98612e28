#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dlt/errors.hpp"
#include "dlt/loss_ledger.hpp"
#include "dlt/rng.hpp"
#include "oracles.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

using namespace dlt;

TEST_CASE("record round-trip and epoch completeness") {
    LossLedger ledger(6, 8);
    ledger.record(1, 0, {0, 1, 2}, {0.5, 1.5, 2.5});
    CHECK_FALSE(ledger.epoch_complete(1));
    ledger.record(1, 1, {3, 4, 5}, {3.5, 4.5, 5.5});
    CHECK(ledger.epoch_complete(1));

    const std::vector<double>& losses = ledger.epoch_losses(1);
    CHECK(losses == std::vector<double>{0.5, 1.5, 2.5, 3.5, 4.5, 5.5});

    const auto& window = ledger.window();
    REQUIRE(window.size() == 2);
    CHECK(window[0].losses == std::vector<double>{0.5, 1.5, 2.5});
    CHECK(window[1].batch == 1);
}

TEST_CASE("window keeps only the newest s batches") {
    const std::size_t s = 4;
    LossLedger ledger(100, s);
    for (std::size_t p = 0; p < s + 1; ++p)
        ledger.record(1, p, {p}, {static_cast<double>(p)});
    REQUIRE(ledger.window().size() == s);
    CHECK(ledger.window().front().batch == 1);
    CHECK(ledger.window().back().batch == s);
}

TEST_CASE("record rejects bad batches") {
    LossLedger ledger(10, 4);
    CHECK_THROWS_AS(ledger.record(1, 0, {0, 0}, {1.0, 2.0}), ContractError);
    CHECK_THROWS_AS(ledger.record(1, 0, {0, 1}, {1.0}), ShapeError);
    CHECK_THROWS_AS(ledger.record(1, 0, {42}, {1.0}), ContractError);
    CHECK_THROWS_AS(
        ledger.record(1, 0, {0}, {std::numeric_limits<double>::infinity()}),
        NumericError);
    CHECK_THROWS_AS(ledger.record(1, 0, {0}, {-0.5}), ContractError);
    ledger.record(1, 0, {0}, {1.0});
    CHECK_THROWS_AS(ledger.record(1, 1, {0}, {2.0}), ContractError);
}

TEST_CASE("non-finite loss errors name the sample") {
    LossLedger ledger(10, 4);
    try {
        ledger.record(1, 0, {7}, {std::nan("")});
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("7") != std::string::npos);
    }
}

TEST_CASE("quantile closed forms") {
    CHECK(quantile({3.0, 1.0, 2.0}, 1.0) == 3.0);
    CHECK(quantile({1.0, 2.0, 3.0, 4.0}, 0.5) == 2.0);
    CHECK(quantile({5.0}, 0.0) == 5.0);
    CHECK(quantile({2.0, 1.0}, 0.0) == 1.0);
    CHECK_THROWS_AS(quantile({}, 0.5), ContractError);
    CHECK_THROWS_AS(quantile({1.0}, 1.5), ContractError);
}

TEST_CASE("quantile matches the sort oracle on 1000 random vectors") {
    Rng rng = make_rng(2024);
    std::uniform_int_distribution<std::size_t> len_dist(1, 500);
    std::uniform_real_distribution<double> q_dist(0.0, 1.0);
    std::normal_distribution<double> value_dist(0.0, 10.0);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> values(len_dist(rng));
        for (double& v : values) v = value_dist(rng);
        const double q = q_dist(rng);
        CHECK(quantile(values, q) == oracle::sorted_quantile(values, q));
    }
}

TEST_CASE("quantile properties: monotone, element of input, rank count") {
    Rng rng = make_rng(77);
    std::uniform_real_distribution<double> q_dist(0.0, 1.0);
    std::normal_distribution<double> value_dist(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> values(50);
        for (double& v : values) v = value_dist(rng);
        double q1 = q_dist(rng), q2 = q_dist(rng);
        if (q1 > q2) std::swap(q1, q2);
        const double t1 = quantile(values, q1);
        const double t2 = quantile(values, q2);
        CHECK(t1 <= t2);
        CHECK(std::count(values.begin(), values.end(), t1) > 0);
        // With distinct values, exactly ceil(q*n) entries sit at or below the
        // threshold.
        const std::size_t expected = std::max<std::size_t>(
            1, static_cast<std::size_t>(
                   std::ceil(q1 * static_cast<double>(values.size()))));
        const std::size_t below = static_cast<std::size_t>(std::count_if(
            values.begin(), values.end(), [t1](double v) { return v <= t1; }));
        CHECK(below == expected);
    }
}

TEST_CASE("last-epoch threshold") {
    LossLedger ledger(4, 8);
    SUBCASE("equal losses give that constant") {
        ledger.record(1, 0, {0, 1, 2, 3}, {0.7, 0.7, 0.7, 0.7});
        CHECK(threshold_last_epoch(ledger, 2, 0.3) == 0.7);
        CHECK(threshold_last_epoch(ledger, 2, 1.0) == 0.7);
    }
    SUBCASE("q = 1 returns the maximum") {
        ledger.record(1, 0, {0, 1, 2, 3}, {0.1, 0.9, 0.4, 0.6});
        CHECK(threshold_last_epoch(ledger, 2, 1.0) == 0.9);
    }
    SUBCASE("matches the sort oracle") {
        ledger.record(1, 0, {0, 1}, {0.3, 0.8});
        ledger.record(1, 1, {2, 3}, {0.5, 0.2});
        for (double q : {0.0, 0.25, 0.5, 0.9, 1.0})
            CHECK(threshold_last_epoch(ledger, 2, q) ==
                  oracle::sorted_quantile({0.3, 0.8, 0.5, 0.2}, q));
    }
    SUBCASE("incomplete previous epoch is a state error") {
        ledger.record(1, 0, {0, 1}, {0.3, 0.8});
        CHECK_THROWS_AS(threshold_last_epoch(ledger, 2, 0.5), StateError);
        CHECK_THROWS_AS(threshold_last_epoch(ledger, 1, 0.5), StateError);
    }
}

TEST_CASE("slide-window threshold") {
    LossLedger ledger(64, 16);
    SUBCASE("single batch") {
        ledger.record(1, 0, {0, 1, 2, 3}, {1.0, 2.0, 3.0, 4.0});
        CHECK(threshold_slide_window(ledger, 0.5, 8) == 2.0);
    }
    SUBCASE("fewer than s batches uses all available") {
        ledger.record(1, 0, {0, 1}, {1.0, 4.0});
        ledger.record(1, 1, {2, 3}, {2.0, 3.0});
        CHECK(threshold_slide_window(ledger, 0.5, 100) ==
              oracle::sorted_quantile({1.0, 4.0, 2.0, 3.0}, 0.5));
    }
    SUBCASE("only the newest s batches participate") {
        ledger.record(1, 0, {0, 1}, {100.0, 200.0});
        ledger.record(1, 1, {2, 3}, {1.0, 2.0});
        ledger.record(1, 2, {4, 5}, {3.0, 4.0});
        CHECK(threshold_slide_window(ledger, 1.0, 2) == 4.0);
    }
    SUBCASE("matches the sort oracle over the window") {
        Rng rng = make_rng(5);
        std::uniform_real_distribution<double> dist(0.0, 5.0);
        std::vector<double> all;
        for (std::size_t p = 0; p < 6; ++p) {
            std::vector<double> losses(8);
            std::vector<std::size_t> ids(8);
            for (std::size_t j = 0; j < 8; ++j) {
                ids[j] = p * 8 + j;
                losses[j] = dist(rng);
            }
            ledger.record(1, p, ids, losses);
            all.insert(all.end(), losses.begin(), losses.end());
        }
        for (double q : {0.1, 0.5, 0.77, 1.0})
            CHECK(threshold_slide_window(ledger, q, 6) ==
                  oracle::sorted_quantile(all, q));
    }
    SUBCASE("empty window is a state error") {
        CHECK_THROWS_AS(threshold_slide_window(ledger, 0.5, 4), StateError);
    }
}

TEST_CASE("selection proportion schedule") {
    ThresholdPolicy policy;
    policy.noise_rate = 0.5;
    policy.warm_epochs = 10;
    policy.grad_epochs = 40;
    CHECK(selection_proportion(policy, 1) == 1.0);
    CHECK(selection_proportion(policy, 10) == 1.0);
    CHECK(selection_proportion(policy, 30) == doctest::Approx(0.75));
    CHECK(selection_proportion(policy, 50) == 1.0 - policy.noise_rate);
    CHECK(selection_proportion(policy, 200) == 1.0 - policy.noise_rate);

    SUBCASE("non-increasing and bounded") {
        double prev = 1.0;
        for (std::size_t t = 1; t <= 120; ++t) {
            const double q = selection_proportion(policy, t);
            CHECK(q <= prev);
            CHECK(q >= 1.0 - policy.noise_rate);
            CHECK(q <= 1.0);
            prev = q;
        }
    }
    CHECK_THROWS_AS(selection_proportion(policy, 0), ContractError);
}

TEST_CASE("loss difference") {
    LossLedger ledger(2, 4);
    ledger.record(1, 0, {0, 1}, {2.0, 0.1});
    ledger.record(5, 0, {0, 1}, {0.2, 0.05});
    SUBCASE("same epoch gives zeros") {
        const auto diff = loss_difference(ledger, 1, 1);
        CHECK(diff == std::vector<double>{0.0, 0.0});
    }
    SUBCASE("hand-built example") {
        const auto diff = loss_difference(ledger, 1, 5);
        CHECK(diff[0] == 1.8);
        CHECK(diff[1] == 0.05);
    }
    SUBCASE("incomplete epoch is a state error") {
        CHECK_THROWS_AS(loss_difference(ledger, 1, 3), StateError);
    }
}

TEST_CASE("ledger csv dump") {
    LossLedger ledger(4, 8);
    ledger.record(1, 0, {2, 0}, {0.25, 0.5});
    ledger.record(1, 1, {1, 3}, {1.0, 2.0});
    const std::string path = "ledger_dump_test.csv";
    ledger.dump_csv(path);
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    CHECK(line == "epoch,batch,sample_id,loss");
    std::vector<std::string> rows;
    while (std::getline(is, line)) rows.push_back(line);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == "1,0,0,0.5");
    CHECK(rows[1] == "1,0,2,0.25");
    CHECK(rows[2] == "1,1,1,1");
    CHECK(rows[3] == "1,1,3,2");
    std::remove(path.c_str());
}
