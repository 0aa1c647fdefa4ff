#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "srcnet/coding.hpp"
#include "srcnet/rng.hpp"
#include "test_helpers.hpp"

using namespace srcnet;
using Catch::Approx;

TEST_CASE("rate coding extremes", "[coding]") {
    CodingConfig cfg;
    cfg.T = 200;

    Rng rng(1);
    std::vector<double> black{0.0};
    SpikeTensor bt = rate_encode(black, cfg, rng);
    for (double v : bt.data) CHECK(v == 0.0);

    CodingConfig sure = cfg;
    sure.gain = 1.0;
    std::vector<double> white{1.0};
    SpikeTensor wt = rate_encode(white, sure, rng);
    for (double v : wt.data) CHECK(v == 1.0);
}

TEST_CASE("rate coding hits the binomial band", "[coding]") {
    CodingConfig cfg;
    cfg.T = 200;
    std::vector<double> white{1.0};
    double mean = 200 * 0.25;
    double sigma = std::sqrt(200 * 0.25 * 0.75);
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        Rng rng(derive_seed(9, trial));
        SpikeTensor st = rate_encode(white, cfg, rng);
        double count = 0;
        for (double v : st.data) count += v;
        INFO("trial " << trial << " count " << count);
        CHECK(std::abs(count - mean) <= 4.0 * sigma);
    }
}

TEST_CASE("rate coding empirical frequency chi-square", "[coding]") {
    // 1000 Bernoulli(gain * p) trials per pixel value; one-cell chi-square
    // against the expected rate, threshold at significance 0.01 (df=1, 6.63)
    CodingConfig cfg;
    cfg.T = 1000;
    for (double p : {0.2, 0.5, 1.0}) {
        Rng rng(derive_seed(77, static_cast<std::uint64_t>(p * 100)));
        std::vector<double> px{p};
        SpikeTensor st = rate_encode(px, cfg, rng);
        double ones = 0;
        for (double v : st.data) ones += v;
        double zeros = cfg.T - ones;
        double e1 = cfg.gain * p * cfg.T, e0 = cfg.T - e1;
        double chi2 = (ones - e1) * (ones - e1) / e1 + (zeros - e0) * (zeros - e0) / e0;
        INFO("p " << p << " ones " << ones);
        CHECK(chi2 < 6.63);
    }
}

TEST_CASE("rate coding is deterministic given the seed", "[coding]") {
    CodingConfig cfg;
    std::vector<double> img{0.1, 0.4, 0.9, 0.6};
    Rng r1(123), r2(123);
    SpikeTensor a = rate_encode(img, cfg, r1);
    SpikeTensor b = rate_encode(img, cfg, r2);
    CHECK(a.data == b.data);
}

TEST_CASE("rate coding rejects out-of-range pixels", "[coding]") {
    CodingConfig cfg;
    Rng rng(1);
    std::vector<double> bad{0.5, 1.2};
    CHECK_THROWS_AS(rate_encode(bad, cfg, rng), Error);
    std::vector<double> neg{-0.1};
    CHECK_THROWS_AS(rate_encode(neg, cfg, rng), Error);
}

TEST_CASE("latency coding pipeline on a three-pixel image", "[coding]") {
    // raw times with tau=10, v_th=0.01: {0, 5, 9.9}; the full range is
    // 9.9, so timesteps are {0, floor(5/9.9*199), 199-removed}
    CodingConfig cfg; // T=200
    std::vector<double> img{1.0, 0.5, 0.0};
    SpikeTensor st = latency_encode(img, cfg);

    CHECK(st.at(0, 0) == 1.0); // brightest spikes first
    CHECK(st.at(100, 1) == 1.0);
    double col2 = 0;
    for (std::size_t t = 0; t < st.T; ++t) col2 += st.at(t, 2);
    CHECK(col2 == 0.0); // sub-threshold pixel lands on the last step, removed

    std::size_t total = 0;
    for (double v : st.data) total += v > 0 ? 1 : 0;
    CHECK(total == 2);
}

TEST_CASE("latency coding of a constant bright image", "[coding]") {
    CodingConfig cfg;
    cfg.T = 16;
    std::vector<double> img{1.0, 1.0, 1.0, 1.0};
    SpikeTensor st = latency_encode(img, cfg);
    for (std::size_t f = 0; f < 4; ++f) CHECK(st.at(0, f) == 1.0);
    std::size_t total = 0;
    for (double v : st.data) total += v > 0 ? 1 : 0;
    CHECK(total == 4); // all at step 0, none removed
}

TEST_CASE("latency spike times are antitone in pixel value", "[coding]") {
    CodingConfig cfg;
    cfg.T = 64;
    std::vector<double> img;
    for (int i = 0; i <= 50; ++i) img.push_back(i / 50.0);
    SpikeTensor st = latency_encode(img, cfg);

    auto spike_time = [&](std::size_t f) -> int {
        for (std::size_t t = 0; t < st.T; ++t)
            if (st.at(t, f) > 0) return static_cast<int>(t);
        return static_cast<int>(st.T); // no spike sorts last
    };
    for (std::size_t f = 1; f < img.size(); ++f) {
        // img is increasing, so spike times must be non-increasing
        CHECK(spike_time(f) <= spike_time(f - 1));
    }
}

TEST_CASE("latency coding emits at most one spike per pixel", "[coding]") {
    CodingConfig cfg;
    Rng rng(55);
    std::vector<double> img;
    for (int i = 0; i < 97; ++i) img.push_back(rng.uniform());
    SpikeTensor st = latency_encode(img, cfg);
    std::size_t total = 0;
    for (std::size_t f = 0; f < img.size(); ++f) {
        std::size_t col = 0;
        for (std::size_t t = 0; t < st.T; ++t) col += st.at(t, f) > 0 ? 1 : 0;
        CHECK(col <= 1);
        total += col;
    }
    CHECK(total <= img.size());

    // deterministic: second call is identical
    SpikeTensor again = latency_encode(img, cfg);
    CHECK(st.data == again.data);
}

TEST_CASE("encoders produce strictly binary tensors", "[coding]") {
    CodingConfig cfg;
    cfg.T = 40;
    Rng rng(8);
    std::vector<double> img{0.05, 0.3, 0.55, 0.8, 1.0};
    for (double v : rate_encode(img, cfg, rng).data) CHECK((v == 0.0 || v == 1.0));
    for (double v : latency_encode(img, cfg).data) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("coding config is validated", "[coding]") {
    std::vector<double> img{0.5};
    Rng rng(1);
    CodingConfig bad;
    bad.gain = 0.0;
    CHECK_THROWS_AS(rate_encode(img, bad, rng), Error);
    bad = CodingConfig{};
    bad.v_th = 1.5;
    CHECK_THROWS_AS(latency_encode(img, bad), Error);
}
