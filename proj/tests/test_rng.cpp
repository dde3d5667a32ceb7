#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <set>

#include "ssr/rng.hpp"

using ssr::derive;
using ssr::Rng;
using ssr::RngSeed;

TEST_CASE("derive is deterministic and tag-sensitive") {
    RngSeed base{42};
    REQUIRE(derive(base, "data").value == derive(base, "data").value);
    REQUIRE(derive(base, "data").value != derive(base, "split").value);
    REQUIRE(derive(base, 1).value != derive(base, 2).value);
    REQUIRE(derive(RngSeed{1}, "data").value != derive(RngSeed{2}, "data").value);
}

TEST_CASE("variadic derive folds left") {
    RngSeed base{7};
    REQUIRE(derive(base, "rrs", 3).value == derive(derive(base, "rrs"), 3).value);
    REQUIRE(derive(base, 1, 2, 3).value == derive(derive(derive(base, 1), 2), 3).value);
}

TEST_CASE("identical seeds give identical streams") {
    Rng a(RngSeed{123});
    Rng b(RngSeed{123});
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("uniform01 stays in [0,1) with sane mean") {
    Rng rng(RngSeed{5});
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
        double u = rng.uniform01();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    REQUIRE(sum / 20000 == Catch::Approx(0.5).margin(0.02));
}

TEST_CASE("uniform_int is unbiased over small ranges") {
    Rng rng(RngSeed{6});
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 50000; ++i) counts[static_cast<std::size_t>(rng.uniform_int(5))]++;
    for (int c : counts) REQUIRE(std::abs(c - 10000) < 500);
}

TEST_CASE("normal draws match requested moments") {
    Rng rng(RngSeed{7});
    double sum = 0.0;
    double sq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        double x = rng.normal(2.0, 3.0);
        sum += x;
        sq += x * x;
    }
    double mean = sum / n;
    double var = sq / n - mean * mean;
    REQUIRE(mean == Catch::Approx(2.0).margin(0.05));
    REQUIRE(var == Catch::Approx(9.0).margin(0.3));
}

TEST_CASE("categorical respects the weights") {
    Rng rng(RngSeed{8});
    std::vector<double> probs = {0.2, 0.5, 0.3};
    std::vector<int> counts(3, 0);
    for (int i = 0; i < 30000; ++i) counts[static_cast<std::size_t>(rng.categorical(probs))]++;
    REQUIRE(counts[0] / 30000.0 == Catch::Approx(0.2).margin(0.02));
    REQUIRE(counts[1] / 30000.0 == Catch::Approx(0.5).margin(0.02));
    REQUIRE(counts[2] / 30000.0 == Catch::Approx(0.3).margin(0.02));
}

TEST_CASE("shuffle permutes without loss") {
    Rng rng(RngSeed{9});
    std::vector<int> v = {0, 1, 2, 3, 4, 5, 6, 7};
    rng.shuffle(v);
    std::set<int> seen(v.begin(), v.end());
    REQUIRE(seen.size() == 8);
    Rng rng2(RngSeed{9});
    std::vector<int> w = {0, 1, 2, 3, 4, 5, 6, 7};
    rng2.shuffle(w);
    REQUIRE(v == w);
}
