#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "photonstat/correlate.hpp"
#include "photonstat/events.hpp"
#include "photonstat/rng.hpp"
#include "photonstat/synth.hpp"

using namespace photonstat;

namespace {

EventStream poisson_fixture(double rate, std::int64_t duration, std::uint64_t seed, int channels = 2) {
    Rng rng(seed);
    EventStream s;
    s.duration_ps = duration;
    for (int c = 0; c < channels; ++c)
        for (double t : poisson_times(rate, static_cast<double>(duration), rng))
            s.events.push_back({static_cast<std::uint8_t>(c), static_cast<std::int64_t>(std::llround(t))});
    s.sort();
    return s;
}

std::filesystem::path temp_file(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "photonstat_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("ttag round trip and exact file size") {
    EventStream s;
    s.duration_ps = 1000;
    Rng rng(5);
    for (int i = 0; i < 1000; ++i)
        s.events.push_back({static_cast<std::uint8_t>(rng.raw() % 4),
                            static_cast<std::int64_t>(rng.raw() % 100000) - 50000});
    s.sort();
    const auto path = temp_file("roundtrip.ttag");
    const auto n = write_stream(s, path.string());
    CHECK(n == s.events.size());
    CHECK(std::filesystem::file_size(path) == 8 + 9 * s.events.size());
    const auto back = read_stream(path.string());
    CHECK(back.events == s.events);

    EventStream empty;
    const auto epath = temp_file("empty.ttag");
    CHECK(write_stream(empty, epath.string()) == 0);
    CHECK(std::filesystem::file_size(epath) == 8);
    CHECK(read_stream(epath.string()).events.empty());

    EventStream unsorted;
    unsorted.events.push_back({0, 100});
    unsorted.events.push_back({0, 50});
    std::stringstream ss;
    CHECK_THROWS_AS(write_stream(unsorted, ss), InputError);

    std::stringstream bad("NONSENSE.....");
    CHECK_THROWS_AS(read_stream(bad, "bad"), FormatError);
}

TEST_CASE("csv stream round trip") {
    EventStream s;
    s.events.push_back({1, -250});
    s.events.push_back({0, 10});
    s.events.push_back({2, 10});
    s.sort();
    std::stringstream ss;
    write_stream_csv(s, ss);
    const auto back = read_stream_csv(ss, "csv");
    CHECK(back.events == s.events);
}

TEST_CASE("axis binning convention") {
    const auto axis = HistAxis::from_span(100, 25);
    CHECK(axis.size() == 9);  // odd, zero-centred
    std::size_t idx;
    REQUIRE(axis.index_of(0, idx));
    CHECK(idx == 4);
    CHECK(axis.center_ps(4) == 0.0);
    // left-closed right-open edges at half-bin offsets
    REQUIRE(axis.index_of(12, idx));
    CHECK(idx == 4);
    REQUIRE(axis.index_of(13, idx));
    CHECK(idx == 5);
    REQUIRE(axis.index_of(-12, idx));
    CHECK(idx == 4);
    REQUIRE(axis.index_of(-13, idx));
    CHECK(idx == 3);
    CHECK_FALSE(axis.index_of(113, idx));
    REQUIRE(axis.index_of(112, idx));
    CHECK(idx == 8);
    CHECK_THROWS_AS(HistAxis::from_span(100, 30), InputError);
    CHECK_THROWS_AS(HistAxis::from_span(100, 0), InputError);
}

TEST_CASE("sliding-window correlator equals brute force bit-exactly") {
    G2Options opt;
    opt.span_ps = 2000;
    opt.bin_ps = 50;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        auto s = poisson_fixture(2e-4, 10'000'000, seed);
        // sprinkle extra coincident structure
        Rng rng(seed + 77);
        std::vector<EventRecord> extra;
        for (const auto& e : s.events)
            if (e.channel == 0 && rng.bernoulli(0.1))
                extra.push_back({1, e.time_ps + static_cast<std::int64_t>(rng.normal(0.0, 100.0))});
        s.events.insert(s.events.end(), extra.begin(), extra.end());
        s.sort();
        REQUIRE(s.events.size() <= 10000);

        const auto fast = correlate_g2(s, 0, 1, opt);
        const auto slow = correlate_g2_bruteforce(s, 0, 1, opt);
        CHECK(fast.counts == slow.counts);

        const auto fast_auto = correlate_g2(s, 0, 0, opt);
        const auto slow_auto = correlate_g2_bruteforce(s, 0, 0, opt);
        CHECK(fast_auto.counts == slow_auto.counts);
    }
}

TEST_CASE("order invariance under shuffle + re-sort") {
    auto s = poisson_fixture(1e-4, 20'000'000, 9);
    G2Options opt;
    opt.span_ps = 1000;
    opt.bin_ps = 25;
    const auto before = correlate_g2(s, 0, 1, opt);
    Rng rng(123);
    for (std::size_t i = s.events.size(); i > 1; --i) std::swap(s.events[i - 1], s.events[rng.index(i)]);
    s.sort();
    const auto after = correlate_g2(s, 0, 1, opt);
    CHECK(before.counts == after.counts);
}

TEST_CASE("two independent poisson streams are flat at the poisson level") {
    auto s = poisson_fixture(5e-4, 100'000'000, 4);
    G2Options opt;
    opt.span_ps = 5000;
    opt.bin_ps = 100;
    const auto h = correlate_g2(s, 0, 1, opt);
    REQUIRE(!h.normalized.empty());
    // every bin within 4 sigma of 1, and the Poisson level matches the wings
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        const double expect = h.wing_baseline;
        const double sigma = std::sqrt(expect);
        CHECK(std::abs(static_cast<double>(h.counts[i]) - expect) < 4.5 * sigma);
    }
    CHECK(h.wing_baseline == Catch::Approx(h.poisson_level).epsilon(0.05));
}

TEST_CASE("slab partitioning with disjoint trigger ranges sums exactly") {
    auto s = poisson_fixture(3e-4, 50'000'000, 12);
    G2Options opt;
    opt.span_ps = 4000;
    opt.bin_ps = 100;
    const auto whole = correlate_g2(s, 0, 1, opt);

    G2Options part = opt;
    part.trigger_range = {{0, 17'000'000}};
    auto h1 = correlate_g2(s, 0, 1, part);
    part.trigger_range = {{17'000'000, 31'000'000}};
    auto h2 = correlate_g2(s, 0, 1, part);
    part.trigger_range = {{31'000'000, 50'000'001}};
    auto h3 = correlate_g2(s, 0, 1, part);
    const auto merged = merge_histograms(merge_histograms(h1, h2), h3);
    CHECK(merged.counts == whole.counts);
}

TEST_CASE("empty channel gives an empty histogram") {
    auto s = poisson_fixture(1e-4, 1'000'000, 3, 1);  // only channel 0
    G2Options opt;
    opt.span_ps = 1000;
    opt.bin_ps = 50;
    const auto h = correlate_g2(s, 0, 5, opt);
    CHECK(h.singles_b == 0);
    CHECK(h.total_counts() == 0);
    CHECK(h.normalized.empty());
}

TEST_CASE("g3 histogram basics") {
    G3Options opt;
    opt.span_charlie_ps = 290;
    opt.bin_charlie_ps = 29;
    opt.span_bob_ps = 580;
    opt.bin_bob_ps = 29;
    CHECK_THROWS_AS(correlate_g3(EventStream{}, 0, 1, 1, opt), InputError);

    auto s = poisson_fixture(8e-4, 60'000'000, 6, 3);
    const auto g = correlate_g3(s, 0, 1, 2, opt);
    CHECK(g.axis_charlie.size() == 21);
    CHECK(g.axis_bob.size() == 41);
    // flat within counting error
    double mean = 0.0;
    for (auto c : g.counts) mean += static_cast<double>(c);
    mean /= static_cast<double>(g.counts.size());
    REQUIRE(mean > 15.0);
    for (auto c : g.counts) CHECK(std::abs(static_cast<double>(c) - mean) < 5.5 * std::sqrt(mean));

    // all-pairs brute force on a small stream
    auto tiny = poisson_fixture(2e-3, 150'000, 7, 3);
    const auto gt = correlate_g3(tiny, 0, 1, 2, opt);
    const auto tt = tiny.channel_times(0);
    const auto t2 = tiny.channel_times(1);
    const auto t3 = tiny.channel_times(2);
    std::int64_t brute = 0;
    for (std::size_t i = 0; i < tt.size(); ++i)
        for (const auto b : t2)
            for (const auto c : t3) {
                std::size_t ic, ib;
                if (gt.axis_charlie.index_of(b - tt[i], ic) && gt.axis_bob.index_of(c - tt[i], ib)) ++brute;
            }
    CHECK(brute == gt.total_counts());
}

TEST_CASE("fidelity map and window scan") {
    G3Options opt;
    opt.span_charlie_ps = 87;
    opt.bin_charlie_ps = 29;
    opt.span_bob_ps = 87;
    opt.bin_bob_ps = 29;
    auto s = poisson_fixture(8e-4, 10'000'000, 8, 4);
    auto gp = correlate_g3(s, 0, 1, 2, opt);
    auto gq = correlate_g3(s, 0, 1, 3, opt);

    SECTION("equal maps give one half everywhere defined") {
        const auto m = build_fidelity_map(gp, gp);
        for (std::size_t i = 0; i < m.fidelity.size(); ++i)
            if (m.defined[i]) CHECK(m.fidelity[i] == 0.5);
    }

    SECTION("zero Q gives fidelity one where P is populated") {
        G3Histogram zero = gq;
        zero.counts.assign(zero.counts.size(), 0);
        const auto m = build_fidelity_map(gp, zero);
        for (std::size_t i = 0; i < m.fidelity.size(); ++i) {
            if (m.counts_p[i] > 0) {
                CHECK(m.defined[i] == 1);
                CHECK(m.fidelity[i] == 1.0);
            } else {
                CHECK(m.defined[i] == 0);
            }
        }
    }

    SECTION("window scan sums nested windows monotonically") {
        const auto m = build_fidelity_map(gp, gq);
        const auto scan = window_scan(m, {29.0, 87.0, 145.0}, 0.724);
        REQUIRE(scan.n_triples.size() == 3);
        CHECK(scan.n_triples[0] <= scan.n_triples[1]);
        CHECK(scan.n_triples[1] <= scan.n_triples[2]);
        // single-bin window equals the centre cell
        const auto centre = m.cell(m.axis_charlie.half_bins, m.axis_bob.half_bins);
        if (m.defined[centre]) CHECK(scan.mean_fidelity[0] == Catch::Approx(m.fidelity[centre]));
        CHECK(scan.effective_window_ps[1] == 87.0);
        CHECK_THROWS_AS(window_scan(m, {1e6}, 0.724), InputError);
        CHECK_THROWS_AS(window_scan(m, {-5.0}, 0.724), InputError);
    }

    SECTION("axis mismatch is rejected") {
        G3Options other = opt;
        other.span_bob_ps = 58;
        const auto gq2 = correlate_g3(s, 0, 1, 3, other);
        CHECK_THROWS_AS(build_fidelity_map(gp, gq2), InputError);
    }

    SECTION("error bars shrink as counts double") {
        const auto m1 = build_fidelity_map(gp, gq);
        auto gp2 = merge_g3(gp, gp);
        auto gq2 = merge_g3(gq, gq);
        const auto m2 = build_fidelity_map(gp2, gq2);
        const auto s1 = window_scan(m1, {87.0}, 0.724);
        const auto s2 = window_scan(m2, {87.0}, 0.724);
        CHECK(s2.std_error[0] == Catch::Approx(s1.std_error[0] / std::sqrt(2.0)).epsilon(1e-6));
    }
}

TEST_CASE("g2 csv writer/reader round trip with metadata") {
    auto s = poisson_fixture(2e-4, 5'000'000, 31);
    G2Options opt;
    opt.span_ps = 1000;
    opt.bin_ps = 50;
    const auto h = correlate_g2(s, 0, 1, opt);
    std::stringstream ss;
    write_g2_csv(h, ss, {{"config_hash", "deadbeef"}, {"seed", "31"}});
    const auto table = read_g2_csv(ss, "mem");
    REQUIRE(table.tau_ps.size() == h.counts.size());
    CHECK(table.meta.at("config_hash") == "deadbeef");
    CHECK(table.meta.at("bin_ps") == "50");
    for (std::size_t i = 0; i < table.tau_ps.size(); ++i) {
        CHECK(table.tau_ps[i] == Catch::Approx(h.axis.center_ps(i)));
        CHECK(table.counts[i] == Catch::Approx(static_cast<double>(h.counts[i])));
    }
}
