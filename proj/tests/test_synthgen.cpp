#include <gtest/gtest.h>

#include "abandon/synthgen.hpp"

using namespace abandon;

TEST(Synthgen, DefaultCountsAndValidity) {
    GeneratorParams p;
    p.rng_seed = 7;
    auto d = generate_dataset(p);
    ASSERT_EQ(d.size(), 107u);
    std::size_t bad = 0;
    for (const auto& s : d) {
        EXPECT_TRUE(validate_sequence(s).valid()) << s.session_id << ": " << validate_sequence(s).summary();
        bad += s.label() == Label::bad;
    }
    EXPECT_EQ(bad, 30u);
}

TEST(Synthgen, ByteIdenticalAndRoundTrips) {
    GeneratorParams p;
    p.rng_seed = 11;
    const auto a = serialize_dataset(generate_dataset(p));
    EXPECT_EQ(a, serialize_dataset(generate_dataset(p)));
    auto parsed = parse_dataset(std::string_view(a));
    EXPECT_TRUE(parsed.errors.empty());
    EXPECT_EQ(serialize_dataset(parsed.sequences), a);
    p.rng_seed = 12;
    EXPECT_NE(a, serialize_dataset(generate_dataset(p)));
}

TEST(Synthgen, EventCountStatistics) {
    GeneratorParams p;
    p.rng_seed = 1;
    p.n_good = 700;
    p.n_bad = 300;
    auto d = generate_dataset(p);
    std::vector<std::size_t> counts;
    for (const auto& s : d) counts.push_back(s.move_count());
    std::sort(counts.begin(), counts.end());
    const double median = 0.5 * static_cast<double>(counts[499] + counts[500]);
    EXPECT_GE(median, 15);
    EXPECT_LE(median, 23);
    const auto over50 = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 50; });
    EXPECT_LE(over50, 100);
}

TEST(Synthgen, BadOffsetsAreShorter) {
    GeneratorParams p;
    p.rng_seed = 2;
    p.n_good = 300;
    p.n_bad = 300;
    double sum[2] = {0, 0}, n[2] = {0, 0};
    for (const auto& s : generate_dataset(p)) {
        const auto m = s.moves();
        const auto c = static_cast<std::size_t>(s.label());
        for (std::size_t i = 1; i < m.size(); ++i) {
            sum[c] += m[i].t - m[i - 1].t;
            n[c] += 1;
        }
    }
    EXPECT_LT(sum[0] / n[0], sum[1] / n[1]);
}

TEST(Synthgen, OffsetsRespectPollingResolution) {
    GeneratorParams p;
    p.rng_seed = 3;
    for (const auto& s : generate_dataset(p)) {
        const auto m = s.moves();
        for (std::size_t i = 1; i < m.size(); ++i) EXPECT_GE(m[i].t - m[i - 1].t, 150);
    }
}
