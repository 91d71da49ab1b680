#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "crossbeta/csv_io.hpp"
#include "crossbeta/profile.hpp"
#include "crossbeta/rng.hpp"

using namespace crossbeta;

namespace {

Dataset random_dataset(std::uint64_t seed, std::size_t n, std::size_t d) {
    Rng rng(seed);
    std::vector<double> q;
    double v = 0.3;
    // header carries q at 6 decimals
    for (std::size_t k = 0; k < d; ++k) q.push_back(std::round((v += rng.uniform(0.001, 0.1)) * 1e6) / 1e6);
    std::vector<Profile> ps;
    for (std::size_t i = 0; i < n; ++i) {
        Profile p;
        p.id = "p" + std::to_string(i);
        const auto kind = rng.below(3);
        p.tier1 = kind == 0 ? Tier1::mica : Tier1::tissue;
        if (kind == 1) p.tier2 = Tier2::beta;
        if (kind == 2 && rng.uniform() < 0.8) p.tier2 = Tier2::not_beta;
        for (std::size_t k = 0; k < d; ++k) p.intensities.push_back(rng.uniform() < 0.05 ? 0.0 : std::exp(rng.normal(-4.0, 3.0)));
        ps.push_back(std::move(p));
    }
    return Dataset(QGrid(q), std::move(ps));
}

Dataset tissue_only(std::size_t n) {
    std::vector<Profile> ps;
    for (std::size_t i = 0; i < n; ++i) ps.push_back({"t" + std::to_string(i), {1.0, 2.0}, Tier1::tissue, Tier2::beta});
    return Dataset(QGrid({0.5, 1.0}), std::move(ps));
}

}  // namespace

TEST(QGrid, DefaultWindow) {
    const auto g = QGrid::waxs_default();
    EXPECT_EQ(g.size(), 211u);
    EXPECT_DOUBLE_EQ(g.front(), 0.4);
    EXPECT_DOUBLE_EQ(g.back(), 1.45);
    for (std::size_t k = 1; k < g.size(); ++k) EXPECT_GT(g[k], g[k - 1]);
}

TEST(QGrid, RejectsNonIncreasingOrNonPositive) {
    EXPECT_THROW(QGrid({0.5, 0.5}), DataError);
    EXPECT_THROW(QGrid({0.0, 1.0}), DataError);
    EXPECT_THROW(QGrid(std::vector<double>{}), DataError);
}

TEST(Dataset, ValidatesProfiles) {
    const QGrid g({0.5, 1.0});
    EXPECT_THROW(Dataset(g, {{"a", {1.0}, Tier1::tissue, std::nullopt}}), DataError);
    EXPECT_THROW(Dataset(g, {{"a", {1.0, -1.0}, Tier1::tissue, std::nullopt}}), DataError);
    EXPECT_THROW(Dataset(g, {{"a", {1.0, 1.0}, Tier1::mica, Tier2::beta}}), DataError);
    EXPECT_THROW(Dataset(g, {{"a", {1.0, 1.0}, Tier1::mica, {}}, {"a", {1.0, 1.0}, Tier1::mica, {}}}), DataError);
}

TEST(Summarize, Examples) {
    EXPECT_DOUBLE_EQ(summarize(std::vector<double>{1, 1, 1, 1}), 1.0);
    EXPECT_DOUBLE_EQ(summarize(std::vector<double>{0, 2}), 1.0);
    EXPECT_NEAR(summarize(std::vector<double>{0.1, 0.2, 0.6}), 0.3, 1e-15);
    EXPECT_THROW(summarize(std::vector<double>{}), DataError);
}

TEST(Summarize, IsLinear) {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t d = 1 + rng.below(300);
        std::vector<double> x(d), y(d), z(d);
        const double a = rng.normal(), b = rng.normal();
        for (std::size_t k = 0; k < d; ++k) {
            x[k] = rng.normal();
            y[k] = rng.normal();
            z[k] = a * x[k] + b * y[k];
        }
        EXPECT_NEAR(summarize(z), a * summarize(x) + b * summarize(y), 1e-12);
    }
}

TEST(Split, SizesMatchRatios) {
    EXPECT_EQ(split_sizes(1259, {}), (std::array<std::size_t, 3>{755, 252, 252}));
    EXPECT_EQ(split_sizes(10, {}), (std::array<std::size_t, 3>{6, 2, 2}));
}

TEST(Split, TenProfiles) {
    const auto ds = split_dataset(tissue_only(10), {}, 4);
    std::array<int, 3> counts{};
    for (const auto& p : ds.profiles()) ++counts[static_cast<int>(*ds.split_of(p))];
    EXPECT_EQ(counts, (std::array<int, 3>{6, 2, 2}));
}

TEST(Split, RejectsBadRatiosAndTinyData) {
    EXPECT_THROW(split_dataset(tissue_only(10), {0.5, 0.2, 0.2}, 1), ConfigError);
    EXPECT_THROW(split_dataset(tissue_only(10), {0.8, 0.2, 0.0}, 1), ConfigError);
    EXPECT_THROW(split_dataset(tissue_only(4), {}, 1), DataError);
}

TEST(Split, PartitionsAndIsDeterministic) {
    const auto ds = random_dataset(9, 400, 5);
    const auto a = split_dataset(ds, {}, 77);
    const auto b = split_dataset(ds, {}, 77);
    ASSERT_TRUE(a.split());
    EXPECT_EQ(*a.split(), *b.split());
    EXPECT_EQ(a.split()->size(), ds.size());
    std::set<std::string> ids;
    for (const auto& p : ds.profiles()) ids.insert(p.id);
    for (const auto& [id, s] : *a.split()) EXPECT_TRUE(ids.contains(id));
    const auto c = split_dataset(ds, {}, 78);
    EXPECT_NE(*a.split(), *c.split());
}

TEST(Split, DependsOnlyOnIdsNotOrder) {
    const auto ds = random_dataset(10, 120, 3);
    auto shuffled = ds.profiles();
    std::reverse(shuffled.begin(), shuffled.end());
    const Dataset ds2(ds.grid(), shuffled);
    EXPECT_EQ(*split_dataset(ds, {}, 5).split(), *split_dataset(ds2, {}, 5).split());
}

TEST(Split, StratifiedBalanceWithinOne) {
    const auto ds = split_dataset(random_dataset(11, 500, 3), {}, 2, true);
    for (const auto& row : split_balance(ds, {})) EXPECT_TRUE(row.within_one) << row.label;
}

TEST(Csv, RoundTripIsExact) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto ds = random_dataset(seed, 1 + seed % 7, 1 + seed % 13);
        std::stringstream ss;
        write_csv(ss, ds);
        EXPECT_EQ(read_csv(ss), ds) << "seed " << seed;
    }
}

TEST(Csv, HeaderFormat) {
    const Dataset ds(QGrid({0.4, 1.45}), {{"x", {1.0, 0.5}, Tier1::mica, {}}});
    std::stringstream ss;
    write_csv(ss, ds);
    std::string header;
    std::getline(ss, header);
    EXPECT_EQ(header, "id,tier1,tier2,q=0.400000,q=1.450000");
}

TEST(Csv, ShortRowNamesTheRow) {
    std::string text = "id,tier1,tier2";
    for (int k = 0; k < 211; ++k) text += ",q=" + std::to_string(0.4 + 0.005 * k);
    text += "\na,tissue,beta";
    for (int k = 0; k < 210; ++k) text += ",1.0";
    text += "\n";
    std::stringstream ss(text);
    try {
        read_csv(ss);
        FAIL() << "expected a format error";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
    }
}

TEST(Csv, LabelTokensAreCaseInsensitive) {
    std::stringstream ss("id,tier1,tier2,q=0.5\na,Tissue,BETA,1.0\nb,MICA,,2.0\n");
    const auto ds = read_csv(ss);
    EXPECT_EQ(ds.profiles()[0].tier1, Tier1::tissue);
    EXPECT_EQ(ds.profiles()[0].tier2, Tier2::beta);
    EXPECT_EQ(ds.profiles()[1].tier1, Tier1::mica);
    EXPECT_FALSE(ds.profiles()[1].tier2);
}

TEST(Csv, RejectsUnknownLabelAndNegativeIntensity) {
    std::stringstream bad_label("id,tier1,tier2,q=0.5\na,bone,,1.0\n");
    EXPECT_THROW(read_csv(bad_label), DataError);
    std::stringstream negative("id,tier1,tier2,q=0.5\na,tissue,,-1.0\n");
    EXPECT_THROW(read_csv(negative), DataError);
}

TEST(Rng, DeterministicAndSeedSensitive) {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        const auto x = a();
        EXPECT_EQ(x, b());
        (void)c();
    }
    EXPECT_NE(Rng(42)(), Rng(43)());
    EXPECT_NE(derive_seed(1, "split"), derive_seed(1, "stage1"));
    EXPECT_NE(derive_seed(1, 1), derive_seed(1, 2));
    EXPECT_EQ(derive_seed(5, "x"), derive_seed(5, "x"));
}

TEST(Rng, UniformAndNormalMoments) {
    Rng rng(8);
    const int n = 200000;
    double su = 0, sn = 0, sn2 = 0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        su += u;
        const double z = rng.normal();
        sn += z;
        sn2 += z * z;
    }
    EXPECT_NEAR(su / n, 0.5, 0.005);
    EXPECT_NEAR(sn / n, 0.0, 0.01);
    EXPECT_NEAR(sn2 / n, 1.0, 0.02);
}
