#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "burstlab/metrics.hpp"
#include "burstlab/random.hpp"

using namespace burstlab;

namespace {

Tensor random_image(int c, int h, int w, uint64_t seed) {
    Tensor t(c, h, w);
    RandomSource rng(seed);
    for (auto& v : t.v) v = static_cast<float>(rng.uniform());
    return t;
}

} // namespace

TEST_CASE("psnr formula cases", "[metrics]") {
    Tensor a(1, 4, 4), b(1, 4, 4);
    SECTION("identical images hit the cap") {
        a.fill(0.3f);
        b.fill(0.3f);
        CHECK(psnr(a, b) == 99.0);
    }
    SECTION("MSE 0.01 gives 20 dB") {
        a.fill(0.0f);
        b.fill(0.1f);
        CHECK(psnr(a, b) == Catch::Approx(20.0).margin(1e-6));
    }
    SECTION("MSE 0.25 gives about 6.0206 dB") {
        a.fill(0.0f);
        b.fill(0.5f);
        CHECK(psnr(a, b) == Catch::Approx(10.0 * std::log10(4.0)).margin(1e-9));
        CHECK(psnr(a, b) == Catch::Approx(6.0206).margin(1e-3));
    }
    SECTION("shape mismatch rejected") {
        Tensor c(1, 4, 5);
        CHECK_THROWS_AS(psnr(a, c), param_error);
    }
}

TEST_CASE("psnr decreases monotonically with added noise", "[metrics]") {
    Tensor img = random_image(3, 24, 24, 5);
    double prev = 1e9;
    for (double sigma : {0.01, 0.05, 0.1}) {
        RandomSource rng(99);
        Tensor noisy = img;
        for (auto& v : noisy.v) v = static_cast<float>(v + sigma * rng.normal());
        double p = psnr(img, noisy);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("ssim identity, symmetry, and range", "[metrics]") {
    Tensor a = random_image(3, 16, 16, 1);
    CHECK(ssim(a, a) == Catch::Approx(1.0).margin(1e-12));
    for (int i = 0; i < 8; ++i) {
        Tensor x = random_image(3, 16, 16, 100 + i);
        Tensor y = random_image(3, 16, 16, 200 + i);
        double sxy = ssim(x, y);
        double syx = ssim(y, x);
        CHECK(sxy == Catch::Approx(syx).margin(1e-12));
        CHECK(sxy <= 1.0);
        CHECK(sxy >= -1.0);
        CHECK(sxy < 1.0 - 1e-12); // different images never reach 1
    }
    Tensor tiny(3, 8, 8);
    CHECK_THROWS_AS(ssim(tiny, tiny), param_error);
}

TEST_CASE("ssim of two constant images matches the luminance-only closed form", "[metrics]") {
    Tensor a(1, 16, 16), b(1, 16, 16);
    a.fill(0.2f);
    b.fill(0.8f);
    // zero variances: SSIM = (2 mu1 mu2 + C1) / (mu1^2 + mu2^2 + C1)
    const double c1 = 0.01 * 0.01;
    const double expect = (2.0 * 0.2 * 0.8 + c1) / (0.2 * 0.2 + 0.8 * 0.8 + c1);
    CHECK(ssim(a, b) == Catch::Approx(expect).margin(1e-6));
}

TEST_CASE("perceptual plugin parses stdout floats", "[metrics]") {
    auto plugin = PerceptualPlugin::parse("echoed:echo 0.5 # {a} vs {b}");
    REQUIRE(plugin.available());
    MetricValue v = plugin.run_pair("x.png", "y.png");
    CHECK(v.status == MetricValue::Status::ok);
    CHECK(v.value == Catch::Approx(0.5));
}

TEST_CASE("missing plugin executable reports unavailable", "[metrics]") {
    PerceptualPlugin plugin("ghost", "/nonexistent/binary {a} {b}");
    CHECK_FALSE(plugin.available());
    MetricValue v = plugin.run_pair("a.png", "b.png");
    CHECK(v.status == MetricValue::Status::unavailable);
}

TEST_CASE("failing plugin command marks the sample failed", "[metrics]") {
    PerceptualPlugin plugin("bad", "false {a} {b}");
    REQUIRE(plugin.available());
    MetricValue v = plugin.run_pair("a.png", "b.png");
    CHECK(v.status == MetricValue::Status::failed);
    PerceptualPlugin wordy("words", "echo not-a-number");
    MetricValue w = wordy.run_pair("a", "b");
    CHECK(w.status == MetricValue::Status::failed);
}

TEST_CASE("plugin spec validation", "[metrics]") {
    CHECK_THROWS_AS(PerceptualPlugin::parse("nocolon"), param_error);
    CHECK_THROWS_AS(PerceptualPlugin::parse(":cmd"), param_error);
    auto dist = PerceptualPlugin::parse("fidlike:echo 1.0 {dir_a} {dir_b}");
    CHECK(dist.is_distribution());
}

TEST_CASE("report aggregates are the arithmetic mean of ok samples", "[metrics]") {
    MetricReport rep;
    rep.metric_names = {"psnr", "lpips"};
    for (int i = 0; i < 4; ++i) {
        MetricReport::Row row;
        row.index = i;
        row.values["psnr"] = MetricValue::ok_value(30.0 + i);
        row.values["lpips"] = i == 2 ? MetricValue::failed() : MetricValue::ok_value(0.1 * i);
        rep.add_row(row);
    }
    rep.finalize();
    REQUIRE(rep.aggregates.count("psnr"));
    CHECK(rep.aggregates["psnr"].value == Catch::Approx((30 + 31 + 32 + 33) / 4.0));
    CHECK(rep.aggregates["lpips"].value == Catch::Approx((0.0 + 0.1 + 0.3) / 3.0));

    // mean recomputed from the per-sample rows matches the stored aggregate
    double mean = 0;
    for (const auto& row : rep.rows) mean += row.values.at("psnr").value;
    mean /= rep.rows.size();
    CHECK(mean == rep.aggregates["psnr"].value);

    std::ostringstream csv;
    rep.write_csv(csv);
    CHECK(csv.str().find("sample,psnr,psnr_status,lpips,lpips_status") == 0);
    auto j = rep.to_json();
    CHECK(j["sample_count"] == 4);
    CHECK(j["aggregates"]["psnr"]["status"] == "ok");
}

TEST_CASE("report with only unavailable values stays unavailable", "[metrics]") {
    MetricReport rep;
    rep.metric_names = {"lpips"};
    for (int i = 0; i < 2; ++i) {
        MetricReport::Row row;
        row.index = i;
        row.values["lpips"] = MetricValue::unavailable();
        rep.add_row(row);
    }
    rep.finalize();
    CHECK(rep.aggregates["lpips"].status == MetricValue::Status::unavailable);
}
