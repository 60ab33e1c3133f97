// Signal processing: pinned hand examples, dense-solve and brute-force
// oracles, filter template properties, and domain-map round trips.

#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "phasebeat/signal.hpp"

using namespace phasebeat;

namespace {

physio_signal sine(double freq, double rate, int n, double amp = 1.0, double phase = 0.0,
                   double offset = 0.0) {
    physio_signal s{std::vector<double>(static_cast<std::size_t>(n)), rate};
    for (int i = 0; i < n; ++i)
        s.samples[static_cast<std::size_t>(i)] =
            offset + amp * std::sin(2.0 * 3.14159265358979323846 * freq * i / rate + phase);
    return s;
}

double rms(const std::vector<double>& v, std::size_t a, std::size_t b) {
    double acc = 0;
    for (std::size_t i = a; i < b; ++i) acc += v[i] * v[i];
    return std::sqrt(acc / double(b - a));
}

}  // namespace

TEST_CASE("standardize basics") {
    physio_signal s{{0.0, 2.0}, 25.0};
    auto z = standardize(s);
    CHECK(z.samples[0] == Catch::Approx(-1.0));
    CHECK(z.samples[1] == Catch::Approx(1.0));

    auto zz = standardize(z);
    for (std::size_t i = 0; i < z.samples.size(); ++i)
        CHECK(zz.samples[i] == Catch::Approx(z.samples[i]).margin(1e-6));

    std::mt19937_64 rng(3);
    auto v = oracles::random_vec(rng, 200, -3, 5);
    auto r = standardize({v, 25.0});
    CHECK(std::fabs(mean_of(r.samples)) < 1e-9);
    CHECK(std::fabs(sd_of(r.samples) - 1.0) < 1e-9);

    CHECK_THROWS_AS(standardize({std::vector<double>(10, 4.2), 25.0}), numeric_error);
}

TEST_CASE("detrend: lambda zero annihilates, ramp flattens, oracle agreement") {
    std::mt19937_64 rng(17);
    auto v = oracles::random_vec(rng, 60);
    auto z = detrend({v, 25.0}, 0.0);
    for (double x : z.samples) CHECK(x == 0.0);

    physio_signal ramp{std::vector<double>(150), 25.0};
    for (int i = 0; i < 150; ++i) ramp.samples[static_cast<std::size_t>(i)] = 0.01 * i;
    auto dr = detrend(ramp, 100.0);
    const double range = 0.01 * 149;
    for (int i = 25; i < 125; ++i)
        CHECK(std::fabs(dr.samples[static_cast<std::size_t>(i)]) < 0.01 * range);

    for (unsigned seed = 0; seed < 5; ++seed) {
        std::mt19937_64 r2(seed);
        auto zv = oracles::random_vec(r2, 80, -2, 2);
        auto got = detrend({zv, 25.0}, 10.0);
        auto trend = oracles::detrend_trend_ref(zv, 10.0);
        for (std::size_t i = 0; i < zv.size(); ++i)
            REQUIRE(got.samples[i] == Catch::Approx(zv[i] - trend[i]).margin(1e-9));
    }
}

TEST_CASE("detrend frequency shaping and linearity") {
    const int n = 2000;
    auto drift = sine(0.05, 25.0, n);
    auto tone = sine(1.5, 25.0, n);
    auto dd = detrend(drift, 100.0);
    auto dt = detrend(tone, 100.0);
    const double att_drift =
        20.0 * std::log10(rms(dd.samples, n / 4, 3 * n / 4) / rms(drift.samples, n / 4, 3 * n / 4));
    const double att_tone =
        20.0 * std::log10(rms(dt.samples, n / 4, 3 * n / 4) / rms(tone.samples, n / 4, 3 * n / 4));
    CHECK(att_drift <= -20.0);
    CHECK(att_tone >= -1.0);

    std::mt19937_64 rng(9);
    auto xv = oracles::random_vec(rng, 100);
    auto yv = oracles::random_vec(rng, 100);
    std::vector<double> comb(100);
    for (std::size_t i = 0; i < 100; ++i) comb[i] = 2.0 * xv[i] - 0.5 * yv[i];
    auto dx = detrend({xv, 25.0}, 100.0);
    auto dy = detrend({yv, 25.0}, 100.0);
    auto dc = detrend({comb, 25.0}, 100.0);
    for (std::size_t i = 0; i < 100; ++i)
        REQUIRE(dc.samples[i] == Catch::Approx(2.0 * dx.samples[i] - 0.5 * dy.samples[i]).margin(1e-6));
}

TEST_CASE("bandpass pinned examples") {
    auto in_band = bandpass(sine(1.0, 25.0, 150), 0.5, 3.0);
    double mx = 0;
    for (int i = 25; i < 125; ++i)
        mx = std::max(mx, std::fabs(in_band.samples[static_cast<std::size_t>(i)]));
    CHECK(mx == Catch::Approx(1.0).epsilon(0.10));

    auto low = sine(0.1, 25.0, 150);
    auto low_f = bandpass(low, 0.5, 3.0);
    CHECK(rms(low_f.samples, 0, 150) < 0.10 * rms(low.samples, 0, 150));

    physio_signal dc{std::vector<double>(150, 2.0), 25.0};
    auto dc_f = bandpass(dc, 0.5, 3.0);
    CHECK(rms(dc_f.samples, 0, 150) < 1e-3 * 2.0);

    CHECK_THROWS_AS(bandpass(sine(1.0, 5.0, 100), 0.5, 3.0), value_error);
}

TEST_CASE("bandpass amplitude template: passband +-1 dB, stopbands >= 20 dB") {
    const int n = 4000;
    auto gain_db = [&](double f) {
        auto s = sine(f, 25.0, n);
        auto y = bandpass(s, 0.5, 3.0);
        return 20.0 * std::log10(rms(y.samples, n / 4, 3 * n / 4) / rms(s.samples, n / 4, 3 * n / 4));
    };
    for (double f : {0.5, 0.8, 1.0, 2.0, 3.0}) {
        const double g = gain_db(f);
        CHECK(g <= 1.0);
        CHECK(g >= -1.0);
    }
    CHECK(gain_db(0.25) <= -20.0);
    CHECK(gain_db(6.0) <= -20.0);
}

TEST_CASE("bandpass is zero phase") {
    for (double f : {0.8, 1.3, 2.2}) {
        auto s = sine(f, 25.0, 500);
        auto y = bandpass(s, 0.5, 3.0);
        CHECK(xcorr_delay(s, y, 20) == 0);
    }
}

TEST_CASE("power_spectrum: peak location, zero input, Parseval") {
    auto ps = power_spectrum(sine(1.2, 25.0, 150), 2048);
    double best = -1, best_f = 0;
    for (std::size_t k = 0; k < ps.power.size(); ++k)
        if (ps.power[k] > best) { best = ps.power[k]; best_f = ps.frequencies[k]; }
    CHECK(std::fabs(best_f - 1.2) <= 25.0 / 2048.0 + 1e-12);

    auto zps = power_spectrum({std::vector<double>(150, 0.0), 25.0});
    for (double p : zps.power) CHECK(p == 0.0);

    // Parseval for the one-sided array: sum_k |X_k|^2 over k = 0..M/2 equals
    // (M * sum x^2 + |X_0|^2 + |X_{M/2}|^2) / 2 for a real signal.
    std::mt19937_64 rng(23);
    auto v = oracles::random_vec(rng, 150);
    physio_signal s{v, 25.0};
    auto p2 = power_spectrum(s, 2048);
    const double c = double(v.size()) * s.rate;  // P_k = |X_k|^2 / c
    double one_sided = 0;
    for (double p : p2.power) one_sided += p * c;
    double energy = 0;
    for (double x : v) energy += x * x;
    const double expected = (2048.0 * energy + p2.power.front() * c + p2.power.back() * c) / 2.0;
    CHECK(one_sided == Catch::Approx(expected).epsilon(1e-6));
}

TEST_CASE("hr_from_spectrum pinned cases") {
    CHECK(hr_of(sine(1.2, 25.0, 150)) == Catch::Approx(72.0).margin(0.8));
    CHECK(hr_of(sine(0.5, 25.0, 150)) == Catch::Approx(30.0).margin(0.8));

    power_spectrum_t flat;
    for (int k = 0; k < 100; ++k) {
        flat.frequencies.push_back(k * 25.0 / 2048.0);
        flat.power.push_back(0.0);
    }
    CHECK_THROWS_AS(hr_from_spectrum(flat), numeric_error);

    auto s = sine(1.0, 25.0, 150);
    auto s5 = sine(1.0, 25.0, 150, 5.0);
    CHECK(hr_of(s) == hr_of(s5));
}

TEST_CASE("full pipeline recovers band-edge heart rates") {
    for (double bpm : {30.0, 60.0, 120.0, 180.0}) {
        auto s = sine(bpm / 60.0, 25.0, 150, 0.25, 0.0, 0.4);
        auto y = bandpass(detrend(standardize(s), 500.0), 0.5, 3.0);
        CHECK(hr_of(y) == Catch::Approx(bpm).margin(0.8));
    }
}

TEST_CASE("derivative: ramp, constant, sine curvature") {
    physio_signal ramp{std::vector<double>(50), 25.0};
    for (int i = 0; i < 50; ++i) ramp.samples[static_cast<std::size_t>(i)] = 0.3 * i;
    auto d1 = derivative(ramp, 1);
    REQUIRE(d1.samples.size() == 50);
    for (double v : d1.samples) CHECK(v == Catch::Approx(0.3 * 25.0).margin(1e-9));

    auto dc = derivative({std::vector<double>(20, 1.7), 25.0}, 1);
    for (double v : dc.samples) CHECK(v == 0.0);

    const double f = 1.2, w = 2.0 * 3.14159265358979323846 * f;
    auto s = sine(f, 25.0, 400);
    auto d2 = derivative(s, 2);
    for (int i = 50; i < 350; ++i) {
        const double expect = -w * w * s.samples[static_cast<std::size_t>(i)];
        if (std::fabs(expect) > 0.3 * w * w)
            CHECK(d2.samples[static_cast<std::size_t>(i)] == Catch::Approx(expect).epsilon(0.05));
    }

    CHECK_THROWS_AS(derivative({std::vector<double>{1.0, 2.0}, 25.0}, 3), value_error);
}

TEST_CASE("extrema_sets pinned examples and brute-force agreement") {
    auto e = extrema_sets({{0, 1, 0, 1, 0}, 25.0});
    CHECK(e.peaks == std::vector<std::int64_t>{1, 3});
    CHECK(e.valleys == std::vector<std::int64_t>{2});

    physio_signal mono{std::vector<double>(20), 25.0};
    for (int i = 0; i < 20; ++i) mono.samples[static_cast<std::size_t>(i)] = double(i);
    auto em = extrema_sets(mono);
    CHECK(em.peaks.empty());
    CHECK(em.valleys.empty());
    CHECK(em.refined_peaks.empty());

    // peaks {1, 1, 3}: mean 5/3, only the 3.0 peak survives refinement
    physio_signal tri{{0, 1, 0, 1, 0, 3, 0}, 25.0};
    auto et = extrema_sets(tri);
    REQUIRE(et.peaks == std::vector<std::int64_t>{1, 3, 5});
    CHECK(et.refined_peaks == std::vector<std::int64_t>{5});

    for (unsigned seed = 0; seed < 1000; ++seed) {
        std::mt19937_64 rng(seed);
        auto v = oracles::random_vec(rng, 40);
        auto got = extrema_sets({v, 25.0});
        std::vector<std::int64_t> peaks, valleys;
        oracles::extrema_ref(v, peaks, valleys);
        REQUIRE(got.peaks == peaks);
        REQUIRE(got.valleys == valleys);
        // refined sets are subsets and never empty when the raw set is non-empty
        if (!peaks.empty()) REQUIRE_FALSE(got.refined_peaks.empty());
        for (auto t : got.refined_peaks)
            REQUIRE(std::find(peaks.begin(), peaks.end(), t) != peaks.end());
    }
}

TEST_CASE("pv_levels: sine amplitude, translation equivariance, errors") {
    auto s = sine(1.2, 25.0, 400, 0.8);
    auto pv = pv_levels(s);
    CHECK(pv.p == Catch::Approx(0.8).epsilon(0.02));
    CHECK(pv.v == Catch::Approx(-0.8).epsilon(0.02));

    auto shifted = s;
    for (auto& v : shifted.samples) v += 3.7;
    auto pv2 = pv_levels(shifted);
    CHECK(pv2.p == Catch::Approx(pv.p + 3.7).margin(1e-12));
    CHECK(pv2.v == Catch::Approx(pv.v + 3.7).margin(1e-12));

    auto tiny = pv_levels({{0, 1, 0, 1, 0}, 25.0});
    CHECK(tiny.p == 1.0);
    CHECK(tiny.v == 0.0);

    physio_signal ramp{std::vector<double>(30), 25.0};
    for (int i = 0; i < 30; ++i) ramp.samples[static_cast<std::size_t>(i)] = double(i);
    CHECK_THROWS_AS(pv_levels(ramp), numeric_error);
}

TEST_CASE("scale_rppg_to_abp: endpoints, shape preservation, errors") {
    std::mt19937_64 rng(4);
    auto v = oracles::random_vec(rng, 150, 0.0, 1.0);
    v[3] = 0.0;
    v[77] = 1.0;
    physio_signal y{v, 25.0};
    auto out = scale_rppg_to_abp(y, 120.0, 80.0);
    const auto [mn, mx] = std::minmax_element(out.samples.begin(), out.samples.end());
    CHECK(*mn == Catch::Approx(80.0).margin(1e-6));
    CHECK(*mx == Catch::Approx(120.0).margin(1e-6));
    CHECK(pearson(y.samples, out.samples) == Catch::Approx(1.0).margin(1e-9));

    CHECK_THROWS_AS(scale_rppg_to_abp({std::vector<double>(10, 0.5), 25.0}, 120.0, 80.0),
                    numeric_error);
    CHECK_THROWS_AS(scale_rppg_to_abp(y, 80.0, 120.0), value_error);
}

TEST_CASE("gt_bp_from_abp on clean oscillation") {
    auto abp = sine(1.2, 25.0, 150, 20.0, 0.0, 100.0);  // 80 <-> 120 mmHg
    auto [sbp, dbp] = gt_bp_from_abp(abp);
    CHECK(sbp == Catch::Approx(120.0).margin(1.0));
    CHECK(dbp == Catch::Approx(80.0).margin(1.0));
    CHECK(sbp > dbp);
    CHECK_THROWS_AS(gt_bp_from_abp({std::vector<double>(20, 100.0), 25.0}), numeric_error);
}

TEST_CASE("scale then gt_bp recovers the targets") {
    auto y = sine(1.1, 25.0, 150, 1.0);
    auto scaled = scale_rppg_to_abp(y, 131.0, 76.0);
    auto [sbp, dbp] = gt_bp_from_abp(scaled);
    CHECK(sbp == Catch::Approx(131.0).margin(1.0));
    CHECK(dbp == Catch::Approx(76.0).margin(1.0));
}

TEST_CASE("pseudo_ppg_from_abp pinned examples") {
    auto abp = sine(1.2, 25.0, 150, 18.0, 0.3, 100.0);
    auto ppg = pseudo_ppg_from_abp(abp);
    double best = -1, best_f = 0;
    auto ps = power_spectrum(ppg);
    for (std::size_t k = 0; k < ps.power.size(); ++k)
        if (ps.power[k] > best) { best = ps.power[k]; best_f = ps.frequencies[k]; }
    CHECK(std::fabs(best_f - 1.2) <= 2.0 * 25.0 / 2048.0);
    CHECK(std::fabs(mean_of(ppg.samples)) < 0.05);

    CHECK_THROWS_AS(pseudo_ppg_from_abp({std::vector<double>(150, 100.0), 25.0}), numeric_error);
}

TEST_CASE("xcorr_delay sign convention") {
    // b lags a by 5 samples -> +5
    const int n = 300;
    physio_signal a = sine(1.0, 25.0, n), b{std::vector<double>(static_cast<std::size_t>(n)), 25.0};
    for (int i = 0; i < n; ++i) {
        const int j = i - 5;
        b.samples[static_cast<std::size_t>(i)] =
            std::sin(2.0 * 3.14159265358979323846 * 1.0 * j / 25.0);
    }
    CHECK(xcorr_delay(a, b, 12) == 5);
    CHECK(xcorr_delay(b, a, 12) == -5);
}

TEST_CASE("csv and json round trips") {
    std::mt19937_64 rng(8);
    auto v = oracles::random_vec(rng, 37);
    const std::string path = "/tmp/pb_sig_test.csv";
    write_csv(v, path);
    auto back = read_csv(path);
    REQUIRE(back.size() == v.size());
    for (std::size_t i = 0; i < v.size(); ++i) REQUIRE(back[i] == Catch::Approx(v[i]).margin(1e-15));

    physio_signal s{v, 25.0};
    auto j = signal_to_json(s);
    auto s2 = signal_from_json(j);
    CHECK(s2.rate == 25.0);
    REQUIRE(s2.samples == s.samples);

    auto ps = power_spectrum(s, 64);
    spectrum_to_csv(ps, "/tmp/pb_spec_test.csv");
    std::ifstream f("/tmp/pb_spec_test.csv");
    std::string header;
    std::getline(f, header);
    CHECK(header == "frequency,power");
}
