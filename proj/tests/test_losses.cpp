// Training objectives: band selection, spectral distance against a dense DFT
// oracle, soft versus hard heart rate, time and extrema distances, composite
// decomposition, Huber pins, waveform reconstruction, finite differences.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "oracles.hpp"
#include "phasebeat/losses.hpp"

using namespace phasebeat;

namespace {

physio_signal sine(double freq, double rate, std::size_t n, double amp = 1.0, double phase = 0.0,
                   double offset = 0.0) {
    physio_signal s{std::vector<double>(n), rate};
    for (std::size_t i = 0; i < n; ++i)
        s.samples[i] = offset + amp * std::sin(2.0 * M_PI * freq * double(i) / rate + phase);
    return s;
}

physio_signal random_sig(std::mt19937_64& rng, std::size_t n, double rate) {
    return {oracles::random_vec(rng, n), rate};
}

// Blackman taper normalized to unit mean square, written out independently
// of the library's helper.
std::vector<double> tapered(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<double> w(n);
    double power = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double u = 2.0 * M_PI * double(i) / double(n - 1);
        w[i] = 0.42 - 0.5 * std::cos(u) + 0.08 * std::cos(2.0 * u);
        power += w[i] * w[i];
    }
    const double g = std::sqrt(double(n) / power);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * w[i] * g;
    return out;
}

double band_l2_ref(const std::vector<double>& a, const std::vector<double>& b, double rate,
                   std::int64_t pad) {
    const auto pa = oracles::periodogram_ref(tapered(a), pad, rate);
    const auto pb = oracles::periodogram_ref(tapered(b), pad, rate);
    const auto [k_lo, k_hi] = band_bin_range(pad, rate);
    double acc = 0;
    for (auto k = k_lo; k <= k_hi; ++k) {
        const double d = pa[static_cast<std::size_t>(k)] - pb[static_cast<std::size_t>(k)];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

TEST_CASE("band bins cover half to three hertz at the training pad") {
    const auto [k_lo, k_hi] = band_bin_range(2048, 25.0);
    REQUIRE(k_lo == 41);
    REQUIRE(k_hi == 245);
    CHECK(double(k_lo) * 25.0 / 2048.0 >= 0.5);
    CHECK(double(k_lo - 1) * 25.0 / 2048.0 < 0.5);
    CHECK(double(k_hi) * 25.0 / 2048.0 <= 3.0);
    CHECK(double(k_hi + 1) * 25.0 / 2048.0 > 3.0);
    REQUIRE_THROWS_AS(band_bin_range(64, 25.0, 0.5, 0.4), error);
}

TEST_CASE("spectral distance: identity, symmetry, dense oracle") {
    const double rate = 25.0;
    auto y1 = sine(1.0, rate, 150);
    auto y2 = sine(2.0, rate, 150);
    auto t1 = signal_tensor<double>(y1);
    auto t2 = signal_tensor<double>(y2);
    REQUIRE(l_freq(t1, t1, rate).item() == 0.0);
    const double ab = l_freq(t1, t2, rate).item();
    const double ba = l_freq(t2, t1, rate).item();
    REQUIRE(ab > 0.0);
    REQUIRE(ab == ba);

    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        auto a = random_sig(rng, 150, rate);
        auto b = random_sig(rng, 150, rate);
        const double got = l_freq(signal_tensor<double>(a), signal_tensor<double>(b), rate).item();
        const double want = band_l2_ref(a.samples, b.samples, rate, loss_pad);
        REQUIRE(got == Catch::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("plain heart rate error is the absolute difference") {
    REQUIRE(l_hr(72.0, 70.0) == 2.0);
    REQUIRE(l_hr(70.0, 72.0) == 2.0);
    REQUIRE(l_hr(88.5, 88.5) == 0.0);
}

TEST_CASE("soft heart rate tracks the hard argmax on clean tones") {
    const double rate = 25.0;
    for (double bpm : {42.0, 60.0, 75.0, 96.0, 120.0, 150.0, 171.0}) {
        auto y = sine(bpm / 60.0, rate, 150, 0.9, 0.4);
        const double hard = hr_of(y);
        const double soft = soft_hr_bpm(signal_tensor<double>(y), rate).item();
        INFO("bpm " << bpm << " hard " << hard << " soft " << soft);
        REQUIRE(std::fabs(soft - hard) < 1.0);
    }
}

TEST_CASE("time distance: identity, constant offset, recomputation") {
    const double rate = 25.0;
    auto y = sine(1.2, rate, 150);
    auto t = signal_tensor<double>(y);
    REQUIRE(l_time(t, t).item() == 0.0);

    const double c = 0.75;
    auto shifted = y;
    for (auto& v : shifted.samples) v += c;
    const double got = l_time(signal_tensor<double>(shifted), t).item();
    REQUIRE(got == Catch::Approx(c * std::sqrt(150.0)).epsilon(1e-9));

    std::mt19937_64 rng(7);
    auto a = random_sig(rng, 90, rate);
    auto b = random_sig(rng, 90, rate);
    double acc = 0;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        const double d = a.samples[i] - b.samples[i];
        acc += d * d;
    }
    REQUIRE(l_time(signal_tensor<double>(a), signal_tensor<double>(b)).item() ==
            Catch::Approx(std::sqrt(acc)).epsilon(1e-12));
}

TEST_CASE("extrema level distance: pinned formula, shift, and skip") {
    const double rate = 25.0;

    SECTION("hand-built pair gives root five") {
        physio_signal y{{0.0, 1.0, 0.0, 1.0, 0.0}, rate};
        tensor<double> y_hat = tensor<double>::from({5}, {-1.0, 3.0, -1.0, 3.0, -1.0});
        auto pv = l_pv(y_hat, y);
        REQUIRE(pv.has_value());
        REQUIRE(pv->item() == Catch::Approx(std::sqrt(5.0)).epsilon(1e-12));
    }

    SECTION("identical signals give zero") {
        auto y = sine(1.1, rate, 150);
        auto pv = l_pv(signal_tensor<double>(y), y);
        REQUIRE(pv.has_value());
        REQUIRE(pv->item() == 0.0);
    }

    SECTION("constant shift gives |c| root two") {
        auto y = sine(1.1, rate, 150);
        const double c = -0.3;
        auto shifted = y;
        for (auto& v : shifted.samples) v += c;
        auto pv = l_pv(signal_tensor<double>(shifted), y);
        REQUIRE(pv.has_value());
        REQUIRE(pv->item() == Catch::Approx(std::fabs(c) * std::sqrt(2.0)).epsilon(1e-9));
    }

    SECTION("monotone prediction skips") {
        auto y = sine(1.1, rate, 150);
        std::vector<double> ramp(150);
        for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = double(i);
        REQUIRE_FALSE(l_pv(tensor<double>::from({150}, std::move(ramp)), y).has_value());
    }
}

TEST_CASE("facial and acral composites decompose and order correctly") {
    const double rate = 25.0;
    // 60 BPM puts exactly six periods in the window, so a circular rotation
    // below is a pristine phase shift rather than a spliced discontinuity.
    const double bpm = 60.0;
    auto y = sine(bpm / 60.0, rate, 150, 0.8);
    auto yt = signal_tensor<double>(y);

    SECTION("perfect match leaves only the soft-hard heart rate residual") {
        auto t = l_facial(yt, y, bpm);
        REQUIRE_FALSE(t.pv_skipped);
        REQUIRE(t.freq.item() == 0.0);
        REQUIRE(t.pv.item() == 0.0);
        REQUIRE(t.total.item() < 1e-3);  // lambda1 * |soft - hard| only
    }

    SECTION("doubling lambda2 doubles the spectral contribution") {
        std::mt19937_64 rng(11);
        auto y_hat = signal_tensor<double>(random_sig(rng, 150, rate));
        loss_weights w1, w2;
        w2.lambda2 = 2.0 * w1.lambda2;
        auto t1 = l_facial(y_hat, y, bpm, w1);
        auto t2 = l_facial(y_hat, y, bpm, w2);
        REQUIRE(t2.total.item() - t1.total.item() ==
                Catch::Approx(w1.lambda2 * t1.freq.item()).epsilon(1e-9));
    }

    SECTION("acral equals facial plus the time term") {
        std::mt19937_64 rng(13);
        auto y_hat = signal_tensor<double>(random_sig(rng, 150, rate));
        auto tf = l_facial(y_hat, y, bpm);
        auto ta = l_acral(y_hat, y, bpm);
        REQUIRE(ta.has_time);
        REQUIRE(ta.total.item() ==
                Catch::Approx(tf.total.item() + ta.time.item()).epsilon(1e-12));
    }

    SECTION("a near-quarter-period circular shift is nearly free for facial only") {
        auto shifted = y;
        const std::size_t lag = 6;  // period is 25 samples
        std::rotate(shifted.samples.begin(), shifted.samples.begin() + lag,
                    shifted.samples.end());
        auto st = signal_tensor<double>(shifted);
        auto tf = l_facial(st, y, bpm);
        auto ta = l_acral(st, y, bpm);
        const double f = tf.total.item();
        const double a = ta.total.item();
        INFO("facial " << f << " acral " << a);
        REQUIRE(f < 0.01 * a);
        // The gap is carried entirely by the time term.
        REQUIRE(a - f == Catch::Approx(ta.time.item()).epsilon(1e-9));
        REQUIRE(ta.time.item() > 1.0);
    }
}

TEST_CASE("huber penalty hits the pinned points exactly") {
    auto at = [](double d) {
        auto pred = tensor<double>::from({1}, {100.0 + d});
        return huber(pred, 100.0, 1.0).item();
    };
    REQUIRE(at(0.0) == 0.0);
    REQUIRE(at(0.5) == 0.125);
    REQUIRE(at(3.0) == 2.5);
    REQUIRE(at(-0.5) == 0.125);
    REQUIRE(at(-3.0) == 2.5);
}

TEST_CASE("waveform reconstruction: exactness, monotonicity, recomputation") {
    const double rate = 25.0;
    const std::size_t n = 150;
    // A pressure-like oscillation and an affine copy as the pulse shape.
    physio_signal abp{std::vector<double>(n), rate};
    physio_signal y_a{std::vector<double>(n), rate};
    for (std::size_t i = 0; i < n; ++i) {
        const double w = 0.5 + 0.5 * std::sin(2.0 * M_PI * 1.2 * double(i) / rate);
        abp.samples[i] = 70.0 + 50.0 * w;
        y_a.samples[i] = w;
    }
    const double mx = *std::max_element(abp.samples.begin(), abp.samples.end());
    const double mn = *std::min_element(abp.samples.begin(), abp.samples.end());

    SECTION("true extrema reconstruct the waveform") {
        auto sbp_hat = tensor<double>::from({1}, {mx});
        auto dbp_hat = tensor<double>::from({1}, {mn});
        REQUIRE(l_abp(y_a, sbp_hat, dbp_hat, abp).item() < 1e-3 * std::sqrt(double(n)));
    }

    SECTION("loss grows with systolic overshoot") {
        double prev = -1.0;
        for (double over = 0.0; over <= 20.0; over += 5.0) {
            auto sbp_hat = tensor<double>::from({1}, {mx + over});
            auto dbp_hat = tensor<double>::from({1}, {mn});
            const double v = l_abp(y_a, sbp_hat, dbp_hat, abp).item();
            REQUIRE(v > prev);
            prev = v;
        }
    }

    SECTION("random case matches direct recomputation") {
        std::mt19937_64 rng(17);
        auto shape = random_sig(rng, n, rate);
        const double sbp = 131.0, dbp = 76.0;
        const double smx = *std::max_element(shape.samples.begin(), shape.samples.end());
        const double smn = *std::min_element(shape.samples.begin(), shape.samples.end());
        double acc = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double u = (shape.samples[i] - smn) / (smx - smn);
            const double d = dbp * (1.0 - u) + sbp * u - abp.samples[i];
            acc += d * d;
        }
        auto got = l_abp(shape, tensor<double>::from({1}, {sbp}),
                         tensor<double>::from({1}, {dbp}), abp);
        REQUIRE(got.item() == Catch::Approx(std::sqrt(acc)).epsilon(1e-9));
    }

    SECTION("pressure composite decomposes and reaches both scalars") {
        auto sbp_hat = tensor<double>::from({1}, {mx + 4.0});
        auto dbp_hat = tensor<double>::from({1}, {mn - 2.0});
        sbp_hat.requires_grad(true);
        dbp_hat.requires_grad(true);
        auto t = l_bp(sbp_hat, dbp_hat, mx, mn, y_a, abp);
        REQUIRE(t.total.item() ==
                Catch::Approx(t.sbp.item() + t.dbp.item() + t.abp.item()).epsilon(1e-12));
        t.total.backward();
        REQUIRE(std::fabs(sbp_hat.grad()[0]) > 0.0);
        REQUIRE(std::fabs(dbp_hat.grad()[0]) > 0.0);
    }
}

TEST_CASE("losses agree with finite differences at generic points") {
    const double rate = 25.0;
    const double bpm = 84.0;
    auto y = sine(bpm / 60.0, rate, 150, 0.8);

    SECTION("stage-1 composite w.r.t. the predicted signal") {
        for (unsigned seed = 0; seed < 3; ++seed) {
            double best = std::numeric_limits<double>::infinity();
            for (unsigned draw = 0; draw < 3 && !(best < 1e-4); ++draw) {
                std::mt19937_64 rng(700 + 10 * seed + draw);
                auto y_hat = signal_tensor<double>(random_sig(rng, 150, rate));
                y_hat.requires_grad(true);
                auto forward = [&]() { return l_acral(y_hat, y, bpm).total; };
                std::mt19937_64 pick(800 + 10 * seed + draw);
                best = std::min(best,
                                oracles::fd_dir_max_rel_err({y_hat}, forward, pick, 1e-4, 4));
            }
            INFO("seed " << seed << " best rel err " << best);
            REQUIRE(best < 1e-4);
        }
    }

    SECTION("pressure composite w.r.t. both pressure scalars") {
        physio_signal abp{std::vector<double>(150), rate}, y_a{std::vector<double>(150), rate};
        for (std::size_t i = 0; i < 150; ++i) {
            const double w = 0.5 + 0.5 * std::sin(2.0 * M_PI * 1.3 * double(i) / rate + 0.2);
            abp.samples[i] = 68.0 + 55.0 * w;
            y_a.samples[i] = 0.1 + 0.8 * w;
        }
        for (unsigned seed = 0; seed < 5; ++seed) {
            std::mt19937_64 rng(900 + seed);
            std::uniform_real_distribution<double> ds(90.0, 150.0), dd(50.0, 90.0);
            auto sbp_hat = tensor<double>::from({1}, {ds(rng)});
            auto dbp_hat = tensor<double>::from({1}, {dd(rng)});
            sbp_hat.requires_grad(true);
            dbp_hat.requires_grad(true);
            auto forward = [&]() {
                return l_bp(sbp_hat, dbp_hat, 120.0, 70.0, y_a, abp).total;
            };
            std::mt19937_64 pick(950 + seed);
            const double err =
                oracles::fd_dir_max_rel_err({sbp_hat, dbp_hat}, forward, pick, 1e-4, 2);
            INFO("seed " << seed << " rel err " << err);
            REQUIRE(err < 1e-4);
        }
    }
}
