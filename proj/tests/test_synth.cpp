// Synthetic scene generator: pulse template shape, pressure ground-truth
// closure, clip rendering and phase lags, dataset planning, persistence.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "phasebeat/synth.hpp"

using namespace phasebeat;
namespace fs = std::filesystem;

namespace {

physio_signal sampled_template(double hr, double rate, std::size_t n,
                               const pulse_shape& shape = {}) {
    pulse_template tmpl(shape);
    physio_signal s{std::vector<double>(n), rate};
    for (std::size_t i = 0; i < n; ++i) s.samples[i] = tmpl(hr, double(i) / rate);
    return s;
}

fs::path fresh_dir(const char* name) {
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Spectral argmax lands within one bin index of the rate's own bin. The
// comparison runs on indices, not Hz: the template's harmonics skew the
// flat-topped main lobe by a fraction of a bin, so a mid-bin truth can sit
// 1.3 bin widths from an argmax that is still only one index away.
void require_argmax_within_one_bin(double recovered_bpm, double true_bpm) {
    const double bin_hz = 25.0 / 2048.0;
    const auto rec = std::llround(recovered_bpm / 60.0 / bin_hz);
    const auto want = std::llround(true_bpm / 60.0 / bin_hz);
    INFO("recovered " << recovered_bpm << " bpm (bin " << rec << ") true " << true_bpm
                      << " bpm (bin " << want << ")");
    REQUIRE(std::llabs(rec - want) <= 1);
}

}  // namespace

TEST_CASE("pulse template is periodic and min-max normalized") {
    pulse_template tmpl;
    for (double hr : {48.0, 72.0, 171.0}) {
        const double period = 60.0 / hr;
        for (int i = 0; i < 200; ++i) {
            const double t = 0.013 * double(i);
            REQUIRE(tmpl(hr, t) == Catch::Approx(tmpl(hr, t + period)).margin(1e-9));
        }
    }
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i < 200000; ++i) {
        const double v = tmpl.at_phase(double(i) / 200000.0);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    REQUIRE(lo == Catch::Approx(0.0).margin(1e-6));
    REQUIRE(hi == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("sampled template has its spectral peak at the heart rate") {
    for (double hr : {42.0, 66.0, 90.0, 132.0, 174.0})
        require_argmax_within_one_bin(hr_of(preprocess_rppg(sampled_template(hr, 25.0, 150))),
                                      hr);
}

TEST_CASE("pressure signal closes the ground-truth loop") {
    SECTION("zero jitter is exactly periodic") {
        synth_spec s;
        s.hr = 75.0;  // 0.8 s beat = 100 samples at 125 Hz
        s.jitter = 0.0;
        const auto abp = gen_abp(s);
        for (std::size_t i = 0; i + 100 < abp.samples.size(); ++i)
            REQUIRE(abp.samples[i] == Catch::Approx(abp.samples[i + 100]).margin(1e-9));
    }

    SECTION("peak and valley averages recover the set pressures") {
        for (double hr : {48.0, 72.0, 90.0, 171.0})
            for (auto [sbp, dbp] :
                 {std::pair{95.0, 55.0}, std::pair{145.0, 85.0}, std::pair{120.0, 70.0}}) {
                synth_spec s;
                s.hr = hr;
                s.sbp = sbp;
                s.dbp = dbp;
                s.ptt_delay = std::min(0.24, 0.8 * 60.0 / hr);
                s.seed = 17;
                const auto [sg, dg] = gt_bp_from_abp(gen_abp(s));
                INFO("hr " << hr << " sbp " << sbp << " dbp " << dbp);
                REQUIRE(std::fabs(sg - sbp) < 1.0);
                REQUIRE(std::fabs(dg - dbp) < 1.0);
            }
    }

    SECTION("heart rate survives the pseudo-target chain") {
        for (double hr : {48.0, 72.0, 90.0, 130.0, 171.0}) {
            synth_spec s;
            s.hr = hr;
            s.ptt_delay = std::min(0.24, 0.8 * 60.0 / hr);
            s.seed = 29;
            const auto pseudo = pseudo_ppg_from_abp(decimate(gen_abp(s), s.abp_factor()));
            REQUIRE(pseudo.samples.size() == 150);
            require_argmax_within_one_bin(hr_of(pseudo), hr);
        }
    }
}

TEST_CASE("rendered clip carries the pulse with the stated delay") {
    synth_spec s;
    s.height = s.width = 32;
    s.hr = 66.0;
    s.jitter = 0.0;
    s.seed = 3;

    SECTION("noiseless skin trace peaks at the heart rate") {
        s.ptt_delay = 0.24;
        const auto clip = gen_clip(s);
        const auto trace = mean_skin_trace(clip, s);
        require_argmax_within_one_bin(hr_of(preprocess_rppg(trace)), s.hr);
        for (float v : clip.data) {
            REQUIRE(v >= 0.0f);
            REQUIRE(v <= 1.0f);
        }
    }

    SECTION("skin trace leads the pressure-derived target by the delay") {
        for (double ptt : {0.16, 0.24}) {
            s.ptt_delay = ptt;
            const auto clip = gen_clip(s);
            const auto trace = standardize(mean_skin_trace(clip, s));
            const auto pseudo = pseudo_ppg_from_abp(decimate(gen_abp(s), s.abp_factor()));
            const auto lag = xcorr_delay(trace, pseudo, 20);
            REQUIRE(lag == std::llround(ptt * s.rate));
        }
    }

    SECTION("jaw zone lags the rest of the face inside the clip") {
        s.ptt_delay = 0.24;
        const auto clip = gen_clip(s);
        const auto masks = make_masks(s);
        std::vector<std::uint8_t> facial(masks.skin.size());
        for (std::size_t i = 0; i < facial.size(); ++i)
            facial[i] = masks.skin[i] && !masks.acral[i];
        const auto f = standardize(mean_masked_trace(clip, facial));
        const auto a = standardize(mean_masked_trace(clip, masks.acral));
        REQUIRE(xcorr_delay(f, a, 20) == 6);
    }

    SECTION("empty mask leaves a constant background with no pulse") {
        s.face_ry = 0.0;
        const auto clip = gen_clip(s);
        for (float v : clip.data) REQUIRE(v == 0.15f);
        REQUIRE_THROWS_AS(mean_skin_trace(clip, s), numeric_error);
        physio_signal flat{std::vector<double>(150, 0.15), s.rate};
        REQUIRE_THROWS_AS(preprocess_rppg(flat), numeric_error);
    }
}

TEST_CASE("window assembly is deterministic and internally consistent") {
    synth_spec s;
    s.height = s.width = 32;
    s.hr = 81.0;
    s.seed = 41;
    const window_plan plan{s, 7, split_tag::val, 99, 0};
    const auto a = make_window(plan);
    const auto b = make_window(plan);
    REQUIRE(a.clip.data == b.clip.data);
    REQUIRE(a.abp.samples == b.abp.samples);
    REQUIRE(a.pseudo_ppg.samples == b.pseudo_ppg.samples);
    REQUIRE(a.sbp_gt == b.sbp_gt);
    REQUIRE(a.hr_gt == s.hr);
    REQUIRE(a.subject == 7);
    REQUIRE(a.split == split_tag::val);
    REQUIRE(std::fabs(a.sbp_gt - s.sbp) < 1.0);
    REQUIRE(std::fabs(a.dbp_gt - s.dbp) < 1.0);
}

TEST_CASE("pressure coupling bends delay and notch inside valid bounds") {
    synth_spec lo_bp, hi_bp;
    lo_bp.sbp = 95.0;
    lo_bp.dbp = 55.0;
    hi_bp.sbp = 145.0;
    hi_bp.dbp = 85.0;
    apply_bp_coupling(lo_bp);
    apply_bp_coupling(hi_bp);
    REQUIRE(lo_bp.ptt_delay > hi_bp.ptt_delay);
    REQUIRE(lo_bp.shape.dic_height < hi_bp.shape.dic_height);
    REQUIRE(lo_bp.shape.dic_height >= 0.30);
    REQUIRE(hi_bp.shape.dic_height <= 0.60);
    lo_bp.validate();
    hi_bp.validate();

    // A slow beat delay would overrun a fast beat; the clamp keeps it legal.
    synth_spec fast;
    fast.hr = 180.0;
    fast.sbp = 90.0;
    fast.dbp = 60.0;
    apply_bp_coupling(fast);
    fast.validate();
    REQUIRE(fast.ptt_delay < 60.0 / fast.hr);
}

TEST_CASE("dataset planning draws labels uniformly and splits by subject") {
    spec_distribution dist;
    dist.base.height = dist.base.width = 32;
    const auto plans = plan_dataset(400, dist, 2026);
    REQUIRE(plans.size() == 400);

    SECTION("plans are reproducible") {
        const auto again = plan_dataset(400, dist, 2026);
        for (std::size_t i = 0; i < plans.size(); ++i) {
            REQUIRE(plans[i].spec.hr == again[i].spec.hr);
            REQUIRE(plans[i].spec.sbp == again[i].spec.sbp);
            REQUIRE(plans[i].spec.seed == again[i].spec.seed);
            REQUIRE(plans[i].split == again[i].split);
        }
        const auto other = plan_dataset(400, dist, 2027);
        std::size_t differing = 0;
        for (std::size_t i = 0; i < plans.size(); ++i)
            differing += plans[i].spec.hr != other[i].spec.hr ? 1 : 0;
        REQUIRE(differing > 390);
    }

    SECTION("each subject lands in exactly one split") {
        std::map<std::uint64_t, std::set<split_tag>> seen;
        for (const auto& p : plans) seen[p.subject].insert(p.split);
        REQUIRE(seen.size() == 100);
        for (const auto& [subject, splits] : seen) REQUIRE(splits.size() == 1);
        std::map<split_tag, std::size_t> subjects_per_split;
        for (const auto& [subject, splits] : seen) subjects_per_split[*splits.begin()]++;
        REQUIRE(subjects_per_split[split_tag::train] == 70);
        REQUIRE(subjects_per_split[split_tag::val] == 15);
        REQUIRE(subjects_per_split[split_tag::test] == 15);
    }

    SECTION("subjects share pressures, windows vary heart rate") {
        REQUIRE(plans[0].spec.sbp == plans[1].spec.sbp);
        REQUIRE(plans[0].spec.dbp == plans[3].spec.dbp);
        REQUIRE(plans[0].spec.hr != plans[1].spec.hr);
        REQUIRE(plans[0].spec.sbp != plans[4].spec.sbp);
    }

    SECTION("heart-rate histogram is uniform at the one percent level") {
        const int bins = 8;
        std::vector<double> count(bins, 0.0);
        for (const auto& p : plans) {
            REQUIRE(p.spec.hr >= dist.hr_lo);
            REQUIRE(p.spec.hr < dist.hr_hi);
            const int b = std::min(
                bins - 1, int((p.spec.hr - dist.hr_lo) / (dist.hr_hi - dist.hr_lo) * bins));
            count[static_cast<std::size_t>(b)] += 1.0;
        }
        const double expected = 400.0 / bins;
        double chi2 = 0;
        for (double c : count) chi2 += (c - expected) * (c - expected) / expected;
        INFO("chi2 " << chi2);
        REQUIRE(chi2 < 18.475);  // 0.99 quantile, 7 degrees of freedom
    }

    SECTION("coupled plans satisfy the spec invariants wholesale") {
        for (const auto& p : plans) {
            REQUIRE(p.spec.ptt_delay < 60.0 / p.spec.hr);
            REQUIRE(p.spec.shape.dic_height >= 0.30);
            REQUIRE(p.spec.shape.dic_height <= 0.60);
        }
    }
}

TEST_CASE("datasets regenerate bit-identically") {
    spec_distribution dist;
    dist.base.height = dist.base.width = 16;
    dist.windows_per_subject = 2;
    const auto a = make_dataset(8, dist, 5);
    const auto b = make_dataset(8, dist, 5);
    REQUIRE(a.train.size() == b.train.size());
    REQUIRE(a.train.size() + a.val.size() + a.test.size() == 8);
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        REQUIRE(a.train[i].clip.data == b.train[i].clip.data);
        REQUIRE(a.train[i].abp.samples == b.train[i].abp.samples);
        REQUIRE(a.train[i].sbp_gt == b.train[i].sbp_gt);
    }
}

TEST_CASE("windows persist through the directory layout") {
    const auto root = fresh_dir("phasebeat_test_synth");
    spec_distribution dist;
    dist.base.height = dist.base.width = 16;
    dist.windows_per_subject = 1;
    save_dataset(6, dist, 77, root);

    SECTION("reload matches in-memory generation exactly") {
        const auto disk = load_dataset(root);
        const auto mem = make_dataset(6, dist, 77);
        REQUIRE(disk.train.size() == mem.train.size());
        REQUIRE(disk.val.size() == mem.val.size());
        REQUIRE(disk.test.size() == mem.test.size());
        for (std::size_t i = 0; i < mem.train.size(); ++i) {
            REQUIRE(disk.train[i].clip.data == mem.train[i].clip.data);
            REQUIRE(disk.train[i].abp.samples == mem.train[i].abp.samples);
            REQUIRE(disk.train[i].pseudo_ppg.samples == mem.train[i].pseudo_ppg.samples);
            REQUIRE(disk.train[i].hr_gt == mem.train[i].hr_gt);
            REQUIRE(disk.train[i].sbp_gt == mem.train[i].sbp_gt);
            REQUIRE(disk.train[i].subject == mem.train[i].subject);
        }
    }

    SECTION("manifest lists every window under its split") {
        std::ifstream f(root / "manifest.json");
        nlohmann::json manifest;
        f >> manifest;
        REQUIRE(manifest.at("windows").get<std::size_t>() == 6);
        const auto& splits = manifest.at("splits");
        REQUIRE(splits.at("train").size() + splits.at("val").size() + splits.at("test").size() ==
                6);
        for (const auto& name : splits.at("train"))
            REQUIRE(fs::exists(root / name.get<std::string>() / "clip.bin"));
    }

    SECTION("a missing pseudo target is derived from the pressure channel") {
        const auto plans = plan_dataset(6, dist, 77);
        const auto dir = root / window_dir_name(plans[0].index);
        const auto direct = load_window(dir);
        fs::remove(dir / "pseudo_ppg.csv");
        const auto derived = load_window(dir);
        REQUIRE(derived.pseudo_ppg.samples == direct.pseudo_ppg.samples);
    }

    SECTION("corrupt headers and truncated pixels are rejected") {
        const auto dir = root / window_dir_name(1);
        {
            std::ifstream f(dir / "clip.json");
            nlohmann::json j;
            f >> j;
            j["dtype"] = "f64le";
            std::ofstream o(dir / "clip.json");
            o << j.dump(2);
        }
        REQUIRE_THROWS_AS(load_clip(dir), value_error);
        {
            std::ifstream f(dir / "clip.json");
            nlohmann::json j;
            f >> j;
            j["dtype"] = "f32le";
            std::ofstream o(dir / "clip.json");
            o << j.dump(2);
        }
        const auto size = fs::file_size(dir / "clip.bin");
        fs::resize_file(dir / "clip.bin", size - 4);
        REQUIRE_THROWS_AS(load_clip(dir), value_error);
    }
}
