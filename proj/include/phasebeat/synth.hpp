// Deterministic generator of synthetic facial-pulse clips with synchronized
// arterial pressure and fully known ground truth. A clip shows an elliptical
// skin region whose color pulses with a physiologically shaped waveform; the
// jaw strip of the ellipse and the pressure signal lag the rest of the face
// by a known transit delay, so every phase claim downstream is checkable.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phasebeat/common.hpp"
#include "phasebeat/signal.hpp"
#include "phasebeat/tensor.hpp"

namespace phasebeat {

// ---- pulse template --------------------------------------------------------------------

// One cardiac period as two Gaussian bumps on the unit phase interval: the
// systolic upstroke and a smaller dicrotic bump. Heights are relative; the
// template is min-max normalized to [0, 1] over a period after summation.
struct pulse_shape {
    double sys_center = 0.30;
    double sys_width = 0.07;
    double dic_center = 0.65;
    double dic_width = 0.10;
    double dic_height = 0.45;

    void validate() const {
        require(sys_width > 0.0 && dic_width > 0.0, "pulse_shape: widths must be positive");
        require(0.0 < sys_center && sys_center < dic_center && dic_center < 1.0,
                "pulse_shape: centers must be ordered inside the unit interval");
        require(dic_height >= 0.0 && dic_height < 1.0, "pulse_shape: bad dicrotic height");
    }
};

// Periodic waveform evaluator. Normalization bounds come from a dense phase
// grid; with bump widths >= 0.05 the grid error is far below 1e-6.
class pulse_template {
  public:
    explicit pulse_template(pulse_shape shape = {}) : shape_(shape) {
        shape_.validate();
        const int grid = 1 << 15;
        lo_ = 1e300;
        hi_ = -1e300;
        for (int i = 0; i < grid; ++i) {
            const double v = raw(double(i) / grid);
            lo_ = std::min(lo_, v);
            hi_ = std::max(hi_, v);
        }
    }

    // Value at unit phase u; periodic by construction through wrapped bumps.
    double at_phase(double u) const {
        u -= std::floor(u);
        return (raw(u) - lo_) / (hi_ - lo_);
    }

    double operator()(double hr_bpm, double t_seconds) const {
        return at_phase(t_seconds * hr_bpm / 60.0);
    }

    const pulse_shape& shape() const { return shape_; }

  private:
    double raw(double u) const {
        auto bump = [](double x, double c, double w) {
            const double d = x - c;
            return std::exp(-d * d / (2.0 * w * w));
        };
        double v = 0;
        for (int k = -1; k <= 1; ++k) {
            const double x = u + double(k);
            v += bump(x, shape_.sys_center, shape_.sys_width);
            v += shape_.dic_height * bump(x, shape_.dic_center, shape_.dic_width);
        }
        return v;
    }

    pulse_shape shape_;
    double lo_, hi_;
};

// Convenience single-value form; construct a pulse_template for loops.
inline double pulse_waveform(double hr_bpm, double t_seconds, const pulse_shape& shape = {}) {
    return pulse_template(shape)(hr_bpm, t_seconds);
}

// ---- beat clock ------------------------------------------------------------------------

// Piecewise-linear phase as a function of time with per-beat period jitter.
// Each beat's period is drawn from its own derived stream, so the phase at
// any time, including delayed evaluation points, sees the same beat sequence.
class beat_clock {
  public:
    beat_clock(double hr_bpm, double jitter, std::uint64_t seed, double horizon_seconds) {
        require(hr_bpm > 0.0, "beat_clock: heart rate must be positive");
        require(jitter >= 0.0 && jitter <= 0.02, "beat_clock: jitter outside [0, 0.02]");
        const double base = 60.0 / hr_bpm;
        double t = 0;
        std::size_t beat = 0;
        while (t <= horizon_seconds + base) {
            starts_.push_back(t);
            double e = 0;
            if (jitter > 0.0) {
                std::mt19937_64 rng(derive_seed(seed, 0xbea70000ULL + beat));
                e = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
            }
            periods_.push_back(base * (1.0 + jitter * e));
            t += periods_.back();
            ++beat;
        }
        starts_.push_back(t);
    }

    double phase(double t) const {
        require(t >= 0.0 && t < starts_.back(), "beat_clock: time outside horizon");
        const auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
        const auto b = static_cast<std::size_t>(it - starts_.begin()) - 1;
        return (t - starts_[b]) / periods_[b];
    }

  private:
    std::vector<double> starts_, periods_;
};

// ---- scene specification ---------------------------------------------------------------

struct synth_spec {
    double hr = 72.0;        // beats per minute
    double sbp = 120.0;      // mmHg
    double dbp = 70.0;       // mmHg
    double ptt_delay = 0.24; // seconds; facial pulse leads pressure and the jaw zone by this
    double jitter = 0.01;    // per-beat period jitter fraction
    double noise_sigma = 0.0;   // pixel-unit Gaussian noise
    double illum_drift = 0.0;   // amplitude of a 0.25 Hz illumination wave on skin
    std::uint64_t seed = 0;
    std::int64_t frames = 150;
    std::int64_t height = 128;
    std::int64_t width = 128;
    double rate = 25.0;      // clip and pseudo-PPG sample rate, Hz
    double abp_rate = 125.0; // pressure sample rate, Hz; must be an integer multiple of rate
    double pulse_amplitude = 0.02;  // pixel-unit pulse strength before channel weighting
    double face_ry = 0.40;   // ellipse semi-axes as fractions of height and width;
    double face_rx = 0.30;   // zero disables the skin region entirely
    double jaw_frac = 0.30;  // skin rows below center + jaw_frac * height form the acral zone
    pulse_shape shape;

    void validate() const {
        require(hr >= 30.0 && hr <= 180.0, "synth_spec: hr outside [30, 180]");
        require(sbp > dbp && dbp > 20.0 && sbp < 250.0, "synth_spec: implausible pressures");
        require(ptt_delay >= 0.0 && ptt_delay < 60.0 / hr,
                "synth_spec: delay must be shorter than one beat");
        require(jitter >= 0.0 && jitter <= 0.02, "synth_spec: jitter outside [0, 0.02]");
        require(noise_sigma >= 0.0 && illum_drift >= 0.0 && pulse_amplitude >= 0.0,
                "synth_spec: negative amplitude");
        require(frames > 0 && height > 0 && width > 0, "synth_spec: bad dimensions");
        require(rate > 0.0 && abp_rate >= rate, "synth_spec: bad rates");
        const double ratio = abp_rate / rate;
        require(std::fabs(ratio - std::round(ratio)) < 1e-9,
                "synth_spec: abp_rate must be an integer multiple of rate");
        require(face_ry >= 0.0 && face_ry <= 0.5 && face_rx >= 0.0 && face_rx <= 0.5,
                "synth_spec: ellipse axes outside [0, 0.5]");
        require(jaw_frac >= 0.0 && jaw_frac <= 0.5, "synth_spec: bad jaw fraction");
        shape.validate();
    }

    std::int64_t abp_factor() const { return std::llround(abp_rate / rate); }
};

// Pulse transit delay shortens as systolic pressure rises and the dicrotic
// bump grows with diastolic pressure, giving pressure regressors a physical
// signal. The delay is clamped inside the one-beat invariant.
inline void apply_bp_coupling(synth_spec& s) {
    s.ptt_delay = 0.32 - 0.003 * (s.sbp - 100.0);
    s.ptt_delay = std::clamp(s.ptt_delay, 0.0, 0.9 * 60.0 / s.hr);
    s.shape.dic_height = 0.30 + 0.30 * (s.dbp - 45.0) / 50.0;
}

// ---- clip container --------------------------------------------------------------------

// Frame-major interleaved pixels: data[((t * height + y) * width + x) * 3 + c].
struct video_clip {
    std::int64_t frames = 0, height = 0, width = 0, channels = 3;
    double rate = 25.0;
    std::vector<float> data;

    void validate() const {
        require(frames > 0 && height > 0 && width > 0 && channels == 3, "video_clip: bad dims");
        require(rate > 0.0, "video_clip: bad rate");
        require(data.size() == static_cast<std::size_t>(frames * height * width * channels),
                "video_clip: data size does not match dimensions");
    }

    float at(std::int64_t t, std::int64_t y, std::int64_t x, std::int64_t c) const {
        return data[static_cast<std::size_t>(((t * height + y) * width + x) * channels + c)];
    }
};

// Network input layout [channels, frames, height, width].
template <typename S>
tensor<S> clip_tensor(const video_clip& clip) {
    clip.validate();
    std::vector<S> v(clip.data.size());
    const auto t = clip.frames, h = clip.height, w = clip.width, c = clip.channels;
    for (std::int64_t ci = 0; ci < c; ++ci)
        for (std::int64_t ti = 0; ti < t; ++ti)
            for (std::int64_t yi = 0; yi < h; ++yi)
                for (std::int64_t xi = 0; xi < w; ++xi)
                    v[static_cast<std::size_t>(((ci * t + ti) * h + yi) * w + xi)] =
                        S(clip.at(ti, yi, xi, ci));
    return tensor<S>::from({c, t, h, w}, std::move(v));
}

// Skin-region geometry shared by the renderer and trace extractors.
struct skin_masks {
    std::vector<std::uint8_t> skin;   // inside the face ellipse
    std::vector<std::uint8_t> acral;  // jaw strip of the ellipse, pulses with the delay
};

inline skin_masks make_masks(const synth_spec& s) {
    skin_masks m;
    m.skin.assign(static_cast<std::size_t>(s.height * s.width), 0);
    m.acral = m.skin;
    if (s.face_ry <= 0.0 || s.face_rx <= 0.0) return m;
    const double cy = 0.5 * double(s.height - 1), cx = 0.5 * double(s.width - 1);
    const double ry = s.face_ry * double(s.height), rx = s.face_rx * double(s.width);
    const double jaw_y = cy + s.jaw_frac * double(s.height);
    for (std::int64_t y = 0; y < s.height; ++y)
        for (std::int64_t x = 0; x < s.width; ++x) {
            const double dy = (double(y) - cy) / ry, dx = (double(x) - cx) / rx;
            if (dy * dy + dx * dx > 1.0) continue;
            const auto i = static_cast<std::size_t>(y * s.width + x);
            m.skin[i] = 1;
            if (double(y) > jaw_y) m.acral[i] = 1;
        }
    return m;
}

// Mean green-channel value over the masked pixels, per frame.
inline physio_signal mean_masked_trace(const video_clip& clip,
                                       const std::vector<std::uint8_t>& mask) {
    clip.validate();
    require(mask.size() == static_cast<std::size_t>(clip.height * clip.width),
            "mean_masked_trace: mask size mismatch");
    std::size_t count = 0;
    for (auto v : mask) count += v ? 1 : 0;
    if (count == 0) throw numeric_error("mean_masked_trace: empty mask");
    physio_signal out{std::vector<double>(static_cast<std::size_t>(clip.frames)), clip.rate};
    for (std::int64_t t = 0; t < clip.frames; ++t) {
        double acc = 0;
        for (std::int64_t y = 0; y < clip.height; ++y)
            for (std::int64_t x = 0; x < clip.width; ++x)
                if (mask[static_cast<std::size_t>(y * clip.width + x)])
                    acc += clip.at(t, y, x, 1);
        out.samples[static_cast<std::size_t>(t)] = acc / double(count);
    }
    return out;
}

inline physio_signal mean_skin_trace(const video_clip& clip, const synth_spec& spec) {
    return mean_masked_trace(clip, make_masks(spec).skin);
}

// ---- scene rendering -------------------------------------------------------------------

namespace detail_synth {

// Clip time starts late enough that delayed evaluation points stay inside
// the clock's domain for any valid delay (strictly under one beat <= 2 s).
inline constexpr double clip_t0 = 2.0;
inline constexpr double drift_freq_hz = 0.25;

inline beat_clock make_clock(const synth_spec& s) {
    const double horizon = clip_t0 + double(s.frames) / s.rate + 120.0 / s.hr;
    return beat_clock(s.hr, s.jitter, derive_seed(s.seed, 0x6ea7), horizon);
}

struct appearance {
    double base[3];
};

inline appearance make_appearance(std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, 0xface));
    std::uniform_real_distribution<double> d(-0.08, 0.08);
    return {{0.55 + d(rng), 0.42 + d(rng), 0.38 + d(rng)}};
}

}  // namespace detail_synth

// Arterial pressure at the peripheral site, which the facial pulse leads by
// the transit delay: dbp + (sbp - dbp) * w(phase(t - ptt_delay)).
inline physio_signal gen_abp(const synth_spec& spec) {
    spec.validate();
    const auto clock = detail_synth::make_clock(spec);
    const pulse_template tmpl(spec.shape);
    const auto n = static_cast<std::size_t>(spec.frames * spec.abp_factor());
    physio_signal out{std::vector<double>(n), spec.abp_rate};
    for (std::size_t i = 0; i < n; ++i) {
        const double t = detail_synth::clip_t0 + double(i) / spec.abp_rate - spec.ptt_delay;
        out.samples[i] = spec.dbp + (spec.sbp - spec.dbp) * tmpl.at_phase(clock.phase(t));
    }
    return out;
}

// Renders the clip: skin pixels carry base tone plus the channel-weighted
// pulse (green strongest), the jaw zone pulses with the delayed phase, an
// optional sub-band illumination wave rides on skin, background is constant,
// and Gaussian noise covers everything. Values clamp to [0, 1].
inline video_clip gen_clip(const synth_spec& spec, std::uint64_t appearance_seed) {
    spec.validate();
    const auto clock = detail_synth::make_clock(spec);
    const pulse_template tmpl(spec.shape);
    const auto masks = make_masks(spec);
    const auto look = detail_synth::make_appearance(appearance_seed);
    const double chan_w[3] = {0.6, 1.0, 0.4};
    const double background = 0.15;

    std::vector<double> w_face(static_cast<std::size_t>(spec.frames));
    std::vector<double> w_jaw(static_cast<std::size_t>(spec.frames));
    std::vector<double> drift(static_cast<std::size_t>(spec.frames), 0.0);
    for (std::int64_t t = 0; t < spec.frames; ++t) {
        const double ts = detail_synth::clip_t0 + double(t) / spec.rate;
        w_face[static_cast<std::size_t>(t)] = tmpl.at_phase(clock.phase(ts));
        w_jaw[static_cast<std::size_t>(t)] = tmpl.at_phase(clock.phase(ts - spec.ptt_delay));
        if (spec.illum_drift > 0.0)
            drift[static_cast<std::size_t>(t)] =
                spec.illum_drift *
                std::sin(2.0 * 3.14159265358979323846 * detail_synth::drift_freq_hz * ts);
    }

    video_clip clip{spec.frames, spec.height, spec.width, 3, spec.rate, {}};
    clip.data.resize(static_cast<std::size_t>(spec.frames * spec.height * spec.width * 3));
    std::mt19937_64 noise_rng(derive_seed(spec.seed, 0x7015e));
    std::normal_distribution<double> noise(0.0, 1.0);
    std::size_t idx = 0;
    for (std::int64_t t = 0; t < spec.frames; ++t)
        for (std::int64_t y = 0; y < spec.height; ++y)
            for (std::int64_t x = 0; x < spec.width; ++x) {
                const auto p = static_cast<std::size_t>(y * spec.width + x);
                const bool skin = masks.skin[p] != 0;
                const double pulse =
                    masks.acral[p] ? w_jaw[static_cast<std::size_t>(t)]
                                   : w_face[static_cast<std::size_t>(t)];
                for (int c = 0; c < 3; ++c) {
                    double v = skin ? look.base[c] + spec.pulse_amplitude * chan_w[c] * pulse +
                                          drift[static_cast<std::size_t>(t)]
                                    : background;
                    if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise(noise_rng);
                    clip.data[idx++] = float(std::clamp(v, 0.0, 1.0));
                }
            }
    return clip;
}

inline video_clip gen_clip(const synth_spec& spec) {
    return gen_clip(spec, derive_seed(spec.seed, 0x5ee));
}

// ---- window assembly -------------------------------------------------------------------

enum class split_tag { train, val, test };

inline const char* to_string(split_tag s) {
    switch (s) {
        case split_tag::train: return "train";
        case split_tag::val: return "val";
        default: return "test";
    }
}

inline split_tag split_from_string(const std::string& s) {
    if (s == "train") return split_tag::train;
    if (s == "val") return split_tag::val;
    if (s == "test") return split_tag::test;
    throw value_error("unknown split name: " + s);
}

struct window_sample {
    synth_spec spec;
    video_clip clip;
    physio_signal abp;         // peripheral pressure, mmHg, at spec.abp_rate
    physio_signal pseudo_ppg;  // standardized, detrended, band-passed pressure at clip rate
    double hr_gt = 0, sbp_gt = 0, dbp_gt = 0;
    std::uint64_t subject = 0;
    split_tag split = split_tag::train;

    void validate() const {
        spec.validate();
        clip.validate();
        require(clip.frames == spec.frames, "window_sample: clip length mismatch");
        require(pseudo_ppg.samples.size() == static_cast<std::size_t>(spec.frames),
                "window_sample: pseudo length mismatch");
        require(abp.samples.size() ==
                    static_cast<std::size_t>(spec.frames * spec.abp_factor()),
                "window_sample: pressure span mismatch");
        require(hr_gt >= 30.0 && hr_gt <= 180.0 && sbp_gt > dbp_gt,
                "window_sample: implausible ground truth");
    }
};

struct window_plan {
    synth_spec spec;
    std::uint64_t subject = 0;
    split_tag split = split_tag::train;
    std::uint64_t appearance_seed = 0;
    std::size_t index = 0;
};

inline window_sample make_window(const window_plan& plan) {
    plan.spec.validate();
    window_sample w;
    w.spec = plan.spec;
    w.subject = plan.subject;
    w.split = plan.split;
    w.abp = gen_abp(plan.spec);
    w.clip = gen_clip(plan.spec, plan.appearance_seed);
    w.pseudo_ppg = pseudo_ppg_from_abp(decimate(w.abp, plan.spec.abp_factor()));
    w.hr_gt = plan.spec.hr;
    const auto [sbp, dbp] = gt_bp_from_abp(w.abp);
    w.sbp_gt = sbp;
    w.dbp_gt = dbp;
    w.validate();
    return w;
}

// ---- dataset planning ------------------------------------------------------------------

struct spec_distribution {
    synth_spec base;  // geometry, noise, jitter, amplitude prototype
    double hr_lo = 48.0, hr_hi = 90.0;
    double sbp_lo = 95.0, sbp_hi = 145.0;
    double dbp_lo = 55.0, dbp_hi = 85.0;
    bool couple_bp = true;  // when false, base.ptt_delay and base.shape apply verbatim
    std::int64_t windows_per_subject = 4;

    void validate() const {
        base.validate();
        require(30.0 <= hr_lo && hr_lo < hr_hi && hr_hi <= 180.0, "distribution: bad hr range");
        require(sbp_lo < sbp_hi && dbp_lo < dbp_hi && sbp_lo > dbp_hi,
                "distribution: pressure ranges must be ordered and disjoint");
        require(windows_per_subject >= 1, "distribution: windows_per_subject must be positive");
    }
};

// Heart rate varies per window; pressures and appearance belong to the
// subject, so split disjointness by subject severs every appearance and
// pressure correlation across splits.
inline std::vector<window_plan> plan_dataset(std::size_t n_windows,
                                             const spec_distribution& dist,
                                             std::uint64_t seed) {
    dist.validate();
    require(n_windows >= 1, "plan_dataset: need at least one window");
    const auto wps = static_cast<std::size_t>(dist.windows_per_subject);
    const std::size_t n_subjects = (n_windows + wps - 1) / wps;
    require(n_subjects >= 3, "plan_dataset: need at least 3 subjects for disjoint splits");

    std::vector<std::size_t> order(n_subjects);
    for (std::size_t i = 0; i < n_subjects; ++i) order[i] = i;
    std::mt19937_64 shuffle_rng(derive_seed(seed, 0x541f7));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const auto n_val = std::max<std::size_t>(1, std::llround(0.15 * double(n_subjects)));
    const auto n_test = std::max<std::size_t>(1, std::llround(0.15 * double(n_subjects)));
    require(n_subjects > n_val + n_test, "plan_dataset: too few subjects for a train split");
    std::vector<split_tag> subject_split(n_subjects, split_tag::train);
    for (std::size_t i = 0; i < n_val; ++i) subject_split[order[i]] = split_tag::val;
    for (std::size_t i = 0; i < n_test; ++i) subject_split[order[n_val + i]] = split_tag::test;

    std::vector<window_plan> plans(n_windows);
    for (std::size_t i = 0; i < n_windows; ++i) {
        const std::size_t subject = i / wps;
        synth_spec s = dist.base;
        std::mt19937_64 hr_rng(derive_seed(seed, 0x10000 + i));
        s.hr = std::uniform_real_distribution<double>(dist.hr_lo, dist.hr_hi)(hr_rng);
        std::mt19937_64 bp_rng(derive_seed(seed, 0x40000 + subject));
        s.sbp = std::uniform_real_distribution<double>(dist.sbp_lo, dist.sbp_hi)(bp_rng);
        s.dbp = std::uniform_real_distribution<double>(dist.dbp_lo, dist.dbp_hi)(bp_rng);
        if (dist.couple_bp) apply_bp_coupling(s);
        s.seed = derive_seed(seed, 0x30000 + i);
        s.validate();
        plans[i] = {s, subject, subject_split[subject], derive_seed(seed, 0x20000 + subject), i};
    }
    return plans;
}

struct synth_dataset {
    std::vector<window_sample> train, val, test;
};

inline synth_dataset make_dataset(std::size_t n_windows, const spec_distribution& dist,
                                  std::uint64_t seed) {
    synth_dataset out;
    for (const auto& plan : plan_dataset(n_windows, dist, seed)) {
        auto w = make_window(plan);
        switch (plan.split) {
            case split_tag::train: out.train.push_back(std::move(w)); break;
            case split_tag::val: out.val.push_back(std::move(w)); break;
            case split_tag::test: out.test.push_back(std::move(w)); break;
        }
    }
    return out;
}

// ---- persistence -----------------------------------------------------------------------
// One directory per window: raw little-endian float32 pixels plus a JSON
// header, signals as single-column CSV, labels as JSON. Pre-cropped real ROI
// sequences in the same layout load identically; the pseudo target is
// derived from the pressure channel when its CSV is absent.

namespace detail_synth {

static_assert(std::endian::native == std::endian::little,
              "clip serialization assumes a little-endian host");

inline nlohmann::json shape_json(const pulse_shape& s) {
    return {{"sys_center", s.sys_center},
            {"sys_width", s.sys_width},
            {"dic_center", s.dic_center},
            {"dic_width", s.dic_width},
            {"dic_height", s.dic_height}};
}

inline pulse_shape shape_from_json(const nlohmann::json& j) {
    pulse_shape s;
    s.sys_center = j.value("sys_center", s.sys_center);
    s.sys_width = j.value("sys_width", s.sys_width);
    s.dic_center = j.value("dic_center", s.dic_center);
    s.dic_width = j.value("dic_width", s.dic_width);
    s.dic_height = j.value("dic_height", s.dic_height);
    return s;
}

inline nlohmann::json spec_json(const synth_spec& s) {
    return {{"hr", s.hr},
            {"sbp", s.sbp},
            {"dbp", s.dbp},
            {"ptt_delay", s.ptt_delay},
            {"jitter", s.jitter},
            {"noise_sigma", s.noise_sigma},
            {"illum_drift", s.illum_drift},
            {"seed", s.seed},
            {"frames", s.frames},
            {"height", s.height},
            {"width", s.width},
            {"rate", s.rate},
            {"abp_rate", s.abp_rate},
            {"pulse_amplitude", s.pulse_amplitude},
            {"face_ry", s.face_ry},
            {"face_rx", s.face_rx},
            {"jaw_frac", s.jaw_frac},
            {"shape", shape_json(s.shape)}};
}

inline synth_spec spec_from_json(const nlohmann::json& j) {
    synth_spec s;
    s.hr = j.value("hr", s.hr);
    s.sbp = j.value("sbp", s.sbp);
    s.dbp = j.value("dbp", s.dbp);
    s.ptt_delay = j.value("ptt_delay", s.ptt_delay);
    s.jitter = j.value("jitter", s.jitter);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.illum_drift = j.value("illum_drift", s.illum_drift);
    s.seed = j.value("seed", s.seed);
    s.frames = j.value("frames", s.frames);
    s.height = j.value("height", s.height);
    s.width = j.value("width", s.width);
    s.rate = j.value("rate", s.rate);
    s.abp_rate = j.value("abp_rate", s.abp_rate);
    s.pulse_amplitude = j.value("pulse_amplitude", s.pulse_amplitude);
    s.face_ry = j.value("face_ry", s.face_ry);
    s.face_rx = j.value("face_rx", s.face_rx);
    s.jaw_frac = j.value("jaw_frac", s.jaw_frac);
    if (j.contains("shape")) s.shape = shape_from_json(j.at("shape"));
    return s;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    require(f.good(), "cannot open " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw value_error("malformed JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

inline void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream f(path);
    require(f.good(), "cannot open " + path.string());
    f << j.dump(2) << "\n";
}

}  // namespace detail_synth

inline void save_clip(const video_clip& clip, const std::filesystem::path& dir) {
    clip.validate();
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir / "clip.bin", std::ios::binary);
        require(f.good(), "cannot open " + (dir / "clip.bin").string());
        f.write(reinterpret_cast<const char*>(clip.data.data()),
                static_cast<std::streamsize>(clip.data.size() * sizeof(float)));
        require(f.good(), "short write to " + (dir / "clip.bin").string());
    }
    detail_synth::write_json_file({{"frames", clip.frames},
                                   {"height", clip.height},
                                   {"width", clip.width},
                                   {"channels", clip.channels},
                                   {"rate", clip.rate},
                                   {"dtype", "f32le"},
                                   {"layout", "thwc"}},
                                  dir / "clip.json");
}

inline video_clip load_clip(const std::filesystem::path& dir) {
    const auto j = detail_synth::read_json_file(dir / "clip.json");
    video_clip clip;
    try {
        clip.frames = j.at("frames").get<std::int64_t>();
        clip.height = j.at("height").get<std::int64_t>();
        clip.width = j.at("width").get<std::int64_t>();
        clip.channels = j.at("channels").get<std::int64_t>();
        clip.rate = j.at("rate").get<double>();
        require(j.at("dtype").get<std::string>() == "f32le",
                "clip header: unsupported dtype in " + dir.string());
        require(j.at("layout").get<std::string>() == "thwc",
                "clip header: unsupported layout in " + dir.string());
    } catch (const nlohmann::json::exception& e) {
        throw value_error("clip header " + (dir / "clip.json").string() + ": " + e.what());
    }
    require(clip.frames > 0 && clip.height > 0 && clip.width > 0 && clip.channels == 3,
            "clip header: bad dimensions in " + dir.string());
    const auto count =
        static_cast<std::size_t>(clip.frames * clip.height * clip.width * clip.channels);
    std::ifstream f(dir / "clip.bin", std::ios::binary);
    require(f.good(), "cannot open " + (dir / "clip.bin").string());
    clip.data.resize(count);
    f.read(reinterpret_cast<char*>(clip.data.data()),
           static_cast<std::streamsize>(count * sizeof(float)));
    require(f.gcount() == static_cast<std::streamsize>(count * sizeof(float)),
            "clip data truncated in " + dir.string());
    f.peek();
    require(f.eof(), "clip data has trailing bytes in " + dir.string());
    clip.validate();
    return clip;
}

inline void save_window(const window_sample& w, const std::filesystem::path& dir) {
    w.validate();
    save_clip(w.clip, dir);
    write_csv(w.abp.samples, (dir / "abp.csv").string());
    write_csv(w.pseudo_ppg.samples, (dir / "pseudo_ppg.csv").string());
    nlohmann::json labels = {{"hr", w.hr_gt},
                             {"sbp", w.sbp_gt},
                             {"dbp", w.dbp_gt},
                             {"subject", w.subject},
                             {"split", to_string(w.split)},
                             {"abp_rate", w.abp.rate},
                             {"spec", detail_synth::spec_json(w.spec)}};
    detail_synth::write_json_file(labels, dir / "labels.json");
}

inline window_sample load_window(const std::filesystem::path& dir) {
    window_sample w;
    w.clip = load_clip(dir);
    const auto labels = detail_synth::read_json_file(dir / "labels.json");
    try {
        w.hr_gt = labels.at("hr").get<double>();
        w.sbp_gt = labels.at("sbp").get<double>();
        w.dbp_gt = labels.at("dbp").get<double>();
        w.subject = labels.value("subject", std::uint64_t{0});
        w.split = split_from_string(labels.value("split", std::string("train")));
        w.spec = detail_synth::spec_from_json(labels.value("spec", nlohmann::json::object()));
        w.abp = {read_csv((dir / "abp.csv").string()),
                 labels.value("abp_rate", w.spec.abp_rate)};
    } catch (const nlohmann::json::exception& e) {
        throw value_error("labels " + (dir / "labels.json").string() + ": " + e.what());
    }
    // Keep the spec consistent with whatever geometry the clip really has,
    // so real ROI sequences need no hand-written spec block.
    w.spec.frames = w.clip.frames;
    w.spec.height = w.clip.height;
    w.spec.width = w.clip.width;
    w.spec.rate = w.clip.rate;
    w.spec.abp_rate = w.abp.rate;
    w.spec.hr = w.hr_gt;
    w.spec.sbp = w.sbp_gt;
    w.spec.dbp = w.dbp_gt;
    if (std::filesystem::exists(dir / "pseudo_ppg.csv"))
        w.pseudo_ppg = {read_csv((dir / "pseudo_ppg.csv").string()), w.clip.rate};
    else
        w.pseudo_ppg = pseudo_ppg_from_abp(decimate(w.abp, w.spec.abp_factor()));
    w.validate();
    return w;
}

inline std::string window_dir_name(std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "w%05zu", index);
    return buf;
}

inline void write_manifest(const std::vector<window_plan>& plans, std::uint64_t seed,
                           const std::filesystem::path& root) {
    nlohmann::json splits = {{"train", nlohmann::json::array()},
                             {"val", nlohmann::json::array()},
                             {"test", nlohmann::json::array()}};
    for (const auto& p : plans) splits[to_string(p.split)].push_back(window_dir_name(p.index));
    detail_synth::write_json_file({{"version", version_string},
                                   {"seed", seed},
                                   {"windows", plans.size()},
                                   {"splits", splits}},
                                  root / "manifest.json");
}

// Streaming writer: one window in memory at a time.
inline void save_dataset(std::size_t n_windows, const spec_distribution& dist,
                         std::uint64_t seed, const std::filesystem::path& root) {
    const auto plans = plan_dataset(n_windows, dist, seed);
    std::filesystem::create_directories(root);
    for (const auto& plan : plans)
        save_window(make_window(plan), root / window_dir_name(plan.index));
    write_manifest(plans, seed, root);
}

inline synth_dataset load_dataset(const std::filesystem::path& root) {
    const auto manifest = detail_synth::read_json_file(root / "manifest.json");
    synth_dataset out;
    try {
        const auto& splits = manifest.at("splits");
        auto load_into = [&](const char* name, std::vector<window_sample>& dst) {
            for (const auto& dir : splits.at(name)) {
                dst.push_back(load_window(root / dir.get<std::string>()));
                dst.back().split = split_from_string(name);
            }
        };
        load_into("train", out.train);
        load_into("val", out.val);
        load_into("test", out.test);
    } catch (const nlohmann::json::exception& e) {
        throw value_error("manifest " + (root / "manifest.json").string() + ": " + e.what());
    }
    return out;
}

}  // namespace phasebeat
