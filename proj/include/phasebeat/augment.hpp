// Temporal augmentation: bradycardia windows by frame interpolation of a
// half-length source, tachycardia windows by decimating a double-length
// source. Linear blending stands in for a learned interpolator; synthetic
// low-motion clips vary smoothly enough that the controllable-rate property
// is preserved, a documented fidelity gap for real video.

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phasebeat/common.hpp"
#include "phasebeat/synth.hpp"

namespace phasebeat {

// Pixelwise convex combination of two equally shaped frames.
inline std::vector<float> blend_frames(const std::vector<float>& a, const std::vector<float>& b,
                                       double alpha = 0.5) {
    require(a.size() == b.size(), "blend_frames: shape mismatch");
    require(alpha >= 0.0 && alpha <= 1.0, "blend_frames: alpha outside [0, 1]");
    std::vector<float> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] = float((1.0 - alpha) * double(a[i]) + alpha * double(b[i]));
    return out;
}

namespace detail_augment {

inline std::vector<float> frame_of(const video_clip& c, std::int64_t t) {
    const auto stride = static_cast<std::size_t>(c.height * c.width * c.channels);
    const auto base = static_cast<std::size_t>(t) * stride;
    return {c.data.begin() + static_cast<std::ptrdiff_t>(base),
            c.data.begin() + static_cast<std::ptrdiff_t>(base + stride)};
}

inline void push_frame(video_clip& c, const std::vector<float>& f) {
    c.data.insert(c.data.end(), f.begin(), f.end());
}

}  // namespace detail_augment

// Doubles the frame count: even output frames are the originals, odd ones
// the midpoint blend of their neighbors, and the final frame repeats the
// last original so the count comes out exactly doubled. The playback rate
// is unchanged, so the dominant pulse frequency halves.
inline video_clip slow_down(const video_clip& in) {
    in.validate();
    require(in.frames >= 2, "slow_down: need at least two frames");
    video_clip out{2 * in.frames, in.height, in.width, in.channels, in.rate, {}};
    out.data.reserve(2 * in.data.size());
    for (std::int64_t t = 0; t < in.frames; ++t) {
        const auto cur = detail_augment::frame_of(in, t);
        detail_augment::push_frame(out, cur);
        if (t + 1 < in.frames)
            detail_augment::push_frame(out,
                                       blend_frames(cur, detail_augment::frame_of(in, t + 1)));
        else
            detail_augment::push_frame(out, cur);
    }
    out.validate();
    return out;
}

// Keeps every second frame; the dominant pulse frequency doubles.
inline video_clip speed_up(const video_clip& in) {
    in.validate();
    require(in.frames >= 2 && in.frames % 2 == 0, "speed_up: need an even frame count");
    video_clip out{in.frames / 2, in.height, in.width, in.channels, in.rate, {}};
    out.data.reserve(in.data.size() / 2);
    for (std::int64_t t = 0; t < in.frames; t += 2)
        detail_augment::push_frame(out, detail_augment::frame_of(in, t));
    out.validate();
    return out;
}

// Matching time scalings for the pressure channel, so augmented clips pair
// with a pressure wave of the same temporal density.
inline physio_signal stretch_double(const physio_signal& s) {
    s.validate();
    require(s.samples.size() >= 2, "stretch_double: need at least two samples");
    physio_signal out{{}, s.rate};
    out.samples.reserve(2 * s.samples.size());
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
        out.samples.push_back(s.samples[i]);
        if (i + 1 < s.samples.size())
            out.samples.push_back(0.5 * (s.samples[i] + s.samples[i + 1]));
        else
            out.samples.push_back(s.samples[i]);
    }
    return out;
}

inline physio_signal compress_half(const physio_signal& s) {
    s.validate();
    require(s.samples.size() >= 2 && s.samples.size() % 2 == 0,
            "compress_half: need an even sample count");
    // The rate stays put: the survivors describe a twice-faster wave over
    // the same wall-clock span, mirroring what speed_up does to the clip.
    physio_signal out{{}, s.rate};
    out.samples.reserve(s.samples.size() / 2);
    for (std::size_t i = 0; i < s.samples.size(); i += 2) out.samples.push_back(s.samples[i]);
    return out;
}

// ---- dataset-level plan -----------------------------------------------------------------

enum class augment_mode { keep, slow, fast };

inline double label_scale(augment_mode m) {
    switch (m) {
        case augment_mode::slow: return 0.5;
        case augment_mode::fast: return 2.0;
        default: return 1.0;
    }
}

inline const char* to_string(augment_mode m) {
    switch (m) {
        case augment_mode::slow: return "slow";
        case augment_mode::fast: return "fast";
        default: return "keep";
    }
}

inline augment_mode augment_mode_from_string(const std::string& s) {
    if (s == "keep") return augment_mode::keep;
    if (s == "slow") return augment_mode::slow;
    if (s == "fast") return augment_mode::fast;
    throw value_error("unknown augment mode: " + s);
}

// Sampling ratios for the three modes; the source never states them, so
// uniform thirds are the default and the knob stays exposed.
struct augment_ratios {
    double keep = 1.0 / 3.0;
    double slow = 1.0 / 3.0;
    double fast = 1.0 / 3.0;

    void validate() const {
        require(keep >= 0.0 && slow >= 0.0 && fast >= 0.0, "augment_ratios: negative ratio");
        require(keep + slow + fast > 0.0, "augment_ratios: all ratios zero");
    }
};

struct augment_assignment {
    std::size_t source_index = 0;
    augment_mode mode = augment_mode::keep;
};

// Draws a mode per source window; scaled labels leaving [30, 180] BPM fall
// back to keep, so every source stays represented.
inline std::vector<augment_assignment> plan_augmentation(const std::vector<double>& source_hr,
                                                         const augment_ratios& ratios,
                                                         std::uint64_t seed) {
    ratios.validate();
    const double total = ratios.keep + ratios.slow + ratios.fast;
    std::vector<augment_assignment> out(source_hr.size());
    for (std::size_t i = 0; i < source_hr.size(); ++i) {
        std::mt19937_64 rng(derive_seed(seed, 0xa06 + i));
        const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
        augment_mode m = augment_mode::keep;
        if (u >= ratios.keep) m = u < ratios.keep + ratios.slow ? augment_mode::slow : augment_mode::fast;
        const double scaled = source_hr[i] * label_scale(m);
        if (scaled < 30.0 || scaled > 180.0) m = augment_mode::keep;
        out[i] = {i, m};
    }
    return out;
}

inline nlohmann::json augment_plan_json(const std::vector<augment_assignment>& plan,
                                        const augment_ratios& ratios, std::uint64_t seed) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& a : plan)
        rows.push_back({{"source", a.source_index}, {"mode", to_string(a.mode)}});
    return {{"seed", seed},
            {"ratios", {{"keep", ratios.keep}, {"slow", ratios.slow}, {"fast", ratios.fast}}},
            {"assignments", rows}};
}

inline std::vector<augment_assignment> augment_plan_from_json(const nlohmann::json& j) {
    std::vector<augment_assignment> out;
    try {
        for (const auto& row : j.at("assignments"))
            out.push_back({row.at("source").get<std::size_t>(),
                           augment_mode_from_string(row.at("mode").get<std::string>())});
    } catch (const nlohmann::json::exception& e) {
        throw value_error(std::string("augment plan: ") + e.what());
    }
    return out;
}

// ---- synthetic application --------------------------------------------------------------

// Builds the augmented window by re-rendering the source at the length the
// op consumes (half for slow, double for fast), then applying the frame op
// and its matching pressure scaling. Pressure labels are recomputed from
// the scaled wave; only temporal density changes, so they stay put. Returns
// nothing when the scaled rate leaves the analysis band.
inline std::optional<window_sample> make_augmented_window(const window_plan& plan,
                                                          augment_mode mode) {
    if (mode == augment_mode::keep) return make_window(plan);
    const double scaled_hr = plan.spec.hr * label_scale(mode);
    if (scaled_hr < 30.0 || scaled_hr > 180.0) return std::nullopt;

    window_plan source = plan;
    require(plan.spec.frames % 2 == 0, "make_augmented_window: frame count must be even");
    source.spec.frames =
        mode == augment_mode::slow ? plan.spec.frames / 2 : plan.spec.frames * 2;

    window_sample w;
    w.spec = plan.spec;
    w.spec.hr = scaled_hr;
    w.subject = plan.subject;
    w.split = plan.split;
    const auto abp = gen_abp(source.spec);
    const auto clip = gen_clip(source.spec, plan.appearance_seed);
    if (mode == augment_mode::slow) {
        w.clip = slow_down(clip);
        w.abp = stretch_double(abp);
    } else {
        w.clip = speed_up(clip);
        w.abp = compress_half(abp);
    }
    w.pseudo_ppg = pseudo_ppg_from_abp(decimate(w.abp, w.spec.abp_factor()));
    w.hr_gt = scaled_hr;
    const auto [sbp, dbp] = gt_bp_from_abp(w.abp);
    w.sbp_gt = sbp;
    w.dbp_gt = dbp;
    w.validate();
    return w;
}

// An augmented training window remembers where it came from.
struct augmented_window {
    window_sample window;
    double scale = 1.0;
    std::size_t source_index = 0;
    augment_mode mode = augment_mode::keep;
};

// Realizes a plan against the window plans of a training split. Rejected
// assignments (scaled label out of band) are skipped; plan_augmentation
// already folds those back to keep, so this only drops hand-edited plans.
inline std::vector<augmented_window> realize_augmentation(
    const std::vector<window_plan>& sources, const std::vector<augment_assignment>& plan) {
    std::vector<augmented_window> out;
    out.reserve(plan.size());
    for (const auto& a : plan) {
        require(a.source_index < sources.size(), "realize_augmentation: source index out of range");
        auto w = make_augmented_window(sources[a.source_index], a.mode);
        if (w) out.push_back({std::move(*w), label_scale(a.mode), a.source_index, a.mode});
    }
    return out;
}

}  // namespace phasebeat
