// Stage-1 network: a dilated 3-D convolution stack over a facial video
// window, spatial and temporal attention refinement, and two structurally
// identical 1-D heads emitting the facial and the delayed acral pulse signal.

#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phasebeat/common.hpp"
#include "phasebeat/init.hpp"
#include "phasebeat/nn_ops.hpp"
#include "phasebeat/tensor.hpp"

namespace phasebeat {

struct drp_config {
    std::int64_t frames = 150;
    std::int64_t height = 128;
    std::int64_t width = 128;
    std::int64_t in_channels = 3;
    std::vector<std::int64_t> channels = {16, 32, 64, 64, 64, 64, 64};
    std::vector<std::int64_t> t_dilation = {1, 1, 2, 2, 4, 4, 1};
    std::vector<std::int64_t> pool_after = {2, 4, 6};   // 1-based conv layer indices
    std::vector<std::int64_t> pool_kernel = {4, 4, 2};  // square spatial pools
    std::int64_t inter_tap = 3;  // m_inter = output of this conv layer (1-based)

    static drp_config full() { return {}; }

    // Quarter-width profile sized for single-core training runs.
    static drp_config small_profile() {
        drp_config c;
        c.height = c.width = 32;
        c.channels = {4, 8, 16, 16, 16, 16, 16};
        c.pool_kernel = {2, 2, 2};
        return c;
    }

    // Minimal profile for finite-difference gradient checks.
    static drp_config tiny_profile() {
        drp_config c;
        c.frames = 12;
        c.height = c.width = 16;
        c.channels = {4, 6, 8, 8, 8, 8, 8};
        c.pool_kernel = {2, 2, 2};
        return c;
    }

    std::int64_t inter_spatial() const {
        std::int64_t s = height;
        // m_inter is tapped after the first pool, so divide by pools placed
        // at or before the tap layer.
        for (std::size_t i = 0; i < pool_after.size(); ++i)
            if (pool_after[i] < inter_tap) s /= pool_kernel[i];
        return s;
    }

    std::int64_t final_spatial() const {
        std::int64_t s = height;
        for (auto k : pool_kernel) s /= k;
        return s;
    }

    std::int64_t inter_channels() const {
        return channels.at(static_cast<std::size_t>(inter_tap - 1));
    }

    std::int64_t att_channels() const { return std::max<std::int64_t>(inter_channels() / 8, 4); }

    // Frames a single input frame can influence: each temporal kernel of
    // width 3 with dilation d widens the receptive field by d on each side.
    std::int64_t temporal_receptive_radius() const {
        std::int64_t r = 0;
        for (auto d : t_dilation) r += d;
        return r;
    }

    void validate() const {
        require(frames > 0 && height > 0 && width == height, "drp_config: bad dims");
        require(channels.size() == t_dilation.size() && !channels.empty(),
                "drp_config: schedule length mismatch");
        require(pool_after.size() == pool_kernel.size(), "drp_config: pool schedule mismatch");
        std::int64_t s = height;
        for (auto k : pool_kernel) {
            require(k > 0 && s % k == 0, "drp_config: pool does not divide spatial size");
            s /= k;
        }
        require(s >= 2, "drp_config: final spatial size too small");
        require(inter_tap >= 1 && inter_tap <= static_cast<std::int64_t>(channels.size()),
                "drp_config: bad inter_tap");
        require(inter_spatial() % final_spatial() == 0, "drp_config: attention pool mismatch");
        for (auto d : t_dilation) require(d >= 1, "drp_config: bad dilation");
    }
};

template <typename S>
struct drp_outputs {
    tensor<S> m_inter;  // [C_inter, T, s_inter, s_inter]
    tensor<S> m;        // [C_final, T, s_final, s_final]
    tensor<S> alpha_s;  // [1, 1, s_final, s_final]
    tensor<S> alpha_t;  // [1, T, 1, 1]
    tensor<S> beta;     // refined map, same shape as m
    tensor<S> facial;   // [T]
    tensor<S> acral;    // [T]
};

template <typename S>
class drp_net {
  public:
    struct conv3d_layer {
        tensor<S> w, b;
        std::int64_t dil;
    };
    struct attention {
        tensor<S> score_w, score_b;  // k = (1,3,3) conv
        tensor<S> mix_w, mix_b;      // pointwise conv to one channel
    };
    struct head {
        std::vector<tensor<S>> w, b;            // three dilated stages + pointwise
        std::vector<std::int64_t> kernel, dil;  // schedules per stage
    };

    explicit drp_net(drp_config cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        std::mt19937_64 rng(derive_seed(seed, 0xd59));
        std::int64_t c_in = cfg_.in_channels;
        for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
            const std::int64_t c_out = cfg_.channels[i];
            conv3d_layer l{tensor<S>::zeros({c_out, c_in, 3, 3, 3}, true),
                           tensor<S>::zeros({c_out}, true), cfg_.t_dilation[i]};
            detail::fill_uniform(l.w, c_in * 27, rng, detail::weight_gain);
            detail::symmetrize_axis(l.w, 3, 9);  // mirror kT over the 3x3 spatial tail
            detail::fill_uniform(l.b, c_in * 27, rng);
            trunk_.push_back(std::move(l));
            c_in = c_out;
        }
        const std::int64_t ci = cfg_.inter_channels(), ca = cfg_.att_channels();
        for (attention* a : {&spatial_, &temporal_}) {
            a->score_w = tensor<S>::zeros({ca, ci, 1, 3, 3}, true);
            a->score_b = tensor<S>::zeros({ca}, true);
            a->mix_w = tensor<S>::zeros({1, ca, 1, 1, 1}, true);
            a->mix_b = tensor<S>::zeros({1}, true);
            detail::fill_uniform(a->score_w, ci * 9, rng, detail::weight_gain);
            detail::fill_uniform(a->score_b, ci * 9, rng);
            detail::fill_uniform(a->mix_w, ca, rng, detail::weight_gain);
            detail::fill_uniform(a->mix_b, ca, rng);
        }
        for (head* h : {&facial_head_, &acral_head_}) {
            const std::int64_t c = cfg_.channels.back();
            const std::vector<std::int64_t> chans = {c, c / 2, c / 4,
                                                     std::max<std::int64_t>(c / 8, 4), 1};
            h->kernel = {5, 3, 3, 1};
            h->dil = {1, 2, 4, 1};
            for (std::size_t i = 0; i + 1 < chans.size(); ++i) {
                tensor<S> w = tensor<S>::zeros({chans[i + 1], chans[i], h->kernel[i]}, true);
                tensor<S> b = tensor<S>::zeros({chans[i + 1]}, true);
                detail::fill_uniform(w, chans[i] * h->kernel[i], rng, detail::weight_gain);
                detail::symmetrize_axis(w, h->kernel[i], 1);
                detail::fill_uniform(b, chans[i] * h->kernel[i], rng);
                h->w.push_back(std::move(w));
                h->b.push_back(std::move(b));
            }
        }
    }

    const drp_config& config() const { return cfg_; }

    drp_outputs<S> forward(const tensor<S>& x) const {
        require(x.shape() == std::vector<std::int64_t>{cfg_.in_channels, cfg_.frames, cfg_.height,
                                                       cfg_.width},
                "drp_net: bad input shape");
        drp_outputs<S> out;
        tensor<S> h = x;
        std::size_t pool_idx = 0;
        for (std::size_t i = 0; i < trunk_.size(); ++i) {
            const auto& l = trunk_[i];
            conv3d_geom g;
            g.dilation = {l.dil, 1, 1};
            g.pad = {l.dil, 1, 1};  // temporal and spatial same-padding for 3-wide kernels
            h = hardswish(conv3d(h, l.w, l.b, g));
            if (pool_idx < cfg_.pool_after.size() &&
                cfg_.pool_after[pool_idx] == static_cast<std::int64_t>(i) + 1) {
                h = maxpool_hw(h, cfg_.pool_kernel[pool_idx], cfg_.pool_kernel[pool_idx]);
                ++pool_idx;
            }
            if (static_cast<std::int64_t>(i) + 1 == cfg_.inter_tap) out.m_inter = h;
        }
        out.m = h;
        out.alpha_s = spatial_attention(out.m_inter);
        out.alpha_t = temporal_attention(out.m_inter);
        out.beta = mul(mul(out.m, out.alpha_t), out.alpha_s);
        tensor<S> pooled = mean_hw(out.beta);  // [C, T]
        out.facial = run_head(facial_head_, pooled);
        out.acral = run_head(acral_head_, pooled);
        return out;
    }

    // Score conv (no temporal extent) -> average plus max spatial reduction to
    // the final grid -> pointwise mix -> temporal mean -> sigmoid.
    tensor<S> spatial_attention(const tensor<S>& m_inter) const {
        const std::int64_t r = cfg_.inter_spatial() / cfg_.final_spatial();
        tensor<S> s = score(spatial_, m_inter);
        tensor<S> red = add(avgpool_hw(s, r, r), maxpool_hw(s, r, r));
        tensor<S> v = mix(spatial_, red);       // [1, T, s_final, s_final]
        return sigmoid(mean_over_t(v));         // [1, 1, s_final, s_final]
    }

    // Score conv -> global average plus max over space -> pointwise mix over
    // channels -> sigmoid. No operation looks across frames, so a temporally
    // constant input yields a constant score vector.
    tensor<S> temporal_attention(const tensor<S>& m_inter) const {
        tensor<S> s = score(temporal_, m_inter);
        tensor<S> pooled = add(mean_hw(s), max_hw(s));   // [C_att, T]
        const auto ca = cfg_.att_channels();
        tensor<S> as4 = reshape(pooled, {ca, cfg_.frames, 1, 1});
        tensor<S> v = mix(temporal_, as4);               // [1, T, 1, 1]
        return sigmoid(v);
    }

    param_list<S> params() {
        param_list<S> p;
        for (std::size_t i = 0; i < trunk_.size(); ++i) {
            p.emplace_back("trunk." + std::to_string(i) + ".weight", trunk_[i].w);
            p.emplace_back("trunk." + std::to_string(i) + ".bias", trunk_[i].b);
        }
        auto att = [&p](const std::string& tag, attention& a) {
            p.emplace_back(tag + ".score.weight", a.score_w);
            p.emplace_back(tag + ".score.bias", a.score_b);
            p.emplace_back(tag + ".mix.weight", a.mix_w);
            p.emplace_back(tag + ".mix.bias", a.mix_b);
        };
        att("att_spatial", spatial_);
        att("att_temporal", temporal_);
        auto hd = [&p](const std::string& tag, head& h) {
            for (std::size_t i = 0; i < h.w.size(); ++i) {
                p.emplace_back(tag + "." + std::to_string(i) + ".weight", h.w[i]);
                p.emplace_back(tag + "." + std::to_string(i) + ".bias", h.b[i]);
            }
        };
        hd("head_facial", facial_head_);
        hd("head_acral", acral_head_);
        return p;
    }

    // Realized layer schedule for reproducibility audits.
    nlohmann::json describe() const {
        nlohmann::json layers = nlohmann::json::array();
        std::int64_t c_in = cfg_.in_channels, spatial = cfg_.height;
        std::size_t pool_idx = 0;
        for (std::size_t i = 0; i < trunk_.size(); ++i) {
            layers.push_back({{"type", "conv3d"},
                              {"in_channels", c_in},
                              {"out_channels", cfg_.channels[i]},
                              {"kernel", {3, 3, 3}},
                              {"temporal_dilation", cfg_.t_dilation[i]},
                              {"output_spatial", spatial},
                              {"activation", "hardswish"}});
            c_in = cfg_.channels[i];
            if (pool_idx < cfg_.pool_after.size() &&
                cfg_.pool_after[pool_idx] == static_cast<std::int64_t>(i) + 1) {
                spatial /= cfg_.pool_kernel[pool_idx];
                layers.push_back({{"type", "maxpool_hw"},
                                  {"kernel", cfg_.pool_kernel[pool_idx]},
                                  {"output_spatial", spatial}});
                ++pool_idx;
            }
        }
        nlohmann::json heads = nlohmann::json::array();
        for (std::size_t i = 0; i < facial_head_.w.size(); ++i)
            heads.push_back({{"type", "conv1d"},
                             {"shape", facial_head_.w[i].shape()},
                             {"kernel", facial_head_.kernel[i]},
                             {"dilation", facial_head_.dil[i]}});
        return {{"frames", cfg_.frames},
                {"input_spatial", cfg_.height},
                {"inter_tap", cfg_.inter_tap},
                {"inter_spatial", cfg_.inter_spatial()},
                {"final_spatial", cfg_.final_spatial()},
                {"temporal_receptive_radius", cfg_.temporal_receptive_radius()},
                {"trunk", layers},
                {"head", heads}};
    }

    head& facial_head() { return facial_head_; }
    head& acral_head() { return acral_head_; }
    attention& spatial_att() { return spatial_; }
    attention& temporal_att() { return temporal_; }

  private:
    tensor<S> score(const attention& a, const tensor<S>& x) const {
        conv3d_geom g;
        g.pad = {0, 1, 1};
        return hardswish(conv3d(x, a.score_w, a.score_b, g));
    }

    tensor<S> mix(const attention& a, const tensor<S>& x) const {
        return conv3d(x, a.mix_w, a.mix_b, conv3d_geom{});
    }

    tensor<S> run_head(const head& h, const tensor<S>& pooled) const {
        tensor<S> y = pooled;
        for (std::size_t i = 0; i < h.w.size(); ++i) {
            const std::int64_t pad = same_pad(h.kernel[i], h.dil[i]);
            y = conv1d(y, h.w[i], h.b[i], h.dil[i], pad);
            if (i + 1 < h.w.size()) y = hardswish(y);
        }
        return reshape(y, {cfg_.frames});
    }

    drp_config cfg_;
    std::vector<conv3d_layer> trunk_;
    attention spatial_, temporal_;
    head facial_head_, acral_head_;
};

}  // namespace phasebeat
