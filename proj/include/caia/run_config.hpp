#pragma once

#include <json.hpp>

#include <set>
#include <string>
#include <vector>

#include "caia/spectral.hpp"
#include "caia/synth.hpp"
#include "caia/train.hpp"

namespace caia {

/// One structured-text document covering dataset generation, blurring, band
/// layout, fusion, encoder and training. Unknown keys are rejected so a typo
/// cannot silently fall back to a default.
struct RunConfig {
  SynthConfig synth;
  TrainConfig train;
  BandSpec bands = BandSpec::canonical(250.0);
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& path,
                       const std::set<std::string>& allowed) {
  if (!j.is_object()) throw std::invalid_argument("config: '" + path + "' must be an object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) {
      throw std::invalid_argument("config: unknown key '" + path + "." + item.key() + "'");
    }
  }
}

template <class T>
void get_to(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace detail

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.train.seed;
  j["visual_seed"] = c.train.visual_seed;
  j["workers"] = c.train.workers;
  j["synth"] = {{"n_classes", c.synth.n_classes},
                {"n_test_classes", c.synth.n_test_classes},
                {"imgs_per_class", c.synth.imgs_per_class},
                {"trials_per_image", c.synth.trials_per_image},
                {"image_height", c.synth.image_height},
                {"image_width", c.synth.image_width},
                {"channels", c.synth.channels},
                {"samples", c.synth.samples},
                {"sample_rate", c.synth.sample_rate},
                {"signal_band", c.synth.signal_band},
                {"noise_band", c.synth.noise_band},
                {"noise_scale", c.synth.noise_scale},
                {"outlier_fraction", c.synth.outlier_fraction}};
  j["blur"] = {{"sigma", c.train.sigma},
               {"w0", c.train.w0},
               {"g", c.train.blur_decay},
               {"saliency_scales", c.train.saliency_scales}};
  j["bands"] = {{"base_edges", c.bands.base_edges},
                {"gamma_min", c.bands.gamma_min},
                {"gamma_max", c.bands.gamma_max},
                {"crossfade_hz", c.bands.crossfade_hz},
                {"tau", c.train.tau}};
  j["fusion"] = {{"grid_h", c.train.fusion.grid_h},
                 {"grid_w", c.train.fusion.grid_w},
                 {"key_dim", c.train.fusion.key_dim},
                 {"mode", fusion_mode_name(c.train.fusion_mode)},
                 {"frozen_query", c.train.frozen_query}};
  j["encoder"] = {{"feature_maps", c.train.encoder.feature_maps},
                  {"kernel_len", c.train.encoder.kernel_len},
                  {"embed_dim", c.train.encoder.embed_dim},
                  {"nonlinearity", c.train.encoder.nonlinearity}};
  j["train"] = {{"batch_size", c.train.batch_size},
                {"steps", c.train.steps},
                {"lr", c.train.lr},
                {"weight_decay", c.train.weight_decay},
                {"w1", c.train.w1},
                {"w2", c.train.w2},
                {"alpha", c.train.alpha},
                {"temperature_init", c.train.temperature_init},
                {"use_fusion", c.train.use_fusion},
                {"use_ibwave", c.train.use_ibwave},
                {"use_bound", c.train.use_bound},
                {"detach_stats", c.train.detach_stats},
                {"avg_trials", c.train.avg_trials}};
  return j;
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  detail::check_keys(j, "",
                     {"seed", "visual_seed", "workers", "synth", "blur", "bands", "fusion",
                      "encoder", "train"});
  detail::get_to(j, "seed", c.train.seed);
  c.synth.seed = c.train.seed;
  detail::get_to(j, "visual_seed", c.train.visual_seed);
  detail::get_to(j, "workers", c.train.workers);

  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    detail::check_keys(s, "synth",
                       {"n_classes", "n_test_classes", "imgs_per_class", "trials_per_image",
                        "image_height", "image_width", "channels", "samples", "sample_rate",
                        "signal_band", "noise_band", "noise_scale", "outlier_fraction"});
    detail::get_to(s, "n_classes", c.synth.n_classes);
    detail::get_to(s, "n_test_classes", c.synth.n_test_classes);
    detail::get_to(s, "imgs_per_class", c.synth.imgs_per_class);
    detail::get_to(s, "trials_per_image", c.synth.trials_per_image);
    detail::get_to(s, "image_height", c.synth.image_height);
    detail::get_to(s, "image_width", c.synth.image_width);
    detail::get_to(s, "channels", c.synth.channels);
    detail::get_to(s, "samples", c.synth.samples);
    detail::get_to(s, "sample_rate", c.synth.sample_rate);
    detail::get_to(s, "signal_band", c.synth.signal_band);
    detail::get_to(s, "noise_band", c.synth.noise_band);
    detail::get_to(s, "noise_scale", c.synth.noise_scale);
    detail::get_to(s, "outlier_fraction", c.synth.outlier_fraction);
  }
  if (j.contains("blur")) {
    const auto& b = j.at("blur");
    detail::check_keys(b, "blur", {"sigma", "w0", "g", "saliency_scales"});
    detail::get_to(b, "sigma", c.train.sigma);
    detail::get_to(b, "w0", c.train.w0);
    detail::get_to(b, "g", c.train.blur_decay);
    detail::get_to(b, "saliency_scales", c.train.saliency_scales);
  }
  if (j.contains("bands")) {
    const auto& b = j.at("bands");
    detail::check_keys(b, "bands",
                       {"base_edges", "gamma_min", "gamma_max", "crossfade_hz", "tau"});
    detail::get_to(b, "base_edges", c.bands.base_edges);
    detail::get_to(b, "gamma_min", c.bands.gamma_min);
    detail::get_to(b, "gamma_max", c.bands.gamma_max);
    detail::get_to(b, "crossfade_hz", c.bands.crossfade_hz);
    detail::get_to(b, "tau", c.train.tau);
    if (c.bands.base_edges.size() < 2) {
      throw std::invalid_argument("config: bands.base_edges needs at least two edges");
    }
    c.bands.gamma.assign(c.bands.base_edges.size() - 1, 1.0);
  }
  if (j.contains("fusion")) {
    const auto& f = j.at("fusion");
    detail::check_keys(f, "fusion", {"grid_h", "grid_w", "key_dim", "mode", "frozen_query"});
    detail::get_to(f, "grid_h", c.train.fusion.grid_h);
    detail::get_to(f, "grid_w", c.train.fusion.grid_w);
    detail::get_to(f, "key_dim", c.train.fusion.key_dim);
    if (f.contains("mode")) c.train.fusion_mode = fusion_mode_from_name(f.at("mode"));
    detail::get_to(f, "frozen_query", c.train.frozen_query);
  }
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    detail::check_keys(e, "encoder", {"feature_maps", "kernel_len", "embed_dim", "nonlinearity"});
    detail::get_to(e, "feature_maps", c.train.encoder.feature_maps);
    detail::get_to(e, "kernel_len", c.train.encoder.kernel_len);
    detail::get_to(e, "embed_dim", c.train.encoder.embed_dim);
    detail::get_to(e, "nonlinearity", c.train.encoder.nonlinearity);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::check_keys(t, "train",
                       {"batch_size", "steps", "lr", "weight_decay", "w1", "w2", "alpha",
                        "temperature_init", "use_fusion", "use_ibwave", "use_bound",
                        "detach_stats", "avg_trials"});
    detail::get_to(t, "batch_size", c.train.batch_size);
    detail::get_to(t, "steps", c.train.steps);
    detail::get_to(t, "lr", c.train.lr);
    detail::get_to(t, "weight_decay", c.train.weight_decay);
    detail::get_to(t, "w1", c.train.w1);
    detail::get_to(t, "w2", c.train.w2);
    detail::get_to(t, "alpha", c.train.alpha);
    detail::get_to(t, "temperature_init", c.train.temperature_init);
    detail::get_to(t, "use_fusion", c.train.use_fusion);
    detail::get_to(t, "use_ibwave", c.train.use_ibwave);
    detail::get_to(t, "use_bound", c.train.use_bound);
    detail::get_to(t, "detach_stats", c.train.detach_stats);
    detail::get_to(t, "avg_trials", c.train.avg_trials);
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  nlohmann::json j;
  in >> j;
  return parse_run_config(j);
}

}  // namespace caia
