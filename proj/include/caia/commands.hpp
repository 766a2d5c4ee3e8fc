#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "caia/fd_suite.hpp"
#include "caia/pnm.hpp"
#include "caia/run_config.hpp"
#include "caia/tensor_file.hpp"

namespace caia {

namespace fs = std::filesystem;

/// Creates the output directory; refuses to reuse a non-empty one unless
/// forced. Commands only ever write below their own output directory.
inline void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) {
    throw std::runtime_error("output path '" + dir.string() + "' exists and is not a directory");
  }
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw std::runtime_error("output directory '" + dir.string() +
                             "' is not empty (pass --force to overwrite)");
  }
  fs::create_directories(dir);
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
}

/// The config document is echoed into every output directory byte for byte,
/// so reruns and ablations are self-describing.
inline void echo_config(const fs::path& out_dir, const std::string& config_bytes) {
  write_text_file(out_dir / "config.json", config_bytes);
}

inline std::string band_label(const BandSpec& spec, std::size_t i) {
  if (spec.bands() == 5) return BandSpec::band_name(i);
  return "band" + std::to_string(i);
}

// ---------------------------------------------------------------------------
// blur
// ---------------------------------------------------------------------------

inline int cmd_blur(const std::string& input_path, const std::string& out_dir, const RunConfig& cfg,
                    const std::string& saliency_path, const std::string& mode,
                    const std::string& config_bytes, bool force) {
  const Image img = read_p6(input_path);
  BlurConfig blur_cfg;
  blur_cfg.sigma = cfg.train.sigma > 0.0 ? cfg.train.sigma : default_sigma(img.height, img.width);
  blur_cfg.w0 = cfg.train.w0;
  blur_cfg.decay = cfg.train.blur_decay;

  Plane sal;
  if (!saliency_path.empty()) {
    if (saliency_path.size() > 3 && saliency_path.substr(saliency_path.size() - 3) == ".tf") {
      const TensorData t = read_tensor_file(saliency_path);
      if (t.dims.size() != 2 || t.dims[0] != img.height || t.dims[1] != img.width) {
        throw std::runtime_error("saliency map dimensions do not match the input image");
      }
      sal = Plane(t.dims[0], t.dims[1]);
      sal.data = t.values;
      for (double& v : sal.data) v = std::clamp(v, 0.0, 1.0);
    } else {
      sal = read_p5(saliency_path);
      if (sal.height != img.height || sal.width != img.width) {
        throw std::runtime_error("saliency map dimensions do not match the input image");
      }
    }
  } else {
    sal = compute_saliency(img, cfg.train.saliency_scales);
  }

  prepare_out_dir(out_dir, force);
  const fs::path out(out_dir);

  const Image blurred = gaussian_blur(img, blur_cfg);
  const auto xa = saliency_blur(img, blurred, sal, blur_cfg);
  const auto xb = center_blur(img, blurred, blur_cfg);

  auto write_plane = [&](const Plane& p, const std::string& stem) {
    write_tensor_file((out / (stem + ".tf")).string(), {p.height, p.width}, p.data.data());
    write_p5((out / (stem + ".pgm")).string(), p);
  };

  if (mode == "all" || mode == "saliency") {
    write_p6((out / "xa.ppm").string(), xa.image);
    write_plane(xa.weight, "w_s");
    write_plane(sal, "saliency");
  }
  if (mode == "all" || mode == "center") {
    write_p6((out / "xb.ppm").string(), xb.image);
    write_plane(xb.weight, "w_r");
  }
  if (mode == "all" || mode == "linear") {
    write_p6((out / "fused.ppm").string(), blend_images(xa.image, xb.image, 0.5));
  }
  echo_config(out, config_bytes);
  return 0;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

inline nlohmann::json synth_section_json(const SynthConfig& s) {
  return {{"n_classes", s.n_classes},
          {"n_test_classes", s.n_test_classes},
          {"imgs_per_class", s.imgs_per_class},
          {"trials_per_image", s.trials_per_image},
          {"image_height", s.image_height},
          {"image_width", s.image_width},
          {"channels", s.channels},
          {"samples", s.samples},
          {"sample_rate", s.sample_rate},
          {"signal_band", s.signal_band},
          {"noise_band", s.noise_band},
          {"noise_scale", s.noise_scale},
          {"outlier_fraction", s.outlier_fraction},
          {"seed", s.seed}};
}

inline SynthConfig synth_section_from_json(const nlohmann::json& j) {
  SynthConfig s;
  detail::get_to(j, "n_classes", s.n_classes);
  detail::get_to(j, "n_test_classes", s.n_test_classes);
  detail::get_to(j, "imgs_per_class", s.imgs_per_class);
  detail::get_to(j, "trials_per_image", s.trials_per_image);
  detail::get_to(j, "image_height", s.image_height);
  detail::get_to(j, "image_width", s.image_width);
  detail::get_to(j, "channels", s.channels);
  detail::get_to(j, "samples", s.samples);
  detail::get_to(j, "sample_rate", s.sample_rate);
  detail::get_to(j, "signal_band", s.signal_band);
  detail::get_to(j, "noise_band", s.noise_band);
  detail::get_to(j, "noise_scale", s.noise_scale);
  detail::get_to(j, "outlier_fraction", s.outlier_fraction);
  detail::get_to(j, "seed", s.seed);
  return s;
}

inline int cmd_synth(const RunConfig& cfg, const std::string& out_dir,
                     const std::string& config_bytes, bool force) {
  SynthConfig synth = cfg.synth;
  synth.validate();
  FrozenVisualEncoder visual(cfg.train.visual_seed, cfg.train.encoder.embed_dim);
  const SynthDataset ds = synth_dataset(synth, visual);

  prepare_out_dir(out_dir, force);
  const fs::path out(out_dir);
  fs::create_directories(out / "images");
  fs::create_directories(out / "trials");

  nlohmann::json manifest;
  manifest["format"] = "caia-dataset";
  manifest["version"] = 1;
  manifest["embed_dim"] = cfg.train.encoder.embed_dim;
  manifest["visual_seed"] = cfg.train.visual_seed;
  manifest["synth"] = synth_section_json(synth);

  {
    const std::vector<std::size_t> dims = {2 * synth.channels, cfg.train.encoder.embed_dim};
    const auto bytes = tensor_file_bytes(dims, ds.mixing.data());
    write_file_bytes((out / "mixing.tf").string(), bytes);
    manifest["mixing"] = {{"file", "mixing.tf"}, {"dims", dims}, {"checksum", fnv1a_hex(bytes)}};
  }

  char name[128];
  manifest["images"] = nlohmann::json::array();
  for (const SynthImage& im : ds.images) {
    std::snprintf(name, sizeof(name), "images/cls%03zu_img%02zu.tf", im.class_id, im.image_id);
    const std::vector<std::size_t> dims = {im.image.height, im.image.width, 3};
    const auto bytes = tensor_file_bytes(dims, im.image.data.data());
    write_file_bytes((out / name).string(), bytes);
    manifest["images"].push_back({{"class", im.class_id},
                                  {"image", im.image_id},
                                  {"test", im.test_split},
                                  {"file", name},
                                  {"dims", dims},
                                  {"checksum", fnv1a_hex(bytes)}});
  }

  manifest["trials"] = nlohmann::json::array();
  auto dump_samples = [&](const std::vector<SynthSample>& samples, bool test) {
    for (const SynthSample& s : samples) {
      std::snprintf(name, sizeof(name), "trials/cls%03zu_img%02zu_t%02zu.tf", s.class_id,
                    s.image_id, s.trial_id);
      const std::vector<std::size_t> dims = {s.trial.channels, s.trial.samples};
      const auto bytes = tensor_file_bytes(dims, s.trial.data.data());
      write_file_bytes((out / name).string(), bytes);
      manifest["trials"].push_back({{"class", s.class_id},
                                    {"image", s.image_id},
                                    {"trial", s.trial_id},
                                    {"test", test},
                                    {"outlier", s.outlier},
                                    {"file", name},
                                    {"dims", dims},
                                    {"checksum", fnv1a_hex(bytes)}});
    }
  };
  dump_samples(ds.train, false);
  dump_samples(ds.test, true);

  write_text_file(out / "manifest.json", manifest.dump(2) + "\n");
  echo_config(out, config_bytes);
  std::printf("synth: %zu images, %zu train trials, %zu test trials, %zu test candidates\n",
              ds.images.size(), ds.train.size(), ds.test.size(), synth.n_test_classes);
  return 0;
}

/// Loads a dataset directory, validating every checksum and dimension.
inline SynthDataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream in(root / "manifest.json");
  if (!in) throw std::runtime_error("cannot open dataset manifest in '" + dir + "'");
  nlohmann::json manifest;
  in >> manifest;
  if (manifest.value("format", "") != "caia-dataset" || manifest.value("version", 0) != 1) {
    throw std::runtime_error("'" + dir + "' is not a caia dataset directory");
  }
  SynthDataset ds;
  ds.cfg = synth_section_from_json(manifest.at("synth"));

  auto load_checked = [&](const nlohmann::json& entry) {
    const std::string file = entry.at("file");
    const auto bytes = read_file_bytes((root / file).string());
    if (fnv1a_hex(bytes) != entry.at("checksum").get<std::string>()) {
      throw std::runtime_error("checksum mismatch for '" + file + "'");
    }
    TensorData t = parse_tensor_file(bytes, file);
    if (t.dims != entry.at("dims").get<std::vector<std::size_t>>()) {
      throw std::runtime_error("dimension mismatch for '" + file + "'");
    }
    return t;
  };

  ds.mixing = load_checked(manifest.at("mixing")).values;

  std::map<std::pair<std::size_t, std::size_t>, std::size_t> image_index;
  for (const auto& entry : manifest.at("images")) {
    TensorData t = load_checked(entry);
    if (t.dims.size() != 3 || t.dims[2] != 3) {
      throw std::runtime_error("image tensor must be H x W x 3");
    }
    SynthImage im;
    im.class_id = entry.at("class");
    im.image_id = entry.at("image");
    im.test_split = entry.at("test");
    im.image = Image(t.dims[0], t.dims[1]);
    im.image.data = std::move(t.values);
    image_index[{im.class_id, im.image_id}] = ds.images.size();
    ds.images.push_back(std::move(im));
  }

  for (const auto& entry : manifest.at("trials")) {
    TensorData t = load_checked(entry);
    if (t.dims.size() != 2) throw std::runtime_error("trial tensor must be C x T");
    SynthSample s;
    s.class_id = entry.at("class");
    s.image_id = entry.at("image");
    s.trial_id = entry.at("trial");
    s.outlier = entry.at("outlier");
    auto it = image_index.find({s.class_id, s.image_id});
    if (it == image_index.end()) throw std::runtime_error("trial references a missing image");
    s.image_index = it->second;
    s.trial = EegTrial(t.dims[0], t.dims[1], ds.cfg.sample_rate);
    s.trial.data = std::move(t.values);
    if (entry.at("test").get<bool>()) {
      ds.test.push_back(std::move(s));
    } else {
      ds.train.push_back(std::move(s));
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline void write_params(const fs::path& out, const ParamStore& store) {
  fs::create_directories(out / "params");
  nlohmann::json manifest;
  manifest["format"] = "caia-params";
  manifest["version"] = 1;
  manifest["params"] = nlohmann::json::array();
  store.for_each([&](const std::string& name, const ParamEntry& e) {
    const std::string file = "params/" + name + ".tf";
    const auto bytes = tensor_file_bytes(e.value.shape(), e.value.values().data());
    write_file_bytes((out / file).string(), bytes);
    manifest["params"].push_back({{"name", name},
                                  {"file", file},
                                  {"dims", e.value.shape()},
                                  {"trainable", e.trainable},
                                  {"checksum", fnv1a_hex(bytes)}});
  });
  write_text_file(out / "params_manifest.json", manifest.dump(2) + "\n");
}

inline void load_params(const std::string& dir, ParamStore& store) {
  const fs::path root(dir);
  std::ifstream in(root / "params_manifest.json");
  if (!in) throw std::runtime_error("cannot open params manifest in '" + dir + "'");
  nlohmann::json manifest;
  in >> manifest;
  if (manifest.value("format", "") != "caia-params") {
    throw std::runtime_error("'" + dir + "' is not a caia params directory");
  }
  for (const auto& entry : manifest.at("params")) {
    const std::string name = entry.at("name");
    const std::string file = entry.at("file");
    const auto bytes = read_file_bytes((root / file).string());
    if (fnv1a_hex(bytes) != entry.at("checksum").get<std::string>()) {
      throw std::runtime_error("checksum mismatch for '" + file + "'");
    }
    const TensorData t = parse_tensor_file(bytes, file);
    Tensor& value = store.value(name);  // throws on unknown parameter
    if (t.dims != value.shape()) {
      throw std::runtime_error("parameter '" + name + "' has mismatched dimensions");
    }
    for (std::size_t i = 0; i < t.values.size(); ++i) value[i] = t.values[i];
  }
}

inline nlohmann::json counters_json(const ModuleCounters& c) {
  return {{"attention_fusions", c.attention_fusions},
          {"spectral_screens", c.spectral_screens},
          {"boundary_evals", c.boundary_evals}};
}

inline int cmd_train(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir,
                     const std::string& config_bytes, bool force) {
  const SynthDataset ds = load_dataset(data_dir);
  Trainer trainer(ds, cfg.train);

  prepare_out_dir(out_dir, force);
  const fs::path out(out_dir);

  TrainResult result;
  if (cfg.train.steps == 0) {
    result.params = trainer.params();
    result.counters = trainer.counters();
  } else {
    result = trainer.run();
  }

  write_params(out, result.params);
  write_text_file(out / "metrics.csv", metrics_to_csv(result.log));
  nlohmann::json report;
  report["diverged"] = result.diverged;
  report["steps_completed"] = result.log.size();
  report["counters"] = counters_json(result.counters);
  write_text_file(out / "run_report.json", report.dump(2) + "\n");
  echo_config(out, config_bytes);

  if (result.diverged) {
    std::fprintf(stderr, "train: divergence guard tripped (non-finite loss)\n");
    return 3;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

inline int cmd_eval(const RunConfig& cfg, const std::string& params_dir,
                    const std::string& data_dir, const std::string& out_dir,
                    const std::string& config_bytes, bool force) {
  const SynthDataset ds = load_dataset(data_dir);
  Trainer trainer(ds, cfg.train);

  // "before": the seed-initialized model; "after": the trained parameters.
  const ModelEval before = trainer.evaluate(trainer.params());
  load_params(params_dir, trainer.params());
  const ModelEval after = trainer.evaluate(trainer.params());

  prepare_out_dir(out_dir, force);
  const fs::path out(out_dir);

  const BandSpec& bands = trainer.base_bands();
  nlohmann::json report;
  report["top1"] = after.retrieval.top_at(1);
  report["top5"] = after.retrieval.top_at(5);
  report["per_class"] = nlohmann::json::array();
  for (const auto& pc : after.retrieval.per_class) {
    report["per_class"].push_back(
        {{"class", pc.class_id}, {"hits", pc.hits_top1}, {"total", pc.total}});
  }
  report["band_weights"] = nlohmann::json::object();
  for (std::size_t i = 0; i < after.band_weights.size(); ++i) {
    report["band_weights"][band_label(bands, i)] = after.band_weights[i];
  }
  report["outlier_frac_before"] = before.outlier_fraction;
  report["outlier_frac_after"] = after.outlier_fraction;
  write_text_file(out / "report.json", report.dump(2) + "\n");

  const SimilarityHistogram hist = similarity_histogram(after.matched_sims, 40, cfg.train.alpha);
  std::string csv = "bin_lo,bin_hi,count\n";
  char buf[128];
  for (const auto& row : hist.rows) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%zu\n", row.lo, row.hi, row.count);
    csv += buf;
  }
  write_text_file(out / "histogram.csv", csv);

  const auto edges = bands.effective_edges(ds.cfg.sample_rate);
  csv = "band_name,lo_hz,hi_hz,weight\n";
  for (std::size_t i = 0; i < after.band_weights.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.17g\n", band_label(bands, i).c_str(), edges[i],
                  edges[i + 1], after.band_weights[i]);
    csv += buf;
  }
  write_text_file(out / "bands.csv", csv);
  echo_config(out, config_bytes);

  std::printf("eval: top1=%.4f top5=%.4f outliers %.4f -> %.4f\n", after.retrieval.top_at(1),
              after.retrieval.top_at(5), before.outlier_fraction, after.outlier_fraction);
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

inline int cmd_gradcheck(std::size_t workers) {
  const auto suite = run_fd_suite(workers);
  bool all_pass = true;
  for (const auto& entry : suite) {
    std::printf("[%s] %-36s max_rel_err=%.3e (worst %s[%zu])\n",
                entry.report.pass ? "PASS" : "FAIL", entry.name.c_str(), entry.report.max_rel_err,
                entry.report.worst_param.c_str(), entry.report.worst_index);
    all_pass = all_pass && entry.report.pass;
  }
  return all_pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// bands
// ---------------------------------------------------------------------------

inline int cmd_bands(const RunConfig& cfg, const std::string& trial_path,
                     const std::string& out_dir, const std::string& preset,
                     const std::string& config_bytes, bool force) {
  const TensorData t = read_tensor_file(trial_path);
  if (t.dims.size() != 2) throw std::runtime_error("trial tensor must be C x T");
  EegTrial x(t.dims[0], t.dims[1], cfg.synth.sample_rate);
  x.data = t.values;

  prepare_out_dir(out_dir, force);
  const fs::path out(out_dir);

  if (!preset.empty()) {
    EegTrial filtered(0, 0, 0);
    if (preset == "low") filtered = bandpass_low(x);
    else if (preset == "mid") filtered = bandpass_mid(x);
    else if (preset == "high") filtered = bandpass_high(x);
    else throw std::invalid_argument("unknown band preset '" + preset + "' (low|mid|high)");
    write_tensor_file((out / ("filtered_" + preset + ".tf")).string(),
                      {filtered.channels, filtered.samples}, filtered.data.data());
  } else {
    BandSpec spec = cfg.bands;
    const SubBandSet bands = decompose_bands(x, spec);
    const auto m = selection_weights(std::vector<double>(spec.bands(), 0.0), cfg.train.tau);
    std::string csv = "band_name,lo_hz,hi_hz,weight\n";
    char buf[128];
    for (std::size_t i = 0; i < bands.bands.size(); ++i) {
      const std::string label = band_label(spec, i);
      write_tensor_file((out / ("band_" + label + ".tf")).string(), {x.channels, x.samples},
                        bands.bands[i].data());
      std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.17g\n", label.c_str(),
                    bands.effective_edges[i], bands.effective_edges[i + 1], m[i]);
      csv += buf;
    }
    write_text_file(out / "bands.csv", csv);

    double worst = 0.0;
    for (std::size_t p = 0; p < x.data.size(); ++p) {
      double sum = 0.0;
      for (const auto& b : bands.bands) sum += b[p];
      worst = std::max(worst, std::fabs(sum - x.data[p]));
    }
    std::printf("bands: %zu components, reconstruction max abs error %.3e\n", bands.bands.size(),
                worst);
  }
  echo_config(out, config_bytes);
  return 0;
}

}  // namespace caia
