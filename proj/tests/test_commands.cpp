#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "caia/commands.hpp"

using namespace caia;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("caia_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& sub = "") const { return (path / sub).string(); }
};

RunConfig small_config() {
  RunConfig cfg;
  cfg.synth.n_classes = 5;
  cfg.synth.n_test_classes = 2;
  cfg.synth.imgs_per_class = 2;
  cfg.synth.trials_per_image = 2;
  cfg.synth.image_height = 32;
  cfg.synth.image_width = 32;
  cfg.synth.channels = 4;
  cfg.synth.samples = 64;
  cfg.train.encoder.feature_maps = 4;
  cfg.train.encoder.kernel_len = 7;
  cfg.train.encoder.embed_dim = 16;
  cfg.train.fusion.grid_h = 8;
  cfg.train.fusion.grid_w = 8;
  cfg.train.fusion.key_dim = 4;
  cfg.train.saliency_scales = {2, 4};
  cfg.train.batch_size = 8;
  cfg.train.steps = 4;
  cfg.train.lr = 0.01;
  return cfg;
}

std::string config_bytes(const RunConfig& cfg) { return run_config_to_json(cfg).dump(2) + "\n"; }

std::vector<std::pair<std::string, std::vector<unsigned char>>> dir_contents(const fs::path& dir) {
  std::vector<std::pair<std::string, std::vector<unsigned char>>> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) {
      out.emplace_back(fs::relative(entry.path(), dir).string(),
                       read_file_bytes(entry.path().string()));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("synth writes a dataset whose manifest validates on re-read", "[commands]") {
  TempDir tmp("synth");
  const RunConfig cfg = small_config();
  REQUIRE(cmd_synth(cfg, tmp.str("data"), config_bytes(cfg), false) == 0);

  const SynthDataset ds = load_dataset(tmp.str("data"));
  CHECK(ds.train.size() == 3 * 2 * 2);
  CHECK(ds.test.size() == 2 * 2);
  CHECK(ds.images.size() == 3 * 2 + 2);

  // Minimal config: two held-out candidates.
  std::size_t candidates = 0;
  for (const auto& im : ds.images) candidates += im.test_split ? 1 : 0;
  CHECK(candidates == 2);

  // Corruption is caught by the checksum.
  const fs::path victim = fs::path(tmp.str("data")) / "trials" / "cls000_img00_t00.tf";
  auto bytes = read_file_bytes(victim.string());
  bytes.back() ^= 0xFF;
  write_file_bytes(victim.string(), bytes);
  CHECK_THROWS_WITH(load_dataset(tmp.str("data")),
                    Catch::Matchers::ContainsSubstring("checksum mismatch"));
}

TEST_CASE("same seed produces byte-identical dataset trees", "[commands]") {
  TempDir tmp("synth_repro");
  const RunConfig cfg = small_config();
  REQUIRE(cmd_synth(cfg, tmp.str("a"), config_bytes(cfg), false) == 0);
  REQUIRE(cmd_synth(cfg, tmp.str("b"), config_bytes(cfg), false) == 0);
  const auto a = dir_contents(tmp.str("a"));
  const auto b = dir_contents(tmp.str("b"));
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second == b[i].second);
  }

  RunConfig other = cfg;
  other.synth.seed = 99;
  other.train.seed = 99;
  REQUIRE(cmd_synth(other, tmp.str("c"), config_bytes(other), false) == 0);
  CHECK(dir_contents(tmp.str("c")) != a);
}

TEST_CASE("train with zero steps writes initialized params and a bare log", "[commands]") {
  TempDir tmp("train0");
  RunConfig cfg = small_config();
  REQUIRE(cmd_synth(cfg, tmp.str("data"), config_bytes(cfg), false) == 0);
  cfg.train.steps = 0;
  REQUIRE(cmd_train(cfg, tmp.str("data"), tmp.str("run"), config_bytes(cfg), false) == 0);

  std::ifstream metrics(tmp.str("run") + "/metrics.csv");
  std::string line;
  std::getline(metrics, line);
  CHECK(line == kMetricsCsvHeader);
  CHECK_FALSE(std::getline(metrics, line));  // empty body

  // Params load back into a freshly initialized trainer.
  const SynthDataset ds = load_dataset(tmp.str("data"));
  Trainer trainer(ds, cfg.train);
  CHECK_NOTHROW(load_params(tmp.str("run"), trainer.params()));

  // The config echo matches the input byte for byte.
  const auto echoed = read_file_bytes(tmp.str("run") + "/config.json");
  const std::string expect = config_bytes(cfg);
  CHECK(std::string(echoed.begin(), echoed.end()) == expect);
}

TEST_CASE("train reruns reproduce the metrics CSV at any worker count", "[commands]") {
  TempDir tmp("train_repro");
  RunConfig cfg = small_config();
  REQUIRE(cmd_synth(cfg, tmp.str("data"), config_bytes(cfg), false) == 0);

  REQUIRE(cmd_train(cfg, tmp.str("data"), tmp.str("run1"), config_bytes(cfg), false) == 0);
  REQUIRE(cmd_train(cfg, tmp.str("data"), tmp.str("run2"), config_bytes(cfg), false) == 0);
  RunConfig cfg4 = cfg;
  cfg4.train.workers = 4;
  REQUIRE(cmd_train(cfg4, tmp.str("data"), tmp.str("run4"), config_bytes(cfg), false) == 0);

  const auto m1 = read_file_bytes(tmp.str("run1") + "/metrics.csv");
  const auto m2 = read_file_bytes(tmp.str("run2") + "/metrics.csv");
  const auto m4 = read_file_bytes(tmp.str("run4") + "/metrics.csv");
  CHECK(m1 == m2);
  CHECK(m1 == m4);

  // Parameters are byte-identical too.
  const auto p1 = read_file_bytes(tmp.str("run1") + "/params/eeg.projection.tf");
  const auto p4 = read_file_bytes(tmp.str("run4") + "/params/eeg.projection.tf");
  CHECK(p1 == p4);
}

TEST_CASE("eval emits a well-formed report", "[commands]") {
  TempDir tmp("eval");
  RunConfig cfg = small_config();
  cfg.train.steps = 12;
  REQUIRE(cmd_synth(cfg, tmp.str("data"), config_bytes(cfg), false) == 0);
  REQUIRE(cmd_train(cfg, tmp.str("data"), tmp.str("run"), config_bytes(cfg), false) == 0);
  REQUIRE(cmd_eval(cfg, tmp.str("run"), tmp.str("data"), tmp.str("eval"), config_bytes(cfg),
                   false) == 0);

  std::ifstream in(tmp.str("eval") + "/report.json");
  nlohmann::json report;
  in >> report;
  const double top1 = report.at("top1");
  const double top5 = report.at("top5");
  CHECK(top1 >= 0.0);
  CHECK(top1 <= top5);
  CHECK(top5 <= 1.0);
  CHECK(report.contains("outlier_frac_before"));
  CHECK(report.contains("outlier_frac_after"));

  double weight_sum = 0.0;
  for (const auto& item : report.at("band_weights").items()) {
    weight_sum += item.value().get<double>();
  }
  CHECK(std::fabs(weight_sum - 1.0) < 1e-6);

  // Histogram counts add up to the query count.
  std::ifstream hist(tmp.str("eval") + "/histogram.csv");
  std::string line;
  std::getline(hist, line);
  CHECK(line == "bin_lo,bin_hi,count");
  std::size_t total = 0;
  while (std::getline(hist, line)) {
    total += std::stoul(line.substr(line.rfind(',') + 1));
  }
  CHECK(total == 2);  // avg_trials folds each test image into one query

  // Band CSV header.
  std::ifstream bands(tmp.str("eval") + "/bands.csv");
  std::getline(bands, line);
  CHECK(line == "band_name,lo_hz,hi_hz,weight");
}

TEST_CASE("blur on a constant image is byte-exact and honors w0=1", "[commands]") {
  TempDir tmp("blur");
  // Constant P6 input.
  Image constant(24, 24, 0.0);
  for (std::size_t p = 0; p < constant.pixels(); ++p) {
    constant.data[p * 3 + 0] = 120 / 255.0;
    constant.data[p * 3 + 1] = 33 / 255.0;
    constant.data[p * 3 + 2] = 200 / 255.0;
  }
  const auto input = p6_bytes(constant);
  write_file_bytes(tmp.str("in.ppm"), input);

  RunConfig cfg = small_config();
  REQUIRE(cmd_blur(tmp.str("in.ppm"), tmp.str("out"), cfg, "", "all", config_bytes(cfg), false) ==
          0);
  CHECK(read_file_bytes(tmp.str("out") + "/xa.ppm") == input);
  CHECK(read_file_bytes(tmp.str("out") + "/xb.ppm") == input);
  CHECK(read_file_bytes(tmp.str("out") + "/fused.ppm") == input);

  // w0 = 1 makes the saliency path the pure Gaussian.
  Image textured(24, 24);
  Rng rng(3);
  for (double& v : textured.data) v = rng.uniform();
  write_file_bytes(tmp.str("tex.ppm"), p6_bytes(textured));
  RunConfig heavy = cfg;
  heavy.train.w0 = 1.0;
  REQUIRE(cmd_blur(tmp.str("tex.ppm"), tmp.str("heavy"), heavy, "", "saliency",
                   config_bytes(heavy), false) == 0);
  const Image loaded = read_p6(tmp.str("tex.ppm"));
  BlurConfig bc;
  bc.sigma = default_sigma(24, 24);
  bc.w0 = 1.0;
  REQUIRE(read_file_bytes(tmp.str("heavy") + "/xa.ppm") == p6_bytes(gaussian_blur(loaded, bc)));

  // Weight-map pixmaps track their tensors within one quantization step.
  const TensorData ws = read_tensor_file(tmp.str("out") + "/w_s.tf");
  const Plane wsq = read_p5(tmp.str("out") + "/w_s.pgm");
  for (std::size_t i = 0; i < ws.values.size(); ++i) {
    CHECK(std::fabs(ws.values[i] - wsq.data[i]) <= 1.0 / 255.0);
  }
}

TEST_CASE("commands refuse non-empty outputs without force and are idempotent with it",
          "[commands]") {
  TempDir tmp("force");
  const RunConfig cfg = small_config();
  REQUIRE(cmd_synth(cfg, tmp.str("data"), config_bytes(cfg), false) == 0);
  CHECK_THROWS_WITH(cmd_synth(cfg, tmp.str("data"), config_bytes(cfg), false),
                    Catch::Matchers::ContainsSubstring("not empty"));
  const auto before = dir_contents(tmp.str("data"));
  REQUIRE(cmd_synth(cfg, tmp.str("data"), config_bytes(cfg), true) == 0);
  CHECK(dir_contents(tmp.str("data")) == before);
}

TEST_CASE("bands command filters and decomposes trial tensors", "[commands]") {
  TempDir tmp("bands");
  RunConfig cfg = small_config();
  cfg.synth.samples = 128;
  REQUIRE(cmd_synth(cfg, tmp.str("data"), config_bytes(cfg), false) == 0);
  const std::string trial = tmp.str("data") + "/trials/cls000_img00_t00.tf";

  REQUIRE(cmd_bands(cfg, trial, tmp.str("dec"), "", config_bytes(cfg), false) == 0);
  for (const char* band : {"delta", "theta", "alpha", "beta", "gamma"}) {
    CHECK(fs::exists(fs::path(tmp.str("dec")) / ("band_" + std::string(band) + ".tf")));
  }
  // The components sum back to the (32-bit quantized) trial.
  const TensorData original = read_tensor_file(trial);
  std::vector<double> sum(original.values.size(), 0.0);
  for (const char* band : {"delta", "theta", "alpha", "beta", "gamma"}) {
    const TensorData b =
        read_tensor_file(tmp.str("dec") + "/band_" + std::string(band) + ".tf");
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += b.values[i];
  }
  for (std::size_t i = 0; i < sum.size(); ++i) {
    CHECK(sum[i] == Catch::Approx(original.values[i]).margin(1e-5));
  }

  REQUIRE(cmd_bands(cfg, trial, tmp.str("mid"), "mid", config_bytes(cfg), false) == 0);
  CHECK(fs::exists(fs::path(tmp.str("mid")) / "filtered_mid.tf"));
}
