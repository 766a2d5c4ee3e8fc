#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "caia/pnm.hpp"
#include "caia/rng.hpp"
#include "caia/run_config.hpp"
#include "caia/tensor_file.hpp"

using namespace caia;

TEST_CASE("tensor files round-trip at 32-bit precision", "[io]") {
  Rng rng(1);
  std::vector<double> values(60);
  for (double& v : values) v = rng.gaussian() * 100.0;
  const std::vector<std::size_t> dims = {3, 4, 5};

  const auto bytes = tensor_file_bytes(dims, values.data());
  const TensorData back = parse_tensor_file(bytes);
  REQUIRE(back.dims == dims);
  for (std::size_t i = 0; i < values.size(); ++i) {
    CHECK(back.values[i] == static_cast<double>(static_cast<float>(values[i])));
  }

  // Writing what was read reproduces the bytes exactly.
  const auto again = tensor_file_bytes(back.dims, back.values.data());
  CHECK(again == bytes);
}

TEST_CASE("malformed tensor files are rejected with distinct errors", "[io]") {
  std::vector<double> v = {1.0, 2.0};
  auto bytes = tensor_file_bytes({2}, v.data());

  auto corrupted = bytes;
  corrupted[0] = 'X';
  CHECK_THROWS_WITH(parse_tensor_file(corrupted), Catch::Matchers::ContainsSubstring("bad magic"));

  corrupted = bytes;
  corrupted[4] = 9;  // version
  CHECK_THROWS_WITH(parse_tensor_file(corrupted),
                    Catch::Matchers::ContainsSubstring("unsupported format version"));

  corrupted = bytes;
  corrupted[8] = 7;  // dtype
  CHECK_THROWS_WITH(parse_tensor_file(corrupted),
                    Catch::Matchers::ContainsSubstring("unsupported dtype"));

  corrupted = bytes;
  corrupted.pop_back();
  CHECK_THROWS_WITH(parse_tensor_file(corrupted),
                    Catch::Matchers::ContainsSubstring("payload size mismatch"));
}

TEST_CASE("P6 and P5 round-trip bit-exactly", "[io]") {
  Rng rng(7);
  Image img(9, 13);
  for (double& v : img.data) v = rng.uniform();
  const auto bytes = p6_bytes(img);
  const Image back = parse_p6(bytes);
  CHECK(p6_bytes(back) == bytes);  // quantized values are fixed points

  Plane plane(5, 6);
  for (double& v : plane.data) v = rng.uniform();
  const auto pbytes = p5_bytes(plane);
  const Plane pback = parse_p5(pbytes);
  CHECK(p5_bytes(pback) == pbytes);
}

TEST_CASE("quantization rounds half up and clamps", "[io]") {
  Plane plane(1, 4);
  plane.data = {0.5 / 255.0, 1.49 / 255.0, -0.2, 1.7};
  const auto bytes = p5_bytes(plane);
  const std::size_t off = bytes.size() - 4;
  CHECK(bytes[off + 0] == 1);    // exactly half rounds up
  CHECK(bytes[off + 1] == 1);
  CHECK(bytes[off + 2] == 0);    // clamped below
  CHECK(bytes[off + 3] == 255);  // clamped above
}

TEST_CASE("pixmap headers tolerate comments and whitespace", "[io]") {
  const std::string header = "P5\n# a comment\n 4\t2 #inline\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<unsigned char>(10 * i));
  const Plane p = parse_p5(bytes);
  CHECK(p.width == 4);
  CHECK(p.height == 2);
  CHECK(p.at(1, 3) == Catch::Approx(70.0 / 255.0));

  const std::string bad = "P5\n4 2\n65535\n";
  std::vector<unsigned char> bad_bytes(bad.begin(), bad.end());
  CHECK_THROWS_AS(parse_p5(bad_bytes), std::runtime_error);
}

TEST_CASE("grayscale pixmaps track tensor values within one step", "[io]") {
  Rng rng(9);
  Plane plane(8, 8);
  for (double& v : plane.data) v = rng.uniform();
  const Plane quantized = parse_p5(p5_bytes(plane));
  for (std::size_t i = 0; i < plane.data.size(); ++i) {
    CHECK(std::fabs(quantized.data[i] - plane.data[i]) <= 1.0 / 255.0);
  }
}

TEST_CASE("checksums are content-stable", "[io]") {
  const std::vector<unsigned char> a = {1, 2, 3};
  const std::vector<unsigned char> b = {1, 2, 4};
  CHECK(fnv1a_hex(a) == fnv1a_hex(a));
  CHECK(fnv1a_hex(a) != fnv1a_hex(b));
  CHECK(fnv1a_hex(a).size() == 16);
}

TEST_CASE("run config rejects unknown keys", "[io]") {
  nlohmann::json j = run_config_to_json(RunConfig{});
  CHECK_NOTHROW(parse_run_config(j));

  nlohmann::json typo = j;
  typo["train"]["stepz"] = 100;
  CHECK_THROWS_WITH(parse_run_config(typo),
                    Catch::Matchers::ContainsSubstring("unknown key 'train.stepz'"));

  nlohmann::json top = j;
  top["sed"] = 1;
  CHECK_THROWS_WITH(parse_run_config(top), Catch::Matchers::ContainsSubstring("unknown key '.sed'"));
}

TEST_CASE("run config survives a serialization round trip", "[io]") {
  RunConfig cfg;
  cfg.train.steps = 123;
  cfg.train.lr = 0.0075;
  cfg.train.fusion_mode = FusionMode::learnable_mask;
  cfg.train.use_bound = false;
  cfg.synth.n_classes = 11;
  cfg.synth.noise_scale = 0.25;

  const RunConfig back = parse_run_config(run_config_to_json(cfg));
  CHECK(back.train.steps == 123);
  CHECK(back.train.lr == 0.0075);
  CHECK(back.train.fusion_mode == FusionMode::learnable_mask);
  CHECK_FALSE(back.train.use_bound);
  CHECK(back.synth.n_classes == 11);
  CHECK(back.synth.noise_scale == 0.25);

  // Partial documents keep defaults for everything unspecified.
  const RunConfig partial = parse_run_config(nlohmann::json{{"train", {{"steps", 7}}}});
  CHECK(partial.train.steps == 7);
  CHECK(partial.train.w1 == 0.01);
  CHECK(partial.train.w2 == 0.01);
  CHECK(partial.train.w0 == 0.5);
  CHECK(partial.train.blur_decay == 3.0);
  CHECK(partial.train.alpha == 0.05);
}
