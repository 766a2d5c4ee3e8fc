#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "caia/adam.hpp"
#include "caia/grad_check.hpp"
#include "caia/param_store.hpp"
#include "caia/rng.hpp"

using namespace caia;

TEST_CASE("accumulate_grad adds contributions in place", "[diffcore]") {
  ParamStore store;
  store.add("p", Tensor({2, 2}, 0.0));

  Tensor g({2, 2});
  g.values() = {1.0, -2.0, 3.0, 4.0};
  store.accumulate_grad("p", g);
  CHECK(store.grad("p").values() == g.values());
  CHECK(store.value("p")[0] == 0.0);  // values untouched

  Tensor neg({2, 2});
  for (std::size_t i = 0; i < 4; ++i) neg[i] = -g[i];
  store.accumulate_grad("p", neg);
  for (std::size_t i = 0; i < 4; ++i) CHECK(store.grad("p")[i] == 0.0);
}

TEST_CASE("accumulate_grad rejects bad names and shapes", "[diffcore]") {
  ParamStore store;
  store.add("p", Tensor({3}, 0.0));
  CHECK_THROWS_AS(store.accumulate_grad("q", Tensor({3}, 1.0)), std::invalid_argument);
  CHECK_THROWS_AS(store.accumulate_grad("p", Tensor({2}, 1.0)), std::invalid_argument);
  CHECK_THROWS_AS(store.add("p", Tensor({1}, 0.0)), std::invalid_argument);
  CHECK_THROWS_AS(store.value("missing"), std::invalid_argument);
}

TEST_CASE("adam_step matches the hand-evaluated bias-corrected update", "[diffcore]") {
  ParamStore store;
  store.add("p", Tensor::scalar(0.0));
  store.grad("p")[0] = 1.0;

  AdamConfig cfg;
  cfg.lr = 0.1;
  AdamState state;
  adam_step(store, state, cfg);

  // Hand evaluation of one step with g=1 from zero moments:
  const double m = 0.1 * 1.0;
  const double v = 0.001 * 1.0;
  const double m_hat = m / (1.0 - 0.9);
  const double v_hat = v / (1.0 - 0.999);
  const double expected = 0.0 - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8);

  CHECK(store.value("p")[0] == Catch::Approx(expected).margin(1e-15));
  CHECK(store.value("p")[0] == Catch::Approx(-0.1).margin(1e-6));
  CHECK(state.step_count == 1);
  CHECK(store.grad("p")[0] == 0.0);  // grads zeroed after the step
}

TEST_CASE("adam_step with zero grads leaves values unchanged", "[diffcore]") {
  ParamStore store;
  store.add("a", Tensor({3}, 1.5));
  store.add("b", Tensor({2, 2}, -0.25));
  AdamState state;
  adam_step(store, state, AdamConfig{});
  CHECK(state.step_count == 1);
  for (double x : store.value("a").values()) CHECK(x == 1.5);
  for (double x : store.value("b").values()) CHECK(x == -0.25);
}

TEST_CASE("adam_step with lr=0 is the identity on values", "[diffcore]") {
  ParamStore store;
  store.add("p", Tensor({4}, 2.0));
  store.grad("p").fill(3.0);
  AdamConfig cfg;
  cfg.lr = 0.0;
  AdamState state;
  adam_step(store, state, cfg);
  for (double x : store.value("p").values()) CHECK(x == 2.0);
}

TEST_CASE("identical seeds and grads give bit-identical trajectories", "[diffcore]") {
  auto run = [] {
    Rng rng(77);
    ParamStore store;
    Tensor init({5});
    for (auto& x : init.values()) x = rng.gaussian();
    store.add("p", init);
    AdamState state;
    AdamConfig cfg;
    cfg.lr = 0.05;
    for (int step = 0; step < 10; ++step) {
      Tensor g({5});
      for (auto& x : g.values()) x = rng.gaussian();
      store.accumulate_grad("p", g);
      adam_step(store, state, cfg);
    }
    return store.value("p").values();
  };
  const auto a = run();
  const auto b = run();
  CHECK(a == b);
}

TEST_CASE("non-trainable entries are not updated", "[diffcore]") {
  ParamStore store;
  store.add("frozen", Tensor({2}, 1.0), /*trainable=*/false);
  store.grad("frozen").fill(10.0);
  AdamState state;
  AdamConfig cfg;
  cfg.lr = 1.0;
  adam_step(store, state, cfg);
  for (double x : store.value("frozen").values()) CHECK(x == 1.0);
}

TEST_CASE("fd_gradient_check certifies x^2 and flags corruption", "[diffcore]") {
  ParamStore store;
  store.add("x", Tensor::scalar(3.0));
  auto f = [](const ParamStore& s) {
    const double x = s.value("x")[0];
    return x * x;
  };
  store.grad("x")[0] = 6.0;  // analytic d(x^2)/dx at 3

  auto report = fd_gradient_check(f, store, 1e-4, 1e-4);
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-6);

  store.grad("x")[0] = 12.0;  // deliberately corrupted (x2)
  auto bad = fd_gradient_check(f, store, 1e-4, 1e-4);
  CHECK_FALSE(bad.pass);
  CHECK(bad.worst_param == "x");
}

TEST_CASE("fd_gradient_check passes on a constant function", "[diffcore]") {
  ParamStore store;
  store.add("x", Tensor({3}, 1.0));
  auto f = [](const ParamStore&) { return 42.0; };
  // analytic grad stays zero
  auto report = fd_gradient_check(f, store, 1e-4, 1e-4);
  CHECK(report.pass);
  CHECK(report.max_rel_err == 0.0);
}

TEST_CASE("fd_gradient_check rejects bad h and non-finite f", "[diffcore]") {
  ParamStore store;
  store.add("x", Tensor::scalar(1.0));
  auto f = [](const ParamStore&) { return std::numeric_limits<double>::quiet_NaN(); };
  CHECK_THROWS_AS(fd_gradient_check(f, store, 0.0, 1e-4), std::invalid_argument);
  CHECK_THROWS_AS(fd_gradient_check(f, store, 1e-4, 1e-4), std::runtime_error);
}

TEST_CASE("fd_gradient_check is worker-count independent", "[diffcore]") {
  ParamStore store;
  Rng rng(5);
  Tensor init({8});
  for (auto& x : init.values()) x = rng.gaussian();
  store.add("x", init);

  auto f = [](const ParamStore& s) {
    double acc = 0.0;
    const auto& v = s.value("x").values();
    for (std::size_t i = 0; i < v.size(); ++i) acc += (i + 1) * v[i] * v[i];
    return acc;
  };
  for (std::size_t i = 0; i < 8; ++i) store.grad("x")[i] = 2.0 * (i + 1) * store.value("x")[i];

  auto r1 = fd_gradient_check(f, store, 1e-4, 1e-4, 1);
  auto r4 = fd_gradient_check(f, store, 1e-4, 1e-4, 4);
  CHECK(r1.pass);
  CHECK(r1.max_rel_err == r4.max_rel_err);
  CHECK(r1.worst_param == r4.worst_param);
}
