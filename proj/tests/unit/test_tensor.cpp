// Copyright 2026 The vidmdl Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "doctest.h"
#include "support/oracles.hpp"
#include "vidmdl/error.hpp"
#include "vidmdl/ops.hpp"
#include "vidmdl/tape.hpp"

using namespace vidmdl;

TEST_CASE("add of ones and twos is threes and records one entry") {
  Tape tape;
  Tensor a = Tensor::full({2, 3}, 1.0, true);
  Tensor b = Tensor::full({2, 3}, 2.0, true);
  Tensor c = add(tape, a, b);
  CHECK(c.shape() == Shape{2, 3});
  for (double v : c.data()) CHECK(v == 3.0);
  CHECK(tape.size() == 1);
}

TEST_CASE("shape mismatch names the op and the axis") {
  Tape tape;
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 4});
  try {
    add(tape, a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("axes 1") != std::string::npos);
  }
  CHECK_THROWS_AS(mul(tape, Tensor::zeros({3}), Tensor::zeros({1, 3})), DimensionError);
}

TEST_CASE("ops on constants are not recorded") {
  Tape tape;
  Tensor a = Tensor::full({4}, 1.0);
  relu(tape, add(tape, a, a));
  CHECK(tape.size() == 0);
}

TEST_CASE("tensor handles share storage and clone does not") {
  Tensor a = Tensor::full({3}, 1.0);
  Tensor alias = a;
  Tensor copy = a.clone();
  alias.data()[0] = 5.0;
  CHECK(a.data()[0] == 5.0);
  CHECK(copy.data()[0] == 1.0);
  CHECK(a.same(alias));
  CHECK_FALSE(a.same(copy));
}

TEST_CASE("from rejects a value count that does not match the shape") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
}

TEST_CASE("backward of sum(a*b) gives b and a") {
  std::mt19937_64 rng(1);
  Tape tape;
  Tensor a = oracle::random_tensor({3, 4}, rng, -1, 1, true);
  Tensor b = oracle::random_tensor({3, 4}, rng, -1, 1, true);
  Tensor loss = sum(tape, mul(tape, a, b));
  tape.backward(loss);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(a.grad()[i] == b.data()[i]);
    CHECK(b.grad()[i] == a.data()[i]);
  }
  CHECK(tape.size() == 0);
}

TEST_CASE("backward accumulates into existing gradients") {
  Tensor x = Tensor::full({2}, 3.0, true);
  for (int k = 0; k < 2; ++k) {
    Tape tape;
    tape.backward(sum(tape, scale(tape, x, 2.0)));
  }
  CHECK(x.grad()[0] == 4.0);
  CHECK(x.grad()[1] == 4.0);
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("a tensor used twice receives both contributions") {
  Tensor x = Tensor::full({1}, 3.0, true);
  Tape tape;
  tape.backward(sum(tape, mul(tape, x, x)));
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("backward is deterministic") {
  std::mt19937_64 rng(3);
  Tensor base = oracle::random_tensor({2, 5}, rng);
  auto run = [&] {
    Tensor x = base.clone();
    x.set_requires_grad(true);
    Tape tape;
    tape.backward(sum(tape, relu(tape, mul(tape, sub(tape, x, scale(tape, x, 0.3)), x))));
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };
  CHECK(run() == run());
}

TEST_CASE("backward rejects a non-scalar or foreign loss") {
  Tape tape;
  Tensor x = Tensor::full({3}, 1.0, true);
  Tensor y = scale(tape, x, 2.0);
  CHECK_THROWS_AS(tape.backward(y), ContractError);
  Tape other;
  Tensor s = sum(other, x);
  CHECK_THROWS_AS(tape.backward(s), ContractError);
}

TEST_CASE("non-finite forward values raise NumericError when checking is on") {
  Tape tape;
  tape.set_check_finite(true);
  Tensor x = Tensor::full({2}, std::numeric_limits<double>::infinity(), true);
  CHECK_THROWS_AS(scale(tape, x, 1.0), NumericError);
}

TEST_CASE("a non-recording tape computes values without entries") {
  Tape tape;
  tape.set_recording(false);
  Tensor x = Tensor::full({2}, 1.5, true);
  Tensor y = scale(tape, x, 2.0);
  CHECK(y.data()[0] == 3.0);
  CHECK(tape.size() == 0);
}

TEST_CASE("weighted_sum gradient is the weight vector") {
  Tensor x = Tensor::from({3}, {1.0, 2.0, 3.0}, true);
  Tape tape;
  Tensor s = weighted_sum(tape, x, {0.5, -1.0, 2.0});
  CHECK(s.item() == doctest::Approx(0.5 - 2.0 + 6.0));
  tape.backward(s);
  CHECK(x.grad()[0] == 0.5);
  CHECK(x.grad()[1] == -1.0);
  CHECK(x.grad()[2] == 2.0);
}
