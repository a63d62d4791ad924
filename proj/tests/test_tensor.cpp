#include <doctest.h>

#include "lfr/rng.hpp"
#include "lfr/tensor.hpp"
#include "support/gradcheck.hpp"
#include "support/oracle.hpp"

using namespace lfr;

TEST_CASE("matmul identity and hand arithmetic") {
  Tensor i2 = Tensor::eye(2);
  Tensor b = Tensor::from_data({2, 2}, {3, 4, 5, 6});
  Tensor c = matmul(i2, b);
  CHECK(c.values()[0] == 3.0f);
  CHECK(c.values()[1] == 4.0f);
  CHECK(c.values()[2] == 5.0f);
  CHECK(c.values()[3] == 6.0f);

  Tensor row = Tensor::from_data({1, 2}, {1, 2});
  Tensor col = Tensor::from_data({2, 1}, {3, 4});
  CHECK(matmul(row, col).item() == 11.0f);
}

TEST_CASE("matmul shape error names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2 x 3]"), ShapeError);
  try {
    matmul(a, b);
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("[4 x 2]") != std::string::npos);
  }
}

TEST_CASE("matmul backward matches finite differences on 5x7 by 7x3") {
  CounterRng rng(2024);
  Tensor a = gradcheck::random_tensor({5, 7}, rng, 1.0f, true);
  Tensor b = gradcheck::random_tensor({7, 3}, rng, 1.0f, true);

  GradTape tape;
  {
    TapeScope scope(tape);
    Tensor loss = gradcheck::sum_of_squares(matmul(a, b));
    a.zero_grad();
    b.zero_grad();
    backward(loss);
  }

  oracle::Mat ar = oracle::Mat::from_tensor(a);
  oracle::Mat br = oracle::Mat::from_tensor(b);
  auto f = [&]() {
    const oracle::Mat c = oracle::matmul(ar, br);
    double s = 0.0;
    for (double v : c.v) s += v * v;
    return s;
  };
  CHECK(oracle::max_rel_err(a.grad(), oracle::fd_gradient(ar.v, f)) < 1e-4);
  CHECK(oracle::max_rel_err(b.grad(), oracle::fd_gradient(br.v, f)) < 1e-4);
}

TEST_CASE("relu forward and subgradient") {
  Tensor x = Tensor::from_data({3}, {-1, 0, 2});
  Tensor y = relu(x);
  CHECK(y.values()[0] == 0.0f);
  CHECK(y.values()[1] == 0.0f);
  CHECK(y.values()[2] == 2.0f);

  Tensor pos = Tensor::from_data({3}, {1, 2, 3});
  Tensor ypos = relu(pos);
  for (std::size_t i = 0; i < 3; ++i) CHECK(ypos.values()[i] == pos.values()[i]);

  Tensor g = Tensor::from_data({2}, {-1, 2}, true);
  GradTape tape;
  {
    TapeScope scope(tape);
    Tensor loss = sum(relu(g));  // upstream gradient of ones
    g.zero_grad();
    backward(loss);
  }
  CHECK(g.grad()[0] == 0.0f);
  CHECK(g.grad()[1] == 1.0f);
}

TEST_CASE("row_l2_normalize basics") {
  Tensor t = Tensor::from_data({1, 2}, {3, 4});
  Tensor n = row_l2_normalize(t);
  CHECK(n.values()[0] == doctest::Approx(0.6).epsilon(1e-6));
  CHECK(n.values()[1] == doctest::Approx(0.8).epsilon(1e-6));

  Tensor z = Tensor::zeros({1, 3});
  Tensor nz = row_l2_normalize(z, 1e-12f);
  for (float v : nz.values()) CHECK(v == 0.0f);

  CounterRng rng(5);
  Tensor r = gradcheck::random_tensor({4, 8}, rng);
  Tensor nr = row_l2_normalize(r);
  for (std::int64_t i = 0; i < 4; ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < 8; ++j) {
      const double v = nr.at(i, j);
      s += v * v;
    }
    CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("row_l2_normalize backward matches finite differences") {
  // deviation from a fixed random target; plain sum-of-squares is constant
  // on the unit sphere and would only compare noise
  CounterRng rng(77);
  Tensor x = gradcheck::random_tensor({3, 5}, rng, 1.0f, true);
  Tensor target = gradcheck::random_tensor({3, 5}, rng);
  Tensor ones = Tensor::full({3, 5}, 1.0f);
  GradTape tape;
  {
    TapeScope scope(tape);
    Tensor loss = weighted_squared_deviation(row_l2_normalize(x), target, ones);
    x.zero_grad();
    backward(loss);
  }
  oracle::Mat xr = oracle::Mat::from_tensor(x);
  oracle::Mat tr = oracle::Mat::from_tensor(target);
  auto f = [&]() {
    const oracle::Mat n = oracle::row_l2_normalize(xr, 1e-12);
    double s = 0.0;
    for (std::size_t i = 0; i < n.v.size(); ++i) {
      const double d = n.v[i] - tr.v[i];
      s += d * d;
    }
    return s;
  };
  CHECK(oracle::max_rel_err(x.grad(), oracle::fd_gradient(xr.v, f)) < 1e-4);
}

TEST_CASE("backward of sum(relu(Wx)) matches finite differences") {
  CounterRng rng(31);
  Tensor w = gradcheck::random_tensor({4, 6}, rng, 0.7f, true);
  Tensor x = gradcheck::random_tensor({3, 4}, rng);
  GradTape tape;
  {
    TapeScope scope(tape);
    Tensor loss = sum(relu(matmul(x, w)));
    w.zero_grad();
    backward(loss);
  }
  oracle::Mat wr = oracle::Mat::from_tensor(w);
  oracle::Mat xr = oracle::Mat::from_tensor(x);
  auto f = [&]() {
    const oracle::Mat h = oracle::relu(oracle::matmul(xr, wr));
    double s = 0.0;
    for (double v : h.v) s += v;
    return s;
  };
  CHECK(oracle::max_rel_err(w.grad(), oracle::fd_gradient(wr.v, f)) < 1e-4);
}

TEST_CASE("loss independent of a parameter leaves its grad exactly zero") {
  Tensor used = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
  Tensor unused = Tensor::from_data({2, 2}, {5, 6, 7, 8}, true);
  GradTape tape;
  {
    TapeScope scope(tape);
    Tensor loss = sum(used);
    used.zero_grad();
    unused.zero_grad();
    backward(loss);
  }
  for (float g : unused.grad()) CHECK(g == 0.0f);
  for (float g : used.grad()) CHECK(g == 1.0f);
}

TEST_CASE("backward contract violations") {
  Tensor x = Tensor::from_data({2}, {1, 2}, true);

  SUBCASE("two backward calls without a new forward") {
    GradTape tape;
    TapeScope scope(tape);
    Tensor loss = sum(x);
    backward(loss);
    CHECK_THROWS_AS(backward(loss), ContractError);
  }
  SUBCASE("non-scalar loss") {
    GradTape tape;
    TapeScope scope(tape);
    Tensor y = relu(x);
    CHECK_THROWS_AS(backward(y), ContractError);
  }
  SUBCASE("no active tape") {
    Tensor loss = sum(x);
    CHECK_THROWS_AS(backward(loss), ContractError);
  }
}

TEST_CASE("backward is linear in the loss scaling") {
  CounterRng rng(12);
  Tensor w = gradcheck::random_tensor({3, 4}, rng, 1.0f, true);
  Tensor x = gradcheck::random_tensor({2, 3}, rng);

  auto run = [&](float alpha) {
    GradTape tape;
    TapeScope scope(tape);
    Tensor loss = scale(sum(relu(matmul(x, w))), alpha);
    w.zero_grad();
    backward(loss);
    return std::vector<float>(w.grad().begin(), w.grad().end());
  };
  auto g1 = run(1.0f);
  auto g3 = run(3.0f);
  for (std::size_t i = 0; i < g1.size(); ++i) {
    CHECK(g3[i] == doctest::Approx(3.0f * g1[i]).epsilon(1e-6));
  }
}

TEST_CASE("forward results are bitwise deterministic") {
  CounterRng rng(9);
  Tensor a = gradcheck::random_tensor({6, 7}, rng);
  Tensor b = gradcheck::random_tensor({7, 5}, rng);
  Tensor c1 = matmul(a, b);
  Tensor c2 = matmul(a, b);
  for (std::size_t i = 0; i < c1.values().size(); ++i) CHECK(c1.values()[i] == c2.values()[i]);
}

TEST_CASE("matmul rows are bitwise batch independent") {
  CounterRng rng(14);
  Tensor a = gradcheck::random_tensor({8, 5}, rng);
  Tensor b = gradcheck::random_tensor({5, 6}, rng);
  Tensor full = matmul(a, b);
  for (std::int64_t r = 0; r < 8; ++r) {
    const std::int64_t idx[] = {r};
    Tensor single = matmul(take_rows(a, idx), b);
    for (std::int64_t j = 0; j < 6; ++j) CHECK(single.at(0, j) == full.at(r, j));
  }
}

TEST_CASE("f64-accumulated matmul agrees with f32 and is deterministic") {
  CounterRng rng(21);
  Tensor a = gradcheck::random_tensor({4, 30}, rng);
  Tensor b = gradcheck::random_tensor({30, 4}, rng);
  Tensor c32 = matmul(a, b, MatmulAccum::f32);
  Tensor c64 = matmul(a, b, MatmulAccum::f64);
  for (std::size_t i = 0; i < c32.values().size(); ++i) {
    CHECK(c32.values()[i] == doctest::Approx(c64.values()[i]).epsilon(1e-5));
  }
  Tensor again = matmul(a, b, MatmulAccum::f64);
  for (std::size_t i = 0; i < c64.values().size(); ++i) CHECK(c64.values()[i] == again.values()[i]);
}

TEST_CASE("add_n accumulates scalars in float64") {
  std::vector<Tensor> terms;
  for (int i = 0; i < 100; ++i) terms.push_back(Tensor::scalar(0.1f));
  const float total = add_n(terms).item();
  double ref = 0.0;
  for (int i = 0; i < 100; ++i) ref += static_cast<double>(0.1f);
  CHECK(total == static_cast<float>(ref));
}

TEST_CASE("weighted_squared_deviation forward and backward") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
  Tensor target = Tensor::from_data({2, 2}, {0, 2, 3, 1});
  Tensor weights = Tensor::from_data({2, 2}, {1, 1, 0.5f, 2});
  GradTape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = weighted_squared_deviation(a, target, weights);
    a.zero_grad();
    backward(loss);
  }
  // 1*(1-0)^2 + 1*0 + 0.5*0 + 2*(4-1)^2 = 1 + 18
  CHECK(loss.item() == doctest::Approx(19.0f));
  CHECK(a.grad()[0] == doctest::Approx(2.0f));   // 2*1*(1-0)
  CHECK(a.grad()[1] == doctest::Approx(0.0f));
  CHECK(a.grad()[2] == doctest::Approx(0.0f));
  CHECK(a.grad()[3] == doctest::Approx(12.0f));  // 2*2*(4-1)
}

TEST_CASE("forward pipelines keep every entry finite on bounded inputs") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CounterRng rng(seed);
    Tensor x = gradcheck::random_tensor({6, 5}, rng, 3.0f);
    Tensor w1 = gradcheck::random_tensor({5, 8}, rng, 2.0f);
    Tensor b1 = gradcheck::random_tensor({8}, rng);
    Tensor w2 = gradcheck::random_tensor({8, 4}, rng, 2.0f);
    Tensor h = relu(add_rowvec(matmul(x, w1), b1));
    Tensor out = row_l2_normalize(matmul(h, w2));
    CHECK(all_finite(h));
    CHECK(all_finite(out));
    CHECK(all_finite(sum(out)));
  }
}

TEST_CASE("take_rows copies the requested rows") {
  Tensor a = Tensor::from_data({3, 2}, {0, 1, 10, 11, 20, 21});
  const std::int64_t idx[] = {2, 0};
  Tensor picked = take_rows(a, idx);
  CHECK(picked.at(0, 0) == 20.0f);
  CHECK(picked.at(0, 1) == 21.0f);
  CHECK(picked.at(1, 0) == 0.0f);
  CHECK(picked.at(1, 1) == 1.0f);
}
