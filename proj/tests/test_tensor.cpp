#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "hiermatch/rng.hpp"
#include "hiermatch/tensor.hpp"
#include "support/finite_diff.hpp"

using namespace hiermatch;
using testsupport::central_differences;
using testsupport::max_rel_error;

namespace {

// Independent triple-loop matmul oracle (dot-product accumulation).
std::vector<double> naive_matmul(const std::vector<double>& a,
                                 const std::vector<double>& b, std::size_t m,
                                 std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk)
        acc += a[i * k + kk] * b[kk * n + j];
      c[i * n + j] = acc;
    }
  return c;
}

std::vector<double> random_values(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

Tensor identity_matrix(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return Tensor::from_values(n, n, std::move(v));
}

}  // namespace

TEST_CASE("matmul identity cases") {
  Rng rng(7);
  const Tensor x = Tensor::from_values(3, 4, random_values(12, rng));
  const Tensor ix = matmul(identity_matrix(3), x);
  for (std::size_t i = 0; i < 12; ++i)
    CHECK(ix.values()[i] == x.values()[i]);

  const Tensor a = Tensor::from_values(2, 2, {1, 2, 3, 4});
  const Tensor ai = matmul(a, identity_matrix(2));
  CHECK(ai.values()[0] == 1.0);
  CHECK(ai.values()[1] == 2.0);
  CHECK(ai.values()[2] == 3.0);
  CHECK(ai.values()[3] == 4.0);
}

TEST_CASE("matmul matches the naive triple-loop oracle exactly") {
  Rng rng(11);
  const auto av = random_values(4 * 3, rng);
  const auto bv = random_values(3 * 2, rng);
  const auto expected = naive_matmul(av, bv, 4, 3, 2);
  const Tensor c = matmul(Tensor::from_values(4, 3, av),
                          Tensor::from_values(3, 2, bv));
  for (std::size_t i = 0; i < expected.size(); ++i)
    CHECK(c.values()[i] == expected[i]);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  const Tensor a = Tensor::zeros(2, 3);
  const Tensor b = Tensor::zeros(2, 3);
  CHECK_THROWS_AS((void)matmul(a, b), ShapeError);
}

TEST_CASE("matmul_nt equals matmul with an explicit transpose") {
  Rng rng(13);
  const Tensor a = Tensor::from_values(3, 5, random_values(15, rng));
  const Tensor b = Tensor::from_values(4, 5, random_values(20, rng));
  const Tensor direct = matmul_nt(a, b);
  const Tensor via_t = matmul(a, transpose(b));
  for (std::size_t i = 0; i < direct.size(); ++i)
    CHECK(direct.values()[i] == doctest::Approx(via_t.values()[i]).epsilon(1e-15));
}

TEST_CASE("softmax rows") {
  SUBCASE("uniform on equal inputs") {
    const Tensor s = softmax_rows(Tensor::row_vector({0, 0, 0}));
    for (std::size_t i = 0; i < 3; ++i)
      CHECK(s.values()[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("no overflow on large inputs") {
    const Tensor s = softmax_rows(Tensor::row_vector({1000.0, 0.0}));
    CHECK(std::isfinite(s.values()[0]));
    CHECK(s.values()[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.values()[1] == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("values frozen from an arbitrary-precision evaluation") {
    const Tensor s = softmax_rows(Tensor::row_vector({1, 2, 3}));
    CHECK(std::abs(s.values()[0] - 0.09003057317038046) < 1e-5);
    CHECK(std::abs(s.values()[1] - 0.24472847105479765) < 1e-5);
    CHECK(std::abs(s.values()[2] - 0.66524095577482189) < 1e-5);
  }
  SUBCASE("rows sum to one") {
    Rng rng(3);
    const Tensor s = softmax_rows(Tensor::from_values(5, 7, random_values(35, rng)));
    for (std::size_t r = 0; r < 5; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 7; ++c) total += s.value(r, c);
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("elementwise basics") {
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == doctest::Approx(0.5));
  Rng rng(5);
  const Tensor v = Tensor::row_vector(random_values(6, rng));
  CHECK(sq_euclidean(v, v).item() == 0.0);
  CHECK_THROWS_AS((void)add(Tensor::zeros(2, 2), Tensor::zeros(2, 3)),
                  ShapeError);
}

TEST_CASE("relu backward passes zero gradient at negative inputs") {
  const Tensor x = Tensor::row_vector({-1.0, 2.0}, true);
  backward(sum(relu(x)));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("backward of sum is all ones") {
  const Tensor x = Tensor::from_values(2, 3, {1, 2, 3, 4, 5, 6}, true);
  backward(sum(x));
  for (std::size_t i = 0; i < 6; ++i) CHECK(x.grad()[i] == 1.0);
}

TEST_CASE("backward rejects non-scalar roots") {
  const Tensor x = Tensor::from_values(1, 2, {1, 2}, true);
  CHECK_THROWS_AS(backward(relu(x)), ShapeError);
}

TEST_CASE("composite gradient matches central finite differences") {
  Rng rng(17);
  Tensor w = Tensor::from_values(4, 3, random_values(12, rng), true);
  Tensor x = Tensor::from_values(3, 2, random_values(6, rng), true);
  const auto loss_fn = [&]() { return sum(relu(matmul(w, x))); };

  w.zero_grad();
  x.zero_grad();
  backward(loss_fn());
  const std::vector<double> gw(w.grad().begin(), w.grad().end());
  const std::vector<double> gx(x.grad().begin(), x.grad().end());

  const auto value_fn = [&]() { return loss_fn().item(); };
  CHECK(max_rel_error(gw, central_differences(w, value_fn)) < 1e-4);
  CHECK(max_rel_error(gx, central_differences(x, value_fn)) < 1e-4);
}

TEST_CASE("two disjoint graphs do not share gradients") {
  const Tensor x = Tensor::row_vector({1.0, 2.0}, true);
  const Tensor y = Tensor::row_vector({3.0, 4.0}, true);
  backward(sum(x));
  CHECK(x.grad()[0] == 1.0);
  CHECK(y.grad()[0] == 0.0);
  CHECK(y.grad()[1] == 0.0);
}

TEST_CASE("backward is linear: grad(a*f + b*g) = a*grad(f) + b*grad(g)") {
  Rng rng(23);
  const double alpha = 0.7, beta = -1.3;
  for (int trial = 0; trial < 5; ++trial) {
    Tensor x = Tensor::from_values(2, 2, random_values(4, rng), true);
    const auto f = [&]() { return sum(hadamard(x, x)); };
    const auto g = [&]() { return sq_euclidean(x, Tensor::zeros(2, 2)); };

    x.zero_grad();
    backward(f());
    const std::vector<double> gf(x.grad().begin(), x.grad().end());
    x.zero_grad();
    backward(g());
    const std::vector<double> gg(x.grad().begin(), x.grad().end());
    x.zero_grad();
    backward(add(scalar_mul(f(), alpha), scalar_mul(g(), beta)));
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(x.grad()[i] ==
            doctest::Approx(alpha * gf[i] + beta * gg[i]).epsilon(1e-12));
  }
}

TEST_CASE("gradients accumulate additively across backward calls") {
  const Tensor x = Tensor::row_vector({2.0}, true);
  backward(sum(x));
  backward(sum(x));
  CHECK(x.grad()[0] == 2.0);
  Tensor y = x;
  y.zero_grad();
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("identical seeds give bit-identical values and gradients") {
  const auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor w = Tensor::from_values(3, 3, random_values(9, rng), true);
    Tensor x = Tensor::from_values(3, 3, random_values(9, rng));
    const Tensor loss = sum(sigmoid(matmul(w, x)));
    backward(loss);
    std::vector<double> out(w.grad().begin(), w.grad().end());
    out.push_back(loss.item());
    return out;
  };
  const auto a = run(99), b = run(99);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("computation record is topological and visits each op once") {
  Rng rng(31);
  const Tensor w = Tensor::from_values(3, 3, random_values(9, rng), true);
  const Tensor x = Tensor::from_values(3, 2, random_values(6, rng));
  const Tensor h = relu(matmul(w, x));
  const Tensor loss = sum(hadamard(h, h));  // h fans out twice
  const ComputationRecord record = record_computation(loss);

  std::set<std::uint64_t> seen;
  for (const auto& op : record.ops) {
    for (const auto input : op.input_ids)
      CHECK(seen.count(input) == 1);  // inputs appear before their consumers
    CHECK(seen.insert(op.node_id).second);  // each op exactly once
  }
  CHECK(record.ops.back().node_id == loss.id());
}

TEST_CASE("row bias broadcast and its backward") {
  const Tensor m = Tensor::from_values(2, 3, {1, 2, 3, 4, 5, 6});
  const Tensor b = Tensor::row_vector({10, 20, 30}, true);
  const Tensor out = add_row_bias(m, b);
  CHECK(out.value(0, 0) == 11.0);
  CHECK(out.value(1, 2) == 36.0);
  backward(sum(out));
  for (std::size_t j = 0; j < 3; ++j) CHECK(b.grad()[j] == 2.0);
}

TEST_CASE("select_row, merge_rows and flatten_upper_triangle round out") {
  const Tensor m =
      Tensor::from_values(3, 2, {1, 2, 3, 4, 5, 6}, true);
  const Tensor row1 = select_row(m, 1);
  CHECK(row1.values()[0] == 3.0);
  CHECK(row1.values()[1] == 4.0);

  const Tensor fused = Tensor::row_vector({9.0, 9.0});
  const Tensor merged = merge_rows(m, fused, 0, 2);
  REQUIRE(merged.rows() == 2);
  CHECK(merged.value(0, 0) == 9.0);
  CHECK(merged.value(1, 0) == 3.0);  // untouched row passes through

  const Tensor sq = Tensor::from_values(3, 3, {0, 1, 2, 9, 0, 3, 9, 9, 0});
  const Tensor flat = flatten_upper_triangle(sq);
  REQUIRE(flat.cols() == 3);
  CHECK(flat.values()[0] == 1.0);
  CHECK(flat.values()[1] == 2.0);
  CHECK(flat.values()[2] == 3.0);
}

TEST_CASE("straight_through forwards hard values and backprops to soft") {
  Tensor logits = Tensor::row_vector({0.1, 0.9, 0.3}, true);
  const Tensor soft = softmax_rows(logits);
  const Tensor st = straight_through(soft, {0.0, 1.0, 0.0});
  CHECK(st.values()[0] == 0.0);
  CHECK(st.values()[1] == 1.0);

  // d(sum(st))/d(logits) must equal d(sum(soft))/d(logits) = 0 exactly.
  backward(sum(st));
  const std::vector<double> g_st(logits.grad().begin(), logits.grad().end());
  logits.zero_grad();
  backward(sum(softmax_rows(logits)));
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(g_st[i] == doctest::Approx(logits.grad()[i]).epsilon(1e-14));
}

TEST_CASE("mean_rows matches a per-column average oracle") {
  Rng rng(41);
  const auto values = random_values(4 * 3, rng);
  const Tensor m = Tensor::from_values(4, 3, values);
  const Tensor mean = mean_rows(m);
  for (std::size_t j = 0; j < 3; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < 4; ++i) acc += values[i * 3 + j];
    CHECK(mean.values()[j] == acc * (1.0 / 4.0));
  }
}
