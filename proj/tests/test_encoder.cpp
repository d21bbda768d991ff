#include <algorithm>
#include <cmath>
#include <numeric>

#include <doctest.h>

#include "mgnet/encoder.hpp"
#include "support.hpp"

using namespace mgnet;
using mgnet::test::input_grad_error;
using mgnet::test::probe_sum;
using mgnet::test::random_matrix;

namespace {

AttentionConfig small_config(bool positional = true) {
  AttentionConfig c;
  c.embed_dim = 8;
  c.num_heads = 2;
  c.output_dim = 6;
  c.positional = positional;
  return c;
}

// Reference softmax attention written with plain loops.
Matrix<double> brute_attention(const Matrix<double>& q, const Matrix<double>& k, const Matrix<double>& v) {
  Matrix<double> out = Matrix<double>::Zero(q.rows(), v.cols());
  for (Index i = 0; i < q.rows(); ++i) {
    std::vector<double> s(static_cast<std::size_t>(k.rows()));
    double total = 0.0;
    for (Index j = 0; j < k.rows(); ++j) {
      double dot = 0.0;
      for (Index c = 0; c < q.cols(); ++c) dot += q(i, c) * k(j, c);
      s[static_cast<std::size_t>(j)] = std::exp(dot / std::sqrt(static_cast<double>(q.cols())));
      total += s[static_cast<std::size_t>(j)];
    }
    for (Index j = 0; j < k.rows(); ++j) out.row(i) += s[static_cast<std::size_t>(j)] / total * v.row(j);
  }
  return out;
}

std::vector<Var<double>> constant_steps(Tape<double>& tape, const std::vector<Matrix<double>>& steps) {
  std::vector<Var<double>> out;
  for (const auto& s : steps) out.push_back(tape.constant(s));
  return out;
}

}  // namespace

TEST_CASE("scaled dot attention on a single token is the identity") {
  Matrix<double> one(1, 1);
  one << 1.0;
  CHECK(scaled_dot_attention(one, one, one)(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("scaled dot attention matches the loop reference") {
  std::mt19937_64 rng(20);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix<double> q = random_matrix(5, 4, rng, 3.0), k = random_matrix(5, 4, rng, 3.0);
    const Matrix<double> v = random_matrix(5, 3, rng);
    CHECK((scaled_dot_attention(q, k, v) - brute_attention(q, k, v)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("attention rows are probability vectors and outputs are convex combinations") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const Matrix<double> q = random_matrix(4, 3, rng, 10.0), k = random_matrix(4, 3, rng, 10.0);
    const Matrix<double> w = attention_weights(q, k);
    REQUIRE(w.minCoeff() >= 0.0);
    REQUIRE((w.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
  }
  const Matrix<double> q = random_matrix(4, 3, rng), k = random_matrix(4, 3, rng), v = random_matrix(4, 2, rng);
  const Matrix<double> out = scaled_dot_attention(q, k, v);
  for (Index c = 0; c < 2; ++c) {
    CHECK(out.col(c).maxCoeff() <= v.col(c).maxCoeff() + 1e-12);
    CHECK(out.col(c).minCoeff() >= v.col(c).minCoeff() - 1e-12);
  }
}

TEST_CASE("one head reduces to scaled dot attention followed by the output map") {
  std::mt19937_64 rng(22);
  const Index steps = 5, batch = 2, width = 4;
  MultiHeadAttention<double> mha("mha", width, 1, rng);
  const Matrix<double> x = random_matrix(steps * batch, width, rng);
  Tape<double> tape;
  Context<double> ctx{tape};
  const Matrix<double> got = mha(ctx, tape.constant(x), steps, batch).value();
  CHECK(got.rows() == steps * batch);
  CHECK(got.cols() == width);

  const auto proj = [](const Linear<double>& l, const Matrix<double>& m) -> Matrix<double> {
    return (m * l.weight.value).rowwise() + l.bias.value.row(0);
  };
  for (Index b = 0; b < batch; ++b) {
    Matrix<double> seq(steps, width);
    for (Index t = 0; t < steps; ++t) seq.row(t) = x.row(t * batch + b);
    const Matrix<double> expect =
        proj(mha.output, brute_attention(proj(mha.query, seq), proj(mha.key, seq), proj(mha.value, seq)));
    for (Index t = 0; t < steps; ++t) CHECK((got.row(t * batch + b) - expect.row(t)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("two hand-wired heads equal the per-head brute force") {
  std::mt19937_64 rng(23);
  const Index steps = 4, width = 4;
  MultiHeadAttention<double> mha("mha", width, 2, rng);
  for (auto* l : {&mha.query, &mha.key, &mha.value, &mha.output}) {
    l->weight.value.setIdentity();
    l->bias.value.setZero();
  }
  mha.query.weight.value *= 2.0;
  const Matrix<double> x = random_matrix(steps, width, rng);
  Tape<double> tape;
  Context<double> ctx{tape};
  const Matrix<double> got = mha(ctx, tape.constant(x), steps, 1).value();

  Matrix<double> expect(steps, width);
  for (Index h = 0; h < 2; ++h) {
    const Matrix<double> xs = x.middleCols(2 * h, 2);
    expect.middleCols(2 * h, 2) = brute_attention(2.0 * xs, xs, xs);
  }
  CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("embedding is linear and row-wise before the positional table") {
  std::mt19937_64 rng(24);
  AttentionEncoder<double> enc("att", small_config(false), 4, rng);
  enc.embedding.bias.value.setZero();
  Tape<double> tape;
  Context<double> ctx{tape};
  CHECK(enc.embed(ctx, tape.constant(Matrix<double>::Zero(15, 4)), 15, 1).value().isZero());

  const Matrix<double> x = random_matrix(15, 4, rng);
  Matrix<double> reversed = x.colwise().reverse();
  const Matrix<double> a = enc.embed(ctx, tape.constant(x), 15, 1).value();
  const Matrix<double> b = enc.embed(ctx, tape.constant(reversed), 15, 1).value();
  CHECK((a.colwise().reverse() - b).cwiseAbs().maxCoeff() < 1e-14);

  AttentionEncoder<double> full("att", AttentionConfig{}, 4, rng);
  CHECK(full.embed(ctx, tape.constant(x), 15, 1).value().cols() == 32);
}

TEST_CASE("positional table alternates sine and cosine") {
  const Matrix<double> pe = sinusoidal_encoding(15, 8);
  CHECK(pe(0, 0) == 0.0);
  CHECK(pe(0, 1) == 1.0);
  CHECK(pe(3, 0) == doctest::Approx(std::sin(3.0)));
  CHECK(pe(3, 3) == doctest::Approx(std::cos(3.0 / std::pow(10000.0, 2.0 / 8.0))));
}

TEST_CASE("shuffling earlier steps changes h_A only through the positional pathway") {
  std::mt19937_64 rng(25);
  const Index tau = 15, batch = 3;
  std::vector<Matrix<double>> steps;
  for (Index t = 0; t < tau; ++t) steps.push_back(random_matrix(batch, 4, rng));
  std::vector<Matrix<double>> shuffled = steps;
  std::shuffle(shuffled.begin(), shuffled.end() - 1, rng);

  for (bool positional : {false, true}) {
    std::mt19937_64 init(26);
    AttentionEncoder<double> enc("att", small_config(positional), 4, init);
    Tape<double> tape;
    Context<double> ctx{tape};
    const Matrix<double> a = enc(ctx, constant_steps(tape, steps)).value();
    const Matrix<double> b = enc(ctx, constant_steps(tape, shuffled)).value();
    const double diff = (a - b).cwiseAbs().maxCoeff();
    if (positional)
      CHECK(diff > 1e-6);
    else
      CHECK(diff < 1e-6);
  }
}

TEST_CASE("without positions the encoded sequence is permutation-equivariant") {
  std::mt19937_64 rng(27);
  AttentionEncoder<double> enc("att", small_config(false), 4, rng);
  const Index tau = 6;
  const Matrix<double> x = random_matrix(tau, 4, rng);
  std::vector<Index> perm(tau);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix<double> px(tau, 4);
  for (Index t = 0; t < tau; ++t) px.row(t) = x.row(perm[static_cast<std::size_t>(t)]);
  Tape<double> tape;
  Context<double> ctx{tape};
  const Matrix<double> a = enc.encode_sequence(ctx, tape.constant(x), tau, 1).value();
  const Matrix<double> b = enc.encode_sequence(ctx, tape.constant(px), tau, 1).value();
  for (Index t = 0; t < tau; ++t) CHECK((b.row(t) - a.row(perm[static_cast<std::size_t>(t)])).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((a.colwise().mean() - b.colwise().mean()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("h_A has the configured width for any observation length and is deterministic") {
  std::mt19937_64 rng(28);
  AttentionEncoder<double> enc("att", small_config(), 4, rng);
  for (Index tau : {1, 2, 15, 30}) {
    std::vector<Matrix<double>> steps;
    for (Index t = 0; t < tau; ++t) steps.push_back(random_matrix(2, 4, rng));
    Tape<double> tape;
    Context<double> ctx{tape};
    const Matrix<double> a = enc(ctx, constant_steps(tape, steps)).value();
    const Matrix<double> b = enc(ctx, constant_steps(tape, steps)).value();
    CHECK(a.cols() == 6);
    CHECK(a == b);
  }
}

TEST_CASE("empty or non-finite sequences are rejected") {
  std::mt19937_64 rng(29);
  AttentionEncoder<double> enc("att", small_config(), 4, rng);
  GruEncoder<double> gru("gru", 4, 5, rng);
  Tape<double> tape;
  Context<double> ctx{tape};
  CHECK_THROWS_AS(enc(ctx, {}), std::invalid_argument);
  CHECK_THROWS_AS(gru(ctx, {}), std::invalid_argument);
  Matrix<double> bad = Matrix<double>::Zero(1, 4);
  bad(0, 2) = std::nan("");
  CHECK_THROWS_AS(enc(ctx, {tape.constant(bad)}), std::domain_error);
  AttentionConfig c = small_config();
  c.num_heads = 3;
  CHECK_THROWS(c.validate());
}

TEST_CASE("encoder outputs stay finite on large inputs") {
  std::mt19937_64 rng(30);
  AttentionEncoder<double> enc("att", AttentionConfig{}, 4, rng);
  GruEncoder<double> gru("gru", 4, 256, rng);
  std::vector<Matrix<double>> steps;
  for (int t = 0; t < 15; ++t) steps.push_back(random_matrix(4, 4, rng, 10.0));
  Tape<double> tape;
  Context<double> ctx{tape};
  CHECK(enc(ctx, constant_steps(tape, steps)).value().allFinite());
  const Matrix<double> h = gru(ctx, constant_steps(tape, steps)).value();
  CHECK(h.allFinite());
  CHECK(h.cols() == 256);
}

TEST_CASE("separately constructed recurrent encoders hold separate weights") {
  std::mt19937_64 rng(31);
  GruEncoder<double> past("past", 4, 8, rng), future("future", 4, 8, rng);
  CHECK(&past.cell.w_ih != &future.cell.w_ih);
  CHECK(past.cell.w_ih.value != future.cell.w_ih.value);
}

TEST_CASE("h_A, h_X and h_Y gradients with respect to the inputs") {
  std::mt19937_64 rng(32);
  const Index tau = 5, batch = 2;
  AttentionEncoder<double> att("att", small_config(), 4, rng);
  GruEncoder<double> past("past", 4, 6, rng), future("future", 4, 6, rng);
  const Matrix<double> x0 = random_matrix(batch, 4 * tau, rng);
  CHECK(input_grad_error(x0, [&](Tape<double>& t, Var<double> v) {
          Context<double> ctx{t};
          return probe_sum(t, att(ctx, split_steps(v, 4)));
        }) < 1e-4);
  CHECK(input_grad_error(x0, [&](Tape<double>& t, Var<double> v) {
          Context<double> ctx{t};
          return probe_sum(t, past(ctx, split_steps(v, 4)));
        }) < 1e-4);
  const Matrix<double> y0 = random_matrix(batch, 4 * 9, rng);
  CHECK(input_grad_error(y0, [&](Tape<double>& t, Var<double> v) {
          Context<double> ctx{t};
          return probe_sum(t, future(ctx, split_steps(v, 4)));
        }) < 1e-4);
}
