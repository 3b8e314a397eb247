#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "l2s/nn/checkpoint.hpp"
#include "l2s/nn/optim.hpp"

using namespace l2s;
using namespace l2s::nn;

namespace {

TensorPtr random_input(std::vector<int> shape, uint64_t seed, bool requires_grad = true) {
  Rng rng(seed);
  auto t = make_tensor(std::move(shape), requires_grad);
  for (double& v : t->value) v = rng.normal();
  return t;
}

// central finite differences on every element of `target` against the scalar
// produced by fn(); fn must rebuild the graph from current values.
void gradcheck(const TensorPtr& target, const std::function<TensorPtr()>& fn,
               double h = 1e-5, double tol = 1e-5) {
  std::fill(target->grad.begin(), target->grad.end(), 0.0);
  auto loss = fn();
  REQUIRE(loss->numel() == 1);
  backward(loss);
  std::vector<double> analytic = target->grad;

  for (size_t i = 0; i < target->numel(); ++i) {
    double keep = target->value[i];
    target->value[i] = keep + h;
    double up = fn()->value[0];
    target->value[i] = keep - h;
    double down = fn()->value[0];
    target->value[i] = keep;
    double numeric = (up - down) / (2.0 * h);
    double denom = std::max({std::fabs(numeric), std::fabs(analytic[i]), 1e-4});
    REQUIRE(std::fabs(numeric - analytic[i]) / denom < tol);
  }
}

}  // namespace

TEST_CASE("add/sub/mul/scale forward and grads") {
  auto a = random_input({2, 3}, 1);
  auto b = random_input({2, 3}, 2);
  auto fn = [&] { return mean_all(mul(add(a, b), sub(a, scale(b, 0.5)))); };
  gradcheck(a, fn);
  gradcheck(b, fn);
}

TEST_CASE("unary op grads") {
  auto x = random_input({3, 4}, 3);
  gradcheck(x, [&] { return mean_all(silu(x)); });
  gradcheck(x, [&] { return mean_all(tanh_op(x)); });
  gradcheck(x, [&] { return mean_all(sigmoid(x)); });
  gradcheck(x, [&] { return mean_all(square(x)); });
  gradcheck(x, [&] { return mean_all(leaky_relu(x)); });
}

TEST_CASE("linear matches manual matmul and grads") {
  auto x = random_input({2, 5, 3}, 4);
  Rng rng(5);
  ParamStore ps;
  auto w = ps.create("w", {3, 4}, rng, 0.5);
  auto b = ps.create("b", {4}, rng, 0.5);
  auto y = linear(x, w, b);
  REQUIRE(y->shape == std::vector<int>{2, 5, 4});

  // spot check one element
  double manual = b->value[1];
  for (int k = 0; k < 3; ++k)
    manual += x->value[(1 * 5 + 2) * 3 + k] * w->value[k * 4 + 1];
  REQUIRE(y->value[(1 * 5 + 2) * 4 + 1] == Catch::Approx(manual).margin(1e-12));

  auto fn = [&] { return mean_all(square(linear(x, w, b))); };
  gradcheck(x, fn);
  gradcheck(w, fn);
  gradcheck(b, fn);
}

TEST_CASE("batched_matmul grads (plain and transposed)") {
  auto a = random_input({2, 3, 4}, 6);
  auto b = random_input({2, 4, 5}, 7);
  auto fn = [&] { return mean_all(square(batched_matmul(a, b))); };
  gradcheck(a, fn);
  gradcheck(b, fn);

  auto c = random_input({2, 5, 4}, 8);
  auto fn2 = [&] { return mean_all(square(batched_matmul(a, c, true))); };
  gradcheck(a, fn2);
  gradcheck(c, fn2);
}

TEST_CASE("layer_norm grads and statistics") {
  auto x = random_input({4, 6}, 9);
  ParamStore ps;
  auto gamma = ps.create_const("g", {6}, 1.3);
  auto beta = ps.create_const("b", {6}, -0.2);
  auto y = layer_norm(x, gamma, beta);
  for (int r = 0; r < 4; ++r) {
    double mean = 0.0;
    for (int j = 0; j < 6; ++j) mean += y->value[r * 6 + j] / 6.0;
    REQUIRE(mean == Catch::Approx(-0.2).margin(1e-9));
  }
  auto fn = [&] { return mean_all(square(layer_norm(x, gamma, beta))); };
  gradcheck(x, fn, 1e-5, 1e-4);
  gradcheck(gamma, fn, 1e-5, 1e-4);
  gradcheck(beta, fn, 1e-5, 1e-4);
}

TEST_CASE("softmax rows sum to one and grads flow") {
  auto x = random_input({2, 3, 5}, 10);
  auto y = softmax_lastdim(x);
  for (int r = 0; r < 6; ++r) {
    double s = 0.0;
    for (int j = 0; j < 5; ++j) s += y->value[r * 5 + j];
    REQUIRE(s == Catch::Approx(1.0).margin(1e-12));
  }
  gradcheck(x, [&] { return mean_all(square(softmax_lastdim(x))); });
}

TEST_CASE("softmax additive mask excludes keys") {
  auto x = random_input({1, 2, 4}, 11);
  auto mask = std::make_shared<std::vector<double>>(std::vector<double>{0.0, 0.0, -1e30, -1e30});
  auto y = softmax_lastdim(x, mask, 2);
  for (int r = 0; r < 2; ++r) {
    REQUIRE(y->value[r * 4 + 2] == 0.0);
    REQUIRE(y->value[r * 4 + 3] == 0.0);
    REQUIRE(y->value[r * 4 + 0] + y->value[r * 4 + 1] == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("glu grads") {
  auto x = random_input({3, 8}, 12);
  gradcheck(x, [&] { return mean_all(square(glu(x))); });
}

TEST_CASE("conv1d shapes and grads") {
  auto x = random_input({2, 7, 3}, 13);
  Rng rng(14);
  ParamStore ps;
  auto w = ps.create("w", {5, 3, 4}, rng, 0.4);
  auto b = ps.create("b", {4}, rng, 0.4);
  auto y = conv1d(x, w, b, 2);
  REQUIRE(y->shape == std::vector<int>{2, 7, 4});

  auto fn = [&] { return mean_all(square(conv1d(x, w, b, 2))); };
  gradcheck(x, fn);
  gradcheck(w, fn);
  gradcheck(b, fn);

  // dilation
  auto fnd = [&] { return mean_all(square(conv1d(x, w, b, 4, 2))); };
  gradcheck(x, fnd);
  gradcheck(w, fnd);
}

TEST_CASE("depthwise_conv1d grads") {
  auto x = random_input({2, 6, 4}, 15);
  Rng rng(16);
  ParamStore ps;
  auto w = ps.create("w", {3, 4}, rng, 0.5);
  auto fn = [&] { return mean_all(square(depthwise_conv1d(x, w, 1))); };
  gradcheck(x, fn);
  gradcheck(w, fn);
}

TEST_CASE("conv_transpose1d length law and grads") {
  auto x = random_input({1, 5, 3}, 17);
  Rng rng(18);
  ParamStore ps;
  // stride 4, kernel 8, pad 2 -> output length exactly 4*T
  auto w = ps.create("w", {8, 3, 2}, rng, 0.4);
  auto b = ps.create("b", {2}, rng, 0.4);
  auto y = conv_transpose1d(x, w, b, 4, 2);
  REQUIRE(y->shape == std::vector<int>{1, 20, 2});

  auto fn = [&] { return mean_all(square(conv_transpose1d(x, w, b, 4, 2))); };
  gradcheck(x, fn);
  gradcheck(w, fn);
  gradcheck(b, fn);

  // odd stride 5, kernel 15, pad 5 -> exactly 5*T
  auto w2 = ps.create("w2", {15, 3, 2}, rng, 0.3);
  auto y2 = conv_transpose1d(x, w2, nullptr, 5, 5);
  REQUIRE(y2->shape == std::vector<int>{1, 25, 2});
}

TEST_CASE("conv2d shapes and grads") {
  auto x = random_input({2, 2, 6, 6}, 19);
  Rng rng(20);
  ParamStore ps;
  auto w = ps.create("w", {3, 3, 2, 4}, rng, 0.3);
  auto b = ps.create("b", {4}, rng, 0.3);
  auto y = conv2d(x, w, b, 2, 1);
  REQUIRE(y->shape == std::vector<int>{2, 4, 3, 3});

  auto fn = [&] { return mean_all(square(conv2d(x, w, b, 2, 1))); };
  gradcheck(x, fn);
  gradcheck(w, fn);
  gradcheck(b, fn);

  gradcheck(x, [&] { return mean_all(square(global_avg_pool2d(conv2d(x, w, b, 2, 1)))); });
}

TEST_CASE("embedding grads accumulate per id") {
  Rng rng(21);
  ParamStore ps;
  auto table = ps.create("t", {5, 3}, rng, 0.8);
  std::vector<int> ids = {1, 4, 1};
  auto fn = [&] { return mean_all(square(embedding(ids, table, {3}))); };
  gradcheck(table, fn);

  auto y = embedding(ids, table, {3});
  REQUIRE(y->shape == std::vector<int>{3, 3});
  REQUIRE_THROWS_AS(embedding({7}, table, {1}), Error);
}

TEST_CASE("repeat_time semantics") {
  auto x = random_input({1, 2, 3}, 22);
  auto y = repeat_time(x, 2);
  REQUIRE(y->shape == std::vector<int>{1, 4, 3});
  for (int j = 0; j < 3; ++j) {
    REQUIRE(y->value[0 * 3 + j] == x->value[j]);
    REQUIRE(y->value[1 * 3 + j] == x->value[j]);
    REQUIRE(y->value[2 * 3 + j] == x->value[3 + j]);
    REQUIRE(y->value[3 * 3 + j] == x->value[3 + j]);
  }
  gradcheck(x, [&] { return mean_all(square(repeat_time(x, 3))); });
}

TEST_CASE("split/merge heads round trip and grads") {
  auto x = random_input({2, 3, 8}, 23);
  auto y = merge_heads(split_heads(x, 4));
  for (size_t i = 0; i < x->numel(); ++i)
    REQUIRE(y->value[i] == Catch::Approx(x->value[i]).margin(1e-15));
  gradcheck(x, [&] { return mean_all(square(split_heads(x, 2))); });
}

TEST_CASE("concat_lastdim grads") {
  auto a = random_input({2, 3}, 24);
  auto b = random_input({2, 2}, 25);
  auto y = concat_lastdim(a, b);
  REQUIRE(y->shape == std::vector<int>{2, 5});
  auto fn = [&] { return mean_all(square(concat_lastdim(a, b))); };
  gradcheck(a, fn);
  gradcheck(b, fn);
}

TEST_CASE("cross_entropy matches brute force and grads") {
  auto logits = random_input({2, 3, 4}, 26);
  std::vector<int> targets = {1, 0, 3, 2, -1, 1};  // one padded frame

  auto loss = cross_entropy(logits, targets);
  double manual = 0.0;
  int valid = 0;
  for (int r = 0; r < 6; ++r) {
    if (targets[r] < 0) continue;
    double denom = 0.0;
    for (int j = 0; j < 4; ++j) denom += std::exp(logits->value[r * 4 + j]);
    manual -= std::log(std::exp(logits->value[r * 4 + targets[r]]) / denom);
    ++valid;
  }
  REQUIRE(loss->value[0] == Catch::Approx(manual / valid).margin(1e-10));

  gradcheck(logits, [&] { return cross_entropy(logits, targets); });
  REQUIRE_THROWS_AS(cross_entropy(logits, std::vector<int>{1, 0, 3, 2, 9, 1}), Error);
}

TEST_CASE("uniform logits cross entropy equals ln K") {
  for (int k : {64, 200}) {
    auto logits = make_tensor({1, 5, k}, true);
    std::vector<int> targets(5, k / 3);
    auto loss = cross_entropy(logits, targets);
    REQUIRE(loss->value[0] == Catch::Approx(std::log(double(k))).margin(1e-9));
  }
}

TEST_CASE("masked_mean excludes padding rows") {
  auto x = make_tensor({2, 2, 3}, true);
  for (size_t i = 0; i < x->numel(); ++i) x->value[i] = double(i + 1);
  std::vector<double> mask = {1.0, 1.0, 1.0, 0.0};
  auto m = masked_mean(x, mask);
  double expect = (1 + 2 + 3 + 4 + 5 + 6 + 7 + 8 + 9) / 9.0;
  REQUIRE(m->value[0] == Catch::Approx(expect).margin(1e-12));
  gradcheck(x, [&] { return masked_mean(x, mask); });
}

TEST_CASE("dropout semantics") {
  auto x = random_input({100, 10}, 27);
  Rng rng(1);
  auto eval_out = dropout(x, 0.5, rng, false);
  REQUIRE(eval_out.get() == x.get());  // no-op in eval

  Rng rng2(2);
  auto train_out = dropout(x, 0.5, rng2, true);
  int zeros = 0;
  for (size_t i = 0; i < train_out->numel(); ++i) {
    if (train_out->value[i] == 0.0)
      ++zeros;
    else
      REQUIRE(train_out->value[i] == Catch::Approx(2.0 * x->value[i]).margin(1e-12));
  }
  REQUIRE(zeros > 350);
  REQUIRE(zeros < 650);
}

TEST_CASE("stft_mag forward matches signal stft and grads flow") {
  // forward: compare against an unpadded manual frame + FftPlan
  Rng rng(28);
  int n = 512;
  auto x = make_tensor({1, n}, true);
  for (double& v : x->value) v = 0.3 * rng.normal();
  auto mag = stft_mag(x, 256, 64, 128);
  REQUIRE(mag->shape == std::vector<int>{1, (n - 128) / 64 + 1, 129});

  signal::FftPlan plan(256);
  auto win = signal::hann_window(128);
  std::vector<double> frame(256, 0.0);
  for (int i = 0; i < 128; ++i) frame[i] = x->value[2 * 64 + i] * win[i];
  auto spec = plan.rfft(frame);
  for (int k = 0; k < 129; ++k)
    REQUIRE(mag->value[(2 * 129) + k] == Catch::Approx(std::abs(spec[k])).margin(1e-10));

  // grads: small config for FD cost
  auto xs = random_input({1, 96}, 29);
  for (double& v : xs->value) v *= 0.5;
  gradcheck(xs, [&] { return mean_all(stft_mag(xs, 64, 16, 32)); }, 1e-6, 1e-4);
}

TEST_CASE("log_clamped and matmul_const grads") {
  auto x = random_input({2, 6}, 30);
  for (double& v : x->value) v = std::fabs(v) + 0.2;
  gradcheck(x, [&] { return mean_all(log_clamped(x, 0.3)); });

  auto m = std::make_shared<Mat>(6, 4);
  Rng rng(31);
  for (double& v : m->data) v = rng.normal();
  gradcheck(x, [&] { return mean_all(square(matmul_const(x, m))); });
}

TEST_CASE("mul_time_mask zeroes rows") {
  auto x = random_input({1, 4, 3}, 32);
  std::vector<double> mask = {1.0, 1.0, 0.0, 0.0};
  auto y = mul_time_mask(x, mask);
  for (int j = 0; j < 3; ++j) {
    REQUIRE(y->value[2 * 3 + j] == 0.0);
    REQUIRE(y->value[0 * 3 + j] == x->value[j]);
  }
  gradcheck(x, [&] { return mean_all(square(mul_time_mask(x, mask))); });
}

TEST_CASE("conformer block preserves shape and differentiates") {
  Rng rng(33);
  ParamStore ps;
  ConformerBlock block(ps, "blk", 8, 2, 3, rng, 0.0);
  auto x = random_input({1, 4, 8}, 34);
  Rng drop_rng(0);
  auto mask = std::make_shared<std::vector<double>>(4, 0.0);
  std::vector<double> tmask(4, 1.0);
  auto y = block(x, drop_rng, false, mask, tmask);
  REQUIRE(y->shape == x->shape);

  gradcheck(x, [&] {
    Rng r(0);
    return mean_all(square(block(x, r, false, mask, tmask)));
  }, 1e-5, 1e-3);
}

TEST_CASE("adam with cosine schedule minimizes a quadratic") {
  Rng rng(35);
  ParamStore ps;
  auto w = ps.create("w", {8}, rng, 2.0);
  Adam opt(ps, 0.1);
  double first_loss = 0.0, last_loss = 0.0;
  for (int step = 0; step < 200; ++step) {
    ps.zero_grad();
    auto loss = mean_all(square(w));
    backward(loss);
    if (step == 0) first_loss = loss->value[0];
    last_loss = loss->value[0];
    opt.step(cosine_lr(0.1, step, 200));
  }
  REQUIRE(last_loss < 1e-4 * first_loss);
  REQUIRE(cosine_lr(0.1, 0, 100) == Catch::Approx(0.1));
  REQUIRE(cosine_lr(0.1, 99, 100) == Catch::Approx(0.001));
}

TEST_CASE("checkpoint round trip restores parameters exactly") {
  Rng rng(36);
  ParamStore ps;
  ps.create("a.w", {3, 4}, rng, 1.0);
  ps.create("b", {7}, rng, 1.0);
  nlohmann::json meta = {{"step", 42}, {"note", "fixture"}};
  auto path = std::filesystem::temp_directory_path() / "l2s_test.l2cp";
  checkpoint_save(path, ps, meta);

  auto ck = checkpoint_load(path);
  REQUIRE(ck.metadata.at("step") == 42);

  Rng rng2(99);
  ParamStore ps2;
  auto a2 = ps2.create("a.w", {3, 4}, rng2, 1.0);
  auto b2 = ps2.create("b", {7}, rng2, 1.0);
  restore_params(ps2, ck);
  REQUIRE(a2->value == ps.at("a.w")->value);
  REQUIRE(b2->value == ps.at("b")->value);

  ParamStore ps3;
  ps3.create("other", {2}, rng2, 1.0);
  REQUIRE_THROWS_AS(restore_params(ps3, ck), Error);
  std::filesystem::remove(path);
}
