#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "motrans/data.hpp"
#include "motrans/nn/grad_check.hpp"
#include "motrans/nn/model.hpp"
#include "motrans/variation.hpp"

using namespace motrans;
using namespace motrans::nn;
using testing::baseline;

namespace {

using T64 = Tensor<double>;

std::vector<double> random_values(std::size_t n, RngStream& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = (2.0 * rng.uniform01() - 1.0) * scale;
  return v;
}

T64 param(Shape shape, RngStream& rng, double scale = 1.0) {
  auto n = numel(shape);
  return T64::parameter(std::move(shape), random_values(n, rng, scale));
}

TokenBatch batch(std::vector<std::vector<int>> rows) {
  TokenBatch b;
  b.rows = rows.size();
  for (const auto& r : rows) b.cols = std::max(b.cols, r.size());
  for (auto& r : rows) {
    r.resize(b.cols, kPadId);
    b.ids.insert(b.ids.end(), r.begin(), r.end());
  }
  return b;
}

// Plan for a hand-written genome exercising the given encoder and decoder types.
ModelPlan plan_for(std::vector<int> enc_types, std::vector<int> dec_types, std::vector<int> ce, int d, int vocab) {
  Genome g;
  for (int te : enc_types) {
    const auto& comp = encoder_composition(te);
    g.encoders.push_back({te, is_attention(comp[0]) ? 2 : 24, is_attention(comp[1]) ? 4 : 16});
  }
  for (std::size_t i = 0; i < dec_types.size(); ++i) {
    const auto& comp = decoder_composition(dec_types[i]);
    int p[3];
    for (int s = 0; s < 3; ++s) p[s] = is_attention(comp[s]) ? (s == 1 ? 4 : 2) : 20;
    g.decoders.push_back({dec_types[i], p[0], p[1], p[2], ce[i]});
  }
  return build_plan(g, {d, vocab, vocab});
}

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("tensor basics") {
    auto t = Tensor<float>::zeros({2, 3});
    CHECK(t.size() == 6u);
    CHECK(shape_string(t.shape()) == "[2,3]");
    CHECK_THROWS_AS(Tensor<float>::constant({2, 2}, {1, 2, 3}), ShapeError);
    auto s = Tensor<double>::parameter({1}, {3.0});
    s.backward();
    CHECK(s.grad()[0] == 1.0);
    s.zero_grad();
    CHECK(s.grad()[0] == 0.0);
  }

  TEST_CASE("elementwise and linear ops pass gradient checks") {
    RngStream rng(1);
    auto x = param({2, 3, 5}, rng);
    auto w = param({5, 4}, rng);
    auto b = param({4}, rng);
    auto y = param({2, 3, 4}, rng);
    std::vector<NamedParam<double>> ps{{"x", x}, {"w", w}, {"b", b}, {"y", y}};
    RngStream proj(2);
    auto weights = random_values(24, proj);
    auto loss = [&] { return weighted_sum(relu(add(scale(linear(x, w, b), 1.5), y)), weights); };
    auto rep = grad_check(ps, loss, {1e-4, 1e-6, 200, 3});
    CHECK(rep.passed());
    CHECK(rep.checked >= 60u);
  }

  TEST_CASE("layer norm statistics and gradients") {
    RngStream rng(4);
    auto x = param({3, 4, 8}, rng, 3.0);
    auto gamma = T64::parameter({8}, std::vector<double>(8, 1.0));
    auto beta = T64::parameter({8}, std::vector<double>(8, 0.0));
    auto y = layer_norm(x, gamma, beta);
    for (std::size_t r = 0; r < 12; ++r) {
      double mean = 0, var = 0;
      for (int i = 0; i < 8; ++i) mean += y.data()[r * 8 + i];
      mean /= 8;
      for (int i = 0; i < 8; ++i) var += std::pow(y.data()[r * 8 + i] - mean, 2);
      var /= 8;
      CHECK(std::abs(mean) < 1e-5);
      // eps in the denominator pulls the variance just under 1.
      CHECK(std::abs(var - 1.0) < 1e-4);
    }
    auto c = T64::parameter({1, 4}, {2.5, 2.5, 2.5, 2.5});
    auto g2 = T64::parameter({4}, {1, 2, 3, 4});
    auto b2 = T64::parameter({4}, {0.1, 0.2, 0.3, 0.4});
    auto yc = layer_norm(c, g2, b2);
    for (int i = 0; i < 4; ++i) CHECK(yc.data()[i] == doctest::Approx(0.1 * (i + 1)).epsilon(1e-12));

    gamma = param({8}, rng);
    beta = param({8}, rng);
    std::vector<NamedParam<double>> ps{{"x", x}, {"gamma", gamma}, {"beta", beta}};
    RngStream proj(5);
    auto weights = random_values(96, proj);
    auto rep = grad_check(ps, [&] { return weighted_sum(layer_norm(x, gamma, beta), weights); });
    CHECK(rep.passed());
  }

  TEST_CASE("attention weights") {
    RngStream rng(6);
    const std::size_t B = 2, Tq = 5, Tk = 5, d = 8;
    auto q = param({B, Tq, d}, rng);
    auto k = param({B, Tk, d}, rng);
    auto v = param({B, Tk, d}, rng);
    std::vector<double> probs;
    attention(q, k, v, 2, true, nullptr, &probs);
    REQUIRE(probs.size() == B * 2 * Tq * Tk);
    for (std::size_t row = 0; row < B * 2 * Tq; ++row) {
      const std::size_t i = row % Tq;
      double sum = 0;
      for (std::size_t j = 0; j < Tk; ++j) {
        sum += probs[row * Tk + j];
        if (j > i) CHECK(probs[row * Tk + j] == 0.0);
      }
      CHECK(std::abs(sum - 1.0) < 1e-5);
      if (i == 0) CHECK(probs[row * Tk] == 1.0);
    }

    std::vector<std::uint8_t> mask{1, 1, 1, 0, 0, 1, 1, 1, 1, 1};
    attention(q, k, v, 4, false, &mask, &probs);
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t i = 0; i < Tq; ++i) {
        CHECK(probs[((0 * 4 + h) * Tq + i) * Tk + 3] == 0.0);
        CHECK(probs[((0 * 4 + h) * Tq + i) * Tk + 4] == 0.0);
      }
  }

  TEST_CASE("single position attention returns the value") {
    RngStream rng(7);
    auto x = param({1, 1, 8}, rng);
    AttentionParams<double> p{param({8, 8}, rng), param({8}, rng), param({8, 8}, rng), param({8}, rng),
                              param({8, 8}, rng), param({8}, rng), param({8, 8}, rng), param({8}, rng)};
    auto out = multihead_attention(x, x, 1, false, p);
    auto vproj = linear(linear(x, p.wv, p.bv), p.wo, p.bo);
    for (int i = 0; i < 8; ++i) CHECK(out.data()[i] == doctest::Approx(vproj.data()[i]).epsilon(1e-12));
  }

  TEST_CASE("attention gradients, causal and masked") {
    RngStream rng(8);
    auto q = param({2, 3, 8}, rng);
    auto k = param({2, 4, 8}, rng);
    auto v = param({2, 4, 8}, rng);
    std::vector<std::uint8_t> mask{1, 1, 1, 0, 1, 1, 1, 1};
    std::vector<NamedParam<double>> ps{{"q", q}, {"k", k}, {"v", v}};
    RngStream proj(9);
    auto weights = random_values(48, proj);
    CHECK(grad_check(ps, [&] { return weighted_sum(attention(q, k, v, 2, false, &mask), weights); }).passed());
    auto kk = param({2, 3, 8}, rng);
    auto vv = param({2, 3, 8}, rng);
    std::vector<NamedParam<double>> ps2{{"q", q}, {"k", kk}, {"v", vv}};
    CHECK(grad_check(ps2, [&] { return weighted_sum(attention(q, kk, vv, 4, true), weights); }).passed());
  }

  TEST_CASE("embedding and positions") {
    RngStream rng(10);
    auto table = param({6, 4}, rng);
    auto toks = batch({{1, 5, 2}, {3, 0, 0}});
    auto e = embed(toks, table, 2.0);
    CHECK(e.shape() == Shape{2, 3, 4});
    for (int i = 0; i < 4; ++i) CHECK(e.data()[4 + i] == 2.0 * table.data()[5 * 4 + i]);
    auto pe = sinusoid_table<double>(3, 4);
    CHECK(pe[0] == 0.0);
    CHECK(pe[1] == 1.0);
    CHECK(pe[4] == doctest::Approx(std::sin(1.0)));
    CHECK(pe[5] == doctest::Approx(std::cos(1.0)));
    CHECK(pe[6] == doctest::Approx(std::sin(1.0 / 100.0)));
    std::vector<NamedParam<double>> ps{{"table", table}};
    RngStream proj(11);
    auto weights = random_values(24, proj);
    CHECK(grad_check(ps, [&] { return weighted_sum(positional_encode(embed(toks, table, 1.7)), weights); }).passed());
  }

  TEST_CASE("cross entropy") {
    const int V = 7;
    auto logits = T64::parameter({1, 3, V}, std::vector<double>(3 * V, 0.25));
    auto ce = cross_entropy(logits, {4, 5, kPadId}, kPadId);
    CHECK(ce.item() == doctest::Approx(std::log(7.0)).epsilon(1e-12));
    CHECK_THROWS(cross_entropy(logits, {0, 0, 0}, kPadId));
    CHECK(count_targets({0, 4, 0, 5}, 0) == 2u);

    RngStream rng(12);
    auto l2 = param({2, 3, V}, rng, 2.0);
    std::vector<NamedParam<double>> ps{{"logits", l2}};
    CHECK(grad_check(ps, [&] { return cross_entropy(l2, {4, 5, 0, 6, 0, 1}, 0); }).passed());
  }

  TEST_CASE("build_plan expands block types") {
    Genome g;
    g.encoders.push_back({1, 4, 64});
    g.encoders.push_back({4, 64, 128});
    g.decoders.push_back({1, 8, 4, 128, 1});
    g.decoders.push_back({3, 4, 64, 8, 2});
    auto plan = build_plan(g, {32, 16, 16});
    REQUIRE(plan.encoder.size() == 2u);
    CHECK(plan.encoder[0].layers[0] == LayerSpec{LayerKind::SelfAttention, 4, 0, 0});
    CHECK(plan.encoder[0].layers[1] == LayerSpec{LayerKind::FeedForward, 0, 64, 0});
    CHECK(plan.encoder[1].layers[1] == LayerSpec{LayerKind::FeedForward, 0, 128, 0});
    CHECK(plan.decoder[0].layers[0] == LayerSpec{LayerKind::MaskedSelfAttention, 8, 0, 0});
    CHECK(plan.decoder[0].layers[1] == LayerSpec{LayerKind::CrossAttention, 4, 0, 1});
    CHECK(plan.decoder[0].layers[2] == LayerSpec{LayerKind::FeedForward, 0, 128, 0});
    CHECK(plan.decoder[1].layers[2] == LayerSpec{LayerKind::CrossAttention, 8, 0, 2});
    CHECK(plan.cross_wiring == std::vector<int>{1, 2});
    CHECK(build_plan(g, {32, 16, 16}) == plan);
    g.encoders[0].p1 = 5;
    CHECK_THROWS(build_plan(g, {32, 16, 16}));
  }

  TEST_CASE("gradient check over every layer kind at d=16") {
    RngStream rng(13);
    // Two encoders of differing types and all three decoder types, wired to both encoders.
    auto plan = plan_for({1, 2, 3, 4}, {1, 2, 3}, {2, 1, 4}, 16, 9);
    auto src = batch({{4, 5, 6, 7}, {8, 4, 5}});
    auto tgt_in = batch({{1, 4, 5, 6}, {1, 7, 8}});
    std::vector<int> targets{4, 5, 6, 2, 7, 8, 2, 0};
    auto rep = grad_check_plan(plan, src, tgt_in, targets, {1e-4, 1e-6, 400, 14});
    CHECK(rep.failures.empty());
    CHECK(rep.checked >= 200u);
    std::set<std::string> kinds;
    for (const auto& n : rep.params_covered) {
      for (const char* k : {".SA.", ".M-MHA.", ".C-MHA.", ".FFN."}) {
        if (n.find(k) != std::string::npos) kinds.insert(k);
      }
    }
    CHECK(kinds.size() == 4u);
  }

  TEST_CASE("constant loss gives zero gradients") {
    RngStream rng(15);
    auto plan = plan_for({1}, {1}, {1}, 16, 8);
    Transformer<double> model(plan, rng);
    auto src = batch({{4, 5}});
    auto tgt = batch({{1, 4}});
    auto logits = model.forward(src, tgt);
    weighted_sum(logits, std::vector<double>(logits.size(), 0.0)).backward();
    for (auto& p : model.parameters()) {
      for (double g : p.tensor.grad()) CHECK(g == 0.0);
    }
  }

  TEST_CASE("a broken backward rule is reported") {
    RngStream rng(16);
    auto x = param({4}, rng);
    std::vector<NamedParam<double>> ps{{"x", x}};
    // square with a backward pass that forgets the factor 2
    auto bad_square = [&] {
      std::vector<double> y(x.size());
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] * x.data()[i];
      return make_result<double>(x.shape(), y, {x}, [x](Node<double>& self) {
        auto g = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.data()[i];
      });
    };
    auto rep = grad_check(ps, [&] { return weighted_sum(bad_square(), std::vector<double>{1, 1, 1, 1}); });
    CHECK_FALSE(rep.passed());
    CHECK(rep.failures.size() == 4u);
  }

  TEST_CASE("logits shape and finiteness over random plans") {
    auto cfg = SearchConfig::desk();
    RngStream rng(17);
    auto src = batch({{4, 5, 6}, {7, 8, 9, 10, 11}});
    auto tgt = batch({{1, 4, 5}, {1, 7}});
    for (int t = 0; t < 1000; ++t) {
      Genome g = init_genome(cfg, rng);
      Transformer<float> model(build_plan(g, {32, 16, 16}), rng);
      auto logits = model.forward(src, tgt);
      REQUIRE(logits.shape() == Shape{2, 3, 16});
      for (float v : logits.data()) REQUIRE(std::isfinite(v));
    }
  }

  TEST_CASE("forward respects the wiring") {
    auto src = batch({{4, 5, 6, 7}, {5, 6, 7, 8}});
    auto tgt = batch({{1, 4, 5}, {1, 5, 6}});
    auto cfg = SearchConfig::desk();
    RngStream gen(18);
    for (int t = 0; t < 40; ++t) {
      Genome g = init_genome(cfg, gen);
      RngStream init(t);
      Transformer<double> model(build_plan(g, {32, 16, 16}), init);
      auto base = model.forward(src, tgt);
      for (int b = 1; b <= g.ne(); ++b) {
        ForwardOptions opt;
        opt.zero_encoder_block = b;
        auto z = model.forward(src, tgt, opt);
        bool changed = false;
        for (std::size_t i = 0; i < z.size(); ++i) changed |= z.data()[i] != base.data()[i];
        bool read = b < g.ne();
        for (const auto& d : g.decoders) read |= d.ce == b;
        CAPTURE(b);
        CHECK(changed == read);
      }
    }
  }

  TEST_CASE("an unread final encoder block has no effect") {
    // Rewire the plan directly (genome validation would reject it) so that no
    // decoder reads the last encoder block.
    auto plan = build_plan(baseline(2, 2, 4, 64), {32, 16, 16});
    for (auto& block : plan.decoder)
      for (auto& layer : block.layers)
        if (layer.kind == LayerKind::CrossAttention) layer.cross_source = 1;
    plan.cross_wiring = {1, 1};
    RngStream init(3);
    Transformer<double> model(plan, init);
    auto src = batch({{4, 5, 6}});
    auto tgt = batch({{1, 4}});
    auto base = model.forward(src, tgt);
    ForwardOptions opt;
    opt.zero_encoder_block = 2;
    auto z = model.forward(src, tgt, opt);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z.data()[i] == base.data()[i]);
    opt.zero_encoder_block = 1;
    auto z1 = model.forward(src, tgt, opt);
    bool changed = false;
    for (std::size_t i = 0; i < z1.size(); ++i) changed |= z1.data()[i] != base.data()[i];
    CHECK(changed);
  }

  TEST_CASE("parameter count and names") {
    auto g = baseline(3, 3, 4, 64);
    RngStream init(4);
    Transformer<float> model(build_plan(g, {32, 16, 16}), init);
    CHECK(model.parameter_count() == param_count(g, {32, 16, 16}));
    std::set<std::string> names;
    for (const auto& p : model.parameters()) names.insert(p.name);
    CHECK(names.size() == model.parameters().size());
    CHECK(names.count("src_embedding") == 1);
    CHECK(names.count("output.w") == 1);
  }

  TEST_CASE("parameters save, load, snapshot and restore") {
    auto g = baseline(3, 3, 4, 64);
    auto plan = build_plan(g, {32, 16, 16});
    RngStream a(1), b(2);
    Transformer<float> m1(plan, a), m2(plan, b);
    auto src = batch({{4, 5, 6}});
    auto tgt = batch({{1, 4}});
    auto path = std::filesystem::temp_directory_path() / "motrans_params.bin";
    m1.save_parameters(path);
    m2.load_parameters(path);
    auto l1 = m1.forward(src, tgt);
    auto l2 = m2.forward(src, tgt);
    for (std::size_t i = 0; i < l1.size(); ++i) CHECK(l1.data()[i] == l2.data()[i]);

    auto snap = m1.snapshot();
    m1.parameters()[0].tensor.data()[0] += 1.0f;
    m1.restore(snap);
    auto l3 = m1.forward(src, tgt);
    for (std::size_t i = 0; i < l1.size(); ++i) CHECK(l1.data()[i] == l3.data()[i]);

    auto other = build_plan(baseline(4, 3, 4, 64), {32, 16, 16});
    RngStream c(3);
    Transformer<float> m3(other, c);
    CHECK_THROWS(m3.load_parameters(path));
    Transformer<double> m4(plan, c);
    CHECK_THROWS(m4.load_parameters(path));
    std::filesystem::remove(path);
  }

  TEST_CASE("untrained model is near uniform") {
    auto g = baseline(3, 3, 4, 64);
    RngStream init(5);
    Transformer<double> model(build_plan(g, {32, 16, 16}), init);
    auto src = batch({{4, 5, 6, 7}, {8, 9, 10}});
    auto tgt = batch({{1, 4, 5, 6, 7}, {1, 8, 9, 10}});
    std::vector<int> targets{4, 5, 6, 7, 2, 8, 9, 10, 2, 0};
    const double ppl = std::exp(cross_entropy(model.forward(src, tgt), targets, 0).item());
    CHECK(ppl > 16.0 / 2);
    CHECK(ppl < 16.0 * 2);
  }
}
