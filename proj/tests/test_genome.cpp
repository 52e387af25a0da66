#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "motrans/genome.hpp"
#include "motrans/nn/model.hpp"
#include "motrans/variation.hpp"
#include "oracles.hpp"

using namespace motrans;
using testing::baseline;
using testing::factorized_count;

namespace {

bool contains(const std::vector<std::string>& xs, const std::string& s) {
  return std::find(xs.begin(), xs.end(), s) != xs.end();
}

SearchConfig sized(int lo, int hi, std::vector<int> heads, std::vector<int> dims) {
  SearchConfig c = SearchConfig::full_size();
  c.encoder_bounds = c.decoder_bounds = {lo, hi};
  c.heads = std::move(heads);
  c.ffn_dims = std::move(dims);
  return c;
}

}  // namespace

TEST_SUITE("genome") {
  TEST_CASE("block compositions") {
    using K = LayerKind;
    CHECK(encoder_composition(1) == std::array{K::SelfAttention, K::FeedForward});
    CHECK(encoder_composition(2) == std::array{K::FeedForward, K::SelfAttention});
    CHECK(encoder_composition(3) == std::array{K::SelfAttention, K::SelfAttention});
    CHECK(encoder_composition(4) == std::array{K::FeedForward, K::FeedForward});
    CHECK(decoder_composition(1) == std::array{K::MaskedSelfAttention, K::CrossAttention, K::FeedForward});
    CHECK(decoder_composition(2) == std::array{K::CrossAttention, K::MaskedSelfAttention, K::FeedForward});
    CHECK(decoder_composition(3) == std::array{K::MaskedSelfAttention, K::FeedForward, K::CrossAttention});
    for (int td = 1; td <= 3; ++td) {
      const auto& c = decoder_composition(td);
      CHECK(std::count(c.begin(), c.end(), K::CrossAttention) == 1);
    }
    CHECK_THROWS_AS(encoder_composition(5), GenomeError);
    CHECK_THROWS_AS(decoder_composition(0), GenomeError);
  }

  TEST_CASE("validate") {
    auto cfg = SearchConfig::full_size();
    Genome g = baseline(6, 6);
    CHECK(validate(g, cfg).empty());
    for (int i = 0; i < 5; ++i) g.decoders[i].ce = i + 1;
    CHECK(validate(g, cfg).empty());

    auto short_dec = baseline(4, 2);
    CHECK(validate(short_dec, cfg) == std::vector<std::string>{"nd below lower bound"});

    auto miswired = baseline(5, 4);
    miswired.decoders.back().ce = 3;
    CHECK(validate(miswired, cfg) == std::vector<std::string>{"last decoder not wired to last encoder"});

    auto bad_heads = baseline(3, 3);
    bad_heads.encoders[1].p1 = 5;
    auto ps = validate(bad_heads, cfg);
    REQUIRE(ps.size() == 1);
    CHECK(ps[0].find("encoder block 2") != std::string::npos);

    auto bad_ce = baseline(3, 3);
    bad_ce.decoders[0].ce = 4;
    CHECK(!validate(bad_ce, cfg).empty());
    bad_ce.decoders[0].ce = 0;
    CHECK(!validate(bad_ce, cfg).empty());

    auto many = baseline(8, 2);
    many.encoders[0].te = 9;
    ps = validate(many, cfg);
    CHECK(contains(ps, "ne above upper bound"));
    CHECK(contains(ps, "nd below lower bound"));
    CHECK(ps.size() >= 3);
  }

  TEST_CASE("flat encoding length and order") {
    Genome g;
    g.encoders.push_back({1, 8, 512});
    g.decoders.push_back({1, 8, 8, 512, 1});
    auto xs = encode_flat(g);
    CHECK(xs == std::vector<int>{1, 1, 8, 512, 1, 1, 8, 8, 512, 1});
    CHECK(xs.size() == 10u);

    auto g6 = baseline(6, 6);
    CHECK(encode_flat(g6).size() == 6u * 3 + 6 * 5 + 2);
  }

  TEST_CASE("flat round trip over random genomes") {
    auto cfg = SearchConfig::full_size();
    RngStream rng(11);
    for (int t = 0; t < 2000; ++t) {
      Genome g = init_genome(cfg, rng);
      auto xs = encode_flat(g);
      CHECK(decode_flat(xs, cfg) == g);
      CHECK(decode_flat(xs) == g);
      CHECK(flat_from_string(flat_to_string(xs)) == xs);
    }
  }

  TEST_CASE("decode rejects malformed input") {
    auto cfg = SearchConfig::full_size();
    auto xs = encode_flat(baseline(3, 3));
    auto bad = xs;
    bad[1 + 3 * 3 + 1] = 5;  // td of first decoder
    CHECK_THROWS_AS(decode_flat(bad, cfg), GenomeError);
    CHECK_THROWS_AS(decode_flat(std::vector<int>(xs.begin(), xs.end() - 1), cfg), GenomeError);
    CHECK_THROWS_AS(decode_flat(std::vector<int>{}, cfg), GenomeError);
    auto miswired = xs;
    miswired.back() = 1;
    CHECK_THROWS_AS(decode_flat(miswired, cfg), GenomeError);
    auto extra = xs;
    extra.push_back(7);
    CHECK_THROWS_AS(decode_flat(extra, cfg), GenomeError);
    auto out_of_domain = xs;
    out_of_domain[2] = 16;  // heads of first encoder
    CHECK_THROWS_AS(decode_flat(out_of_domain, cfg), GenomeError);
    CHECK_NOTHROW(decode_flat(out_of_domain));
  }

  TEST_CASE("flat_from_string accepts brackets and commas") {
    CHECK(flat_from_string("{1,[1,8,512],1,[1,8,8,512,1]}") == std::vector<int>{1, 1, 8, 512, 1, 1, 8, 8, 512, 1});
    CHECK_THROWS(flat_from_string("1 2 x"));
  }

  TEST_CASE("search space size") {
    auto cfg = SearchConfig::full_size();
    BigInt expected = 1;
    for (int i = 0; i < 6; ++i) expected *= 16;
    for (int i = 0; i < 5; ++i) expected *= 144;
    expected *= 24;
    BigInt n = search_space_size(6, 6, cfg);
    CHECK(n == expected);
    CHECK(n.str() == "24931223849681289216");
    const double approx = n.convert_to<double>();
    CHECK(approx >= 2.45e19);
    CHECK(approx <= 2.55e19);

    auto single = sized(1, 1, {1}, {1});
    CHECK(search_space_size(1, 1, single) == 12);

    auto two = sized(1, 7, {4, 8}, {512, 1024});
    CHECK(search_space_size(3, 4, two) == factorized_count(3, 4, two));
  }

  TEST_CASE("search space size matches enumeration for every ne*nd <= 12") {
    std::vector<std::pair<std::vector<int>, std::vector<int>>> domains{
        {{4}, {64}}, {{4, 8}, {64}}, {{4}, {64, 128}}, {{4, 8}, {64, 128}}};
    for (const auto& [heads, dims] : domains) {
      auto cfg = sized(1, 12, heads, dims);
      for (int ne = 1; ne <= 12; ++ne) {
        for (int nd = 1; ne * nd <= 12; ++nd) {
          CAPTURE(ne);
          CAPTURE(nd);
          CHECK(search_space_size(ne, nd, cfg) == factorized_count(ne, nd, cfg));
        }
      }
    }
  }

  TEST_CASE("search space size matches literal enumeration on small spaces") {
    struct Case {
      int ne, nd;
      std::vector<int> heads, dims;
    };
    std::vector<Case> cases{{1, 1, {4}, {64}}, {2, 2, {4}, {64}}, {1, 3, {4}, {64}}, {3, 1, {4, 8}, {64}},
                            {2, 1, {4, 8}, {64, 128}}, {1, 2, {4, 8}, {64, 128}}, {2, 3, {4}, {64}}};
    for (const auto& c : cases) {
      auto cfg = sized(1, 7, c.heads, c.dims);
      long long count = 0;
      std::set<std::vector<int>> seen;
      oracle::enumerate_flat(c.ne, c.nd, c.heads, c.dims, [&](const std::vector<int>& xs) {
        ++count;
        seen.insert(xs);
        CHECK(validate(decode_flat(xs), cfg).empty());
      });
      CHECK(static_cast<long long>(seen.size()) == count);
      CHECK(search_space_size(c.ne, c.nd, cfg) == count);
    }
  }

  TEST_CASE("total search space sums the per-size counts") {
    auto cfg = sized(1, 2, {4}, {64});
    CHECK(total_search_space_size(cfg) == 12 + 36 + 48 + 288);
  }

  TEST_CASE("param_count matches the built model") {
    ModelGlobals globals{32, 16, 16};
    auto cfg = SearchConfig::desk();
    RngStream rng(4);
    for (int t = 0; t < 25; ++t) {
      Genome g = init_genome(cfg, rng);
      RngStream init(1);
      nn::Transformer<float> model(nn::build_plan(g, globals), init);
      std::int64_t walked = 0;
      for (const auto& p : model.parameters()) walked += static_cast<std::int64_t>(p.tensor.size());
      CHECK(param_count(g, globals) == walked);
      CHECK(model.parameter_count() == walked);
    }
    auto g3 = baseline(3, 3, 4, 64);
    RngStream init(2);
    nn::Transformer<float> model(nn::build_plan(g3, globals), init);
    std::int64_t walked = 0;
    for (const auto& p : model.parameters()) walked += static_cast<std::int64_t>(p.tensor.size());
    CHECK(param_count(g3, globals) == walked);
  }

  TEST_CASE("param_count closed form for one block each") {
    const int d = 32, h = 64, v = 16;
    Genome g;
    g.encoders.push_back({1, 4, h});
    g.decoders.push_back({1, 4, 4, h, 1});
    const std::int64_t attn = 4LL * d * d + 4 * d;
    const std::int64_t ffn = 2LL * d * h + h + d;
    const std::int64_t ln = 2LL * d;
    const std::int64_t expected = v * d + v * d + (attn + ffn + 2 * ln) + (2 * attn + ffn + 3 * ln) + d * v + v;
    CHECK(param_count(g, {d, v, v}) == expected);
  }

  TEST_CASE("param_count ignores wiring and grows with dims and vocab") {
    ModelGlobals globals{512, 100, 100};
    auto g = baseline(5, 5);
    auto rewired = g;
    rewired.decoders[0].ce = 1;
    rewired.decoders[1].ce = 3;
    rewired.decoders[2].ce = 2;
    CHECK(param_count(g, globals) == param_count(rewired, globals));
    auto wider = g;
    wider.encoders[2].p2 = 1024;
    CHECK(param_count(wider, globals) > param_count(g, globals));
    CHECK(param_count(g, {512, 101, 100}) > param_count(g, globals));
    CHECK(param_count(g, {512, 100, 101}) > param_count(g, globals));
  }

  TEST_CASE("render_dot parses and carries the wiring") {
    auto g = baseline(4, 3, 8, 1024);
    auto dot = oracle::parse_dot(render_dot(g));
    CHECK(dot.directed);
    CHECK(dot.nodes.size() == static_cast<std::size_t>(g.layer_count()));
    std::vector<const oracle::DotGraph::Edge*> cross;
    for (const auto& e : dot.edges) {
      if (e.attrs.count("style") && e.attrs.at("style") == "dashed") cross.push_back(&e);
    }
    REQUIRE(cross.size() == 3u);
    for (const auto* e : cross) CHECK(e->from.rfind("e4_", 0) == 0);
    CHECK(dot.edges.size() == static_cast<std::size_t>(g.layer_count() - 2 + g.nd()));
    CHECK(dot.nodes.at("e1_1").at("label") == "SA\\nheads=8");
    CHECK(dot.nodes.at("e1_2").at("label") == "FFN\\ndim=1024");

    auto w = baseline(4, 4);
    for (int i = 0; i < 3; ++i) w.decoders[i].ce = i + 1;
    w.decoders[1].td = 3;
    dot = oracle::parse_dot(render_dot(w));
    std::vector<std::pair<std::string, std::string>> cross_pairs;
    for (const auto& e : dot.edges) {
      if (e.attrs.count("style")) cross_pairs.emplace_back(e.from, e.to);
    }
    std::vector<std::pair<std::string, std::string>> expected{
        {"e1_2", "d1_2"}, {"e2_2", "d2_3"}, {"e3_2", "d3_2"}, {"e4_2", "d4_2"}};
    CHECK(cross_pairs == expected);
  }

  TEST_CASE("render_dot parses for random genomes") {
    auto cfg = SearchConfig::full_size();
    RngStream rng(8);
    for (int t = 0; t < 200; ++t) {
      Genome g = init_genome(cfg, rng);
      auto dot = oracle::parse_dot(render_dot(g));
      CHECK(dot.nodes.size() == static_cast<std::size_t>(g.layer_count()));
      int cross = 0;
      for (const auto& e : dot.edges) cross += e.attrs.count("style") ? 1 : 0;
      CHECK(cross == g.nd());
    }
  }

  TEST_CASE("json mirror") {
    auto g = baseline(3, 4);
    g.decoders[0].ce = 1;
    nlohmann::json j = g;
    CHECK(j["ne"] == 3);
    CHECK(j["nd"] == 4);
    CHECK(j["encoders"][0]["te"] == 1);
    CHECK(j["decoders"][0]["ce"] == 1);
    CHECK(j.get<Genome>() == g);
    j["ne"] = 2;
    CHECK_THROWS(j.get<Genome>());
  }

  TEST_CASE("ordering follows the flat encoding") {
    auto a = baseline(3, 3);
    auto b = a;
    b.decoders[0].ce = 1;
    CHECK(b < a);
    CHECK(a == a);
  }
}
