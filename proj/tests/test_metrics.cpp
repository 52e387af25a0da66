#include <cmath>

#include "doctest.h"
#include "motrans/metrics.hpp"
#include "motrans/rng.hpp"
#include "oracles.hpp"

using namespace motrans;

TEST_SUITE("metrics") {
  TEST_CASE("identical corpus scores 100") {
    std::vector<TokenSeq> refs{{4, 5, 6, 7, 8}, {9, 10, 11, 12}, {5, 5, 6, 7}};
    CHECK(bleu(refs, refs) == doctest::Approx(100.0).epsilon(1e-12));
  }

  TEST_CASE("no shared unigram scores 0") {
    CHECK(bleu({{4, 5, 6, 7}}, {{8, 9, 10, 11}}) == 0.0);
  }

  TEST_CASE("clipped unigram precision by hand") {
    // "the the the the the the the" vs "the cat is on the mat"
    const int the = 4, cat = 5, is = 6, on = 7, mat = 8;
    TokenSeq hyp(7, the);
    TokenSeq ref{the, cat, is, on, the, mat};
    auto st = bleu_stats({hyp}, {ref});
    CHECK(st.matches[0] == 2);
    CHECK(st.totals[0] == 7);
    CHECK(st.hyp_length == 7);
    CHECK(st.ref_length == 6);
    CHECK(static_cast<double>(st.matches[0]) / st.totals[0] == doctest::Approx(2.0 / 7.0));
    CHECK(st.matches[1] == 0);
    CHECK(bleu({hyp}, {ref}) == 0.0);
  }

  TEST_CASE("brevity penalty and geometric mean") {
    // One 8-token reference, hypothesis is its first 6 tokens.
    TokenSeq ref{4, 5, 6, 7, 8, 9, 10, 11};
    TokenSeq hyp{4, 5, 6, 7, 8, 9};
    const double bp = std::exp(1.0 - 8.0 / 6.0);
    CHECK(bleu({hyp}, {ref}) == doctest::Approx(100.0 * bp).epsilon(1e-12));
    auto st = bleu_stats({hyp}, {ref});
    CHECK(st.totals == std::vector<long long>{6, 5, 4, 3});
  }

  TEST_CASE("short hypotheses contribute no higher-order n-grams") {
    auto st = bleu_stats({{4, 5}}, {{4, 5, 6}});
    CHECK(st.totals == std::vector<long long>{2, 1, 0, 0});
    CHECK(bleu({{4, 5}}, {{4, 5, 6}}) == 0.0);
  }

  TEST_CASE("errors") {
    CHECK_THROWS(bleu({}, {}));
    CHECK_THROWS(bleu({{1}}, {{1}, {2}}));
    CHECK_THROWS(perplexity(-0.1));
  }

  TEST_CASE("agrees with an independent implementation") {
    RngStream rng(12);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<TokenSeq> hyps, refs;
      for (int s = 0; s < 50; ++s) {
        TokenSeq r, h;
        const int rl = static_cast<int>(rng.uniform_int(1, 12));
        for (int i = 0; i < rl; ++i) r.push_back(static_cast<int>(rng.uniform_int(4, 9)));
        h = r;
        const int edits = static_cast<int>(rng.uniform_int(0, 3));
        for (int e = 0; e < edits && !h.empty(); ++e) {
          const auto at = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(h.size()) - 1));
          switch (rng.uniform_int(0, 2)) {
            case 0: h[at] = static_cast<int>(rng.uniform_int(4, 9)); break;
            case 1: h.erase(h.begin() + static_cast<long>(at)); break;
            default: h.insert(h.begin() + static_cast<long>(at), static_cast<int>(rng.uniform_int(4, 9)));
          }
        }
        hyps.push_back(h);
        refs.push_back(r);
      }
      const double ours = bleu(hyps, refs);
      CHECK(std::abs(ours - oracle::bleu(hyps, refs)) <= 1e-6);
      CHECK(ours >= 0.0);
      CHECK(ours <= 100.0);
      // Permuting the corpus leaves the score unchanged.
      std::vector<std::size_t> idx(hyps.size());
      std::iota(idx.begin(), idx.end(), 0);
      rng.shuffle(idx.begin(), idx.end());
      std::vector<TokenSeq> ph, pr;
      for (auto i : idx) {
        ph.push_back(hyps[i]);
        pr.push_back(refs[i]);
      }
      CHECK(bleu(ph, pr) == doctest::Approx(ours).epsilon(1e-12));
    }
  }

  TEST_CASE("100 only for exact matches") {
    std::vector<TokenSeq> refs{{4, 5, 6, 7, 8}, {9, 10, 11, 12, 13}};
    auto hyps = refs;
    hyps[1].push_back(4);
    CHECK(bleu(hyps, refs) < 100.0);
  }

  TEST_CASE("perplexity") {
    for (double v : {2.0, 10.0, 100.0}) CHECK(perplexity(std::log(v)) == doctest::Approx(v).epsilon(1e-12));
    CHECK(perplexity(0.0) == 1.0);
    CHECK(perplexity((std::log(2.0) + std::log(8.0)) / 2) == doctest::Approx(4.0).epsilon(1e-12));
    double prev = 0;
    for (double x = 0; x < 5; x += 0.25) {
      CHECK(perplexity(x) > prev);
      prev = perplexity(x);
    }
  }

  TEST_CASE("ngram counts") {
    auto c = ngram_counts(std::vector<int>{1, 2, 1, 2}, 2);
    CHECK(c.size() == 2u);
    CHECK(c.at({1, 2}) == 2);
    CHECK(c.at({2, 1}) == 1);
    CHECK(ngram_counts(std::vector<int>{1}, 2).empty());
  }
}
