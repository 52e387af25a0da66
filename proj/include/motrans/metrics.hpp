#pragma once

#include <map>
#include <span>
#include <vector>

namespace motrans {

using TokenSeq = std::vector<int>;
using NgramCounts = std::map<std::vector<int>, int>;

// All n-grams of exactly length n with occurrence counts.
NgramCounts ngram_counts(std::span<const int> tokens, int n);

struct BleuStats {
  std::vector<long long> matches;  // clipped matches per order 1..max_n
  std::vector<long long> totals;   // candidate n-grams per order
  long long hyp_length = 0;
  long long ref_length = 0;
};

BleuStats bleu_stats(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references,
                     int max_n = 4);

// Corpus BLEU in [0, 100]: clipped precisions pooled over the corpus, uniform
// geometric mean, brevity penalty, no smoothing.
double bleu(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references, int max_n = 4);
double bleu(const BleuStats& stats);

// exp(mean_nll); mean_nll is per-token cross-entropy in nats.
double perplexity(double mean_nll);

}  // namespace motrans
