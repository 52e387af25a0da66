#include "motrans/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace motrans {

NgramCounts ngram_counts(std::span<const int> tokens, int n) {
  NgramCounts counts;
  if (n < 1 || tokens.size() < static_cast<std::size_t>(n)) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<int>(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

BleuStats bleu_stats(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references, int max_n) {
  if (hypotheses.size() != references.size()) {
    throw std::invalid_argument("bleu: hypothesis and reference counts differ");
  }
  if (hypotheses.empty()) throw std::invalid_argument("bleu: empty corpus");
  if (max_n < 1) throw std::invalid_argument("bleu: max_n must be >= 1");
  BleuStats st;
  st.matches.assign(max_n, 0);
  st.totals.assign(max_n, 0);
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& hyp = hypotheses[s];
    const auto& ref = references[s];
    st.hyp_length += static_cast<long long>(hyp.size());
    st.ref_length += static_cast<long long>(ref.size());
    for (int n = 1; n <= max_n; ++n) {
      const auto hc = ngram_counts(hyp, n);
      const auto rc = ngram_counts(ref, n);
      for (const auto& [gram, count] : hc) {
        auto it = rc.find(gram);
        if (it != rc.end()) st.matches[n - 1] += std::min(count, it->second);
        st.totals[n - 1] += count;
      }
    }
  }
  return st;
}

double bleu(const BleuStats& st) {
  if (st.hyp_length == 0) return 0.0;
  double log_sum = 0.0;
  const auto max_n = st.matches.size();
  for (std::size_t n = 0; n < max_n; ++n) {
    if (st.matches[n] == 0 || st.totals[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(st.matches[n]) / static_cast<double>(st.totals[n]));
  }
  const double c = static_cast<double>(st.hyp_length);
  const double r = static_cast<double>(st.ref_length);
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return std::clamp(100.0 * bp * std::exp(log_sum / static_cast<double>(max_n)), 0.0, 100.0);
}

double bleu(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references, int max_n) {
  return bleu(bleu_stats(hypotheses, references, max_n));
}

double perplexity(double mean_nll) {
  if (std::isnan(mean_nll) || mean_nll < 0.0) throw std::invalid_argument("perplexity: mean_nll must be >= 0");
  return std::exp(mean_nll);
}

}  // namespace motrans
