#pragma once

#include <set>
#include <stdexcept>

#include "motrans/config.hpp"
#include "motrans/genome.hpp"

namespace testing {

// Standard-transformer shape: [SA, FFN] encoders, [M-MHA, C-MHA, FFN]
// decoders, every decoder wired to the last encoder.
inline motrans::Genome baseline(int ne, int nd, int heads = 4, int dim = 512) {
  motrans::Genome g;
  for (int i = 0; i < ne; ++i) g.encoders.push_back({1, heads, dim});
  for (int i = 0; i < nd; ++i) g.decoders.push_back({1, heads, heads, dim, ne});
  return g;
}

inline motrans::SearchConfig tiny_config() {
  motrans::SearchConfig c = motrans::SearchConfig::desk();
  c.encoder_bounds = {1, 2};
  c.decoder_bounds = {1, 2};
  c.heads = {4};
  c.ffn_dims = {64};
  return c;
}

// Count by raw enumeration plus validate(): every block position is swept
// over a box of raw integers wider than any legal domain, and positions are
// independent so the count factorizes.
inline motrans::BigInt factorized_count(int ne, int nd, const motrans::SearchConfig& cfg) {
  std::set<int> raw{0, -1};
  for (int h : cfg.heads) raw.insert(h);
  for (int d : cfg.ffn_dims) raw.insert(d);
  motrans::Genome base = baseline(ne, nd, cfg.heads[0], cfg.ffn_dims[0]);
  if (!validate(base, cfg).empty()) throw std::logic_error("factorized_count: baseline outside the config");
  motrans::BigInt total = 1;
  for (int i = 0; i < ne; ++i) {
    long long n = 0;
    for (int te = 0; te <= 5; ++te)
      for (int p1 : raw)
        for (int p2 : raw) {
          motrans::Genome g = base;
          g.encoders[i] = {te, p1, p2};
          if (validate(g, cfg).empty()) ++n;
        }
    total *= n;
  }
  for (int i = 0; i < nd; ++i) {
    long long n = 0;
    for (int td = 0; td <= 4; ++td)
      for (int p1 : raw)
        for (int p2 : raw)
          for (int p3 : raw)
            for (int ce = 0; ce <= ne + 1; ++ce) {
              motrans::Genome g = base;
              g.decoders[i] = {td, p1, p2, p3, ce};
              if (validate(g, cfg).empty()) ++n;
            }
    total *= n;
  }
  return total;
}

}  // namespace testing
