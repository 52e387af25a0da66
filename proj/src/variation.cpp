#include "motrans/variation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace motrans {

namespace {

const std::vector<int>& domain_for(LayerKind kind, const SearchConfig& cfg) {
  return is_attention(kind) ? cfg.heads : cfg.ffn_dims;
}

int draw_other(const std::vector<int>& domain, int current, RngStream& rng) {
  std::vector<int> others;
  for (int v : domain) {
    if (v != current) others.push_back(v);
  }
  if (others.empty()) return current;
  return rng.pick(others);
}

std::vector<int> rewirable_decoders(const Genome& g) {
  std::vector<int> out;
  if (g.ne() < 2) return out;
  for (int i = 1; i <= g.nd(); ++i) {
    if (!cross_source_forced(i, g.ne(), g.nd())) out.push_back(i);
  }
  return out;
}

bool any_multi_valued_slot(const SearchConfig& cfg) { return cfg.heads.size() > 1 || cfg.ffn_dims.size() > 1; }

}  // namespace

int aligned_index(int i, int ne, int nd) { return i + std::max(0, ne - nd); }

bool cross_source_forced(int i, int ne, int nd) { return i == nd || (ne < nd && i >= ne); }

std::vector<double> ce_distribution(int i, int ne, int nd) {
  if (ne < 1 || nd < 1) throw std::invalid_argument("ce_distribution: ne and nd must be >= 1");
  if (i < 1 || i > nd) throw std::out_of_range("ce_distribution: decoder position out of range");
  std::vector<double> p(ne, 0.0);
  if (cross_source_forced(i, ne, nd)) {
    p[ne - 1] = 1.0;
    return p;
  }
  const int a = aligned_index(i, ne, nd);
  double total = 0.0;
  for (int j = 1; j <= ne; ++j) {
    p[j - 1] = std::ldexp(1.0, -std::abs(j - a));
    total += p[j - 1];
  }
  for (double& v : p) v /= total;
  return p;
}

int sample_ce(int i, int ne, int nd, RngStream& rng) {
  if (i < 1 || i > nd) throw std::out_of_range("sample_ce: decoder position out of range");
  if (cross_source_forced(i, ne, nd)) return ne;
  const int a = aligned_index(i, ne, nd);
  std::vector<double> w(ne);
  for (int j = 1; j <= ne; ++j) w[j - 1] = std::ldexp(1.0, -std::abs(j - a));
  return static_cast<int>(rng.weighted_index(w)) + 1;
}

EncoderBlockGene random_encoder_block(const SearchConfig& cfg, RngStream& rng) {
  EncoderBlockGene b;
  b.te = static_cast<int>(rng.uniform_int(1, kEncoderTypes));
  const auto& comp = encoder_composition(b.te);
  b.p1 = rng.pick(domain_for(comp[0], cfg));
  b.p2 = rng.pick(domain_for(comp[1], cfg));
  return b;
}

DecoderBlockGene random_decoder_block(int i, int ne, int nd, const SearchConfig& cfg, RngStream& rng) {
  DecoderBlockGene b;
  b.td = static_cast<int>(rng.uniform_int(1, kDecoderTypes));
  const auto& comp = decoder_composition(b.td);
  b.p1 = rng.pick(domain_for(comp[0], cfg));
  b.p2 = rng.pick(domain_for(comp[1], cfg));
  b.p3 = rng.pick(domain_for(comp[2], cfg));
  b.ce = sample_ce(i, ne, nd, rng);
  return b;
}

Genome init_genome(const SearchConfig& cfg, RngStream& rng) {
  const int ne = static_cast<int>(rng.uniform_int(cfg.encoder_bounds.lower, cfg.encoder_bounds.upper));
  const int nd = static_cast<int>(rng.uniform_int(cfg.decoder_bounds.lower, cfg.decoder_bounds.upper));
  Genome g;
  for (int i = 0; i < ne; ++i) g.encoders.push_back(random_encoder_block(cfg, rng));
  for (int i = 1; i <= nd; ++i) g.decoders.push_back(random_decoder_block(i, ne, nd, cfg, rng));
  return g;
}

Genome repair(Genome g) {
  const int ne = std::max(1, g.ne());
  for (auto& b : g.decoders) b.ce = std::clamp(b.ce, 1, ne);
  if (!g.decoders.empty()) g.decoders.back().ce = ne;
  return g;
}

std::pair<Genome, Genome> crossover(const Genome& a, const Genome& b, RngStream& /*rng*/) {
  Genome ca = a;
  Genome cb = b;
  const int ne = std::min(a.ne(), b.ne());
  for (int i = 0; i < ne; ++i) std::swap(ca.encoders[i], cb.encoders[i]);
  const int nd = std::min(a.nd(), b.nd());
  for (int i = 0; i < nd; ++i) std::swap(ca.decoders[i], cb.decoders[i]);
  return {repair(std::move(ca)), repair(std::move(cb))};
}

const char* to_string(MutationKind kind) {
  switch (kind) {
    case MutationKind::AddBlock: return "add-block";
    case MutationKind::DropBlock: return "drop-block";
    case MutationKind::AlterBlockType: return "alter-block-type";
    case MutationKind::AlterLayerParam: return "alter-layer-param";
    case MutationKind::RewireCrossAttention: return "rewire-cross-attention";
  }
  return "?";
}

namespace {

std::vector<Side> add_sides(const Genome& g, const SearchConfig& cfg) {
  std::vector<Side> s;
  if (g.ne() < cfg.encoder_bounds.upper) s.push_back(Side::Encoder);
  if (g.nd() < cfg.decoder_bounds.upper) s.push_back(Side::Decoder);
  return s;
}

std::vector<Side> drop_sides(const Genome& g, const SearchConfig& cfg) {
  std::vector<Side> s;
  if (g.ne() > cfg.encoder_bounds.lower && g.ne() > 1) s.push_back(Side::Encoder);
  if (g.nd() > cfg.decoder_bounds.lower && g.nd() > 1) s.push_back(Side::Decoder);
  return s;
}

bool side_ok(const std::vector<Side>& sides, Side s) {
  return std::find(sides.begin(), sides.end(), s) != sides.end();
}

void add_encoder(Genome& g, const SearchConfig& cfg, RngStream& rng) {
  const int pos = static_cast<int>(rng.uniform_int(1, g.ne() + 1));
  g.encoders.insert(g.encoders.begin() + (pos - 1), random_encoder_block(cfg, rng));
  // Keep each decoder attached to the block it read from before the insert.
  for (auto& d : g.decoders) {
    if (d.ce >= pos) ++d.ce;
  }
}

void drop_encoder(Genome& g, RngStream& rng) {
  const int pos = static_cast<int>(rng.uniform_int(1, g.ne()));
  g.encoders.erase(g.encoders.begin() + (pos - 1));
  for (auto& d : g.decoders) {
    if (d.ce > pos) --d.ce;
  }
}

void add_decoder(Genome& g, const SearchConfig& cfg, RngStream& rng) {
  const int nd = g.nd() + 1;
  const int pos = static_cast<int>(rng.uniform_int(1, nd));
  auto block = random_decoder_block(pos, g.ne(), nd, cfg, rng);
  g.decoders.insert(g.decoders.begin() + (pos - 1), block);
}

void drop_decoder(Genome& g, RngStream& rng) {
  const int pos = static_cast<int>(rng.uniform_int(1, g.nd()));
  g.decoders.erase(g.decoders.begin() + (pos - 1));
}

template <std::size_t N>
void retype(int& type, std::array<int*, N> params, const std::array<LayerKind, N>& old_comp,
            const std::array<LayerKind, N>& (*composition)(int), int type_count, const SearchConfig& cfg,
            RngStream& rng) {
  std::vector<int> others;
  for (int t = 1; t <= type_count; ++t) {
    if (t != type) others.push_back(t);
  }
  type = rng.pick(others);
  const auto& new_comp = composition(type);
  for (std::size_t s = 0; s < N; ++s) {
    // A slot keeps its value when its domain is unchanged.
    if (is_attention(new_comp[s]) != is_attention(old_comp[s])) {
      *params[s] = rng.pick(domain_for(new_comp[s], cfg));
    }
  }
}

void alter_block_type(Genome& g, const SearchConfig& cfg, RngStream& rng) {
  const int which = static_cast<int>(rng.uniform_int(0, g.ne() + g.nd() - 1));
  if (which < g.ne()) {
    auto& b = g.encoders[which];
    const auto old = encoder_composition(b.te);
    retype<kEncoderSlots>(b.te, {&b.p1, &b.p2}, old, encoder_composition, kEncoderTypes, cfg, rng);
  } else {
    auto& b = g.decoders[which - g.ne()];
    const auto old = decoder_composition(b.td);
    retype<kDecoderSlots>(b.td, {&b.p1, &b.p2, &b.p3}, old, decoder_composition, kDecoderTypes, cfg, rng);
  }
}

void alter_layer_param(Genome& g, const SearchConfig& cfg, RngStream& rng) {
  struct Slot {
    int* value;
    LayerKind kind;
  };
  std::vector<Slot> slots;
  for (auto& b : g.encoders) {
    const auto& comp = encoder_composition(b.te);
    slots.push_back({&b.p1, comp[0]});
    slots.push_back({&b.p2, comp[1]});
  }
  for (auto& b : g.decoders) {
    const auto& comp = decoder_composition(b.td);
    slots.push_back({&b.p1, comp[0]});
    slots.push_back({&b.p2, comp[1]});
    slots.push_back({&b.p3, comp[2]});
  }
  std::erase_if(slots, [&](const Slot& s) { return domain_for(s.kind, cfg).size() < 2; });
  if (slots.empty()) return;
  auto& s = rng.pick(slots);
  *s.value = draw_other(domain_for(s.kind, cfg), *s.value, rng);
}

void rewire(Genome& g, RngStream& rng) {
  auto candidates = rewirable_decoders(g);
  if (candidates.empty()) return;
  const int i = rng.pick(candidates);
  g.decoders[i - 1].ce = sample_ce(i, g.ne(), g.nd(), rng);
}

}  // namespace

std::vector<MutationKind> applicable_mutations(const Genome& g, const SearchConfig& cfg) {
  std::vector<MutationKind> out;
  if (!add_sides(g, cfg).empty()) out.push_back(MutationKind::AddBlock);
  if (!drop_sides(g, cfg).empty()) out.push_back(MutationKind::DropBlock);
  out.push_back(MutationKind::AlterBlockType);
  if (any_multi_valued_slot(cfg)) out.push_back(MutationKind::AlterLayerParam);
  if (!rewirable_decoders(g).empty()) out.push_back(MutationKind::RewireCrossAttention);
  return out;
}

Genome apply_mutation(const Genome& g, Mutation m, const SearchConfig& cfg, RngStream& rng) {
  Genome out = g;
  switch (m.kind) {
    case MutationKind::AddBlock:
      if (!side_ok(add_sides(g, cfg), m.side)) throw GenomeError("add-block: at upper bound");
      if (m.side == Side::Encoder) {
        add_encoder(out, cfg, rng);
      } else {
        add_decoder(out, cfg, rng);
      }
      break;
    case MutationKind::DropBlock:
      if (!side_ok(drop_sides(g, cfg), m.side)) throw GenomeError("drop-block: at lower bound");
      if (m.side == Side::Encoder) {
        drop_encoder(out, rng);
      } else {
        drop_decoder(out, rng);
      }
      break;
    case MutationKind::AlterBlockType:
      alter_block_type(out, cfg, rng);
      break;
    case MutationKind::AlterLayerParam:
      alter_layer_param(out, cfg, rng);
      break;
    case MutationKind::RewireCrossAttention:
      rewire(out, rng);
      break;
  }
  return repair(std::move(out));
}

MutationResult mutate_traced(const Genome& g, const SearchConfig& cfg, RngStream& rng) {
  const auto kinds = applicable_mutations(g, cfg);
  Mutation m{rng.pick(kinds), Side::Encoder};
  if (m.kind == MutationKind::AddBlock) m.side = rng.pick(add_sides(g, cfg));
  if (m.kind == MutationKind::DropBlock) m.side = rng.pick(drop_sides(g, cfg));
  return {apply_mutation(g, m, cfg, rng), m};
}

Genome mutate(const Genome& g, const SearchConfig& cfg, RngStream& rng) {
  return mutate_traced(g, cfg, rng).genome;
}

}  // namespace motrans
