#include "motrans/genome.hpp"

#include <algorithm>
#include <sstream>

namespace motrans {

namespace {

using K = LayerKind;

constexpr std::array<std::array<LayerKind, kEncoderSlots>, kEncoderTypes> kEncoderTable{{
    {K::SelfAttention, K::FeedForward},
    {K::FeedForward, K::SelfAttention},
    {K::SelfAttention, K::SelfAttention},
    {K::FeedForward, K::FeedForward},
}};

constexpr std::array<std::array<LayerKind, kDecoderSlots>, kDecoderTypes> kDecoderTable{{
    {K::MaskedSelfAttention, K::CrossAttention, K::FeedForward},
    {K::CrossAttention, K::MaskedSelfAttention, K::FeedForward},
    {K::MaskedSelfAttention, K::FeedForward, K::CrossAttention},
}};

bool contains(const std::vector<int>& domain, int v) {
  return std::find(domain.begin(), domain.end(), v) != domain.end();
}

const std::vector<int>& domain_for(LayerKind kind, const SearchConfig& cfg) {
  return is_attention(kind) ? cfg.heads : cfg.ffn_dims;
}

std::string slot_problem(const std::string& where, int slot, LayerKind kind, int value) {
  std::ostringstream os;
  os << where << ": p" << slot + 1 << " (" << (is_attention(kind) ? "heads " : "ffn dim ") << value
     << ") not in domain";
  return os.str();
}

void structural_problems(const Genome& g, std::vector<std::string>& out) {
  if (g.ne() < 1) out.push_back("ne must be at least 1");
  if (g.nd() < 1) out.push_back("nd must be at least 1");
  for (int i = 0; i < g.ne(); ++i) {
    const auto& b = g.encoders[i];
    if (b.te < 1 || b.te > kEncoderTypes) {
      out.push_back("encoder block " + std::to_string(i + 1) + ": te " + std::to_string(b.te) +
                    " out of range [1,4]");
    }
  }
  for (int i = 0; i < g.nd(); ++i) {
    const auto& b = g.decoders[i];
    const std::string where = "decoder block " + std::to_string(i + 1);
    if (b.td < 1 || b.td > kDecoderTypes) {
      out.push_back(where + ": td " + std::to_string(b.td) + " out of range [1,3]");
    }
    if (b.ce < 1 || b.ce > g.ne()) {
      out.push_back(where + ": ce " + std::to_string(b.ce) + " out of range [1," +
                    std::to_string(g.ne()) + "]");
    }
  }
  if (g.nd() >= 1 && g.ne() >= 1 && g.decoders.back().ce != g.ne()) {
    out.push_back("last decoder not wired to last encoder");
  }
}

void require_valid_structure(const Genome& g) {
  auto ps = validate_structure(g);
  if (ps.empty()) return;
  std::ostringstream os;
  os << "invalid genome:";
  for (const auto& p : ps) os << " " << p << ";";
  throw GenomeError(os.str());
}

}  // namespace

const char* to_string(LayerKind kind) {
  switch (kind) {
    case K::SelfAttention: return "SA";
    case K::MaskedSelfAttention: return "M-MHA";
    case K::CrossAttention: return "C-MHA";
    case K::FeedForward: return "FFN";
  }
  return "?";
}

const std::array<LayerKind, kEncoderSlots>& encoder_composition(int te) {
  if (te < 1 || te > kEncoderTypes) throw GenomeError("encoder type out of range: " + std::to_string(te));
  return kEncoderTable[te - 1];
}

const std::array<LayerKind, kDecoderSlots>& decoder_composition(int td) {
  if (td < 1 || td > kDecoderTypes) throw GenomeError("decoder type out of range: " + std::to_string(td));
  return kDecoderTable[td - 1];
}

std::vector<int> Genome::flat_key() const {
  std::vector<int> xs;
  xs.reserve(2 + 3 * encoders.size() + 5 * decoders.size());
  xs.push_back(ne());
  for (const auto& b : encoders) xs.insert(xs.end(), {b.te, b.p1, b.p2});
  xs.push_back(nd());
  for (const auto& b : decoders) xs.insert(xs.end(), {b.td, b.p1, b.p2, b.p3, b.ce});
  return xs;
}

std::vector<std::string> validate_structure(const Genome& g) {
  std::vector<std::string> out;
  structural_problems(g, out);
  return out;
}

std::vector<std::string> validate(const Genome& g, const SearchConfig& cfg) {
  std::vector<std::string> out;
  if (g.ne() < cfg.encoder_bounds.lower) out.push_back("ne below lower bound");
  if (g.ne() > cfg.encoder_bounds.upper) out.push_back("ne above upper bound");
  if (g.nd() < cfg.decoder_bounds.lower) out.push_back("nd below lower bound");
  if (g.nd() > cfg.decoder_bounds.upper) out.push_back("nd above upper bound");
  structural_problems(g, out);
  for (int i = 0; i < g.ne(); ++i) {
    const auto& b = g.encoders[i];
    if (b.te < 1 || b.te > kEncoderTypes) continue;
    const auto& comp = encoder_composition(b.te);
    for (int s = 0; s < kEncoderSlots; ++s) {
      if (!contains(domain_for(comp[s], cfg), b.param(s))) {
        out.push_back(slot_problem("encoder block " + std::to_string(i + 1), s, comp[s], b.param(s)));
      }
    }
  }
  for (int i = 0; i < g.nd(); ++i) {
    const auto& b = g.decoders[i];
    if (b.td < 1 || b.td > kDecoderTypes) continue;
    const auto& comp = decoder_composition(b.td);
    for (int s = 0; s < kDecoderSlots; ++s) {
      if (!contains(domain_for(comp[s], cfg), b.param(s))) {
        out.push_back(slot_problem("decoder block " + std::to_string(i + 1), s, comp[s], b.param(s)));
      }
    }
  }
  return out;
}

std::vector<int> encode_flat(const Genome& g) {
  require_valid_structure(g);
  return g.flat_key();
}

Genome decode_flat(std::span<const int> xs) {
  auto fail = [](const std::string& why) { throw GenomeError("malformed flat genome: " + why); };
  if (xs.empty()) fail("empty sequence");
  const int ne = xs[0];
  if (ne < 1) fail("ne must be at least 1");
  const std::size_t nd_pos = 1 + 3 * static_cast<std::size_t>(ne);
  if (xs.size() <= nd_pos) fail("sequence too short for " + std::to_string(ne) + " encoder blocks");
  const int nd = xs[nd_pos];
  if (nd < 1) fail("nd must be at least 1");
  const std::size_t expected = nd_pos + 1 + 5 * static_cast<std::size_t>(nd);
  if (xs.size() != expected) {
    fail("expected " + std::to_string(expected) + " integers, got " + std::to_string(xs.size()));
  }
  Genome g;
  g.encoders.reserve(ne);
  for (int i = 0; i < ne; ++i) {
    const auto* p = &xs[1 + 3 * i];
    g.encoders.push_back({p[0], p[1], p[2]});
  }
  g.decoders.reserve(nd);
  for (int i = 0; i < nd; ++i) {
    const auto* p = &xs[nd_pos + 1 + 5 * i];
    g.decoders.push_back({p[0], p[1], p[2], p[3], p[4]});
  }
  require_valid_structure(g);
  return g;
}

Genome decode_flat(std::span<const int> xs, const SearchConfig& cfg) {
  Genome g = decode_flat(xs);
  auto ps = validate(g, cfg);
  if (!ps.empty()) {
    std::ostringstream os;
    os << "invalid genome:";
    for (const auto& p : ps) os << " " << p << ";";
    throw GenomeError(os.str());
  }
  return g;
}

std::string flat_to_string(std::span<const int> xs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) os << ' ';
    os << xs[i];
  }
  return os.str();
}

std::vector<int> flat_from_string(const std::string& s) {
  std::string cleaned = s;
  for (char& c : cleaned) {
    if (c == ',' || c == '[' || c == ']' || c == '{' || c == '}') c = ' ';
  }
  std::istringstream is(cleaned);
  std::vector<int> xs;
  std::string tok;
  while (is >> tok) {
    std::size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(tok, &pos);
    } catch (const std::exception&) {
      throw GenomeError("malformed flat genome: non-integer token '" + tok + "'");
    }
    if (pos != tok.size()) throw GenomeError("malformed flat genome: non-integer token '" + tok + "'");
    xs.push_back(v);
  }
  return xs;
}

BigInt search_space_size(int ne, int nd, const SearchConfig& cfg) {
  if (ne < 1 || nd < 1) throw GenomeError("search_space_size: ne and nd must be >= 1");
  auto size_of = [&](LayerKind kind) -> BigInt { return BigInt(domain_for(kind, cfg).size()); };
  BigInt per_encoder = 0;
  for (int te = 1; te <= kEncoderTypes; ++te) {
    BigInt prod = 1;
    for (auto kind : encoder_composition(te)) prod *= size_of(kind);
    per_encoder += prod;
  }
  BigInt per_decoder = 0;
  for (int td = 1; td <= kDecoderTypes; ++td) {
    BigInt prod = 1;
    for (auto kind : decoder_composition(td)) prod *= size_of(kind);
    per_decoder += prod;
  }
  // Every decoder but the last picks its cross source among ne encoders.
  const BigInt wired_decoder = per_decoder * ne;
  return boost::multiprecision::pow(per_encoder, ne) * boost::multiprecision::pow(wired_decoder, nd - 1) *
         per_decoder;
}

BigInt total_search_space_size(const SearchConfig& cfg) {
  BigInt total = 0;
  for (int ne = cfg.encoder_bounds.lower; ne <= cfg.encoder_bounds.upper; ++ne) {
    for (int nd = cfg.decoder_bounds.lower; nd <= cfg.decoder_bounds.upper; ++nd) {
      total += search_space_size(ne, nd, cfg);
    }
  }
  return total;
}

std::int64_t attention_param_count(int d) {
  const std::int64_t dd = d;
  return 4 * dd * dd + 4 * dd;
}

std::int64_t feed_forward_param_count(int d, int hidden) {
  const std::int64_t dd = d, hh = hidden;
  return dd * hh + hh + hh * dd + dd;
}

std::int64_t layer_norm_param_count(int d) { return 2 * static_cast<std::int64_t>(d); }

std::int64_t param_count(const Genome& g, const ModelGlobals& globals) {
  require_valid_structure(g);
  const int d = globals.embedding_size;
  auto layer = [&](LayerKind kind, int p) {
    const std::int64_t body = is_attention(kind) ? attention_param_count(d) : feed_forward_param_count(d, p);
    return body + layer_norm_param_count(d);
  };
  std::int64_t total = static_cast<std::int64_t>(globals.src_vocab) * d +
                       static_cast<std::int64_t>(globals.tgt_vocab) * d;
  for (const auto& b : g.encoders) {
    const auto& comp = encoder_composition(b.te);
    for (int s = 0; s < kEncoderSlots; ++s) total += layer(comp[s], b.param(s));
  }
  for (const auto& b : g.decoders) {
    const auto& comp = decoder_composition(b.td);
    for (int s = 0; s < kDecoderSlots; ++s) total += layer(comp[s], b.param(s));
  }
  total += static_cast<std::int64_t>(d) * globals.tgt_vocab + globals.tgt_vocab;
  return total;
}

std::string render_dot(const Genome& g) {
  require_valid_structure(g);
  auto label = [](LayerKind kind, int p) {
    return std::string(to_string(kind)) + (is_attention(kind) ? "\\nheads=" : "\\ndim=") + std::to_string(p);
  };
  auto enc_node = [](int block, int slot) { return "e" + std::to_string(block) + "_" + std::to_string(slot); };
  auto dec_node = [](int block, int slot) { return "d" + std::to_string(block) + "_" + std::to_string(slot); };

  std::ostringstream os;
  os << "digraph genome {\n";
  os << "  rankdir=BT;\n";
  os << "  node [shape=box];\n";
  os << "  subgraph cluster_encoder {\n";
  os << "    label=\"encoder (" << g.ne() << " blocks)\";\n";
  for (int i = 0; i < g.ne(); ++i) {
    const auto& b = g.encoders[i];
    const auto& comp = encoder_composition(b.te);
    for (int s = 0; s < kEncoderSlots; ++s) {
      os << "    " << enc_node(i + 1, s + 1) << " [label=\"" << label(comp[s], b.param(s)) << "\"];\n";
    }
  }
  os << "  }\n";
  os << "  subgraph cluster_decoder {\n";
  os << "    label=\"decoder (" << g.nd() << " blocks)\";\n";
  for (int i = 0; i < g.nd(); ++i) {
    const auto& b = g.decoders[i];
    const auto& comp = decoder_composition(b.td);
    for (int s = 0; s < kDecoderSlots; ++s) {
      os << "    " << dec_node(i + 1, s + 1) << " [label=\"" << label(comp[s], b.param(s)) << "\"];\n";
    }
  }
  os << "  }\n";

  std::string prev;
  for (int i = 0; i < g.ne(); ++i) {
    for (int s = 0; s < kEncoderSlots; ++s) {
      auto cur = enc_node(i + 1, s + 1);
      if (!prev.empty()) os << "  " << prev << " -> " << cur << ";\n";
      prev = cur;
    }
  }
  prev.clear();
  for (int i = 0; i < g.nd(); ++i) {
    for (int s = 0; s < kDecoderSlots; ++s) {
      auto cur = dec_node(i + 1, s + 1);
      if (!prev.empty()) os << "  " << prev << " -> " << cur << ";\n";
      prev = cur;
    }
  }
  for (int i = 0; i < g.nd(); ++i) {
    const auto& b = g.decoders[i];
    const auto& comp = decoder_composition(b.td);
    const int cross_slot =
        static_cast<int>(std::find(comp.begin(), comp.end(), LayerKind::CrossAttention) - comp.begin());
    os << "  " << enc_node(b.ce, kEncoderSlots) << " -> " << dec_node(i + 1, cross_slot + 1)
       << " [style=dashed, color=blue];\n";
  }
  os << "}\n";
  return os.str();
}

void to_json(nlohmann::json& j, const Genome& g) {
  auto encs = nlohmann::json::array();
  for (const auto& b : g.encoders) encs.push_back({{"te", b.te}, {"p1", b.p1}, {"p2", b.p2}});
  auto decs = nlohmann::json::array();
  for (const auto& b : g.decoders) {
    decs.push_back({{"td", b.td}, {"p1", b.p1}, {"p2", b.p2}, {"p3", b.p3}, {"ce", b.ce}});
  }
  j = {{"ne", g.ne()}, {"encoders", encs}, {"nd", g.nd()}, {"decoders", decs}};
}

void from_json(const nlohmann::json& j, Genome& g) {
  try {
    g.encoders.clear();
    g.decoders.clear();
    for (const auto& b : j.at("encoders")) {
      g.encoders.push_back({b.at("te").get<int>(), b.at("p1").get<int>(), b.at("p2").get<int>()});
    }
    for (const auto& b : j.at("decoders")) {
      g.decoders.push_back({b.at("td").get<int>(), b.at("p1").get<int>(), b.at("p2").get<int>(),
                            b.at("p3").get<int>(), b.at("ce").get<int>()});
    }
    if (j.contains("ne") && j["ne"].get<int>() != g.ne()) throw GenomeError("ne does not match encoders length");
    if (j.contains("nd") && j["nd"].get<int>() != g.nd()) throw GenomeError("nd does not match decoders length");
  } catch (const nlohmann::json::exception& e) {
    throw GenomeError(std::string("malformed genome JSON: ") + e.what());
  }
}

}  // namespace motrans
