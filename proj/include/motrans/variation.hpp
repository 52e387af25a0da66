#pragma once

#include <utility>
#include <vector>

#include "motrans/config.hpp"
#include "motrans/genome.hpp"
#include "motrans/rng.hpp"

namespace motrans {

// Encoder position the i-th decoder block (1-based) is aligned with: same
// distance from the top when ne >= nd, from the bottom when ne < nd.
int aligned_index(int i, int ne, int nd);

// True when decoder i has no choice of cross source: the last decoder, and
// the surplus decoders i in [ne, nd) when ne < nd. All of them wire to ne.
bool cross_source_forced(int i, int ne, int nd);

// Probability of each encoder j = 1..ne as cross source for decoder i.
// Weights halve per unit of distance from aligned_index(i, ne, nd).
std::vector<double> ce_distribution(int i, int ne, int nd);

int sample_ce(int i, int ne, int nd, RngStream& rng);

EncoderBlockGene random_encoder_block(const SearchConfig& cfg, RngStream& rng);
DecoderBlockGene random_decoder_block(int i, int ne, int nd, const SearchConfig& cfg, RngStream& rng);

Genome init_genome(const SearchConfig& cfg, RngStream& rng);

// Clamp every ce into [1, ne] and wire the last decoder to ne. Idempotent.
Genome repair(Genome g);

// Blocks pair positionally from the bottom over the shorter length on each
// side and every pair is exchanged whole. Surplus blocks stay in place. The
// rng is unused; it keeps the operator signatures uniform.
std::pair<Genome, Genome> crossover(const Genome& a, const Genome& b, RngStream& rng);

enum class MutationKind { AddBlock, DropBlock, AlterBlockType, AlterLayerParam, RewireCrossAttention };
enum class Side { Encoder, Decoder };

struct Mutation {
  MutationKind kind;
  Side side;  // meaningful for AddBlock / DropBlock only
  friend bool operator==(const Mutation&, const Mutation&) = default;
};

const char* to_string(MutationKind kind);

// Kinds whose preconditions hold for g (each listed once).
std::vector<MutationKind> applicable_mutations(const Genome& g, const SearchConfig& cfg);

struct MutationResult {
  Genome genome;
  Mutation applied;
};

// Applies exactly one mutation, chosen uniformly among applicable kinds.
MutationResult mutate_traced(const Genome& g, const SearchConfig& cfg, RngStream& rng);
Genome mutate(const Genome& g, const SearchConfig& cfg, RngStream& rng);
// Applies a specific mutation; throws GenomeError if it is not applicable.
Genome apply_mutation(const Genome& g, Mutation m, const SearchConfig& cfg, RngStream& rng);

}  // namespace motrans
