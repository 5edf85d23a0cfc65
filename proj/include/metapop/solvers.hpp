#pragma once

#include <cstdint>
#include <string>

#include "metapop/population.hpp"

namespace metapop {

enum class SolverArch { kMlp, kConv1d, kGru };

std::string arch_name(SolverArch arch);
SolverArch arch_from_name(const std::string& name);

// Flat parameter vector plus the descriptor needed to interpret it. The
// canonical layout of `flat` per architecture is documented next to the
// layout structs in solvers.cpp.
struct MetaSolverParams {
  SolverArch arch = SolverArch::kMlp;
  int hidden = 64;
  Vector flat;
};

// Expected flat length for an architecture descriptor.
int solver_param_count(SolverArch arch, int hidden);

// Uniform weights in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
MetaSolverParams init_params(SolverArch arch, int hidden, uint64_t seed);

// f_theta : t x t meta-game -> simplex over the t population members.
MetaDistribution solver_forward(const MetaSolverParams& params,
                                const PayoffMatrix& m);

// --- game-theoretic baselines ----------------------------------------------

enum class SolverVariant { kLearned, kUniform, kNash, kLastAgent };

std::string solver_variant_name(SolverVariant variant);
SolverVariant solver_variant_from_name(const std::string& name);

struct SolverSpec {
  SolverVariant variant = SolverVariant::kUniform;
  SolverArch arch = SolverArch::kMlp;  // kLearned only
  int fp_iters = 10000;                // kNash only
};

MetaDistribution baseline_distribution(const SolverSpec& spec,
                                       const PayoffMatrix& m);

// Self-play fictitious play on a zero-sum matrix game with row payoff m;
// returns the empirical row strategy after `rounds` best responses.
MetaDistribution nash_fictitious_play(const PayoffMatrix& m, int rounds);

// Exact Nash equilibrium of the zero-sum matrix game via the classic LP
// transformation solved with a dense simplex.
struct MatrixNash {
  Vector row;
  Vector col;
  double value = 0.0;
};

MatrixNash nash_lp(const PayoffMatrix& m);

// max_i (m * weights)_i: the pure-strategy deviation gain against `weights`.
double matrix_exploitability(const PayoffMatrix& m,
                             const MetaDistribution& weights);

}  // namespace metapop
