#include "metapop/population.hpp"

#include "metapop/check.hpp"

namespace metapop {

Population extend_population(const Population& pop, const Vector& policy) {
  require(policy.allFinite(), "extend_population: non-finite policy");
  Population next = pop;
  next.members.push_back(policy);
  return next;
}

PayoffMatrix evaluate_meta_game(const GameInstance& game,
                                const Population& pop) {
  require(!pop.members.empty(), "evaluate_meta_game: empty population");
  const int n = pop.size();
  PayoffMatrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      m(i, j) = payoff(game, pop.members[i], pop.members[j]);
  return m;
}

PayoffMatrix evaluate_meta_game(const GameInstance& game,
                                const Population& row, const Population& col) {
  require(!row.members.empty() && !col.members.empty(),
          "evaluate_meta_game: empty population");
  PayoffMatrix m(row.size(), col.size());
  for (int i = 0; i < row.size(); ++i)
    for (int j = 0; j < col.size(); ++j)
      m(i, j) = payoff(game, row.members[i], col.members[j]);
  return m;
}

PayoffMatrix extend_meta_game(const GameInstance& game, const Population& pop,
                              const PayoffMatrix& previous) {
  const int n = pop.size();
  require(previous.rows() == n - 1 && previous.cols() == n - 1,
          "extend_meta_game: matrix does not match population");
  PayoffMatrix m(n, n);
  m.topLeftCorner(n - 1, n - 1) = previous;
  for (int i = 0; i < n; ++i) {
    m(i, n - 1) = payoff(game, pop.members[i], pop.members[n - 1]);
    if (i < n - 1)
      m(n - 1, i) = payoff(game, pop.members[n - 1], pop.members[i]);
  }
  return m;
}

PayoffMatrix extend_meta_game(const GameInstance& game, const Population& row,
                              const Population& col,
                              const PayoffMatrix& previous) {
  const int r = row.size(), c = col.size();
  require(previous.rows() == r - 1 && previous.cols() == c - 1,
          "extend_meta_game: matrix does not match populations");
  PayoffMatrix m(r, c);
  m.topLeftCorner(r - 1, c - 1) = previous;
  for (int i = 0; i < r; ++i)
    m(i, c - 1) = payoff(game, row.members[i], col.members[c - 1]);
  for (int j = 0; j + 1 < c; ++j)
    m(r - 1, j) = payoff(game, row.members[r - 1], col.members[j]);
  return m;
}

void check_distribution(const MetaDistribution& weights, double tol) {
  require(weights.size() >= 1, "meta-distribution is empty");
  require(weights.allFinite(), "meta-distribution has non-finite weights");
  require(weights.minCoeff() >= -tol,
          "meta-distribution has negative weights");
  require(std::abs(weights.sum() - 1.0) <= tol,
          "meta-distribution does not sum to 1");
}

double aggregate_payoff(const GameInstance& game, const Vector& policy,
                        const MetaDistribution& weights,
                        const Population& pop) {
  require(weights.size() == pop.size(),
          "aggregate_payoff: weight/population size mismatch");
  check_distribution(weights);
  double total = 0.0;
  for (int k = 0; k < pop.size(); ++k)
    total += weights(k) * payoff(game, policy, pop.members[k]);
  return total;
}

Vector aggregate_payoff_grad(const GameInstance& game, const Vector& policy,
                             const MetaDistribution& weights,
                             const Population& pop) {
  require(weights.size() == pop.size(),
          "aggregate_payoff_grad: weight/population size mismatch");
  check_distribution(weights);
  Vector grad = Vector::Zero(policy.size());
  for (int k = 0; k < pop.size(); ++k)
    grad += weights(k) * payoff_grad_row(game, policy, pop.members[k]);
  return grad;
}

}  // namespace metapop
