#pragma once

// Differentiable fuzzy first-order logic over a batch: product t-norm,
// max / probabilistic-sum disjunction, 1 - a negation, max(1 - a, b)
// implication, and power-mean quantifiers whose domain is the batch.

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ltngan/autodiff.hpp"

namespace ltngan::logic {

using ad::Var;

inline constexpr double kDefaultExponent = 2.0;

enum class OrKind { kMax, kProbSum };

// Connectives on truth tensors (any matching or broadcastable shapes).
Var t_and(const Var& a, const Var& b);
Var t_or(const Var& a, const Var& b, OrKind kind);
Var t_not(const Var& a);
Var t_implies(const Var& a, const Var& b);

/// ((1/n) sum v^p)^(1/p) over every element of `values`.
Var power_mean(const Var& values, double p);
/// Universal quantifier: 1 - M_p(1 - truths). Min-like; p = 1 is the arithmetic mean.
Var forall_sat(const Var& truths, double p = kDefaultExponent);
/// Existential quantifier: M_p(truths). Max-like; tends to max(truths) as p grows.
Var exists_sat(const Var& truths, double p = kDefaultExponent);

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct PredicateRef {
  std::string name;
};
struct Not {
  FormulaPtr arg;
};
struct And {
  FormulaPtr lhs, rhs;
};
struct Or {
  FormulaPtr lhs, rhs;
  OrKind kind = OrKind::kMax;
};
struct Implies {
  FormulaPtr lhs, rhs;
};
struct ForAll {
  FormulaPtr body;
  double p = kDefaultExponent;
};
struct Exists {
  FormulaPtr body;
  double p = kDefaultExponent;
};
/// Soft equality of batch means: 1 - |mean(lhs) - mean(rhs)|.
struct MeanBalance {
  FormulaPtr lhs, rhs;
};

struct Formula {
  std::variant<PredicateRef, Not, And, Or, Implies, ForAll, Exists, MeanBalance> node;
};

FormulaPtr pred(std::string name);
FormulaPtr lnot(FormulaPtr f);
FormulaPtr land(FormulaPtr a, FormulaPtr b);
FormulaPtr lor(FormulaPtr a, FormulaPtr b, OrKind kind = OrKind::kMax);
FormulaPtr implies(FormulaPtr a, FormulaPtr b);
FormulaPtr forall(FormulaPtr body, double p = kDefaultExponent);
FormulaPtr exists(FormulaPtr body, double p = kDefaultExponent);
FormulaPtr mean_balance(FormulaPtr a, FormulaPtr b);
/// Left fold of `land` / `lor` over a nonempty list.
FormulaPtr land_all(const std::vector<FormulaPtr>& fs);
FormulaPtr lor_all(const std::vector<FormulaPtr>& fs, OrKind kind);

std::string to_string(const Formula& f);
/// True when the outermost node aggregates over the batch.
bool is_quantified(const Formula& f);

/// Per-sample truth degrees, one n x 1 column per predicate name.
using PredicateTruths = std::map<std::string, Var>;

class UnknownPredicate : public std::out_of_range {
 public:
  UnknownPredicate(const std::string& name, const PredicateTruths& available);
};

/// Quantified and balance formulas yield 1 x 1; open formulas yield n x 1.
Var eval_formula(const Formula& f, const PredicateTruths& truths);

struct Rule {
  std::string name;
  FormulaPtr formula;
  double weight = 1.0;
};

class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  KnowledgeBase(std::vector<Rule> rules, double w_min = 0.1, double w_max = 10.0, bool adaptive = false);

  const std::vector<Rule>& rules() const { return rules_; }
  std::size_t size() const { return rules_.size(); }
  double w_min() const { return w_min_; }
  double w_max() const { return w_max_; }
  bool adaptive() const { return adaptive_; }
  std::vector<double> weights() const;
  /// Values outside [w_min, w_max] are rejected.
  void set_weight(std::size_t i, double w);
  std::vector<std::string> rule_names() const;

 private:
  std::vector<Rule> rules_;
  double w_min_ = 0.1;
  double w_max_ = 10.0;
  bool adaptive_ = false;
};

struct SatisfactionReport {
  std::vector<double> rule_sats;
  double s_logic = 0.0;
  double loss = 1.0;
  Var loss_node;                // 1 - S_logic, differentiable
  std::vector<Var> rule_nodes;  // per-rule 1 x 1 satisfaction
};

/// S_logic = sum w_i Sat_i / sum w_i and loss = 1 - S_logic.
SatisfactionReport kb_satisfaction(const KnowledgeBase& kb, const PredicateTruths& truths);

/// One line per rule: name, structure, weight, and (optionally) satisfaction.
std::string dump(const KnowledgeBase& kb, const SatisfactionReport* report = nullptr);

}  // namespace ltngan::logic
