#include "ltngan/fuzzy.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace ltngan::logic {

Var t_and(const Var& a, const Var& b) { return a * b; }

Var t_or(const Var& a, const Var& b, OrKind kind) {
  if (kind == OrKind::kMax) return ad::maximum(a, b);
  return a + b - a * b;
}

Var t_not(const Var& a) { return ad::one_minus(a); }

Var t_implies(const Var& a, const Var& b) { return ad::maximum(ad::one_minus(a), b); }

Var power_mean(const Var& values, double p) {
  if (values.size() == 0) throw std::invalid_argument("power_mean over an empty batch");
  if (p == 0.0) throw std::invalid_argument("power_mean exponent must be nonzero");
  if (p == 1.0) return ad::mean(values);
  // M_p(v) = m M_p(v / m) for any constant m > 0. Scaling by the max keeps
  // v^p from underflowing at large p; skipped otherwise so results do not move.
  const double m = *std::max_element(values.data().begin(), values.data().end());
  if (p > 0.0 && m > 0.0 && p * std::log(m) < -300.0) {
    return ad::pow(ad::mean(ad::pow(values * (1.0 / m), p)), 1.0 / p) * m;
  }
  return ad::pow(ad::mean(ad::pow(values, p)), 1.0 / p);
}

Var forall_sat(const Var& truths, double p) { return ad::one_minus(power_mean(ad::one_minus(truths), p)); }

Var exists_sat(const Var& truths, double p) { return power_mean(truths, p); }

FormulaPtr pred(std::string name) { return std::make_shared<const Formula>(Formula{PredicateRef{std::move(name)}}); }
FormulaPtr lnot(FormulaPtr f) { return std::make_shared<const Formula>(Formula{Not{std::move(f)}}); }
FormulaPtr land(FormulaPtr a, FormulaPtr b) {
  return std::make_shared<const Formula>(Formula{And{std::move(a), std::move(b)}});
}
FormulaPtr lor(FormulaPtr a, FormulaPtr b, OrKind kind) {
  return std::make_shared<const Formula>(Formula{Or{std::move(a), std::move(b), kind}});
}
FormulaPtr implies(FormulaPtr a, FormulaPtr b) {
  return std::make_shared<const Formula>(Formula{Implies{std::move(a), std::move(b)}});
}
FormulaPtr forall(FormulaPtr body, double p) { return std::make_shared<const Formula>(Formula{ForAll{std::move(body), p}}); }
FormulaPtr exists(FormulaPtr body, double p) { return std::make_shared<const Formula>(Formula{Exists{std::move(body), p}}); }
FormulaPtr mean_balance(FormulaPtr a, FormulaPtr b) {
  return std::make_shared<const Formula>(Formula{MeanBalance{std::move(a), std::move(b)}});
}

FormulaPtr land_all(const std::vector<FormulaPtr>& fs) {
  if (fs.empty()) throw std::invalid_argument("land_all of no formulas");
  FormulaPtr acc = fs.front();
  for (std::size_t i = 1; i < fs.size(); ++i) acc = land(acc, fs[i]);
  return acc;
}

FormulaPtr lor_all(const std::vector<FormulaPtr>& fs, OrKind kind) {
  if (fs.empty()) throw std::invalid_argument("lor_all of no formulas");
  FormulaPtr acc = fs.front();
  for (std::size_t i = 1; i < fs.size(); ++i) acc = lor(acc, fs[i], kind);
  return acc;
}

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string fmt_p(double p) {
  std::ostringstream os;
  os << p;
  return os.str();
}

}  // namespace

std::string to_string(const Formula& f) {
  return std::visit(
      Overloaded{
          [](const PredicateRef& n) { return n.name; },
          [](const Not& n) { return "~" + to_string(*n.arg); },
          [](const And& n) { return "(" + to_string(*n.lhs) + " & " + to_string(*n.rhs) + ")"; },
          [](const Or& n) {
            return "(" + to_string(*n.lhs) + (n.kind == OrKind::kMax ? " | " : " |+ ") + to_string(*n.rhs) + ")";
          },
          [](const Implies& n) { return "(" + to_string(*n.lhs) + " -> " + to_string(*n.rhs) + ")"; },
          [](const ForAll& n) { return "forall[p=" + fmt_p(n.p) + "] " + to_string(*n.body); },
          [](const Exists& n) { return "exists[p=" + fmt_p(n.p) + "] " + to_string(*n.body); },
          [](const MeanBalance& n) { return "balance(" + to_string(*n.lhs) + ", " + to_string(*n.rhs) + ")"; },
      },
      f.node);
}

bool is_quantified(const Formula& f) {
  return std::holds_alternative<ForAll>(f.node) || std::holds_alternative<Exists>(f.node) ||
         std::holds_alternative<MeanBalance>(f.node);
}

namespace {

std::string describe(const std::string& name, const PredicateTruths& available) {
  std::string msg = "unknown predicate '" + name + "'; available:";
  for (const auto& [k, _] : available) msg += " " + k;
  return msg;
}

}  // namespace

UnknownPredicate::UnknownPredicate(const std::string& name, const PredicateTruths& available)
    : std::out_of_range(describe(name, available)) {}

Var eval_formula(const Formula& f, const PredicateTruths& truths) {
  auto open = [&](const FormulaPtr& g) {
    if (is_quantified(*g)) throw std::invalid_argument("nested quantifier in " + to_string(f));
    return eval_formula(*g, truths);
  };
  return std::visit(Overloaded{
                        [&](const PredicateRef& n) {
                          auto it = truths.find(n.name);
                          if (it == truths.end()) throw UnknownPredicate(n.name, truths);
                          return it->second;
                        },
                        [&](const Not& n) { return t_not(open(n.arg)); },
                        [&](const And& n) { return t_and(open(n.lhs), open(n.rhs)); },
                        [&](const Or& n) { return t_or(open(n.lhs), open(n.rhs), n.kind); },
                        [&](const Implies& n) { return t_implies(open(n.lhs), open(n.rhs)); },
                        [&](const ForAll& n) { return forall_sat(open(n.body), n.p); },
                        [&](const Exists& n) { return exists_sat(open(n.body), n.p); },
                        [&](const MeanBalance& n) {
                          return ad::one_minus(ad::abs(ad::mean(open(n.lhs)) - ad::mean(open(n.rhs))));
                        },
                    },
                    f.node);
}

KnowledgeBase::KnowledgeBase(std::vector<Rule> rules, double w_min, double w_max, bool adaptive)
    : rules_(std::move(rules)), w_min_(w_min), w_max_(w_max), adaptive_(adaptive) {
  if (rules_.empty()) throw std::invalid_argument("knowledge base needs at least one rule");
  if (!(w_min_ > 0.0) || w_min_ > w_max_) throw std::invalid_argument("knowledge base weight bounds are invalid");
  for (const auto& r : rules_) {
    if (!r.formula || !is_quantified(*r.formula)) {
      throw std::invalid_argument("rule '" + r.name + "' must be quantified over the batch");
    }
    if (r.weight < w_min_ || r.weight > w_max_) {
      throw std::invalid_argument("rule '" + r.name + "' weight outside [w_min, w_max]");
    }
  }
}

std::vector<double> KnowledgeBase::weights() const {
  std::vector<double> w;
  for (const auto& r : rules_) w.push_back(r.weight);
  return w;
}

void KnowledgeBase::set_weight(std::size_t i, double w) {
  if (w < w_min_ || w > w_max_) throw std::out_of_range("rule weight outside [w_min, w_max]");
  rules_.at(i).weight = w;
}

std::vector<std::string> KnowledgeBase::rule_names() const {
  std::vector<std::string> names;
  for (const auto& r : rules_) names.push_back(r.name);
  return names;
}

SatisfactionReport kb_satisfaction(const KnowledgeBase& kb, const PredicateTruths& truths) {
  if (kb.size() == 0) throw std::invalid_argument("empty knowledge base");
  double wsum = 0.0;
  for (const auto& r : kb.rules()) wsum += r.weight;
  if (!(wsum > 0.0)) throw std::invalid_argument("knowledge base weights sum to zero");

  SatisfactionReport report;
  Var weighted;
  for (const auto& r : kb.rules()) {
    Var sat = eval_formula(*r.formula, truths);
    report.rule_nodes.push_back(sat);
    report.rule_sats.push_back(sat.item());
    Var term = sat * (r.weight / wsum);
    weighted = weighted.valid() ? weighted + term : term;
  }
  report.loss_node = ad::one_minus(weighted);
  double s = 0.0;
  for (std::size_t i = 0; i < kb.size(); ++i) s += kb.rules()[i].weight * report.rule_sats[i];
  report.s_logic = s / wsum;
  report.loss = 1.0 - report.s_logic;
  return report;
}

std::string dump(const KnowledgeBase& kb, const SatisfactionReport* report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  for (std::size_t i = 0; i < kb.size(); ++i) {
    const auto& r = kb.rules()[i];
    os << r.name << "\tw=" << r.weight;
    if (report != nullptr) os << "\tsat=" << report->rule_sats[i];
    os << "\t" << to_string(*r.formula) << "\n";
  }
  return os.str();
}

}  // namespace ltngan::logic
