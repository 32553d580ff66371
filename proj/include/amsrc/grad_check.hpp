#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "amsrc/tensor.hpp"

namespace amsrc {

// Finite-difference gradient checking. Runs in double precision: 32-bit
// central differences are too noisy for a 1e-4 relative tolerance.

struct GradCheckBlock {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = true;
  std::vector<long> kink_entries;  // one-sided difference quotients disagree
};

struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;
  double max_rel_err = 0.0;
  bool pass = true;

  std::string str() const {
    std::ostringstream os;
    for (const auto& b : blocks) {
      os << (b.pass ? "  ok   " : "  FAIL ") << b.name << "  max_rel_err=" << b.max_rel_err;
      if (!b.kink_entries.empty())
        os << "  (nondifferentiable point suspected at " << b.kink_entries.size() << " entries)";
      os << "\n";
    }
    os << (pass ? "PASS" : "FAIL") << "  overall max_rel_err=" << max_rel_err << "\n";
    return os.str();
  }
};

using CheckedParams = std::vector<std::pair<std::string, Tensor<double>>>;
using NamedLosses = std::vector<std::pair<std::string, Tensor<double>>>;

/// Compares the analytic gradient of the scalar-valued graph built by `f`
/// against central differences (f(t+h)-f(t-h))/2h. The relative error is
/// per parameter block: the largest entrywise deviation over the block's
/// gradient scale, max|a-c| / max(max(|a|,|c|), 1e-8). Entries where forward
/// and backward one-sided quotients disagree are reported as suspected
/// nondifferentiable points instead of silent passes. Non-finite values
/// anywhere are a hard failure naming the parameter.
inline GradCheckReport finite_diff_check(const std::function<Tensor<double>()>& f,
                                         CheckedParams params, double h = 1e-3,
                                         double tol = 1e-4) {
  for (auto& [name, p] : params) {
    if (!p.value().isFinite().all())
      throw NumericalFailure("finite_diff_check: parameter '" + name + "' is not finite");
    p.zero_grad();
  }

  Tensor<double> loss = f();
  const double f0 = loss.item();
  if (!std::isfinite(f0)) throw NumericalFailure("finite_diff_check: f(theta) is not finite");
  loss.backward();

  std::vector<ArrayX<double>> analytic;
  analytic.reserve(params.size());
  for (auto& [name, p] : params) {
    if (p.has_grad() && !p.grad().isFinite().all())
      throw NumericalFailure("finite_diff_check: gradient of '" + name + "' is not finite");
    analytic.push_back(p.has_grad() ? p.grad() : ArrayX<double>::Zero(p.numel()));
  }

  auto eval = [&f]() {
    NoGradGuard ng;
    return f().item();
  };

  GradCheckReport report;
  for (std::size_t bi = 0; bi < params.size(); ++bi) {
    auto& [name, p] = params[bi];
    GradCheckBlock block;
    block.name = name;
    ArrayX<double>& v = p.mutable_value();
    double max_diff = 0.0, scale = 0.0;
    for (long i = 0; i < v.size(); ++i) {
      const double old = v[i];
      v[i] = old + h;
      const double lp = eval();
      v[i] = old - h;
      const double lm = eval();
      v[i] = old;
      if (!std::isfinite(lp) || !std::isfinite(lm))
        throw NumericalFailure("finite_diff_check: f non-finite while perturbing '" + name +
                               "' entry " + std::to_string(i));
      const double central = (lp - lm) / (2.0 * h);
      const double fwd = (lp - f0) / h;
      const double bwd = (f0 - lm) / h;
      if (std::abs(fwd - bwd) > std::max(0.25 * (std::abs(fwd) + std::abs(bwd)), 10.0 * h))
        block.kink_entries.push_back(i);
      const double a = analytic[bi][i];
      max_diff = std::max(max_diff, std::abs(a - central));
      scale = std::max({scale, std::abs(a), std::abs(central)});
    }
    block.max_rel_err = max_diff / std::max(scale, 1e-8);
    block.pass = block.max_rel_err <= tol;
    report.max_rel_err = std::max(report.max_rel_err, block.max_rel_err);
    report.pass = report.pass && block.pass;
    report.blocks.push_back(std::move(block));
  }
  return report;
}

/// Joint check of several scalar losses that share one forward pass: the
/// analytic gradients come from one fresh graph per loss, while a single
/// numeric sweep evaluates every loss per perturbation. Blocks are named
/// "<loss>/<param>". Kink flags are recorded only once (per parameter).
inline GradCheckReport finite_diff_check_joint(const std::function<NamedLosses()>& f_all,
                                               CheckedParams params, double h = 1e-3,
                                               double tol = 1e-4) {
  // Analytic pass, one backward per loss on its own graph.
  std::vector<std::string> loss_names;
  std::vector<std::vector<ArrayX<double>>> analytic;  // [loss][param]
  std::vector<double> f0;
  {
    const std::size_t n_losses = [&] {
      NoGradGuard ng;
      return f_all().size();
    }();
    for (std::size_t li = 0; li < n_losses; ++li) {
      for (auto& [name, p] : params) p.zero_grad();
      NamedLosses losses = f_all();
      loss_names.push_back(losses[li].first);
      const double v = losses[li].second.item();
      if (!std::isfinite(v))
        throw NumericalFailure("finite_diff_check: loss '" + losses[li].first +
                               "' is not finite");
      f0.push_back(v);
      losses[li].second.backward();
      std::vector<ArrayX<double>> grads;
      for (auto& [name, p] : params) {
        if (p.has_grad() && !p.grad().isFinite().all())
          throw NumericalFailure("finite_diff_check: gradient of '" + name + "' is not finite");
        grads.push_back(p.has_grad() ? p.grad() : ArrayX<double>::Zero(p.numel()));
      }
      analytic.push_back(std::move(grads));
    }
  }

  auto eval_all = [&f_all] {
    NoGradGuard ng;
    NamedLosses losses = f_all();
    std::vector<double> vals;
    vals.reserve(losses.size());
    for (auto& [name, l] : losses) vals.push_back(l.item());
    return vals;
  };

  GradCheckReport report;
  std::vector<GradCheckBlock> blocks(loss_names.size() * params.size());
  std::vector<double> max_diff(blocks.size(), 0.0), scale(blocks.size(), 0.0);
  for (std::size_t li = 0; li < loss_names.size(); ++li)
    for (std::size_t pi = 0; pi < params.size(); ++pi)
      blocks[li * params.size() + pi].name = loss_names[li] + "/" + params[pi].first;

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& [pname, p] = params[pi];
    ArrayX<double>& v = p.mutable_value();
    for (long i = 0; i < v.size(); ++i) {
      const double old = v[i];
      v[i] = old + h;
      const auto lp = eval_all();
      v[i] = old - h;
      const auto lm = eval_all();
      v[i] = old;
      for (std::size_t li = 0; li < loss_names.size(); ++li) {
        if (!std::isfinite(lp[li]) || !std::isfinite(lm[li]))
          throw NumericalFailure("finite_diff_check: loss '" + loss_names[li] +
                                 "' non-finite while perturbing '" + pname + "' entry " +
                                 std::to_string(i));
        const std::size_t bi = li * params.size() + pi;
        const double central = (lp[li] - lm[li]) / (2.0 * h);
        if (li == 0) {
          const double fwd = (lp[li] - f0[li]) / h;
          const double bwd = (f0[li] - lm[li]) / h;
          if (std::abs(fwd - bwd) > std::max(0.25 * (std::abs(fwd) + std::abs(bwd)), 10.0 * h))
            blocks[bi].kink_entries.push_back(i);
        }
        const double a = analytic[li][pi][i];
        max_diff[bi] = std::max(max_diff[bi], std::abs(a - central));
        scale[bi] = std::max({scale[bi], std::abs(a), std::abs(central)});
      }
    }
  }
  for (std::size_t bi = 0; bi < blocks.size(); ++bi)
    blocks[bi].max_rel_err = max_diff[bi] / std::max(scale[bi], 1e-8);
  for (auto& block : blocks) {
    block.pass = block.max_rel_err <= tol;
    report.max_rel_err = std::max(report.max_rel_err, block.max_rel_err);
    report.pass = report.pass && block.pass;
    report.blocks.push_back(std::move(block));
  }
  return report;
}

}  // namespace amsrc
