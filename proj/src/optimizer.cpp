#include "wavecraft/optimizer.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>

#include "wavecraft/random.hpp"

namespace wavecraft {

namespace {

void check_weights(const WhitenedSystem& ws, std::span<const double> weights, std::span<const double> phases) {
  if (weights.size() != ws.whitened.size() || phases.size() != ws.whitened.size()) {
    throw std::invalid_argument("weights, phases and grid points must have equal length");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("weights must sum to one");
}

struct Evaluation {
  double lambda;
  InnerState state;
  double slope;  // |q_1| - |q_2|, a subgradient of F at lambda
};

class OuterProblem {
 public:
  OuterProblem(const WhitenedSystem& ws, const DesignOptions& opts) : ws_(ws), opts_(opts) {
    if (ws.whitened.size() != 2) throw std::invalid_argument("outer_search: exactly two grid points required");
  }

  // Solves the inner problem at lambda from the warm start (zero phases if
  // none) and, when requested, from random restarts; keeps the best.
  Evaluation evaluate(double lambda, const InnerState* warm, bool with_restarts) {
    const std::array<double, 2> w = {lambda, 1.0 - lambda};
    std::vector<double> start = warm ? warm->phases : std::vector<double>(2, 0.0);
    InnerState best = with_restarts
                          ? inner_multistart(ws_, w, start, opts_.inner, opts_.restarts,
                                             derive_seed(opts_.seed, {std::bit_cast<std::uint64_t>(lambda)}))
                          : inner_cyclic(ws_, w, start, opts_.inner);
    all_converged_ = all_converged_ && best.converged;
    const double q1 = std::abs(quad(0, best.u));
    const double q2 = std::abs(quad(1, best.u));
    trail_.emplace_back(lambda, best.cost);
    return {lambda, std::move(best), q1 - q2};
  }

  bool all_converged() const { return all_converged_; }
  std::vector<std::pair<double, double>>& trail() { return trail_; }

 private:
  cdouble quad(int k, const Vector& u) const { return u.dot(ws_.whitened[k] * u); }

  const WhitenedSystem& ws_;
  const DesignOptions& opts_;
  bool all_converged_ = true;
  std::vector<std::pair<double, double>> trail_;
};

// Bisection on the sign of the subgradient inside [lo, hi] where F is convex.
Evaluation bisect(OuterProblem& problem, Evaluation lo, Evaluation hi, double tol) {
  while (hi.lambda - lo.lambda > tol) {
    const double mid = 0.5 * (lo.lambda + hi.lambda);
    const InnerState& warm = (mid - lo.lambda <= hi.lambda - mid) ? lo.state : hi.state;
    Evaluation e = problem.evaluate(mid, &warm, false);
    if (e.slope == 0.0) return e;
    if (e.slope < 0.0) {
      lo = std::move(e);
    } else {
      hi = std::move(e);
    }
  }
  return std::abs(lo.slope) <= std::abs(hi.slope) ? lo : hi;
}

}  // namespace

Matrix build_M(const WhitenedSystem& ws, std::span<const double> weights, std::span<const double> phases) {
  check_weights(ws, weights, phases);
  const auto r = ws.rank();
  Matrix m = Matrix::Zero(r, r);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] == 0.0) continue;
    const cdouble rot = std::polar(weights[k], -phases[k]);
    m += rot * ws.whitened[k];
  }
  return m + m.adjoint();
}

double weighted_objective(const WhitenedSystem& ws, std::span<const double> weights, const Vector& u) {
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) acc += weights[k] * std::abs(u.dot(ws.whitened[k] * u));
  return acc;
}

InnerState inner_cyclic(const WhitenedSystem& ws, std::span<const double> weights,
                        std::span<const double> initial_phases, const InnerOptions& opts) {
  check_weights(ws, weights, initial_phases);
  if (!(opts.tol > 0.0)) throw std::invalid_argument("inner_cyclic: tol must be > 0");
  InnerState state;
  state.phases.assign(initial_phases.begin(), initial_phases.end());
  double previous = -std::numeric_limits<double>::infinity();
  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    state.u = top_eigpair(build_M(ws, weights, state.phases)).vector;
    double cost = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      const cdouble q = state.u.dot(ws.whitened[k] * state.u);
      state.phases[k] = std::arg(q);
      cost += weights[k] * std::abs(q);
    }
    state.cost = cost;
    state.iterations = iter;
    state.trace.push_back(cost);
    if (cost - previous <= opts.tol * std::max(1.0, std::abs(cost))) {
      state.converged = true;
      break;
    }
    previous = cost;
  }
  return state;
}

InnerState inner_multistart(const WhitenedSystem& ws, std::span<const double> weights,
                            std::span<const double> initial_phases, const InnerOptions& opts, int restarts,
                            std::uint64_t seed) {
  if (restarts < 0) throw std::invalid_argument("inner_multistart: restarts must be >= 0");
  InnerState best = inner_cyclic(ws, weights, initial_phases, opts);
  std::vector<double> phases(weights.size());
  for (int r = 0; r < restarts; ++r) {
    Rng rng = substream(seed, {tag("restart"), static_cast<std::uint64_t>(r)});
    for (auto& p : phases) p = 2.0 * std::numbers::pi * uniform01(rng);
    InnerState cand = inner_cyclic(ws, weights, phases, opts);
    if (cand.cost > best.cost) best = std::move(cand);
  }
  return best;
}

DesignResult outer_search(const WhitenedSystem& ws, const DesignOptions& opts) {
  OuterProblem problem(ws, opts);
  Evaluation best{0.5, {}, 0.0};
  std::string method;

  if (opts.method == OuterMethod::grid) {
    method = "grid";
    const int n = std::max(opts.lattice_points, 2);
    std::vector<Evaluation> lattice;
    lattice.reserve(n);
    for (int i = 0; i < n; ++i) {
      const double lambda = static_cast<double>(i) / (n - 1);
      const InnerState* warm = lattice.empty() ? nullptr : &lattice.back().state;
      lattice.push_back(problem.evaluate(lambda, warm, true));
    }
    double lowest = std::numeric_limits<double>::infinity();
    double highest = -lowest;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < lattice.size(); ++i) {
      if (lattice[i].state.cost < lowest) {
        lowest = lattice[i].state.cost;
        arg = i;
      }
      highest = std::max(highest, lattice[i].state.cost);
    }
    // Costs are only resolved to the inner tolerance; a spread below that
    // counts as all-equal.
    if (highest - lowest <= 10.0 * opts.inner.tol * std::max(1.0, std::abs(highest))) {
      best = problem.evaluate(0.5, &lattice[n / 2].state, true);
    } else if (!opts.refine) {
      best = lattice[arg];
    } else {
      const std::size_t left = arg == 0 ? 0 : arg - 1;
      const std::size_t right = std::min(arg + 1, lattice.size() - 1);
      if (arg == 0 && lattice[0].slope >= 0.0) {
        best = lattice[0];
      } else if (arg + 1 == lattice.size() && lattice[arg].slope <= 0.0) {
        best = lattice[arg];
      } else if (lattice[arg].slope == 0.0) {
        best = lattice[arg];
      } else {
        // The minimizer lies on the side where the subgradient changes sign.
        const bool go_right = lattice[arg].slope < 0.0;
        Evaluation lo = go_right ? lattice[arg] : lattice[left];
        Evaluation hi = go_right ? lattice[right] : lattice[arg];
        best = bisect(problem, std::move(lo), std::move(hi), opts.lambda_tol);
      }
    }
  } else {
    method = "bisection";
    Evaluation lo = problem.evaluate(0.0, nullptr, true);
    Evaluation hi = problem.evaluate(1.0, &lo.state, true);
    if (lo.slope >= 0.0 && hi.slope <= 0.0 && std::abs(lo.state.cost - hi.state.cost) <= 1e-12) {
      best = problem.evaluate(0.5, &lo.state, true);
    } else if (lo.slope >= 0.0) {
      best = lo;
    } else if (hi.slope <= 0.0) {
      best = hi;
    } else {
      best = bisect(problem, std::move(lo), std::move(hi), opts.lambda_tol);
    }
  }

  // Polish at the selected weight with restarts.
  Evaluation final_eval = problem.evaluate(best.lambda, &best.state, true);
  if (final_eval.state.cost < best.state.cost) final_eval = best;

  DesignResult out;
  out.u = final_eval.state.u;
  out.s = recover_s(out.u, ws);
  out.lambda = final_eval.lambda;
  out.cost = final_eval.state.cost;
  out.trace = final_eval.state.trace;
  out.outer_evaluations = problem.trail();
  out.converged = problem.all_converged();
  out.rank = ws.rank();
  out.seed = opts.seed;
  out.method = method;
  return out;
}

namespace {

// One mirror-descent run from the given starting phases.
DesignResult simplex_run(const WhitenedSystem& ws, const DesignOptions& opts, std::vector<double> phases) {
  const std::size_t l = ws.whitened.size();
  InnerOptions inner = opts.inner;
  inner.max_iter = std::min(inner.max_iter, std::max(opts.simplex_inner_iterations, 1));
  std::vector<double> weights(l, 1.0 / static_cast<double>(l));
  DesignResult out;
  out.worst_response = -1.0;
  std::vector<double> magnitude(l);
  for (int t = 0; t < opts.simplex_iterations; ++t) {
    InnerState state = inner_cyclic(ws, weights, phases, inner);
    phases = state.phases;
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < l; ++k) {
      magnitude[k] = std::abs(state.u.dot(ws.whitened[k] * state.u));
      worst = std::min(worst, magnitude[k]);
    }
    out.outer_evaluations.emplace_back(weights[0], state.cost);
    if (worst > out.worst_response) {
      out.worst_response = worst;
      out.u = state.u;
      out.weights = weights;
      out.lambda = weights[0];
      out.cost = state.cost;
      out.trace = state.trace;
      out.converged = state.converged;
    }
    // Mirror descent step on F: its gradient in lambda_k is |q_k|.
    const double eta = opts.simplex_step / std::sqrt(t + 1.0);
    double total = 0.0;
    for (std::size_t k = 0; k < l; ++k) {
      weights[k] *= std::exp(-eta * (magnitude[k] - worst));
      total += weights[k];
    }
    for (auto& w : weights) w /= total;
  }
  return out;
}

}  // namespace

DesignResult outer_search_simplex(const WhitenedSystem& ws, const DesignOptions& opts) {
  const std::size_t l = ws.whitened.size();
  if (l == 0) throw std::invalid_argument("outer_search_simplex: no grid points");
  if (opts.simplex_iterations < 1) throw std::invalid_argument("outer_search_simplex: need at least one iteration");
  if (!(opts.simplex_step > 0.0)) throw std::invalid_argument("outer_search_simplex: step must be > 0");
  if (opts.simplex_starts < 1) throw std::invalid_argument("outer_search_simplex: need at least one start");

  // The descent settles in whichever inner basin its first solve lands in.
  // Short screening runs from random phases pick the basin, then the winner's
  // phases seed the full run.
  std::vector<double> start(l, 0.0);
  std::vector<std::pair<double, double>> screened;
  if (opts.simplex_starts > 1) {
    DesignOptions screen = opts;
    screen.simplex_iterations = std::min(opts.simplex_iterations, std::max(opts.simplex_screen_iterations, 1));
    std::vector<double> phases(l, 0.0);
    double best = -1.0;
    for (int r = 0; r < opts.simplex_starts; ++r) {
      if (r > 0) {
        Rng rng = substream(opts.seed, {tag("simplex-start"), static_cast<std::uint64_t>(r)});
        for (auto& p : phases) p = 2.0 * std::numbers::pi * uniform01(rng);
      }
      DesignResult cand = simplex_run(ws, screen, phases);
      screened.insert(screened.end(), cand.outer_evaluations.begin(), cand.outer_evaluations.end());
      if (cand.worst_response > best) {
        best = cand.worst_response;
        start = phases;
      }
    }
  }
  DesignResult out = simplex_run(ws, opts, start);
  out.outer_evaluations.insert(out.outer_evaluations.begin(), screened.begin(), screened.end());
  out.s = recover_s(out.u, ws);
  out.rank = ws.rank();
  out.seed = opts.seed;
  out.method = "simplex";
  return out;
}

DesignResult design_waveform(const BasisSet& basis, const ArrayGeometry& geom, const ParameterBox& box,
                             const DesignOptions& opts) {
  box.validate();
  const double nominal = basis.config().nominal_scale;
  std::vector<TargetParams> points;
  if (opts.grid == DesignGrid::corner_pair) {
    const auto [a, b] = corner_pair(box, opts.corners);
    points = {a, b};
  } else {
    if (opts.lattice_scale < 1 || opts.lattice_delay < 1) throw std::invalid_argument("design lattice must be nonempty");
    points = box_grid(box, opts.lattice_scale, opts.lattice_delay);
  }
  std::vector<CorrelationMatrix> rs;
  rs.reserve(points.size());
  for (const auto& p : points) rs.push_back(build_R(basis, geom, p, nominal));
  const CorrelationMatrix r0 = build_R0(basis, geom, nominal);
  const WhitenedSystem ws = whiten(r0, rs, opts.rank_tol);

  DesignResult out;
  if (opts.grid == DesignGrid::corner_pair) {
    out = outer_search(ws, opts);
    out.weights = {out.lambda, 1.0 - out.lambda};
    out.worst_response = std::min(std::abs(out.u.dot(ws.whitened[0] * out.u)),
                                  std::abs(out.u.dot(ws.whitened[1] * out.u)));
  } else {
    out = outer_search_simplex(ws, opts);
  }
  // Truncating the near-null eigenvalues leaves s^H R0 s off by rounding.
  const double energy = out.s.dot(r0.entries * out.s).real();
  if (!(energy > 0.0)) throw NumericalError("design_waveform: designed waveform has no energy");
  out.s /= std::sqrt(energy);
  out.grid = std::move(points);
  out.corner_a = out.grid.front();
  out.corner_b = out.grid.back();
  return out;
}

}  // namespace wavecraft
