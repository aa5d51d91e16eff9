#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wavecraft/correlation.hpp"
#include "wavecraft/signal_model.hpp"

namespace wavecraft {

/// M(phi) = sum_k lambda_k (e^{-j phi_k} R~_k + e^{j phi_k} R~_k^H).
Matrix build_M(const WhitenedSystem& ws, std::span<const double> weights, std::span<const double> phases);

/// Sum_k lambda_k |u^H R~_k u|.
double weighted_objective(const WhitenedSystem& ws, std::span<const double> weights, const Vector& u);

struct InnerOptions {
  double tol = 1e-8;  // relative cost change
  int max_iter = 500;
};

struct InnerState {
  Vector u;
  std::vector<double> phases;
  double cost = 0.0;  // sum_k lambda_k |u^H R~_k u|
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // cost after each phase update
};

/// Alternating maximization: u <- top eigenvector of M(phi), then
/// phi_k <- arg(u^H R~_k u), until the cost gain falls below tol.
InnerState inner_cyclic(const WhitenedSystem& ws, std::span<const double> weights,
                        std::span<const double> initial_phases, const InnerOptions& opts = {});

/// inner_cyclic from initial_phases, then from `restarts` uniformly random
/// phase vectors drawn from `seed`; returns the best final state. The cyclic
/// iteration is a local ascent and stalls on a local maximum from roughly a
/// third of zero-phase starts on random toy systems.
InnerState inner_multistart(const WhitenedSystem& ws, std::span<const double> weights,
                            std::span<const double> initial_phases, const InnerOptions& opts, int restarts,
                            std::uint64_t seed);

enum class OuterMethod { grid, bisection };

/// Which grid points enter the design: the two box corners from corner_pair,
/// or a box_grid lattice of lattice_scale x lattice_delay points.
enum class DesignGrid { corner_pair, lattice };

struct DesignOptions {
  DesignGrid grid = DesignGrid::lattice;
  int lattice_scale = 4;
  int lattice_delay = 4;
  int simplex_iterations = 200;  // outer steps when more than two grid points
  double simplex_step = 20.0;    // exponentiated-gradient step, decays as 1/sqrt(t)
  int simplex_inner_iterations = 10;  // inner cap per outer step (warm-started)
  int simplex_starts = 8;             // screened starting phases; the first is all zeros
  int simplex_screen_iterations = 30; // outer steps per screening run
  OuterMethod method = OuterMethod::grid;
  int lattice_points = 21;
  bool refine = true;
  double lambda_tol = 1e-9;  // final bracket width on lambda
  InnerOptions inner;
  int restarts = 8;           // random phase restarts per evaluation of F
  std::uint64_t seed = 0;     // drives restart phases only
  CornerChoice corners = CornerChoice::diagonal;
  double rank_tol = kDefaultRankTolerance;
};

struct DesignResult {
  Vector s;
  Vector u;
  double lambda = 0.5;  // weight of the first grid point
  std::vector<double> weights;
  std::vector<TargetParams> grid;
  TargetParams corner_a;
  TargetParams corner_b;
  double cost = 0.0;  // weighted inner cost at the returned weights
  double worst_response = 0.0;  // min_k |u^H R~_k u|
  std::vector<double> trace;  // inner trace at lambda*
  std::vector<std::pair<double, double>> outer_evaluations;  // (lambda, F)
  bool converged = true;
  int rank = 0;
  std::uint64_t seed = 0;
  std::string method;
};

/// Minimizes F(lambda) = max_u [lambda |u^H R~_1 u| + (1 - lambda) |u^H R~_2 u|]
/// over lambda in [0, 1] for a whitened system with exactly two grid points.
DesignResult outer_search(const WhitenedSystem& ws, const DesignOptions& opts);

/// Max-min over any number of grid points: exponentiated-gradient descent on
/// the weight simplex, each step solving the inner problem warm-started from
/// the previous phases. Returns the iterate with the largest worst-case
/// response.
DesignResult outer_search_simplex(const WhitenedSystem& ws, const DesignOptions& opts);

/// Grid points -> R per point -> R0 -> whitening -> outer search. The result
/// is rescaled so that s^H R0 s = 1 holds to rounding.
DesignResult design_waveform(const BasisSet& basis, const ArrayGeometry& geom, const ParameterBox& box,
                             const DesignOptions& opts);

}  // namespace wavecraft
