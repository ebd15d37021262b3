#pragma once

#include "ewel/coefficients.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ewel {

//! Uniform time grid t_i = i h on [0, T], h = T / N.
struct GridSchedule
{
  double horizon = 1.0;
  std::size_t steps = 1;

  GridSchedule() = default;
  GridSchedule(double horizon, std::size_t steps);

  double h() const { return horizon / static_cast<double>(steps); }
  //! t_i, with t_N = T exactly.
  double time(std::size_t i) const;
  //! Index of the last grid time not exceeding s (N for s = T).
  std::size_t floor_index(double s) const;
};

struct SimOptions
{
  unsigned jobs = 1;
  std::size_t block = 128;  // paths advanced in lockstep
  bool keep_states = true;  // full M x (N+1) x d trajectories
  bool keep_increments = true;
  std::size_t memory_budget = std::size_t{ 2 } << 30; // bytes
};

//! M Euler paths on a grid together with the Brownian increments that
//! generated them. Array layouts are path-major:
//! states[(m (N+1) + i) d + k], increments[(m N + i) d + k].
struct TrajectoryBatch
{
  GridSchedule grid;
  std::size_t m_paths = 0;
  int dim = 1;
  std::uint64_t seed = 0;
  Vec x0{};
  std::vector<double> states;
  std::vector<double> increments;
  std::vector<double> terminal; // m_paths x d, always kept

  double state(std::size_t m, std::size_t i, int k) const
  {
    return states[(m * (grid.steps + 1) + i) * static_cast<std::size_t>(dim) + static_cast<std::size_t>(k)];
  }
  double increment(std::size_t m, std::size_t i, int k) const
  {
    return increments[(m * grid.steps + i) * static_cast<std::size_t>(dim) + static_cast<std::size_t>(k)];
  }
};

//! Brownian increments on the base grid: sqrt(h) times the normals of
//! stream 0, normal number i d + k for step i and coordinate k of a path.
std::vector<double> base_increments(const GridSchedule& grid,
                                    int dim,
                                    std::size_t m,
                                    std::uint64_t seed,
                                    unsigned jobs = 1);

//! Euler scheme x_{i+1} = x_i + b(t_i, x_i) h + sigma(t_i, x_i) dW_i driven by
//! base_increments. Bit-identical for identical inputs and any job count.
TrajectoryBatch simulate_batch(const CoefficientField& field,
                               std::span<const double> x0,
                               const GridSchedule& grid,
                               std::size_t m,
                               std::uint64_t seed,
                               const SimOptions& options = {});

//! Euler scheme driven by caller-supplied increments (layout as in
//! TrajectoryBatch::increments, M x N x d).
TrajectoryBatch simulate_from_increments(const CoefficientField& field,
                                         std::span<const double> x0,
                                         const GridSchedule& grid,
                                         std::size_t m,
                                         std::uint64_t seed,
                                         std::vector<double> increments,
                                         const SimOptions& options = {});

//! Fine-grid increments whose sums over each coarse step reproduce the coarse
//! increments. Powers of two use successive Brownian-bridge midpoint levels
//! (level l draws from stream 0x100 + l); other factors split each coarse
//! step sequentially by bridge conditioning.
struct RefinedIncrements
{
  GridSchedule grid;
  std::size_t m_paths = 0;
  int dim = 1;
  std::vector<double> increments;
};

RefinedIncrements refine_common_noise(const TrajectoryBatch& batch,
                                      std::size_t factor,
                                      const SimOptions& options = {});

//! One midpoint refinement of a single path's increments (n steps of length
//! h, d coordinates) at the given hierarchy level.
void refine_midpoint(std::span<const double> coarse,
                     std::span<double> fine,
                     int dim,
                     double h,
                     std::uint64_t seed,
                     std::uint64_t path,
                     unsigned level);

//! States at time s of the continuous Euler scheme, using bridge conditioning
//! for the Brownian value inside the step. Returns m_paths x d values.
std::vector<double> continuous_interpolate(const TrajectoryBatch& batch,
                                           double s,
                                           const CoefficientField& field);

//! Terminal states of the Euler scheme at every level of a dyadic hierarchy
//! N_l = n_coarse 2^l, l = 0..levels, for several fields driven by common
//! noise. Level 0 coincides with simulate_batch(n_coarse); finer levels refine
//! it by Brownian-bridge midpoints.
struct LevelTerminals
{
  double horizon = 1.0;
  std::size_t n_coarse = 1;
  std::size_t m_paths = 0;
  int dim = 1;
  //! terminals[f][l] holds m_paths x d values for field f at level l.
  std::vector<std::vector<std::vector<double>>> terminals;

  std::size_t steps(std::size_t level) const { return n_coarse << level; }
};

LevelTerminals simulate_levels(const std::vector<const CoefficientField*>& fields,
                               std::span<const double> x0,
                               double horizon,
                               std::size_t n_coarse,
                               unsigned levels,
                               std::size_t m,
                               std::uint64_t seed,
                               const SimOptions& options = {});

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

//! Binary dump: "EWEL", u32 version, u64 M, u64 N, u32 d, u64 seed, then the
//! states (M x (N+1) x d little-endian f64, row-major).
void write_batch_binary(const TrajectoryBatch& batch, const std::filesystem::path& path);
TrajectoryBatch read_batch_binary(const std::filesystem::path& path);

//! CSV with columns seed, M, N, coordinate, terminal_mean, terminal_variance.
std::string batch_summary_csv(const TrajectoryBatch& batch);

} // namespace ewel
