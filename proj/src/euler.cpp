#include "ewel/euler.hpp"

#include "ewel/errors.hpp"
#include "ewel/format.hpp"
#include "ewel/parallel.hpp"
#include "ewel/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ewel {

// ---------------------------------------------------------------------------
// GridSchedule
// ---------------------------------------------------------------------------

GridSchedule::GridSchedule(double horizon_, std::size_t steps_)
  : horizon(horizon_)
  , steps(steps_)
{
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw ConfigError("grid: horizon must be positive and finite");
  if (steps < 1)
    throw ConfigError("grid: at least one step is required");
}

double GridSchedule::time(std::size_t i) const
{
  if (i >= steps)
    return horizon;
  return horizon * static_cast<double>(i) / static_cast<double>(steps);
}

std::size_t GridSchedule::floor_index(double s) const
{
  if (s >= horizon)
    return steps;
  auto i = static_cast<std::size_t>(std::floor(s / h()));
  // guard against rounding in s / h
  while (i > 0 && time(i) > s)
    --i;
  while (i + 1 <= steps && time(i + 1) <= s)
    ++i;
  return std::min(i, steps);
}

namespace {

constexpr std::uint32_t kBaseStream = 0;

std::uint32_t level_stream(unsigned level)
{
  return stream_id(Stream::refinement_base, level);
}

//! First fine increment of a midpoint split; the second is coarse - first.
inline double bridge_mid(double coarse, double half_sd, double z)
{
  return 0.5 * coarse + half_sd * z;
}

//! Scratch buffers only grow, so reuse across levels avoids re-zeroing.
void ensure_size(std::vector<double>& v, std::size_t n)
{
  if (v.size() < n)
    v.resize(n);
}

//! Normals with indices [lo, hi) of one stream for paths p0 .. p0+count,
//! stored as z[(n - lo) count + p].
void block_normals(std::uint64_t seed,
                   std::uint32_t stream,
                   std::uint64_t p0,
                   std::size_t count,
                   std::size_t lo,
                   std::size_t hi,
                   std::vector<double>& z,
                   std::vector<double>& z0,
                   std::vector<double>& z1)
{
  ensure_size(z, (hi - lo) * count);
  ensure_size(z0, count);
  ensure_size(z1, count);
  for (std::size_t j = lo / 2; 2 * j < hi; ++j) {
    normal_pairs_across_paths(seed, stream, p0, count, static_cast<std::uint32_t>(j), z0.data(),
                              z1.data());
    for (std::size_t c = 0; c < 2; ++c) {
      const std::size_t n = 2 * j + c;
      if (n < lo || n >= hi)
        continue;
      std::copy_n(c == 0 ? z0.data() : z1.data(), count, z.data() + (n - lo) * count);
    }
  }
}

//! Base increments of steps [first, first+steps) in step-major block layout
//! dw[(i B + p) d + k].
void block_base_increments(std::uint64_t seed,
                           std::uint64_t p0,
                           std::size_t count,
                           std::size_t first,
                           std::size_t steps,
                           int dim,
                           double h,
                           std::vector<double>& dw,
                           std::vector<double>& z,
                           std::vector<double>& z0,
                           std::vector<double>& z1)
{
  const auto d = static_cast<std::size_t>(dim);
  const double sd = std::sqrt(h);
  block_normals(seed, kBaseStream, p0, count, first * d, (first + steps) * d, z, z0, z1);
  ensure_size(dw, steps * d * count);
  for (std::size_t i = 0; i < steps; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      const double* src = z.data() + (i * d + k) * count;
      double* out = dw.data() + i * count * d + k;
      for (std::size_t p = 0; p < count; ++p)
        out[p * d] = sd * src[p];
    }
}

//! Midpoint refinement of `steps` coarse steps (global coarse index offset
//! `first`, step length h) held in step-major block layout.
void block_refine(std::uint64_t seed,
                  std::uint64_t p0,
                  std::size_t count,
                  std::size_t first,
                  std::size_t steps,
                  int dim,
                  double h,
                  unsigned level,
                  const std::vector<double>& coarse,
                  std::vector<double>& fine,
                  std::vector<double>& z,
                  std::vector<double>& z0,
                  std::vector<double>& z1)
{
  const auto d = static_cast<std::size_t>(dim);
  const double half_sd = 0.5 * std::sqrt(h);
  const std::size_t row = count * d;
  block_normals(seed, level_stream(level), p0, count, first * d, (first + steps) * d, z, z0, z1);
  ensure_size(fine, 2 * steps * row);
  for (std::size_t i = 0; i < steps; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      const double* zz = z.data() + (i * d + k) * count;
      const double* src = coarse.data() + i * row + k;
      double* a = fine.data() + (2 * i) * row + k;
      double* b = fine.data() + (2 * i + 1) * row + k;
      for (std::size_t p = 0; p < count; ++p) {
        const double dw = src[p * d];
        const double first_half = bridge_mid(dw, half_sd, zz[p]);
        a[p * d] = first_half;
        b[p * d] = dw - first_half;
      }
    }
}

[[noreturn]] void non_finite(std::uint64_t path, std::size_t step)
{
  throw NumericalFault("non-finite Euler state on path " + std::to_string(path) + " at step " +
                       std::to_string(step) + " (coefficients violate boundedness?)");
}

//! Advances `count` paths in lockstep through all steps of the grid.
//! x holds count x d states; dw is step-major. When `record` is non-null it
//! receives the states after each step, record[(i+1) count d + p d + k].
class LockstepEuler
{
public:
  LockstepEuler(const CoefficientField& field, const GridSchedule& grid, std::size_t count)
    : field_(field)
    , grid_(grid)
    , count_(count)
    , d_(static_cast<std::size_t>(field.dim()))
    , b_(count * d_)
    , s_(count * d_ * d_)
  {
  }

  void run(double* x, const double* dw, std::uint64_t p0, double* record = nullptr)
  {
    run_steps(x, dw, 0, grid_.steps, p0, record);
  }

  //! Steps first .. first+count-1; dw holds exactly those steps.
  void run_steps(double* x,
                 const double* dw,
                 std::size_t first,
                 std::size_t count,
                 std::uint64_t p0,
                 double* record = nullptr)
  {
    const double h = grid_.h();
    const std::size_t row = count_ * d_;
    for (std::size_t s = 0; s < count; ++s) {
      const std::size_t i = first + s;
      field_.eval_batch(grid_.time(i), count_, x, b_.data(), s_.data());
      const double* w = dw + s * row;
      if (d_ == 1) {
        for (std::size_t p = 0; p < count_; ++p)
          x[p] = x[p] + b_[p] * h + s_[p] * w[p];
      } else {
        for (std::size_t p = 0; p < count_; ++p)
          step_point(x + p * d_, b_.data() + p * d_, s_.data() + p * d_ * d_, w + p * d_, h);
      }
      double check = 0.0;
      for (std::size_t q = 0; q < row; ++q)
        check += x[q] * 0.0;
      if (check != 0.0 || std::isnan(check))
        locate_fault(x, p0, i);
      if (record)
        std::memcpy(record + (i + 1) * row, x, row * sizeof(double));
    }
  }

private:
  void step_point(double* x, const double* b, const double* s, const double* w, double h) const
  {
    double y[kMaxDim];
    for (std::size_t k = 0; k < d_; ++k) {
      double acc = x[k] + b[k] * h;
      for (std::size_t j = 0; j < d_; ++j)
        acc += s[k * d_ + j] * w[j];
      y[k] = acc;
    }
    for (std::size_t k = 0; k < d_; ++k)
      x[k] = y[k];
  }

  void locate_fault(const double* x, std::uint64_t p0, std::size_t step) const
  {
    for (std::size_t p = 0; p < count_; ++p)
      for (std::size_t k = 0; k < d_; ++k)
        if (!std::isfinite(x[p * d_ + k]))
          non_finite(p0 + p, step);
  }

  const CoefficientField& field_;
  const GridSchedule& grid_;
  std::size_t count_;
  std::size_t d_;
  std::vector<double> b_;
  std::vector<double> s_;
};

void check_x0(const CoefficientField& field, std::span<const double> x0)
{
  if (static_cast<int>(x0.size()) != field.dim())
    throw ConfigError("x0 has " + std::to_string(x0.size()) + " coordinates, field dimension is " +
                      std::to_string(field.dim()));
  for (double v : x0)
    if (!std::isfinite(v))
      throw ConfigError("x0 must be finite");
}

void check_budget(std::size_t bytes, const SimOptions& options, const char* what)
{
  if (bytes > options.memory_budget)
    throw BudgetError(std::string(what) + ": requested " + std::to_string(bytes) +
                      " bytes exceeds the memory budget of " +
                      std::to_string(options.memory_budget) + " bytes");
}

std::size_t safe_mul(std::size_t a, std::size_t b)
{
  if (a != 0 && b > std::numeric_limits<std::size_t>::max() / a)
    throw BudgetError("requested size overflows");
  return a * b;
}

TrajectoryBatch run_batch(const CoefficientField& field,
                          std::span<const double> x0,
                          const GridSchedule& grid,
                          std::size_t m,
                          std::uint64_t seed,
                          const std::vector<double>* given,
                          const SimOptions& options)
{
  check_x0(field, x0);
  if (m < 1)
    throw ConfigError("simulate: at least one path is required");
  const auto d = static_cast<std::size_t>(field.dim());
  const std::size_t n = grid.steps;
  std::size_t bytes = safe_mul(safe_mul(m, d), 8);
  if (options.keep_states)
    bytes += safe_mul(safe_mul(safe_mul(m, n + 1), d), 8);
  if (options.keep_increments || given)
    bytes += safe_mul(safe_mul(safe_mul(m, n), d), 8);
  check_budget(bytes, options, "simulate_batch");

  TrajectoryBatch batch;
  batch.grid = grid;
  batch.m_paths = m;
  batch.dim = field.dim();
  batch.seed = seed;
  batch.x0 = to_vec(x0);
  batch.terminal.assign(m * d, 0.0);
  if (options.keep_states)
    batch.states.assign(m * (n + 1) * d, 0.0);
  if (given)
    batch.increments = *given;
  else if (options.keep_increments)
    batch.increments.assign(m * n * d, 0.0);

  const std::size_t block = std::max<std::size_t>(1, options.block);
  const std::size_t blocks = (m + block - 1) / block;
  parallel_for(blocks, options.jobs, [&](std::size_t bi) {
    const std::size_t p0 = bi * block;
    const std::size_t count = std::min(block, m - p0);
    const std::size_t row = count * d;
    std::vector<double> dw;
    if (given) {
      dw.resize(n * row);
      for (std::size_t p = 0; p < count; ++p)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t k = 0; k < d; ++k)
            dw[i * row + p * d + k] = (*given)[((p0 + p) * n + i) * d + k];
    } else {
      std::vector<double> z, z0, z1;
      block_base_increments(seed, p0, count, 0, n, field.dim(), grid.h(), dw, z, z0, z1);
      if (options.keep_increments)
        for (std::size_t p = 0; p < count; ++p)
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < d; ++k)
              batch.increments[((p0 + p) * n + i) * d + k] = dw[i * row + p * d + k];
    }
    std::vector<double> x(row);
    for (std::size_t p = 0; p < count; ++p)
      for (std::size_t k = 0; k < d; ++k)
        x[p * d + k] = x0[k];
    std::vector<double> record;
    if (options.keep_states) {
      record.resize((n + 1) * row);
      std::memcpy(record.data(), x.data(), row * sizeof(double));
    }
    LockstepEuler euler(field, grid, count);
    euler.run(x.data(), dw.data(), p0, options.keep_states ? record.data() : nullptr);
    for (std::size_t p = 0; p < count; ++p)
      for (std::size_t k = 0; k < d; ++k)
        batch.terminal[(p0 + p) * d + k] = x[p * d + k];
    if (options.keep_states)
      for (std::size_t p = 0; p < count; ++p)
        for (std::size_t i = 0; i <= n; ++i)
          for (std::size_t k = 0; k < d; ++k)
            batch.states[((p0 + p) * (n + 1) + i) * d + k] = record[i * row + p * d + k];
  });
  return batch;
}

} // namespace

std::vector<double> base_increments(const GridSchedule& grid,
                                    int dim,
                                    std::size_t m,
                                    std::uint64_t seed,
                                    unsigned jobs)
{
  const auto d = static_cast<std::size_t>(dim);
  const std::size_t n = grid.steps;
  std::vector<double> out(safe_mul(safe_mul(m, n), d));
  constexpr std::size_t kBlock = 128;
  const std::size_t blocks = (m + kBlock - 1) / kBlock;
  parallel_for(blocks, jobs, [&](std::size_t bi) {
    const std::size_t p0 = bi * kBlock;
    const std::size_t count = std::min(kBlock, m - p0);
    std::vector<double> dw, z, z0, z1;
    block_base_increments(seed, p0, count, 0, n, dim, grid.h(), dw, z, z0, z1);
    for (std::size_t p = 0; p < count; ++p)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k)
          out[((p0 + p) * n + i) * d + k] = dw[i * count * d + p * d + k];
  });
  return out;
}

TrajectoryBatch simulate_batch(const CoefficientField& field,
                               std::span<const double> x0,
                               const GridSchedule& grid,
                               std::size_t m,
                               std::uint64_t seed,
                               const SimOptions& options)
{
  return run_batch(field, x0, grid, m, seed, nullptr, options);
}

TrajectoryBatch simulate_from_increments(const CoefficientField& field,
                                         std::span<const double> x0,
                                         const GridSchedule& grid,
                                         std::size_t m,
                                         std::uint64_t seed,
                                         std::vector<double> increments,
                                         const SimOptions& options)
{
  const auto d = static_cast<std::size_t>(field.dim());
  if (increments.size() != m * grid.steps * d)
    throw ArgumentError("simulate_from_increments: expected " + std::to_string(m * grid.steps * d) +
                        " increments, got " + std::to_string(increments.size()));
  return run_batch(field, x0, grid, m, seed, &increments, options);
}

void refine_midpoint(std::span<const double> coarse,
                     std::span<double> fine,
                     int dim,
                     double h,
                     std::uint64_t seed,
                     std::uint64_t path,
                     unsigned level)
{
  const auto d = static_cast<std::size_t>(dim);
  if (fine.size() != 2 * coarse.size() || coarse.size() % d != 0)
    throw ArgumentError("refine_midpoint: size mismatch");
  const double half_sd = 0.5 * std::sqrt(h);
  const std::uint32_t stream = level_stream(level);
  const std::size_t normals = coarse.size();
  for (std::size_t j = 0; 2 * j < normals; ++j) {
    const auto [za, zb] = normal_pair(seed, stream, path, static_cast<std::uint32_t>(j));
    for (std::size_t c = 0; c < 2 && 2 * j + c < normals; ++c) {
      const std::size_t n = 2 * j + c;
      const std::size_t i = n / d;
      const std::size_t k = n % d;
      const double dw = coarse[n];
      const double first = bridge_mid(dw, half_sd, c == 0 ? za : zb);
      fine[(2 * i) * d + k] = first;
      fine[(2 * i + 1) * d + k] = dw - first;
    }
  }
}

RefinedIncrements refine_common_noise(const TrajectoryBatch& batch,
                                      std::size_t factor,
                                      const SimOptions& options)
{
  if (factor < 2)
    throw ArgumentError("refine_common_noise: factor must be at least 2");
  if (batch.increments.size() != batch.m_paths * batch.grid.steps * static_cast<std::size_t>(batch.dim))
    throw ArgumentError("refine_common_noise: batch does not carry its increments");
  const std::size_t fine_steps = safe_mul(batch.grid.steps, factor);
  if (fine_steps > (std::size_t{ 1 } << 24))
    throw BudgetError("refine_common_noise: fine grid of " + std::to_string(fine_steps) +
                      " steps exceeds 2^24");
  const auto d = static_cast<std::size_t>(batch.dim);
  check_budget(safe_mul(safe_mul(safe_mul(batch.m_paths, fine_steps), d), 8), options,
               "refine_common_noise");

  RefinedIncrements out;
  out.grid = GridSchedule(batch.grid.horizon, fine_steps);
  out.m_paths = batch.m_paths;
  out.dim = batch.dim;
  out.increments.assign(batch.m_paths * fine_steps * d, 0.0);
  const bool dyadic = std::has_single_bit(factor);
  const std::size_t n = batch.grid.steps;

  parallel_for(batch.m_paths, options.jobs, [&](std::size_t m) {
    const std::span<const double> coarse(batch.increments.data() + m * n * d, n * d);
    const std::span<double> dest(out.increments.data() + m * fine_steps * d, fine_steps * d);
    if (dyadic) {
      std::vector<double> cur(coarse.begin(), coarse.end());
      std::vector<double> next;
      double h = batch.grid.h();
      unsigned level = 1;
      for (std::size_t f = 1; f < factor; f *= 2, ++level) {
        next.assign(2 * cur.size(), 0.0);
        refine_midpoint(cur, next, batch.dim, h, batch.seed, m, level);
        cur.swap(next);
        h *= 0.5;
      }
      std::copy(cur.begin(), cur.end(), dest.begin());
      return;
    }
    // sequential bridge: split the remaining increment over the remaining time
    const double hf = batch.grid.h() / static_cast<double>(factor);
    const std::uint32_t stream = stream_id(Stream::general_bridge);
    for (std::size_t c = 0; c < n; ++c) {
      for (std::size_t k = 0; k < d; ++k) {
        double rest = coarse[c * d + k];
        for (std::size_t j = 0; j + 1 < factor; ++j) {
          const std::size_t idx = (c * (factor - 1) + j) * d + k;
          const auto [za, zb] = normal_pair(batch.seed, stream, m, static_cast<std::uint32_t>(idx / 2));
          const double z = idx % 2 == 0 ? za : zb;
          const double tau = hf * static_cast<double>(factor - j);
          const double piece = rest * (hf / tau) + std::sqrt(hf * (tau - hf) / tau) * z;
          dest[(c * factor + j) * d + k] = piece;
          rest -= piece;
        }
        dest[(c * factor + factor - 1) * d + k] = rest;
      }
    }
  });
  return out;
}

std::vector<double> continuous_interpolate(const TrajectoryBatch& batch,
                                           double s,
                                           const CoefficientField& field)
{
  const GridSchedule& g = batch.grid;
  if (!(s >= 0.0 && s <= g.horizon))
    throw ArgumentError("continuous_interpolate: time " + std::to_string(s) + " outside [0, " +
                        std::to_string(g.horizon) + "]");
  if (field.dim() != batch.dim)
    throw ArgumentError("continuous_interpolate: dimension mismatch");
  const auto d = static_cast<std::size_t>(batch.dim);
  const std::size_t n = g.steps;
  if (batch.states.size() != batch.m_paths * (n + 1) * d)
    throw ArgumentError("continuous_interpolate: batch does not carry its states");
  const std::size_t i = g.floor_index(s);
  std::vector<double> out(batch.m_paths * d);
  if (i == n || g.time(i) == s) {
    for (std::size_t m = 0; m < batch.m_paths; ++m)
      for (std::size_t k = 0; k < d; ++k)
        out[m * d + k] = batch.states[(m * (n + 1) + i) * d + k];
    return out;
  }
  if (batch.increments.size() != batch.m_paths * n * d)
    throw ArgumentError("continuous_interpolate: batch does not carry its increments");
  const double ti = g.time(i);
  const double tn = g.time(i + 1);
  const double h = tn - ti;
  const double lead = s - ti;
  const double frac = lead / h;
  const double sd = std::sqrt(lead * (tn - s) / h);
  const std::uint32_t stream = stream_id(Stream::interpolation);
  for (std::size_t m = 0; m < batch.m_paths; ++m) {
    Vec x{};
    for (std::size_t k = 0; k < d; ++k)
      x[k] = batch.states[(m * (n + 1) + i) * d + k];
    const Vec b = field.drift(ti, x);
    const Mat sg = field.sigma_mat(ti, x);
    Vec w{};
    for (std::size_t k = 0; k < d; ++k) {
      const std::size_t idx = i * d + k;
      const auto [za, zb] = normal_pair(batch.seed, stream, m, static_cast<std::uint32_t>(idx / 2));
      w[k] = frac * batch.increments[(m * n + i) * d + k] + sd * (idx % 2 == 0 ? za : zb);
    }
    for (std::size_t k = 0; k < d; ++k) {
      double acc = x[k] + b[k] * lead;
      for (std::size_t j = 0; j < d; ++j)
        acc += at(sg, static_cast<int>(k), static_cast<int>(j)) * w[j];
      out[m * d + k] = acc;
    }
  }
  return out;
}

LevelTerminals simulate_levels(const std::vector<const CoefficientField*>& fields,
                               std::span<const double> x0,
                               double horizon,
                               std::size_t n_coarse,
                               unsigned levels,
                               std::size_t m,
                               std::uint64_t seed,
                               const SimOptions& options)
{
  if (fields.empty())
    throw ArgumentError("simulate_levels: no fields");
  const int dim = fields.front()->dim();
  for (const auto* f : fields) {
    if (!f || f->dim() != dim)
      throw ArgumentError("simulate_levels: fields must share the dimension");
    check_x0(*f, x0);
  }
  if (m < 1 || n_coarse < 1)
    throw ConfigError("simulate_levels: need at least one path and one step");
  if (levels > 24 || (n_coarse << levels) > (std::size_t{ 1 } << 24))
    throw BudgetError("simulate_levels: finest grid exceeds 2^24 steps");
  const auto d = static_cast<std::size_t>(dim);
  check_budget(safe_mul(safe_mul(safe_mul(fields.size() * (levels + 1), m), d), 8), options,
               "simulate_levels");

  LevelTerminals out;
  out.horizon = horizon;
  out.n_coarse = n_coarse;
  out.m_paths = m;
  out.dim = dim;
  out.terminals.assign(fields.size(),
                       std::vector<std::vector<double>>(levels + 1, std::vector<double>(m * d)));
  std::vector<GridSchedule> grids;
  for (unsigned l = 0; l <= levels; ++l)
    grids.emplace_back(horizon, n_coarse << l);

  const std::size_t block = std::max<std::size_t>(1, options.block);
  const std::size_t blocks = (m + block - 1) / block;
  // Time-chunked traversal: for each base step, generate its whole subtree
  // of refined increments and advance every level through it. The working
  // set stays at 2^levels steps per block instead of the full path.
  parallel_for(blocks, options.jobs, [&](std::size_t bi) {
    const std::size_t p0 = bi * block;
    const std::size_t count = std::min(block, m - p0);
    const std::size_t row = count * d;
    std::vector<std::vector<double>> inc(levels + 1);
    std::vector<double> z, z0, z1;
    std::vector<std::vector<double>> x(fields.size() * (levels + 1), std::vector<double>(row));
    for (auto& xs : x)
      for (std::size_t p = 0; p < count; ++p)
        for (std::size_t k = 0; k < d; ++k)
          xs[p * d + k] = x0[k];
    std::vector<LockstepEuler> euler;
    euler.reserve(fields.size() * (levels + 1));
    for (std::size_t f = 0; f < fields.size(); ++f)
      for (unsigned l = 0; l <= levels; ++l)
        euler.emplace_back(*fields[f], grids[l], count);

    for (std::size_t c = 0; c < n_coarse; ++c) {
      block_base_increments(seed, p0, count, c, 1, dim, grids[0].h(), inc[0], z, z0, z1);
      for (unsigned l = 0; l <= levels; ++l) {
        const std::size_t span = std::size_t{ 1 } << l;
        if (l > 0)
          block_refine(seed, p0, count, c * (span / 2), span / 2, dim, grids[l - 1].h(), l,
                       inc[l - 1], inc[l], z, z0, z1);
        for (std::size_t f = 0; f < fields.size(); ++f)
          euler[f * (levels + 1) + l].run_steps(x[f * (levels + 1) + l].data(), inc[l].data(),
                                                c * span, span, p0);
      }
    }
    for (std::size_t f = 0; f < fields.size(); ++f)
      for (unsigned l = 0; l <= levels; ++l)
        std::copy(x[f * (levels + 1) + l].begin(), x[f * (levels + 1) + l].end(),
                  out.terminals[f][l].begin() + static_cast<std::ptrdiff_t>(p0 * d));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

template<class T>
void put(std::ofstream& os, T v)
{
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template<class T>
T get(std::ifstream& is)
{
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is)
    throw ConfigError("truncated batch file");
  return v;
}

constexpr std::uint32_t kDumpVersion = 1;

} // namespace

void write_batch_binary(const TrajectoryBatch& batch, const std::filesystem::path& path)
{
  const auto d = static_cast<std::size_t>(batch.dim);
  if (batch.states.size() != batch.m_paths * (batch.grid.steps + 1) * d)
    throw ArgumentError("write_batch_binary: batch does not carry its states");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os)
    throw ConfigError("cannot open '" + path.string() + "' for writing");
  os.write("EWEL", 4);
  put<std::uint32_t>(os, kDumpVersion);
  put<std::uint64_t>(os, batch.m_paths);
  put<std::uint64_t>(os, batch.grid.steps);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(batch.dim));
  put<std::uint64_t>(os, batch.seed);
  os.write(reinterpret_cast<const char*>(batch.states.data()),
           static_cast<std::streamsize>(batch.states.size() * sizeof(double)));
  if (!os)
    throw ConfigError("failed writing '" + path.string() + "'");
}

TrajectoryBatch read_batch_binary(const std::filesystem::path& path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw ConfigError("cannot open '" + path.string() + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "EWEL", 4) != 0)
    throw ConfigError("'" + path.string() + "' is not a batch dump");
  const auto version = get<std::uint32_t>(is);
  if (version != kDumpVersion)
    throw ConfigError("unsupported batch dump version " + std::to_string(version));
  TrajectoryBatch b;
  b.m_paths = get<std::uint64_t>(is);
  const auto n = get<std::uint64_t>(is);
  b.dim = static_cast<int>(get<std::uint32_t>(is));
  b.seed = get<std::uint64_t>(is);
  if (b.dim < 1 || b.dim > kMaxDim || n < 1)
    throw ConfigError("corrupt batch dump header");
  b.grid.steps = n;
  b.grid.horizon = 1.0; // the horizon is not part of the format
  const auto d = static_cast<std::size_t>(b.dim);
  b.states.resize(safe_mul(safe_mul(b.m_paths, n + 1), d));
  is.read(reinterpret_cast<char*>(b.states.data()),
          static_cast<std::streamsize>(b.states.size() * sizeof(double)));
  if (!is)
    throw ConfigError("truncated batch file");
  b.terminal.resize(b.m_paths * d);
  for (std::size_t m = 0; m < b.m_paths; ++m)
    for (std::size_t k = 0; k < d; ++k) {
      b.terminal[m * d + k] = b.states[(m * (n + 1) + n) * d + k];
      if (m == 0)
        b.x0[k] = b.states[k];
    }
  return b;
}

std::string batch_summary_csv(const TrajectoryBatch& batch)
{
  std::ostringstream os;
  os << "seed,M,N,coordinate,terminal_mean,terminal_variance\n";
  const auto d = static_cast<std::size_t>(batch.dim);
  for (std::size_t k = 0; k < d; ++k) {
    double mean = 0.0;
    for (std::size_t m = 0; m < batch.m_paths; ++m)
      mean += batch.terminal[m * d + k];
    mean /= static_cast<double>(batch.m_paths);
    double var = 0.0;
    for (std::size_t m = 0; m < batch.m_paths; ++m) {
      const double e = batch.terminal[m * d + k] - mean;
      var += e * e;
    }
    var /= static_cast<double>(std::max<std::size_t>(1, batch.m_paths - 1));
    os << batch.seed << ',' << batch.m_paths << ',' << batch.grid.steps << ',' << k << ','
       << format_double(mean) << ',' << format_double(var) << '\n';
  }
  return os.str();
}

} // namespace ewel
