#include "ewel/harness.hpp"

#include "ewel/errors.hpp"
#include "ewel/euler.hpp"
#include "ewel/format.hpp"
#include "ewel/mollifier.hpp"
#include "ewel/parametrix.hpp"
#include "ewel/plot.hpp"
#include "ewel/weak_error.hpp"

#include <json.hpp>
#include <openssl/evp.h>
#include <toml.hpp>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cerrno>
#include <cfloat>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#ifndef EWEL_VERSION
#define EWEL_VERSION "0.0.0"
#endif

namespace ewel {

std::string tool_version()
{
  return EWEL_VERSION;
}

std::string to_string(ExperimentKind k)
{
  switch (k) {
  case ExperimentKind::weak_error:
    return "weak_error";
  case ExperimentKind::density:
    return "density";
  case ExperimentKind::decomposition:
    return "decomposition";
  case ExperimentKind::mollifier:
    return "mollifier";
  case ExperimentKind::parametrix:
    return "parametrix";
  }
  return "?";
}

namespace {

// ---------------------------------------------------------------------------
// Config reading
// ---------------------------------------------------------------------------

struct Context
{
  std::string source;
  std::map<std::string, std::size_t> lines;

  [[noreturn]] void fail(const std::string& field, const std::string& message) const
  {
    std::string where = source;
    const auto it = lines.find(field);
    if (it != lines.end() && it->second > 0)
      where += ":" + std::to_string(it->second);
    throw ConfigError(where + ": field '" + field + "': " + message);
  }
};

class TableReader
{
public:
  TableReader(const toml::table& table, Context& ctx, std::string prefix)
    : table_(table)
    , ctx_(ctx)
    , prefix_(std::move(prefix))
  {
  }

  std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  const toml::node* node(const std::string& key)
  {
    used_.insert(key);
    const toml::node* n = table_.get(key);
    if (n)
      ctx_.lines[path(key)] = n->source().begin.line;
    return n;
  }

  bool has(const std::string& key) const { return table_.contains(key); }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt)
  {
    const toml::node* n = node(key);
    if (!n)
      return require(key, fallback);
    if (!n->is_number())
      ctx_.fail(path(key), "expected a number");
    return *n->value<double>();
  }

  std::int64_t integer(const std::string& key, std::optional<std::int64_t> fallback = std::nullopt)
  {
    const toml::node* n = node(key);
    if (!n)
      return require(key, fallback);
    if (!n->is_integer())
      ctx_.fail(path(key), "expected an integer");
    return *n->value<std::int64_t>();
  }

  std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt)
  {
    const toml::node* n = node(key);
    if (!n)
      return require(key, fallback);
    if (!n->is_string())
      ctx_.fail(path(key), "expected a string");
    return *n->value<std::string>();
  }

  std::vector<double> numbers(const std::string& key, bool required = false)
  {
    std::vector<double> out;
    const toml::array* a = array(key, required);
    if (!a)
      return out;
    for (const toml::node& e : *a) {
      if (!e.is_number())
        ctx_.fail(path(key), "expected an array of numbers");
      out.push_back(*e.value<double>());
    }
    return out;
  }

  std::vector<std::int64_t> integers(const std::string& key, bool required = false)
  {
    std::vector<std::int64_t> out;
    const toml::array* a = array(key, required);
    if (!a)
      return out;
    for (const toml::node& e : *a) {
      if (!e.is_integer())
        ctx_.fail(path(key), "expected an array of integers");
      out.push_back(*e.value<std::int64_t>());
    }
    return out;
  }

  std::vector<std::string> strings(const std::string& key, bool required = false)
  {
    std::vector<std::string> out;
    const toml::array* a = array(key, required);
    if (!a)
      return out;
    for (const toml::node& e : *a) {
      if (!e.is_string())
        ctx_.fail(path(key), "expected an array of strings");
      out.push_back(*e.value<std::string>());
    }
    return out;
  }

  //! Array of points; plain numbers are read as one-dimensional points.
  std::vector<Vec> points(const std::string& key, bool required = false)
  {
    std::vector<Vec> out;
    point_dims_.clear();
    const toml::array* a = array(key, required);
    if (!a)
      return out;
    for (const toml::node& e : *a) {
      Vec p{};
      if (e.is_number()) {
        p[0] = *e.value<double>();
        out.push_back(p);
        point_dims_.push_back(1);
        continue;
      }
      const toml::array* inner = e.as_array();
      if (!inner || inner->empty() || inner->size() > static_cast<std::size_t>(kMaxDim))
        ctx_.fail(path(key), "expected points given as numbers or arrays of 1 to 3 numbers");
      std::size_t k = 0;
      for (const toml::node& c : *inner) {
        if (!c.is_number())
          ctx_.fail(path(key), "point coordinates must be numbers");
        p[k++] = *c.value<double>();
      }
      out.push_back(p);
      point_dims_.push_back(static_cast<int>(inner->size()));
    }
    return out;
  }

  //! Dimensions of the points read by the last points() call.
  const std::vector<int>& point_dims() const { return point_dims_; }

  const toml::table* table(const std::string& key, bool required = false)
  {
    const toml::node* n = node(key);
    if (!n) {
      if (required)
        ctx_.fail(path(key), "missing required field");
      return nullptr;
    }
    if (!n->is_table())
      ctx_.fail(path(key), "expected a table");
    return n->as_table();
  }

  const toml::array* array(const std::string& key, bool required)
  {
    const toml::node* n = node(key);
    if (!n) {
      if (required)
        ctx_.fail(path(key), "missing required field");
      return nullptr;
    }
    if (!n->is_array())
      ctx_.fail(path(key), "expected an array");
    return n->as_array();
  }

  //! Fails on the first key outside `known`, before any field is read.
  void allow(std::initializer_list<const char*> known)
  {
    for (auto&& [k, v] : table_) {
      const std::string key(k.str());
      if (std::none_of(known.begin(), known.end(), [&](const char* n) { return key == n; })) {
        ctx_.lines[path(key)] = v.source().begin.line;
        ctx_.fail(path(key), "unknown key");
      }
    }
  }

  void finish()
  {
    for (auto&& [k, v] : table_) {
      const std::string key(k.str());
      if (!used_.contains(key)) {
        ctx_.lines[path(key)] = v.source().begin.line;
        ctx_.fail(path(key), "unknown key");
      }
    }
  }

private:
  template<class T>
  T require(const std::string& key, const std::optional<T>& fallback)
  {
    if (!fallback)
      ctx_.fail(path(key), "missing required field");
    return *fallback;
  }

  const toml::table& table_;
  Context& ctx_;
  std::string prefix_;
  std::set<std::string> used_;
  std::vector<int> point_dims_;
};

ExperimentKind parse_kind(const std::string& s, const Context& ctx)
{
  for (ExperimentKind k : { ExperimentKind::weak_error, ExperimentKind::density, ExperimentKind::decomposition,
                            ExperimentKind::mollifier, ExperimentKind::parametrix })
    if (to_string(k) == s)
      return k;
  ctx.fail("kind", "unknown experiment kind '" + s +
                     "' (expected weak_error, density, decomposition, mollifier, parametrix)");
}

Manifold read_manifold(const toml::table& t, Context& ctx, const std::string& prefix)
{
  TableReader r(t, ctx, prefix);
  const std::string kind = r.string("kind");
  Manifold m;
  try {
    switch (parse_manifold_kind(kind)) {
    case ManifoldKind::point:
      m = Manifold::point(r.number("location"));
      break;
    case ManifoldKind::hyperplane: {
      const std::vector<double> n = r.numbers("normal", true);
      m = Manifold::hyperplane(n, r.number("offset", 0.0));
      break;
    }
    case ManifoldKind::sphere: {
      const std::vector<double> c = r.numbers("center", true);
      m = Manifold::sphere(c, r.number("radius"));
      break;
    }
    }
  } catch (const ConfigError& e) {
    ctx.fail(prefix, e.what());
  }
  r.finish();
  return m;
}

std::size_t checked_size(std::int64_t v, const std::string& field, const Context& ctx, std::int64_t min = 1)
{
  if (v < min)
    ctx.fail(field, "must be at least " + std::to_string(min));
  return static_cast<std::size_t>(v);
}

bool doubling(const std::vector<std::size_t>& steps)
{
  for (std::size_t i = 1; i < steps.size(); ++i)
    if (steps[i] != 2 * steps[i - 1])
      return false;
  return true;
}

void validate(ExperimentConfig& c, const Context& ctx)
{
  FieldPtr field;
  try {
    field = make_model(c.model);
  } catch (const ConfigError& e) {
    ctx.fail("model", e.what());
  }
  const int d = field->dim();
  if (field->regime() != c.regime)
    ctx.fail("regime", "model '" + c.model.name + "' is in the " + to_string(field->regime()) + " regime");

  const bool monte_carlo = c.kind == ExperimentKind::weak_error || c.kind == ExperimentKind::density ||
                           c.kind == ExperimentKind::decomposition;
  if (!(c.horizon > 0.0) || !std::isfinite(c.horizon))
    ctx.fail("grid.horizon", "must be positive");
  for (std::size_t i = 0; i < c.steps.size(); ++i)
    if (i > 0 && c.steps[i] <= c.steps[i - 1])
      ctx.fail("grid.steps", "step counts must be strictly increasing");
  if (monte_carlo) {
    if (c.steps.empty())
      ctx.fail("grid.steps", "missing required field");
    if (c.m_paths < 2)
      ctx.fail("m_paths", "missing required field (at least 2 paths)");
    if (c.refinement_factor < 16)
      ctx.fail("grid.refinement_factor", "must be at least 16");
    for (int k = d; k < kMaxDim; ++k)
      if (c.x0[static_cast<std::size_t>(k)] != 0.0)
        ctx.fail("grid.x0", "has more coordinates than the model dimension");
  }
  if (c.kind == ExperimentKind::weak_error) {
    if (c.test_functions.empty())
      ctx.fail("measure.test_functions", "missing required field");
    for (const std::string& s : c.test_functions) {
      try {
        const TestFunction f = parse_test_function(s);
        if (f.kind() == TestFunction::Kind::coordinate && s[1] - '0' >= d)
          ctx.fail("measure.test_functions", "'" + s + "' exceeds the model dimension");
      } catch (const ConfigError& e) {
        ctx.fail("measure.test_functions", e.what());
      }
    }
  }
  if (c.kind == ExperimentKind::density || c.kind == ExperimentKind::decomposition) {
    if (c.y_points.empty())
      ctx.fail("measure.y_points", "missing required field");
    if (!std::has_single_bit(c.refinement_factor))
      ctx.fail("grid.refinement_factor", "density sweeps need a power of two");
    if (!doubling(c.steps))
      ctx.fail("grid.steps", "density sweeps need step counts that double");
    if (c.bandwidth < 0.0)
      ctx.fail("measure.bandwidth", "must be non-negative");
  }
  const MollifierConfig& m = c.mollifier;
  if (m.schedule != "none" && m.schedule != "fixed" && m.schedule != "balanced")
    ctx.fail("mollifier.schedule", "expected none, fixed or balanced");
  if (m.q != 0.0 && !(m.q > static_cast<double>(d)))
    ctx.fail("mollifier.q", "q must exceed the dimension " + std::to_string(d));
  if (m.nodes < 8)
    ctx.fail("mollifier.nodes", "must be at least 8");
  if (c.kind == ExperimentKind::decomposition) {
    if (m.schedule == "none")
      ctx.fail("mollifier.schedule", "decomposition needs a fixed or balanced schedule");
    if (m.schedule == "fixed" && !(m.epsilon > 0.0 && m.epsilon <= 1.0))
      ctx.fail("mollifier.epsilon", "must lie in (0, 1]");
    if (m.schedule == "balanced") {
      for (std::size_t n : c.steps) {
        const double h = c.horizon / static_cast<double>(n);
        if (!(h < std::exp(-std::numbers::e)))
          ctx.fail("grid.steps", "balanced schedule needs h < exp(-e), got h = " + format_double(h));
      }
      if (!(m.c_eta > 0.0))
        ctx.fail("mollifier.c_eta", "must be positive");
    }
  }
  if (c.kind == ExperimentKind::mollifier) {
    if (m.epsilons.size() < 2)
      ctx.fail("mollifier.epsilons", "need at least two values");
    for (double e : m.epsilons)
      if (!(e > 0.0 && e <= 1.0))
        ctx.fail("mollifier.epsilons", "values must lie in (0, 1]");
    if (m.q != 0.0 && field->regime() != Regime::piecewise_smooth)
      ctx.fail("mollifier.q", "L^q deviations need a piecewise smooth model");
  }
  if (c.kind == ExperimentKind::parametrix) {
    const ParametrixConfig& p = c.parametrix;
    if (d > 2)
      ctx.fail("model.dim", "parametrix series support d <= 2");
    if (p.x.empty())
      ctx.fail("parametrix.x", "missing required field");
    if (p.y.empty())
      ctx.fail("parametrix.y", "missing required field");
    if (!(p.t > p.s))
      ctx.fail("parametrix.t", "must exceed s");
    if (p.r_max < 0 || p.r_max > 6)
      ctx.fail("parametrix.r_max", "must lie in [0, 6]");
    if (p.mode != "continuous" && p.mode != "discrete" && p.mode != "both")
      ctx.fail("parametrix.mode", "expected continuous, discrete or both");
    if (p.mode != "continuous" && c.steps.empty())
      ctx.fail("grid.steps", "discrete series need step counts");
  }
  if (c.acceptance.zero_within && !(*c.acceptance.zero_within > 0.0))
    ctx.fail("acceptance.zero_within", "must be positive");
}

ExperimentConfig read_config(const toml::table& root, Context& ctx)
{
  ExperimentConfig c;
  TableReader r(root, ctx, "");
  r.allow({ "name", "kind", "seed", "m_paths", "output_dir", "regime", "model", "grid", "measure", "mollifier",
            "parametrix", "acceptance" });
  c.name = r.string("name");
  c.kind = parse_kind(r.string("kind"), ctx);
  const std::int64_t seed = r.integer("seed");
  if (seed < 0)
    ctx.fail("seed", "must be non-negative");
  c.seed = static_cast<std::uint64_t>(seed);
  const bool monte_carlo = c.kind == ExperimentKind::weak_error || c.kind == ExperimentKind::density ||
                           c.kind == ExperimentKind::decomposition;
  c.m_paths = checked_size(r.integer("m_paths", monte_carlo ? std::nullopt : std::optional<std::int64_t>(0)),
                           "m_paths", ctx, 0);
  c.output_dir = r.string("output_dir", "out/" + c.name);

  const toml::table* mt = r.table("model", true);
  {
    TableReader mr(*mt, ctx, "model");
    mr.allow({ "name", "dim", "params", "manifolds" });
    c.model.name = mr.string("name");
    c.model.dim = static_cast<int>(mr.integer("dim", 1));
    if (const toml::table* pt = mr.table("params")) {
      for (auto&& [k, v] : *pt) {
        const std::string key(k.str());
        ctx.lines["model.params." + key] = v.source().begin.line;
        if (!v.is_number())
          ctx.fail("model.params." + key, "expected a number");
        c.model.params[key] = *v.value<double>();
      }
    }
    if (const toml::array* ma = mr.array("manifolds", false)) {
      std::size_t i = 0;
      for (const toml::node& e : *ma) {
        const std::string prefix = "model.manifolds[" + std::to_string(i++) + "]";
        if (!e.is_table())
          ctx.fail(prefix, "expected a table");
        c.model.manifolds.push_back(read_manifold(*e.as_table(), ctx, prefix));
      }
    }
    mr.finish();
  }
  {
    FieldPtr probe;
    try {
      probe = make_model(c.model);
    } catch (const ConfigError& e) {
      ctx.fail("model", e.what());
    }
    const std::string regime = r.string("regime", to_string(probe->regime()));
    if (regime == to_string(Regime::holder))
      c.regime = Regime::holder;
    else if (regime == to_string(Regime::piecewise_smooth))
      c.regime = Regime::piecewise_smooth;
    else
      ctx.fail("regime", "expected holder or piecewise_smooth");
  }

  if (const toml::table* gt = r.table("grid", monte_carlo)) {
    TableReader gr(*gt, ctx, "grid");
    c.horizon = gr.number("horizon", 1.0);
    for (std::int64_t n : gr.integers("steps", monte_carlo))
      c.steps.push_back(checked_size(n, "grid.steps", ctx));
    c.refinement_factor = checked_size(gr.integer("refinement_factor", 64), "grid.refinement_factor", ctx);
    const std::vector<double> x0 = gr.numbers("x0");
    if (x0.size() > static_cast<std::size_t>(c.model.dim))
      ctx.fail("grid.x0", "has more coordinates than the model dimension");
    if (!x0.empty() && x0.size() != static_cast<std::size_t>(c.model.dim))
      ctx.fail("grid.x0", "needs one coordinate per dimension");
    c.x0 = to_vec(x0);
    gr.finish();
  }
  if (const toml::table* st = r.table("measure")) {
    TableReader sr(*st, ctx, "measure");
    c.test_functions = sr.strings("test_functions");
    c.y_points = sr.points("y_points");
    for (int pd : sr.point_dims())
      if (pd != c.model.dim)
        ctx.fail("measure.y_points", "points need " + std::to_string(c.model.dim) + " coordinates");
    c.bandwidth = sr.number("bandwidth", 0.0);
    sr.finish();
  }
  if (const toml::table* mt2 = r.table("mollifier")) {
    TableReader mr(*mt2, ctx, "mollifier");
    MollifierConfig& m = c.mollifier;
    m.schedule = mr.string("schedule", "none");
    m.epsilon = mr.number("epsilon", 0.0);
    m.epsilons = mr.numbers("epsilons");
    m.nodes = checked_size(mr.integer("nodes", 24), "mollifier.nodes", ctx);
    m.c_eta = mr.number("c_eta", 1.0);
    m.table_spacing = mr.number("table_spacing", 0.0);
    m.table_extent = mr.number("table_extent", 8.0);
    m.q = mr.number("q", 0.0);
    if (m.table_spacing < 0.0 || !(m.table_extent > 0.0))
      ctx.fail("mollifier.table_spacing", "table spacing must be >= 0 and extent > 0");
    mr.finish();
  }
  if (const toml::table* pt = r.table("parametrix", c.kind == ExperimentKind::parametrix)) {
    TableReader pr(*pt, ctx, "parametrix");
    ParametrixConfig& p = c.parametrix;
    p.s = pr.number("s", 0.0);
    p.t = pr.number("t", 1.0);
    p.x = pr.points("x");
    for (int pd : pr.point_dims())
      if (pd != c.model.dim)
        ctx.fail("parametrix.x", "points need " + std::to_string(c.model.dim) + " coordinates");
    p.y = pr.points("y");
    for (int pd : pr.point_dims())
      if (pd != c.model.dim)
        ctx.fail("parametrix.y", "points need " + std::to_string(c.model.dim) + " coordinates");
    p.r_max = static_cast<int>(pr.integer("r_max", 4));
    p.time_nodes = checked_size(pr.integer("time_nodes", 64), "parametrix.time_nodes", ctx, 2);
    p.table_nodes = checked_size(pr.integer("table_nodes", 32), "parametrix.table_nodes", ctx, 2);
    p.space_nodes = checked_size(pr.integer("space_nodes", 48), "parametrix.space_nodes", ctx, 2);
    p.radius = pr.number("radius", 6.0);
    p.mode = pr.string("mode", "continuous");
    pr.finish();
  }
  if (const toml::table* at = r.table("acceptance")) {
    TableReader ar(*at, ctx, "acceptance");
    if (ar.has("min_slope"))
      c.acceptance.min_slope = ar.number("min_slope");
    if (ar.has("zero_within"))
      c.acceptance.zero_within = ar.number("zero_within");
    ar.finish();
  }
  r.finish();
  validate(c, ctx);
  return c;
}

// ---------------------------------------------------------------------------
// Canonical serialization
// ---------------------------------------------------------------------------

std::string quoted(const std::string& s)
{
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\')
      out += '\\';
    out += ch;
  }
  return out + '"';
}

//! TOML needs a decimal point or exponent to keep floats floats; integral
//! values are written as integers and read back through value<double>.
std::string num(double v)
{
  return format_double(v);
}

std::string num_list(const std::vector<double>& v)
{
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i)
    out += (i ? ", " : "") + num(v[i]);
  return out + "]";
}

std::string point_list(const std::vector<Vec>& pts, int dim)
{
  std::string out = "[";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out += i ? ", [" : "[";
    for (int k = 0; k < dim; ++k)
      out += (k ? ", " : "") + num(pts[i][static_cast<std::size_t>(k)]);
    out += "]";
  }
  return out + "]";
}

std::string iso_now()
{
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

} // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source)
{
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    throw ConfigError(source + ":" + std::to_string(e.source().begin.line) + ": " + std::string(e.description()));
  }
  Context ctx{ source, {} };
  return read_config(root, ctx);
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ConfigError(path.string() + ": cannot open config");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string to_toml(const ExperimentConfig& c)
{
  const int d = c.model.dim;
  std::ostringstream os;
  os << "name = " << quoted(c.name) << '\n'
     << "kind = " << quoted(to_string(c.kind)) << '\n'
     << "seed = " << c.seed << '\n'
     << "m_paths = " << c.m_paths << '\n'
     << "output_dir = " << quoted(c.output_dir) << '\n'
     << "regime = " << quoted(to_string(c.regime)) << '\n';
  os << "\n[model]\nname = " << quoted(c.model.name) << "\ndim = " << d << "\nparams = {";
  bool first = true;
  for (const auto& [k, v] : c.model.params) {
    os << (first ? " " : ", ") << k << " = " << num(v);
    first = false;
  }
  os << (first ? "}" : " }") << '\n';
  if (!c.model.manifolds.empty()) {
    os << "manifolds = [";
    for (std::size_t i = 0; i < c.model.manifolds.size(); ++i) {
      const Manifold& m = c.model.manifolds[i];
      os << (i ? ", " : "") << "{ kind = " << quoted(to_string(m.kind));
      const std::vector<double> center(m.center.begin(), m.center.begin() + m.dim);
      const std::vector<double> normal(m.normal.begin(), m.normal.begin() + m.dim);
      switch (m.kind) {
      case ManifoldKind::point:
        os << ", location = " << num(m.center[0]);
        break;
      case ManifoldKind::hyperplane:
        os << ", normal = " << num_list(normal) << ", offset = " << num(m.offset);
        break;
      case ManifoldKind::sphere:
        os << ", center = " << num_list(center) << ", radius = " << num(m.radius);
        break;
      }
      os << " }";
    }
    os << "]\n";
  }
  std::vector<double> steps(c.steps.begin(), c.steps.end());
  os << "\n[grid]\nhorizon = " << num(c.horizon) << "\nsteps = [";
  for (std::size_t i = 0; i < c.steps.size(); ++i)
    os << (i ? ", " : "") << c.steps[i];
  os << "]\nrefinement_factor = " << c.refinement_factor
     << "\nx0 = " << num_list(std::vector<double>(c.x0.begin(), c.x0.begin() + d)) << '\n';
  os << "\n[measure]\ntest_functions = [";
  for (std::size_t i = 0; i < c.test_functions.size(); ++i)
    os << (i ? ", " : "") << quoted(c.test_functions[i]);
  os << "]\ny_points = " << point_list(c.y_points, d) << "\nbandwidth = " << num(c.bandwidth) << '\n';
  const MollifierConfig& m = c.mollifier;
  os << "\n[mollifier]\nschedule = " << quoted(m.schedule) << "\nepsilon = " << num(m.epsilon)
     << "\nepsilons = " << num_list(m.epsilons) << "\nnodes = " << m.nodes << "\nc_eta = " << num(m.c_eta)
     << "\ntable_spacing = " << num(m.table_spacing) << "\ntable_extent = " << num(m.table_extent)
     << "\nq = " << num(m.q) << '\n';
  const ParametrixConfig& p = c.parametrix;
  os << "\n[parametrix]\ns = " << num(p.s) << "\nt = " << num(p.t) << "\nx = " << point_list(p.x, d)
     << "\ny = " << point_list(p.y, d) << "\nr_max = " << p.r_max << "\ntime_nodes = " << p.time_nodes
     << "\ntable_nodes = " << p.table_nodes << "\nspace_nodes = " << p.space_nodes << "\nradius = " << num(p.radius)
     << "\nmode = " << quoted(p.mode) << '\n';
  os << "\n[acceptance]\n";
  if (c.acceptance.min_slope)
    os << "min_slope = " << num(*c.acceptance.min_slope) << '\n';
  if (c.acceptance.zero_within)
    os << "zero_within = " << num(*c.acceptance.zero_within) << '\n';
  return os.str();
}

std::string config_hash(const ExperimentConfig& config)
{
  const std::string text = to_toml(config);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw NumericalFault("config_hash: SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string manifest_json(const RunManifest& manifest)
{
  nlohmann::ordered_json j;
  j["config_hash"] = manifest.config_hash;
  j["tool_version"] = manifest.tool_version;
  j["started"] = manifest.started;
  j["finished"] = manifest.finished;
  auto jobs = nlohmann::ordered_json::array();
  for (const JobRecord& r : manifest.jobs) {
    nlohmann::ordered_json e;
    e["name"] = r.name;
    e["seed"] = r.seed;
    e["status"] = r.status;
    if (!r.message.empty())
      e["message"] = r.message;
    jobs.push_back(std::move(e));
  }
  j["jobs"] = std::move(jobs);
  j["outputs"] = manifest.outputs;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

namespace {

struct RunState
{
  const ExperimentConfig& config;
  const RunOptions& options;
  FieldPtr field;
  RunManifest manifest;
  std::vector<std::pair<std::string, std::string>> files;
  std::vector<std::string> messages;
  bool fault = false;
  bool miss = false;

  void add_file(const std::string& name, std::string content) { files.emplace_back(name, std::move(content)); }

  SimOptions sim() const
  {
    SimOptions o;
    o.jobs = std::max(1u, options.jobs);
    o.keep_states = false;
    o.keep_increments = false;
    return o;
  }

  //! Runs one job; numerical faults and budget errors mark it failed and
  //! let the others proceed.
  template<class Fn>
  void job(const std::string& name, std::uint64_t seed, Fn&& fn)
  {
    JobRecord rec{ name, seed, "ok", "" };
    try {
      fn();
    } catch (const NumericalFault& e) {
      rec.status = "failed";
      rec.message = e.what();
    } catch (const BudgetError& e) {
      rec.status = "failed";
      rec.message = e.what();
    } catch (const ArgumentError& e) {
      rec.status = "failed";
      rec.message = e.what();
    }
    if (rec.status == "failed") {
      fault = true;
      messages.push_back("job " + name + " failed: " + rec.message);
    }
    manifest.jobs.push_back(std::move(rec));
  }

  //! Fit, JSON and plot for one error series, plus the slope threshold.
  void report_series(const std::string& stem, const std::vector<RatePoint>& pts, double gamma, bool primary)
  {
    std::vector<RatePoint> abs_pts;
    for (RatePoint p : pts) {
      p.error = std::abs(p.error);
      abs_pts.push_back(p);
    }
    const std::size_t usable = static_cast<std::size_t>(
      std::count_if(abs_pts.begin(), abs_pts.end(), [](const RatePoint& p) { return p.error > 0.0; }));
    if (usable >= 4) {
      const RateFit fit = fit_rate(abs_pts);
      add_file(stem + ".json", rate_fit_json(fit));
      if (primary && config.acceptance.min_slope) {
        if (fit.slope >= *config.acceptance.min_slope) {
          messages.push_back("slope " + format_double(fit.slope) + " >= " + format_double(*config.acceptance.min_slope));
        } else {
          miss = true;
          messages.push_back("acceptance miss: slope " + format_double(fit.slope) + " < " +
                             format_double(*config.acceptance.min_slope));
        }
      }
    } else if (primary && config.acceptance.min_slope) {
      miss = true;
      messages.push_back("acceptance miss: fewer than four positive errors to fit");
    }
    if (usable >= 2) {
      PlotOptions po;
      po.title = config.name;
      po.gamma = gamma;
      try {
        add_file(stem == "rate_fit" ? "plot.svg" : stem + ".svg", emit_plot(abs_pts, po));
      } catch (const NumericalFault& e) {
        messages.push_back("plot skipped: " + std::string(e.what()));
      }
    }
  }
};

std::string sanitize(const std::string& s)
{
  std::string out;
  for (char c : s)
    out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

unsigned levels_of(const std::vector<std::size_t>& steps)
{
  return static_cast<unsigned>(steps.size() - 1);
}

void run_weak_error(RunState& st)
{
  const ExperimentConfig& c = st.config;
  const CoefficientField& field = *st.field;
  const std::span<const double> x0(c.x0.data(), static_cast<std::size_t>(field.dim()));
  std::vector<TestFunction> fs;
  for (const std::string& spec : c.test_functions)
    fs.push_back(parse_test_function(spec));

  std::vector<WeakErrorSweep> sweeps;
  if (doubling(c.steps) && std::has_single_bit(c.refinement_factor)) {
    st.job("weak_error", c.seed, [&] {
      sweeps = weak_error_sweeps(field, fs, x0, c.horizon, c.steps.front(), levels_of(c.steps), c.refinement_factor,
                                 c.m_paths, c.seed, st.sim());
    });
  } else {
    // independent cells, one coupled estimate per step count shared by all
    // test functions when the factor allows the hierarchy
    sweeps.resize(fs.size());
    for (WeakErrorSweep& sw : sweeps)
      sw.noise_dominated = true;
    for (std::size_t n : c.steps)
      st.job("weak_error:N=" + std::to_string(n), c.seed, [&] {
        std::vector<WeakErrorEstimate> cells;
        if (std::has_single_bit(c.refinement_factor)) {
          for (const WeakErrorSweep& one :
               weak_error_sweeps(field, fs, x0, c.horizon, n, 0, c.refinement_factor, c.m_paths, c.seed, st.sim()))
            cells.push_back(one.cells.front());
        } else {
          for (const TestFunction& f : fs)
            cells.push_back(estimate_weak_error(field, f, x0, GridSchedule(c.horizon, n), c.refinement_factor,
                                                c.m_paths, c.seed, st.sim()));
        }
        for (std::size_t k = 0; k < fs.size(); ++k) {
          sweeps[k].cells.push_back(cells[k]);
          sweeps[k].noise_dominated = sweeps[k].noise_dominated && cells[k].std_error > std::abs(cells[k].error);
        }
      });
  }

  std::vector<SweepRow> rows;
  for (std::size_t k = 0; k < sweeps.size(); ++k) {
    const TestFunction& f = fs[k];
    std::vector<RatePoint> pts;
    for (const WeakErrorEstimate& e : sweeps[k].cells) {
      SweepRow row{ field.name(), e.h, 0.0, f.name(), e.error, e.std_error, 0.0, {} };
      if (sweeps[k].noise_dominated)
        row.flags.push_back("noise-dominated");
      if (c.acceptance.zero_within) {
        // the exact-scheme case leaves only summation roundoff, which the
        // coupled standard error does not bound
        const double fine_steps = c.horizon / e.h * static_cast<double>(c.refinement_factor);
        const double floor = fine_steps * DBL_EPSILON * (1.0 + std::abs(e.coarse_mean));
        if (std::abs(e.error) > *c.acceptance.zero_within * e.std_error + floor) {
          st.miss = true;
          row.flags.push_back("nonzero");
          st.messages.push_back("acceptance miss: " + f.name() + " h=" + format_double(e.h) + " error " +
                                format_double(e.error) + " exceeds " + format_double(*c.acceptance.zero_within) +
                                " stderr");
        }
      }
      rows.push_back(row);
      pts.push_back({ e.h, e.error, e.std_error });
    }
    if (!pts.empty())
      st.report_series(k == 0 ? "rate_fit" : "rate_fit_" + sanitize(f.name()), pts, field.gamma(), k == 0);
  }
  st.add_file("sweep.csv", sweep_csv(rows));
}

std::string density_rows_csv(const std::vector<DensityErrorRow>& rows, int dim)
{
  std::ostringstream os;
  os << "model,component,h,epsilon";
  for (int k = 0; k < dim; ++k)
    os << ",y" << k;
  os << ",distance,error,stderr,bias_bound,flags\n";
  for (const DensityErrorRow& r : rows) {
    os << r.model << ',' << r.component << ',' << format_double(r.h) << ',' << format_double(r.epsilon);
    for (int k = 0; k < dim; ++k)
      os << ',' << format_double(r.y[static_cast<std::size_t>(k)]);
    std::string flags;
    for (const auto& f : r.flags)
      flags += (flags.empty() ? "" : ";") + f;
    os << ',' << format_double(r.distance) << ',' << format_double(r.error) << ',' << format_double(r.std_error)
       << ',' << format_double(r.bias_bound) << ',' << flags << '\n';
  }
  return os.str();
}

FieldPtr make_mollified(const ExperimentConfig& c, const FieldPtr& field, double eps)
{
  MollifierSettings ms;
  ms.nodes = c.mollifier.nodes;
  ms.horizon = c.horizon;
  if (field->regime() == Regime::piecewise_smooth)
    return mollify_piecewise(field, eps, ms);
  MollifiedPtr m = mollify_holder(field, eps, ms);
  if (field->dim() == 1 && field->time_homogeneous()) {
    const double spacing = c.mollifier.table_spacing > 0.0 ? c.mollifier.table_spacing : std::min(eps / 16.0, 0.005);
    return tabulate_1d(m, c.x0[0] - c.mollifier.table_extent, c.x0[0] + c.mollifier.table_extent, spacing);
  }
  return m;
}

void run_density(RunState& st)
{
  const ExperimentConfig& c = st.config;
  const CoefficientField& field = *st.field;
  const int d = field.dim();
  const std::span<const double> x0(c.x0.data(), static_cast<std::size_t>(d));
  std::vector<double> ys;
  for (const Vec& y : c.y_points)
    ys.insert(ys.end(), y.begin(), y.begin() + d);

  std::vector<DensityErrorRow> rows;
  const bool decomposition = c.kind == ExperimentKind::decomposition;
  if (!decomposition || c.mollifier.schedule == "fixed") {
    st.job(decomposition ? "decomposition" : "density", c.seed, [&] {
      DensitySweepOptions o;
      o.refinement_factor = c.refinement_factor;
      o.bandwidth = c.bandwidth;
      o.sim = st.sim();
      FieldPtr moll;
      if (decomposition) {
        moll = make_mollified(c, st.field, c.mollifier.epsilon);
        o.mode = DensitySweepOptions::Mode::mollified_decomposition;
        o.epsilon = c.mollifier.epsilon;
        o.mollified = moll.get();
      }
      rows = density_error_sweep(field, x0, c.horizon, ys, c.steps.front(), levels_of(c.steps), c.m_paths, c.seed, o);
    });
  } else {
    for (std::size_t n : c.steps) {
      const double h = c.horizon / static_cast<double>(n);
      st.job("decomposition:N=" + std::to_string(n), c.seed, [&] {
        const double eps = epsilon_schedule(h, c.horizon, field.gamma(), c.mollifier.c_eta);
        const FieldPtr moll = make_mollified(c, st.field, eps);
        DensitySweepOptions o;
        o.mode = DensitySweepOptions::Mode::mollified_decomposition;
        o.refinement_factor = c.refinement_factor;
        o.bandwidth = c.bandwidth;
        o.sim = st.sim();
        o.epsilon = eps;
        o.mollified = moll.get();
        const std::vector<DensityErrorRow> part = density_error_sweep(field, x0, c.horizon, ys, n, 0, c.m_paths, c.seed, o);
        rows.insert(rows.end(), part.begin(), part.end());
      });
    }
    // group by (y, component) in a fixed order for the tables
    std::stable_sort(rows.begin(), rows.end(), [](const DensityErrorRow& a, const DensityErrorRow& b) {
      if (a.y != b.y)
        return a.y < b.y;
      return a.component < b.component;
    });
  }

  std::vector<SweepRow> sweep;
  for (const DensityErrorRow& r : rows)
    sweep.push_back(to_sweep_row(r, d));
  st.add_file("sweep.csv", sweep_csv(sweep));
  st.add_file("density_errors.csv", density_rows_csv(rows, d));

  std::vector<RatePoint> pts;
  for (const DensityErrorRow& r : rows)
    if (r.component == "scheme" && r.y == rows.front().y)
      pts.push_back({ r.h, r.error, r.std_error });
  if (!pts.empty())
    st.report_series("rate_fit", pts, field.gamma(), true);
}

void run_mollifier(RunState& st)
{
  const ExperimentConfig& c = st.config;
  const FieldPtr& field = st.field;
  const int d = field->dim();
  std::ostringstream os;
  os << "epsilon,delta_b,delta_sigma,delta_sigma_eta,lq,max_drift_derivative,max_sigma_derivative\n";
  std::vector<RatePoint> pts;
  const bool piecewise = field->regime() == Regime::piecewise_smooth;
  for (double eps : c.mollifier.epsilons) {
    st.job("mollifier:eps=" + format_double(eps), c.seed, [&] {
      MollifierSettings ms;
      ms.nodes = c.mollifier.nodes;
      ms.horizon = c.horizon;
      const MollifiedPtr m = piecewise ? mollify_piecewise(field, eps, ms) : mollify_holder(field, eps, ms);
      SampleGrid g;
      g.horizon = c.horizon;
      g.radius = 1.0;
      g.time_points = field->time_homogeneous() ? 1 : 5;
      g.space_points = d == 1 ? 20001 : (d == 2 ? 141 : 31);
      g.holder_pairs = 2000;
      g.seed = c.seed;
      const double eta = 0.5 * field->gamma();
      const DeviationReport dev = sup_deviation(*field, *m, g, eta);
      const double lq = c.mollifier.q > 0.0 ? lq_deviation(*field, *m, c.mollifier.q, c.horizon) : 0.0;
      const DerivativeReport der =
        derivative_blowup_scan(*m, { 1, 0, 0 }, sample_points(d, 1.0, d == 1 ? 4001 : (d == 2 ? 101 : 21)));
      os << format_double(eps) << ',' << format_double(dev.delta_b) << ',' << format_double(dev.delta_sigma) << ','
         << format_double(dev.delta_sigma_eta) << ',' << format_double(lq) << ',' << format_double(der.max_drift)
         << ',' << format_double(der.max_sigma) << '\n';
      const double measure = c.mollifier.q > 0.0 ? lq : (piecewise ? dev.delta_b : dev.delta_sigma);
      pts.push_back({ eps, measure, 0.0 });
    });
  }
  st.add_file("mollifier.csv", os.str());
  if (pts.size() >= 2)
    st.report_series("rate_fit", pts, field->gamma(), true);
}

void run_parametrix(RunState& st)
{
  const ExperimentConfig& c = st.config;
  const ParametrixConfig& p = c.parametrix;
  const CoefficientField& field = *st.field;
  ParametrixSettings ps;
  ps.r_max = p.r_max;
  ps.time_nodes = p.time_nodes;
  ps.table_nodes = p.table_nodes;
  ps.space_nodes = p.space_nodes;
  ps.radius = p.radius;
  ps.jobs = std::max(1u, st.options.jobs);

  std::vector<SeriesAccumulator> rows;
  std::ostringstream cmp;
  const int d = field.dim();
  cmp << "h";
  for (int k = 0; k < d; ++k)
    cmp << ",x" << k;
  for (int k = 0; k < d; ++k)
    cmp << ",y" << k;
  cmp << ",continuous,discrete,difference\n";
  std::vector<RatePoint> diffs;
  const bool cont = p.mode != "discrete";
  const bool disc = p.mode != "continuous";
  for (std::size_t ix = 0; ix < p.x.size(); ++ix) {
    for (std::size_t iy = 0; iy < p.y.size(); ++iy) {
      const Vec& x = p.x[ix];
      const Vec& y = p.y[iy];
      const std::string tag = "x" + std::to_string(ix) + ",y" + std::to_string(iy);
      double cv = 0.0;
      bool have_cont = false;
      if (cont)
        st.job("series:" + tag, c.seed, [&] {
          rows.push_back(density_series(field, p.s, p.t, x, y, ps, SeriesMode::continuous));
          cv = rows.back().value();
          have_cont = true;
        });
      if (!disc)
        continue;
      for (std::size_t n : c.steps) {
        const double h = (p.t - p.s) / static_cast<double>(n);
        st.job("series:" + tag + ",N=" + std::to_string(n), c.seed, [&] {
          rows.push_back(density_series(field, p.s, p.t, x, y, ps, SeriesMode::discrete, h));
          if (!have_cont)
            return;
          const double dv = rows.back().value();
          cmp << format_double(h);
          for (int k = 0; k < d; ++k)
            cmp << ',' << format_double(x[static_cast<std::size_t>(k)]);
          for (int k = 0; k < d; ++k)
            cmp << ',' << format_double(y[static_cast<std::size_t>(k)]);
          cmp << ',' << format_double(cv) << ',' << format_double(dv) << ',' << format_double(cv - dv) << '\n';
          if (ix == 0 && iy == 0)
            diffs.push_back({ h, cv - dv, 0.0 });
        });
      }
    }
  }
  st.add_file("density.csv", series_csv(rows));
  if (cont && disc) {
    st.add_file("cont_vs_disc.csv", cmp.str());
    if (diffs.size() >= 2)
      st.report_series("rate_fit", diffs, field.gamma(), true);
  }
}

} // namespace

RunResult run_experiment(ExperimentConfig config, const RunOptions& options)
{
  RunResult result;
  if (options.honor_env_seed) {
    if (const char* env = std::getenv("EWEL_SEED"); env && *env) {
      char* end = nullptr;
      errno = 0;
      const unsigned long long v = std::strtoull(env, &end, 10);
      if (errno != 0 || *end != '\0' || env[0] == '-' || v > static_cast<unsigned long long>(INT64_MAX)) {
        result.exit_code = 2;
        result.messages.push_back("EWEL_SEED: expected a non-negative integer, got '" + std::string(env) + "'");
        return result;
      }
      config.seed = v;
    }
  }
  RunState st{ config, options, nullptr, {}, {}, {} };
  st.manifest.config_hash = config_hash(config);
  st.manifest.tool_version = tool_version();
  st.manifest.started = iso_now();
  try {
    st.field = make_model(config.model);
  } catch (const ConfigError& e) {
    result.exit_code = 2;
    result.messages.push_back(e.what());
    return result;
  }
  result.output_dir = options.out ? *options.out : std::filesystem::path(config.output_dir);

  try {
    switch (config.kind) {
    case ExperimentKind::weak_error:
      run_weak_error(st);
      break;
    case ExperimentKind::density:
    case ExperimentKind::decomposition:
      run_density(st);
      break;
    case ExperimentKind::mollifier:
      run_mollifier(st);
      break;
    case ExperimentKind::parametrix:
      run_parametrix(st);
      break;
    }
  } catch (const ConfigError& e) {
    result.exit_code = 2;
    result.messages = st.messages;
    result.messages.push_back(e.what());
    return result;
  }

  std::error_code ec;
  std::filesystem::create_directories(result.output_dir, ec);
  if (ec) {
    result.exit_code = 2;
    result.messages.push_back("cannot create output directory " + result.output_dir.string() + ": " + ec.message());
    return result;
  }
  st.add_file("config.toml", to_toml(config));
  for (const auto& [name, content] : st.files) {
    std::ofstream out(result.output_dir / name, std::ios::binary);
    out << content;
    if (!out) {
      result.exit_code = 2;
      result.messages.push_back("cannot write " + (result.output_dir / name).string());
      return result;
    }
    st.manifest.outputs.push_back(name);
  }
  st.manifest.outputs.push_back("manifest.json");
  st.manifest.finished = iso_now();
  {
    std::ofstream out(result.output_dir / "manifest.json", std::ios::binary);
    out << manifest_json(st.manifest);
  }
  result.manifest = st.manifest;
  result.messages = st.messages;
  result.exit_code = st.fault ? 3 : (st.miss ? 1 : 0);
  return result;
}

RunResult run_experiment(const std::filesystem::path& config_path, const RunOptions& options)
{
  try {
    return run_experiment(load_config(config_path), options);
  } catch (const ConfigError& e) {
    RunResult r;
    r.exit_code = 2;
    r.messages.push_back(e.what());
    return r;
  }
}

} // namespace ewel
