#include "nillab/io.hpp"

#include <json.hpp>

#include <array>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "nillab/hash.hpp"

namespace nillab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string rat_str(const Rat& r) {
  std::ostringstream ss;
  ss << r;
  return ss.str();
}

Rat parse_rat(const json& v, const std::string& where) {
  if (v.is_number_integer()) return Rat(v.get<long long>());
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    const auto slash = s.find('/');
    try {
      if (slash == std::string::npos) return Rat(s);
      return Rat(s.substr(0, slash)) / Rat(s.substr(slash + 1));
    } catch (const std::exception&) {
      throw ValidationError(where + ": bad rational '" + s + "'");
    }
  }
  throw ValidationError(where + ": expected integer or 'num/den' string");
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string hex16(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

}  // namespace

// --- algebra spec text -------------------------------------------------------

std::shared_ptr<const LieAlgebra> load_algebra_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path + ": cannot open");
  int dim = -1, declared_step = -1;
  // key (i,j,s) with i < j after antisymmetry folding
  std::map<std::array<int, 3>, Rat> entries;
  std::string line;
  int ln = 0;
  auto fail = [&](const std::string& msg) {
    return ValidationError(path + ":" + std::to_string(ln) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++ln;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.erase(hash_pos);
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key)) continue;
    if (key == "dim") {
      if (!(ss >> dim) || dim < 1) throw fail("bad dim");
    } else if (key == "step") {
      if (!(ss >> declared_step) || declared_step < 1) throw fail("bad step");
    } else if (key == "c") {
      if (dim < 0) throw fail("c entry before dim");
      int i, j, s;
      long long num, den;
      if (!(ss >> i >> j >> s >> num >> den) || den == 0)
        throw fail("expected 'c i j s num den'");
      if (i < 1 || j < 1 || s < 1 || i > dim || j > dim || s > dim)
        throw fail("index out of range");
      if (i == j) throw fail("antisymmetry violated: c[i][i][s] must vanish");
      Rat c = Rat(num) / Rat(den);
      if (i > j) {
        std::swap(i, j);
        c = -c;
      }
      const std::array<int, 3> k{i, j, s};
      const auto it = entries.find(k);
      if (it != entries.end()) {
        if (it->second != c) throw fail("antisymmetry violated for c[" + std::to_string(i) +
                                        "][" + std::to_string(j) + "][" + std::to_string(s) + "]");
        throw fail("duplicate entry");
      }
      entries.emplace(k, c);
    } else {
      throw fail("unknown directive '" + key + "'");
    }
  }
  if (dim < 0) throw ValidationError(path + ": missing dim");
  std::vector<StructureEntry> list;
  list.reserve(entries.size());
  for (const auto& [k, c] : entries) list.push_back({k[0] - 1, k[1] - 1, k[2] - 1, c});
  try {
    return std::make_shared<const LieAlgebra>(dim, list, declared_step);
  } catch (const std::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

AlgebraCheck check_algebra_spec(const std::string& path) {
  const auto alg = load_algebra_spec(path);
  AlgebraCheck out;
  out.dim = alg->dim();
  out.step = alg->step();
  for (int j = 0; j < alg->series_len(); ++j) out.series_dims.push_back(alg->series_dim(j));
  std::ostringstream ss;
  ss << "dim " << out.dim << "\n"
     << "step " << out.step << "\n"
     << "series dims";
  for (int d : out.series_dims) ss << " " << d;
  ss << "\n"
     << "antisymmetry ok\n"
     << "jacobi ok\n"
     << "malcev basis adapted ok\n";
  out.report = ss.str();
  return out;
}

// --- manifest plumbing -------------------------------------------------------

std::uint64_t manifest_hash(const std::string& file_bytes, std::uint64_t seed,
                            int samples, const std::string& out_dir) {
  std::uint64_t h = fnv1a(file_bytes);
  h = fnv1a("|seed=" + std::to_string(seed) + "|samples=" + std::to_string(samples) +
                "|out=" + out_dir,
            h);
  return h;
}

namespace {

Cplx parse_cplx(const json& v, const std::string& where) {
  if (v.is_number()) return Cplx(v.get<double>(), 0.0);
  if (v.is_array() && v.size() == 2) return Cplx(v[0].get<double>(), v[1].get<double>());
  throw ValidationError(where + ": expected number or [re, im]");
}

std::vector<long> parse_longs(const json& v, const std::string& where) {
  if (!v.is_array()) throw ValidationError(where + ": expected integer array");
  std::vector<long> out;
  for (const auto& e : v) out.push_back(e.get<long>());
  return out;
}

std::vector<double> parse_doubles(const json& v, const std::string& where) {
  if (!v.is_array()) throw ValidationError(where + ": expected number array");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(e.get<double>());
  return out;
}

HarmonicSpec parse_harmonic(const json& v, const std::string& where) {
  HarmonicSpec h;
  if (!v.is_object()) throw ValidationError(where + ": expected an object");
  if (v.contains("constant")) h.constant = parse_cplx(v["constant"], where + ".constant");
  for (const auto& m : v.value("toral", json::array()))
    h.toral.push_back(
        {parse_longs(m.at("m"), where + ".toral.m"), parse_cplx(m.at("c"), where + ".toral.c")});
  for (const auto& f : v.value("fiber", json::array())) {
    FiberModeSpec fm;
    fm.v = parse_longs(f.at("v"), where + ".fiber.v");
    fm.coeff = parse_cplx(f.at("coeff"), where + ".fiber.coeff");
    fm.width = f.value("width", 0.5);
    fm.truncation = f.value("truncation", 4);
    h.fiber.push_back(std::move(fm));
  }
  return h;
}

RatMat parse_rat_matrix(const json& v, const std::string& where) {
  RatMat out;
  if (!v.is_array()) throw ValidationError(where + ": expected a matrix");
  for (const auto& row : v) {
    RatVec r;
    for (const auto& e : row) r.push_back(parse_rat(e, where));
    out.push_back(std::move(r));
  }
  return out;
}

struct LoadedManifest {
  json doc;
  fs::path dir;
  std::string name;
  std::string out_dir;
  std::uint64_t seed = 1;
  int samples = 10000;
  std::uint64_t hash = 0;
  std::map<std::string, std::shared_ptr<const LieAlgebra>> algebras;
  std::map<std::string, FlowSpec> flows;
};

LoadedManifest load_manifest(const std::string& path, const ManifestOverrides& ov,
                             bool want_flows) {
  LoadedManifest m;
  const std::string bytes = read_file(path);
  try {
    m.doc = json::parse(bytes);
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  m.dir = fs::path(path).parent_path();
  m.name = m.doc.value("name", fs::path(path).stem().string());
  m.seed = ov.seed ? *ov.seed : m.doc.value("seed", std::uint64_t(1));
  m.samples = ov.samples ? *ov.samples : m.doc.value("samples", 10000);
  if (m.samples < 1) throw ValidationError(path + ": samples must be positive");
  m.out_dir = ov.out_dir ? *ov.out_dir : m.doc.value("out", std::string("."));
  m.hash = manifest_hash(bytes, m.seed, m.samples, m.out_dir);

  const json algebras = m.doc.value("algebras", json::object());
  for (const auto& [key, val] : algebras.items()) {
    const fs::path p = fs::path(val.get<std::string>());
    m.algebras[key] = load_algebra_spec((p.is_absolute() ? p : m.dir / p).string());
  }
  if (!want_flows) return m;
  const json flows = m.doc.value("flows", json::object());
  for (const auto& [key, val] : flows.items()) {
    const std::string where = "flow '" + key + "'";
    FlowSpec fl;
    const std::string aname = val.value("algebra", std::string());
    const auto it = m.algebras.find(aname);
    if (it == m.algebras.end())
      throw ValidationError(where + ": unknown algebra '" + aname + "'");
    fl.algebra = it->second;
    fl.lattice = std::make_shared<const Lattice>(*fl.algebra);
    const auto xv = parse_doubles(val.at("X"), where + ".X");
    if (static_cast<int>(xv.size()) != fl.algebra->dim())
      throw ValidationError(where + ".X: wrong dimension");
    fl.X = AlgebraVector::floating(xv);
    if (val.contains("z")) {
      try {
        fl.z = std::make_shared<const CentralSubspace>(
            *fl.algebra, parse_rat_matrix(val["z"], where + ".z"));
      } catch (const ValidationError&) {
        throw;
      } catch (const std::exception& e) {
        throw ValidationError(where + ".z: " + std::string(e.what()));
      }
    }
    if (val.contains("alpha")) fl.alpha = parse_harmonic(val["alpha"], where + ".alpha");
    if (std::abs(fl.alpha.constant) == 0.0 && fl.alpha.toral.empty() && fl.alpha.fiber.empty())
      fl.alpha.constant = 1.0;
    if (!fl.alpha.fiber_free() && !fl.z)
      throw ValidationError(where + ": fiber modes in alpha require z");
    if (val.contains("triple_seed")) {
      try {
        fl.triple =
            find_heisenberg_triple(*fl.algebra, fl.X, val["triple_seed"].get<std::uint64_t>());
      } catch (const std::exception& e) {
        throw ValidationError(where + ": " + std::string(e.what()));
      }
    }
    // surfaces positivity / real-valuedness / irrationality problems now
    try {
      to_flow_config(fl);
    } catch (const std::exception& e) {
      throw ValidationError(where + ": " + std::string(e.what()));
    }
    m.flows.emplace(key, std::move(fl));
  }
  return m;
}

// column-oriented CSV body; the manifest hash rides in a leading comment
void write_csv(const fs::path& path, std::uint64_t hash,
               const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(path.string() + ": cannot write");
  out << "# manifest " << hex16(hash) << "\n";
  for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << fmt(row[i]);
    out << "\n";
  }
}

void write_meta(const fs::path& path, std::uint64_t hash, const std::string& manifest_name,
                const std::string& job_name, const std::string& estimator,
                std::uint64_t seed, int samples, const json& params, const json& extra) {
  json meta;
  meta["manifest"] = hex16(hash);
  meta["run"] = manifest_name;
  meta["name"] = job_name;
  meta["estimator"] = estimator;
  meta["seed"] = seed;
  meta["samples"] = samples;
  meta["params"] = params;
  if (!extra.is_null()) meta["results"] = extra;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(path.string() + ": cannot write");
  out << meta.dump(2) << "\n";
}

const FlowSpec& job_flow(const LoadedManifest& m, const json& job, const char* field = "flow") {
  const std::string key = job.value(field, std::string());
  const auto it = m.flows.find(key);
  if (it == m.flows.end())
    throw ValidationError("job '" + job.value("name", std::string()) + "': unknown " +
                          field + " '" + key + "'");
  return it->second;
}

// f = V g / (2 pi <m, omega>) for the toral character g at mode m: a
// mean-zero coboundary of the time-changed generator, bounded by 1/alpha
Observable coboundary_observable(const FlowSpec& fl, const std::vector<long>& mode) {
  if (static_cast<int>(mode.size()) != fl.algebra->abelian_dim())
    throw ValidationError("coboundary mode: wrong toral dimension");
  double momega = 0.0;
  for (size_t i = 0; i < mode.size(); ++i)
    momega += static_cast<double>(mode[i]) * fl.X.f()[i];
  if (std::abs(momega) < 1e-12)
    throw ValidationError("coboundary mode: resonant with the frequency vector");
  const Observable gch = torus_character(fl.algebra, mode);
  const Observable aobs = to_flow_config(fl).alpha_obs;
  auto fval = [gch, aobs](const auto& x) {
    using S = typename std::decay_t<decltype(x)>::value_type;
    const auto gv = obs_eval(gch, x);
    const auto av = obs_eval(aobs, x);
    const S c = S(1.0) / av[0];
    return std::array<S, 2>{-c * gv[1], c * gv[0]};
  };
  return make_observable(fl.algebra, fval, "coboundary");
}

Observable job_observable(const FlowSpec& fl, const json& job, const char* field) {
  if (job.contains(std::string(field) + "_coboundary"))
    return coboundary_observable(
        fl, parse_longs(job[std::string(field) + "_coboundary"], "coboundary mode"));
  const HarmonicSpec h = parse_harmonic(job.at(field), std::string("job field ") + field);
  if (!h.fiber_free() && !fl.z)
    throw ValidationError(std::string(field) + ": fiber modes require a flow with z");
  return harmonic_obs(fl.algebra, fl.z.get(), h);
}

const AlgebraVector& frame_field(const FlowSpec& fl, const json& job) {
  if (!fl.triple) throw ValidationError("job requires a flow with triple_seed");
  const std::string w = job.value("W", "Z");
  if (w == "Y") return fl.triple->Y;
  if (w == "Z") return fl.triple->Z;
  throw ValidationError("W must be 'Y' or 'Z'");
}

struct JobResult {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  json extra;
};

JobResult execute_job(const LoadedManifest& m, const json& job, const EstimatorConfig& est) {
  const std::string kind = job.at("estimator").get<std::string>();
  JobResult out;
  if (kind == "correlate") {
    const FlowSpec& fl = job_flow(m, job);
    const Observable f = job_observable(fl, job, "f");
    Observable g = job.contains("g") || job.contains("g_coboundary")
                       ? job_observable(fl, job, "g")
                       : f;
    if (job.contains("g_shift")) {
      // g = f o phi^X_shift: the orbit-shifted partner
      const double shift = job["g_shift"].get<double>();
      auto lat = fl.lattice;
      auto X = fl.X;
      const Observable base = g;
      g.val = [base, lat, X, shift](const std::vector<double>& x) {
        NilPoint p;
        p.x = x;
        return base.val(nilflow_step(*lat, p, X, shift).x);
      };
      g.vald = [](const std::vector<Dual>&) -> CDual { return {}; };
    }
    const auto r = correlation_curve(f, g, fl, est);
    out.header = {"t", "defect", "stderr"};
    for (size_t i = 0; i < r.t.size(); ++i)
      out.rows.push_back({r.t[i], r.estimate[i], r.std_error[i]});
  } else if (kind == "shear") {
    const FlowSpec& fl = job_flow(m, job);
    const Observable f = job_observable(fl, job, "f");
    const auto r = shear_integral_distribution(f, frame_field(fl, job), fl,
                                               job.value("s", 1.0), job.at("t").get<double>(),
                                               est);
    out.header = {"eta", "measure", "stderr"};
    for (size_t i = 0; i < r.t.size(); ++i)
      out.rows.push_back({r.t[i], r.estimate[i], r.std_error[i]});
  } else if (kind == "sublevel") {
    const FlowSpec& fl = job_flow(m, job);
    const auto r = sublevel_birkhoff(parse_harmonic(job.at("f"), "f"), fl,
                                     job.at("C").get<double>(),
                                     parse_doubles(job.at("T_grid"), "T_grid"), est);
    out.header = {"T", "measure", "stderr"};
    for (size_t i = 0; i < r.t.size(); ++i)
      out.rows.push_back({r.t[i], r.estimate[i], r.std_error[i]});
  } else if (kind == "cesaro") {
    const FlowSpec& fl = job_flow(m, job);
    const HarmonicSpec f = parse_harmonic(job.at("f"), "f");
    const double C = job.at("C").get<double>();
    out.header = {"T", "average"};
    for (double T : parse_doubles(job.at("T_grid"), "T_grid"))
      out.rows.push_back({T, cesaro_sublevel(f, fl, C, T, est)});
  } else if (kind == "progression") {
    const FlowSpec& fl = job_flow(m, job);
    const auto r = find_progression(parse_harmonic(job.at("f"), "f"), fl,
                                    job.at("C").get<double>(), job.at("epsilon").get<double>(),
                                    job.at("ell").get<int>(), est);
    out.header = {"i", "t", "measure", "stderr"};
    for (size_t i = 0; i < r.measures.size(); ++i)
      out.rows.push_back({static_cast<double>(i + 1), r.t0 * (i + 1), r.measures[i],
                          r.std_errors[i]});
    out.extra = {{"found", r.found}, {"t0", r.t0}};
  } else if (kind == "decouple") {
    const FlowSpec& fl = job_flow(m, job);
    const auto r = decoupling_measure(parse_harmonic(job.at("f"), "f"), fl,
                                      job.at("C").get<double>(), job.at("t").get<double>(),
                                      parse_doubles(job.at("T_grid"), "T_grid"), est);
    out.header = {"T", "measure", "stderr"};
    for (size_t i = 0; i < r.t.size(); ++i)
      out.rows.push_back({r.t[i], r.estimate[i], r.std_error[i]});
  } else if (kind == "trigsub") {
    const FlowSpec& fl = job_flow(m, job);
    const auto r = trig_sublevel_exponent(fl, parse_harmonic(job.at("p"), "p"), est);
    out.header = {"delta", "measure", "stderr"};
    for (size_t i = 0; i < r.curve.t.size(); ++i)
      out.rows.push_back({r.curve.t[i], r.curve.estimate[i], r.curve.std_error[i]});
    out.extra = {{"degenerate", r.degenerate},
                 {"Delta", r.Delta},
                 {"d", r.d},
                 {"envelope_ok", r.envelope_ok}};
  } else if (kind == "quasi") {
    const FlowSpec& fl = job_flow(m, job);
    if (!fl.triple) throw ValidationError("quasi: flow needs triple_seed");
    const auto r = quasi_invariance_ratio(fl, job.at("t").get<double>(),
                                          parse_doubles(job.at("s_grid"), "s_grid"), est);
    out.header = {"worst_ratio", "valid_samples"};
    out.rows.push_back({r.worst, static_cast<double>(r.valid)});
    out.extra = {{"degenerate", r.degenerate}};
  } else if (kind == "compare") {
    const FlowSpec& fl = job_flow(m, job);
    if (!fl.triple) throw ValidationError("compare: flow needs triple_seed");
    const auto r = comparison_and_distortion(fl, job.at("t").get<double>(), est);
    out.header = {"delta", "measure", "stderr"};
    for (size_t i = 0; i < r.measure.t.size(); ++i)
      out.rows.push_back({r.measure.t[i], r.measure.estimate[i], r.measure.std_error[i]});
    out.extra = {{"degenerate", r.degenerate}, {"worst_distortion", r.worst_distortion}};
  } else if (kind == "conjugacy") {
    const FlowSpec& f1 = job_flow(m, job);
    const FlowSpec& f2 = job_flow(m, job, "flow2");
    HarmonicSpec uspec = parse_harmonic(job.at("u"), "u");
    if (!uspec.fiber.empty()) throw ValidationError("conjugacy: u must be toral");
    std::vector<TorusMode> modes = uspec.toral;
    if (job.value("transfer", false)) {
      std::vector<double> omega(f1.X.f().begin(),
                                f1.X.f().begin() + f1.algebra->abelian_dim());
      modes = torus_transfer(modes, omega);
    }
    const Observable u = uspec.toral.empty() && std::abs(uspec.constant) == 0.0
                             ? constant_obs(f1.algebra, Cplx(0.0, 0.0))
                             : (uspec.constant + torus_poly_obs(f1.algebra, modes));
    out.header = {"defect"};
    out.rows.push_back({conjugacy_check(f1, f2, u, est)});
  } else if (kind == "factorlift") {
    const FlowSpec& total = job_flow(m, job);
    const FlowSpec& base = job_flow(m, job, "base");
    const RatMat proj = parse_rat_matrix(job.at("projection"), "projection");
    const Observable fb = job_observable(base, job, "f");
    const Observable gb = job_observable(base, job, "g");
    const auto r = factor_lift_check(total, base, proj, fb, gb, est);
    out.header = {"t", "discrepancy", "stderr"};
    for (size_t i = 0; i < r.t.size(); ++i)
      out.rows.push_back({r.t[i], r.estimate[i], r.std_error[i]});
  } else if (kind == "orbit") {
    const FlowSpec& fl = job_flow(m, job);
    const FlowConfig cfg = to_flow_config(fl);
    const double tmax = job.value("t_max", 10.0);
    const double dt = job.value("step", 0.1);
    if (dt <= 0.0) throw ValidationError("orbit: step must be positive");
    NilPoint p;
    if (job.contains("start"))
      p = reduce_second_kind(*fl.lattice, parse_doubles(job["start"], "start"));
    else
      p = haar_sample(*fl.lattice, 1, est.seed)[0];
    OrbitAnalytics oa(fl, cfg, p);
    out.header = {"t"};
    for (int i = 0; i < fl.algebra->dim(); ++i) out.header.push_back("x" + std::to_string(i + 1));
    out.header.push_back("tau");
    const int n = static_cast<int>(std::llround(tmax / dt));
    for (int i = 0; i <= n; ++i) {
      const double t = i * dt;
      const NilPoint q = oa.flow_point(t);
      std::vector<double> row{t};
      row.insert(row.end(), q.x.begin(), q.x.end());
      row.push_back(oa.tilde_tau(t));
      out.rows.push_back(std::move(row));
    }
  } else if (kind == "birkhoff") {
    const FlowSpec& fl = job_flow(m, job);
    const FlowConfig cfg = to_flow_config(fl);
    const HarmonicSpec f = parse_harmonic(job.at("f"), "f");
    const Observable fobs = harmonic_obs(fl.algebra, fl.z.get(), f);
    const auto grid = parse_doubles(job.at("T_grid"), "T_grid");
    const auto pts = haar_sample(*fl.lattice, est.samples, est.seed);
    std::vector<Cplx> sum(grid.size(), Cplx(0.0, 0.0));
    std::vector<double> sabs(grid.size(), 0.0), sabs2(grid.size(), 0.0);
    for (const auto& p : pts) {
      OrbitAnalytics oa(fl, cfg, p);
      const int h = oa.register_birkhoff(f, fobs);
      for (size_t i = 0; i < grid.size(); ++i) {
        const Cplx v = oa.birkhoff(h, grid[i]);
        sum[i] += v;
        sabs[i] += std::abs(v);
        sabs2[i] += std::norm(v);
      }
    }
    const double n = static_cast<double>(pts.size());
    out.header = {"T", "mean_re", "mean_im", "mean_abs", "stderr_abs"};
    for (size_t i = 0; i < grid.size(); ++i) {
      const double ma = sabs[i] / n;
      const double var = std::max(0.0, sabs2[i] / n - ma * ma);
      out.rows.push_back({grid[i], sum[i].real() / n, sum[i].imag() / n, ma,
                          std::sqrt(var / n)});
    }
  } else {
    throw ValidationError("unknown estimator '" + kind + "'");
  }
  return out;
}

// the consistency checks that must reject a manifest before any computation
void validate_job(const LoadedManifest& m, const json& job) {
  if (!job.contains("name") || !job["name"].is_string())
    throw ValidationError("every job needs a string name");
  if (!job.contains("estimator"))
    throw ValidationError("job '" + job["name"].get<std::string>() + "': missing estimator");
  const std::string kind = job["estimator"].get<std::string>();
  static const char* known[] = {"correlate", "shear",   "sublevel", "cesaro",  "progression",
                                "decouple",  "trigsub", "quasi",    "compare", "conjugacy",
                                "factorlift", "orbit",  "birkhoff"};
  bool ok = false;
  for (const char* k : known) ok = ok || kind == k;
  if (!ok) throw ValidationError("job '" + job["name"].get<std::string>() +
                                 "': unknown estimator '" + kind + "'");
  const FlowSpec& fl = job_flow(m, job);
  const bool needs_invariant =
      kind == "sublevel" || kind == "cesaro" || kind == "progression" || kind == "decouple" ||
      kind == "factorlift";
  if (needs_invariant && !fl.alpha.fiber_free())
    throw ValidationError("job '" + job["name"].get<std::string>() + "' (" + kind +
                          "): time change must be fiber invariant");
  if ((kind == "quasi" || kind == "compare" || kind == "shear") && !fl.triple)
    throw ValidationError("job '" + job["name"].get<std::string>() + "' (" + kind +
                          "): flow needs triple_seed");
  if (kind == "conjugacy") job_flow(m, job, "flow2");
  if (kind == "factorlift") {
    const FlowSpec& base = job_flow(m, job, "base");
    if (!base.alpha.fiber_free())
      throw ValidationError("factorlift: base time change must be fiber invariant");
  }
}

}  // namespace

RunOutputs run_manifest_file(const std::string& path, const ManifestOverrides& ov) {
  const LoadedManifest m = load_manifest(path, ov, true);
  if (!m.doc.contains("jobs") || !m.doc["jobs"].is_array() || m.doc["jobs"].empty())
    throw ValidationError(path + ": manifest has no jobs");
  for (const auto& job : m.doc["jobs"]) validate_job(m, job);

  fs::create_directories(m.out_dir);
  RunOutputs out;
  out.manifest_hash = m.hash;
  for (const auto& job : m.doc["jobs"]) {
    EstimatorConfig est;
    est.samples = ov.samples ? *ov.samples : job.value("samples", m.samples);
    est.seed = ov.seed ? *ov.seed : job.value("seed", m.seed);
    if (job.contains("t_grid")) est.t_grid = parse_doubles(job["t_grid"], "t_grid");
    if (job.contains("eta_grid")) est.eta_grid = parse_doubles(job["eta_grid"], "eta_grid");
    if (job.contains("delta_grid"))
      est.delta_grid = parse_doubles(job["delta_grid"], "delta_grid");
    JobResult r;
    try {
      r = execute_job(m, job, est);
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception& e) {
      throw NumericalError("job '" + job["name"].get<std::string>() + "': " + e.what());
    }
    const std::string name = job["name"].get<std::string>();
    const fs::path csv = fs::path(m.out_dir) / (name + ".csv");
    const fs::path meta = fs::path(m.out_dir) / (name + ".meta.json");
    write_csv(csv, m.hash, r.header, r.rows);
    write_meta(meta, m.hash, m.name, name, job["estimator"].get<std::string>(), est.seed,
               est.samples, job, r.extra);
    out.files.push_back(csv.string());
    out.files.push_back(meta.string());
  }
  return out;
}

// --- tower dump --------------------------------------------------------------

namespace {

json algebra_to_json(const LieAlgebra& alg) {
  json a;
  a["dim"] = alg.dim();
  a["step"] = alg.step();
  json entries = json::array();
  for (int i = 0; i < alg.dim(); ++i)
    for (int j = i + 1; j < alg.dim(); ++j)
      for (int s = 0; s < alg.dim(); ++s)
        if (alg.c(i, j, s) != Rat(0))
          entries.push_back(
              {{"i", i + 1}, {"j", j + 1}, {"s", s + 1}, {"c", rat_str(alg.c(i, j, s))}});
  a["structure"] = entries;
  return a;
}

json vec17(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(fmt(x));
  return out;
}

json rat_matrix_json(const RatMat& mtx) {
  json out = json::array();
  for (const auto& row : mtx) {
    json r = json::array();
    for (const auto& e : row) r.push_back(rat_str(e));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

RunOutputs tower_build_file(const std::string& path, const ManifestOverrides& ov) {
  const LoadedManifest m = load_manifest(path, ov, false);
  const std::string aname = m.doc.value("algebra", std::string());
  fs::path apath(aname);
  if (aname.empty()) throw ValidationError(path + ": missing algebra path");
  const auto alg = load_algebra_spec((apath.is_absolute() ? apath : m.dir / apath).string());
  const auto xv = parse_doubles(m.doc.at("X"), "X");
  if (static_cast<int>(xv.size()) != alg->dim())
    throw ValidationError(path + ": X has the wrong dimension");
  HeisenbergTower tower;
  try {
    tower = build_maximal_tower(*alg, AlgebraVector::floating(xv), m.seed);
  } catch (const std::exception& e) {
    throw ConstructionError(path + ": " + e.what());
  }

  json doc;
  doc["manifest"] = hex16(m.hash);
  doc["height"] = tower.height();
  json levels = json::array();
  for (const auto& lv : tower.levels) {
    json l;
    l["algebra"] = algebra_to_json(*lv.algebra);
    l["triple"] = {{"X", vec17(lv.triple.X.f())},
                   {"Y", vec17(lv.triple.Y.f())},
                   {"Z", vec17(lv.triple.Z.f())}};
    json env = json::array();
    for (const auto& row : lv.envelope.lattice_basis()) {
      json r = json::array();
      for (const auto& e : row) {
        std::ostringstream ss;
        ss << e;
        r.push_back(ss.str());
      }
      env.push_back(std::move(r));
    }
    l["envelope"] = env;
    l["projection"] = rat_matrix_json(lv.projection);
    levels.push_back(std::move(l));
  }
  doc["levels"] = levels;
  doc["base"] = {{"dim", tower.base->dim()}, {"X", vec17(tower.base_X.f())}};

  fs::create_directories(m.out_dir);
  const fs::path dump = fs::path(m.out_dir) / (m.name + ".tower.json");
  const fs::path meta = fs::path(m.out_dir) / (m.name + ".meta.json");
  {
    std::ofstream out(dump, std::ios::binary);
    if (!out) throw ValidationError(dump.string() + ": cannot write");
    out << doc.dump(2) << "\n";
  }
  write_meta(meta, m.hash, m.name, m.name, "tower", m.seed, 0,
             json{{"algebra", aname}, {"X", m.doc["X"]}},
             json{{"height", tower.height()}});
  RunOutputs out;
  out.manifest_hash = m.hash;
  out.files = {dump.string(), meta.string()};
  return out;
}

}  // namespace nillab
