#pragma once

// Scenario files: human-editable JSON with explicit SI unit suffixes on every
// physical key.  A scenario pins the initial packet, the apparatus parameters
// and optional profile / sweep / sampling settings, and hashes canonically so
// outputs can be traced back to their exact inputs.

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bwm/constants.hpp"
#include "bwm/errors.hpp"
#include "bwm/gaussian.hpp"
#include "bwm/protocol.hpp"

namespace bwm {

struct PacketTermSpec {
  double center_m = 0.0;
  double sigma0_m = 0.0;      // initial density std
  double momentum_kgms = 0.0;
  double amplitude = 1.0;     // relative weight
  double phase_rad = 0.0;
};

struct SweepAxis {
  std::string param;  // sigma_w_m | sigma_s_m | tau_s
  double min = 0.0;
  double max = 0.0;
  int count = 0;
  bool log_scale = true;  // axis ranges default to logarithmic
};

struct SampleOptions {
  long long n = 10000;
  std::uint64_t seed = 42;
  double bin_width_m = 5e-8;
  double target_eps_ms = 0.0;  // 0 -> no sample-count printout
};

struct Scenario {
  std::string name = "scenario";
  double mass_kg = phys::electron_mass_kg;
  double hbar_Js = phys::hbar_Js;
  double tau_s = 1e-12;
  double sigma_w_m = 150e-9;
  double sigma_s_m = 0.2e-9;
  // Either the preparation interval before the first measurement is given
  // directly, or the snapshot time of the second measurement is fixed and the
  // preparation interval follows as snapshot - tau.
  bool snapshot_mode = false;
  double prep_time_s = 10e-12;
  double snapshot_time_s = 0.0;
  std::vector<PacketTermSpec> terms;
  bool sigma0_calibrated = false;  // true when sigma0 came from calibration
  ProfileOptions profile;
  std::optional<std::array<SweepAxis, 2>> sweep;
  SampleOptions sample;

  double effective_prep_time() const {
    return snapshot_mode ? snapshot_time_s - tau_s : prep_time_s;
  }

  ProtocolParams params() const {
    ProtocolParams pp;
    pp.mass_kg = mass_kg;
    pp.hbar_Js = hbar_Js;
    pp.tau_s = tau_s;
    pp.sigma_w_m = sigma_w_m;
    pp.sigma_s_m = sigma_s_m;
    pp.t_w_s = effective_prep_time();
    return pp;
  }

  void validate() const {
    if (terms.empty()) throw validation_error("scenario: packet needs at least one term");
    for (const auto& t : terms) {
      if (!(t.sigma0_m > 0.0)) throw validation_error("scenario: sigma0_m must be > 0");
      if (!(t.amplitude > 0.0)) throw validation_error("scenario: amplitude must be > 0");
    }
    params().validate();
  }

  // Normalized packet at t = 0.
  WavePacket initial_packet() const {
    WavePacket p;
    for (const auto& t : terms)
      p.terms.push_back(make_gaussian(t.center_m, t.sigma0_m, t.momentum_kgms,
                                      hbar_Js, t.amplitude, t.phase_rad));
    return normalized(p);
  }

  // State at the first measurement time t_w.
  WavePacket packet_at_tw() const {
    WavePacket p = initial_packet();
    const double prep = effective_prep_time();
    if (prep > 0.0) p = free_evolve(p, prep, params());
    return p;
  }
};

// Width of the double-slit Gaussians such that the evolved support (density
// above `threshold` x peak) at `t_snapshot` spans `target_support`.  Bisection
// on the spreading branch where narrower slits spread wider.
inline double calibrate_double_slit_sigma0(double separation, double t_snapshot,
                                           double target_support,
                                           double threshold = 1e-4,
                                           double mass = phys::electron_mass_kg,
                                           double hbar = phys::hbar_Js) {
  ProtocolParams pp;
  pp.mass_kg = mass;
  pp.hbar_Js = hbar;
  auto support_at = [&](double sigma0) {
    WavePacket p;
    p.terms.push_back(make_gaussian(-0.5 * separation, sigma0, 0.0, hbar));
    p.terms.push_back(make_gaussian(+0.5 * separation, sigma0, 0.0, hbar));
    p = normalized(p);
    return support_interval(free_evolve(p, t_snapshot, pp), threshold).width();
  };
  double lo = 0.2e-9, hi = 50e-9;
  if (!(support_at(lo) > target_support) || !(support_at(hi) < target_support))
    throw validation_error("calibrate_double_slit_sigma0: target outside bracket");
  for (int it = 0; it < 80; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (support_at(mid) > target_support)
      lo = mid;
    else
      hi = mid;
  }
  return std::sqrt(lo * hi);
}

// Two equal-amplitude, in-phase Gaussians at +/- separation/2.  sigma0 == 0
// requests calibration against the default snapshot support (2 um at 11 ps).
inline Scenario build_double_slit(double separation = 100e-9,
                                  double sigma0 = 0.0, double momentum = 0.0) {
  if (!(separation > 0.0))
    throw validation_error("build_double_slit: separation must be > 0");
  Scenario sc;
  sc.name = "double_slit";
  sc.tau_s = 1e-12;
  sc.sigma_w_m = 150e-9;
  sc.sigma_s_m = 0.2e-9;
  sc.snapshot_mode = true;
  sc.snapshot_time_s = 11e-12;
  double s0 = sigma0;
  if (s0 <= 0.0) {
    s0 = calibrate_double_slit_sigma0(separation, sc.snapshot_time_s, 2e-6);
    sc.sigma0_calibrated = true;
  }
  sc.terms = {{-0.5 * separation, s0, momentum, 1.0, 0.0},
              {+0.5 * separation, s0, momentum, 1.0, 0.0}};
  return sc;
}

// ---- JSON I/O ----

namespace detail {

inline void require_keys(const nlohmann::json& j,
                         std::initializer_list<const char*> allowed,
                         const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok)
      throw validation_error(std::string("scenario: unknown key '") + it.key() +
                             "' in " + where);
  }
}

inline double need_number(const nlohmann::json& j, const char* key,
                          const char* where) {
  if (!j.contains(key) || !j[key].is_number())
    throw validation_error(std::string("scenario: missing numeric '") + key +
                           "' in " + where);
  return j[key].get<double>();
}

}  // namespace detail

inline Scenario parse_scenario(const nlohmann::json& j) {
  detail::require_keys(j,
                       {"name", "mass_kg", "hbar_Js", "tau_s", "sigma_w_m",
                        "sigma_s_m", "prep_time_s", "snapshot_time_s", "packet",
                        "double_slit", "profile", "sweep", "sample"},
                       "scenario");
  Scenario sc;
  if (j.contains("name")) sc.name = j["name"].get<std::string>();
  if (j.contains("mass_kg")) sc.mass_kg = j["mass_kg"].get<double>();
  if (j.contains("hbar_Js")) sc.hbar_Js = j["hbar_Js"].get<double>();
  sc.tau_s = detail::need_number(j, "tau_s", "scenario");
  sc.sigma_w_m = detail::need_number(j, "sigma_w_m", "scenario");
  sc.sigma_s_m = detail::need_number(j, "sigma_s_m", "scenario");

  const bool has_prep = j.contains("prep_time_s");
  const bool has_snap = j.contains("snapshot_time_s");
  if (has_prep == has_snap)
    throw validation_error(
        "scenario: give exactly one of prep_time_s / snapshot_time_s");
  if (has_snap) {
    sc.snapshot_mode = true;
    sc.snapshot_time_s = j["snapshot_time_s"].get<double>();
  } else {
    sc.prep_time_s = j["prep_time_s"].get<double>();
  }

  const bool has_packet = j.contains("packet");
  const bool has_slit = j.contains("double_slit");
  if (has_packet == has_slit)
    throw validation_error("scenario: give exactly one of packet / double_slit");
  if (has_packet) {
    if (!j["packet"].is_array() || j["packet"].empty())
      throw validation_error("scenario: packet must be a non-empty array");
    for (const auto& jt : j["packet"]) {
      detail::require_keys(
          jt, {"center_m", "sigma0_m", "momentum_kgms", "amplitude", "phase_rad"},
          "packet term");
      PacketTermSpec t;
      t.center_m = detail::need_number(jt, "center_m", "packet term");
      t.sigma0_m = detail::need_number(jt, "sigma0_m", "packet term");
      if (jt.contains("momentum_kgms")) t.momentum_kgms = jt["momentum_kgms"].get<double>();
      if (jt.contains("amplitude")) t.amplitude = jt["amplitude"].get<double>();
      if (jt.contains("phase_rad")) t.phase_rad = jt["phase_rad"].get<double>();
      sc.terms.push_back(t);
    }
  } else {
    const auto& js = j["double_slit"];
    detail::require_keys(js, {"separation_m", "sigma0_m", "momentum_kgms"},
                         "double_slit");
    const double sep = js.contains("separation_m")
                           ? js["separation_m"].get<double>()
                           : 100e-9;
    double s0 = js.contains("sigma0_m") ? js["sigma0_m"].get<double>() : 0.0;
    const double mom =
        js.contains("momentum_kgms") ? js["momentum_kgms"].get<double>() : 0.0;
    if (s0 <= 0.0) {
      const double t_ref = sc.snapshot_mode ? sc.snapshot_time_s
                                            : sc.prep_time_s + sc.tau_s;
      s0 = calibrate_double_slit_sigma0(sep, t_ref, 2e-6, 1e-4, sc.mass_kg,
                                        sc.hbar_Js);
      sc.sigma0_calibrated = true;
    }
    sc.terms = {{-0.5 * sep, s0, mom, 1.0, 0.0}, {+0.5 * sep, s0, mom, 1.0, 0.0}};
  }

  if (j.contains("profile")) {
    const auto& jp = j["profile"];
    detail::require_keys(jp, {"n_points", "density_cut"}, "profile");
    if (jp.contains("n_points")) sc.profile.n_points = jp["n_points"].get<int>();
    if (jp.contains("density_cut"))
      sc.profile.density_cut = jp["density_cut"].get<double>();
  }
  if (j.contains("sweep")) {
    const auto& jw = j["sweep"];
    detail::require_keys(jw, {"axis1", "axis2"}, "sweep");
    auto parse_axis = [](const nlohmann::json& ja, const char* where) {
      detail::require_keys(ja, {"param", "min", "max", "count", "scale"}, where);
      SweepAxis ax;
      ax.param = ja.at("param").get<std::string>();
      if (ax.param != "sigma_w_m" && ax.param != "sigma_s_m" && ax.param != "tau_s")
        throw validation_error("scenario: sweep param must be sigma_w_m, sigma_s_m or tau_s");
      ax.min = detail::need_number(ja, "min", where);
      ax.max = detail::need_number(ja, "max", where);
      ax.count = ja.at("count").get<int>();
      if (ax.count < 2) throw validation_error("scenario: sweep count must be >= 2");
      if (ja.contains("scale")) {
        const std::string s = ja["scale"].get<std::string>();
        if (s == "log")
          ax.log_scale = true;
        else if (s == "linear")
          ax.log_scale = false;
        else
          throw validation_error("scenario: sweep scale must be 'log' or 'linear'");
      }
      if (!(ax.min > 0.0) || !(ax.max > ax.min))
        throw validation_error("scenario: sweep range must satisfy 0 < min < max");
      return ax;
    };
    sc.sweep = {{parse_axis(jw.at("axis1"), "sweep axis1"),
                 parse_axis(jw.at("axis2"), "sweep axis2")}};
  }
  if (j.contains("sample")) {
    const auto& js = j["sample"];
    detail::require_keys(js, {"n", "seed", "bin_width_m", "target_eps_ms"},
                         "sample");
    if (js.contains("n")) sc.sample.n = js["n"].get<long long>();
    if (js.contains("seed")) sc.sample.seed = js["seed"].get<std::uint64_t>();
    if (js.contains("bin_width_m"))
      sc.sample.bin_width_m = js["bin_width_m"].get<double>();
    if (js.contains("target_eps_ms"))
      sc.sample.target_eps_ms = js["target_eps_ms"].get<double>();
  }
  sc.validate();
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("scenario: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw validation_error(std::string("scenario: JSON parse error: ") + e.what());
  }
  return parse_scenario(j);
}

// Fully resolved scenario (calibrated widths included) as canonical JSON.
// nlohmann::json orders keys, so the dump is deterministic.
inline nlohmann::json scenario_to_json(const Scenario& sc) {
  nlohmann::json j;
  j["name"] = sc.name;
  j["mass_kg"] = sc.mass_kg;
  j["hbar_Js"] = sc.hbar_Js;
  j["tau_s"] = sc.tau_s;
  j["sigma_w_m"] = sc.sigma_w_m;
  j["sigma_s_m"] = sc.sigma_s_m;
  if (sc.snapshot_mode)
    j["snapshot_time_s"] = sc.snapshot_time_s;
  else
    j["prep_time_s"] = sc.prep_time_s;
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : sc.terms)
    terms.push_back({{"center_m", t.center_m},
                     {"sigma0_m", t.sigma0_m},
                     {"momentum_kgms", t.momentum_kgms},
                     {"amplitude", t.amplitude},
                     {"phase_rad", t.phase_rad}});
  j["packet"] = terms;
  j["profile"] = {{"n_points", sc.profile.n_points},
                  {"density_cut", sc.profile.density_cut}};
  if (sc.sweep) {
    auto axis = [](const SweepAxis& ax) {
      return nlohmann::json{{"param", ax.param},
                            {"min", ax.min},
                            {"max", ax.max},
                            {"count", ax.count},
                            {"scale", ax.log_scale ? "log" : "linear"}};
    };
    j["sweep"] = {{"axis1", axis((*sc.sweep)[0])}, {"axis2", axis((*sc.sweep)[1])}};
  }
  j["sample"] = {{"n", sc.sample.n},
                 {"seed", sc.sample.seed},
                 {"bin_width_m", sc.sample.bin_width_m},
                 {"target_eps_ms", sc.sample.target_eps_ms}};
  return j;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string manifest_hash(const Scenario& sc) {
  std::ostringstream os;
  os << std::hex << fnv1a64(scenario_to_json(sc).dump());
  return os.str();
}

}  // namespace bwm
