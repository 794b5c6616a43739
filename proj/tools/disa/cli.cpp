#include "disa/cli.hpp"

#include "disa/cnn.hpp"
#include "disa/config.hpp"
#include "disa/eval.hpp"
#include "disa/feature_io.hpp"
#include "disa/hash.hpp"
#include "disa/parallel.hpp"
#include "disa/registration.hpp"
#include "disa/sampling.hpp"
#include "disa/transform_io.hpp"
#include "disa/volume_io.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

namespace disa::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Rough wall-clock guard for global LC²: starts × per-start evaluations above this are refused.
constexpr std::size_t kLc2GlobalBudget = 2000;

json file_entry(const fs::path& path) { return {{"path", path.string()}, {"sha256", sha256_file(path)}}; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

// Network input is expected at zero mean and unit variance.
Volume ensure_normalized(const Volume& v) {
  double mean = 0.0, ss = 0.0;
  for (float x : v.data()) mean += x;
  mean /= static_cast<double>(v.size());
  for (float x : v.data()) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size()));
  if (std::abs(mean) < 1e-3 && std::abs(sd - 1.0) < 1e-3) return v;
  return normalize(v);
}

Vec3 parse_spacing(const std::string& text) {
  const std::vector<double> s = parse_numbers(text, "--spacing");
  if (s.size() == 1) return Vec3::Constant(s[0]);
  if (s.size() == 3) return Vec3(s[0], s[1], s[2]);
  throw UsageError("--spacing: expected one value or three comma-separated values");
}

std::vector<int> parse_ints(const std::string& text, std::string_view what) {
  std::vector<int> out;
  for (double v : parse_numbers(text, what)) {
    if (v != std::floor(v)) throw UsageError(std::string(what) + ": expected integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

// --- metrics shared by `register` and `evaluate` -------------------------------------------------

struct GroundTruth {
  std::string fixed_landmarks, moving_landmarks;
  std::string fixed_labels, moving_labels;
  std::string labels;  // comma-separated; empty = every positive label of the fixed volume

  bool any() const { return !fixed_landmarks.empty() || !fixed_labels.empty(); }
};

void add_ground_truth_options(CLI::App& cmd, GroundTruth& gt) {
  auto* fl = cmd.add_option("--fixed-landmarks", gt.fixed_landmarks, "CSV x,y,z landmarks in the fixed volume (mm)");
  auto* ml = cmd.add_option("--moving-landmarks", gt.moving_landmarks, "row-paired CSV landmarks in the moving volume");
  fl->needs(ml);
  ml->needs(fl);
  auto* fv = cmd.add_option("--fixed-labels", gt.fixed_labels, "label volume on the fixed grid");
  auto* mv = cmd.add_option("--moving-labels", gt.moving_labels, "label volume on the moving grid");
  fv->needs(mv);
  mv->needs(fv);
  cmd.add_option("--labels", gt.labels, "comma-separated labels for Dice/HD95 (default: all positive)");
}

Volume mask_of(const Volume& labels, int label) {
  Volume m(labels.geometry());
  for (std::size_t i = 0; i < labels.size(); ++i) m[i] = std::lround(labels[i]) == label ? 1.0f : 0.0f;
  return m;
}

json ground_truth_metrics(const GroundTruth& gt, const TransformChain& t, json& inputs) {
  json m = json::object();
  if (!gt.fixed_landmarks.empty()) {
    const LandmarkSet fixed = load_landmarks(gt.fixed_landmarks);
    const LandmarkSet moving = load_landmarks(gt.moving_landmarks);
    inputs["fixed_landmarks"] = file_entry(gt.fixed_landmarks);
    inputs["moving_landmarks"] = file_entry(gt.moving_landmarks);
    // T maps fixed space into moving space, so moving landmarks are the targets.
    const std::vector<double> errors = fiducial_errors(moving, fixed, t);
    const FreSummary s = fre_percentiles(errors);
    m["fre_mm"] = s.avg;
    m["fre_percentiles_mm"] = {{"p25", s.p25}, {"p50", s.p50}, {"p75", s.p75}};
    m["fiducial_errors_mm"] = errors;
  }
  if (!gt.fixed_labels.empty()) {
    const Volume fixed = load_volume(gt.fixed_labels);
    const Volume moving = load_volume(gt.moving_labels);
    inputs["fixed_labels"] = file_entry(gt.fixed_labels);
    inputs["moving_labels"] = file_entry(gt.moving_labels);
    std::vector<int> labels;
    if (!gt.labels.empty()) {
      labels = parse_ints(gt.labels, "--labels");
    } else {
      std::set<int> seen;
      for (float v : fixed.data())
        if (std::lround(v) > 0) seen.insert(static_cast<int>(std::lround(v)));
      labels.assign(seen.begin(), seen.end());
    }
    json per = json::object();
    for (int label : labels) {
      const Volume a = mask_of(fixed, label);
      // Each label mask is warped separately and thresholded at one half.
      const WarpedVolume w = warp_volume(mask_of(moving, label), t, fixed.geometry());
      Volume b(fixed.geometry());
      for (std::size_t i = 0; i < b.size(); ++i) b[i] = w.image[i] >= 0.5f ? 1.0f : 0.0f;
      json e;
      e["dice"] = dice(a, b, 1);
      const bool both = std::any_of(a.data().begin(), a.data().end(), [](float v) { return v > 0; }) &&
                        std::any_of(b.data().begin(), b.data().end(), [](float v) { return v > 0; });
      e["hd95_mm"] = both ? json(hd95(a, b, 1)) : json(nullptr);  // undefined for an empty mask
      per[std::to_string(label)] = e;
    }
    m["labels"] = per;
  }
  return m;
}

// --- commands ------------------------------------------------------------------------------------

struct ConvertArgs {
  std::string in, out, spacing;
  bool normalize = false;
};

int cmd_convert(const ConvertArgs& a, std::ostream& out) {
  Volume v = load_volume(a.in);
  if (!a.spacing.empty()) v = resample(v, parse_spacing(a.spacing));
  if (a.normalize) v = normalize(v);
  save_volume(v, a.out);
  const Index3& d = v.dims();
  fmt::print(out, "wrote {} ({}x{}x{})\n", a.out, d[0], d[1], d[2]);
  return kExitOk;
}

struct FeaturesArgs {
  std::string volume, weights, out;
  bool quantize = false;
};

int cmd_features(const FeaturesArgs& a, std::ostream& out) {
  const Network net = load_weights(a.weights);
  FeatureMap f = net.infer(ensure_normalized(load_volume(a.volume)));
  if (a.quantize) f = quantize(f);
  save_features(f, a.out);
  const Index3& d = f.dims();
  fmt::print(out, "wrote {} ({}x{}x{} cells, {} channels, stride {}, {})\n", a.out, d[0], d[1], d[2], f.channels(),
             f.stride(), f.quantized() ? "int8" : "float32");
  return kExitOk;
}

struct InitWeightsArgs {
  std::string out;
  std::uint64_t seed = 0;
  double gain = 1.0;
};

int cmd_init_weights(const InitWeightsArgs& a, std::ostream& out) {
  const Network net = Network::random(NetworkSpec::reference(), a.seed, static_cast<float>(a.gain));
  save_weights(net, a.out);
  fmt::print(out, "wrote {} ({} parameters, seed {})\n", a.out, net.parameter_count(), a.seed);
  return kExitOk;
}

struct RegisterArgs {
  std::string fixed, moving;
  std::string similarity = "disa", mode = "rigid", search = "local";
  double rot_range_deg = 10.0, trans_range_mm = 25.0;
  std::size_t n_starts = 500;
  std::uint64_t seed = 0;
  std::string out, report;
  std::string weights, fixed_features, moving_features, initial;
  bool quantize = false, allow_global_lc2 = false;
  std::string config_file;
  std::vector<std::string> set;
  GroundTruth gt;
};

const std::vector<std::string_view> kRegisterKeys = {
    "center",           "probe.center",     "probe.inner_radius", "probe.outer_radius",
    "bfgs.max_iters",   "bfgs.grad_tol",    "bfgs.step_tol",      "bfgs.max_evals",
    "dfo.max_evals",    "dfo.rho_begin",    "dfo.rho_end",        "global.per_start_evals",
    "samples.max",      "weights.radius",   "lc2.radii",          "lc2.sample_step",
    "lc2.source",
};

void apply_config(const Config& c, RegistrationOptions& o) {
  c.require_known(kRegisterKeys);
  if (auto v = c.vec3("center")) o.center = *v;
  if (c.has("probe.center") || c.has("probe.inner_radius") || c.has("probe.outer_radius")) {
    ProbeDeform p;
    const auto centre = c.vec3("probe.center");
    if (!centre) throw UsageError("probe geometry needs probe.center");
    p.center = *centre;
    if (auto v = c.number("probe.inner_radius")) p.inner_radius = *v;
    if (auto v = c.number("probe.outer_radius")) p.outer_radius = *v;
    p.validate();
    o.probe = p;
  }
  if (auto v = c.integer("bfgs.max_iters")) o.bfgs.max_iters = static_cast<int>(*v);
  if (auto v = c.number("bfgs.grad_tol")) o.bfgs.grad_tol = *v;
  if (auto v = c.number("bfgs.step_tol")) o.bfgs.step_tol = *v;
  if (auto v = c.integer("bfgs.max_evals")) o.bfgs.max_evals = static_cast<std::size_t>(*v);
  if (auto v = c.integer("dfo.max_evals")) o.trust_region.max_evals = static_cast<std::size_t>(*v);
  if (auto v = c.number("dfo.rho_begin")) o.trust_region.rho_begin = *v;
  if (auto v = c.number("dfo.rho_end")) o.trust_region.rho_end = *v;
  if (auto v = c.integer("global.per_start_evals")) o.per_start_evals = static_cast<std::size_t>(*v);
  if (auto v = c.integer("samples.max")) o.max_samples = static_cast<std::size_t>(*v);
  if (auto v = c.integer("weights.radius")) o.weight_radius = static_cast<int>(*v);
  if (auto v = c.text("lc2.radii")) {
    o.lc2.radii = parse_ints(*v, "lc2.radii");
  }
  if (auto v = c.integer("lc2.sample_step")) o.lc2.sample_step = static_cast<int>(*v);
  if (auto v = c.text("lc2.source")) {
    if (*v == "moving") {
      o.lc2.source = Lc2Source::Moving;
    } else if (*v == "fixed") {
      o.lc2.source = Lc2Source::Fixed;
    } else {
      throw UsageError("lc2.source must be 'moving' or 'fixed'");
    }
  }
}

json options_json(const RegistrationOptions& o) {
  json j;
  j["rotation_range_rad"] = o.rotation_range;
  j["translation_range_mm"] = o.translation_range;
  j["n_starts"] = o.n_starts;
  j["per_start_evals"] = o.per_start_evals;
  j["quantize"] = o.quantize;
  j["max_samples"] = o.max_samples;
  j["weight_radius_voxels"] = o.weight_radius;
  j["bfgs"] = {{"max_iters", o.bfgs.max_iters}, {"grad_tol", o.bfgs.grad_tol}, {"step_tol", o.bfgs.step_tol},
               {"max_evals", o.bfgs.max_evals}};
  j["lc2"] = {{"radii_voxels", o.lc2.radii},
              {"sample_step", o.lc2.sample_step},
              {"source", o.lc2.source == Lc2Source::Moving ? "moving" : "fixed"}};
  if (o.center) j["center_mm"] = vec_json(*o.center);
  if (o.probe) {
    j["probe"] = {{"center_mm", vec_json(o.probe->center)},
                  {"inner_radius_mm", o.probe->inner_radius},
                  {"outer_radius_mm", o.probe->outer_radius}};
  }
  return j;
}

int cmd_register(const RegisterArgs& a, std::ostream& out) {
  RegistrationOptions o;
  o.similarity = parse_similarity(a.similarity);
  o.mode = parse_transform_mode(a.mode);
  o.global = a.search == "global";
  o.rotation_range = a.rot_range_deg * kPi / 180.0;
  o.translation_range = a.trans_range_mm;
  o.n_starts = a.n_starts;
  o.seed = a.seed;
  o.quantize = a.quantize;

  Config config;
  json inputs;
  if (!a.config_file.empty()) {
    config.load_file(a.config_file);
    inputs["config"] = file_entry(a.config_file);
  }
  for (const std::string& s : a.set) config.assign(s);
  apply_config(config, o);
  if (!a.set.empty()) inputs["config_overrides"] = config.entries();

  if (o.global && o.n_starts == 0) throw UsageError("--n-starts must be at least 1");
  if (o.similarity == Similarity::Lc2 && o.global && !a.allow_global_lc2 &&
      o.n_starts * o.per_start_evals > kLc2GlobalBudget) {
    throw UsageError(fmt::format(
        "global LC2 search would need about {} evaluations of the patch-wise similarity; this is refused by default. "
        "Use --similarity disa, reduce --n-starts, or pass --allow-global-lc2",
        o.n_starts * o.per_start_evals));
  }
  if (o.similarity == Similarity::Disa) {
    const bool files = !a.fixed_features.empty() || !a.moving_features.empty();
    if (files && (a.fixed_features.empty() || a.moving_features.empty()))
      throw UsageError("--fixed-features and --moving-features go together");
    if (files == !a.weights.empty()) throw UsageError("DISA needs either --weights or both feature files");
  } else if (!a.weights.empty() || !a.fixed_features.empty() || !a.moving_features.empty() || a.quantize) {
    throw UsageError("--weights, feature files and --quantize apply to --similarity disa only");
  }

  const Volume fixed = load_volume(a.fixed);
  const Volume moving = load_volume(a.moving);
  inputs["fixed"] = file_entry(a.fixed);
  inputs["moving"] = file_entry(a.moving);

  if (!a.initial.empty()) {
    const TransformChain t0 = load_transform(a.initial);
    inputs["initial"] = file_entry(a.initial);
    if (t0.mode() != o.mode) throw DataError("initial transform mode differs from --mode");
    const Vec3 center = o.center.value_or(fixed.geometry().center());
    VecX alpha = TransformChain::from_matrix(t0.to_matrix(), o.mode, center, o.probe ? o.probe : t0.probe())
                     .parameters();
    if (o.mode == TransformMode::RigidProbe) {
      alpha[6] = t0.probe()->alpha;
      alpha[7] = t0.probe()->beta;
    }
    o.initial = alpha;
  }

  DescriptorExtractor extract;
  std::optional<Network> net;
  FeatureMap ff, fm;
  if (o.similarity == Similarity::Disa) {
    if (!a.weights.empty()) {
      net.emplace(load_weights(a.weights));
      inputs["weights"] = file_entry(a.weights);
      extract = [&](const Volume& v) { return net->infer(ensure_normalized(v)); };
    } else {
      ff = load_features(a.fixed_features);
      fm = load_features(a.moving_features);
      inputs["fixed_features"] = file_entry(a.fixed_features);
      inputs["moving_features"] = file_entry(a.moving_features);
      if (ff.quantized() || fm.quantized()) {
        ff = dequantize(ff);
        fm = dequantize(fm);
        o.quantize = true;
      }
      if (!same_grid(ff.source_geometry(), fixed.geometry()) || !same_grid(fm.source_geometry(), moving.geometry()))
        throw DataError("feature files were not computed from the given volumes");
      extract = [&](const Volume& v) { return &v == &fixed ? ff : fm; };
    }
  }

  const RegistrationResult r = register_volumes(fixed, moving, o, extract);

  json report;
  report["tool"] = {{"name", "disa"}, {"version", version()}};
  report["seed"] = a.seed;
  report["similarity"] = std::string(to_string(o.similarity));
  report["mode"] = std::string(to_string(o.mode));
  report["search"] = o.global ? "global" : "local";
  report["options"] = options_json(o);
  report["initial_similarity"] = r.initial_similarity;
  report["final_similarity"] = r.final_similarity;
  report["transform"] = json::parse(transform_to_json(r.transform));
  report["evaluations"] = {{"total", r.optimization.evaluations},
                           {"with_gradient", r.optimization.gradient_evaluations},
                           {"iterations", r.optimization.iterations},
                           {"extractor_calls", r.extractor_calls}};
  if (o.global) {
    report["evaluations"]["restarts"] = r.optimization.restart_values.size();
    report["evaluations"]["best_restart"] = r.optimization.best_restart;
  }
  report["stop_reason"] = r.optimization.stop_reason;
  report["converged"] = r.optimization.converged;
  report["timing"] = {{"seconds", r.seconds}};
  if (a.gt.any()) report["metrics"] = ground_truth_metrics(a.gt, r.transform, inputs);
  report["inputs"] = inputs;

  if (!a.out.empty()) save_transform(r.transform, a.out);
  if (!a.report.empty()) write_text(a.report, dump(report));
  fmt::print(out, "{} {} {}: similarity {:.6f} -> {:.6f}, {} evaluations, {:.2f} s\n", report["similarity"].get<std::string>(),
             report["mode"].get<std::string>(), report["search"].get<std::string>(), r.initial_similarity,
             r.final_similarity, r.optimization.evaluations, r.seconds);
  if (a.out.empty()) out << transform_to_json(r.transform) << "\n";
  return kExitOk;
}

struct HeatmapArgs {
  std::string source, target, out;
  std::vector<double> point;
};

int cmd_heatmap(const HeatmapArgs& a, std::ostream& out) {
  const FeatureMap src = load_features(a.source);
  const FeatureMap dst = load_features(a.target);
  const Vec3 idx = src.cell_geometry().world_to_index(Vec3(a.point[0], a.point[1], a.point[2]));
  const Index3 cell{static_cast<int>(std::lround(idx[0])), static_cast<int>(std::lround(idx[1])),
                    static_cast<int>(std::lround(idx[2]))};
  if (!src.cell_geometry().contains(cell[0], cell[1], cell[2]))
    throw DataError(fmt::format("point ({}, {}, {}) mm is outside the source feature grid", a.point[0], a.point[1],
                                a.point[2]));
  save_volume(heatmap(src, cell, dst), a.out);
  fmt::print(out, "wrote {} (query cell {} {} {})\n", a.out, cell[0], cell[1], cell[2]);
  return kExitOk;
}

struct SamplePairsArgs {
  std::string moving, fixed, out;
  std::size_t n = 5000;
  int stride = 2, radius = 7;
  std::uint64_t seed = 0;
  std::string radii = "3,5,7", gradient_side = "F";
};

int cmd_sample_pairs(const SamplePairsArgs& a, std::ostream& out) {
  SamplingOptions o;
  o.n = a.n;
  o.candidate_stride = a.stride;
  o.radius = a.radius;
  o.seed = a.seed;
  o.radii = parse_ints(a.radii, "--radii");
  o.gradient_side = a.gradient_side == "M" ? GradientSide::M : GradientSide::F;
  const SamplingResult r = sample_pairs(load_volume(a.moving), load_volume(a.fixed), o);
  write_dataset(r.records, r.gradient_side, a.out);
  fmt::print(out, "wrote {} ({} pairs from {} candidate centres)\n", a.out, r.records.size(), r.candidates.size());
  return kExitOk;
}

struct EvaluateArgs {
  std::string transform, report;
  GroundTruth gt;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  if (!a.gt.any()) throw UsageError("evaluate needs landmarks or label volumes");
  const TransformChain t = load_transform(a.transform);
  json inputs;
  inputs["transform"] = file_entry(a.transform);
  json report;
  report["tool"] = {{"name", "disa"}, {"version", version()}};
  report["metrics"] = ground_truth_metrics(a.gt, t, inputs);
  report["inputs"] = inputs;
  if (a.report.empty()) {
    out << dump(report);
  } else {
    write_text(a.report, dump(report));
    fmt::print(out, "wrote {}\n", a.report);
  }
  return kExitOk;
}

// --- machine-readable help -----------------------------------------------------------------------

json describe(const CLI::App& app) {
  json j;
  j["name"] = app.get_name();
  j["description"] = app.get_description();
  json options = json::array();
  for (const CLI::Option* o : app.get_options()) {
    json e;
    e["names"] = o->get_positional() ? json::array({o->get_name(true)}) : json::array();
    for (const std::string& s : o->get_snames()) e["names"].push_back("-" + s);
    for (const std::string& l : o->get_lnames()) e["names"].push_back("--" + l);
    e["positional"] = o->get_positional();
    e["required"] = o->get_required();
    e["takes_value"] = o->get_items_expected_max() > 0;
    e["multiple"] = o->get_items_expected_max() > 1;
    e["description"] = o->get_description();
    if (!o->get_default_str().empty()) e["default"] = o->get_default_str();
    options.push_back(e);
  }
  j["options"] = options;
  json subs = json::array();
  for (const CLI::App* s : app.get_subcommands({})) subs.push_back(describe(*s));
  if (!subs.empty()) j["subcommands"] = subs;
  return j;
}

}  // namespace

std::string version() { return DISA_VERSION; }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("DISA multimodal 3D registration", "disa");
  app.set_version_flag("--version", "disa " + version());
  bool help_json = false;
  int threads = 0;
  app.add_flag("--help-json", help_json, "print this interface as JSON and exit");
  app.add_option("--threads", threads, "worker threads; 0 uses every core")->check(CLI::NonNegativeNumber);
  app.require_subcommand(0, 1);

  ConvertArgs convert;
  auto* c = app.add_subcommand("convert", "convert NIfTI/DISAV1 volumes, optionally resampling and normalizing");
  c->add_option("in", convert.in, "input volume")->required();
  c->add_option("out", convert.out, "output volume (.nii/.nii.gz for NIfTI, otherwise DISAV1)")->required();
  c->add_option("--spacing", convert.spacing, "target spacing in mm: one value or sx,sy,sz");
  c->add_flag("--normalize", convert.normalize, "zero mean, unit variance");

  FeaturesArgs features;
  auto* f = app.add_subcommand("features", "compute a descriptor map with one forward pass");
  f->add_option("volume", features.volume, "input volume")->required();
  f->add_option("weights", features.weights, "DISAW1 weights")->required();
  f->add_option("out", features.out, "output DISAF1 feature file")->required();
  f->add_flag("--quantize", features.quantize, "store descriptors as int8");

  InitWeightsArgs init;
  auto* iw = app.add_subcommand("init-weights", "write seeded random weights for the reference architecture");
  iw->add_option("out", init.out, "output DISAW1 file")->required();
  iw->add_option("--seed", init.seed, "random seed")->capture_default_str();
  iw->add_option("--gain", init.gain, "weight scale relative to He initialisation")->capture_default_str();

  RegisterArgs reg;
  auto* r = app.add_subcommand("register", "register a moving volume to a fixed volume");
  r->add_option("fixed", reg.fixed, "fixed volume")->required();
  r->add_option("moving", reg.moving, "moving volume")->required();
  r->add_option("--similarity", reg.similarity, "similarity measure")
      ->check(CLI::IsMember({"disa", "lc2", "mind"}))
      ->capture_default_str();
  r->add_option("--mode", reg.mode, "transform model")
      ->check(CLI::IsMember({"rigid", "affine", "rigid+probe"}))
      ->capture_default_str();
  r->add_option("--search", reg.search, "local optimisation or seeded random restarts")
      ->check(CLI::IsMember({"local", "global"}))
      ->capture_default_str();
  r->add_option("--rot-range", reg.rot_range_deg, "rotation search range, degrees")->capture_default_str();
  r->add_option("--trans-range", reg.trans_range_mm, "translation search range, mm")->capture_default_str();
  r->add_option("--n-starts", reg.n_starts, "global search starts")->capture_default_str();
  r->add_option("--seed", reg.seed, "random seed for sampling and starts")->capture_default_str();
  r->add_option("--out", reg.out, "write the transform JSON here");
  r->add_option("--report", reg.report, "write the registration report JSON here");
  r->add_option("--weights", reg.weights, "DISAW1 weights (disa)");
  r->add_option("--fixed-features", reg.fixed_features, "precomputed DISAF1 of the fixed volume (disa)");
  r->add_option("--moving-features", reg.moving_features, "precomputed DISAF1 of the moving volume (disa)");
  r->add_flag("--quantize", reg.quantize, "int8 descriptors (disa)");
  r->add_option("--initial", reg.initial, "initial transform JSON");
  r->add_flag("--allow-global-lc2", reg.allow_global_lc2, "run global LC2 search beyond the evaluation budget");
  r->add_option("--config", reg.config_file, "key=value file: probe geometry and optimizer options");
  r->add_option("--set", reg.set, "key=value override, repeatable");
  add_ground_truth_options(*r, reg.gt);

  HeatmapArgs hm;
  auto* h = app.add_subcommand("heatmap", "similarity of one point to every cell of another feature map");
  h->add_option("source", hm.source, "source DISAF1")->required();
  hm.point.resize(3);
  h->add_option("x", hm.point[0], "query point x, mm")->required();
  h->add_option("y", hm.point[1], "query point y, mm")->required();
  h->add_option("z", hm.point[2], "query point z, mm")->required();
  h->add_option("target", hm.target, "target DISAF1")->required();
  h->add_option("out", hm.out, "output volume on the target cell grid")->required();

  SamplePairsArgs sp;
  auto* s = app.add_subcommand("sample-pairs", "draw LC2-labelled patch pairs for training");
  s->add_option("moving", sp.moving, "moving volume")->required();
  s->add_option("fixed", sp.fixed, "fixed volume")->required();
  s->add_option("out", sp.out, "output DISAP1 dataset")->required();
  s->add_option("--n", sp.n, "number of pairs")->capture_default_str();
  s->add_option("--stride", sp.stride, "candidate centre stride in voxels")->capture_default_str();
  s->add_option("--radius", sp.radius, "stored patch radius in voxels")->capture_default_str();
  s->add_option("--radii", sp.radii, "LC2 radii in voxels")->capture_default_str();
  s->add_option("--seed", sp.seed, "random seed")->capture_default_str();
  s->add_option("--gradient-side", sp.gradient_side, "patch supplying intensity and gradient regressors")
      ->check(CLI::IsMember({"F", "M"}))
      ->capture_default_str();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "FRE, Dice and HD95 of a transform against ground truth");
  e->add_option("transform", ev.transform, "transform JSON")->required();
  e->add_option("--report", ev.report, "write the evaluation JSON here instead of stdout");
  add_ground_truth_options(*e, ev.gt);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (help_json) {
    out << dump(describe(app));
    return kExitOk;
  }
  if (app.get_subcommands().empty()) {
    err << app.help();
    return kExitUsage;
  }

  parallel::set_thread_count(threads);
  try {
    if (c->parsed()) return cmd_convert(convert, out);
    if (f->parsed()) return cmd_features(features, out);
    if (iw->parsed()) return cmd_init_weights(init, out);
    if (r->parsed()) return cmd_register(reg, out);
    if (h->parsed()) return cmd_heatmap(hm, out);
    if (s->parsed()) return cmd_sample_pairs(sp, out);
    if (e->parsed()) return cmd_evaluate(ev, out);
  } catch (const UsageError& ex) {
    fmt::print(err, "usage error: {}\n", ex.what());
    return kExitUsage;
  } catch (const NumericalError& ex) {
    fmt::print(err, "numerical failure: {}\n", ex.what());
    return kExitNumerical;
  } catch (const Error& ex) {
    fmt::print(err, "error: {}\n", ex.what());
    return kExitData;
  } catch (const std::exception& ex) {
    fmt::print(err, "internal error: {}\n", ex.what());
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace disa::cli
