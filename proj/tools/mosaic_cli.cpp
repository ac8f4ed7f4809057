// Command-line surface for the patch-mosaic diffusion toolkit: dictionary
// building, sampling, the toy experiment, scale calibration, consistency
// verification, output comparison, and receptive-field probes.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mosaic/analysis.hpp"
#include "mosaic/calibration.hpp"
#include "mosaic/dataset_io.hpp"
#include "mosaic/png_io.hpp"
#include "mosaic/run_config.hpp"
#include "mosaic/sampler.hpp"
#include "mosaic/trajectory_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mosaic;

namespace {

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stoi(tok));
  }
  require(!out.empty(), "expected a comma-separated list of integers, got: " + csv);
  return out;
}

ImageGrid load_grid_file(const fs::path& path, bool range01 = false) {
  ImageGrid img;
  if (path.extension() == ".png") {
    img = read_png(path);
  } else if (path.extension() == ".tns") {
    img = grid_from_record(read_tensor_file(path));
    if (range01)
      for (auto& v : img.data()) v = 2.0f * v - 1.0f;
  } else {
    throw Error("unsupported image file (expected .png or .tns): " + path.string());
  }
  return img;
}

std::vector<fs::path> list_grid_files(const fs::path& dir) {
  require(fs::is_directory(dir), "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    if (e.path().extension() != ".png" && e.path().extension() != ".tns") continue;
    // Trajectory sequences live next to samples but are not images.
    if (e.path().stem().string().ends_with("_traj")) continue;
    files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  require(!files.empty(), "no .png or .tns files in " + dir.string());
  return files;
}

struct DatasetFlags {
  std::string path;
  std::string format = "png-dir";
  std::string labels;
  int subset = 0;

  DatasetSpec spec() const {
    DatasetSpec s;
    s.format = dataset_format_from_string(format);
    s.path = path;
    if (!labels.empty()) s.labels_path = labels;
    s.subset = subset;
    return s;
  }

  json to_json() const {
    return {{"path", path}, {"format", format}, {"labels", labels}, {"subset", subset}};
  }

  void add_options(CLI::App* cmd, bool required) {
    auto* o = cmd->add_option("--data", path, "dataset path (IDX file, CIFAR .bin, or PNG directory)");
    if (required) o->required();
    cmd->add_option("--format", format, "dataset format: mnist-idx | cifar10-bin | png-dir");
    cmd->add_option("--labels", labels, "label file (IDX labels or labels.csv)");
    cmd->add_option("--subset", subset, "keep only the first N images");
  }
};

struct MachineFlags {
  std::string machine = "els";
  std::vector<std::string> dict_paths;
  DatasetFlags dataset;
  int label = -1;
  int top_k = 0;
  bool no_dedup = false;
  int threads = 0;

  void add_options(CLI::App* cmd) {
    cmd->add_option("--machine", machine, "score machine: is | es | ls | els | bels")->required();
    cmd->add_option("--dict", dict_paths, "PDX1 dictionary file (repeat for multiple scales)");
    dataset.add_options(cmd, false);
    cmd->add_option("--label", label, "class label for conditional evaluation");
    cmd->add_option("--top-k", top_k, "approximate: keep only the k largest log-weights per pixel");
    cmd->add_flag("--no-dedup", no_dedup, "disable duplicate-patch grouping");
    cmd->add_option("--threads", threads, "worker threads (0 = hardware)");
  }

  MachineOptions options() const {
    MachineOptions o;
    if (label >= 0) o.label = label;
    if (top_k > 0) o.top_k = top_k;
    o.dedup = !no_dedup;
    o.threads = threads;
    return o;
  }

  ScoreMachine build(json* manifest_out) const {
    MachineVariant v = variant_from_string(machine);
    MachineOptions opts = options();
    if (v == MachineVariant::IS || v == MachineVariant::ES) {
      require(!dataset.path.empty(), machine + " machine needs --data");
      auto images = load_dataset(dataset.spec());
      if (manifest_out) {
        (*manifest_out)["dataset"] = dataset.to_json();
        (*manifest_out)["image_count"] = images.size();
      }
      return v == MachineVariant::IS ? ScoreMachine::ideal(std::move(images), opts)
                                     : ScoreMachine::equivariant(std::move(images), opts);
    }
    require(!dict_paths.empty(), machine + " machine needs at least one --dict");
    std::map<int, PatchDictionary> dicts;
    json dict_meta = json::array();
    for (const auto& p : dict_paths) {
      PatchDictionary d = read_dictionary(p);
      dict_meta.push_back({{"path", p},
                           {"scale", d.patch_size()},
                           {"digest", hex64(d.digest())}});
      require(dicts.find(d.patch_size()) == dicts.end(),
              "duplicate dictionary scale " + std::to_string(d.patch_size()));
      dicts.emplace(d.patch_size(), std::move(d));
    }
    if (manifest_out) (*manifest_out)["dictionaries"] = dict_meta;
    switch (v) {
      case MachineVariant::LS: return ScoreMachine::local(std::move(dicts), opts);
      case MachineVariant::ELS: return ScoreMachine::els(std::move(dicts), opts);
      default: return ScoreMachine::bels(std::move(dicts), opts);
    }
  }
};

ScaleSchedule resolve_scales(int steps, int constant_scale, const std::string& scales_csv,
                             const std::string& scales_file) {
  if (!scales_file.empty()) {
    json doc = read_json_file(scales_file);
    std::vector<int> sizes =
        doc.is_array() ? doc.get<std::vector<int>>() : doc.at("scales").get<std::vector<int>>();
    require(static_cast<int>(sizes.size()) == steps,
            "scale schedule length does not match --steps");
    return ScaleSchedule(sizes);
  }
  if (!scales_csv.empty()) {
    std::vector<int> sizes = parse_int_list(scales_csv);
    require(static_cast<int>(sizes.size()) == steps,
            "scale schedule length does not match --steps");
    return ScaleSchedule(sizes);
  }
  return ScaleSchedule::constant(constant_scale, steps);
}

json schedule_json(const NoiseSchedule& sched) {
  return {{"kind", to_string(sched.kind())}, {"steps", sched.steps()},
          {"alpha_bar", sched.values()}};
}

// ------------------------------------------------------------- build-dict

int cmd_build_dict(const DatasetFlags& dataset, int patch_size, const std::string& pad,
                   int stride, const std::string& out) {
  auto images = load_dataset(dataset.spec());
  DictionaryBuildOptions opts;
  opts.location_stride = stride;
  PatchDictionary dict = build_dictionary(images, patch_size, padding_from_string(pad), opts);

  json source = dataset.to_json();
  source["image_count"] = images.size();
  source["location_stride"] = stride;
  if (dataset.subset > 0 || stride > 1)
    source["deviation"] = "image subset and/or location stride below the full training grid";
  write_dictionary(out, dict, source);
  std::cout << "wrote " << out << ": " << dict.size() << " patches, P=" << dict.patch_size()
            << ", C=" << dict.channels() << ", pad=" << pad
            << ", digest=" << hex64(dict.digest()) << "\n";
  return 0;
}

// ----------------------------------------------------------------- sample

int cmd_sample(const MachineFlags& machine_flags, int steps, const std::string& schedule_kind,
               int constant_scale, const std::string& scales_csv, const std::string& scales_file,
               std::uint64_t seed, int n_samples, const std::string& out, bool save_float,
               bool record_trajectories) {
  fs::create_directories(out);
  json manifest;
  manifest["command"] = "sample";
  manifest["machine"] = machine_flags.machine;
  ScoreMachine machine = machine_flags.build(&manifest);

  NoiseSchedule sched = make_schedule(schedule_kind, steps);
  manifest["schedule"] = schedule_json(sched);

  std::optional<ScaleSchedule> scales;
  if (machine.uses_dictionary()) {
    scales = resolve_scales(steps, constant_scale, scales_csv, scales_file);
    manifest["scales"] = scales->sizes();
  }

  int height, width, channels;
  if (machine.uses_dictionary()) {
    const PatchDictionary& d = machine.dictionary(machine.scales().front());
    height = d.image_height();
    width = d.image_width();
    channels = d.channels();
  } else {
    height = machine.images().front().height();
    width = machine.images().front().width();
    channels = machine.images().front().channels();
  }
  manifest["shape"] = {height, width, channels};
  if (machine_flags.label >= 0) manifest["label"] = machine_flags.label;
  manifest["seed"] = seed;
  manifest["samples"] = n_samples;
  manifest["machine_digest"] = hex64(machine.digest());
  manifest["normalization"] = "[-1,1]";
  // Thread count does not affect results, so it stays out of the identity.
  std::string digest = config_digest(manifest);
  manifest["config_digest"] = digest;
  manifest["threads"] = machine_flags.threads;

  std::optional<int> label =
      machine_flags.label >= 0 ? std::optional<int>(machine_flags.label) : std::nullopt;
  json outputs = json::array();
  for (int i = 0; i < n_samples; ++i) {
    std::uint64_t s = seed + static_cast<std::uint64_t>(i);
    SampleResult r =
        sample(machine, sched, scales, s, height, width, channels, label, record_trajectories);

    char name[64];
    std::snprintf(name, sizeof(name), "sample_%04d", i);
    write_png(fs::path(out) / (std::string(name) + ".png"), r.image);
    outputs.push_back(std::string(name) + ".png");
    if (save_float) {
      TensorRecord rec = grid_to_record(r.image);
      rec.meta["seed"] = s;
      rec.meta["config_digest"] = digest;
      write_tensor_file(fs::path(out) / (std::string(name) + ".tns"), rec);
    }
    if (record_trajectories) {
      r.trajectory->config_digest = digest;
      write_trajectory(fs::path(out) / (std::string(name) + "_traj.tns"), *r.trajectory,
                       {{"machine", machine_flags.machine}});
    }
  }
  manifest["outputs"] = outputs;
  write_json_file(fs::path(out) / "manifest.json", manifest);
  std::cout << "wrote " << n_samples << " samples to " << out << " (config " << digest << ")\n";
  return 0;
}

// -------------------------------------------------------------------- toy

int cmd_toy(int size, int steps, int scale, const std::string& pad, int n_samples, double tau,
            std::uint64_t seed, int threads, const std::string& out) {
  fs::create_directories(out);
  PaddingMode padding = padding_from_string(pad);
  auto data = std::vector<ImageGrid>{ImageGrid(size, size, 1, -1.0f), ImageGrid(size, size, 1, 1.0f)};
  PatchDictionary dict = build_dictionary(data, scale, padding);

  MachineOptions opts;
  opts.threads = threads;
  ScoreMachine machine = padding == PaddingMode::Circular
                             ? ScoreMachine::els({{scale, dict}}, opts)
                             : ScoreMachine::bels({{scale, dict}}, opts);
  MachineVariant check_variant =
      padding == PaddingMode::Circular ? MachineVariant::ELS : MachineVariant::BELS;

  NoiseSchedule sched = cosine_schedule(steps);
  ScaleSchedule scales = ScaleSchedule::constant(scale, steps);

  json manifest;
  manifest["command"] = "toy";
  manifest["size"] = size;
  manifest["steps"] = steps;
  manifest["scale"] = scale;
  manifest["pad"] = pad;
  manifest["samples"] = n_samples;
  manifest["tau"] = tau;
  manifest["seed"] = seed;
  manifest["schedule"] = schedule_json(sched);
  manifest["dictionary_digest"] = hex64(dict.digest());
  std::string digest = config_digest(manifest);
  manifest["config_digest"] = digest;

  json per_sample = json::array();
  double mean_pass = 0.0;
  double min_pass = 1.0;
  for (int i = 0; i < n_samples; ++i) {
    SampleResult r = sample(machine, sched, scales, seed + static_cast<std::uint64_t>(i), size,
                            size, 1, std::nullopt, false);
    ConsistencyReport rep = verify_local_consistency(r.image, dict, check_variant, tau);

    int near = 0;
    for (float v : r.image.data())
      if (std::abs(std::abs(v) - 1.0f) <= tau) ++near;
    double near_frac = static_cast<double>(near) / static_cast<double>(r.image.size());

    char name[64];
    std::snprintf(name, sizeof(name), "toy_%04d.png", i);
    write_png(fs::path(out) / name, r.image);
    per_sample.push_back({{"file", name},
                          {"pass_fraction", rep.pass_fraction},
                          {"binary_fraction", near_frac},
                          {"failing_pixels", rep.failing.size()}});
    mean_pass += rep.pass_fraction;
    min_pass = std::min(min_pass, rep.pass_fraction);
  }
  mean_pass /= std::max(1, n_samples);

  json report;
  report["manifest"] = manifest;
  report["per_sample"] = per_sample;
  report["mean_pass_fraction"] = mean_pass;
  report["min_pass_fraction"] = min_pass;
  write_json_file(fs::path(out) / "report.json", report);

  std::cout << "toy: " << n_samples << " samples at " << steps << " steps, mean pass fraction "
            << mean_pass << ", min " << min_pass << "\n";
  return 0;
}

// -------------------------------------------------------------- calibrate

int cmd_calibrate(const MachineFlags& machine_flags, const std::string& ref_dir,
                  const std::string& candidates_csv, int steps, const std::string& schedule_kind,
                  bool isotonic, bool accept_raw, const std::string& out) {
  json manifest;
  manifest["command"] = "calibrate";
  ScoreMachine machine = machine_flags.build(&manifest);
  NoiseSchedule sched = make_schedule(schedule_kind, steps);
  ReferenceSet ref = read_reference_set(ref_dir);
  std::vector<int> candidates = parse_int_list(candidates_csv);

  CalibrationOptions opts;
  opts.isotonic = isotonic;
  opts.accept_raw = accept_raw;
  CalibrationResult result = calibrate_scales(ref, machine, candidates, sched, opts);

  json doc;
  doc["candidates"] = candidates;
  doc["raw_medians"] = result.raw_medians;
  if (result.schedule) doc["scales"] = result.schedule->sizes();
  doc["exclusions"] = result.exclusions;
  doc["violations"] = result.violations;
  doc["reference"] = ref_dir;
  doc["trajectories"] = ref.trajectories.size();
  doc["schedule"] = schedule_json(sched);
  manifest["machine_digest"] = hex64(machine.digest());
  manifest["candidates"] = candidates;
  manifest["reference"] = ref_dir;
  doc["config_digest"] = config_digest(manifest);
  write_json_file(out, doc);

  std::cout << "calibrated scales:";
  for (int p : result.raw_medians) std::cout << " " << p;
  std::cout << (result.schedule ? "" : "  (raw medians only)") << "\n";
  return 0;
}

// ----------------------------------------------------- verify-consistency

int cmd_verify(const std::string& sample_path, const std::string& dict_path,
               const std::string& variant, double tau, int label, const std::string& out,
               const std::string& mask_path) {
  ImageGrid img = load_grid_file(sample_path);
  PatchDictionary dict = read_dictionary(dict_path);
  std::optional<int> label_opt = label >= 0 ? std::optional<int>(label) : std::nullopt;
  ConsistencyReport rep =
      verify_local_consistency(img, dict, variant_from_string(variant), tau, label_opt);

  json doc;
  doc["sample"] = sample_path;
  doc["dictionary"] = dict_path;
  doc["dictionary_digest"] = hex64(dict.digest());
  doc["variant"] = variant;
  doc["tau"] = tau;
  doc["pass_fraction"] = rep.pass_fraction;
  doc["max_deviation"] = rep.max_deviation;
  doc["failing_pixels"] = rep.failing;
  doc["tied_pixels"] = rep.tied;
  write_json_file(out, doc);

  if (!mask_path.empty()) {
    ImageGrid mask(rep.height, rep.width, 1, 1.0f);
    for (std::uint32_t p : rep.failing) mask.data()[p] = -1.0f;
    write_png(mask_path, mask);
  }
  std::cout << "pass fraction " << rep.pass_fraction << ", max deviation " << rep.max_deviation
            << ", failing " << rep.failing.size() << "\n";
  return 0;
}

// ---------------------------------------------------------------- compare

int cmd_compare(const std::string& dir_a, const std::string& dir_b, bool swap_reference,
                bool range01_reference, const std::string& out) {
  auto files_a = list_grid_files(dir_a);
  auto files_b = list_grid_files(dir_b);
  require(files_a.size() == files_b.size(),
          "compare: directories hold different numbers of images");

  json pairs = json::array();
  std::vector<double> r2s;
  for (std::size_t i = 0; i < files_a.size(); ++i) {
    ImageGrid a = load_grid_file(files_a[i]);
    ImageGrid b = load_grid_file(files_b[i], range01_reference);
    const ImageGrid& candidate = swap_reference ? b : a;
    const ImageGrid& reference = swap_reference ? a : b;
    double r2 = pixelwise_r2(candidate, reference);
    double p2 = pearson_r2(candidate, reference);
    r2s.push_back(r2);
    pairs.push_back({{"candidate", files_a[i].filename().string()},
                     {"reference", files_b[i].filename().string()},
                     {"r2", r2},
                     {"pearson_r2", p2}});
    std::cout << files_a[i].filename().string() << " vs " << files_b[i].filename().string()
              << "  r2 = " << r2 << "\n";
  }
  std::vector<double> sorted = r2s;
  std::sort(sorted.begin(), sorted.end());
  double median = sorted[(sorted.size() - 1) / 2];  // lower median

  json doc;
  doc["pairs"] = pairs;
  doc["median_r2"] = median;
  doc["count"] = r2s.size();
  doc["reference"] = swap_reference ? "first directory" : "second directory";
  if (!out.empty()) write_json_file(out, doc);
  std::cout << "median r2 = " << median << " over " << r2s.size() << " pairs\n";
  return 0;
}

// ------------------------------------------------------------------ probe

int cmd_probe(const MachineFlags& machine_flags, int steps, const std::string& schedule_kind,
              int t_index, int scale, const std::string& x_csv, double epsilon,
              const std::string& phi_path, std::uint64_t seed, const std::string& out) {
  fs::create_directories(out);
  json manifest;
  manifest["command"] = "probe";
  ScoreMachine machine = machine_flags.build(&manifest);
  NoiseSchedule sched = make_schedule(schedule_kind, steps);

  int height, width, channels;
  if (machine.uses_dictionary()) {
    const PatchDictionary& d = machine.dictionary(machine.scales().front());
    height = d.image_height();
    width = d.image_width();
    channels = d.channels();
  } else {
    height = machine.images().front().height();
    width = machine.images().front().width();
    channels = machine.images().front().channels();
  }

  ImageGrid phi = phi_path.empty() ? gaussian_image(height, width, channels, seed)
                                   : load_grid_file(phi_path);
  auto x = parse_int_list(x_csv);
  require(x.size() == 2, "--x expects row,col");

  Grid<double> heat =
      receptive_field_probe(machine, phi, t_index, sched, x[0], x[1], epsilon, scale);

  TensorRecord rec;
  rec.shape = {heat.height(), heat.width(), 1};
  rec.data.assign(heat.data().begin(), heat.data().end());
  rec.meta = {{"t_index", t_index}, {"x", x}, {"epsilon", epsilon},
              {"machine", machine_flags.machine}, {"scale", scale}};
  write_tensor_file(fs::path(out) / "heatmap.tns", rec);

  // Max-normalized grayscale rendering.
  double peak = 0.0;
  for (double v : heat.data()) peak = std::max(peak, v);
  ImageGrid img(heat.height(), heat.width(), 1, -1.0f);
  if (peak > 0.0)
    for (std::size_t i = 0; i < heat.data().size(); ++i)
      img.data()[i] = static_cast<float>(2.0 * heat.data()[i] / peak - 1.0);
  write_png(fs::path(out) / "heatmap.png", img);

  manifest["t_index"] = t_index;
  manifest["x"] = x;
  manifest["epsilon"] = epsilon;
  manifest["schedule"] = schedule_json(sched);
  write_json_file(fs::path(out) / "manifest.json", manifest);
  std::cout << "wrote heatmap to " << out << " (peak " << peak << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"patch-mosaic diffusion toolkit"};
  app.require_subcommand(1);

  // build-dict
  auto* bd = app.add_subcommand("build-dict", "extract a patch dictionary from a dataset");
  DatasetFlags bd_dataset;
  bd_dataset.add_options(bd, true);
  int bd_patch = 3, bd_stride = 1;
  std::string bd_pad = "circular", bd_out = "dict.pdx";
  bd->add_option("--patch-size", bd_patch, "odd window size P");
  bd->add_option("--pad", bd_pad, "circular | zero");
  bd->add_option("--stride", bd_stride, "window-center stride (deviation from the full grid)");
  bd->add_option("--out", bd_out, "output PDX1 file")->required();

  // sample
  auto* sp = app.add_subcommand("sample", "run the reverse sampler");
  MachineFlags sp_machine;
  sp_machine.add_options(sp);
  int sp_steps = 20, sp_scale = 3, sp_samples = 1;
  std::string sp_schedule = "cosine", sp_scales_csv, sp_scales_file, sp_out = "samples";
  std::uint64_t sp_seed = 0;
  bool sp_save_float = false, sp_record = false;
  std::string sp_config;
  sp->add_option("--config", sp_config, "key-value config file (flags override file keys)");
  sp->add_option("--steps", sp_steps, "reverse step count");
  sp->add_option("--schedule", sp_schedule, "noise schedule: cosine | linear");
  sp->add_option("--scale", sp_scale, "constant locality scale");
  sp->add_option("--scales", sp_scales_csv, "per-step scales, late to early (comma separated)");
  sp->add_option("--scales-file", sp_scales_file, "JSON scale schedule (array or {\"scales\": [...]})");
  sp->add_option("--seed", sp_seed, "base RNG seed; sample i uses seed + i");
  sp->add_option("--samples", sp_samples, "number of samples");
  sp->add_option("--out", sp_out, "output directory");
  sp->add_flag("--save-float", sp_save_float, "also write exact f32 states as .tns");
  sp->add_flag("--record-trajectories", sp_record, "write per-sample trajectory files");

  // toy
  auto* toy = app.add_subcommand("toy", "two-image black/white mosaic experiment");
  int toy_size = 32, toy_steps = 200, toy_scale = 3, toy_samples = 64, toy_threads = 0;
  double toy_tau = 0.05;
  std::uint64_t toy_seed = 0;
  std::string toy_pad = "circular", toy_out = "toy_out";
  toy->add_option("--size", toy_size, "grid side length");
  toy->add_option("--steps", toy_steps, "reverse step count");
  toy->add_option("--scale", toy_scale, "locality scale P");
  toy->add_option("--pad", toy_pad, "circular | zero");
  toy->add_option("--samples", toy_samples, "number of samples");
  toy->add_option("--tau", toy_tau, "consistency tolerance");
  toy->add_option("--seed", toy_seed, "base RNG seed");
  toy->add_option("--threads", toy_threads, "worker threads");
  toy->add_option("--out", toy_out, "output directory");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "fit the locality scale schedule to references");
  MachineFlags cal_machine;
  cal_machine.add_options(cal);
  std::string cal_ref, cal_candidates = "3,5,7,9", cal_out = "scales.json",
              cal_schedule = "cosine";
  int cal_steps = 20;
  bool cal_isotonic = false, cal_accept_raw = false;
  cal->add_option("--ref", cal_ref, "directory of reference trajectory .tns files")->required();
  cal->add_option("--candidates", cal_candidates, "candidate scales (comma separated)");
  cal->add_option("--steps", cal_steps, "reverse step count of the references");
  cal->add_option("--schedule", cal_schedule, "noise schedule: cosine | linear");
  cal->add_flag("--isotonic", cal_isotonic, "project medians onto a monotone schedule");
  cal->add_flag("--accept-raw", cal_accept_raw, "keep raw medians even if non-monotone");
  cal->add_option("--out", cal_out, "output schedule JSON");

  // verify-consistency
  auto* vc = app.add_subcommand("verify-consistency", "check the local-consistency condition");
  std::string vc_sample, vc_dict, vc_variant = "els", vc_out = "consistency.json", vc_mask;
  double vc_tau = 0.05;
  int vc_label = -1;
  vc->add_option("--sample", vc_sample, "sample image (.png or .tns)")->required();
  vc->add_option("--dict", vc_dict, "PDX1 dictionary")->required();
  vc->add_option("--variant", vc_variant, "ls | els | bels");
  vc->add_option("--tau", vc_tau, "center-pixel tolerance");
  vc->add_option("--label", vc_label, "restrict candidates to one class label");
  vc->add_option("--out", vc_out, "output report JSON");
  vc->add_option("--mask", vc_mask, "write a pass/fail mask PNG");

  // compare
  auto* cp = app.add_subcommand("compare", "pixelwise r2 between two output sets");
  std::string cp_a, cp_b, cp_out;
  bool cp_swap = false, cp_range01 = false;
  cp->add_option("dir_a", cp_a, "candidate directory")->required();
  cp->add_option("dir_b", cp_b, "reference directory")->required();
  cp->add_flag("--swap-reference", cp_swap, "treat the first directory as the reference");
  cp->add_flag("--range01-reference", cp_range01,
               "reference .tns files store values in [0,1]; remap to [-1,1]");
  cp->add_option("--out", cp_out, "output JSON");

  // probe
  auto* pr = app.add_subcommand("probe", "finite-difference receptive-field heatmap");
  MachineFlags pr_machine;
  pr_machine.add_options(pr);
  int pr_steps = 20, pr_t = 10, pr_scale = 3;
  std::string pr_schedule = "cosine", pr_x = "0,0", pr_phi, pr_out = "probe_out";
  double pr_eps = 0.05;
  std::uint64_t pr_seed = 0;
  pr->add_option("--steps", pr_steps, "schedule step count");
  pr->add_option("--schedule", pr_schedule, "noise schedule: cosine | linear");
  pr->add_option("--t-index", pr_t, "step index to probe");
  pr->add_option("--scale", pr_scale, "locality scale for dictionary machines");
  pr->add_option("--x", pr_x, "probe pixel as row,col");
  pr->add_option("--epsilon", pr_eps, "finite-difference step");
  pr->add_option("--phi", pr_phi, "input state (.png or .tns); default draws N(0, I) from --seed");
  pr->add_option("--seed", pr_seed, "seed for the default input state");
  pr->add_option("--out", pr_out, "output directory");

  try {
    app.parse(argc, argv);

    // Config-file values fill in any sample flags not given on the command
    // line (flags override file keys).
    if (sp->parsed() && !sp_config.empty()) {
      KeyValueConfig cfg = KeyValueConfig::load(sp_config);
      auto fill_str = [&](const char* key, const std::string& flag, std::string& target) {
        if (sp->count(flag) == 0 && cfg.get(key)) target = *cfg.get(key);
      };
      auto fill_int = [&](const char* key, const std::string& flag, int& target) {
        if (sp->count(flag) == 0 && cfg.get(key)) target = std::stoi(*cfg.get(key));
      };
      fill_str("machine", "--machine", sp_machine.machine);
      fill_str("data.path", "--data", sp_machine.dataset.path);
      fill_str("data.format", "--format", sp_machine.dataset.format);
      fill_str("data.labels", "--labels", sp_machine.dataset.labels);
      fill_int("data.subset", "--subset", sp_machine.dataset.subset);
      fill_str("schedule", "--schedule", sp_schedule);
      fill_int("steps", "--steps", sp_steps);
      fill_int("scale", "--scale", sp_scale);
      fill_str("scales", "--scales", sp_scales_csv);
      fill_str("out", "--out", sp_out);
      fill_int("samples", "--samples", sp_samples);
      fill_int("threads", "--threads", sp_machine.threads);
      fill_int("label", "--label", sp_machine.label);
      if (sp->count("--seed") == 0 && cfg.get("seed")) sp_seed = std::stoull(*cfg.get("seed"));
      if (sp->count("--dict") == 0 && cfg.get("dict")) {
        sp_machine.dict_paths.clear();
        std::stringstream ss(*cfg.get("dict"));
        std::string tok;
        while (std::getline(ss, tok, ',')) sp_machine.dict_paths.push_back(tok);
      }
    }

    if (bd->parsed()) return cmd_build_dict(bd_dataset, bd_patch, bd_pad, bd_stride, bd_out);
    if (sp->parsed())
      return cmd_sample(sp_machine, sp_steps, sp_schedule, sp_scale, sp_scales_csv, sp_scales_file,
                        sp_seed, sp_samples, sp_out, sp_save_float, sp_record);
    if (toy->parsed())
      return cmd_toy(toy_size, toy_steps, toy_scale, toy_pad, toy_samples, toy_tau, toy_seed,
                     toy_threads, toy_out);
    if (cal->parsed())
      return cmd_calibrate(cal_machine, cal_ref, cal_candidates, cal_steps, cal_schedule,
                           cal_isotonic, cal_accept_raw, cal_out);
    if (vc->parsed()) return cmd_verify(vc_sample, vc_dict, vc_variant, vc_tau, vc_label, vc_out, vc_mask);
    if (cp->parsed()) return cmd_compare(cp_a, cp_b, cp_swap, cp_range01, cp_out);
    if (pr->parsed())
      return cmd_probe(pr_machine, pr_steps, pr_schedule, pr_t, pr_scale, pr_x, pr_eps, pr_phi,
                       pr_seed, pr_out);
    return 1;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    json err = {{"error", std::string(e.what())}};
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    json err = {{"error", std::string(e.what())}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
}
