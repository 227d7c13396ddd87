#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sl0sr/dictionary.hpp"
#include "sl0sr/errors.hpp"
#include "sl0sr/image.hpp"
#include "sl0sr/image_io.hpp"
#include "sl0sr/imaging.hpp"
#include "sl0sr/metrics.hpp"
#include "sl0sr/superres.hpp"
#include "sl0sr/version.hpp"

namespace sl0sr::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

inline int default_threads() {
  if (const char* env = std::getenv("SL0SR_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 0 && v <= 4096) return static_cast<int>(v);
  }
  return 0;  // auto
}

inline std::string format_value(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

inline std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw std::invalid_argument("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (has_extension(entry.path(), ".pgm") || has_extension(entry.path(), ".png"))
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw std::invalid_argument("no .pgm/.png images in directory: " + dir.string());
  return files;
}

inline void write_manifest(const fs::path& output, const ordered_json& manifest) {
  const fs::path path = output.string() + ".manifest.json";
  std::ofstream out(path);
  if (!out) throw format_error("cannot write manifest: " + path.string());
  out << manifest.dump(2) << "\n";
}

inline ordered_json manifest_header(const std::string& command) {
  ordered_json j;
  j["tool"] = "sl0sr";
  j["version"] = kVersion;
  j["command"] = command;
  return j;
}

// Markdown / CSV rendering for eval-style tables: columns name, PSNR(dB), SSIM.
inline std::string render_eval_table(const ComparisonTable& table, const std::string& format) {
  std::ostringstream out;
  auto all_rows = table.rows;
  all_rows.push_back(table.average);
  if (format == "csv") {
    out << "name,psnr_db,ssim\n";
    for (const auto& row : all_rows)
      out << row.name << ',' << format_value(row.psnr_db) << ',' << format_value(row.ssim) << '\n';
  } else {
    out << "| name | PSNR(dB) | SSIM |\n|---|---|---|\n";
    for (const auto& row : all_rows)
      out << "| " << row.name << " | " << format_value(row.psnr_db) << " | "
          << format_value(row.ssim) << " |\n";
  }
  return out.str();
}

inline void emit_table(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw format_error("cannot write table: " + out_path);
  out << text;
}

// ---------------------------------------------------------------------------
// Option structs (JSON round-trip keeps manifests re-runnable)
// ---------------------------------------------------------------------------

struct CodingOptions {
  double sigma_decrease = 0.5;
  double sigma_min = 1e-3;
  int inner_iters = 3;
  double step_scale = 2.0;
  double sigma_initial = 2.0;

  Sl0Config to_config() const {
    Sl0Config cfg;
    cfg.sigma_decrease_factor = sigma_decrease;
    cfg.sigma_min = sigma_min;
    cfg.inner_iterations = inner_iters;
    cfg.step_scale = step_scale;
    cfg.sigma_initial_scale = sigma_initial;
    return cfg;
  }
  ordered_json to_json() const {
    return {{"sigma_decrease", sigma_decrease},
            {"sigma_min", sigma_min},
            {"inner_iters", inner_iters},
            {"step_scale", step_scale},
            {"sigma_initial", sigma_initial}};
  }
  static CodingOptions from_json(const ordered_json& j) {
    CodingOptions o;
    o.sigma_decrease = j.at("sigma_decrease");
    o.sigma_min = j.at("sigma_min");
    o.inner_iters = j.at("inner_iters");
    o.step_scale = j.at("step_scale");
    o.sigma_initial = j.at("sigma_initial");
    return o;
  }
};

inline void add_coding_flags(CLI::App* cmd, CodingOptions& opts) {
  cmd->add_option("--sigma-decrease", opts.sigma_decrease, "SL0 sigma schedule ratio in (0,1)");
  cmd->add_option("--sigma-min", opts.sigma_min, "SL0 annealing stops when sigma < this");
  cmd->add_option("--inner-iters", opts.inner_iters, "SL0 ascent steps per sigma level");
  cmd->add_option("--step-scale", opts.step_scale, "SL0 ascent step scale");
  cmd->add_option("--sigma-initial", opts.sigma_initial, "sigma_1 = scale * max|alpha0|");
}

struct DegradeOptions {
  std::string input;
  std::string output;
  int scale = 2;
  double blur_sigma = 0.8;
  int blur_radius = -1;

  DegradationConfig degradation() const { return DegradationConfig{scale, blur_sigma, blur_radius}; }
  ordered_json to_json() const {
    return {{"input", input}, {"output", output}, {"scale", scale},
            {"blur_sigma", blur_sigma}, {"blur_radius", blur_radius}};
  }
  static DegradeOptions from_json(const ordered_json& j) {
    DegradeOptions o;
    o.input = j.at("input");
    o.output = j.at("output");
    o.scale = j.at("scale");
    o.blur_sigma = j.at("blur_sigma");
    o.blur_radius = j.at("blur_radius");
    return o;
  }
};

struct TrainOptions {
  std::string image_dir;
  std::string output;
  int atoms = 1024;
  int epochs = 20;
  std::uint64_t seed = 0;
  int scale = 2;
  int patch = 5;
  int overlap = 1;
  double blur_sigma = 0.8;
  int blur_radius = -1;
  double ridge = 1e-6;
  CodingOptions coding;
  int threads = default_threads();

  ordered_json to_json() const {
    return {{"image_dir", image_dir}, {"output", output},   {"atoms", atoms},
            {"epochs", epochs},       {"seed", seed},       {"scale", scale},
            {"patch", patch},         {"overlap", overlap}, {"blur_sigma", blur_sigma},
            {"blur_radius", blur_radius}, {"ridge", ridge}, {"coding", coding.to_json()},
            {"threads", threads}};
  }
  static TrainOptions from_json(const ordered_json& j) {
    TrainOptions o;
    o.image_dir = j.at("image_dir");
    o.output = j.at("output");
    o.atoms = j.at("atoms");
    o.epochs = j.at("epochs");
    o.seed = j.at("seed");
    o.scale = j.at("scale");
    o.patch = j.at("patch");
    o.overlap = j.at("overlap");
    o.blur_sigma = j.at("blur_sigma");
    o.blur_radius = j.at("blur_radius");
    o.ridge = j.at("ridge");
    o.coding = CodingOptions::from_json(j.at("coding"));
    o.threads = j.at("threads");
    return o;
  }
};

struct SrOptions {
  std::string input;
  std::string dictionary;
  std::string output;
  std::string solver = "sl0";  // sl0 | ista | bicubic
  int scale = 2;               // used by the bicubic baseline only
  int overlap = 1;
  double lambda = 0.1;
  double nu = 0.5;
  int global_iters = 100;
  double global_tol = 1e-5;
  double blur_sigma = 0.8;
  int blur_radius = -1;
  CodingOptions coding;
  double l1_weight = 1e-4;
  int ista_iters = 400;
  int threads = default_threads();
  int repeat = 1;

  ordered_json to_json() const {
    return {{"input", input},         {"dictionary", dictionary}, {"output", output},
            {"solver", solver},       {"scale", scale},           {"overlap", overlap},
            {"lambda", lambda},       {"nu", nu},                 {"global_iters", global_iters},
            {"global_tol", global_tol}, {"blur_sigma", blur_sigma}, {"blur_radius", blur_radius},
            {"coding", coding.to_json()}, {"l1_weight", l1_weight}, {"ista_iters", ista_iters},
            {"threads", threads},     {"repeat", repeat}};
  }
  static SrOptions from_json(const ordered_json& j) {
    SrOptions o;
    o.input = j.at("input");
    o.dictionary = j.at("dictionary");
    o.output = j.at("output");
    o.solver = j.at("solver");
    o.scale = j.at("scale");
    o.overlap = j.at("overlap");
    o.lambda = j.at("lambda");
    o.nu = j.at("nu");
    o.global_iters = j.at("global_iters");
    o.global_tol = j.at("global_tol");
    o.blur_sigma = j.at("blur_sigma");
    o.blur_radius = j.at("blur_radius");
    o.coding = CodingOptions::from_json(j.at("coding"));
    o.l1_weight = j.at("l1_weight");
    o.ista_iters = j.at("ista_iters");
    o.threads = j.at("threads");
    o.repeat = j.at("repeat");
    return o;
  }

  SrConfig to_sr_config(const CoupledDictionary& dict) const {
    SrConfig cfg;
    cfg.scale = dict.scale;
    cfg.lr_patch_size = dict.lr_patch_size;
    cfg.overlap = overlap;
    cfg.lambda = lambda;
    cfg.nu = nu;
    cfg.max_global_iters = global_iters;
    cfg.global_tol = global_tol;
    cfg.coding = coding.to_config();
    cfg.degradation = DegradationConfig{dict.scale, blur_sigma, blur_radius};
    cfg.solver = solver == "ista" ? CodingSolver::kIsta : CodingSolver::kSl0;
    cfg.ista_l1_weight = l1_weight;
    cfg.ista_max_iters = ista_iters;
    cfg.threads = threads;
    return cfg;
  }
};

struct EvalOptions {
  std::string reference;
  std::vector<std::string> candidates;
  std::string format = "markdown";
  std::string out;
  double peak = 1.0;

  ordered_json to_json() const {
    return {{"reference", reference}, {"candidates", candidates}, {"format", format},
            {"out", out},             {"peak", peak}};
  }
  static EvalOptions from_json(const ordered_json& j) {
    EvalOptions o;
    o.reference = j.at("reference");
    o.candidates = j.at("candidates").get<std::vector<std::string>>();
    o.format = j.at("format");
    o.out = j.at("out");
    o.peak = j.at("peak");
    return o;
  }
};

struct BenchOptions {
  std::string image_dir;
  std::string dictionary;
  std::string solvers = "bicubic,ista,sl0";
  std::string format = "markdown";
  std::string out;
  double peak = 1.0;
  SrOptions sr;  // shared reconstruction knobs (input/output unused)

  ordered_json to_json() const {
    return {{"image_dir", image_dir}, {"dictionary", dictionary}, {"solvers", solvers},
            {"format", format},       {"out", out},               {"peak", peak},
            {"sr", sr.to_json()}};
  }
  static BenchOptions from_json(const ordered_json& j) {
    BenchOptions o;
    o.image_dir = j.at("image_dir");
    o.dictionary = j.at("dictionary");
    o.solvers = j.at("solvers");
    o.format = j.at("format");
    o.out = j.at("out");
    o.peak = j.at("peak");
    o.sr = SrOptions::from_json(j.at("sr"));
    return o;
  }
};

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline int run_degrade(const DegradeOptions& opts) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const Image input = read_image(opts.input);
  const Image output = degrade(input, opts.degradation());
  write_image(output, opts.output);
  const double elapsed = std::chrono::duration<double>(clock::now() - t0).count();

  ordered_json manifest = manifest_header("degrade");
  manifest["options"] = opts.to_json();
  manifest["input_dims"] = {input.width, input.height};
  manifest["output_dims"] = {output.width, output.height};
  const int cw = input.width - input.width % opts.scale;
  const int ch = input.height - input.height % opts.scale;
  if (cw != input.width || ch != input.height)
    manifest["notes"]["center_crop"] = {{"from", {input.width, input.height}}, {"to", {cw, ch}}};
  manifest["timings_s"]["total"] = elapsed;
  write_manifest(opts.output, manifest);
  return 0;
}

inline int run_train(const TrainOptions& opts, bool verbose = false) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const auto files = list_images(opts.image_dir);
  std::vector<Image> images;
  images.reserve(files.size());
  for (const auto& f : files) images.push_back(read_image(f));

  const DegradationConfig degradation{opts.scale, opts.blur_sigma, opts.blur_radius};
  const auto pairs = harvest_training_pairs(images, opts.patch, opts.overlap, degradation);
  if (verbose)
    std::cerr << "train: " << files.size() << " images, " << pairs.size() << " patch pairs\n";

  TrainingConfig config;
  config.atom_count = opts.atoms;
  config.epochs = opts.epochs;
  config.coding = opts.coding.to_config();
  config.mod_ridge = opts.ridge;
  config.seed = opts.seed;
  config.threads = opts.threads;

  TrainingTrace trace;
  const CoupledDictionary dict = train_coupled(pairs, config, &trace);
  save_dictionary(dict, opts.output);
  const double elapsed = std::chrono::duration<double>(clock::now() - t0).count();
  if (verbose)
    std::cerr << "train: final RMSE " << trace.final_rmse << " (input RMS " << trace.input_rms
              << ") in " << elapsed << " s\n";

  ordered_json manifest = manifest_header("train");
  manifest["options"] = opts.to_json();
  manifest["inputs"] = [&] {
    std::vector<std::string> names;
    for (const auto& f : files) names.push_back(f.string());
    return names;
  }();
  manifest["training"]["pairs"] = pairs.size();
  manifest["training"]["final_rmse"] = trace.final_rmse;
  manifest["training"]["input_rms"] = trace.input_rms;
  manifest["training"]["epoch_error"] = trace.epoch_error;
  manifest["training"]["dead_atoms_replaced"] = trace.dead_atoms_replaced;
  manifest["timings_s"]["total"] = elapsed;
  write_manifest(opts.output, manifest);
  return 0;
}

inline ordered_json report_to_json(const SrReport& report) {
  ordered_json j;
  j["patch_count"] = report.patch_count;
  j["mean_patch_sparsity"] = report.mean_patch_sparsity;
  j["global_iterations_used"] = report.global_iterations_used;
  j["objective_first"] = report.objective_trace.empty() ? 0.0 : report.objective_trace.front();
  j["objective_last"] = report.objective_trace.empty() ? 0.0 : report.objective_trace.back();
  j["wall_times_s"] = {{"extract", report.wall_times.extract_s},
                       {"coding", report.wall_times.coding_s},
                       {"merge", report.wall_times.merge_s},
                       {"global", report.wall_times.global_s},
                       {"total", report.wall_times.total_s}};
  return j;
}

inline int run_sr(const SrOptions& opts, bool verbose = false) {
  if (opts.repeat < 1) throw std::invalid_argument("sr: --repeat must be >= 1");
  if (opts.solver != "sl0" && opts.solver != "ista" && opts.solver != "bicubic")
    throw std::invalid_argument("sr: --solver must be sl0, ista or bicubic");
  const Image y = read_image(opts.input);

  ordered_json manifest = manifest_header("sr");
  manifest["options"] = opts.to_json();

  if (opts.solver == "bicubic") {
    using clock = std::chrono::steady_clock;
    std::vector<double> times;
    Image hr(1, 1);
    for (int r = 0; r < opts.repeat; ++r) {
      const auto t0 = clock::now();
      hr = bicubic_resize(y, opts.scale * y.width, opts.scale * y.height);
      times.push_back(std::chrono::duration<double>(clock::now() - t0).count());
    }
    write_image(hr, opts.output);
    manifest["report"]["wall_times_s"]["total"] = median(times);
    manifest["output_dims"] = {hr.width, hr.height};
    write_manifest(opts.output, manifest);
    return 0;
  }

  if (opts.dictionary.empty())
    throw std::invalid_argument("sr: --dict is required for solver " + opts.solver);
  const CoupledDictionary dict = load_dictionary(opts.dictionary);
  const SrConfig config = opts.to_sr_config(dict);

  SrResult result;
  std::vector<double> coding_times, global_times, total_times;
  for (int r = 0; r < opts.repeat; ++r) {
    result = super_resolve(y, dict, config);
    coding_times.push_back(result.report.wall_times.coding_s);
    global_times.push_back(result.report.wall_times.global_s);
    total_times.push_back(result.report.wall_times.total_s);
  }
  result.report.wall_times.coding_s = median(coding_times);
  result.report.wall_times.global_s = median(global_times);
  result.report.wall_times.total_s = median(total_times);
  if (verbose)
    std::cerr << "sr: " << result.report.patch_count << " patches, mean sparsity "
              << result.report.mean_patch_sparsity << ", " << result.report.global_iterations_used
              << " global iterations\n";

  write_image(result.image, opts.output);
  manifest["report"] = report_to_json(result.report);
  manifest["output_dims"] = {result.image.width, result.image.height};
  write_manifest(opts.output, manifest);
  return 0;
}

inline int run_eval(const EvalOptions& opts) {
  if (opts.format != "csv" && opts.format != "markdown")
    throw std::invalid_argument("eval: --format must be csv or markdown");
  const Image reference = read_image(opts.reference);
  std::vector<std::pair<std::string, Image>> candidates;
  for (const auto& c : opts.candidates)
    candidates.emplace_back(fs::path(c).filename().string(), read_image(c));
  const ComparisonTable table = compare(reference, candidates, opts.peak);
  emit_table(render_eval_table(table, opts.format), opts.out);
  if (!opts.out.empty()) {
    ordered_json manifest = manifest_header("eval");
    manifest["options"] = opts.to_json();
    write_manifest(opts.out, manifest);
  }
  return 0;
}

struct BenchCell {
  double psnr_db = 0.0;
  double ssim = 0.0;
  double coding_s = 0.0;
};

inline int run_bench(const BenchOptions& opts, bool verbose = false) {
  if (opts.format != "csv" && opts.format != "markdown")
    throw std::invalid_argument("bench: --format must be csv or markdown");
  std::vector<std::string> solvers;
  {
    std::stringstream ss(opts.solvers);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item != "bicubic" && item != "ista" && item != "sl0")
        throw std::invalid_argument("bench: unknown solver '" + item + "'");
      solvers.push_back(item);
    }
    if (solvers.empty()) throw std::invalid_argument("bench: no solvers selected");
  }
  const auto files = list_images(opts.image_dir);

  const bool needs_dict =
      std::any_of(solvers.begin(), solvers.end(), [](const std::string& s) { return s != "bicubic"; });
  CoupledDictionary dict;
  if (needs_dict) {
    if (opts.dictionary.empty()) throw std::invalid_argument("bench: --dict required");
    dict = load_dictionary(opts.dictionary);
  }
  const int scale = needs_dict ? dict.scale : opts.sr.scale;
  const DegradationConfig degradation{scale, opts.sr.blur_sigma, opts.sr.blur_radius};

  std::vector<std::string> image_names;
  // results[solver][image]
  std::vector<std::vector<BenchCell>> results(solvers.size());

  for (const auto& file : files) {
    const Image gt = center_crop_to_multiple(read_image(file), scale);
    const Image lr = degrade(gt, degradation);
    image_names.push_back(file.filename().string());
    if (verbose) std::cerr << "bench: " << file.filename().string() << "\n";
    for (std::size_t s = 0; s < solvers.size(); ++s) {
      BenchCell cell;
      Image hr(1, 1);
      if (solvers[s] == "bicubic") {
        std::vector<double> times;
        for (int r = 0; r < opts.sr.repeat; ++r) {
          const auto t0 = std::chrono::steady_clock::now();
          hr = bicubic_resize(lr, gt.width, gt.height);
          times.push_back(
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        cell.coding_s = median(times);
      } else {
        SrOptions sr_opts = opts.sr;
        sr_opts.solver = solvers[s];
        SrConfig config = sr_opts.to_sr_config(dict);
        std::vector<double> times;
        SrResult result;
        for (int r = 0; r < opts.sr.repeat; ++r) {
          result = super_resolve(lr, dict, config);
          times.push_back(result.report.wall_times.coding_s);
        }
        hr = std::move(result.image);
        cell.coding_s = median(times);
      }
      cell.psnr_db = psnr(gt, hr, opts.peak);
      cell.ssim = ssim(gt, hr);
      results[s].push_back(cell);
    }
  }

  // Averages / totals per solver.
  std::vector<BenchCell> average(solvers.size());
  for (std::size_t s = 0; s < solvers.size(); ++s) {
    for (const auto& cell : results[s]) {
      average[s].psnr_db += cell.psnr_db;
      average[s].ssim += cell.ssim;
      average[s].coding_s += cell.coding_s;  // total, not mean
    }
    average[s].psnr_db /= static_cast<double>(files.size());
    average[s].ssim /= static_cast<double>(files.size());
  }
  double time_saving_pct = std::numeric_limits<double>::quiet_NaN();
  {
    const auto sl0_it = std::find(solvers.begin(), solvers.end(), "sl0");
    const auto ista_it = std::find(solvers.begin(), solvers.end(), "ista");
    if (sl0_it != solvers.end() && ista_it != solvers.end()) {
      const double t_sl0 = average[sl0_it - solvers.begin()].coding_s;
      const double t_ista = average[ista_it - solvers.begin()].coding_s;
      if (t_ista > 0.0) time_saving_pct = 100.0 * (1.0 - t_sl0 / t_ista);
    }
  }

  std::ostringstream out;
  if (opts.format == "csv") {
    out << "metric,solver,image,value\n";
    for (std::size_t s = 0; s < solvers.size(); ++s) {
      for (std::size_t i = 0; i < image_names.size(); ++i)
        out << "psnr_db," << solvers[s] << ',' << image_names[i] << ','
            << format_value(results[s][i].psnr_db) << '\n';
      out << "psnr_db," << solvers[s] << ",Average," << format_value(average[s].psnr_db) << '\n';
    }
    for (std::size_t s = 0; s < solvers.size(); ++s) {
      for (std::size_t i = 0; i < image_names.size(); ++i)
        out << "ssim," << solvers[s] << ',' << image_names[i] << ','
            << format_value(results[s][i].ssim) << '\n';
      out << "ssim," << solvers[s] << ",Average," << format_value(average[s].ssim) << '\n';
    }
    for (std::size_t s = 0; s < solvers.size(); ++s) {
      for (std::size_t i = 0; i < image_names.size(); ++i)
        out << "coding_time_s," << solvers[s] << ',' << image_names[i] << ','
            << format_value(results[s][i].coding_s) << '\n';
      out << "coding_time_s," << solvers[s] << ",Total," << format_value(average[s].coding_s)
          << '\n';
    }
    if (!std::isnan(time_saving_pct))
      out << "time_saving_pct,sl0_vs_ista,Total," << format_value(time_saving_pct) << '\n';
  } else {
    const auto section = [&](const std::string& title, auto getter, const char* last_col) {
      out << "\n**" << title << "**\n\n| solver |";
      for (const auto& name : image_names) out << ' ' << name << " |";
      out << ' ' << last_col << " |\n|---|";
      for (std::size_t i = 0; i < image_names.size() + 1; ++i) out << "---|";
      out << '\n';
      for (std::size_t s = 0; s < solvers.size(); ++s) {
        out << "| " << solvers[s] << " |";
        for (const auto& cell : results[s]) out << ' ' << format_value(getter(cell)) << " |";
        out << ' ' << format_value(getter(average[s])) << " |\n";
      }
    };
    section("PSNR (dB)", [](const BenchCell& c) { return c.psnr_db; }, "Average");
    section("SSIM", [](const BenchCell& c) { return c.ssim; }, "Average");
    section("Coding time (s)", [](const BenchCell& c) { return c.coding_s; }, "Total");
    if (!std::isnan(time_saving_pct))
      out << "\nTime saving (sl0 vs ista): " << format_value(time_saving_pct) << " %\n";
  }
  emit_table(out.str(), opts.out);
  if (!opts.out.empty()) {
    ordered_json manifest = manifest_header("bench");
    manifest["options"] = opts.to_json();
    if (!std::isnan(time_saving_pct)) manifest["time_saving_pct"] = time_saving_pct;
    write_manifest(opts.out, manifest);
  }
  return 0;
}

// Re-runs a command from its manifest; optional output override.
inline int run_rerun(const std::string& manifest_path, const std::string& output_override,
                     bool verbose = false) {
  std::ifstream in(manifest_path);
  if (!in) throw format_error("rerun: cannot open manifest: " + manifest_path);
  ordered_json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw format_error("rerun: bad manifest JSON: " + std::string(e.what()));
  }
  const std::string command = manifest.at("command");
  const ordered_json& options = manifest.at("options");
  if (command == "degrade") {
    auto opts = DegradeOptions::from_json(options);
    if (!output_override.empty()) opts.output = output_override;
    return run_degrade(opts);
  }
  if (command == "train") {
    auto opts = TrainOptions::from_json(options);
    if (!output_override.empty()) opts.output = output_override;
    return run_train(opts, verbose);
  }
  if (command == "sr") {
    auto opts = SrOptions::from_json(options);
    if (!output_override.empty()) opts.output = output_override;
    return run_sr(opts, verbose);
  }
  if (command == "eval") {
    auto opts = EvalOptions::from_json(options);
    if (!output_override.empty()) opts.out = output_override;
    return run_eval(opts);
  }
  if (command == "bench") {
    auto opts = BenchOptions::from_json(options);
    if (!output_override.empty()) opts.out = output_override;
    return run_bench(opts, verbose);
  }
  throw format_error("rerun: unknown command in manifest: " + command);
}

// ---------------------------------------------------------------------------
// Argument parsing and exit-code policy: 0 success, 1 numerical failure,
// 2 usage / I/O error.
// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv) {
  CLI::App app{"Smoothed-l0 sparse coding and single-image super-resolution"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "log progress to stderr");

  DegradeOptions degrade_opts;
  auto* degrade_cmd = app.add_subcommand("degrade", "blur + downsample an image (Y = S H X)");
  degrade_cmd->add_option("input", degrade_opts.input, "input image (.pgm/.png)")->required();
  degrade_cmd->add_option("output", degrade_opts.output, "output LR image")->required();
  degrade_cmd->add_option("--scale", degrade_opts.scale, "downsampling factor");
  degrade_cmd->add_option("--blur-sigma", degrade_opts.blur_sigma, "Gaussian blur sigma");
  degrade_cmd->add_option("--blur-radius", degrade_opts.blur_radius,
                          "blur kernel radius (default ceil(3 sigma))");

  TrainOptions train_opts;
  auto* train_cmd = app.add_subcommand("train", "train a coupled dictionary from an image corpus");
  train_cmd->add_option("image-dir", train_opts.image_dir, "directory of training images")->required();
  train_cmd->add_option("output", train_opts.output, "output dictionary file")->required();
  train_cmd->add_option("--atoms", train_opts.atoms, "dictionary atom count");
  train_cmd->add_option("--epochs", train_opts.epochs, "training epochs");
  train_cmd->add_option("--seed", train_opts.seed, "RNG seed (bit-reproducible)");
  train_cmd->add_option("--scale", train_opts.scale, "super-resolution factor");
  train_cmd->add_option("--patch", train_opts.patch, "LR patch size");
  train_cmd->add_option("--overlap", train_opts.overlap, "harvest grid overlap");
  train_cmd->add_option("--blur-sigma", train_opts.blur_sigma, "degradation blur sigma");
  train_cmd->add_option("--blur-radius", train_opts.blur_radius, "degradation blur radius");
  train_cmd->add_option("--ridge", train_opts.ridge, "MOD update ridge");
  train_cmd->add_option("--threads", train_opts.threads, "worker threads (0 = auto)");
  add_coding_flags(train_cmd, train_opts.coding);

  SrOptions sr_opts;
  auto* sr_cmd = app.add_subcommand("sr", "super-resolve a low-resolution image");
  sr_cmd->add_option("input", sr_opts.input, "LR input image")->required();
  sr_cmd->add_option("output", sr_opts.output, "HR output image")->required();
  sr_cmd->add_option("--dict", sr_opts.dictionary, "coupled dictionary file");
  sr_cmd->add_option("--solver", sr_opts.solver, "sl0 | ista | bicubic");
  sr_cmd->add_option("--scale", sr_opts.scale, "upscaling factor (bicubic solver only)");
  sr_cmd->add_option("--overlap", sr_opts.overlap, "LR patch overlap");
  sr_cmd->add_option("--lambda", sr_opts.lambda, "global constraint data weight");
  sr_cmd->add_option("--nu", sr_opts.nu, "global constraint step size");
  sr_cmd->add_option("--global-iters", sr_opts.global_iters, "max global iterations");
  sr_cmd->add_option("--global-tol", sr_opts.global_tol, "relative objective tolerance");
  sr_cmd->add_option("--blur-sigma", sr_opts.blur_sigma, "degradation blur sigma");
  sr_cmd->add_option("--blur-radius", sr_opts.blur_radius, "degradation blur radius");
  sr_cmd->add_option("--l1-weight", sr_opts.l1_weight, "ISTA l1 weight");
  sr_cmd->add_option("--ista-iters", sr_opts.ista_iters, "ISTA max iterations");
  sr_cmd->add_option("--threads", sr_opts.threads, "worker threads (0 = auto)");
  sr_cmd->add_option("--repeat", sr_opts.repeat, "timing repeats (median reported)");
  add_coding_flags(sr_cmd, sr_opts.coding);

  EvalOptions eval_opts;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM table against a reference image");
  eval_cmd->add_option("reference", eval_opts.reference, "reference image")->required();
  eval_cmd->add_option("candidates", eval_opts.candidates, "candidate images")->required();
  eval_cmd->add_option("--format", eval_opts.format, "csv | markdown");
  eval_cmd->add_option("--out", eval_opts.out, "write table to file (default stdout)");
  eval_cmd->add_option("--peak", eval_opts.peak, "PSNR peak (1.0 or 255)");

  BenchOptions bench_opts;
  auto* bench_cmd = app.add_subcommand("bench", "degrade + reconstruct + evaluate a corpus");
  bench_cmd->add_option("image-dir", bench_opts.image_dir, "directory of ground-truth images")->required();
  bench_cmd->add_option("--dict", bench_opts.dictionary, "coupled dictionary file");
  bench_cmd->add_option("--solvers", bench_opts.solvers, "comma list of bicubic,ista,sl0");
  bench_cmd->add_option("--format", bench_opts.format, "csv | markdown");
  bench_cmd->add_option("--out", bench_opts.out, "write table to file (default stdout)");
  bench_cmd->add_option("--peak", bench_opts.peak, "PSNR peak");
  bench_cmd->add_option("--scale", bench_opts.sr.scale, "scale (bicubic-only runs)");
  bench_cmd->add_option("--overlap", bench_opts.sr.overlap, "LR patch overlap");
  bench_cmd->add_option("--lambda", bench_opts.sr.lambda, "global constraint data weight");
  bench_cmd->add_option("--nu", bench_opts.sr.nu, "global constraint step size");
  bench_cmd->add_option("--global-iters", bench_opts.sr.global_iters, "max global iterations");
  bench_cmd->add_option("--global-tol", bench_opts.sr.global_tol, "relative objective tolerance");
  bench_cmd->add_option("--blur-sigma", bench_opts.sr.blur_sigma, "degradation blur sigma");
  bench_cmd->add_option("--blur-radius", bench_opts.sr.blur_radius, "degradation blur radius");
  bench_cmd->add_option("--l1-weight", bench_opts.sr.l1_weight, "ISTA l1 weight");
  bench_cmd->add_option("--ista-iters", bench_opts.sr.ista_iters, "ISTA max iterations");
  bench_cmd->add_option("--threads", bench_opts.sr.threads, "worker threads (0 = auto)");
  bench_cmd->add_option("--repeat", bench_opts.sr.repeat, "timing repeats (median reported)");
  add_coding_flags(bench_cmd, bench_opts.sr.coding);

  std::string rerun_manifest, rerun_output;
  auto* rerun_cmd = app.add_subcommand("rerun", "re-run a command from its manifest");
  rerun_cmd->add_option("manifest", rerun_manifest, "manifest JSON file")->required();
  rerun_cmd->add_option("--output", rerun_output, "override output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (degrade_cmd->parsed()) return run_degrade(degrade_opts);
    if (train_cmd->parsed()) return run_train(train_opts, verbose);
    if (sr_cmd->parsed()) return run_sr(sr_opts, verbose);
    if (eval_cmd->parsed()) return run_eval(eval_opts);
    if (bench_cmd->parsed()) return run_bench(bench_opts, verbose);
    if (rerun_cmd->parsed()) return run_rerun(rerun_manifest, rerun_output, verbose);
    std::cerr << "sl0sr: no command\n";
    return 2;
  } catch (const format_error& e) {
    std::cerr << "sl0sr: " << e.what() << "\n";
    return 2;
  } catch (const invariant_violation_error& e) {
    std::cerr << "sl0sr: " << e.what() << "\n";
    return 2;
  } catch (const config_error& e) {
    std::cerr << "sl0sr: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "sl0sr: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "sl0sr: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "sl0sr: " << e.what() << "\n";
    return 1;
  }
}

inline int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("sl0sr");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace sl0sr::cli
