#include "xnorforge/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "xnorforge/engine.hpp"
#include "xnorforge/foldsim.hpp"
#include "xnorforge/hwsim.hpp"
#include "xnorforge/imgproc.hpp"
#include "xnorforge/modelio.hpp"
#include "xnorforge/netspec.hpp"

namespace fs = std::filesystem;

namespace xnorforge {

namespace {

constexpr const char* kToolVersion = "1.0.0";

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::ios_base::failure("cannot open \"" + path.string() + "\"");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string crc_hex(std::uint32_t crc) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", crc);
  return buf;
}

/// Every report embeds one of these: command, resolved options, digests of
/// the files actually read, tool version, and the seed when one applies.
class Manifest {
public:
  Manifest(std::string command, std::optional<std::uint64_t> seed)
      : command_(std::move(command)), seed_(seed) {}

  void option(const std::string& key, nlohmann::json value) {
    options_[key] = std::move(value);
  }
  void input(const fs::path& path, std::span<const std::uint8_t> bytes) {
    digests_[path.string()] = crc_hex(crc32_bytes(bytes));
  }
  /// Digest a file by reading it (for inputs consumed by library loaders).
  void input_file(const fs::path& path) {
    input(path, read_file_bytes(path));
  }

  nlohmann::json json() const {
    nlohmann::json inputs = nlohmann::json::array();
    for (const auto& [path, crc] : digests_)
      inputs.push_back({{"path", path}, {"crc32", crc}});
    nlohmann::json j{{"command", command_},
                     {"tool_version", kToolVersion},
                     {"options", options_},
                     {"inputs", std::move(inputs)}};
    if (seed_) j["seed"] = *seed_;
    return j;
  }

private:
  std::string command_;
  std::optional<std::uint64_t> seed_;
  nlohmann::json options_ = nlohmann::json::object();
  std::map<std::string, std::string> digests_;  // path -> crc32, sorted
};

void emit_report(const nlohmann::json& report, const std::string& out_path) {
  const std::string text = report.dump(2);
  if (out_path.empty()) {
    std::cout << text << "\n";
    return;
  }
  std::ofstream out(out_path);
  if (!out)
    throw std::ios_base::failure("cannot write report \"" + out_path + "\"");
  out << text << "\n";
  if (!out)
    throw std::ios_base::failure("short write to \"" + out_path + "\"");
}

int jobs_default() {
  if (const char* env = std::getenv("XNOR_FORGE_JOBS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : int(n);
}

struct ClaheOptions {
  int tiles_x = 8, tiles_y = 8;
  double clip_limit = 2.0;
};

void parse_tiles(const std::string& text, ClaheOptions& opts) {
  const std::size_t x = text.find('x');
  if (x == std::string::npos)
    throw CLI::ValidationError("--clahe-tiles", "expected WxH, e.g. 8x8");
  try {
    opts.tiles_x = std::stoi(text.substr(0, x));
    opts.tiles_y = std::stoi(text.substr(x + 1));
  } catch (const std::exception&) {
    throw CLI::ValidationError("--clahe-tiles", "expected WxH, e.g. 8x8");
  }
  if (opts.tiles_x < 1 || opts.tiles_y < 1)
    throw CLI::ValidationError("--clahe-tiles", "tile counts must be >= 1");
}

RgbImage standardize(const RgbImage& img, const ClaheOptions& opts) {
  RgbImage sized = img;
  if (img.width != 32 || img.height != 32)
    sized = crop_resize(img, RoiBox{0, 0, img.width - 1, img.height - 1}, 32);
  YcbcrPlanes planes = rgb_to_ycbcr(sized);
  planes.y = clahe(planes.y, planes.width, planes.height, opts.tiles_x,
                   opts.tiles_y, opts.clip_limit);
  return ycbcr_to_rgb(planes);
}

// ---------------------------------------------------------------------------
// infer

struct InferArgs {
  std::string spec = "builtin:custom";
  std::string weights;
  std::string image;
  std::string dataset;
  std::string report;
  std::string clahe_tiles = "8x8";
  double clip_limit = 2.0;
  int jobs = jobs_default();
};

int cmd_infer(const InferArgs& args) {
  Manifest manifest("infer", std::nullopt);
  manifest.option("spec", args.spec);
  manifest.option("weights", args.weights);

  const NetworkSpec spec = load_network(args.spec);
  if (args.spec.rfind("builtin:", 0) != 0) manifest.input_file(args.spec);
  manifest.input_file(args.weights);
  const WeightBundle bundle = load_bundle_any(args.weights, spec);

  std::vector<CachedImage> records;
  if (!args.image.empty()) {
    manifest.option("image", args.image);
    const std::vector<std::uint8_t> bytes = read_file_bytes(args.image);
    manifest.input(args.image, bytes);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
      ClaheOptions clahe_opts;
      parse_tiles(args.clahe_tiles, clahe_opts);
      clahe_opts.clip_limit = args.clip_limit;
      manifest.option("clahe_tiles", args.clahe_tiles);
      manifest.option("clip_limit", args.clip_limit);
      records.push_back({-1, standardize(load_ppm(bytes), clahe_opts)});
    } else {
      records = parse_records(bytes);
      if (records.size() != 1)
        throw std::invalid_argument("--image record file must hold exactly "
                                    "one record");
    }
  } else {
    manifest.option("dataset", args.dataset);
    const fs::path records_path = fs::path(args.dataset) / "records.bin";
    const std::vector<std::uint8_t> bytes = read_file_bytes(records_path);
    manifest.input(records_path, bytes);
    records = parse_records(bytes);
    if (records.empty())
      throw std::invalid_argument("dataset contains no records");
  }

  std::vector<InferResult> results(records.size());
  {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    const int jobs = std::max(1, std::min<int>(args.jobs, int(records.size())));
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= records.size()) return;
        try {
          const FeatureMap input =
              normalize(records[i].image, spec.input_range);
          results[i] = infer(spec, bundle, input);
        } catch (...) {
          std::scoped_lock lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          next.store(records.size());
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  nlohmann::json out;
  out["manifest"] = manifest.json();
  out["images"] = records.size();
  nlohmann::json rows = nlohmann::json::array();
  std::size_t labeled = 0, correct = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    nlohmann::json row{{"index", i},
                       {"argmax", results[i].argmax},
                       {"scores", results[i].scores}};
    if (records[i].class_id >= 0) {
      row["label"] = records[i].class_id;
      ++labeled;
      if (records[i].class_id == results[i].argmax) ++correct;
    }
    rows.push_back(std::move(row));
  }
  out["results"] = std::move(rows);
  if (labeled == records.size() && labeled > 0)
    out["accuracy"] = double(correct) / double(labeled);
  emit_report(out, args.report);
  return 0;
}

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessArgs {
  std::string gtsrb_dir;
  std::string out_dir;
  std::string clahe_tiles = "8x8";
  double clip_limit = 2.0;
  std::uint64_t balance = 0;  // 0 = no balancing
  std::uint64_t seed = 0;
  bool keep_going = false;
};

int cmd_preprocess(const PreprocessArgs& args) {
  Manifest manifest("preprocess", args.seed);
  ClaheOptions clahe_opts;
  parse_tiles(args.clahe_tiles, clahe_opts);
  clahe_opts.clip_limit = args.clip_limit;
  manifest.option("gtsrb_dir", args.gtsrb_dir);
  manifest.option("clahe_tiles", args.clahe_tiles);
  manifest.option("clip_limit", args.clip_limit);
  manifest.option("balance", args.balance);

  const fs::path root(args.gtsrb_dir);
  if (!fs::is_directory(root))
    throw std::ios_base::failure("\"" + root.string() +
                                 "\" is not a directory");

  // Flat layout: CSVs next to the images.  Class layout: one subdirectory
  // per class, each with its own GT-*.csv.
  std::vector<fs::path> csvs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_regular_file() && entry.path().extension() == ".csv")
      csvs.push_back(entry.path());
  if (csvs.empty()) {
    for (const auto& entry : fs::directory_iterator(root)) {
      if (!entry.is_directory()) continue;
      for (const auto& sub : fs::directory_iterator(entry.path()))
        if (sub.is_regular_file() && sub.path().extension() == ".csv")
          csvs.push_back(sub.path());
    }
  }
  if (csvs.empty())
    throw std::ios_base::failure("no annotation CSVs under \"" +
                                 root.string() + "\"");
  std::sort(csvs.begin(), csvs.end());

  std::size_t skipped = 0;
  std::map<int, std::vector<RgbImage>> by_class;
  std::vector<CachedImage> records;
  for (const fs::path& csv : csvs) {
    const std::vector<std::uint8_t> csv_bytes = read_file_bytes(csv);
    manifest.input(csv, csv_bytes);
    std::vector<Annotation> rows;
    std::vector<std::string> row_errors;
    rows = parse_annotations(
        std::string_view(reinterpret_cast<const char*>(csv_bytes.data()),
                         csv_bytes.size()),
        args.keep_going ? &row_errors : nullptr);
    for (const std::string& err : row_errors) {
      std::cerr << csv.string() << ": " << err << " (skipped)\n";
      ++skipped;
    }
    for (const Annotation& a : rows) {
      try {
        const fs::path img_path = csv.parent_path() / a.filename;
        const std::vector<std::uint8_t> img_bytes = read_file_bytes(img_path);
        manifest.input(img_path, img_bytes);
        const RgbImage raw = load_ppm(img_bytes);
        if (a.roi.x2 >= raw.width || a.roi.y2 >= raw.height)
          throw std::invalid_argument("ROI outside decoded image");
        RgbImage standardized = standardize(crop_resize(raw, a.roi), clahe_opts);
        by_class[a.class_id].push_back(standardized);
        records.push_back({a.class_id, std::move(standardized)});
      } catch (const std::exception& e) {
        if (!args.keep_going) throw;
        std::cerr << csv.string() << " / " << a.filename << ": " << e.what()
                  << " (skipped)\n";
        ++skipped;
      }
    }
  }
  if (records.empty())
    throw std::invalid_argument("no records produced from \"" +
                                root.string() + "\"");

  nlohmann::json census = nlohmann::json::object();
  for (const auto& [cls, imgs] : by_class)
    census[std::to_string(cls)] = imgs.size();

  if (args.balance > 0) {
    const AugmentRanges ranges;
    for (const auto& [cls, imgs] : by_class) {
      const std::size_t count = imgs.size();
      const std::size_t extra =
          count >= args.balance ? 0 : std::size_t(args.balance) - count;
      for (std::size_t ordinal = 0; ordinal < extra; ++ordinal) {
        // Round-robin over the class's source images; params depend only on
        // (seed, class, ordinal).
        const RgbImage& src = imgs[ordinal % count];
        const AugmentParams params =
            augment_params_for(args.seed, cls, ordinal, ranges);
        records.push_back({cls, augment(src, params)});
      }
    }
  }

  fs::create_directories(args.out_dir);
  std::vector<std::uint8_t> blob;
  for (const CachedImage& rec : records) append_record(blob, rec);
  const fs::path bin_path = fs::path(args.out_dir) / "records.bin";
  {
    std::ofstream out(bin_path, std::ios::binary);
    if (!out)
      throw std::ios_base::failure("cannot write \"" + bin_path.string() +
                                   "\"");
    out.write(reinterpret_cast<const char*>(blob.data()),
              std::streamsize(blob.size()));
    if (!out)
      throw std::ios_base::failure("short write to " + bin_path.string());
  }

  nlohmann::json out;
  out["manifest"] = manifest.json();
  out["records"] = records.size();
  out["skipped"] = skipped;
  out["census"] = std::move(census);
  emit_report(out, (fs::path(args.out_dir) / "manifest.json").string());
  std::cout << records.size() << " records -> " << bin_path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string spec = "builtin:custom";
  double clock_hz = 1.0e8;
  std::string report;
};

int cmd_simulate(const SimulateArgs& args) {
  Manifest manifest("simulate", std::nullopt);
  manifest.option("spec", args.spec);
  manifest.option("clock_hz", args.clock_hz);
  const NetworkSpec spec = load_network(args.spec);
  if (args.spec.rfind("builtin:", 0) != 0) manifest.input_file(args.spec);
  const CycleReport report = simulate(spec, ClockConfig{args.clock_hz});
  nlohmann::json out;
  out["manifest"] = manifest.json();
  out["simulation"] = report;
  emit_report(out, args.report);
  return 0;
}

// ---------------------------------------------------------------------------
// fold

struct FoldArgs {
  std::string spec = "builtin:finn";
  std::string config;
  bool explore_space = false;
  std::int64_t budget = 256;
  std::int64_t total_budget = std::int64_t{1} << 62;
  double clock_hz = 1.0e8;
  std::string report;
};

int cmd_fold(const FoldArgs& args) {
  Manifest manifest("fold", std::nullopt);
  manifest.option("spec", args.spec);
  manifest.option("clock_hz", args.clock_hz);
  const NetworkSpec spec = load_network(args.spec);
  if (args.spec.rfind("builtin:", 0) != 0) manifest.input_file(args.spec);
  nlohmann::json out;
  if (args.explore_space) {
    manifest.option("budget", args.budget);
    manifest.option("total_budget", args.total_budget);
    const std::vector<ExploreEntry> frontier = explore(
        spec, ClockConfig{args.clock_hz},
        ExploreLimits{args.budget, args.total_budget});
    nlohmann::json rows = nlohmann::json::array();
    for (const ExploreEntry& e : frontier)
      rows.push_back({{"config", e.config},
                      {"frame_interval_cycles", e.frame_interval_cycles},
                      {"fps", e.fps},
                      {"cost", e.cost}});
    out["manifest"] = manifest.json();
    out["frontier"] = std::move(rows);
  } else {
    if (args.config.empty())
      throw std::invalid_argument("fold: need --config or --explore");
    manifest.option("config", args.config);
    manifest.input_file(args.config);
    const std::vector<std::uint8_t> bytes = read_file_bytes(args.config);
    FoldingConfig config;
    try {
      config = nlohmann::json::parse(bytes.begin(), bytes.end())
                   .get<FoldingConfig>();
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("folding config \"" + args.config +
                                  "\": " + e.what());
    }
    out["manifest"] = manifest.json();
    out["throughput"] = throughput(spec, config, ClockConfig{args.clock_hz});
  }
  emit_report(out, args.report);
  return 0;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyArgs {
  std::uint64_t seed = 1;
  std::uint64_t cases = 1000;
  bool inject_xnor_fault = false;
};

int cmd_verify(const VerifyArgs& args) {
  // Suite 1: packed dot product against the plain +-1 integer dot product.
  {
    DetRng rng(mix_seed(args.seed, 1));
    for (std::uint64_t i = 0; i < args.cases; ++i) {
      const std::size_t len = 1 + std::size_t(rng.below(4096));
      std::vector<int> a(len), b(len);
      for (std::size_t k = 0; k < len; ++k) a[k] = rng.coin() ? 1 : -1;
      for (std::size_t k = 0; k < len; ++k) b[k] = rng.coin() ? 1 : -1;
      std::int64_t expect = 0;
      for (std::size_t k = 0; k < len; ++k) expect += a[k] * b[k];
      BitVector pa = BitVector::pack(a);
      const BitVector pb = BitVector::pack(b);
      if (args.inject_xnor_fault && i == args.cases / 2)
        pa.set_bit(len / 2, !pa.bit(len / 2));
      const std::int64_t got = xnor_dot(pa, pb);
      if (got != expect) {
        std::cerr << "verify: xnor_dot mismatch at case " << i << " (seed "
                  << args.seed << ", length " << len << "): packed " << got
                  << ", reference " << expect << "\n";
        return 1;
      }
    }
    std::cout << "xnor-dot oracle: " << args.cases << " cases ok\n";
  }

  // Suite 2: threshold activation against the affine + sign route.
  {
    DetRng rng(mix_seed(args.seed, 2));
    const int span = 6400;
    for (std::uint64_t i = 0; i < args.cases; ++i) {
      const double mag = rng.uniform(0.25, 4.0);
      const double a = rng.coin() ? mag : -mag;
      const double b = rng.uniform(-8.0, 8.0);
      const std::int64_t tau = integer_threshold(a, b);
      for (int x = -span; x <= span; ++x) {
        const bool via_affine = sign_bit(affine_eval(a, double(x), b));
        const bool via_tau = a > 0 ? x >= tau : x <= tau;
        if (via_affine != via_tau) {
          std::cerr << "verify: threshold mismatch at case " << i << " (a="
                    << a << ", b=" << b << ", x=" << x << ")\n";
          return 1;
        }
      }
    }
    std::cout << "threshold/affine: " << args.cases << " cases ok\n";
  }

  // Suite 3: hardware-order co-simulation against functional inference.
  {
    const std::uint64_t pairs =
        std::clamp<std::uint64_t>(args.cases / 200, 1, 25);
    const NetworkSpec spec = builtin_custom();
    DetRng rng(mix_seed(args.seed, 3));
    for (std::uint64_t i = 0; i < pairs; ++i) {
      const WeightBundle bundle = random_bundle(spec, rng.bits());
      FeatureMap image(spec.layers.front().in_shape);
      for (double& v : image.data) v = rng.uniform(-1.0, 1.0);
      const InferResult want = infer(spec, bundle, image);
      const CosimResult got = cosimulate(spec, bundle, image);
      if (got.result.scores != want.scores ||
          got.result.argmax != want.argmax) {
        std::cerr << "verify: cosimulation mismatch at pair " << i
                  << " (seed " << args.seed << ")\n";
        return 1;
      }
    }
    std::cout << "cosim/infer: " << pairs << " pairs ok\n";
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Bit-packed XNOR network inference, accelerator cycle models, "
               "and dataset preprocessing"};
  app.set_version_flag("--version", std::string("xnorforge ") + kToolVersion);
  app.require_subcommand(1);

  InferArgs infer_args;
  CLI::App* infer_cmd =
      app.add_subcommand("infer", "Classify images with a weight bundle");
  infer_cmd->add_option("--spec", infer_args.spec,
                        "builtin:custom, builtin:finn, or a spec JSON path");
  infer_cmd->add_option("--weights", infer_args.weights,
                        "weight bundle (.xnb container or JSON import)")
      ->required();
  auto* image_opt = infer_cmd->add_option(
      "--image", infer_args.image, "one PPM or cache record file");
  infer_cmd->add_option("--dataset", infer_args.dataset,
                        "preprocessed dataset directory")
      ->excludes(image_opt);
  infer_cmd->add_option("--report", infer_args.report, "report JSON path");
  infer_cmd->add_option("--clahe-tiles", infer_args.clahe_tiles,
                        "CLAHE tile grid for raw PPM inputs");
  infer_cmd->add_option("--clip-limit", infer_args.clip_limit,
                        "CLAHE clip limit for raw PPM inputs");
  infer_cmd->add_option("--jobs", infer_args.jobs,
                        "worker threads (default: XNOR_FORGE_JOBS or cores)");

  PreprocessArgs pre_args;
  CLI::App* pre_cmd = app.add_subcommand(
      "preprocess", "Build a standardized 32x32 dataset cache");
  pre_cmd->add_option("--gtsrb-dir", pre_args.gtsrb_dir,
                      "dataset root (class subdirectories or flat CSV layout)")
      ->required();
  pre_cmd->add_option("--out", pre_args.out_dir, "cache output directory")
      ->required();
  pre_cmd->add_option("--clahe-tiles", pre_args.clahe_tiles, "tile grid WxH");
  pre_cmd->add_option("--clip-limit", pre_args.clip_limit, "CLAHE clip limit");
  pre_cmd->add_option("--balance", pre_args.balance,
                      "augment every class up to this many examples");
  pre_cmd->add_option("--seed", pre_args.seed, "augmentation seed");
  pre_cmd->add_flag("--keep-going", pre_args.keep_going,
                    "skip malformed rows/files instead of aborting");

  SimulateArgs sim_args;
  CLI::App* sim_cmd = app.add_subcommand(
      "simulate", "Cycle model of the streaming accelerator");
  sim_cmd->add_option("--spec", sim_args.spec, "network spec");
  sim_cmd->add_option("--clock", sim_args.clock_hz, "clock frequency in Hz");
  sim_cmd->add_option("--report", sim_args.report, "report JSON path");

  FoldArgs fold_args;
  CLI::App* fold_cmd = app.add_subcommand(
      "fold", "Folded-dataflow throughput model and design-space exploration");
  fold_cmd->add_option("--spec", fold_args.spec, "network spec");
  auto* config_opt = fold_cmd->add_option("--config", fold_args.config,
                                          "folding config JSON");
  fold_cmd->add_flag("--explore", fold_args.explore_space,
                     "enumerate the Pareto frontier")
      ->excludes(config_opt);
  fold_cmd->add_option("--budget", fold_args.budget,
                       "per-layer PE*SIMD budget for --explore");
  fold_cmd->add_option("--total-budget", fold_args.total_budget,
                       "total PE*SIMD budget for --explore");
  fold_cmd->add_option("--clock", fold_args.clock_hz, "clock frequency in Hz");
  fold_cmd->add_option("--report", fold_args.report, "report JSON path");

  VerifyArgs verify_args;
  CLI::App* verify_cmd = app.add_subcommand(
      "verify", "Run the oracle equivalence suites");
  verify_cmd->add_option("--seed", verify_args.seed, "base seed");
  verify_cmd->add_option("--cases", verify_args.cases, "cases per suite");
  verify_cmd
      ->add_flag("--inject-xnor-fault", verify_args.inject_xnor_fault,
                 "self-test hook: corrupt one packed bit")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (infer_cmd->parsed()) {
      if (infer_args.image.empty() == infer_args.dataset.empty())
        throw std::invalid_argument("infer: need exactly one of --image or "
                                    "--dataset");
      return cmd_infer(infer_args);
    }
    if (pre_cmd->parsed()) return cmd_preprocess(pre_args);
    if (sim_cmd->parsed()) return cmd_simulate(sim_args);
    if (fold_cmd->parsed()) return cmd_fold(fold_args);
    if (verify_cmd->parsed()) return cmd_verify(verify_args);
    throw std::logic_error("no subcommand dispatched");
  } catch (const std::ios_base::failure& e) {
    std::cerr << "xnorforge: i/o error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "xnorforge: i/o error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "xnorforge: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace xnorforge
