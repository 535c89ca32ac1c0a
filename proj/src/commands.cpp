#include "rwkvir/commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rwkvir/checkpoint.hpp"
#include "rwkvir/curation.hpp"
#include "rwkvir/error.hpp"
#include "rwkvir/glcm.hpp"
#include "rwkvir/train.hpp"

namespace rwkvir::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const InfeasibleSelectionError*>(&e) != nullptr) return kInfeasible;
  if (dynamic_cast<const EmptyInputError*>(&e) != nullptr) return kEmptyInput;
  if (dynamic_cast<const IoError*>(&e) != nullptr) return kEmptyInput;
  if (dynamic_cast<const NumericError*>(&e) != nullptr) return kNumeric;
  return kUsage;
}

std::string apply_override(const std::string& json_text, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json doc = json::parse(json_text);
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
  return doc.dump();
}

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot open " + p.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw IoError("cannot write " + p.string());
  os << text;
}

json parse_object(const std::string& text, const std::string& what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(what + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(what + ": expected a JSON object");
  return j;
}

/// Base document, then the --config file merged on top, then each --set.
json layered_config(json base, const std::string& config_file, const std::vector<std::string>& sets,
                    const std::vector<std::string>& sections) {
  if (!config_file.empty()) {
    const json file = parse_object(read_text(config_file), config_file);
    if (!sections.empty()) {
      for (const auto& [k, _] : file.items()) {
        if (std::find(sections.begin(), sections.end(), k) == sections.end()) {
          std::string list;
          for (const auto& s : sections) list += (list.empty() ? "" : ", ") + s;
          throw ConfigError(config_file + ": unknown section '" + k + "'; valid sections: " + list);
        }
      }
    }
    base.merge_patch(file);
  }
  std::string text = base.dump();
  for (const auto& s : sets) text = apply_override(text, s);
  json out = json::parse(text);
  if (!sections.empty()) {
    for (const auto& [k, _] : out.items()) {
      if (std::find(sections.begin(), sections.end(), k) == sections.end()) {
        throw ConfigError("unknown config section '" + k + "'");
      }
    }
  }
  return out;
}

struct TrainSetup {
  model::ModelConfig model;
  train::TrainConfig train;
};

TrainSetup train_setup(const std::string& preset, bool desk, const std::string& config_file,
                       const std::vector<std::string>& sets, const std::optional<std::uint64_t>& seed) {
  json base;
  base["model"] = json::parse(model::preset(preset).to_json());
  base["train"] = json::parse(train::train_preset(preset, desk).to_json());
  const json doc = layered_config(base, config_file, sets, {"model", "train"});
  TrainSetup s{model::ModelConfig::from_json(doc.at("model").dump()),
               train::TrainConfig::from_json(doc.at("train").dump())};
  if (seed) s.train.seed = *seed;
  s.model.validate();
  s.train.validate();
  return s;
}

void add_config_options(CLI::App* cmd, std::string& config_file, std::vector<std::string>& sets) {
  cmd->add_option("--config", config_file, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", sets, "Dotted override key=value (repeatable)");
}

json record_row(const ImageRecord& r) {
  return {{"path", r.path},
          {"width", r.width},
          {"height", r.height},
          {"ent", r.report.ent},
          {"ene", r.report.ene},
          {"diss", r.report.diss},
          {"complexity", r.report.complexity},
          {"bpp", r.report.bpp},
          {"blur_score", r.report.blur_score},
          {"flat_fraction", r.report.flat_fraction}};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"RWKV image restoration toolkit"};
  app.name(args.empty() ? "rwkvir" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);

  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string preset = "toy";
  bool desk = false;
  std::string manifest_path;
  std::string out_path;

  // complexity
  auto* c_cmd = app.add_subcommand("complexity", "GLCM complexity report (JSONL) for PNG files or directories");
  std::vector<std::string> c_paths;
  std::string c_threshold;
  int c_levels = 64;
  c_cmd->add_option("paths", c_paths, "PNG files or directories")->required();
  c_cmd->add_option("--threshold", c_threshold, "'median' or a value; prints side counts to stderr");
  c_cmd->add_option("--levels", c_levels, "Gray levels")->check(CLI::Range(2, 256));
  c_cmd->add_option("--out", out_path, "Write JSONL here instead of stdout");

  // curate
  auto* cu_cmd = app.add_subcommand("curate", "Select, partition and degrade a dataset");
  std::string cu_src;
  std::optional<std::size_t> cu_n;
  cu_cmd->add_option("src_dir", cu_src, "Source image directory")->required()->check(CLI::ExistingDirectory);
  cu_cmd->add_option("--out", out_path, "Output directory")->required();
  cu_cmd->add_option("--n", cu_n, "Number of images to select (even)");
  cu_cmd->add_option("--seed", seed, "Selection seed");
  add_config_options(cu_cmd, config_file, sets);

  // train
  auto* t_cmd = app.add_subcommand("train", "Train a model on a curated manifest");
  t_cmd->add_option("--manifest", manifest_path, "manifest.json")->required()->check(CLI::ExistingFile);
  t_cmd->add_option("--out", out_path, "Output directory for log.jsonl and model.ckpt")->required();
  t_cmd->add_option("--preset", preset, "classic-sr, light-sr, denoise or toy");
  t_cmd->add_flag("--desk-scale", desk, "Reduce benchmark iteration counts");
  t_cmd->add_option("--seed", seed, "Training seed");
  add_config_options(t_cmd, config_file, sets);

  // eval
  auto* e_cmd = app.add_subcommand("eval", "PSNR/SSIM table with a baseline row");
  std::string e_ckpt;
  std::vector<std::string> e_parts{"val", "test"};
  std::size_t e_scale = 0;
  double e_sigma = 0;
  e_cmd->add_option("--manifest", manifest_path, "manifest.json")->required()->check(CLI::ExistingFile);
  e_cmd->add_option("--checkpoint", e_ckpt, "Model checkpoint (omit for the baseline only)");
  e_cmd->add_option("--partitions", e_parts, "Partitions to evaluate")->delimiter(',');
  e_cmd->add_option("--preset", preset, "Task and scale source when no checkpoint is given");
  e_cmd->add_option("--scale", e_scale, "SR scale override");
  e_cmd->add_option("--sigma", e_sigma, "Denoising noise level (0 takes the first in the manifest)");
  e_cmd->add_option("--out", out_path, "Directory for eval.json and eval.txt");

  // ablate
  auto* a_cmd = app.add_subcommand("ablate", "Train and compare variants along one axis");
  std::string a_axis;
  a_cmd->add_option("--axis", a_axis, "shift_position, wkv_setting, shift_method or ffn")->required();
  a_cmd->add_option("--manifest", manifest_path, "manifest.json")->required()->check(CLI::ExistingFile);
  a_cmd->add_option("--preset", preset, "Base preset");
  a_cmd->add_flag("--desk-scale", desk, "Reduce benchmark iteration counts");
  a_cmd->add_option("--seed", seed, "Training seed");
  a_cmd->add_option("--out", out_path, "Directory for the CSV and text tables");
  add_config_options(a_cmd, config_file, sets);

  // correlate
  auto* r_cmd = app.add_subcommand("correlate", "Pearson correlation of PSNR with complexity and bpp");
  std::string r_dir, r_ckpt;
  std::vector<std::uint64_t> r_synth;
  std::size_t r_scale = 2;
  r_cmd->add_option("--manifest", manifest_path, "Use every record of a manifest")->check(CLI::ExistingFile);
  r_cmd->add_option("--dir", r_dir, "Use every PNG below a directory")->check(CLI::ExistingDirectory);
  r_cmd->add_option("--synth", r_synth, "Synthetic corpus: SEED N")->expected(2);
  r_cmd->add_option("--scale", r_scale, "Downscaling factor")->check(CLI::Range(1, 8));
  r_cmd->add_option("--checkpoint", r_ckpt, "Restore with a model instead of bicubic");
  r_cmd->add_option("--out", out_path, "Write the JSON result here");

  // bench-kernel
  auto* b_cmd = app.add_subcommand("bench-kernel", "Time the Bi-WKV scan against the quadratic reference");
  std::vector<std::size_t> b_lengths{256, 512, 1024, 2048, 4096};
  std::size_t b_channels = 32, b_repeats = 5;
  bool b_oracle = false;
  b_cmd->add_option("--lengths", b_lengths, "Sequence lengths")->delimiter(',');
  b_cmd->add_option("--channels", b_channels, "Channels");
  b_cmd->add_option("--repeats", b_repeats, "Runs per length (median reported)");
  b_cmd->add_flag("--oracle", b_oracle, "Also time the quadratic reference");
  b_cmd->add_option("--out", out_path, "Write CSV here instead of stdout");

  // synth
  auto* s_cmd = app.add_subcommand("synth", "Write the deterministic synthetic PNG corpus");
  std::uint64_t s_seed = 0;
  std::size_t s_n = 50, s_size = 96;
  s_cmd->add_option("--seed", s_seed, "Corpus seed");
  s_cmd->add_option("--n", s_n, "Number of images");
  s_cmd->add_option("--size", s_size, "Image side")->check(CLI::Range(8, 4096));
  s_cmd->add_option("--out", out_path, "Output directory")->required();

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (c_cmd->parsed()) {
      GlcmConfig g;
      g.levels = c_levels;
      std::vector<ImageRecord> records;
      for (const auto& p : c_paths) {
        if (fs::is_directory(p)) {
          auto scan = scan_dir(p, g);
          for (auto& r : scan.records) {
            r.path = (fs::path(p) / r.path).generic_string();
            records.push_back(std::move(r));
          }
          for (const auto& s : scan.skipped) err << "skipped (undecodable): " << s << "\n";
        } else {
          try {
            const Image img = read_png(p);
            ImageRecord r;
            r.path = p;
            r.width = img.width;
            r.height = img.height;
            r.report = analyze_image(img, g, 20.0);
            records.push_back(std::move(r));
          } catch (const IoError& e) {
            err << "skipped (undecodable): " << p << ": " << e.what() << "\n";
          }
        }
      }
      if (records.empty()) throw EmptyInputError("no decodable images");
      std::ostringstream rows;
      for (const auto& r : records) rows << record_row(r).dump() << "\n";
      if (out_path.empty()) {
        out << rows.str();
      } else {
        write_text(out_path, rows.str());
      }
      if (!c_threshold.empty()) {
        double thr = 0;
        if (c_threshold == "median") {
          thr = median_complexity(records);
        } else {
          try {
            thr = std::stod(c_threshold);
          } catch (const std::exception&) {
            throw ConfigError("--threshold must be 'median' or a number");
          }
        }
        std::size_t below = 0;
        for (const auto& r : records) below += r.report.complexity < thr ? 1 : 0;
        err << "threshold " << thr << ": below " << below << ", at or above " << records.size() - below << "\n";
      }
      return kOk;
    }

    if (cu_cmd->parsed()) {
      const json doc = layered_config(json::parse(CurateConfig{}.to_json()), config_file, sets, {});
      CurateConfig cfg = CurateConfig::from_json(doc.dump());
      if (cu_n) cfg.n = *cu_n;
      if (seed) cfg.seed = *seed;
      try {
        const auto res = curate(cu_src, out_path, cfg);
        for (const auto& s : res.skipped) err << "skipped (undecodable): " << s << "\n";
        const auto& m = res.manifest;
        out << "selected " << m.records.size() << " (train " << m.partitions.train.size() << ", val "
            << m.partitions.val.size() << ", test " << m.partitions.test.size() << "), threshold " << m.threshold
            << "\n"
            << "manifest: " << res.manifest_path.string() << "\n";
      } catch (const InfeasibleSelectionError& e) {
        err << "error: " << e.what() << "\n"
            << "side counts: below " << e.below() << ", at or above " << e.above() << "\n";
        return kInfeasible;
      }
      return kOk;
    }

    if (t_cmd->parsed()) {
      const auto s = train_setup(preset, desk, config_file, sets, seed);
      const auto manifest = DatasetManifest::load(manifest_path);
      err << "training " << preset << ": " << s.train.total_iters << " iterations, batch " << s.train.batch_size
          << "\n";
      const auto res = train::train(s.train, s.model, manifest, out_path, [&](const train::LogRow& row) {
        err << row.to_json() << "\n";
      });
      out << "final loss " << res.final_loss << ", validation PSNR " << res.val_psnr << " dB\n"
          << "checkpoint: " << res.checkpoint.string() << "\n";
      return kOk;
    }

    if (e_cmd->parsed()) {
      const auto manifest = DatasetManifest::load(manifest_path);
      std::unique_ptr<model::Model<float>> m;
      model::ModelConfig mc = model::preset(preset);
      if (!e_ckpt.empty()) {
        m = checkpoint::load_model<float>(e_ckpt);
        mc = m->config();
      }
      const std::size_t scale = e_scale != 0 ? e_scale : mc.scale;
      const auto table = train::evaluate(m.get(), manifest, e_parts, mc.task, scale, e_sigma);
      out << table.to_text();
      if (!out_path.empty()) {
        write_text(fs::path(out_path) / "eval.json", table.to_json());
        write_text(fs::path(out_path) / "eval.txt", table.to_text());
      }
      return kOk;
    }

    if (a_cmd->parsed()) {
      const auto axis = train::ablation_axis_from_string(a_axis);
      const auto s = train_setup(preset, desk, config_file, sets, seed);
      const auto manifest = DatasetManifest::load(manifest_path);
      const auto table = train::ablation_run(axis, s.model, s.train, manifest,
                                             [&](const std::string& label) { err << "variant " << label << "\n"; });
      out << table.to_text();
      if (!out_path.empty()) {
        write_text(fs::path(out_path) / ("ablation_" + a_axis + ".csv"), table.to_csv());
        write_text(fs::path(out_path) / ("ablation_" + a_axis + ".txt"), table.to_text());
      }
      return kOk;
    }

    if (r_cmd->parsed()) {
      const int sources = (manifest_path.empty() ? 0 : 1) + (r_dir.empty() ? 0 : 1) + (r_synth.empty() ? 0 : 1);
      if (sources != 1) throw ConfigError("correlate needs exactly one of --manifest, --dir, --synth");
      std::unique_ptr<model::Model<float>> m;
      if (!r_ckpt.empty()) m = checkpoint::load_model<float>(r_ckpt);
      train::CorrelationResult res;
      if (!manifest_path.empty()) {
        res = train::correlate(DatasetManifest::load(manifest_path), r_scale, m.get());
      } else {
        std::vector<std::pair<std::string, Image>> images;
        if (!r_dir.empty()) {
          std::vector<fs::path> files;
          for (const auto& e : fs::recursive_directory_iterator(r_dir)) {
            if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
          }
          std::sort(files.begin(), files.end());
          for (const auto& f : files) images.emplace_back(f.generic_string(), read_png(f));
        } else {
          auto imgs = synth_corpus(r_synth[0], r_synth[1]);
          for (std::size_t i = 0; i < imgs.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "synth_%04zu", i);
            images.emplace_back(name, std::move(imgs[i]));
          }
        }
        res = train::correlate(images, r_scale, m.get());
      }
      out << "images " << res.rows.size() << " (used " << res.used << "), pearson_complexity "
          << res.pearson_complexity << ", pearson_bpp " << res.pearson_bpp << "\n";
      if (!out_path.empty()) write_text(out_path, res.to_json());
      return kOk;
    }

    if (s_cmd->parsed()) {
      const auto files = write_synth_corpus(out_path, s_seed, s_n, s_size);
      out << "wrote " << files.size() << " images to " << out_path << "\n";
      return kOk;
    }

    if (b_cmd->parsed()) {
      const auto rows = train::bench_kernel(b_lengths, b_channels, b_repeats, b_oracle);
      const auto csv = train::kernel_timings_csv(rows);
      if (out_path.empty()) {
        out << csv;
      } else {
        write_text(out_path, csv);
      }
      return kOk;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace rwkvir::cli
