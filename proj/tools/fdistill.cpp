// Command-line front end: dataset preparation, the three training steps,
// evaluation, ablation sweeps and attention overlays.

#include "fd/attention.hpp"
#include "fd/trainer.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace fd;

namespace {

FDConfig config_or_preset(const std::string& file, const std::string& preset) {
  if (!file.empty()) return load_config(file);
  if (preset == "desk") return desk_config();
  return canonical_config(preset == "canonical" ? "R50a" : preset);
}

void add_config(CLI::App* cmd, std::string& file, std::string& preset) {
  cmd->add_option("--config", file, "experiment config (JSON)");
  cmd->add_option("--preset", preset, "built-in config when --config is absent: desk, canonical or a roster name")
      ->capture_default_str();
}

PipelineOptions options(bool quiet) {
  PipelineOptions o;
  o.workers = worker_count();
  o.progress = quiet ? nullptr : &std::cerr;
  return o;
}

// Original | mask | overlay, side by side.
Image attention_panel(const Image& original, const AttentionMask& a) {
  Image panel(original.height, 3 * original.width);
  Image small(a.mask.rows(), a.mask.cols(), 1);
  for (Index y = 0; y < a.mask.rows(); ++y)
    for (Index x = 0; x < a.mask.cols(); ++x) small(0, y, x) = a.mask(y, x);
  const Image mask = resize(small, original.height, original.width);
  for (Index y = 0; y < original.height; ++y)
    for (Index x = 0; x < original.width; ++x)
      for (Index c = 0; c < 3; ++c) {
        panel(c, y, x) = original(c, y, x);
        panel(c, y, x + original.width) = mask(0, y, x);
        panel(c, y, x + 2 * original.width) = a.overlay(c, y, x);
      }
  return panel;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Factorized distillation for person re-identification"};
  app.require_subcommand(1);
  std::string config_file, preset = "desk", data, out;
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress progress output");

  auto* views = app.add_subcommand("views", "print the view registry");
  add_config(views, config_file, preset);

  SyntheticSpec synth_spec;
  std::string synth_file;
  auto* synth = app.add_subcommand("synth", "generate the synthetic dataset");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--spec", synth_file, "generator spec (JSON)");
  synth->add_option("--seed", synth_spec.seed)->capture_default_str();
  synth->add_option("--identities", synth_spec.n_identities)->capture_default_str();
  synth->add_option("--test-identities", synth_spec.test_identities)->capture_default_str();
  synth->add_option("--images", synth_spec.images_per_identity, "images per identity")->capture_default_str();
  synth->add_option("--occlusion", synth_spec.occlusion_rate)->capture_default_str();

  std::string scheme = "market1501";
  auto* ingest_cmd = app.add_subcommand("ingest", "scan a Market-1501-style dataset and write its manifest");
  ingest_cmd->add_option("--root", data, "dataset root")->required();
  ingest_cmd->add_option("--scheme", scheme, "market1501 or dukemtmc")->capture_default_str();

  auto* teachers = app.add_subcommand("train-teachers", "Step 1: per-view teachers and the initial student");
  add_config(teachers, config_file, preset);
  teachers->add_option("--data", data, "dataset root")->required();
  teachers->add_option("--out", out, "checkpoint directory")->required();

  std::string teachers_dir;
  auto* build_sr = app.add_subcommand("build-sr", "Step 2: supervisory-representation cache");
  add_config(build_sr, config_file, preset);
  build_sr->add_option("--data", data, "dataset root")->required();
  build_sr->add_option("--teachers", teachers_dir, "Step 1 checkpoint directory")->required();
  build_sr->add_option("--out", out, "cache directory")->required();

  std::string cache_dir;
  auto* student = app.add_subcommand("train-student", "Step 3: distil the final student");
  add_config(student, config_file, preset);
  student->add_option("--data", data, "dataset root")->required();
  student->add_option("--teachers", teachers_dir, "Step 1 checkpoint directory")->required();
  student->add_option("--cache", cache_dir, "SR cache directory")->required();
  student->add_option("--out", out, "output directory")->required();

  auto* run_all = app.add_subcommand("run-all", "Steps 1-3 and evaluation, resumable");
  add_config(run_all, config_file, preset);
  run_all->add_option("--data", data, "dataset root")->required();
  run_all->add_option("--out", out, "experiment directory")->required();

  std::string checkpoint, protocol = "standard", dump;
  auto* eval = app.add_subcommand("evaluate", "rank-1 / mAP of a checkpoint");
  add_config(eval, config_file, preset);
  eval->add_option("--data", data, "dataset root")->required();
  eval->add_option("--checkpoint", checkpoint, "teacher, initial or final student checkpoint")->required();
  eval->add_option("--protocol", protocol, "standard or cross_dataset")->capture_default_str();
  eval->add_option("--out", out, "write report.json / report.txt here");
  eval->add_option("--dump-features", dump, "write query and gallery features under this prefix");

  std::string sweep_file;
  auto* sweep = app.add_subcommand("sweep", "run an ablation sweep");
  sweep->add_option("--spec", sweep_file, "sweep spec (JSON)")->required();
  sweep->add_option("--data", data, "dataset root")->required();
  sweep->add_option("--out", out, "sweep directory")->required();

  int count = 8;
  std::string split = "query";
  auto* attention = app.add_subcommand("attention", "write attention overlays of a checkpoint");
  add_config(attention, config_file, preset);
  attention->add_option("--data", data, "dataset root")->required();
  attention->add_option("--checkpoint", checkpoint)->required();
  attention->add_option("--out", out, "image directory")->required();
  attention->add_option("--count", count, "images to render")->capture_default_str();
  attention->add_option("--split", split, "train, query or gallery")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*views) {
      std::cout << views_to_json(config_or_preset(config_file, preset).views).dump(2) << '\n';
    } else if (*synth) {
      SyntheticSpec s = synth_spec;
      if (!synth_file.empty()) {
        std::ifstream in(synth_file);
        s = synthetic_spec_from_json(nlohmann::json::parse(in));
      }
      const auto m = generate_synthetic(s, out);
      std::cout << "wrote " << m.train.size() + m.query.size() + m.gallery.size() << " images to " << out
                << "\nfingerprint " << m.fingerprint << '\n';
    } else if (*ingest_cmd) {
      const auto m = ingest(data, *make_naming_scheme(scheme));
      save_manifest(m, fs::path(data) / kManifestName);
      std::cout << "train " << m.train.size() << " (" << m.num_classes << " identities), query " << m.query.size()
                << ", gallery " << m.gallery.size() << "\nfingerprint " << m.fingerprint << '\n';
      if (!m.rejects.empty()) {
        std::cout << m.rejects.size() << " unparsable file names:\n";
        for (const auto& r : m.rejects) std::cout << "  " << r << '\n';
      }
    } else if (*teachers) {
      const auto c = config_or_preset(config_file, preset);
      train_teachers(c, load_training_data(data), out, options(quiet));
    } else if (*build_sr) {
      const auto c = config_or_preset(config_file, preset);
      const auto st = build_sr_cache(c, load_training_data(data), teachers_dir, out, options(quiet));
      std::cout << "written " << st.written << ", already valid " << st.valid << ", repaired " << st.repaired
                << "\ncache hash " << cache_hash(out) << '\n';
    } else if (*student) {
      const auto c = config_or_preset(config_file, preset);
      const auto d = load_training_data(data);
      const auto cache = SRCache::open(cache_dir, d.manifest.fingerprint);
      const auto init = read_checkpoint(fs::path(teachers_dir) / "initial_student.ckpt",
                                        step1_hash(c, d.manifest.fingerprint));
      fs::create_directories(out);
      TrainLog log(fs::path(out) / "train_log.jsonl", quiet ? nullptr : &std::cerr);
      train_student_fd(c, d, cache, cache_dir, init, config_hash(c, d.manifest.fingerprint),
                       fs::path(out) / "final_student.ckpt", &log, worker_count());
    } else if (*run_all) {
      const auto c = config_or_preset(config_file, preset);
      const auto r = run_pipeline(c, load_training_data(data), out, options(quiet));
      std::cout << report_text(r.evaluation, "final student");
    } else if (*eval) {
      const auto c = config_or_preset(config_file, preset);
      const auto d = load_training_data(data);
      auto model = view_model_from_checkpoint(read_checkpoint(checkpoint));
      const EmbedFn embed = embed_fn(*model, c.normalization);
      const ViewSpec& hol = c.views.at(static_cast<std::size_t>(view_index(c.views, "Holistic")));
      const auto q = extract_index(embed, d.query, d.manifest.query, hol);
      const auto g = extract_index(embed, d.gallery, d.manifest.gallery, hol);
      const auto r = evaluate(q, g, protocol_from_string(protocol));
      std::cout << report_text(r, checkpoint);
      if (!out.empty()) {
        fs::create_directories(out);
        std::ofstream(fs::path(out) / "report.json") << report_to_json(r).dump(2) << '\n';
        std::ofstream(fs::path(out) / "report.txt") << report_text(r, checkpoint);
      }
      if (!dump.empty()) {
        dump_features(dump + "_query.bin", q, fs::path(checkpoint).stem().string());
        dump_features(dump + "_gallery.bin", g, fs::path(checkpoint).stem().string());
      }
    } else if (*sweep) {
      std::ifstream in(sweep_file);
      if (!in) throw ConfigError("cannot read " + sweep_file);
      const auto spec = sweep_from_json(nlohmann::json::parse(in, nullptr, true, true));
      const auto report = run_sweep(spec, load_training_data(data), out, options(quiet));
      std::cout << report.table();
    } else if (*attention) {
      const auto c = config_or_preset(config_file, preset);
      const auto d = load_training_data(data);
      auto model = view_model_from_checkpoint(read_checkpoint(checkpoint));
      const ViewSpec& hol = c.views.at(static_cast<std::size_t>(view_index(c.views, "Holistic")));
      const Split s = split == "train" ? Split::train : split == "gallery" ? Split::gallery : Split::query;
      const auto& records = d.manifest.split(s);
      const auto& images = s == Split::train ? d.train : s == Split::gallery ? d.gallery : d.query;
      fs::create_directories(out);
      const int n = std::min<int>(count, static_cast<int>(images.size()));
      for (int i = 0; i < n; ++i) {
        const Image crop = crop_view(images[static_cast<std::size_t>(i)], hol);
        const auto f = model->feature_maps(to_batch(std::span<const Image>(&crop, 1), c.normalization));
        const auto a = extract_attention_mask(f, crop);
        const fs::path file = fs::path(out) / (fs::path(records[static_cast<std::size_t>(i)].path).stem().string() +
                                               "_attention.png");
        save_image(attention_panel(crop, a), file);
        std::cout << file.string() << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
