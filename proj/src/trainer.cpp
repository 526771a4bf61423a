#include "fd/trainer.hpp"

#include "fd/hashing.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <map>
#include <random>
#include <sstream>
#include <thread>

namespace fd {

namespace fs = std::filesystem;

int worker_count() {
  if (const char* env = std::getenv("FD_WORKERS")) {
    try {
      return std::max(1, std::stoi(env));
    } catch (const std::exception&) {
      throw ConfigError(std::string("FD_WORKERS is not an integer: ") + env);
    }
  }
  return 1;
}

void parallel_for(Index n, int workers, const std::function<void(Index)>& body) {
  if (workers <= 1 || n <= 1) {
    for (Index i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (Index i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < std::min<Index>(workers, n); ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<int> TrainingData::labels() const {
  std::vector<int> out;
  out.reserve(manifest.train.size());
  for (const auto& r : manifest.train) out.push_back(r.label);
  return out;
}

TrainingData load_training_data(const fs::path& root, const std::string& scheme) {
  TrainingData d;
  d.root = root;
  const fs::path manifest_file = root / kManifestName;
  if (fs::exists(manifest_file)) {
    d.manifest = load_manifest(manifest_file);
    if (dataset_fingerprint(root, d.manifest) != d.manifest.fingerprint)
      throw DatasetError("files under " + root.string() + " no longer match " + manifest_file.string());
  } else {
    d.manifest = ingest(root, *make_naming_scheme(scheme));
    save_manifest(d.manifest, manifest_file);
  }
  for (const auto& r : d.manifest.train)
    if (r.label < 0) throw DatasetError("training sample " + r.path + " has no class label");
  d.train = load_split(root, d.manifest.train);
  d.query = load_split(root, d.manifest.query);
  d.gallery = load_split(root, d.manifest.gallery);
  return d;
}

TrainLog::TrainLog(const fs::path& file, std::ostream* echo)
    : out_(std::make_shared<std::ofstream>(file, std::ios::app)), echo_(echo) {
  if (!*out_) throw ConfigError("cannot open log " + file.string());
}

void TrainLog::write(const nlohmann::json& record) {
  static std::mutex mutex;
  std::lock_guard lock(mutex);
  const std::string line = record.dump();
  if (out_) *out_ << line << '\n' << std::flush;
  if (echo_) *echo_ << line << '\n' << std::flush;
}

ViewModelSpec teacher_model_spec(const FDConfig& c, const ViewSpec& view, Index num_classes) {
  return {c.teacher.backbone, view.holistic() ? c.teacher.holistic_dim : c.teacher.partial_dim, num_classes,
          c.teacher.pool_m};
}

ViewModelSpec initial_student_spec(const FDConfig& c, Index num_classes) {
  return {c.student.backbone, c.student.embedding_dim, num_classes, c.student.pool_m};
}

std::string teacher_id(const ViewSpec& view) {
  std::string id = view.name;
  std::transform(id.begin(), id.end(), id.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return id;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

nlohmann::json model_spec_to_json(const ViewModelSpec& s) {
  return {{"backbone", backbone_to_json(s.backbone)}, {"embedding_dim", s.embedding_dim},
          {"num_classes", s.num_classes}, {"pool_m", s.pool_m}};
}

ViewModelSpec model_spec_from_json(const nlohmann::json& j) {
  return {backbone_from_json(j.at("backbone")), j.at("embedding_dim").get<Index>(),
          j.at("num_classes").get<Index>(), j.at("pool_m").get<Index>()};
}

const ViewSpec& holistic_view(const FDConfig& c) {
  for (const auto& v : c.views)
    if (v.holistic()) return v;
  throw ConfigError("config has no holistic view");
}

// Mini-batches of a seeded permutation; a trailing batch of one sample is
// dropped because batch normalization needs two.
std::vector<std::vector<Index>> epoch_batches(Index n, Index batch, std::uint64_t seed) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<Index>> out;
  for (Index b = 0; b < n; b += batch) {
    const Index e = std::min(n, b + batch);
    if (e - b < 2) break;
    out.emplace_back(perm.begin() + b, perm.begin() + e);
  }
  return out;
}

struct PreparedBatch {
  std::vector<Image> crops;
  std::vector<EraseRecord> erases;
  std::vector<Index> heights, widths;
};

PreparedBatch prepare(const FDConfig& c, const std::vector<Image>& images, const std::vector<Index>& ids,
                      const ViewSpec& view, AugmentStage stage, const std::string& tag, int epoch, int workers) {
  PreparedBatch b;
  const std::size_t n = ids.size();
  b.crops.resize(n);
  b.erases.resize(n);
  b.heights.resize(n);
  b.widths.resize(n);
  parallel_for(static_cast<Index>(n), workers, [&](Index k) {
    const auto i = static_cast<std::size_t>(k);
    const Image& src = images[static_cast<std::size_t>(ids[i])];
    const auto seed = derive_seed(c.seed, tag + "/" + std::to_string(epoch) + "/" + std::to_string(ids[i]));
    Augmented a = augment(src, stage, seed, c.augment);
    b.crops[i] = crop_view(a.image, view);
    b.erases[i] = a.erase;
    b.heights[i] = src.height;
    b.widths[i] = src.width;
  });
  return b;
}

void require_finite(double value, const ParamList<float>& params, const std::string& what, int epoch,
                    const fs::path& last) {
  if (std::isfinite(value) && grads_finite(params)) return;
  throw TrainingError(what + " diverged (non-finite loss) in epoch " + std::to_string(epoch) +
                      "; last finite checkpoint: " + (fs::exists(last) ? last.string() : "none"));
}

fs::path snapshot_path(const fs::path& p) { return p.string() + ".last"; }

}  // namespace

TrainResult train_view_model(const FDConfig& c, const ViewTrainingJob& job, const TrainingData& data,
                             TrainLog* log, int workers) {
  const std::string tag = job.kind + "/" + job.view.name;
  ViewModel<float> model(job.model, derive_seed(c.seed, "model/" + tag));
  const ParamList<float> params = model.params();
  const std::vector<int> labels = data.labels();
  const Index n = static_cast<Index>(data.train.size());
  const fs::path last = snapshot_path(job.checkpoint);
  if (!job.checkpoint.parent_path().empty()) fs::create_directories(job.checkpoint.parent_path());

  CheckpointInfo info;
  info.config_hash = job.config_hash;
  info.kind = job.kind;
  info.extra = {{"model", model_spec_to_json(job.model)}, {"view", views_to_json({job.view})[0]},
                {"stage", to_string(job.stage)}};

  TrainResult result;
  for (int epoch = 0; epoch < c.teacher_schedule.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const double lr = lr_at(c.teacher_schedule, epoch);
    double loss_sum = 0.0;
    Index seen = 0;
    for (const auto& ids : epoch_batches(n, c.batch_size, derive_seed(c.seed, tag + "/order/" + std::to_string(epoch)))) {
      const PreparedBatch b = prepare(c, data.train, ids, job.view, job.stage, tag, epoch, workers);
      std::vector<int> y;
      for (Index i : ids) y.push_back(labels[static_cast<std::size_t>(i)]);
      zero_grad(params);
      const auto out = model.forward(to_batch(b.crops, c.normalization), true);
      const auto loss = cls_loss<float>(out.z, y);
      model.backward(loss.grad);
      require_finite(loss.value, params, tag, epoch, last);
      sgd_step(params, lr, c.sgd);
      loss_sum += static_cast<double>(loss.value);
      seen += static_cast<Index>(ids.size());
    }
    const double epoch_loss = loss_sum / static_cast<double>(std::max<Index>(seen, 1));
    result.epoch_loss.push_back(epoch_loss);
    info.epoch = epoch + 1;
    info.metrics = {{"loss", epoch_loss}, {"lr", lr}};
    write_checkpoint(last, make_checkpoint(info, params));
    if (log)
      log->write({{"event", "epoch"}, {"phase", job.kind}, {"view", job.view.name}, {"epoch", epoch},
                  {"lr", lr}, {"loss", epoch_loss}, {"seconds", seconds_since(t0)}});
  }
  info.epoch = c.teacher_schedule.epochs;
  result.checkpoint = make_checkpoint(info, params);
  write_checkpoint(job.checkpoint, result.checkpoint);
  fs::remove(last);
  return result;
}

std::unique_ptr<ViewModel<float>> view_model_from_checkpoint(const Checkpoint& ckpt) {
  const ViewModelSpec spec = model_spec_from_json(ckpt.info.extra.at("model"));
  auto model = std::make_unique<ViewModel<float>>(spec, 0);
  load_params(ckpt, model->params(), true);
  return model;
}

EmbedFn embed_fn(ViewModel<float>& model, const Normalization& norm) {
  return [&model, norm](std::span<const Image> crops) { return model.represent(to_batch(crops, norm)); };
}

StudentSpec student_model_spec(const FDConfig& c, Index num_classes, const SRCache& cache) {
  StudentSpec s;
  s.base = initial_student_spec(c, num_classes);
  s.feat_sel_channels = c.student.feat_sel_channels;
  s.fmfb_m = c.student.fmfb_m;
  for (const auto& name : c.active_views()) {
    const ViewSpec& v = find_view(c.views, name);
    const Index dim = v.holistic() ? c.teacher.holistic_dim : c.teacher.partial_dim;
    const auto vid = static_cast<std::uint32_t>(view_index(c.views, name));
    if (!cache.has_view(vid) || cache.header(vid).view != name)
      throw ConfigError("SR cache has no entries for view '" + name + "'");
    if (cache.dim(vid) != static_cast<std::uint32_t>(dim))
      throw ConfigError("branch '" + name + "' expects " + std::to_string(dim) + "-dim SRs, cache holds " +
                        std::to_string(cache.dim(vid)));
    s.branches.push_back({name, dim, v.holistic()});
  }
  return s;
}

namespace {

nlohmann::json student_spec_to_json(const StudentSpec& s) {
  nlohmann::json branches = nlohmann::json::array();
  for (const auto& b : s.branches)
    branches.push_back({{"view", b.view}, {"target_dim", b.target_dim}, {"holistic", b.holistic}});
  return {{"base", model_spec_to_json(s.base)}, {"branches", branches},
          {"feat_sel_channels", s.feat_sel_channels}, {"fmfb_m", s.fmfb_m}};
}

}  // namespace

StudentResult train_student_fd(const FDConfig& c, const TrainingData& data, const SRCache& cache,
                               const fs::path& cache_dir, const Checkpoint& init, const std::string& config_hash,
                               const fs::path& out, TrainLog* log, int workers) {
  const Index n = static_cast<Index>(data.train.size());
  if (cache.samples() != static_cast<std::uint64_t>(n))
    throw TrainingError("SR cache holds " + std::to_string(cache.samples()) + " samples, dataset has " +
                        std::to_string(n) + "; the cache is stale");
  const StudentSpec spec = student_model_spec(c, data.manifest.num_classes, cache);
  StudentModel<float> net(spec, derive_seed(c.seed, "model/final_student"));
  load_params(init, net.base_params(), true);

  const StudentModel<float>::Active active{c.loss.alpha > 0.0, c.loss.beta > 0.0};
  ParamList<float> all = net.params();
  ParamList<float> stepped = net.base_params();
  if (active.fmfb)
    for (auto* p : net.fmfb_params()) stepped.push_back(p);
  if (active.rfb)
    for (auto* p : net.rfb_params()) stepped.push_back(p);

  const ViewSpec& hol = holistic_view(c);
  const auto names = c.active_views();
  const Index K = static_cast<Index>(names.size());
  std::vector<ViewSpec> specs;
  std::vector<std::uint32_t> vids;
  for (const auto& name : names) {
    specs.push_back(find_view(c.views, name));
    vids.push_back(static_cast<std::uint32_t>(view_index(c.views, name)));
  }
  const std::vector<int> labels = data.labels();
  const fs::path last = snapshot_path(out);

  StudentResult result;
  result.cache_hash_before = cache_hash(cache_dir);
  CheckpointInfo info;
  info.config_hash = config_hash;
  info.kind = "final_student";
  info.extra = {{"student", student_spec_to_json(spec)}, {"model", model_spec_to_json(spec.base)},
                {"alpha", c.loss.alpha}, {"beta", c.loss.beta}, {"views", names}};

  const std::string tag = "final_student";
  for (int epoch = 0; epoch < c.final_schedule.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const double lr = lr_at(c.final_schedule, epoch);
    double cls_sum = 0.0, total_sum = 0.0;
    std::vector<double> attr_sum(static_cast<std::size_t>(K), 0.0), metric_sum(static_cast<std::size_t>(K), 0.0);
    std::vector<Index> masked(static_cast<std::size_t>(K), 0);
    Index fully_masked = 0, seen = 0, batches = 0;
    for (const auto& ids : epoch_batches(n, c.batch_size, derive_seed(c.seed, tag + "/order/" + std::to_string(epoch)))) {
      const PreparedBatch b = prepare(c, data.train, ids, hol, c.stages.final_student, tag, epoch, workers);
      const Index B = static_cast<Index>(ids.size());
      std::vector<int> y;
      for (Index i : ids) y.push_back(labels[static_cast<std::size_t>(i)]);

      ViewMask mask(K, B);
      for (Index k = 0; k < K; ++k)
        for (Index i = 0; i < B; ++i) {
          const auto s = static_cast<std::size_t>(i);
          const double frac = erase_overlap_fraction(b.erases[s], specs[static_cast<std::size_t>(k)], b.heights[s], b.widths[s]);
          mask.set(k, i, !(frac > c.erase_mask_threshold));
        }

      zero_grad(all);
      const auto o = net.forward(to_batch(b.crops, c.normalization), true, active);
      const auto cls = cls_loss<float>(o.z, y);
      std::vector<float> attr, metric;
      std::vector<Matrix<float>> ga, gm;
      for (Index k = 0; k < K; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        if (!active.fmfb && !active.rfb) break;
        const Matrix<float>& table = cache.view_matrix(vids[ks]);
        Matrix<float> target(table.rows(), B);
        for (Index i = 0; i < B; ++i) {
          const Index id = ids[static_cast<std::size_t>(i)];
          if (id >= table.cols())
            throw TrainingError("SR cache miss for (sample " + std::to_string(id) + ", view " + names[ks] +
                                "); the cache is stale");
          target.col(i) = table.col(id);
        }
        masked[ks] += mask.masked_count(k);
        const auto keep = mask.row(k);
        if (active.fmfb) {
          const auto a = regression_loss<float>(target, o.attr[ks], keep);
          attr.push_back(a.value);
          ga.push_back(static_cast<float>(c.loss.alpha / static_cast<double>(K)) * a.grad);
          attr_sum[ks] += a.value;
          fully_masked += a.fully_masked;
        }
        if (active.rfb) {
          const auto m = regression_loss<float>(target, o.metric[ks], keep);
          metric.push_back(m.value);
          gm.push_back(static_cast<float>(c.loss.beta / static_cast<double>(K)) * m.grad);
          metric_sum[ks] += m.value;
          if (!active.fmfb) fully_masked += m.fully_masked;
        }
      }
      const auto total = total_loss<float>(cls.value, attr, metric, c.loss, K);
      net.backward(cls.grad, ga, gm);
      require_finite(total.total, all, tag, epoch, last);
      sgd_step(stepped, lr, c.sgd);
      cls_sum += cls.value;
      total_sum += total.total;
      seen += B;
      ++batches;
    }
    const double nb = static_cast<double>(std::max<Index>(batches, 1));
    for (auto& v : attr_sum) v /= nb;
    for (auto& v : metric_sum) v /= nb;
    nlohmann::json rec = {{"event", "epoch"}, {"phase", "final_student"}, {"epoch", epoch}, {"lr", lr},
                          {"cls", cls_sum / static_cast<double>(std::max<Index>(seen, 1))},
                          {"total", total_sum / nb}, {"attr", attr_sum}, {"metric", metric_sum},
                          {"masked", masked}, {"fully_masked_batches", fully_masked},
                          {"views", names}, {"seconds", seconds_since(t0)}};
    result.epochs.push_back(rec);
    if (log) log->write(rec);
    info.epoch = epoch + 1;
    info.metrics = {{"cls", rec["cls"]}, {"total", rec["total"]}};
    write_checkpoint(last, make_checkpoint(info, all));
  }
  result.cache_hash_after = cache_hash(cache_dir);
  if (result.cache_hash_after != result.cache_hash_before)
    throw TrainingError("SR cache changed during distillation");
  info.epoch = c.final_schedule.epochs;
  result.checkpoint = make_checkpoint(info, all);
  write_checkpoint(out, result.checkpoint);
  fs::remove(last);
  return result;
}

std::unique_ptr<ViewModel<float>> student_base_from_checkpoint(const Checkpoint& ckpt) {
  return view_model_from_checkpoint(ckpt);
}

RankingResult evaluate_model(ViewModel<float>& model, const FDConfig& c, const TrainingData& data, Protocol protocol) {
  const EmbedFn embed = embed_fn(model, c.normalization);
  const ViewSpec& hol = holistic_view(c);
  const GalleryIndex q = extract_index(embed, data.query, data.manifest.query, hol);
  const GalleryIndex g = extract_index(embed, data.gallery, data.manifest.gallery, hol);
  return evaluate(q, g, protocol);
}

// --- pipeline -------------------------------------------------------------

namespace {

fs::path teacher_ckpt(const fs::path& teachers_dir, const ViewSpec& v) {
  return teachers_dir / (teacher_id(v) + ".ckpt");
}

bool checkpoint_ok(const fs::path& p, const std::string& hash) {
  if (!fs::exists(p)) return false;
  try {
    read_checkpoint(p, hash);
    return true;
  } catch (const CheckpointError&) {
    return false;
  }
}

void write_json_atomic(const fs::path& file, const nlohmann::json& j) {
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw TrainingError("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, file);
}

void say(const PipelineOptions& opt, const std::string& msg) {
  if (opt.progress) *opt.progress << msg << std::endl;
}

}  // namespace

void train_teachers(const FDConfig& c, const TrainingData& data, const fs::path& dir, const PipelineOptions& opt) {
  c.validate();
  const std::string hash = step1_hash(c, data.manifest.fingerprint);
  fs::create_directories(dir);
  TrainLog log(dir / "step1_log.jsonl");
  std::vector<ViewTrainingJob> jobs;
  for (const auto& v : c.views) {
    ViewTrainingJob job{"teacher", v, teacher_model_spec(c, v, data.manifest.num_classes),
                        v.holistic() ? c.stages.holistic : c.stages.partial_teacher, hash, teacher_ckpt(dir, v)};
    if (!checkpoint_ok(job.checkpoint, hash)) jobs.push_back(job);
  }
  const ViewSpec& hol = holistic_view(c);
  const fs::path init = dir / "initial_student.ckpt";
  if (!checkpoint_ok(init, hash))
    jobs.push_back({"initial_student", hol, initial_student_spec(c, data.manifest.num_classes), c.stages.holistic,
                    hash, init});
  // Views train independently; spare workers go to augmentation otherwise.
  const int outer = std::min<int>(opt.workers, static_cast<int>(jobs.size()));
  const int inner = outer > 1 ? 1 : opt.workers;
  parallel_for(static_cast<Index>(jobs.size()), outer, [&](Index i) {
    const auto& job = jobs[static_cast<std::size_t>(i)];
    const auto t0 = Clock::now();
    const auto r = train_view_model(c, job, data, &log, inner);
    say(opt, "  trained " + job.kind + " " + job.view.name + " loss " + std::to_string(r.epoch_loss.back()) +
                 " (" + std::to_string(static_cast<int>(seconds_since(t0))) + " s)");
  });
}

BuildStats build_sr_cache(const FDConfig& c, const TrainingData& data, const fs::path& teachers_dir,
                          const fs::path& cache_dir, const PipelineOptions& opt) {
  const std::string hash = step1_hash(c, data.manifest.fingerprint);
  std::vector<TeacherSource> sources;
  std::vector<std::shared_ptr<const Checkpoint>> ckpts;
  for (std::size_t vi = 0; vi < c.views.size(); ++vi) {
    const ViewSpec& v = c.views[vi];
    const fs::path p = teacher_ckpt(teachers_dir, v);
    if (!fs::exists(p)) throw CacheError("no teacher checkpoint for view '" + v.name + "' at " + p.string());
    auto ckpt = std::make_shared<const Checkpoint>(read_checkpoint(p, hash));
    const auto dim = static_cast<std::uint32_t>(ckpt->info.extra.at("model").at("embedding_dim").get<Index>());
    const Normalization norm = c.normalization;
    const std::vector<Image>* images = &data.train;
    sources.push_back({teacher_id(v), v, static_cast<std::uint32_t>(vi), dim, hash, [ckpt, v, norm, images] {
                         std::shared_ptr<ViewModel<float>> model = view_model_from_checkpoint(*ckpt);
                         return std::function<Matrix<float>(std::span<const Index>)>(
                             [model, v, norm, images](std::span<const Index> ids) {
                               std::vector<Image> batch;
                               for (Index i : ids) batch.push_back((*images)[static_cast<std::size_t>(i)]);
                               return generate_srs(embed_fn(*model, norm), batch, v);
                             });
                       }});
  }
  return build_cache(cache_dir, c.views, sources, data.manifest.fingerprint,
                     static_cast<std::uint64_t>(data.train.size()), opt.workers);
}

PipelineResult run_pipeline(const FDConfig& c, const TrainingData& data, const fs::path& out,
                            const PipelineOptions& opt) {
  c.validate();
  const std::string fingerprint = data.manifest.fingerprint;
  const std::string hash = config_hash(c, fingerprint);
  const std::string s1 = step1_hash(c, fingerprint);
  fs::create_directories(out);
  const fs::path state_file = out / "state.json";
  nlohmann::json state = {{"config_hash", hash}, {"step1_hash", s1}, {"dataset_fingerprint", fingerprint},
                          {"completed", nlohmann::json::array()}};
  if (fs::exists(state_file)) {
    std::ifstream in(state_file);
    const auto old = nlohmann::json::parse(in);
    if (old.at("config_hash").get<std::string>() != hash)
      throw TrainingError("refusing to resume " + out.string() + ": it was started with config hash " +
                          old.at("config_hash").get<std::string>() + ", current config hashes to " + hash);
    state = old;
  }
  save_config(c, out / "config.json");
  const fs::path base = opt.shared_dir.value_or(out);
  const fs::path teachers_dir = base / "teachers";
  const fs::path cache_dir = base / "sr_cache";
  const fs::path final_ckpt = out / "final_student.ckpt";
  TrainLog log(out / "train_log.jsonl");

  PipelineResult result;
  result.dir = out;
  auto done = [&](const std::string& step) {
    auto& list = state["completed"];
    return std::find(list.begin(), list.end(), step) != list.end();
  };
  auto mark = [&](const std::string& step) {
    if (!done(step)) state["completed"].push_back(step);
    write_json_atomic(state_file, state);
  };
  write_json_atomic(state_file, state);

  auto step1_present = [&] {
    for (const auto& v : c.views)
      if (!fs::exists(teacher_ckpt(teachers_dir, v))) return false;
    return fs::exists(teachers_dir / "initial_student.ckpt");
  };
  if (done("step1") && step1_present()) {
    result.skipped_steps.push_back("step1");
  } else {
    say(opt, "step 1: teachers and initial student");
    train_teachers(c, data, teachers_dir, opt);
    mark("step1");
  }

  if (done("step2") && fs::exists(cache_dir / kCacheManifestName)) {
    result.skipped_steps.push_back("step2");
  } else {
    say(opt, "step 2: SR cache");
    const BuildStats st = build_sr_cache(c, data, teachers_dir, cache_dir, opt);
    log.write({{"event", "sr_cache"}, {"written", st.written}, {"valid", st.valid}, {"repaired", st.repaired}});
    mark("step2");
  }
  const SRCache cache = SRCache::open(cache_dir, fingerprint);
  for (std::size_t vi = 0; vi < c.views.size(); ++vi)
    if (cache.header(static_cast<std::uint32_t>(vi)).config_hash != s1)
      throw CacheError("SR cache in " + cache_dir.string() + " was built from other teachers");

  if (done("step3") && checkpoint_ok(final_ckpt, hash)) {
    result.skipped_steps.push_back("step3");
  } else {
    say(opt, "step 3: final student (alpha " + std::to_string(c.loss.alpha) + ", beta " +
                 std::to_string(c.loss.beta) + ")");
    const Checkpoint init = read_checkpoint(teachers_dir / "initial_student.ckpt", s1);
    train_student_fd(c, data, cache, cache_dir, init, hash, final_ckpt, &log, opt.workers);
    mark("step3");
  }

  const Checkpoint student = read_checkpoint(final_ckpt, hash);
  auto model = student_base_from_checkpoint(student);
  result.evaluation = evaluate_model(*model, c, data, opt.protocol);
  const auto report = report_to_json(result.evaluation);
  write_json_atomic(out / "report.json", report);
  {
    std::ofstream txt(out / "report.txt");
    txt << report_text(result.evaluation, "final student, " + c.name);
  }
  mark("evaluation");

  nlohmann::json artifacts = nlohmann::json::object();
  auto add = [&](const std::string& key, const fs::path& p) {
    artifacts[key] = {{"path", p.string()}, {"sha256", sha256_file(p)}};
  };
  for (const auto& v : c.views) add("teacher/" + v.name, teacher_ckpt(teachers_dir, v));
  add("initial_student", teachers_dir / "initial_student.ckpt");
  add("final_student", final_ckpt);
  add("report", out / "report.json");
  result.manifest = {{"config_hash", hash}, {"step1_hash", s1}, {"dataset_fingerprint", fingerprint},
                     {"sr_cache", {{"path", cache_dir.string()}, {"hash", cache_hash(cache_dir)},
                                   {"entries", cache.entries()}}},
                     {"artifacts", artifacts}, {"rank1", result.evaluation.rank1},
                     {"map", result.evaluation.map}};
  write_json_atomic(out / "experiment.json", result.manifest);
  return result;
}

// --- sweeps ---------------------------------------------------------------

std::vector<SweepVariant> loss_ablation(const FDConfig& base) {
  const double a = base.loss.alpha > 0 ? base.loss.alpha : LossWeights{}.alpha;
  const double b = base.loss.beta > 0 ? base.loss.beta : LossWeights{}.beta;
  auto w = [](double alpha, double beta) { return nlohmann::json{{"loss", {{"alpha", alpha}, {"beta", beta}}}}; };
  return {{"L_cls", w(0, 0)}, {"+L_attr", w(a, 0)}, {"+L_metric", w(0, b)}, {"+both", w(a, b)}};
}

std::vector<SweepVariant> teacher_ablation(const FDConfig& base) {
  std::map<Index, std::vector<std::string>> groups;
  std::string hol;
  for (const auto& v : base.views) {
    if (v.holistic())
      hol = v.name;
    else
      groups[v.stripes()].push_back(v.name);
  }
  std::vector<SweepVariant> out;
  std::vector<std::string> views = {hol};
  std::string label = "Hol";
  out.push_back({label, {{"distill_views", views}}});
  int g = 0;
  for (const auto& [stripes, names] : groups) {
    views.insert(views.end(), names.begin(), names.end());
    label += "+G" + std::to_string(++g);
    out.push_back({label, {{"distill_views", views}}});
  }
  return out;
}

SweepSpec sweep_from_json(const nlohmann::json& j) {
  SweepSpec s;
  s.name = j.value("name", "sweep");
  nlohmann::json base;
  if (j.contains("base") && j["base"].is_string()) {
    const std::string preset = j["base"].get<std::string>();
    base = config_to_json(preset == "desk" ? desk_config() : canonical_config(preset == "canonical" ? "R50a" : preset));
  } else {
    base = config_to_json(FDConfig{});
    if (j.contains("base")) base.merge_patch(j["base"]);
  }
  if (j.contains("base_overrides")) base.merge_patch(j["base_overrides"]);
  s.base = config_from_json(base);
  const std::string axis = j.value("axis", "");
  if (axis == "loss")
    s.variants = loss_ablation(s.base);
  else if (axis == "teachers")
    s.variants = teacher_ablation(s.base);
  else if (!axis.empty())
    throw ConfigError("unknown sweep axis '" + axis + "'");
  for (const auto& v : j.value("variants", nlohmann::json::array()))
    s.variants.push_back({v.at("label").get<std::string>(), v.value("overrides", nlohmann::json::object())});
  if (s.variants.empty()) throw ConfigError("sweep has no variants");
  return s;
}

nlohmann::json SweepReport::to_json() const {
  nlohmann::json rows_j = nlohmann::json::array();
  for (const auto& r : rows)
    rows_j.push_back({{"label", r.label}, {"rank1", r.rank1}, {"map", r.map}, {"views", r.views},
                      {"alpha", r.alpha}, {"beta", r.beta}});
  return {{"name", name}, {"rows", rows_j}};
}

std::string SweepReport::table() const {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out << "| Variant | Views | alpha | beta | Rank-1 | mAP |\n|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    std::string views;
    for (const auto& v : r.views) views += (views.empty() ? "" : ",") + v;
    out.precision(1);
    out << "| " << r.label << " | " << views << " | " << r.alpha << " | " << r.beta << " | ";
    out.precision(2);
    out << 100.0 * r.rank1 << " | " << 100.0 * r.map << " |\n";
  }
  return out.str();
}

namespace {

std::string dir_name(const std::string& label) {
  std::string s;
  for (char ch : label) s += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
  return s;
}

}  // namespace

SweepReport run_sweep(const SweepSpec& spec, const TrainingData& data, const fs::path& out, const PipelineOptions& opt) {
  SweepReport report;
  report.name = spec.name;
  fs::create_directories(out);
  PipelineOptions shared = opt;
  shared.shared_dir = out / "shared";
  const nlohmann::json base = config_to_json(spec.base);
  for (const auto& variant : spec.variants) {
    nlohmann::json j = base;
    j.merge_patch(variant.overrides);
    FDConfig c = config_from_json(j);
    c.name = spec.name + "/" + variant.label;
    say(opt, "variant " + variant.label);
    const auto r = run_pipeline(c, data, out / dir_name(variant.label), shared);
    report.rows.push_back({variant.label, r.evaluation.rank1, r.evaluation.map, c.active_views(), c.loss.alpha,
                           c.loss.beta});
  }
  write_json_atomic(out / "sweep.json", report.to_json());
  std::ofstream(out / "sweep.md") << report.table();
  return report;
}

}  // namespace fd
