#pragma once

#include "fd/checkpoint.hpp"
#include "fd/config.hpp"
#include "fd/datasets.hpp"
#include "fd/evaluator.hpp"
#include "fd/models.hpp"
#include "fd/srstore.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fd {

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Worker count from FD_WORKERS, at least 1.
int worker_count();

/// Runs body(i) for i in [0, n) on `workers` threads; the first exception is
/// rethrown after all workers finish.
void parallel_for(Index n, int workers, const std::function<void(Index)>& body);

/// A decoded dataset: manifest plus every image of every split.
struct TrainingData {
  std::filesystem::path root;
  DatasetManifest manifest;
  std::vector<Image> train;
  std::vector<Image> query;
  std::vector<Image> gallery;

  std::vector<int> labels() const;
};

/// Loads `root/manifest.json`, or ingests the Market-1501 layout when absent.
TrainingData load_training_data(const std::filesystem::path& root, const std::string& scheme = "market1501");

/// Append-only JSON-lines log.
class TrainLog {
 public:
  TrainLog() = default;
  explicit TrainLog(const std::filesystem::path& file, std::ostream* echo = nullptr);
  void write(const nlohmann::json& record);

 private:
  std::shared_ptr<std::ofstream> out_;
  std::ostream* echo_ = nullptr;
};

ViewModelSpec teacher_model_spec(const FDConfig& c, const ViewSpec& view, Index num_classes);
ViewModelSpec initial_student_spec(const FDConfig& c, Index num_classes);

/// Identifier of the teacher trained for a view.
std::string teacher_id(const ViewSpec& view);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> epoch_loss;  ///< mean per-sample L_cls of each epoch
};

struct ViewTrainingJob {
  std::string kind;  ///< "teacher" or "initial_student"
  ViewSpec view;
  ViewModelSpec model;
  AugmentStage stage = AugmentStage::partial_teacher;
  std::string config_hash;
  std::filesystem::path checkpoint;  ///< final path; per-epoch snapshots go to <path>.last
};

/// Trains one per-view model with L_cls only. A non-finite loss aborts with a
/// TrainingError; the `.last` snapshot then holds the last finite epoch.
TrainResult train_view_model(const FDConfig& c, const ViewTrainingJob& job, const TrainingData& data,
                             TrainLog* log = nullptr, int workers = 1);

/// Builds a float model from a checkpoint written by train_view_model.
std::unique_ptr<ViewModel<float>> view_model_from_checkpoint(const Checkpoint& ckpt);

/// Inference-mode representation function of a view model.
EmbedFn embed_fn(ViewModel<float>& model, const Normalization& norm);

struct StudentResult {
  Checkpoint checkpoint;
  std::vector<nlohmann::json> epochs;
  std::string cache_hash_before;
  std::string cache_hash_after;
};

StudentSpec student_model_spec(const FDConfig& c, Index num_classes, const SRCache& cache);

/// Final student training. Base weights (backbone, embedding, classifier)
/// are copied from `init`; branches whose loss weight is zero are neither run
/// nor stepped.
StudentResult train_student_fd(const FDConfig& c, const TrainingData& data, const SRCache& cache,
                               const std::filesystem::path& cache_dir, const Checkpoint& init,
                               const std::string& config_hash, const std::filesystem::path& out,
                               TrainLog* log = nullptr, int workers = 1);

/// Rebuilds the student's inference network from a final-student checkpoint.
std::unique_ptr<ViewModel<float>> student_base_from_checkpoint(const Checkpoint& ckpt);

RankingResult evaluate_model(ViewModel<float>& model, const FDConfig& c, const TrainingData& data,
                             Protocol protocol = Protocol::standard);

struct PipelineOptions {
  int workers = 1;
  std::ostream* progress = nullptr;
  /// When set, Steps 1 and 2 read and write their artifacts here so several
  /// experiments can share teachers and one SR cache.
  std::optional<std::filesystem::path> shared_dir;
  Protocol protocol = Protocol::standard;
};

struct PipelineResult {
  std::filesystem::path dir;
  RankingResult evaluation;
  std::vector<std::string> skipped_steps;
  nlohmann::json manifest;
};

/// Step 1: seven teachers and the initial student. Existing checkpoints with
/// a matching hash are kept.
void train_teachers(const FDConfig& c, const TrainingData& data, const std::filesystem::path& dir,
                    const PipelineOptions& opt = {});

/// Step 2: SR cache under `dir/sr_cache` from the teachers in `dir/teachers`.
BuildStats build_sr_cache(const FDConfig& c, const TrainingData& data, const std::filesystem::path& teachers_dir,
                          const std::filesystem::path& cache_dir, const PipelineOptions& opt = {});

/// Steps 1-3 plus evaluation, resumable at step granularity through
/// `out/state.json`. A config change refuses to resume.
PipelineResult run_pipeline(const FDConfig& c, const TrainingData& data, const std::filesystem::path& out,
                            const PipelineOptions& opt = {});

// --- ablation sweeps -----------------------------------------------------

struct SweepVariant {
  std::string label;
  nlohmann::json overrides;  ///< merge-patch applied to the base config JSON
};

struct SweepSpec {
  std::string name;
  FDConfig base;
  std::vector<SweepVariant> variants;
};

/// {L_cls, +attr, +metric, +both} at the base loss weights.
std::vector<SweepVariant> loss_ablation(const FDConfig& base);
/// {Hol, +G1, +G1+G2} over the registry's holistic view and view groups.
std::vector<SweepVariant> teacher_ablation(const FDConfig& base);

SweepSpec sweep_from_json(const nlohmann::json& j);

struct SweepRow {
  std::string label;
  double rank1 = 0.0;
  double map = 0.0;
  std::vector<std::string> views;
  double alpha = 0.0;
  double beta = 0.0;
};

struct SweepReport {
  std::string name;
  std::vector<SweepRow> rows;
  nlohmann::json to_json() const;
  std::string table() const;
};

/// Every variant shares Steps 1-2 under `out/shared` and runs Step 3 plus
/// evaluation in `out/<label>`.
SweepReport run_sweep(const SweepSpec& spec, const TrainingData& data, const std::filesystem::path& out,
                      const PipelineOptions& opt = {});

}  // namespace fd
