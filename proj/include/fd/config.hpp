#pragma once

#include "fd/backbones.hpp"
#include "fd/batch.hpp"
#include "fd/losses.hpp"
#include "fd/optim.hpp"
#include "fd/views.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace fd {

/// lr0 halved every `period` epochs; training stops after `epochs`.
struct Schedule {
  double lr0 = 0.0025;
  int period = 20;
  int epochs = 80;
};

/// lr0 * 2^-floor(epoch / period).
double lr_at(const Schedule& s, int epoch);

struct TeacherConfig {
  BackboneSpec backbone;
  Index holistic_dim = 512;
  Index partial_dim = 256;
  Index pool_m = 4;
};

/// One row of the student roster.
struct StudentArch {
  std::string name;
  BackboneSpec backbone;
  Index embedding_dim = 512;
};

/// S, R18a, R50a, R50b, R101a, R152a, R152b.
std::vector<StudentArch> student_roster();
StudentArch roster_entry(const std::string& name);

struct StudentConfig {
  std::string arch = "R50a";
  BackboneSpec backbone;
  Index embedding_dim = 512;
  Index pool_m = 4;
  Index feat_sel_channels = 512;
  Index fmfb_m = 4;
};

struct StageConfig {
  AugmentStage partial_teacher = AugmentStage::partial_teacher;
  AugmentStage holistic = AugmentStage::holistic_or_initial_student;
  AugmentStage final_student = AugmentStage::final_student;
};

/// Full experiment description. Every field is serialized; the config hash is
/// the SHA-256 of the compact JSON dump.
struct FDConfig {
  std::string name = "canonical";
  ViewRegistry views = canonical_views();
  /// Views distilled into the final student; empty means every registered view.
  std::vector<std::string> distill_views;
  TeacherConfig teacher;
  StudentConfig student;
  LossWeights loss;
  SgdOptions sgd;
  Index batch_size = 32;
  Schedule teacher_schedule{0.0025, 20, 80};
  Schedule final_schedule{0.0025, 15, 50};
  StageConfig stages;
  AugmentParams augment;
  Normalization normalization;
  double erase_mask_threshold = kEraseMaskThreshold;
  std::uint64_t seed = 1;

  /// Views the final student regresses, in registry order.
  std::vector<std::string> active_views() const;
  void validate() const;
};

/// Published settings with the given roster student.
FDConfig canonical_config(const std::string& student_arch = "R50a");

/// Desk-scale preset for the synthetic generator: 64x32 holistic input,
/// 32x32 partial crops, the reference CNN and shortened schedules.
FDConfig desk_config();

nlohmann::json config_to_json(const FDConfig& c);
FDConfig config_from_json(const nlohmann::json& j);
FDConfig load_config(const std::filesystem::path& file);
void save_config(const FDConfig& c, const std::filesystem::path& file);

/// Hash of everything that determines a trained teacher or initial student.
std::string step1_hash(const FDConfig& c, const std::string& dataset_fingerprint);
/// Hash of the whole experiment.
std::string config_hash(const FDConfig& c, const std::string& dataset_fingerprint);

}  // namespace fd
