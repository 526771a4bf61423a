#include "fd/config.hpp"

#include "fd/hashing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace fd {

double lr_at(const Schedule& s, int epoch) {
  if (epoch < 0) throw ConfigError("lr_at: negative epoch");
  if (s.period < 1) throw ConfigError("lr_at: period must be positive");
  return std::ldexp(s.lr0, -(epoch / s.period));
}

namespace {

BackboneSpec resnet(const std::string& kind) {
  BackboneSpec b;
  b.kind = kind;
  return b;
}

nlohmann::json schedule_to_json(const Schedule& s) {
  return {{"lr0", s.lr0}, {"period", s.period}, {"epochs", s.epochs}};
}

Schedule schedule_from_json(const nlohmann::json& j, Schedule s) {
  s.lr0 = j.value("lr0", s.lr0);
  s.period = j.value("period", s.period);
  s.epochs = j.value("epochs", s.epochs);
  return s;
}

nlohmann::json sgd_to_json(const SgdOptions& o) {
  return {{"momentum", o.momentum}, {"weight_decay", o.weight_decay}, {"nesterov", o.nesterov}};
}

}  // namespace

std::vector<StudentArch> student_roster() {
  BackboneSpec squeeze;
  squeeze.kind = "squeezenet";
  return {{"S", squeeze, 512},
          {"R18a", resnet("resnet18"), 512},
          {"R50a", resnet("resnet50"), 512},
          {"R50b", resnet("resnet50"), 2048},
          {"R101a", resnet("resnet101"), 512},
          {"R152a", resnet("resnet152"), 512},
          {"R152b", resnet("resnet152"), 2048}};
}

StudentArch roster_entry(const std::string& name) {
  for (auto& a : student_roster())
    if (a.name == name) return a;
  throw ConfigError("unknown student architecture '" + name + "'");
}

std::vector<std::string> FDConfig::active_views() const {
  std::vector<std::string> out;
  for (const auto& v : views)
    if (distill_views.empty() || std::count(distill_views.begin(), distill_views.end(), v.name))
      out.push_back(v.name);
  return out;
}

void FDConfig::validate() const {
  if (views.empty()) throw ConfigError("config has no views");
  for (const auto& v : views) v.validate();
  if (std::count_if(views.begin(), views.end(), [](const ViewSpec& v) { return v.holistic(); }) != 1)
    throw ConfigError("config needs exactly one holistic view");
  for (const auto& name : distill_views) find_view(views, name);
  if (loss.alpha < 0 || loss.beta < 0) throw ConfigError("loss weights must be non-negative");
  if (batch_size < 2) throw ConfigError("batch size must be at least 2 for batch normalization");
  for (const Schedule* s : {&teacher_schedule, &final_schedule})
    if (s->period < 1 || s->epochs < 0 || !(s->lr0 > 0)) throw ConfigError("invalid schedule");
  if (teacher.holistic_dim < 1 || teacher.partial_dim < 1 || student.embedding_dim < 1 ||
      student.feat_sel_channels < 1)
    throw ConfigError("dimensions must be positive");
  if (teacher.pool_m < 1 || student.pool_m < 1 || student.fmfb_m < 1) throw ConfigError("pool kernel must be >= 1");
}

FDConfig canonical_config(const std::string& student_arch) {
  FDConfig c;
  const StudentArch a = roster_entry(student_arch);
  c.student.arch = a.name;
  c.student.backbone = a.backbone;
  c.student.embedding_dim = a.embedding_dim;
  c.teacher.backbone = resnet("resnet50");
  return c;
}

FDConfig desk_config() {
  FDConfig c;
  c.name = "desk";
  c.views = rescaled_views(canonical_views(), 64, 32, 32, 32);
  c.teacher.backbone = BackboneSpec{};
  c.teacher.holistic_dim = 128;
  c.teacher.partial_dim = 64;
  c.teacher.pool_m = 2;
  c.student.arch = "reference";
  c.student.backbone = BackboneSpec{};
  c.student.embedding_dim = 128;
  c.student.pool_m = 2;
  c.student.feat_sel_channels = 64;
  c.student.fmfb_m = 2;
  c.teacher_schedule = {0.0025, 5, 20};
  c.final_schedule = {0.0025, 4, 12};
  c.augment.crop_pad = 2;
  return c;
}

nlohmann::json config_to_json(const FDConfig& c) {
  nlohmann::json j;
  j["name"] = c.name;
  j["views"] = views_to_json(c.views);
  j["distill_views"] = c.distill_views;
  j["teacher"] = {{"backbone", backbone_to_json(c.teacher.backbone)},
                  {"holistic_dim", c.teacher.holistic_dim},
                  {"partial_dim", c.teacher.partial_dim},
                  {"pool_m", c.teacher.pool_m}};
  j["student"] = {{"arch", c.student.arch},
                  {"backbone", backbone_to_json(c.student.backbone)},
                  {"embedding_dim", c.student.embedding_dim},
                  {"pool_m", c.student.pool_m},
                  {"feat_sel_channels", c.student.feat_sel_channels},
                  {"fmfb_m", c.student.fmfb_m}};
  j["loss"] = {{"alpha", c.loss.alpha}, {"beta", c.loss.beta}};
  j["sgd"] = sgd_to_json(c.sgd);
  j["batch_size"] = c.batch_size;
  j["teacher_schedule"] = schedule_to_json(c.teacher_schedule);
  j["final_schedule"] = schedule_to_json(c.final_schedule);
  j["stages"] = {{"partial_teacher", to_string(c.stages.partial_teacher)},
                 {"holistic", to_string(c.stages.holistic)},
                 {"final_student", to_string(c.stages.final_student)}};
  j["augment"] = augment_params_to_json(c.augment);
  j["normalization"] = normalization_to_json(c.normalization);
  j["erase_mask_threshold"] = c.erase_mask_threshold;
  j["seed"] = c.seed;
  return j;
}

FDConfig config_from_json(const nlohmann::json& j) {
  FDConfig c;
  if (j.contains("student") && j["student"].contains("arch") && !j["student"].contains("backbone")) {
    const std::string arch = j["student"]["arch"].get<std::string>();
    if (arch != "reference") c = canonical_config(arch);
  }
  c.name = j.value("name", c.name);
  if (j.contains("views")) c.views = views_from_json(j["views"]);
  c.distill_views = j.value("distill_views", c.distill_views);
  if (j.contains("teacher")) {
    const auto& t = j["teacher"];
    if (t.contains("backbone")) c.teacher.backbone = backbone_from_json(t["backbone"]);
    c.teacher.holistic_dim = t.value("holistic_dim", c.teacher.holistic_dim);
    c.teacher.partial_dim = t.value("partial_dim", c.teacher.partial_dim);
    c.teacher.pool_m = t.value("pool_m", c.teacher.pool_m);
  }
  if (j.contains("student")) {
    const auto& s = j["student"];
    c.student.arch = s.value("arch", c.student.arch);
    if (s.contains("backbone")) c.student.backbone = backbone_from_json(s["backbone"]);
    c.student.embedding_dim = s.value("embedding_dim", c.student.embedding_dim);
    c.student.pool_m = s.value("pool_m", c.student.pool_m);
    c.student.feat_sel_channels = s.value("feat_sel_channels", c.student.feat_sel_channels);
    c.student.fmfb_m = s.value("fmfb_m", c.student.fmfb_m);
  }
  if (j.contains("loss")) {
    c.loss.alpha = j["loss"].value("alpha", c.loss.alpha);
    c.loss.beta = j["loss"].value("beta", c.loss.beta);
  }
  if (j.contains("sgd")) {
    c.sgd.momentum = j["sgd"].value("momentum", c.sgd.momentum);
    c.sgd.weight_decay = j["sgd"].value("weight_decay", c.sgd.weight_decay);
    c.sgd.nesterov = j["sgd"].value("nesterov", c.sgd.nesterov);
  }
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("teacher_schedule")) c.teacher_schedule = schedule_from_json(j["teacher_schedule"], c.teacher_schedule);
  if (j.contains("final_schedule")) c.final_schedule = schedule_from_json(j["final_schedule"], c.final_schedule);
  if (j.contains("stages")) {
    const auto& s = j["stages"];
    if (s.contains("partial_teacher")) c.stages.partial_teacher = augment_stage_from_string(s["partial_teacher"]);
    if (s.contains("holistic")) c.stages.holistic = augment_stage_from_string(s["holistic"]);
    if (s.contains("final_student")) c.stages.final_student = augment_stage_from_string(s["final_student"]);
  }
  if (j.contains("augment")) c.augment = augment_params_from_json(j["augment"]);
  if (j.contains("normalization")) c.normalization = normalization_from_json(j["normalization"]);
  c.erase_mask_threshold = j.value("erase_mask_threshold", c.erase_mask_threshold);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

FDConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config " + file.string());
  return config_from_json(nlohmann::json::parse(in, nullptr, true, true));
}

void save_config(const FDConfig& c, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw ConfigError("cannot write config " + file.string());
  out << config_to_json(c).dump(2) << '\n';
}

std::string step1_hash(const FDConfig& c, const std::string& dataset_fingerprint) {
  const auto j = config_to_json(c);
  nlohmann::json sub;
  for (const char* key : {"views", "teacher", "sgd", "batch_size", "teacher_schedule", "augment",
                          "normalization", "seed"})
    sub[key] = j[key];
  sub["student"] = {{"backbone", j["student"]["backbone"]},
                    {"embedding_dim", j["student"]["embedding_dim"]},
                    {"pool_m", j["student"]["pool_m"]}};
  sub["stages"] = {{"partial_teacher", j["stages"]["partial_teacher"]}, {"holistic", j["stages"]["holistic"]}};
  sub["dataset"] = dataset_fingerprint;
  return sha256_hex(sub.dump());
}

std::string config_hash(const FDConfig& c, const std::string& dataset_fingerprint) {
  auto j = config_to_json(c);
  j.erase("name");
  j["dataset"] = dataset_fingerprint;
  return sha256_hex(j.dump());
}

}  // namespace fd
