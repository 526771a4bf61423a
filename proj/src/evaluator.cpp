#include "fd/evaluator.hpp"

#include "fd/srstore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace fd {

void GalleryIndex::validate() const {
  if (static_cast<Index>(identity.size()) != features.cols() || static_cast<Index>(camera.size()) != features.cols())
    throw ConfigError("gallery index metadata does not match its feature count");
  if (!features.allFinite()) throw ConfigError("gallery index holds non-finite features");
}

std::string to_string(Protocol p) { return p == Protocol::standard ? "standard" : "cross_dataset"; }

Protocol protocol_from_string(const std::string& name) {
  if (name == "standard") return Protocol::standard;
  if (name == "cross_dataset") return Protocol::cross_dataset;
  throw ConfigError("unknown protocol '" + name + "'");
}

double cosine_score(const Vector<float>& a, const Vector<float>& b) {
  if (a.size() != b.size()) throw ConfigError("cosine_score: dimension mismatch");
  const Vector<double> x = a.cast<double>(), y = b.cast<double>();
  const double nx = x.norm(), ny = y.norm();
  if (nx == 0.0 || ny == 0.0) throw ConfigError("cosine_score: zero vector");
  return x.dot(y) / (nx * ny);
}

Vector<float> test_feature(const EmbedFn& model, const Image& image, const ViewSpec& holistic) {
  return generate_sr(model, image, holistic);
}

GalleryIndex extract_index(const EmbedFn& model, const std::vector<Image>& images,
                           const std::vector<SampleRecord>& records, const ViewSpec& holistic,
                           std::size_t batch) {
  if (images.size() != records.size()) throw ConfigError("image and record counts differ");
  GalleryIndex index;
  for (std::size_t begin = 0; begin < images.size(); begin += batch) {
    const std::size_t n = std::min(batch, images.size() - begin);
    const Matrix<float> f = generate_srs(model, std::span<const Image>(images.data() + begin, n), holistic);
    if (index.features.size() == 0) index.features.resize(f.rows(), static_cast<Index>(images.size()));
    index.features.middleCols(static_cast<Index>(begin), static_cast<Index>(n)) = f;
  }
  for (const auto& r : records) {
    index.identity.push_back(r.junk ? -1 : r.identity);
    index.camera.push_back(r.camera);
  }
  return index;
}

RankingResult evaluate(const GalleryIndex& queries, const GalleryIndex& gallery, Protocol protocol,
                       bool keep_rankings, std::size_t cmc_depth) {
  queries.validate();
  gallery.validate();
  if (queries.size() > 0 && gallery.size() > 0 && queries.features.rows() != gallery.features.rows())
    throw ConfigError("query and gallery features differ in dimension");

  // Unit-normalise once in double; the dot products are then cosine scores.
  Matrix<double> g = gallery.features.cast<double>();
  for (Index j = 0; j < g.cols(); ++j) {
    const double n = g.col(j).norm();
    if (n == 0.0) throw ConfigError("gallery entry " + std::to_string(j) + " has a zero feature");
    g.col(j) /= n;
  }

  RankingResult res;
  res.protocol = protocol;
  const std::size_t depth = std::min<std::size_t>(cmc_depth, static_cast<std::size_t>(gallery.size()));
  std::vector<double> cmc_hits(depth, 0.0);
  double ap_sum = 0.0, top1 = 0.0;

  for (Index q = 0; q < queries.size(); ++q) {
    const int qid = queries.identity[static_cast<std::size_t>(q)];
    const int qcam = queries.camera[static_cast<std::size_t>(q)];
    Vector<double> qf = queries.features.col(q).cast<double>();
    const double qn = qf.norm();
    if (qn == 0.0) throw ConfigError("query " + std::to_string(q) + " has a zero feature");
    qf /= qn;

    std::vector<Index> kept;
    Index relevant = 0;
    for (Index j = 0; j < gallery.size(); ++j) {
      const int gid = gallery.identity[static_cast<std::size_t>(j)];
      if (gid == -1) continue;
      if (gid == qid && gallery.camera[static_cast<std::size_t>(j)] == qcam) continue;
      kept.push_back(j);
      relevant += gid == qid;
    }
    if (qid == -1 || relevant == 0) {
      ++res.skipped;
      res.skipped_queries.push_back(q);
      continue;
    }

    std::vector<double> score(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) score[i] = qf.dot(g.col(kept[i]));
    std::vector<std::size_t> order(kept.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

    double hits = 0.0, ap = 0.0;
    std::size_t first_hit = kept.size();
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (gallery.identity[static_cast<std::size_t>(kept[order[r]])] != qid) continue;
      hits += 1.0;
      ap += hits / static_cast<double>(r + 1);
      first_hit = std::min(first_hit, r);
    }
    ap /= static_cast<double>(relevant);
    ap_sum += ap;
    top1 += first_hit == 0 ? 1.0 : 0.0;
    for (std::size_t k = first_hit; k < depth; ++k) cmc_hits[k] += 1.0;
    ++res.evaluated;

    if (keep_rankings) {
      QueryRanking qr;
      qr.query = q;
      qr.average_precision = ap;
      qr.top1_correct = first_hit == 0;
      for (std::size_t i : order) {
        qr.order.push_back(kept[i]);
        qr.scores.push_back(score[i]);
      }
      res.rankings.push_back(std::move(qr));
    }
  }
  if (res.evaluated > 0) {
    const double n = static_cast<double>(res.evaluated);
    res.rank1 = top1 / n;
    res.map = ap_sum / n;
    for (double& c : cmc_hits) c /= n;
  }
  res.cmc = std::move(cmc_hits);
  return res;
}

nlohmann::json report_to_json(const RankingResult& r) {
  return {{"protocol", to_string(r.protocol)}, {"rank1", r.rank1}, {"map", r.map},
          {"cmc", r.cmc}, {"evaluated", r.evaluated}, {"skipped", r.skipped},
          {"skipped_queries", r.skipped_queries}};
}

std::string report_text(const RankingResult& r, const std::string& title) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(2);
  if (!title.empty()) out << title << '\n';
  out << "protocol  " << to_string(r.protocol) << '\n'
      << "rank-1    " << 100.0 * r.rank1 << '\n'
      << "mAP       " << 100.0 * r.map << '\n'
      << "queries   " << r.evaluated << " evaluated, " << r.skipped << " skipped\n";
  for (std::size_t k : {4u, 9u})
    if (k < r.cmc.size()) out << "rank-" << k + 1 << (k < 9 ? "    " : "   ") << 100.0 * r.cmc[k] << '\n';
  return out.str();
}

void dump_features(const std::filesystem::path& file, const GalleryIndex& index, const std::string& model_id) {
  index.validate();
  SRHeader h;
  h.teacher_id = model_id;
  h.view = "Holistic";
  h.dim = static_cast<std::uint32_t>(index.features.rows());
  h.samples = static_cast<std::uint64_t>(index.size());
  write_record_file(file, h, index.features);
  std::ofstream side(file.string() + ".json");
  side << nlohmann::json{{"identity", index.identity}, {"camera", index.camera}}.dump() << '\n';
}

GalleryIndex load_features(const std::filesystem::path& file) {
  GalleryIndex index;
  index.features = read_record_file(file);
  std::ifstream side(file.string() + ".json");
  if (!side) throw ConfigError("missing sidecar for " + file.string());
  const auto j = nlohmann::json::parse(side);
  index.identity = j.at("identity").get<std::vector<int>>();
  index.camera = j.at("camera").get<std::vector<int>>();
  index.validate();
  return index;
}

}  // namespace fd
