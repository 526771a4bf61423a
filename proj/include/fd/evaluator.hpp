#pragma once

#include "fd/batch.hpp"
#include "fd/datasets.hpp"
#include "fd/views.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace fd {

/// Features (dim x N) with the identity and camera of each column. Identity
/// -1 marks junk entries.
struct GalleryIndex {
  Matrix<float> features;
  std::vector<int> identity;
  std::vector<int> camera;

  Index size() const { return features.cols(); }
  void validate() const;
};

enum class Protocol { standard, cross_dataset };
std::string to_string(Protocol p);
Protocol protocol_from_string(const std::string& name);

struct QueryRanking {
  Index query = 0;
  std::vector<Index> order;  ///< gallery indices after exclusion, best first
  std::vector<double> scores;
  double average_precision = 0.0;
  bool top1_correct = false;
};

struct RankingResult {
  Protocol protocol = Protocol::standard;
  double rank1 = 0.0;
  double map = 0.0;
  std::vector<double> cmc;  ///< cmc[k]: fraction matched within the top k + 1
  Index evaluated = 0;
  Index skipped = 0;  ///< queries with no relevant gallery entry after exclusion
  std::vector<Index> skipped_queries;
  std::vector<QueryRanking> rankings;  ///< filled when requested
};

/// a . b / (|a| |b|), accumulated in double. Zero vectors throw.
double cosine_score(const Vector<float>& a, const Vector<float>& b);

/// Flip-averaged feature of the holistic crop.
Vector<float> test_feature(const EmbedFn& model, const Image& image, const ViewSpec& holistic);

/// test_feature over a split, in record order.
GalleryIndex extract_index(const EmbedFn& model, const std::vector<Image>& images,
                           const std::vector<SampleRecord>& records, const ViewSpec& holistic,
                           std::size_t batch = 32);

/// Ranks the gallery for every query by descending cosine score. Gallery
/// entries sharing both identity and camera with the query are excluded, junk
/// entries are ignored, other identities count as negatives. Equal scores keep
/// gallery order.
RankingResult evaluate(const GalleryIndex& queries, const GalleryIndex& gallery,
                       Protocol protocol = Protocol::standard, bool keep_rankings = false,
                       std::size_t cmc_depth = 20);

nlohmann::json report_to_json(const RankingResult& r);
std::string report_text(const RankingResult& r, const std::string& title = "");

/// Writes features in the SR record format plus a `.json` sidecar with the
/// identity and camera of every record.
void dump_features(const std::filesystem::path& file, const GalleryIndex& index, const std::string& model_id);
GalleryIndex load_features(const std::filesystem::path& file);

}  // namespace fd
