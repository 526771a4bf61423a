#include "fd/config.hpp"
#include "fd/datasets.hpp"
#include "fd/hashing.hpp"
#include "fd/models.hpp"
#include "fd/srstore.hpp"
#include "fd/trainer.hpp"

#include "tempdir.hpp"

#include <doctest.h>

#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

using namespace fd;
namespace fs = std::filesystem;
using fd::test::TempDir;

namespace {

// Embedding that reads only the left and right halves of the first row: the
// left-half mean lands in component 0, the right-half mean in component 1.
Matrix<float> halves(std::span<const Image> images) {
  Matrix<float> out(2, static_cast<Index>(images.size()));
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& im = images[n];
    double l = 0, r = 0;
    for (Index x = 0; x < im.width / 2; ++x) l += im(0, 0, x);
    for (Index x = im.width / 2; x < im.width; ++x) r += im(0, 0, x);
    out(0, static_cast<Index>(n)) = static_cast<float>(l / static_cast<double>(im.width / 2));
    out(1, static_cast<Index>(n)) = static_cast<float>(r / static_cast<double>(im.width / 2));
  }
  return out;
}

ViewSpec whole(Index h, Index w) { return ViewSpec{"Holistic", {0, 1}, {1, 1}, h, w}; }

// Deterministic fake SR of (sample, view): a function only of its key.
Matrix<float> fake_sr(std::span<const Index> ids, std::uint32_t view, std::uint32_t dim) {
  Matrix<float> m(dim, static_cast<Index>(ids.size()));
  for (std::size_t c = 0; c < ids.size(); ++c)
    for (std::uint32_t k = 0; k < dim; ++k)
      m(k, static_cast<Index>(c)) = std::sin(0.37f * static_cast<float>(ids[c]) + 1.3f * static_cast<float>(k) +
                                             0.11f * static_cast<float>(view));
  return m;
}

struct FakeTeachers {
  ViewRegistry views = rescaled_views(canonical_views(), 16, 8, 8, 8);
  std::uint32_t partial_dim = 6;
  std::uint32_t holistic_dim = 10;
  std::shared_ptr<std::atomic<int>> calls = std::make_shared<std::atomic<int>>(0);

  std::vector<TeacherSource> sources() const {
    std::vector<TeacherSource> out;
    for (std::size_t v = 0; v < views.size(); ++v) {
      TeacherSource t;
      t.teacher_id = teacher_id(views[v]);
      t.view = views[v];
      t.view_id = static_cast<std::uint32_t>(v);
      t.dim = views[v].holistic() ? holistic_dim : partial_dim;
      t.config_hash = "cfg";
      const auto view_id = t.view_id;
      const auto dim = t.dim;
      auto counter = calls;
      t.make_extractor = [view_id, dim, counter]() {
        return [view_id, dim, counter](std::span<const Index> ids) {
          counter->fetch_add(static_cast<int>(ids.size()));
          return fake_sr(ids, view_id, dim);
        };
      };
      out.push_back(std::move(t));
    }
    return out;
  }
};

std::size_t header_offset(const fs::path& file, std::size_t record, std::uint64_t samples) {
  return static_cast<std::size_t>(fs::file_size(file)) - record * samples;
}

}  // namespace

TEST_CASE("flip averaging matches its worked example") {
  // Left half 1, right half 0: halves() gives (1, 0) and on the mirror (0, 1).
  Image im(1, 4);
  im(0, 0, 0) = im(0, 0, 1) = 1.0f;
  const Vector<float> sr = generate_sr(halves, im, whole(1, 4));
  REQUIRE(sr.size() == 2);
  CHECK(sr(0) == doctest::Approx(0.5));
  CHECK(sr(1) == doctest::Approx(0.5));
}

TEST_CASE("flip averaging of a flip-invariant teacher is the plain representation") {
  const EmbedFn mean_only = [](std::span<const Image> images) {
    Matrix<float> out(1, static_cast<Index>(images.size()));
    for (std::size_t n = 0; n < images.size(); ++n) out(0, static_cast<Index>(n)) = images[n].pixels.mean();
    return out;
  };
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image im(6, 4);
  for (Index i = 0; i < im.pixels.size(); ++i) im.pixels.data()[i] = u(rng);
  const Image one[] = {im};
  CHECK(generate_sr(mean_only, im, whole(6, 4))(0) == doctest::Approx(mean_only(one)(0, 0)).epsilon(1e-6));
}

TEST_CASE("SRs of a random-init teacher are deterministic, flip invariant and contract distances") {
  TempDir dir;
  SyntheticSpec s;
  s.n_identities = 6;
  s.test_identities = 2;
  s.images_per_identity = 4;
  s.cameras = 2;
  s.queries_per_camera = 1;
  s.palette = 4;
  const auto m = generate_synthetic(s, dir.path);
  const auto images = load_split(dir.path, m.train);
  const FDConfig c = desk_config();
  const ViewSpec& up = c.views.at(1);
  ViewModel<float> teacher(teacher_model_spec(c, up, m.num_classes), 7);
  const EmbedFn embed = embed_fn(teacher, c.normalization);

  const Matrix<float> a = generate_srs(embed, images, up);
  const Matrix<float> b = generate_srs(embed, images, up);
  CHECK(a == b);

  std::vector<Image> mirrored;
  for (const Image& im : images) mirrored.push_back(flip_horizontal(im));
  CHECK((generate_srs(embed, mirrored, up) - a).cwiseAbs().maxCoeff() < 1e-5f);

  // |sr(x) - sr(y)| <= (|t(x) - t(y)| + |t(fx) - t(fy)|) / 2 for every pair.
  std::vector<Image> crops, flipped;
  for (const Image& im : images) {
    crops.push_back(crop_view(im, up));
    flipped.push_back(flip_horizontal(crops.back()));
  }
  const Matrix<float> t = embed(crops);
  const Matrix<float> tf = embed(flipped);
  for (Index i = 0; i < a.cols(); ++i)
    for (Index j = i + 1; j < a.cols(); ++j) {
      const double lhs = (a.col(i) - a.col(j)).norm();
      const double rhs = 0.5 * ((t.col(i) - t.col(j)).norm() + (tf.col(i) - tf.col(j)).norm());
      CHECK(lhs <= rhs + 1e-4);
    }
}

TEST_CASE("record files round trip bit-exactly and reject corruption") {
  TempDir dir;
  const Matrix<float> v = fake_sr(std::vector<Index>{0, 1, 2, 3, 4}, 2, 3);
  const SRHeader h{"dn1", "Dn1", 2, 3, "cfg", "fp", 5};
  write_record_file(dir / "x.bin", h, v);
  SRHeader back;
  CHECK(read_record_file(dir / "x.bin", &back) == v);
  CHECK(sr_header_to_json(back) == sr_header_to_json(h));

  const std::size_t off = header_offset(dir / "x.bin", sr_record_size(3), 5);
  {
    std::fstream io(dir / "x.bin", std::ios::binary | std::ios::in | std::ios::out);
    io.seekp(static_cast<std::streamoff>(off + 2 * sr_record_size(3) + 17));
    io.put('\x5a');
  }
  try {
    read_record_file(dir / "x.bin");
    FAIL("corrupted record accepted");
  } catch (const CacheError& e) {
    CHECK(std::string(e.what()).find("(sample 2, view 2)") != std::string::npos);
  }
}

TEST_CASE("a complete cache holds one entry per sample and view and round trips") {
  TempDir dir;
  FakeTeachers ft;
  const std::uint64_t n = 10;
  const auto st = build_cache(dir.path, ft.views, ft.sources(), "fp", n, 1, 4);
  CHECK(st.written == 70);
  CHECK(st.valid == 0);
  CHECK(st.repaired == 0);
  const SRCache cache = SRCache::open(dir.path, "fp");
  CHECK(cache.entries() == 70);
  CHECK(cache.samples() == n);
  CHECK(cache.views().size() == 7);
  for (std::uint32_t v = 0; v < 7; ++v) {
    CHECK(cache.has_view(v));
    const std::uint32_t dim = v == 0 ? ft.holistic_dim : ft.partial_dim;
    CHECK(cache.dim(v) == dim);
    CHECK(cache.header(v).config_hash == "cfg");
    for (Index i = 0; i < static_cast<Index>(n); ++i) {
      const Index id[] = {i};
      CHECK(cache.read(static_cast<std::uint64_t>(i), v) == fake_sr(id, v, dim).col(0));
    }
  }
}

TEST_CASE("rebuilding writes nothing and one corrupted byte costs exactly one slot") {
  TempDir dir;
  FakeTeachers ft;
  build_cache(dir.path, ft.views, ft.sources(), "fp", 10);
  const std::string before = cache_hash(dir.path);

  const auto again = build_cache(dir.path, ft.views, ft.sources(), "fp", 10);
  CHECK(again.written == 0);
  CHECK(again.valid == 70);
  CHECK(cache_hash(dir.path) == before);

  const fs::path file = dir / sr_file_name("mid1");
  const std::size_t rec = sr_record_size(ft.partial_dim);
  const std::size_t off = header_offset(file, rec, 10);
  {
    std::fstream io(file, std::ios::binary | std::ios::in | std::ios::out);
    io.seekg(static_cast<std::streamoff>(off + 6 * rec + 20));
    const char c = static_cast<char>(io.get());
    io.seekp(static_cast<std::streamoff>(off + 6 * rec + 20));
    io.put(static_cast<char>(c ^ 0x10));
  }
  CHECK_THROWS_AS(SRCache::open(dir.path, "fp"), CacheError);
  const auto fixed = build_cache(dir.path, ft.views, ft.sources(), "fp", 10);
  CHECK(fixed.written == 1);
  CHECK(fixed.repaired == 1);
  CHECK(fixed.valid == 69);
  CHECK(cache_hash(dir.path) == before);
}

TEST_CASE("a missing teacher fails before any extraction") {
  TempDir dir;
  FakeTeachers ft;
  auto sources = ft.sources();
  sources.erase(sources.begin() + 4);
  CHECK_THROWS_WITH_AS(build_cache(dir.path, ft.views, sources, "fp", 10), doctest::Contains("Up2"), CacheError);
  CHECK(ft.calls->load() == 0);
  CHECK_FALSE(fs::exists(dir / kCacheManifestName));
}

TEST_CASE("missing keys and foreign fingerprints are refused") {
  TempDir dir;
  FakeTeachers ft;
  build_cache(dir.path, ft.views, ft.sources(), "fp", 10);
  const SRCache cache = SRCache::open(dir.path, "fp");
  CHECK_THROWS_WITH_AS(cache.read(10, 3), doctest::Contains("(sample 10, view 3)"), CacheError);
  CHECK_THROWS_WITH_AS(cache.read(1, 9), doctest::Contains("stale"), CacheError);
  CHECK_THROWS_AS(SRCache::open(dir.path, "other"), CacheError);
  CHECK_THROWS_AS(build_cache(dir.path, ft.views, ft.sources(), "other", 10), CacheError);
  CHECK_THROWS_AS(SRCache::open(dir / "nowhere", "fp"), CacheError);
}

TEST_CASE("a teacher whose output dim disagrees with its header is refused") {
  TempDir dir;
  FakeTeachers ft;
  auto sources = ft.sources();
  sources[2].make_extractor = [] {
    return [](std::span<const Index> ids) { return fake_sr(ids, 2, 4); };
  };
  CHECK_THROWS_WITH_AS(build_cache(dir.path, ft.views, sources, "fp", 10), doctest::Contains("dim"), CacheError);
}

TEST_CASE("parallel extraction writes the same bytes as a single worker") {
  TempDir one, three;
  FakeTeachers ft;
  build_cache(one.path, ft.views, ft.sources(), "fp", 37, 1, 5);
  build_cache(three.path, ft.views, ft.sources(), "fp", 37, 3, 5);
  CHECK(cache_hash(one.path) == cache_hash(three.path));
}

TEST_CASE("concurrent readers see the same values") {
  TempDir dir;
  FakeTeachers ft;
  build_cache(dir.path, ft.views, ft.sources(), "fp", 25);
  const SRCache cache = SRCache::open(dir.path, "fp");
  std::vector<double> sums(4, 0.0);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < sums.size(); ++w)
    pool.emplace_back([&, w] {
      double s = 0;
      for (int rep = 0; rep < 20; ++rep)
        for (std::uint64_t i = 0; i < 25; ++i)
          for (std::uint32_t v = 0; v < 7; ++v) s += static_cast<double>(cache.read(i, v).sum());
      sums[w] = s;
    });
  for (auto& t : pool) t.join();
  for (double s : sums) CHECK(s == sums[0]);
}
