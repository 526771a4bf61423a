// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Criteria 8-10 train real desk-scale models and take several minutes.

#include "fd/attention.hpp"
#include "fd/losses.hpp"
#include "fd/pooling.hpp"
#include "fd/trainer.hpp"

#include "gradcheck.hpp"
#include "ranking_oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

using namespace fd;
namespace fs = std::filesystem;
using fd::test::numeric_gradient;
using fd::test::random_matrix;
using fd::test::random_map;
using fd::test::relative_error;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

const fs::path kWork = FD_ACCEPTANCE_DIR;

// --- 1 -------------------------------------------------------------------

Outcome gradients() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  auto record = [&](double e, const std::string& what) {
    worst = std::max(worst, e);
    expect(e <= 1e-4, what + " relative error " + fmt(e));
  };
  for (int t = 0; t < 20; ++t) {
    const Index m = 1 + t % 5;
    auto f = random_map(2, 3, 6, 5, rng);
    const auto w = random_matrix(3, 2, rng);
    StabilizedGmp<double> pool(m);
    pool.forward(f);
    const auto analytic = pool.backward(w).data;
    const auto numeric = numeric_gradient([&] { return (stabilized_gmp(f, m).array() * w.array()).sum(); }, f.data);
    record(relative_error(analytic, numeric), "stabilized_gmp");
  }
  for (int t = 0; t < 20; ++t) {
    auto z = random_matrix(7, 5, rng, -3, 3);
    std::vector<int> y;
    for (int i = 0; i < 5; ++i) y.push_back(static_cast<int>(rng() % 7));
    const auto analytic = cls_loss<double>(z, y).grad;
    record(relative_error(analytic, numeric_gradient([&] { return cls_loss<double>(z, y).value; }, z)), "cls_loss");
  }
  for (int t = 0; t < 20; ++t) {
    const auto target = random_matrix(6, 8, rng);
    auto pred = random_matrix(6, 8, rng);
    std::vector<std::uint8_t> keep(8);
    for (auto& k : keep) k = static_cast<std::uint8_t>(rng() % 4 != 0);
    keep[static_cast<std::size_t>(t % 8)] = 1;
    const auto analytic = regression_loss<double>(target, pred, keep).grad;
    record(relative_error(analytic, numeric_gradient([&] { return regression_loss<double>(target, pred, keep).value; },
                                                     pred)),
           "regression_loss");
  }
  for (int t = 0; t < 20; ++t) {
    const Index K = 1 + t % 7;
    auto x = random_matrix(1 + 2 * K, 1, rng, 0, 2);
    const LossWeights lw{0.5 + static_cast<double>(t % 4), 0.25 + static_cast<double>(t % 3)};
    auto eval = [&] {
      std::vector<double> a(x.data() + 1, x.data() + 1 + K), b(x.data() + 1 + K, x.data() + 1 + 2 * K);
      return total_loss<double>(x(0), a, b, lw, K);
    };
    const auto tl = eval();
    Matrix<double> analytic(x.rows(), 1);
    analytic(0) = 1.0;
    for (Index k = 0; k < K; ++k) {
      analytic(1 + k) = tl.attr_scale;
      analytic(1 + K + k) = tl.metric_scale;
    }
    record(relative_error(analytic, numeric_gradient([&] { return eval().total; }, x)), "total_loss");
  }
  return {true, "80 trials, worst relative error " + fmt(worst, 3)};
}

// --- 2 -------------------------------------------------------------------

Outcome pooling() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Index h = 1 + static_cast<Index>(rng() % 9), w = 1 + static_cast<Index>(rng() % 9);
    const auto f = random_map(2, 3, h, w, rng);
    const auto gmp = stabilized_gmp(f, 1);
    const auto gap = stabilized_gmp(f, std::max(h, w));
    for (Index n = 0; n < 2; ++n)
      for (Index c = 0; c < 3; ++c) {
        double mx = -1e300, sum = 0.0;
        for (Index y = 0; y < h; ++y)
          for (Index x = 0; x < w; ++x) {
            mx = std::max(mx, f(n, c, y, x));
            sum += f(n, c, y, x);
          }
        const double mean = sum / static_cast<double>(h * w);
        worst = std::max({worst, std::abs(gmp(c, n) - mx), std::abs(gap(c, n) - mean)});
      }
  }
  expect(worst <= 1e-6, "identity deviation " + fmt(worst));
  FeatureMap<double> ramp(1, 1, 4, 4);
  for (Index i = 0; i < 16; ++i) ramp(0, 0, i / 4, i % 4) = static_cast<double>(i + 1);
  const double v = stabilized_gmp(ramp, 2)(0, 0);
  expect(v == 13.5, "4x4 ramp pooled to " + fmt(v, 17));
  return {true, "100 maps, worst deviation " + fmt(worst, 3) + "; ramp example 13.5"};
}

// --- 3 -------------------------------------------------------------------

// round(num / den * h) with ties up, in integers.
Index boundary(std::int64_t num, std::int64_t den, Index h) { return (2 * num * h + den) / (2 * den); }

Outcome geometry() {
  const auto v = canonical_views();
  const std::vector<std::tuple<std::string, int, int, int, int, Index, Index>> published = {
      {"Holistic", 0, 1, 1, 1, 256, 128}, {"Up1", 1, 4, 2, 4, 224, 224}, {"Mid1", 2, 4, 3, 4, 224, 224},
      {"Dn1", 3, 4, 4, 4, 224, 224},      {"Up2", 1, 7, 3, 7, 224, 224}, {"Mid2", 3, 7, 5, 7, 224, 224},
      {"Dn2", 5, 7, 7, 7, 224, 224}};
  expect(v.size() == published.size(), "registry has " + std::to_string(v.size()) + " views");
  for (std::size_t i = 0; i < published.size(); ++i) {
    const auto& [name, tn, td, bn, bd, oh, ow] = published[i];
    expect(v[i].name == name && v[i].top.num == tn && v[i].top.den == td && v[i].bottom.num == bn &&
               v[i].bottom.den == bd && v[i].out_height == oh && v[i].out_width == ow,
           "view " + std::to_string(i) + " differs from the published registry");
  }
  // Group stripes tile [1/4, 1] and [1/7, 1] without gaps.
  expect(v[1].bottom == v[2].top && v[2].bottom == v[3].top && v[3].bottom == Fraction{1, 1}, "group 1 gap");
  expect(v[4].bottom == v[5].top && v[5].bottom == v[6].top && v[6].bottom == Fraction{1, 1}, "group 2 gap");

  int crops = 0, refused = 0;
  for (Index h : {4, 7, 223, 400}) {
    const Index w = 5;
    Image src(h, w);
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x)
        for (Index c = 0; c < 3; ++c) src(c, y, x) = static_cast<float>(1000 * c + 10 * y + x);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (h < v[i].stripes()) {
        // Fewer rows than stripes: the view is undefined and must be refused.
        bool threw = false;
        try {
          crop_view(src, v[i]);
        } catch (const GeometryError&) {
          threw = true;
        }
        expect(threw, v[i].name + " accepted a " + std::to_string(h) + "-row image");
        ++refused;
        continue;
      }
      const Index r0 = boundary(v[i].top.num, v[i].top.den, h), r1 = boundary(v[i].bottom.num, v[i].bottom.den, h);
      expect(v[i].rows(h) == std::make_pair(r0, r1), v[i].name + " rows at height " + std::to_string(h));
      ViewSpec native = v[i];
      native.out_height = r1 - r0;
      native.out_width = w;
      if (r1 <= r0) {
        bool threw = false;
        try {
          crop_view(src, native);
        } catch (const GeometryError&) {
          threw = true;
        }
        expect(threw, v[i].name + " accepted an empty stripe at height " + std::to_string(h));
        continue;
      }
      const Image out = crop_view(src, native);
      for (Index y = 0; y < r1 - r0; ++y)
        for (Index x = 0; x < w; ++x)
          for (Index c = 0; c < 3; ++c)
            expect(out(c, y, x) == src(c, r0 + y, x), v[i].name + " crop content at height " + std::to_string(h));
      ++crops;
    }
    for (auto [a, b] : {std::pair<int, int>{1, 2}, {2, 3}, {4, 5}, {5, 6}})
      if (h >= v[static_cast<std::size_t>(a)].stripes())
        expect(v[static_cast<std::size_t>(a)].rows(h).second == v[static_cast<std::size_t>(b)].rows(h).first,
             "stripes do not tile at height " + std::to_string(h));
  }
  return {true, "7 views verbatim; " + std::to_string(crops) + " crops exact over heights 4, 7, 223, 400; " +
                    std::to_string(refused) + " undersized stripes refused"};
}

// --- 4 -------------------------------------------------------------------

Outcome masking() {
  const auto views = canonical_views();
  const Index H = 40, W = 10;
  std::mt19937_64 rng(404);
  int masked_seen = 0, kept_seen = 0;
  for (int t = 0; t < 200; ++t) {
    std::vector<EraseRecord> erases;
    const Index B = 6;
    for (Index i = 0; i < B; ++i) {
      EraseRecord e;
      e.present = rng() % 5 != 0;
      e.row0 = static_cast<Index>(rng() % H);
      e.row1 = e.row0 + 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(H - e.row0));
      e.col0 = static_cast<Index>(rng() % W);
      e.col1 = e.col0 + 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(W - e.col0));
      erases.push_back(e);
    }
    const ViewMask mask = make_view_mask(erases, views, H, W);
    for (Index k = 0; k < static_cast<Index>(views.size()); ++k) {
      const auto target = random_matrix(4, B, rng);
      Matrix<double> pred = random_matrix(4, B, rng);
      const double base = regression_loss<double>(target, pred, mask.row(k)).value;
      for (Index i = 0; i < B; ++i) {
        const double frac = erase_overlap_fraction(erases[static_cast<std::size_t>(i)],
                                                   views[static_cast<std::size_t>(k)], H, W);
        expect(mask.keep(k, i) == !(frac > 0.4), "mask disagrees with overlap " + fmt(frac));
        Matrix<double> moved = pred;
        moved.col(i).array() += 3.0;
        const double after = regression_loss<double>(target, moved, mask.row(k)).value;
        if (!mask.keep(k, i)) {
          expect(after == base, "perturbing a masked prediction changed the loss");
          ++masked_seen;
        } else {
          expect(after != base, "perturbing a kept prediction left the loss unchanged");
          ++kept_seen;
        }
      }
    }
  }
  expect(masked_seen > 0 && kept_seen > 0, "random trials never exercised both branches");

  // Exactly 40% of the holistic 40x10 stripe (16 of 40 rows) stays in; one more row drops it.
  const EraseRecord at{0, 16, 0, 10, true};
  const EraseRecord over{0, 17, 0, 10, true};
  expect(erase_overlap_fraction(at, views[0], H, W) == 0.4, "boundary overlap is not 0.4");
  expect(make_view_mask({at}, {views[0]}, H, W).keep(0, 0), "0.40 overlap was masked");
  expect(!make_view_mask({over}, {views[0]}, H, W).keep(0, 0), "0.425 overlap was kept");
  return {true, std::to_string(masked_seen) + " masked and " + std::to_string(kept_seen) +
                    " kept predictions checked; 0.40 is kept"};
}

// --- 5 -------------------------------------------------------------------

Outcome metric() {
  std::mt19937_64 rng(505);
  Index evaluated = 0;
  for (int t = 0; t < 50; ++t) {
    const Index nq = 1 + static_cast<Index>(rng() % 30), ng = 1 + static_cast<Index>(rng() % 200);
    const int ids = 2 + static_cast<int>(rng() % 20), cams = 1 + static_cast<int>(rng() % 6);
    const bool ties = t % 3 == 0;
    const auto q = fd::test::random_index(rng, nq, 8, ids, cams, 0.0, ties);
    const auto g = fd::test::random_index(rng, ng, 8, ids, cams, 0.1, ties);
    const auto r = evaluate(q, g, Protocol::standard, false, 20);
    const auto o = fd::test::oracle(q, g, 20);
    expect(r.evaluated == o.evaluated && r.skipped == o.skipped, "instance " + std::to_string(t) + " query counts");
    evaluated += r.evaluated;
    if (r.evaluated == 0) continue;
    expect(std::abs(r.rank1 - o.rank1) <= 1e-12 && std::abs(r.map - o.map) <= 1e-12,
           "instance " + std::to_string(t) + ": rank-1 " + fmt(r.rank1) + " vs " + fmt(o.rank1) + ", mAP " +
               fmt(r.map) + " vs " + fmt(o.map));
    expect(r.cmc.size() == std::min<std::size_t>(20, static_cast<std::size_t>(ng)),
           "instance " + std::to_string(t) + " CMC depth");
    for (std::size_t k = 0; k < r.cmc.size(); ++k)
      expect(std::abs(r.cmc[k] - o.cmc[k]) <= 1e-12, "instance " + std::to_string(t) + " CMC");
  }
  GalleryIndex q, g;
  q.features = Matrix<float>(2, 1);
  q.features << 1, 0;
  q.identity = {7};
  q.camera = {1};
  g.features = Matrix<float>(2, 4);
  g.features << 1, 1, 1, 0, 0.1f, 0.5f, 0.9f, 1;
  g.identity = {7, 3, 7, 4};
  g.camera = {2, 2, 3, 2};
  const double ap = evaluate(q, g).map;
  expect(std::abs(ap - 5.0 / 6.0) <= 1e-9, "AP example gave " + fmt(ap, 12));
  return {true, "50 instances (" + std::to_string(evaluated) + " queries) match the oracle; AP example " + fmt(ap, 10)};
}

// --- 6 -------------------------------------------------------------------

Outcome sr_cache() {
  // Flip-averaging example with an embedding that reads the left and right pixel.
  const EmbedFn halves = [](std::span<const Image> ims) {
    Matrix<float> out(2, static_cast<Index>(ims.size()));
    for (std::size_t n = 0; n < ims.size(); ++n) {
      out(0, static_cast<Index>(n)) = ims[n](0, 0, 0);
      out(1, static_cast<Index>(n)) = ims[n](0, 0, 1);
    }
    return out;
  };
  Image im(1, 2);
  im(0, 0, 0) = 1.0f;
  const ViewSpec hol{"Holistic", {0, 1}, {1, 1}, 1, 2};
  const Vector<float> sr = generate_sr(halves, im, hol);
  expect(sr(0) == 0.5f && sr(1) == 0.5f, "flip-averaged example gave (" + fmt(sr(0)) + ", " + fmt(sr(1)) + ")");

  // Real teachers on a small synthetic set, then a full distillation run.
  const fs::path dir = kWork / "c6";
  fs::remove_all(dir);
  SyntheticSpec spec;
  spec.n_identities = 10;
  spec.test_identities = 4;
  spec.images_per_identity = 8;
  spec.cameras = 2;
  spec.queries_per_camera = 1;
  spec.palette = 4;
  generate_synthetic(spec, dir / "data");
  const TrainingData data = load_training_data(dir / "data");
  FDConfig c = desk_config();
  c.teacher_schedule.epochs = 2;
  c.final_schedule.epochs = 2;
  PipelineOptions opt;
  opt.workers = worker_count();
  train_teachers(c, data, dir / "teachers", opt);
  build_sr_cache(c, data, dir / "teachers", dir / "sr_cache", opt);
  const SRCache cache = SRCache::open(dir / "sr_cache", data.manifest.fingerprint);

  // Round trip: every cached entry equals a fresh extraction, bit for bit.
  const std::string s1 = step1_hash(c, data.manifest.fingerprint);
  for (std::size_t vi = 0; vi < c.views.size(); ++vi) {
    auto model = view_model_from_checkpoint(read_checkpoint(dir / "teachers" / (teacher_id(c.views[vi]) + ".ckpt"), s1));
    const Matrix<float> fresh = generate_srs(embed_fn(*model, c.normalization), data.train, c.views[vi]);
    expect(fresh == cache.view_matrix(static_cast<std::uint32_t>(vi)), c.views[vi].name + " cache differs");
  }
  const std::string before = cache_hash(dir / "sr_cache");
  const auto r = train_student_fd(c, data, cache, dir / "sr_cache",
                                  read_checkpoint(dir / "teachers" / "initial_student.ckpt", s1),
                                  config_hash(c, data.manifest.fingerprint), dir / "final.ckpt", nullptr, opt.workers);
  const std::string after = cache_hash(dir / "sr_cache");
  expect(r.cache_hash_before == before && r.cache_hash_after == before && after == before,
         "cache hash changed during distillation");
  return {true, std::to_string(cache.entries()) + " entries bit-exact; hash " + before.substr(0, 12) +
                    " unchanged by distillation; example (0.5, 0.5)"};
}

// --- 7 -------------------------------------------------------------------

Outcome schedule() {
  const FDConfig c = canonical_config();
  const Schedule& t = c.teacher_schedule;
  const Schedule& f = c.final_schedule;
  expect(lr_at(t, 0) == 0.0025 && lr_at(t, 19) == 0.0025 && lr_at(t, 20) == 0.00125, "teacher schedule");
  expect(lr_at(f, 44) == 0.0025 / 4 && lr_at(f, 45) == 0.0025 / 8, "final schedule");
  int halvings = 0;
  for (int e = 1; e <= 45; ++e) halvings += lr_at(f, e) == lr_at(f, e - 1) / 2;
  expect(halvings == 3, std::to_string(halvings) + " halvings by epoch 45");
  return {true, "teacher 0.0025 -> 0.00125 at epoch 20; final student 3 halvings by epoch 45"};
}

// --- 8 -------------------------------------------------------------------

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

fs::path seed_data(std::uint64_t seed) {
  const fs::path root = kWork / ("data_seed" + std::to_string(seed));
  if (!fs::exists(root / kManifestName)) {
    SyntheticSpec s;
    s.seed = seed;
    generate_synthetic(s, root);
  }
  return root;
}

Outcome end_to_end() {
  std::vector<double> fd_r1, base_r1;
  double slowest = 0.0;
  std::ostringstream per_seed;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const TrainingData data = load_training_data(seed_data(seed));
    FDConfig c = desk_config();
    c.seed = seed;
    const fs::path dir = kWork / ("c8_seed" + std::to_string(seed));
    fs::remove_all(dir);
    PipelineOptions opt;
    opt.workers = worker_count();
    opt.shared_dir = dir / "shared";
    const auto t0 = std::chrono::steady_clock::now();
    const auto fd = run_pipeline(c, data, dir / "fd", opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    slowest = std::max(slowest, secs);
    expect(fd.skipped_steps.empty(), "seed " + std::to_string(seed) + " skipped a step");
    expect(secs < 30 * 60, "seed " + std::to_string(seed) + " pipeline took " + fmt(secs) + " s");
    FDConfig b = c;
    b.loss = {0.0, 0.0};
    const auto base = run_pipeline(b, data, dir / "baseline", opt);
    fd_r1.push_back(fd.evaluation.rank1);
    base_r1.push_back(base.evaluation.rank1);
    per_seed << " s" << seed << " " << fmt(100 * fd.evaluation.rank1) << "/" << fmt(100 * base.evaluation.rank1);
  }
  const double mf = median(fd_r1), mb = median(base_r1);
  return {mf >= mb, "median rank-1 FD " + fmt(100 * mf) + "% vs baseline " + fmt(100 * mb) +
                        "% (FD/baseline per seed:" + per_seed.str() + "); slowest pipeline " + fmt(slowest, 3) +
                        " s"};
}

// --- 9 -------------------------------------------------------------------

Outcome ablations() {
  const TrainingData data = load_training_data(seed_data(1));
  PipelineOptions opt;
  opt.workers = worker_count();
  std::ostringstream detail;
  for (const auto& [axis, labels] :
       {std::pair<std::string, std::vector<std::string>>{"loss", {"L_cls", "+L_attr", "+L_metric", "+both"}},
        {"teachers", {"Hol", "Hol+G1", "Hol+G1+G2"}}}) {
    const fs::path dir = kWork / ("c9_" + axis);
    fs::remove_all(dir);
    const SweepSpec spec = sweep_from_json({{"name", axis + " ablation"}, {"base", "desk"}, {"axis", axis}});
    const SweepReport report = run_sweep(spec, data, dir, opt);
    expect(report.rows.size() == labels.size(), axis + " sweep has " + std::to_string(report.rows.size()) + " rows");
    const std::string table = report.table();
    std::ifstream md(dir / "sweep.md");
    const std::string written((std::istreambuf_iterator<char>(md)), std::istreambuf_iterator<char>());
    expect(written == table, axis + " sweep.md does not hold the table");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const SweepRow& row = report.rows[i];
      expect(row.label == labels[i], axis + " row " + std::to_string(i) + " is " + row.label);
      expect(std::isfinite(row.rank1) && std::isfinite(row.map) && row.map > 0, axis + " row " + row.label + " empty");
      expect(table.find(row.label) != std::string::npos, axis + " table lacks " + row.label);
    }
    detail << axis << ":";
    for (const auto& row : report.rows) detail << " " << row.label << " " << fmt(100 * row.rank1);
    detail << "; ";
  }
  std::string d = detail.str();
  d.resize(d.size() - 2);
  return {true, d};
}

// --- 10 ------------------------------------------------------------------

Outcome attention() {
  FeatureMap<float> f(1, 5, 8, 4);
  f.data.setZero();
  f(0, 3, 5, 2) = 2.5f;
  const auto a = extract_attention_mask(f, Image(128, 64));
  const float top = a.mask.maxCoeff();
  const auto at_top = (a.mask.array() == top).count();
  expect(at_top == 1 && a.mask(5, 2) == top && !a.degenerate,
         std::to_string(at_top) + " pixels share the mask maximum");

  const fs::path ckpt = kWork / "c8_seed1" / "fd" / "final_student.ckpt";
  expect(fs::exists(ckpt), "no trained student at " + ckpt.string());
  const fs::path out = kWork / "c10";
  fs::remove_all(out);
  const std::string cmd = std::string("\"") + FD_CLI_PATH + "\" -q attention --data \"" + seed_data(1).string() +
                          "\" --checkpoint \"" + ckpt.string() + "\" --out \"" + out.string() +
                          "\" --count 4 > \"" + (kWork / "c10.log").string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  expect(rc == 0, "CLI exited with status " + std::to_string(rc));
  int images = 0;
  for (const auto& e : fs::directory_iterator(out)) {
    const Image panel = load_image(e.path());
    expect(panel.width == 3 * panel.height / 2 && panel.pixels.allFinite(), e.path().filename().string() + " shape");
    ++images;
  }
  expect(images == 4, std::to_string(images) + " overlay images written");
  return {true, "one-hot mask has a single maximum; CLI wrote 4 overlay panels to " + out.string()};
}

}  // namespace

int main() {
  fs::create_directories(kWork);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradients},
      {"pooling identities", pooling},
      {"view geometry", geometry},
      {"masking rule", masking},
      {"metric oracle", metric},
      {"SR cache", sr_cache},
      {"schedule", schedule},
      {"end-to-end desk pipeline", end_to_end},
      {"ablation harness", ablations},
      {"attention masks", attention}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << std::setw(2) << i + 1 << "  " << criteria[i].first << ": "
              << o.detail << " [" << std::fixed << std::setprecision(1) << secs << " s]" << std::defaultfloat
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
