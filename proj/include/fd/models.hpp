#pragma once

#include "fd/backbones.hpp"
#include "fd/heads.hpp"
#include "fd/pooling.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fd {

/// Single-view network: backbone -> stabilized GMP -> Embedding -> classifier.
/// Teachers and the initial holistic student are both ViewModels.
struct ViewModelSpec {
  BackboneSpec backbone;
  Index embedding_dim = 512;
  Index num_classes = 1;
  Index pool_m = 4;
};

template <typename T>
class ViewModel {
 public:
  struct Outputs {
    FeatureMap<T> f;
    Matrix<T> p;
    Matrix<T> r;
    Matrix<T> z;
  };

  ViewModel(const ViewModelSpec& spec, std::uint64_t seed) : spec_(spec), pool_(spec.pool_m) {
    Rng rng(seed);
    backbone_ = make_backbone<T>(spec.backbone, "backbone.", rng);
    embedding_ = Embedding<T>("embedding", backbone_->out_channels(), spec.embedding_dim, rng);
    classifier_ = Classifier<T>("classifier.weight", spec.embedding_dim, spec.num_classes, rng);
  }

  const ViewModelSpec& spec() const { return spec_; }

  Outputs forward(const FeatureMap<T>& x, bool training) {
    Outputs o;
    o.f = backbone_->forward(x, training);
    o.p = pool_.forward(o.f);
    o.r = embedding_.forward(o.p, training);
    o.z = classifier_.forward(o.r);
    return o;
  }

  /// Inference-mode representation r (embedding BN output), one column per image.
  Matrix<T> represent(const FeatureMap<T>& x) {
    const FeatureMap<T> f = backbone_->forward(x, false);
    return embedding_.forward(pool_.forward(f), false);
  }

  FeatureMap<T> feature_maps(const FeatureMap<T>& x) { return backbone_->forward(x, false); }

  /// Backpropagates the logit gradient; `extra_r` / `extra_f` are gradients
  /// arriving at r and f from attached branches.
  void backward(const Matrix<T>& grad_z, const Matrix<T>* extra_r = nullptr,
                const FeatureMap<T>* extra_f = nullptr) {
    Matrix<T> dr = classifier_.backward(grad_z);
    if (extra_r) dr += *extra_r;
    const Matrix<T> dp = embedding_.backward(dr);
    FeatureMap<T> df = pool_.backward(dp);
    if (extra_f) df.data += extra_f->data;
    backbone_->backward(df);
  }

  ParamList<T> params() {
    ParamList<T> out;
    backbone_->collect(out);
    embedding_.collect(out);
    classifier_.collect(out);
    return out;
  }

  Index feature_channels() const { return backbone_->out_channels(); }
  const Embedding<T>& embedding() const { return embedding_; }

 private:
  ViewModelSpec spec_;
  std::unique_ptr<Backbone<T>> backbone_;
  StabilizedGmp<T> pool_;
  Embedding<T> embedding_;
  Classifier<T> classifier_;
};

/// One distillation target: a view whose teacher representation has `target_dim` components.
struct BranchSpec {
  std::string view;
  Index target_dim = 256;
  bool holistic = false;
};

struct StudentSpec {
  ViewModelSpec base;
  std::vector<BranchSpec> branches;
  Index feat_sel_channels = 512;
  Index fmfb_m = 4;
};

/// Holistic student with a feature-maps factorization branch (FMFB) and a
/// representation factorization branch (RFB) per distilled view. Base
/// parameter names match ViewModel so an initial student loads directly.
template <typename T>
class StudentModel {
 public:
  struct Outputs {
    FeatureMap<T> f;
    Matrix<T> p;
    Matrix<T> r;
    Matrix<T> z;
    std::vector<Matrix<T>> attr;
    std::vector<Matrix<T>> metric;
    std::vector<FeatureMap<T>> selected;
  };

  struct Active {
    bool fmfb = true;
    bool rfb = true;
  };

  StudentModel(const StudentSpec& spec, std::uint64_t seed) : spec_(spec), base_(spec.base, seed) {
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    const Index c = base_.feature_channels();
    for (const auto& b : spec.branches) {
      const std::string fm = "fmfb." + b.view;
      fmfb_.push_back({FeatSelMaps<T>(fm + ".featsel", c, spec.feat_sel_channels, rng),
                       StabilizedGmp<T>(spec.fmfb_m),
                       Embedding<T>(fm + ".embedding", spec.feat_sel_channels, b.target_dim, rng)});
      const std::string rb = "rfb." + b.view;
      RfbBranch branch;
      Index in = spec.base.embedding_dim;
      if (!b.holistic) {
        branch.featsel.emplace(rb + ".featsel", spec.base.embedding_dim, spec.feat_sel_channels,
                               rng);
        in = spec.feat_sel_channels;
      }
      branch.mapping = Mapping<T>(rb + ".mapping", in, b.target_dim, rng);
      rfb_.push_back(std::move(branch));
    }
  }

  const StudentSpec& spec() const { return spec_; }
  ViewModel<T>& base() { return base_; }
  std::size_t branches() const { return spec_.branches.size(); }

  Outputs forward(const FeatureMap<T>& x, bool training, Active active = {}) {
    Outputs o;
    auto b = base_.forward(x, training);
    o.f = std::move(b.f);
    o.p = std::move(b.p);
    o.r = std::move(b.r);
    o.z = std::move(b.z);
    for (auto& br : fmfb_) {
      if (!active.fmfb) break;
      FeatureMap<T> sel = br.featsel.forward(o.f, training);
      o.attr.push_back(br.embedding.forward(br.pool.forward(sel), training));
      o.selected.push_back(std::move(sel));
    }
    for (auto& br : rfb_) {
      if (!active.rfb) break;
      o.metric.push_back(br.forward(o.r, training));
    }
    return o;
  }

  /// Gradients for inactive branch families are passed as empty vectors.
  void backward(const Matrix<T>& grad_z, const std::vector<Matrix<T>>& grad_attr,
                const std::vector<Matrix<T>>& grad_metric) {
    std::optional<FeatureMap<T>> df;
    for (std::size_t k = 0; k < grad_attr.size(); ++k) {
      auto& br = fmfb_[k];
      FeatureMap<T> g = br.featsel.backward(br.pool.backward(br.embedding.backward(grad_attr[k])));
      if (df)
        df->data += g.data;
      else
        df = std::move(g);
    }
    std::optional<Matrix<T>> dr;
    for (std::size_t k = 0; k < grad_metric.size(); ++k) {
      Matrix<T> g = rfb_[k].backward(grad_metric[k]);
      if (dr)
        *dr += g;
      else
        dr = std::move(g);
    }
    base_.backward(grad_z, dr ? &*dr : nullptr, df ? &*df : nullptr);
  }

  ParamList<T> base_params() { return base_.params(); }

  ParamList<T> fmfb_params() {
    ParamList<T> out;
    for (auto& br : fmfb_) {
      br.featsel.collect(out);
      br.embedding.collect(out);
    }
    return out;
  }

  ParamList<T> rfb_params() {
    ParamList<T> out;
    for (auto& br : rfb_) br.collect(out);
    return out;
  }

  ParamList<T> params() {
    ParamList<T> out = base_params();
    for (auto* p : fmfb_params()) out.push_back(p);
    for (auto* p : rfb_params()) out.push_back(p);
    return out;
  }

 private:
  struct FmfbBranch {
    FeatSelMaps<T> featsel;
    StabilizedGmp<T> pool;
    Embedding<T> embedding;
  };

  struct RfbBranch {
    std::optional<FeatSelVector<T>> featsel;
    Mapping<T> mapping;

    Matrix<T> forward(const Matrix<T>& r, bool training) {
      return featsel ? mapping.forward(featsel->forward(r, training), training)
                     : mapping.forward(r, training);
    }
    Matrix<T> backward(const Matrix<T>& grad) {
      const Matrix<T> g = mapping.backward(grad);
      return featsel ? featsel->backward(g) : g;
    }
    void collect(ParamList<T>& out) {
      if (featsel) featsel->collect(out);
      mapping.collect(out);
    }
  };

  StudentSpec spec_;
  ViewModel<T> base_;
  std::vector<FmfbBranch> fmfb_;
  std::vector<RfbBranch> rfb_;
};

extern template class ViewModel<float>;
extern template class ViewModel<double>;
extern template class StudentModel<float>;
extern template class StudentModel<double>;

}  // namespace fd
