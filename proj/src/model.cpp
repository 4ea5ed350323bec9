// Copyright 2026 The trspose Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "trs/model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include <Eigen/Core>

#include "trs/rng.hpp"

namespace trs {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

int log2_exact(int v) {
  if (v < 1 || !std::has_single_bit(static_cast<unsigned>(v))) return -1;
  return std::countr_zero(static_cast<unsigned>(v));
}

// Bilinear 2x upsampling aligned so that output index 2i coincides with input
// index i; odd outputs average their two neighbors (edge replicated).
template <typename T>
void upsample2x(const T* in, int channels, int h, int w, T* out) {
  const int oh = 2 * h;
  const int ow = 2 * w;
  for (int c = 0; c < channels; ++c) {
    const T* src = in + static_cast<std::size_t>(c) * h * w;
    T* dst = out + static_cast<std::size_t>(c) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      const int y0 = oy / 2;
      const int y1 = (oy % 2) ? std::min(y0 + 1, h - 1) : y0;
      for (int ox = 0; ox < ow; ++ox) {
        const int x0 = ox / 2;
        const int x1 = (ox % 2) ? std::min(x0 + 1, w - 1) : x0;
        const T a = src[y0 * w + x0] + src[y0 * w + x1];
        const T b = src[y1 * w + x0] + src[y1 * w + x1];
        dst[oy * ow + ox] = T(0.25) * (a + b);
      }
    }
  }
}

template <typename T>
void upsample2x_backward(const T* d_out, int channels, int h, int w, T* d_in) {
  const int oh = 2 * h;
  const int ow = 2 * w;
  std::fill(d_in, d_in + static_cast<std::size_t>(channels) * h * w, T(0));
  for (int c = 0; c < channels; ++c) {
    const T* g = d_out + static_cast<std::size_t>(c) * oh * ow;
    T* dst = d_in + static_cast<std::size_t>(c) * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      const int y0 = oy / 2;
      const int y1 = (oy % 2) ? std::min(y0 + 1, h - 1) : y0;
      for (int ox = 0; ox < ow; ++ox) {
        const int x0 = ox / 2;
        const int x1 = (ox % 2) ? std::min(x0 + 1, w - 1) : x0;
        const T q = T(0.25) * g[oy * ow + ox];
        dst[y0 * w + x0] += q;
        dst[y0 * w + x1] += q;
        dst[y1 * w + x0] += q;
        dst[y1 * w + x1] += q;
      }
    }
  }
}

// 3x3 patches with zero padding 1.
template <typename T>
void im2col(const T* in, int channels, int h, int w, int stride, int oh, int ow, T* col) {
  const std::size_t hw = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < channels; ++c) {
    const T* src = in + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = col + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * hw;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - 1;
          T* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - 1;
            dst[ox] = (ix >= 0 && ix < w) ? src[iy * w + ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int channels, int h, int w, int stride, int oh, int ow, T* out) {
  std::fill(out, out + static_cast<std::size_t>(channels) * h * w, T(0));
  const std::size_t hw = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < channels; ++c) {
    T* dst = out + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = col + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * hw;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - 1;
            if (ix >= 0 && ix < w) dst[iy * w + ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void conv_forward(const typename Network<T>::Conv& c, const T* params, const T* input, int src_h, int src_w,
                  ConvCache<T>& cc) {
  std::vector<T> upsampled;
  const T* in = input;
  cc.src_h = src_h;
  cc.src_w = src_w;
  cc.in_h = src_h;
  cc.in_w = src_w;
  if (c.upsample) {
    cc.in_h = 2 * src_h;
    cc.in_w = 2 * src_w;
    upsampled.resize(static_cast<std::size_t>(c.cin) * cc.in_h * cc.in_w);
    upsample2x(input, c.cin, src_h, src_w, upsampled.data());
    in = upsampled.data();
  }
  cc.out_h = (cc.in_h - 1) / c.stride + 1;
  cc.out_w = (cc.in_w - 1) / c.stride + 1;
  const Eigen::Index hw = static_cast<Eigen::Index>(cc.out_h) * cc.out_w;
  const Eigen::Index k = static_cast<Eigen::Index>(c.cin) * 9;
  cc.col.resize(static_cast<std::size_t>(k * hw));
  im2col(in, c.cin, cc.in_h, cc.in_w, c.stride, cc.out_h, cc.out_w, cc.col.data());
  cc.out.resize(static_cast<std::size_t>(c.cout * hw));

  Eigen::Map<const RowMat<T>> weight(params + c.weight, c.cout, k);
  Eigen::Map<const ColVec<T>> bias(params + c.bias, c.cout);
  Eigen::Map<const RowMat<T>> col(cc.col.data(), k, hw);
  Eigen::Map<RowMat<T>> out(cc.out.data(), c.cout, hw);
  out.noalias() = weight * col;
  out.colwise() += bias;
  if (c.logistic) {
    // Scalar loop: Eigen's vectorized exp differs from std::exp in the last
    // bits and its peeling depends on buffer alignment, which is not stable.
    for (T& v : cc.out) v = T(1) / (T(1) + std::exp(-v));
  } else {
    out = out.cwiseMax(T(0));
  }
}

// Consumes dL/d(out) in `d_out` (overwritten) and returns dL/d(source input)
// in `d_src` when requested.
template <typename T>
void conv_backward(const typename Network<T>::Conv& c, const T* params, const ConvCache<T>& cc, std::vector<T>& d_out,
                   T* grads, std::vector<T>* d_src) {
  const Eigen::Index hw = static_cast<Eigen::Index>(cc.out_h) * cc.out_w;
  const Eigen::Index k = static_cast<Eigen::Index>(c.cin) * 9;
  Eigen::Map<const RowMat<T>> out(cc.out.data(), c.cout, hw);
  Eigen::Map<RowMat<T>> da(d_out.data(), c.cout, hw);
  if (c.logistic) {
    da.array() *= out.array() * (T(1) - out.array());
  } else {
    da.array() *= (out.array() > T(0)).template cast<T>();
  }
  Eigen::Map<const RowMat<T>> col(cc.col.data(), k, hw);
  Eigen::Map<RowMat<T>> g_weight(grads + c.weight, c.cout, k);
  Eigen::Map<ColVec<T>> g_bias(grads + c.bias, c.cout);
  g_weight.noalias() += da * col.transpose();
  for (Eigen::Index r = 0; r < c.cout; ++r) {
    T sum = T(0);
    for (Eigen::Index i = 0; i < hw; ++i) sum += da(r, i);
    g_bias(r) += sum;
  }
  if (!d_src) return;

  Eigen::Map<const RowMat<T>> weight(params + c.weight, c.cout, k);
  std::vector<T> d_col(static_cast<std::size_t>(k * hw));
  Eigen::Map<RowMat<T>> dc(d_col.data(), k, hw);
  dc.noalias() = weight.transpose() * da;
  std::vector<T> d_in(static_cast<std::size_t>(c.cin) * cc.in_h * cc.in_w);
  col2im(d_col.data(), c.cin, cc.in_h, cc.in_w, c.stride, cc.out_h, cc.out_w, d_in.data());
  if (c.upsample) {
    d_src->resize(static_cast<std::size_t>(c.cin) * cc.src_h * cc.src_w);
    upsample2x_backward(d_in.data(), c.cin, cc.src_h, cc.src_w, d_src->data());
  } else {
    *d_src = std::move(d_in);
  }
}

template <typename T>
HeatmapStack<T> to_stack(const ConvCache<T>& cc, int joints, int stride) {
  HeatmapStack<T> s;
  s.stride = stride;
  s.values.channels = joints;
  s.values.height = cc.out_h;
  s.values.width = cc.out_w;
  s.values.data = cc.out;
  return s;
}

}  // namespace

void ArchConfig::validate() const {
  if (stages() < 2) throw ConfigError("architecture needs at least 2 stages for two heatmap levels");
  for (int c : channels) {
    if (c < 1) throw ConfigError("stage channel counts must be positive");
  }
  if (head_channels < 1) throw ConfigError("head_channels must be positive");
  if (joints < 1) throw ConfigError("joints must be positive");
  const int hs = log2_exact(heatmap_stride);
  if (hs < 0) throw ConfigError("heatmap_stride must be a power of two");
  if (hs > stages() - 1) throw ConfigError("heatmap_stride exceeds the penultimate stage stride");
  const int total = 1 << stages();
  if (input_height < total || input_width < total || input_height % total != 0 || input_width % total != 0) {
    throw ConfigError("input resolution must be a multiple of 2^stages = " + std::to_string(total));
  }
}

const TensorInfo& ParameterLayout::find(const std::string& name) const {
  for (const TensorInfo& t : tensors) {
    if (t.name == name) return t;
  }
  throw ConfigError("no parameter named " + name);
}

std::shared_ptr<const ParameterLayout> ParameterLayout::build(
    std::vector<std::pair<std::string, std::vector<int>>> entries) {
  auto layout = std::make_shared<ParameterLayout>();
  std::string signature;
  for (auto& [name, shape] : entries) {
    TensorInfo info;
    info.name = name;
    info.shape = shape;
    info.offset = layout->total;
    info.size = 1;
    signature += name + ":";
    for (int d : shape) {
      info.size *= static_cast<std::size_t>(d);
      signature += std::to_string(d) + ",";
    }
    signature += ";";
    layout->total += info.size;
    layout->tensors.push_back(std::move(info));
  }
  layout->fingerprint = hex64(fnv1a(signature.data(), signature.size()));
  return layout;
}

template <typename T>
bool ParameterSet<T>::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(static_cast<double>(v)); });
}

template <typename T>
std::string value_hash(const ParameterSet<T>& params) {
  std::uint64_t h = fnv1a(params.fingerprint().data(), params.fingerprint().size());
  h = fnv1a(params.values.data(), params.values.size() * sizeof(T), h);
  return hex64(h);
}

template <typename T>
Network<T>::Network(ArchConfig arch) : arch_(std::move(arch)) {
  arch_.validate();
  std::vector<std::pair<std::string, std::vector<int>>> entries;
  auto add_conv = [&](std::vector<Conv>& list, const std::string& prefix, Conv conv) {
    const std::string idx = std::to_string(list.size());
    entries.push_back({prefix + "." + idx + ".weight", {conv.cout, conv.cin, 3, 3}});
    entries.push_back({prefix + "." + idx + ".bias", {conv.cout}});
    list.push_back(conv);
  };
  int cin = 1;
  for (int s = 0; s < arch_.stages(); ++s) {
    add_conv(backbone_, "backbone", {cin, arch_.channels[s], 2, false, false});
    cin = arch_.channels[s];
  }
  auto add_head = [&](std::vector<Conv>& list, const std::string& prefix, int stage) {
    const int stage_stride = 1 << (stage + 1);
    const int ups = log2_exact(stage_stride / arch_.heatmap_stride);
    int c = arch_.channels[stage];
    if (ups == 0) {
      add_conv(list, prefix, {c, arch_.joints, 1, false, true});
      return;
    }
    for (int u = 0; u < ups; ++u) {
      const bool last = u + 1 == ups;
      const int cout = last ? arch_.joints : arch_.head_channels;
      add_conv(list, prefix, {c, cout, 1, true, last});
      c = cout;
    }
  };
  add_head(head_z_, "head_z", arch_.stages() - 1);
  add_head(head_p_, "head_p", arch_.stages() - 2);
  layout_ = ParameterLayout::build(entries);

  std::size_t t = 0;
  for (auto* list : {&backbone_, &head_z_, &head_p_}) {
    for (Conv& c : *list) {
      c.weight = layout_->tensors[t++].offset;
      c.bias = layout_->tensors[t++].offset;
    }
  }
}

template <typename T>
ParameterSet<T> Network<T>::init(std::uint64_t seed) const {
  ParameterSet<T> p{layout_, std::vector<T>(layout_->total, T(0))};
  Rng rng(seed);
  for (const TensorInfo& info : layout_->tensors) {
    if (info.shape.size() != 4) continue;  // biases stay zero
    const int fan_in = info.shape[1] * info.shape[2] * info.shape[3];
    const double bound = std::sqrt(6.0 / fan_in);
    for (std::size_t i = 0; i < info.size; ++i) p.values[info.offset + i] = static_cast<T>(rng.uniform(-bound, bound));
  }
  // Output biases start at a low-confidence prior so the logistic does not
  // begin at 0.5 over a mostly-empty target and saturate while correcting.
  for (const auto* head : {&head_z_, &head_p_}) {
    const Conv& out = head->back();
    for (int c = 0; c < out.cout; ++c) p.values[out.bias + static_cast<std::size_t>(c)] = static_cast<T>(kOutputPriorLogit);
  }
  return p;
}

template <typename T>
void Network<T>::check(const ParameterSet<T>& params) const {
  if (!params.layout || params.layout->fingerprint != layout_->fingerprint || params.values.size() != layout_->total) {
    throw ShapeError("parameter set does not match the architecture (fingerprint " +
                     (params.layout ? params.layout->fingerprint : std::string("<none>")) + " vs " +
                     layout_->fingerprint + ")");
  }
}

template <typename T>
MultiLevelOutput<T> Network<T>::forward(const ParameterSet<T>& params, const Grid<T>& image, LevelSet levels,
                                        ForwardCache<T>* cache) const {
  check(params);
  if (image.channels != 1 || image.height != arch_.input_height || image.width != arch_.input_width) {
    throw ShapeError("forward: expected a 1x" + std::to_string(arch_.input_height) + "x" +
                     std::to_string(arch_.input_width) + " image, got " + std::to_string(image.channels) + "x" +
                     std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  ForwardCache<T> local;
  ForwardCache<T>& fc = cache ? *cache : local;
  fc.levels = levels;
  fc.backbone.assign(backbone_.size(), {});
  fc.head_z.clear();
  fc.head_p.clear();
  const T* w = params.values.data();

  const T* x = image.data.data();
  int h = image.height;
  int wd = image.width;
  for (std::size_t s = 0; s < backbone_.size(); ++s) {
    conv_forward<T>(backbone_[s], w, x, h, wd, fc.backbone[s]);
    x = fc.backbone[s].out.data();
    h = fc.backbone[s].out_h;
    wd = fc.backbone[s].out_w;
  }

  auto run_head = [&](const std::vector<Conv>& head, const ConvCache<T>& feature, std::vector<ConvCache<T>>& caches) {
    caches.assign(head.size(), {});
    const T* in = feature.out.data();
    int ih = feature.out_h;
    int iw = feature.out_w;
    for (std::size_t i = 0; i < head.size(); ++i) {
      conv_forward<T>(head[i], w, in, ih, iw, caches[i]);
      in = caches[i].out.data();
      ih = caches[i].out_h;
      iw = caches[i].out_w;
    }
    return to_stack(caches.back(), arch_.joints, arch_.heatmap_stride);
  };

  MultiLevelOutput<T> out;
  const std::size_t last = backbone_.size() - 1;
  if (levels.z) out.level_z = run_head(head_z_, fc.backbone[last], fc.head_z);
  if (levels.p) out.level_p = run_head(head_p_, fc.backbone[last - 1], fc.head_p);
  return out;
}

template <typename T>
void Network<T>::backward(const ParameterSet<T>& params, const ForwardCache<T>& cache, const Grid<T>* d_level_z,
                          const Grid<T>* d_level_p, ParameterSet<T>& grads) const {
  check(params);
  check(grads);
  const T* w = params.values.data();
  T* g = grads.values.data();
  const std::size_t last = backbone_.size() - 1;

  auto head_backward = [&](const std::vector<Conv>& head, const std::vector<ConvCache<T>>& caches, const Grid<T>& d_out,
                           std::vector<T>& d_feature) {
    if (caches.size() != head.size()) throw ShapeError("backward: level was not computed in forward");
    if (d_out.size() != caches.back().out.size()) throw ShapeError("backward: output gradient shape mismatch");
    std::vector<T> d = d_out.data;
    for (std::size_t i = head.size(); i-- > 0;) {
      std::vector<T> d_src;
      conv_backward<T>(head[i], w, caches[i], d, g, &d_src);
      d = std::move(d_src);
    }
    if (d_feature.empty()) {
      d_feature = std::move(d);
    } else {
      for (std::size_t i = 0; i < d.size(); ++i) d_feature[i] += d[i];
    }
  };

  std::vector<std::vector<T>> d_feat(backbone_.size());
  if (d_level_z) head_backward(head_z_, cache.head_z, *d_level_z, d_feat[last]);
  if (d_level_p) head_backward(head_p_, cache.head_p, *d_level_p, d_feat[last - 1]);

  for (std::size_t s = backbone_.size(); s-- > 0;) {
    if (d_feat[s].empty()) continue;
    if (s == 0) {
      conv_backward<T>(backbone_[s], w, cache.backbone[s], d_feat[s], g, nullptr);
      break;
    }
    std::vector<T> below;
    conv_backward<T>(backbone_[s], w, cache.backbone[s], d_feat[s], g, &below);
    if (d_feat[s - 1].empty()) {
      d_feat[s - 1] = std::move(below);
    } else {
      for (std::size_t i = 0; i < below.size(); ++i) d_feat[s - 1][i] += below[i];
    }
  }
}

template <typename T>
std::size_t GradientTape<T>::forward(const Grid<T>& image, LevelSet levels) {
  Record rec;
  rec.output = net_->forward(*params_, image, levels, &rec.cache);
  records_.emplace_back(std::move(rec));
  return records_.size() - 1;
}

template <typename T>
void GradientTape<T>::backward(std::size_t handle, const Grid<T>* d_level_z, const Grid<T>* d_level_p) {
  if (handle >= records_.size() || !records_[handle]) throw ConfigError("gradient tape: invalid or consumed handle");
  net_->backward(*params_, records_[handle]->cache, d_level_z, d_level_p, grads_);
  records_[handle].reset();
}

template <typename T>
ParameterSet<T> apply_sgd_step(const ParameterSet<T>& params, const ParameterSet<T>& grads, double learning_rate) {
  if (!params.compatible(grads) || params.size() != grads.size()) throw ShapeError("sgd: gradient shape mismatch");
  ParameterSet<T> out = params;
  const T lr = static_cast<T>(learning_rate);
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= lr * grads.values[i];
  return out;
}

template <typename T>
ParameterSet<T> apply_adam_step(const ParameterSet<T>& params, const ParameterSet<T>& grads, double learning_rate,
                                AdamState<T>& state) {
  if (!params.compatible(grads) || params.size() != grads.size()) throw ShapeError("adam: gradient shape mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), T(0));
    state.v.assign(params.size(), T(0));
    state.step = 0;
  }
  if (state.m.size() != params.size()) throw ShapeError("adam: state shape mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  const T step = static_cast<T>(learning_rate * std::sqrt(c2) / c1);
  const T b1 = static_cast<T>(kAdamBeta1);
  const T b2 = static_cast<T>(kAdamBeta2);
  const T eps = static_cast<T>(kAdamEpsilon * std::sqrt(c2));
  ParameterSet<T> out = params;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const T gi = grads.values[i];
    state.m[i] = b1 * state.m[i] + (T(1) - b1) * gi;
    state.v[i] = b2 * state.v[i] + (T(1) - b2) * gi * gi;
    out.values[i] -= step * state.m[i] / (std::sqrt(state.v[i]) + eps);
  }
  return out;
}

#define TRS_INSTANTIATE(T)                                                                                  \
  template struct ParameterSet<T>;                                                                          \
  template std::string value_hash<T>(const ParameterSet<T>&);                                               \
  template class Network<T>;                                                                                \
  template class GradientTape<T>;                                                                           \
  template ParameterSet<T> apply_sgd_step<T>(const ParameterSet<T>&, const ParameterSet<T>&, double);       \
  template ParameterSet<T> apply_adam_step<T>(const ParameterSet<T>&, const ParameterSet<T>&, double, AdamState<T>&);

TRS_INSTANTIATE(float)
TRS_INSTANTIATE(double)

#undef TRS_INSTANTIATE

}  // namespace trs
