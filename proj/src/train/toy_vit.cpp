#include "pft/train/toy_vit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "pft/error.hpp"
#include "pft/train/rng.hpp"

namespace pft::train {

namespace {

constexpr double kLnEps = 1e-6;

// y[r, o] = b[o] + sum_i W[o, i] x[r, i]
void linear(const double* x, size_t rows, size_t in, const double* w, const double* b, size_t out, double* y) {
  for (size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * in;
    double* yr = y + r * out;
    for (size_t o = 0; o < out; ++o) {
      const double* wo = w + o * in;
      double acc = b[o];
      for (size_t i = 0; i < in; ++i) acc += wo[i] * xr[i];
      yr[o] = acc;
    }
  }
}

// Accumulates dW and db when non-null; overwrites dx when non-null.
void linear_backward(const double* dy, const double* x, size_t rows, size_t in, size_t out, const double* w, double* dw,
                     double* db, double* dx) {
  for (size_t r = 0; r < rows; ++r) {
    const double* dyr = dy + r * out;
    const double* xr = x + r * in;
    if (dw)
      for (size_t o = 0; o < out; ++o) {
        double* dwo = dw + o * in;
        const double g = dyr[o];
        for (size_t i = 0; i < in; ++i) dwo[i] += g * xr[i];
      }
    if (db)
      for (size_t o = 0; o < out; ++o) db[o] += dyr[o];
    if (dx) {
      double* dxr = dx + r * in;
      std::fill(dxr, dxr + in, 0.0);
      for (size_t o = 0; o < out; ++o) {
        const double* wo = w + o * in;
        const double g = dyr[o];
        for (size_t i = 0; i < in; ++i) dxr[i] += g * wo[i];
      }
    }
  }
}

void layer_norm(const double* x, size_t rows, size_t dim, const double* gain, const double* bias, double* xhat,
                double* rstd, double* y) {
  for (size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * dim;
    double mean = 0.0;
    for (size_t i = 0; i < dim; ++i) mean += xr[i];
    mean /= static_cast<double>(dim);
    double var = 0.0;
    for (size_t i = 0; i < dim; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<double>(dim);
    const double rs = 1.0 / std::sqrt(var + kLnEps);
    rstd[r] = rs;
    for (size_t i = 0; i < dim; ++i) {
      const double h = (xr[i] - mean) * rs;
      xhat[r * dim + i] = h;
      y[r * dim + i] = gain[i] * h + bias[i];
    }
  }
}

// Adds the input gradient into dx when non-null.
void layer_norm_backward(const double* dy, const double* xhat, const double* rstd, size_t rows, size_t dim,
                         const double* gain, double* dgain, double* dbias, double* dx) {
  const double inv_dim = 1.0 / static_cast<double>(dim);
  for (size_t r = 0; r < rows; ++r) {
    const double* dyr = dy + r * dim;
    const double* hr = xhat + r * dim;
    if (dgain)
      for (size_t i = 0; i < dim; ++i) dgain[i] += dyr[i] * hr[i];
    if (dbias)
      for (size_t i = 0; i < dim; ++i) dbias[i] += dyr[i];
    if (!dx) continue;
    double sum = 0.0, sum_h = 0.0;
    for (size_t i = 0; i < dim; ++i) {
      const double g = dyr[i] * gain[i];
      sum += g;
      sum_h += g * hr[i];
    }
    for (size_t i = 0; i < dim; ++i) {
      const double g = dyr[i] * gain[i];
      dx[r * dim + i] += rstd[r] * (g - sum * inv_dim - hr[i] * sum_h * inv_dim);
    }
  }
}

double gelu(double z) { return 0.5 * z * (1.0 + std::erf(z * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double z) {
  static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return 0.5 * (1.0 + std::erf(z * std::numbers::sqrt2 / 2.0)) + z * std::exp(-0.5 * z * z) * inv_sqrt_2pi;
}

double* grad_if(Param& p) { return p.trainable ? p.grad.data() : nullptr; }

}  // namespace

struct ToyVit::SampleCache {
  struct Block {
    std::vector<double> x_in, xhat1, rstd1, u1, qkv, probs, o, x_mid, xhat2, rstd2, u2, z, g;
  };
  std::vector<double> input;
  std::vector<Block> blocks;
  std::vector<double> x_out, xhat_f, u_f;
  double rstd_f = 0.0;
  std::vector<double> logits;
};

ToyVit::ToyVit(const ToyDims& dims, int64_t num_classes)
    : dims_(dims), num_classes_(num_classes), arch_(describe_arch("toy_vit", dims)) {
  if (num_classes < 1) fail(ErrorKind::InvalidValue, "num_classes must be positive");
  for (auto& t : arch_.all_tensors(num_classes)) {
    Param p;
    p.name = t.name;
    p.shape = t.shape;
    const auto n = static_cast<size_t>(shape_numel(t.shape));
    p.value.assign(n, 0.0);
    p.grad.assign(n, 0.0);
    params_.push_back(std::move(p));
  }
  for (int b = 0; b < dims.depth; ++b) {
    const std::string pre = "blocks." + std::to_string(b) + ".";
    blocks_.push_back({index_of(pre + "norm1.weight"), index_of(pre + "norm1.bias"), index_of(pre + "attn.qkv.weight"),
                       index_of(pre + "attn.qkv.bias"), index_of(pre + "attn.proj.weight"),
                       index_of(pre + "attn.proj.bias"), index_of(pre + "norm2.weight"), index_of(pre + "norm2.bias"),
                       index_of(pre + "mlp.fc1.weight"), index_of(pre + "mlp.fc1.bias"),
                       index_of(pre + "mlp.fc2.weight"), index_of(pre + "mlp.fc2.bias")});
  }
  patch_w_ = index_of("patch_embed.proj.weight");
  patch_b_ = index_of("patch_embed.proj.bias");
  cls_ = index_of("cls_token");
  pos_ = index_of("pos_embed");
  norm_w_ = index_of("norm.weight");
  norm_b_ = index_of("norm.bias");
  head_w_ = index_of("head.weight");
  head_b_ = index_of("head.bias");
}

size_t ToyVit::index_of(std::string_view name) const {
  for (size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  fail(ErrorKind::UnmappedTensor, "toy_vit has no tensor " + std::string(name));
}

Param& ToyVit::param(std::string_view name) { return params_[index_of(name)]; }
const Param& ToyVit::param(std::string_view name) const { return params_[index_of(name)]; }

void ToyVit::init_fresh(uint64_t seed, double std) {
  Rng rng(Rng::derive(seed, 10));
  for (auto& p : params_) {
    const bool is_norm = p.name.find("norm") != std::string::npos && p.name.find("patch_embed") == std::string::npos;
    if (p.shape.size() > 1) {
      for (auto& v : p.value) v = rng.trunc_normal(std);
    } else if (is_norm && p.name.ends_with(".weight")) {
      std::fill(p.value.begin(), p.value.end(), 1.0);
    } else {
      std::fill(p.value.begin(), p.value.end(), 0.0);
    }
  }
  round_to_storage();
}

void ToyVit::init_head(uint64_t seed, double std) {
  Rng rng(Rng::derive(seed, 11));
  for (auto& v : params_[head_w_].value) v = static_cast<float>(rng.trunc_normal(std));
  std::fill(params_[head_b_].value.begin(), params_[head_b_].value.end(), 0.0);
}

void ToyVit::load(const Checkpoint& ckpt, const std::set<std::string>& skip) {
  for (const auto& [name, tensor] : ckpt.tensors()) {
    if (skip.contains(name)) continue;
    bool found = false;
    for (auto& p : params_) {
      if (p.name != name) continue;
      if (p.shape != tensor.shape())
        fail(ErrorKind::IncompatibleCheckpoints, "tensor " + name + " has shape " + shape_to_string(tensor.shape()) +
                                                     ", model expects " + shape_to_string(p.shape));
      std::copy(tensor.data().begin(), tensor.data().end(), p.value.begin());
      found = true;
      break;
    }
    if (!found) fail(ErrorKind::IncompatibleCheckpoints, "checkpoint tensor " + name + " does not belong to toy_vit");
  }
  for (const auto& p : params_)
    if (!skip.contains(p.name) && !ckpt.contains(p.name))
      fail(ErrorKind::IncompatibleCheckpoints, "checkpoint lacks tensor " + p.name);
}

void ToyVit::set_trainable(const std::set<std::string>& names) {
  for (auto& p : params_) p.trainable = names.contains(p.name);
}

void ToyVit::set_all_trainable() {
  for (auto& p : params_) p.trainable = true;
}

void ToyVit::round_to_storage() {
  for (auto& p : params_)
    for (auto& v : p.value) v = static_cast<double>(static_cast<float>(v));
}

void ToyVit::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

void ToyVit::forward_sample(const float* x, SampleCache& c) const {
  const size_t T = static_cast<size_t>(dims_.seq_len), L = T + 1, D = static_cast<size_t>(dims_.model_dim),
               Fin = static_cast<size_t>(dims_.feature_dim), F = static_cast<size_t>(dims_.ffn_dim),
               H = static_cast<size_t>(dims_.heads), dh = D / H, C = static_cast<size_t>(num_classes_);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto v = [&](size_t i) { return params_[i].value.data(); };

  c.input.assign(x, x + T * Fin);
  std::vector<double> h(L * D);
  const double* cls = v(cls_);
  const double* pos = v(pos_);
  for (size_t d = 0; d < D; ++d) h[d] = cls[d] + pos[d];
  linear(c.input.data(), T, Fin, v(patch_w_), v(patch_b_), D, h.data() + D);
  for (size_t i = D; i < L * D; ++i) h[i] += pos[i];

  c.blocks.resize(blocks_.size());
  std::vector<double> tmp(L * D);
  for (size_t b = 0; b < blocks_.size(); ++b) {
    const BlockIndex& ix = blocks_[b];
    auto& bc = c.blocks[b];
    bc.x_in = h;
    bc.xhat1.resize(L * D);
    bc.rstd1.resize(L);
    bc.u1.resize(L * D);
    layer_norm(h.data(), L, D, v(ix.n1w), v(ix.n1b), bc.xhat1.data(), bc.rstd1.data(), bc.u1.data());
    bc.qkv.resize(L * 3 * D);
    linear(bc.u1.data(), L, D, v(ix.qkvw), v(ix.qkvb), 3 * D, bc.qkv.data());
    bc.probs.assign(H * L * L, 0.0);
    bc.o.assign(L * D, 0.0);
    for (size_t hd = 0; hd < H; ++hd) {
      const size_t qo = hd * dh, ko = D + hd * dh, vo = 2 * D + hd * dh;
      for (size_t i = 0; i < L; ++i) {
        double* a = bc.probs.data() + (hd * L + i) * L;
        double mx = -std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < L; ++j) {
          double s = 0.0;
          for (size_t d = 0; d < dh; ++d) s += bc.qkv[i * 3 * D + qo + d] * bc.qkv[j * 3 * D + ko + d];
          a[j] = s * scale;
          mx = std::max(mx, a[j]);
        }
        double z = 0.0;
        for (size_t j = 0; j < L; ++j) {
          a[j] = std::exp(a[j] - mx);
          z += a[j];
        }
        for (size_t j = 0; j < L; ++j) a[j] /= z;
        for (size_t j = 0; j < L; ++j)
          for (size_t d = 0; d < dh; ++d) bc.o[i * D + qo + d] += a[j] * bc.qkv[j * 3 * D + vo + d];
      }
    }
    linear(bc.o.data(), L, D, v(ix.projw), v(ix.projb), D, tmp.data());
    for (size_t i = 0; i < L * D; ++i) h[i] += tmp[i];
    bc.x_mid = h;

    bc.xhat2.resize(L * D);
    bc.rstd2.resize(L);
    bc.u2.resize(L * D);
    layer_norm(h.data(), L, D, v(ix.n2w), v(ix.n2b), bc.xhat2.data(), bc.rstd2.data(), bc.u2.data());
    bc.z.resize(L * F);
    linear(bc.u2.data(), L, D, v(ix.fc1w), v(ix.fc1b), F, bc.z.data());
    bc.g.resize(L * F);
    for (size_t i = 0; i < L * F; ++i) bc.g[i] = gelu(bc.z[i]);
    linear(bc.g.data(), L, F, v(ix.fc2w), v(ix.fc2b), D, tmp.data());
    for (size_t i = 0; i < L * D; ++i) h[i] += tmp[i];
  }
  c.x_out = std::move(h);

  // Only the class token reaches the head.
  c.xhat_f.resize(D);
  c.u_f.resize(D);
  layer_norm(c.x_out.data(), 1, D, v(norm_w_), v(norm_b_), c.xhat_f.data(), &c.rstd_f, c.u_f.data());
  c.logits.resize(C);
  linear(c.u_f.data(), 1, D, v(head_w_), v(head_b_), C, c.logits.data());
}

void ToyVit::backward_sample(const SampleCache& c, const std::vector<double>& dlogits) {
  const size_t T = static_cast<size_t>(dims_.seq_len), L = T + 1, D = static_cast<size_t>(dims_.model_dim),
               Fin = static_cast<size_t>(dims_.feature_dim), F = static_cast<size_t>(dims_.ffn_dim),
               H = static_cast<size_t>(dims_.heads), dh = D / H, C = static_cast<size_t>(num_classes_);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto v = [&](size_t i) { return params_[i].value.data(); };
  auto g = [&](size_t i) { return grad_if(params_[i]); };
  auto any = [&](std::initializer_list<size_t> idx) {
    return std::any_of(idx.begin(), idx.end(), [&](size_t i) { return params_[i].trainable; });
  };

  // Units in forward order: embedding, (attn, ffn) per block, final norm, head.
  // Input gradients are only needed above the lowest trainable unit.
  const size_t n_units = 2 * blocks_.size() + 3;
  size_t lowest = n_units;
  if (any({patch_w_, patch_b_, cls_, pos_})) lowest = 0;
  for (size_t b = 0; b < blocks_.size() && lowest == n_units; ++b) {
    const BlockIndex& ix = blocks_[b];
    if (any({ix.n1w, ix.n1b, ix.qkvw, ix.qkvb, ix.projw, ix.projb}))
      lowest = 1 + 2 * b;
    else if (any({ix.n2w, ix.n2b, ix.fc1w, ix.fc1b, ix.fc2w, ix.fc2b}))
      lowest = 2 + 2 * b;
  }
  if (lowest == n_units && any({norm_w_, norm_b_})) lowest = n_units - 2;
  if (lowest == n_units && any({head_w_, head_b_})) lowest = n_units - 1;
  if (lowest == n_units) return;

  const size_t head_unit = n_units - 1, norm_unit = n_units - 2;
  std::vector<double> du_f(D);
  linear_backward(dlogits.data(), c.u_f.data(), 1, D, C, v(head_w_), g(head_w_), g(head_b_),
                  lowest < head_unit ? du_f.data() : nullptr);
  if (lowest >= head_unit) return;

  std::vector<double> dx(L * D, 0.0);
  layer_norm_backward(du_f.data(), c.xhat_f.data(), &c.rstd_f, 1, D, v(norm_w_), g(norm_w_), g(norm_b_),
                      lowest < norm_unit ? dx.data() : nullptr);
  if (lowest >= norm_unit) return;

  std::vector<double> dtmp(L * D), dgz(L * F), du(L * D), dqkv(L * 3 * D), da(L);
  for (size_t bi = blocks_.size(); bi-- > 0;) {
    const BlockIndex& ix = blocks_[bi];
    const auto& bc = c.blocks[bi];
    const size_t ffn_unit = 2 + 2 * bi, attn_unit = 1 + 2 * bi;

    // FFN unit; dx holds the gradient of the block output.
    const bool ffn_input = lowest < ffn_unit;
    linear_backward(dx.data(), bc.g.data(), L, F, D, v(ix.fc2w), g(ix.fc2w), g(ix.fc2b), dgz.data());
    for (size_t i = 0; i < L * F; ++i) dgz[i] *= gelu_grad(bc.z[i]);
    linear_backward(dgz.data(), bc.u2.data(), L, D, F, v(ix.fc1w), g(ix.fc1w), g(ix.fc1b),
                    ffn_input || params_[ix.n2w].trainable || params_[ix.n2b].trainable ? du.data() : nullptr);
    if (ffn_input || params_[ix.n2w].trainable || params_[ix.n2b].trainable)
      layer_norm_backward(du.data(), bc.xhat2.data(), bc.rstd2.data(), L, D, v(ix.n2w), g(ix.n2w), g(ix.n2b),
                          ffn_input ? dx.data() : nullptr);
    if (!ffn_input) return;

    // Attention unit; dx now holds the gradient of x_mid.
    const bool attn_input = lowest < attn_unit;
    std::fill(dtmp.begin(), dtmp.end(), 0.0);
    linear_backward(dx.data(), bc.o.data(), L, D, D, v(ix.projw), g(ix.projw), g(ix.projb), dtmp.data());
    std::fill(dqkv.begin(), dqkv.end(), 0.0);
    for (size_t hd = 0; hd < H; ++hd) {
      const size_t qo = hd * dh, ko = D + hd * dh, vo = 2 * D + hd * dh;
      for (size_t i = 0; i < L; ++i) {
        const double* a = bc.probs.data() + (hd * L + i) * L;
        const double* doi = dtmp.data() + i * D + qo;
        double dot = 0.0;
        for (size_t j = 0; j < L; ++j) {
          double s = 0.0;
          for (size_t d = 0; d < dh; ++d) {
            s += doi[d] * bc.qkv[j * 3 * D + vo + d];
            dqkv[j * 3 * D + vo + d] += a[j] * doi[d];
          }
          da[j] = s;
          dot += a[j] * s;
        }
        for (size_t j = 0; j < L; ++j) {
          const double ds = a[j] * (da[j] - dot) * scale;
          for (size_t d = 0; d < dh; ++d) {
            dqkv[i * 3 * D + qo + d] += ds * bc.qkv[j * 3 * D + ko + d];
            dqkv[j * 3 * D + ko + d] += ds * bc.qkv[i * 3 * D + qo + d];
          }
        }
      }
    }
    const bool need_du1 = attn_input || params_[ix.n1w].trainable || params_[ix.n1b].trainable;
    linear_backward(dqkv.data(), bc.u1.data(), L, D, 3 * D, v(ix.qkvw), g(ix.qkvw), g(ix.qkvb),
                    need_du1 ? du.data() : nullptr);
    if (need_du1)
      layer_norm_backward(du.data(), bc.xhat1.data(), bc.rstd1.data(), L, D, v(ix.n1w), g(ix.n1w), g(ix.n1b),
                          attn_input ? dx.data() : nullptr);
    if (!attn_input) return;
  }

  // Embedding.
  if (double* gc = g(cls_))
    for (size_t d = 0; d < D; ++d) gc[d] += dx[d];
  if (double* gp = g(pos_))
    for (size_t i = 0; i < L * D; ++i) gp[i] += dx[i];
  linear_backward(dx.data() + D, c.input.data(), T, Fin, D, v(patch_w_), g(patch_w_), g(patch_b_), nullptr);
}

double ToyVit::loss(std::span<const float> features, std::span<const int> labels, bool backward) {
  const size_t per = static_cast<size_t>(dims_.seq_len * dims_.feature_dim);
  const size_t n = labels.size();
  if (n == 0 || features.size() != n * per) fail(ErrorKind::DimensionMismatch, "batch features/labels size mismatch");
  SampleCache cache;
  std::vector<double> dl(static_cast<size_t>(num_classes_));
  double total = 0.0;
  for (size_t s = 0; s < n; ++s) {
    const int y = labels[s];
    if (y < 0 || y >= num_classes_) fail(ErrorKind::InvalidValue, "label out of range");
    forward_sample(features.data() + s * per, cache);
    const auto& lg = cache.logits;
    const double mx = *std::max_element(lg.begin(), lg.end());
    double z = 0.0;
    for (double l : lg) z += std::exp(l - mx);
    const double lse = mx + std::log(z);
    total += lse - lg[static_cast<size_t>(y)];
    if (backward) {
      for (size_t k = 0; k < dl.size(); ++k) dl[k] = std::exp(lg[k] - lse) / static_cast<double>(n);
      dl[static_cast<size_t>(y)] -= 1.0 / static_cast<double>(n);
      backward_sample(cache, dl);
    }
  }
  return total / static_cast<double>(n);
}

std::vector<double> ToyVit::logits(std::span<const float> features) const {
  const size_t per = static_cast<size_t>(dims_.seq_len * dims_.feature_dim);
  if (features.size() % per != 0) fail(ErrorKind::DimensionMismatch, "feature buffer is not a whole number of samples");
  SampleCache cache;
  std::vector<double> out;
  for (size_t s = 0; s < features.size() / per; ++s) {
    forward_sample(features.data() + s * per, cache);
    out.insert(out.end(), cache.logits.begin(), cache.logits.end());
  }
  return out;
}

std::vector<int> ToyVit::predict(std::span<const float> features) const {
  const auto lg = logits(features);
  const size_t C = static_cast<size_t>(num_classes_);
  std::vector<int> out;
  for (size_t s = 0; s < lg.size() / C; ++s) {
    const auto first = lg.begin() + static_cast<std::ptrdiff_t>(s * C);
    out.push_back(static_cast<int>(std::max_element(first, first + static_cast<std::ptrdiff_t>(C)) - first));
  }
  return out;
}

double ToyVit::accuracy(const Split& split) const {
  if (split.count() == 0) fail(ErrorKind::EmptyInput, "cannot evaluate on an empty split");
  const auto pred = predict(split.features);
  size_t correct = 0;
  for (size_t i = 0; i < pred.size(); ++i) correct += pred[i] == split.labels[i];
  return static_cast<double>(correct) / static_cast<double>(split.count());
}

Checkpoint ToyVit::to_checkpoint() const {
  Checkpoint ckpt;
  for (const auto& p : params_) ckpt.put(p.name, Tensor::from_doubles(p.shape, p.value, p.name));
  ckpt.set_meta(std::string(meta::kArchId), "toy_vit");
  nlohmann::json dims = dims_;
  ckpt.set_meta(std::string(meta::kArchDims), dims.dump());
  return ckpt;
}

}  // namespace pft::train
