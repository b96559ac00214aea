#include "segsr/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <thread>

#include "json.hpp"
#include "segsr/losses.hpp"

namespace segsr {

void GeneratorArch::validate() const {
  for (int n : input_dims)
    if (n < 1) throw ValidationError("GeneratorArch: input dims must be >= 1");
  if (num_classes < 2) throw ValidationError("GeneratorArch: num_classes must be >= 2");
  if (channels.empty()) throw ValidationError("GeneratorArch: at least one stage required");
  for (int c : channels)
    if (c < 1) throw ValidationError("GeneratorArch: channel widths must be >= 1");
  if (latent_dim < 1) throw ValidationError("GeneratorArch: latent_dim must be >= 1");
  if (kernel < 1 || stride < 1 || pad < 0)
    throw ValidationError("GeneratorArch: bad kernel/stride/pad");
  if (!(lrelu_slope > 0.0 && lrelu_slope < 1.0))
    throw ValidationError("GeneratorArch: lrelu_slope must be in (0,1)");
}

ModelPlan make_plan(const GeneratorArch& arch) {
  arch.validate();
  ModelPlan pl;
  pl.num_classes = arch.num_classes;
  pl.latent = arch.latent_dim;
  pl.slope = arch.lrelu_slope;
  const int S = static_cast<int>(arch.channels.size());
  pl.dims.resize(S + 1);
  pl.dims[0] = arch.input_dims;
  std::vector<int> ch(S + 1);
  ch[0] = arch.num_classes;
  for (int i = 0; i < S; ++i) ch[i + 1] = arch.channels[i];
  for (int i = 0; i < S; ++i) {
    pl.enc.push_back(ConvShape::make(ch[i], ch[i + 1], arch.kernel, arch.stride,
                                     arch.pad, pl.dims[i]));
    pl.dims[i + 1] = pl.enc[i].out_dims;
  }
  pl.flat = size_t(ch[S]) * pl.enc[S - 1].out_vox();
  return pl;
}

namespace {

// Tensor table order (also the checkpoint payload order):
// enc0.w enc0.b ... enc{S-1}.w enc{S-1}.b
// fc_mu.w fc_mu.b fc_logvar.w fc_logvar.b fc_dec.w fc_dec.b
// dec{S-1}.w dec{S-1}.b ... dec0.w dec0.b   (decode execution order)
// out.w out.b
struct TensorIdx {
  int S;
  explicit TensorIdx(int stages) : S(stages) {}
  int enc_w(int i) const { return 2 * i; }
  int enc_b(int i) const { return 2 * i + 1; }
  int fc_mu_w() const { return 2 * S; }
  int fc_mu_b() const { return 2 * S + 1; }
  int fc_lv_w() const { return 2 * S + 2; }
  int fc_lv_b() const { return 2 * S + 3; }
  int fc_dec_w() const { return 2 * S + 4; }
  int fc_dec_b() const { return 2 * S + 5; }
  int dec_w(int i) const { return 2 * S + 6 + 2 * (S - 1 - i); }
  int dec_b(int i) const { return 2 * S + 6 + 2 * (S - 1 - i) + 1; }
  int out_w() const { return 4 * S + 6; }
  int out_b() const { return 4 * S + 7; }
  int count() const { return 4 * S + 8; }
};

std::vector<TensorSpec> build_specs(const GeneratorArch& arch, const ModelPlan& pl) {
  const int S = static_cast<int>(pl.enc.size());
  const TensorIdx ix(S);
  std::vector<TensorSpec> specs(ix.count());
  auto put = [&](int idx, std::string name, std::vector<int> shape) {
    size_t n = 1;
    for (int s : shape) n *= size_t(s);
    specs[idx] = TensorSpec{std::move(name), std::move(shape), 0, n};
  };
  const int k = arch.kernel;
  for (int i = 0; i < S; ++i) {
    const ConvShape& cs = pl.enc[i];
    put(ix.enc_w(i), "enc" + std::to_string(i) + ".w", {cs.cout, cs.cin, k, k, k});
    put(ix.enc_b(i), "enc" + std::to_string(i) + ".b", {cs.cout});
    put(ix.dec_w(i), "dec" + std::to_string(i) + ".w", {cs.cout, cs.cin, k, k, k});
    put(ix.dec_b(i), "dec" + std::to_string(i) + ".b", {cs.cin});
  }
  const int flat = static_cast<int>(pl.flat);
  put(ix.fc_mu_w(), "fc_mu.w", {pl.latent, flat});
  put(ix.fc_mu_b(), "fc_mu.b", {pl.latent});
  put(ix.fc_lv_w(), "fc_logvar.w", {pl.latent, flat});
  put(ix.fc_lv_b(), "fc_logvar.b", {pl.latent});
  put(ix.fc_dec_w(), "fc_dec.w", {flat, pl.latent});
  put(ix.fc_dec_b(), "fc_dec.b", {flat});
  put(ix.out_w(), "out.w", {pl.num_classes, pl.num_classes, 1, 1, 1});
  put(ix.out_b(), "out.b", {pl.num_classes});
  size_t off = 0;
  for (auto& s : specs) {
    s.offset = off;
    off += s.size;
  }
  return specs;
}

}  // namespace

int GeneratorModel::index_of(const std::string& name) const {
  for (size_t i = 0; i < specs.size(); ++i)
    if (specs[i].name == name) return static_cast<int>(i);
  throw DataError("GeneratorModel: no tensor named " + name);
}

GeneratorModel init_model(const GeneratorArch& arch, double beta, uint64_t seed) {
  if (!(beta > 0.0)) throw ValidationError("init_model: beta must be > 0");
  ModelPlan pl = make_plan(arch);
  GeneratorModel m;
  m.arch = arch;
  m.beta = beta;
  m.specs = build_specs(arch, pl);
  size_t total = 0;
  for (const auto& s : m.specs) total += s.size;
  m.params.assign(total, 0.0f);

  const int S = static_cast<int>(pl.enc.size());
  const TensorIdx ix(S);
  Rng rng(seed);
  auto fill_normal = [&](int idx, double std) {
    const TensorSpec& sp = m.specs[idx];
    float* p = m.params.data() + sp.offset;
    for (size_t i = 0; i < sp.size; ++i) p[i] = static_cast<float>(rng.normal(0.0, std));
  };
  const double k3 = double(arch.kernel) * arch.kernel * arch.kernel;
  const double s3 = double(arch.stride) * arch.stride * arch.stride;
  for (int i = 0; i < S; ++i) {
    fill_normal(ix.enc_w(i), std::sqrt(2.0 / (pl.enc[i].cin * k3)));
    // in decode direction a voxel receives ~cout*k^3/stride^3 contributions
    fill_normal(ix.dec_w(i), std::sqrt(2.0 * s3 / (pl.enc[i].cout * k3)));
  }
  fill_normal(ix.fc_mu_w(), std::sqrt(1.0 / double(pl.flat)));
  fill_normal(ix.fc_lv_w(), std::sqrt(1.0 / double(pl.flat)));
  fill_normal(ix.fc_dec_w(), std::sqrt(2.0 / double(pl.latent)));
  fill_normal(ix.out_w(), std::sqrt(2.0 / double(pl.num_classes)));
  return m;
}

double kl_divergence(const std::vector<float>& mu, const std::vector<float>& logvar) {
  if (mu.size() != logvar.size())
    throw SizeMismatchError("kl_divergence: mu/logvar length mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < mu.size(); ++i) {
    double m = mu[i], lv = logvar[i];
    acc += m * m + std::exp(lv) - 1.0 - lv;
  }
  return 0.5 * acc;
}

// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
ModelCache<T>::ModelCache(const GeneratorModel& m) : model(&m), plan(make_plan(m.arch)) {
  if constexpr (!std::is_same_v<T, float>) {
    params.assign(m.params.begin(), m.params.end());
  }
}

template <typename T>
const T* ModelCache<T>::tensor(int idx) const {
  const size_t off = model->specs[idx].offset;
  if constexpr (std::is_same_v<T, float>) return model->params.data() + off;
  else return params.data() + off;
}

template <typename T>
Grid<T> one_hot_t(const LabelVolume& v) {
  const int c = v.num_classes();
  Grid<T> p(c, v.d, v.h, v.w, T(0));
  const size_t n = v.voxels();
  for (size_t i = 0; i < n; ++i) p.v[size_t(v.labels[i]) * n + i] = T(1);
  return p;
}

template <typename T>
void decode_forward(const ModelCache<T>& mc, const std::vector<T>& z, DecodeWs<T>& ws) {
  const ModelPlan& pl = mc.plan;
  const int S = static_cast<int>(pl.enc.size());
  const TensorIdx ix(S);
  if (static_cast<int>(z.size()) != pl.latent)
    throw SizeMismatchError("decode: latent dimension mismatch");
  for (T x : z)
    if (!std::isfinite(double(x))) throw ValidationError("decode: non-finite latent value");

  const T slope = static_cast<T>(pl.slope);
  // bottleneck linear
  const T* W = mc.tensor(ix.fc_dec_w());
  const T* b = mc.tensor(ix.fc_dec_b());
  ws.fc_post.resize(pl.flat);
  for (size_t r = 0; r < pl.flat; ++r)
    ws.fc_post[r] = kernels::dot<T>(size_t(pl.latent), W + r * pl.latent, z.data()) + b[r];
  kernels::lrelu_t<T>(pl.flat, slope, ws.fc_post.data(), ws.fc_post.data());

  ws.post.resize(size_t(S));
  const T* cur = ws.fc_post.data();
  for (int i = S - 1; i >= 0; --i) {
    const ConvShape& cs = pl.enc[i];
    auto& out = ws.post[i];
    out.resize(size_t(cs.cin) * cs.in_vox());
    conv3d_vjp_input(cur, mc.tensor(ix.dec_w(i)), cs, out.data(), ws.cws);
    const T* bias = mc.tensor(ix.dec_b(i));
    const size_t n = cs.in_vox();
    for (int ci = 0; ci < cs.cin; ++ci) {
      T* row = out.data() + size_t(ci) * n;
      for (size_t j = 0; j < n; ++j) row[j] += bias[ci];
    }
    kernels::lrelu_t<T>(out.size(), slope, out.data(), out.data());
    cur = out.data();
  }

  const int C = pl.num_classes;
  const size_t vox = pl.enc[0].in_vox();
  ws.logits.resize(size_t(C) * vox);
  kernels::gemm<T>(C, int(vox), C, T(1), mc.tensor(ix.out_w()), C, cur, int(vox),
                   T(0), ws.logits.data(), int(vox));
  const T* ob = mc.tensor(ix.out_b());
  for (int c = 0; c < C; ++c) {
    T* row = ws.logits.data() + size_t(c) * vox;
    for (size_t j = 0; j < vox; ++j) row[j] += ob[c];
  }
  ws.prob = Grid<T>(C, pl.dims[0][0], pl.dims[0][1], pl.dims[0][2]);
  kernels::softmax_channels_t<T>(C, vox, ws.logits.data(), ws.prob.v.data());
}

template <typename T>
std::vector<T> decode_backward_z(const ModelCache<T>& mc, const DecodeWs<T>& ws,
                                 const Grid<T>& upstream) {
  const ModelPlan& pl = mc.plan;
  const int S = static_cast<int>(pl.enc.size());
  const TensorIdx ix(S);
  if (!upstream.same_shape(ws.prob))
    throw SizeMismatchError("decode_vjp: upstream shape mismatch");

  const T slope = static_cast<T>(pl.slope);
  const int C = pl.num_classes;
  const size_t vox = pl.enc[0].in_vox();

  std::vector<T> g_logits(size_t(C) * vox, T(0));
  softmax_vjp<T>(C, vox, ws.prob.v.data(), upstream.v.data(), g_logits.data());

  // out conv adjoint (1x1x1): g_cur = W^T g_logits
  std::vector<T> wT(size_t(C) * C);
  const T* ow = mc.tensor(ix.out_w());
  for (int a = 0; a < C; ++a)
    for (int bc = 0; bc < C; ++bc) wT[size_t(bc) * C + a] = ow[size_t(a) * C + bc];
  std::vector<T> g_cur(size_t(C) * vox);
  kernels::gemm<T>(C, int(vox), C, T(1), wT.data(), C, g_logits.data(), int(vox),
                   T(0), g_cur.data(), int(vox));

  ConvWorkspace<T> cws;
  std::vector<T> g_pre, g_next;
  for (int i = 0; i < S; ++i) {
    const ConvShape& cs = pl.enc[i];
    g_pre.resize(g_cur.size());
    kernels::lrelu_grad_t<T>(g_cur.size(), slope, ws.post[i].data(), g_cur.data(),
                             g_pre.data());
    g_next.resize(size_t(cs.cout) * cs.out_vox());
    conv3d_fwd<T>(g_pre.data(), mc.tensor(ix.dec_w(i)), nullptr, cs, g_next.data(), cws);
    g_cur.swap(g_next);
  }

  // bottleneck linear adjoint
  std::vector<T> g_fc_pre(pl.flat);
  kernels::lrelu_grad_t<T>(pl.flat, slope, ws.fc_post.data(), g_cur.data(),
                           g_fc_pre.data());
  std::vector<T> g_z(size_t(pl.latent), T(0));
  const T* W = mc.tensor(ix.fc_dec_w());
  for (size_t r = 0; r < pl.flat; ++r)
    kernels::axpy<T>(size_t(pl.latent), g_fc_pre[r], W + r * pl.latent, g_z.data());
  return g_z;
}

template <typename T>
void encode_forward(const ModelCache<T>& mc, const Grid<T>& x, EncodeWs<T>& ws) {
  const ModelPlan& pl = mc.plan;
  const int S = static_cast<int>(pl.enc.size());
  const TensorIdx ix(S);
  if (x.c != pl.num_classes || x.d != pl.dims[0][0] || x.h != pl.dims[0][1] ||
      x.w != pl.dims[0][2])
    throw SizeMismatchError("encode: input dims do not match the model");

  const T slope = static_cast<T>(pl.slope);
  ws.post.resize(size_t(S));
  const T* cur = x.v.data();
  for (int i = 0; i < S; ++i) {
    const ConvShape& cs = pl.enc[i];
    auto& out = ws.post[i];
    out.resize(size_t(cs.cout) * cs.out_vox());
    conv3d_fwd<T>(cur, mc.tensor(ix.enc_w(i)), mc.tensor(ix.enc_b(i)), cs,
                  out.data(), ws.cws);
    kernels::lrelu_t<T>(out.size(), slope, out.data(), out.data());
    cur = out.data();
  }
  const T* feat = ws.post[S - 1].data();
  ws.mu.resize(size_t(pl.latent));
  ws.logvar.resize(size_t(pl.latent));
  const T* wm = mc.tensor(ix.fc_mu_w());
  const T* bm = mc.tensor(ix.fc_mu_b());
  const T* wl = mc.tensor(ix.fc_lv_w());
  const T* bl = mc.tensor(ix.fc_lv_b());
  for (int j = 0; j < pl.latent; ++j) {
    ws.mu[j] = kernels::dot<T>(pl.flat, wm + size_t(j) * pl.flat, feat) + bm[j];
    ws.logvar[j] = kernels::dot<T>(pl.flat, wl + size_t(j) * pl.flat, feat) + bl[j];
  }
}

template <typename T>
VaeLossReport vae_sample_grads(const ModelCache<T>& mc, const LabelVolume& x,
                               const std::vector<T>& eps, double beta, T weight,
                               std::vector<T>& grad) {
  const ModelPlan& pl = mc.plan;
  const int S = static_cast<int>(pl.enc.size());
  const TensorIdx ix(S);
  const T slope = static_cast<T>(pl.slope);
  if (grad.size() != mc.model->params.size())
    throw SizeMismatchError("vae_sample_grads: grad buffer size mismatch");
  if (static_cast<int>(eps.size()) != pl.latent)
    throw SizeMismatchError("vae_sample_grads: eps length mismatch");

  auto gslice = [&](int idx) { return grad.data() + mc.model->specs[idx].offset; };

  Grid<T> x1h = one_hot_t<T>(x);
  EncodeWs<T> enc;
  encode_forward(mc, x1h, enc);

  std::vector<T> z(size_t(pl.latent)), sd(size_t(pl.latent));
  for (int j = 0; j < pl.latent; ++j) {
    sd[j] = std::exp(T(0.5) * enc.logvar[j]);
    z[j] = enc.mu[j] + sd[j] * eps[j];
  }

  DecodeWs<T> dec;
  decode_forward(mc, z, dec);

  VaeLossReport rep;
  rep.ce = clipped_ce(dec.prob, x, kDefaultProbClip);
  double kl = 0.0;
  for (int j = 0; j < pl.latent; ++j) {
    double m = double(enc.mu[j]), lv = double(enc.logvar[j]);
    kl += 0.5 * (m * m + std::exp(lv) - 1.0 - lv);
  }
  rep.kl = kl;
  rep.total = rep.ce + beta * rep.kl;

  // ----- backward -----
  const int C = pl.num_classes;
  const size_t vox = pl.enc[0].in_vox();

  Grid<T> g_prob(C, x.d, x.h, x.w);
  clipped_ce_grad(dec.prob, x, kDefaultProbClip, weight, g_prob);

  std::vector<T> g_logits(size_t(C) * vox, T(0));
  softmax_vjp<T>(C, vox, dec.prob.v.data(), g_prob.v.data(), g_logits.data());

  ConvWorkspace<T> cws;

  // out conv: logits = Wout (1x1) * post0 + bout
  {
    const T* post0 = dec.post[0].data();
    // gw_out[a][b] += sum_i g_logits[a][i] * post0[b][i]
    T* gw = gslice(ix.out_w());
    for (int a = 0; a < C; ++a)
      for (int bc = 0; bc < C; ++bc)
        gw[size_t(a) * C + bc] +=
            kernels::dot<T>(vox, g_logits.data() + size_t(a) * vox,
                            post0 + size_t(bc) * vox);
    T* gb = gslice(ix.out_b());
    for (int a = 0; a < C; ++a) {
      T s = T(0);
      const T* row = g_logits.data() + size_t(a) * vox;
      for (size_t i = 0; i < vox; ++i) s += row[i];
      gb[a] += s;
    }
  }

  std::vector<T> g_cur(size_t(C) * vox);
  {
    std::vector<T> wT(size_t(C) * C);
    const T* ow = mc.tensor(ix.out_w());
    for (int a = 0; a < C; ++a)
      for (int bc = 0; bc < C; ++bc) wT[size_t(bc) * C + a] = ow[size_t(a) * C + bc];
    kernels::gemm<T>(C, int(vox), C, T(1), wT.data(), C, g_logits.data(), int(vox),
                     T(0), g_cur.data(), int(vox));
  }

  // decoder stages, reverse of decode execution order
  std::vector<T> g_pre, g_next;
  for (int i = 0; i < S; ++i) {
    const ConvShape& cs = pl.enc[i];
    g_pre.resize(g_cur.size());
    kernels::lrelu_grad_t<T>(g_cur.size(), slope, dec.post[i].data(), g_cur.data(),
                             g_pre.data());
    // bias on the cin side
    T* gb = gslice(ix.dec_b(i));
    const size_t n = cs.in_vox();
    for (int ci = 0; ci < cs.cin; ++ci) {
      T s = T(0);
      const T* row = g_pre.data() + size_t(ci) * n;
      for (size_t j = 0; j < n; ++j) s += row[j];
      gb[ci] += s;
    }
    const T* u = i + 1 < S ? dec.post[i + 1].data() : dec.fc_post.data();
    conv3d_vjp_weights<T>(g_pre.data(), u, cs, gslice(ix.dec_w(i)), nullptr, cws, true);
    g_next.resize(size_t(cs.cout) * cs.out_vox());
    conv3d_fwd<T>(g_pre.data(), mc.tensor(ix.dec_w(i)), nullptr, cs, g_next.data(), cws);
    g_cur.swap(g_next);
  }

  // bottleneck linear
  std::vector<T> g_fc_pre(pl.flat);
  kernels::lrelu_grad_t<T>(pl.flat, slope, dec.fc_post.data(), g_cur.data(),
                           g_fc_pre.data());
  {
    T* gw = gslice(ix.fc_dec_w());
    T* gb = gslice(ix.fc_dec_b());
    const T* Wdec = mc.tensor(ix.fc_dec_w());
    std::vector<T> g_z(size_t(pl.latent), T(0));
    for (size_t r = 0; r < pl.flat; ++r) {
      kernels::axpy<T>(size_t(pl.latent), g_fc_pre[r], z.data(), gw + r * pl.latent);
      gb[r] += g_fc_pre[r];
      kernels::axpy<T>(size_t(pl.latent), g_fc_pre[r], Wdec + r * pl.latent, g_z.data());
    }

    // reparameterisation + KL
    std::vector<T> g_mu(size_t(pl.latent)), g_lv(size_t(pl.latent));
    const T wb = static_cast<T>(double(weight) * beta);
    for (int j = 0; j < pl.latent; ++j) {
      g_mu[j] = g_z[j] + wb * enc.mu[j];
      g_lv[j] = g_z[j] * eps[j] * T(0.5) * sd[j] +
                wb * T(0.5) * (std::exp(enc.logvar[j]) - T(1));
    }

    // encoder heads
    const T* feat = enc.post[S - 1].data();
    T* gwm = gslice(ix.fc_mu_w());
    T* gbm = gslice(ix.fc_mu_b());
    T* gwl = gslice(ix.fc_lv_w());
    T* gbl = gslice(ix.fc_lv_b());
    const T* wm = mc.tensor(ix.fc_mu_w());
    const T* wl = mc.tensor(ix.fc_lv_w());
    std::vector<T> g_feat(pl.flat, T(0));
    for (int j = 0; j < pl.latent; ++j) {
      kernels::axpy<T>(pl.flat, g_mu[j], feat, gwm + size_t(j) * pl.flat);
      kernels::axpy<T>(pl.flat, g_lv[j], feat, gwl + size_t(j) * pl.flat);
      gbm[j] += g_mu[j];
      gbl[j] += g_lv[j];
      kernels::axpy<T>(pl.flat, g_mu[j], wm + size_t(j) * pl.flat, g_feat.data());
      kernels::axpy<T>(pl.flat, g_lv[j], wl + size_t(j) * pl.flat, g_feat.data());
    }
    g_cur = std::move(g_feat);
  }

  // encoder stages
  for (int i = S - 1; i >= 0; --i) {
    const ConvShape& cs = pl.enc[i];
    g_pre.resize(g_cur.size());
    kernels::lrelu_grad_t<T>(g_cur.size(), slope, enc.post[i].data(), g_cur.data(),
                             g_pre.data());
    const T* input = i > 0 ? enc.post[i - 1].data() : x1h.v.data();
    conv3d_vjp_weights<T>(input, g_pre.data(), cs, gslice(ix.enc_w(i)),
                          gslice(ix.enc_b(i)), cws, true);
    if (i > 0) {
      g_next.resize(size_t(cs.cin) * cs.in_vox());
      conv3d_vjp_input<T>(g_pre.data(), mc.tensor(ix.enc_w(i)), cs, g_next.data(), cws);
      g_cur.swap(g_next);
    }
  }
  return rep;
}

template struct ModelCache<float>;
template struct ModelCache<double>;
template Grid<float> one_hot_t<float>(const LabelVolume&);
template Grid<double> one_hot_t<double>(const LabelVolume&);
template void decode_forward<float>(const ModelCache<float>&, const std::vector<float>&, DecodeWs<float>&);
template void decode_forward<double>(const ModelCache<double>&, const std::vector<double>&, DecodeWs<double>&);
template std::vector<float> decode_backward_z<float>(const ModelCache<float>&, const DecodeWs<float>&, const Grid<float>&);
template std::vector<double> decode_backward_z<double>(const ModelCache<double>&, const DecodeWs<double>&, const Grid<double>&);
template void encode_forward<float>(const ModelCache<float>&, const Grid<float>&, EncodeWs<float>&);
template void encode_forward<double>(const ModelCache<double>&, const Grid<double>&, EncodeWs<double>&);
template VaeLossReport vae_sample_grads<float>(const ModelCache<float>&, const LabelVolume&, const std::vector<float>&, double, float, std::vector<float>&);
template VaeLossReport vae_sample_grads<double>(const ModelCache<double>&, const LabelVolume&, const std::vector<double>&, double, double, std::vector<double>&);

}  // namespace detail

// ---------------------------------------------------------------------------

ProbVolume decode(const GeneratorModel& m, const LatentVector& z) {
  detail::ModelCache<float> mc(m);
  detail::DecodeWs<float> ws;
  detail::decode_forward<float>(mc, z, ws);
  return std::move(ws.prob);
}

LatentVector decode_vjp(const GeneratorModel& m, const LatentVector& z,
                        const ProbVolume& upstream) {
  detail::ModelCache<float> mc(m);
  detail::DecodeWs<float> ws;
  detail::decode_forward<float>(mc, z, ws);
  return detail::decode_backward_z<float>(mc, ws, upstream);
}

std::pair<LatentVector, LatentVector> encode(const GeneratorModel& m,
                                             const ProbVolume& p) {
  detail::ModelCache<float> mc(m);
  detail::EncodeWs<float> ws;
  detail::encode_forward<float>(mc, p, ws);
  return {std::move(ws.mu), std::move(ws.logvar)};
}

namespace {

double validation_ce(const detail::ModelCache<float>& mc,
                     const std::vector<LabelVolume>& val, int workers) {
  if (val.empty()) return 0.0;
  const int W = std::max(1, std::min<int>(workers, static_cast<int>(val.size())));
  std::vector<double> partial(size_t(W), 0.0);
  auto work = [&](int w) {
    detail::EncodeWs<float> enc;
    detail::DecodeWs<float> dec;
    for (size_t i = w; i < val.size(); i += size_t(W)) {
      Grid<float> x1h = detail::one_hot_t<float>(val[i]);
      detail::encode_forward<float>(mc, x1h, enc);
      detail::decode_forward<float>(mc, enc.mu, dec);
      partial[w] += clipped_ce(dec.prob, val[i], kDefaultProbClip);
    }
  };
  if (W == 1) {
    work(0);
  } else {
    std::vector<std::thread> ts;
    for (int w = 0; w < W; ++w) ts.emplace_back(work, w);
    for (auto& t : ts) t.join();
  }
  double sum = 0.0;
  for (double p : partial) sum += p;  // fixed reduction order
  return sum / double(val.size());
}

}  // namespace

TrainResult train_vae(const std::vector<LabelVolume>& train_set,
                      const std::vector<LabelVolume>& val_set,
                      const GeneratorArch& arch, double beta,
                      const VaeTrainConfig& cfg) {
  if (train_set.empty()) throw ValidationError("train_vae: empty dataset");
  for (const auto& v : train_set)
    if (v.d != arch.input_dims[0] || v.h != arch.input_dims[1] ||
        v.w != arch.input_dims[2] || v.num_classes() != arch.num_classes)
      throw SizeMismatchError("train_vae: volume dims/classes do not match the arch");
  for (const auto& v : val_set)
    if (v.d != arch.input_dims[0] || v.h != arch.input_dims[1] ||
        v.w != arch.input_dims[2] || v.num_classes() != arch.num_classes)
      throw SizeMismatchError("train_vae: validation dims/classes do not match the arch");
  if (cfg.batch < 1 || cfg.epochs < 1 || !(cfg.lr > 0.0))
    throw ValidationError("train_vae: bad training config");

  TrainResult res;
  res.model = init_model(arch, beta, derive_seed(cfg.seed, "init"));
  GeneratorModel& model = res.model;
  detail::ModelCache<float> mc(model);  // aliases model.params

  const size_t P = model.params.size();
  const int W = std::max(1, cfg.workers);
  std::vector<std::vector<float>> wgrads(size_t(W), std::vector<float>(P, 0.0f));
  std::vector<float> adam_m(P, 0.0f), adam_v(P, 0.0f);

  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  Rng eps_rng(derive_seed(cfg.seed, "eps"));

  const int N = static_cast<int>(train_set.size());
  std::vector<int> order(size_t(N));
  for (int i = 0; i < N; ++i) order[i] = i;

  std::vector<float> best_params;
  double best_val = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  long step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = N - 1; i > 0; --i)
      std::swap(order[i], order[size_t(shuffle_rng.uniform_int(uint64_t(i) + 1))]);

    double ep_ce = 0.0, ep_kl = 0.0;
    for (int start = 0; start < N; start += cfg.batch) {
      const int B = std::min(cfg.batch, N - start);
      // reparameterisation draws in sample order, independent of threading
      std::vector<std::vector<float>> eps(size_t(B));
      for (int j = 0; j < B; ++j) {
        eps[j].resize(size_t(arch.latent_dim));
        for (auto& e : eps[j]) e = static_cast<float>(eps_rng.normal());
      }
      const int used = std::max(1, std::min(W, B));
      std::vector<double> pce(size_t(used), 0.0), pkl(size_t(used), 0.0);
      auto work = [&](int w) {
        std::fill(wgrads[w].begin(), wgrads[w].end(), 0.0f);
        for (int j = w; j < B; j += used) {
          VaeLossReport r = detail::vae_sample_grads<float>(
              mc, train_set[size_t(order[size_t(start + j)])], eps[size_t(j)], beta,
              1.0f / float(B), wgrads[size_t(w)]);
          pce[w] += r.ce;
          pkl[w] += r.kl;
        }
      };
      if (used == 1) {
        work(0);
      } else {
        std::vector<std::thread> ts;
        for (int w = 0; w < used; ++w) ts.emplace_back(work, w);
        for (auto& t : ts) t.join();
      }
      for (int w = 1; w < used; ++w)
        kernels::saxpy(P, 1.0f, wgrads[size_t(w)].data(), wgrads[0].data());

      ++step;
      const float bc1 = 1.0f / (1.0f - std::pow(float(cfg.adam_beta1), float(step)));
      const float bc2 = 1.0f / (1.0f - std::pow(float(cfg.adam_beta2), float(step)));
      kernels::adam_step(P, float(cfg.lr), float(cfg.adam_beta1), float(cfg.adam_beta2),
                         float(cfg.adam_eps), bc1, bc2, wgrads[0].data(),
                         model.params.data(), adam_m.data(), adam_v.data());
      for (int w = 0; w < used; ++w) {
        ep_ce += pce[size_t(w)];
        ep_kl += pkl[size_t(w)];
      }
    }

    EpochStats st;
    st.train.ce = ep_ce / double(N);
    st.train.kl = ep_kl / double(N);
    st.train.total = st.train.ce + beta * st.train.kl;
    st.val_ce = validation_ce(mc, val_set, W);
    res.history.push_back(st);
    if (cfg.verbose)
      std::fprintf(stderr, "epoch %d ce %.5f kl %.3f total %.5f val_ce %.5f\n",
                   epoch, st.train.ce, st.train.kl, st.train.total, st.val_ce);

    model.meta.epochs_run = epoch + 1;
    model.meta.final_ce = st.train.ce;
    model.meta.final_kl = st.train.kl;
    model.meta.final_total = st.train.total;

    if (!val_set.empty()) {
      if (st.val_ce < best_val - 1e-9) {
        best_val = st.val_ce;
        best_params = model.params;
        bad_epochs = 0;
      } else if (++bad_epochs >= cfg.patience) {
        break;
      }
    }
  }

  if (!best_params.empty()) {
    model.params = std::move(best_params);
    model.meta.best_val_ce = best_val;
  }
  model.meta.seed = cfg.seed;
  return res;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json arch_to_json(const GeneratorArch& a) {
  return {
      {"input_dims", {a.input_dims[0], a.input_dims[1], a.input_dims[2]}},
      {"num_classes", a.num_classes},
      {"channels", a.channels},
      {"latent_dim", a.latent_dim},
      {"kernel", a.kernel},
      {"stride", a.stride},
      {"pad", a.pad},
      {"nonlinearity", "lrelu"},
      {"lrelu_slope", a.lrelu_slope},
  };
}

GeneratorArch arch_from_json(const nlohmann::json& j) {
  GeneratorArch a;
  auto dims = j.at("input_dims");
  a.input_dims = {dims.at(0).get<int>(), dims.at(1).get<int>(), dims.at(2).get<int>()};
  a.num_classes = j.at("num_classes").get<int>();
  a.channels = j.at("channels").get<std::vector<int>>();
  a.latent_dim = j.at("latent_dim").get<int>();
  a.kernel = j.at("kernel").get<int>();
  a.stride = j.at("stride").get<int>();
  a.pad = j.at("pad").get<int>();
  if (j.at("nonlinearity").get<std::string>() != "lrelu")
    throw FormatError("checkpoint: unsupported nonlinearity");
  a.lrelu_slope = j.at("lrelu_slope").get<double>();
  return a;
}

}  // namespace

void save_model(const GeneratorModel& m, const std::string& path) {
  const size_t payload_bytes = m.params.size() * sizeof(float);
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& s : m.specs) tensors.push_back({{"name", s.name}, {"shape", s.shape}});
  nlohmann::json header = {
      {"version", 1},
      {"arch", arch_to_json(m.arch)},
      {"beta", m.beta},
      {"training_meta",
       {{"epochs_run", m.meta.epochs_run},
        {"final_ce", m.meta.final_ce},
        {"final_kl", m.meta.final_kl},
        {"final_total", m.meta.final_total},
        {"best_val_ce", m.meta.best_val_ce},
        {"seed", m.meta.seed}}},
      {"tensors", tensors},
      {"payload_bytes", payload_bytes},
      {"payload_checksum", to_hex(fnv1a64(m.params.data(), payload_bytes))},
  };
  std::string text = header.dump();
  text.push_back('\n');
  std::vector<uint8_t> out(text.size() + payload_bytes);
  std::memcpy(out.data(), text.data(), text.size());
  std::memcpy(out.data() + text.size(), m.params.data(), payload_bytes);
  write_file_bytes(path, out.data(), out.size());
}

GeneratorModel load_model(const std::string& path) {
  auto bytes = read_file_bytes(path);
  auto nl = std::find(bytes.begin(), bytes.end(), uint8_t('\n'));
  if (nl == bytes.end()) throw FormatError("checkpoint: missing header line: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin(), nl);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint: malformed header: " + std::string(e.what()));
  }
  if (header.value("version", -1) != 1)
    throw VersionError("checkpoint: unsupported version in " + path);

  GeneratorModel m;
  try {
    m.arch = arch_from_json(header.at("arch"));
    m.beta = header.at("beta").get<double>();
    const auto& tm = header.at("training_meta");
    m.meta.epochs_run = tm.at("epochs_run").get<int>();
    m.meta.final_ce = tm.at("final_ce").get<double>();
    m.meta.final_kl = tm.at("final_kl").get<double>();
    m.meta.final_total = tm.at("final_total").get<double>();
    m.meta.best_val_ce = tm.at("best_val_ce").get<double>();
    m.meta.seed = tm.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint: header field error: " + std::string(e.what()));
  }

  ModelPlan pl = make_plan(m.arch);
  m.specs = build_specs(m.arch, pl);
  const auto& tens = header.at("tensors");
  if (tens.size() != m.specs.size())
    throw FormatError("checkpoint: tensor table does not match the architecture");
  for (size_t i = 0; i < m.specs.size(); ++i) {
    if (tens[i].at("name").get<std::string>() != m.specs[i].name ||
        tens[i].at("shape").get<std::vector<int>>() != m.specs[i].shape)
      throw FormatError("checkpoint: tensor table entry mismatch: " + m.specs[i].name);
  }

  size_t total = 0;
  for (const auto& s : m.specs) total += s.size;
  const size_t header_len = size_t(nl - bytes.begin()) + 1;
  const size_t payload = bytes.size() - header_len;
  if (payload != total * sizeof(float))
    throw SizeMismatchError("checkpoint: payload size does not match tensor table");
  if (header.at("payload_bytes").get<size_t>() != payload)
    throw SizeMismatchError("checkpoint: declared payload size mismatch");
  if (to_hex(fnv1a64(bytes.data() + header_len, payload)) !=
      header.at("payload_checksum").get<std::string>())
    throw ChecksumError("checkpoint: payload checksum mismatch");

  m.params.resize(total);
  std::memcpy(m.params.data(), bytes.data() + header_len, payload);
  return m;
}

}  // namespace segsr
