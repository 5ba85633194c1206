#include "sct/meunet.hpp"

#include <cmath>

#include "sct/ops.hpp"

namespace sct {

Variant variant_from_string(const std::string& name) {
  if (name == "meunet") return Variant::meunet;
  if (name == "meunet_v1") return Variant::meunet_v1;
  if (name == "meunet_v2") return Variant::meunet_v2;
  if (name == "meunet_fixed_patch") return Variant::meunet_fixed_patch;
  if (name == "unet_d2") return Variant::unet_d2;
  if (name == "unet_d3") return Variant::unet_d3;
  if (name == "unet_d4") return Variant::unet_d4;
  throw ConfigError("unknown model variant '" + name + "'");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::meunet: return "meunet";
    case Variant::meunet_v1: return "meunet_v1";
    case Variant::meunet_v2: return "meunet_v2";
    case Variant::meunet_fixed_patch: return "meunet_fixed_patch";
    case Variant::unet_d2: return "unet_d2";
    case Variant::unet_d3: return "unet_d3";
    case Variant::unet_d4: return "unet_d4";
  }
  throw ConfigError("invalid variant enum value");
}

std::size_t MEUNetConfig::downsamples() const {
  switch (variant) {
    case Variant::unet_d3: return 3;
    case Variant::unet_d4: return 4;
    default: return 2;
  }
}

std::vector<std::size_t> MEUNetConfig::effective_channels() const {
  std::vector<std::size_t> ch = channels;
  if (ch.empty()) throw ConfigError("channels list is empty");
  while (ch.size() < downsamples() + 1) ch.push_back(ch.back() * 2);
  if (ch.size() != downsamples() + 1)
    throw ConfigError("channels list has " + std::to_string(ch.size()) +
                      " entries for " + std::to_string(downsamples()) + " downsamples");
  return ch;
}

std::size_t adaptive_patch_size(std::size_t N, std::size_t L) {
  if (L == 0 || (N * N) % L != 0)
    throw ConfigError("token count " + std::to_string(L) + " does not divide " +
                      std::to_string(N) + "^2");
  std::size_t m2 = N * N / L;
  auto m = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(m2))));
  if (m == 0 || m * m != m2)
    throw ConfigError("patch size sqrt(" + std::to_string(N) + "^2/" +
                      std::to_string(L) + ") is not an integer");
  return m;
}

namespace {

template <class T>
Tensor<T> uniform_tensor(Shape s, T bound, Pcg32& rng) {
  std::vector<T> v(numel_of(s));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from_data(std::move(s), std::move(v), true);
}

}  // namespace

template <class T>
LinearLayer<T> LinearLayer<T>::init(std::size_t in, std::size_t out, Pcg32& rng) {
  T k = static_cast<T>(1.0 / std::sqrt(static_cast<double>(in)));
  return {uniform_tensor<T>({in, out}, k, rng), Tensor<T>::zeros({out}, true)};
}

template <class T>
ConvLayer<T> ConvLayer<T>::init(std::size_t cin, std::size_t cout, std::size_t k,
                                Pcg32& rng) {
  T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cin * k * k)));
  return {uniform_tensor<T>({cout, cin, k, k}, bound, rng),
          Tensor<T>::zeros({cout}, true)};
}

template <class T>
NormLayer<T> NormLayer<T>::init(std::size_t c) {
  return {Tensor<T>::full({c}, T(1), true), Tensor<T>::zeros({c}, true)};
}

template <class T>
ConvBlock<T> ConvBlock<T>::init(std::size_t cin, std::size_t cout, Pcg32& rng) {
  ConvBlock<T> b;
  b.c1 = ConvLayer<T>::init(cin, cout, 3, rng);
  b.n1 = NormLayer<T>::init(cout);
  b.c2 = ConvLayer<T>::init(cout, cout, 3, rng);
  b.n2 = NormLayer<T>::init(cout);
  return b;
}

template <class T>
Tensor<T> ConvBlock<T>::forward(const Tensor<T>& x) const {
  auto h = leaky_relu(instance_norm(conv2d(x, c1.w, c1.b), n1.gamma, n1.beta), T(0.2));
  return leaky_relu(instance_norm(conv2d(h, c2.w, c2.b), n2.gamma, n2.beta), T(0.2));
}

template <class T>
VSSBlockParams<T> VSSBlockParams<T>::init(std::size_t E, std::size_t D, Pcg32& rng) {
  VSSBlockParams<T> p;
  p.pre_norm = NormLayer<T>::init(E);
  p.in_proj = LinearLayer<T>::init(E, E, rng);
  p.gate_proj = LinearLayer<T>::init(E, E, rng);
  T kb = static_cast<T>(1.0 / 3.0);  // fan_in = 9 per channel
  p.dw_w = uniform_tensor<T>({E, 1, 3, 3}, kb, rng);
  p.dw_b = Tensor<T>::zeros({E}, true);
  p.ss = SS2DParams<T>::init(E, D, rng);
  p.post_norm = NormLayer<T>::init(E);
  p.out_proj = {Tensor<T>::zeros({E, E}, true), Tensor<T>::zeros({E}, true)};
  return p;
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> VSSBlockParams<T>::named() const {
  std::vector<std::pair<std::string, Tensor<T>>> out = {
      {"pre_norm.gamma", pre_norm.gamma}, {"pre_norm.beta", pre_norm.beta},
      {"in_proj.w", in_proj.w},           {"in_proj.b", in_proj.b},
      {"gate_proj.w", gate_proj.w},       {"gate_proj.b", gate_proj.b},
      {"dw.w", dw_w},                     {"dw.b", dw_b}};
  for (auto& [n, t] : ss.named()) out.emplace_back("ss." + n, t);
  out.emplace_back("post_norm.gamma", post_norm.gamma);
  out.emplace_back("post_norm.beta", post_norm.beta);
  out.emplace_back("out_proj.w", out_proj.w);
  out.emplace_back("out_proj.b", out_proj.b);
  return out;
}

template <class T>
Tensor<T> vss_block(const Tensor<T>& tokens, const VSSBlockParams<T>& p) {
  const Shape& s = tokens.shape();
  if (s.size() != 3)
    throw ShapeError("vss_block: expected [B,L,E], got " + shape_str(s));
  std::size_t B = s[0], L = s[1], E = s[2];
  auto G = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(L))));
  if (G * G != L)
    throw ShapeError("vss_block: token count " + std::to_string(L) +
                     " is not a perfect square");

  auto pre = layer_norm(tokens, p.pre_norm.gamma, p.pre_norm.beta);
  auto main = linear(pre, p.in_proj.w, p.in_proj.b);
  // depthwise 3x3 over the token grid mixes neighbouring patches
  auto grid = permute(reshape(main, {B, G, G, E}), {0, 3, 1, 2});
  auto conv = depthwise_conv2d(grid, p.dw_w, p.dw_b);
  auto act = silu(reshape(permute(conv, {0, 2, 3, 1}), {B, L, E}));
  auto mixed = ss2d(reshape(act, {B, G, G, E}), p.ss);
  auto post = layer_norm(reshape(mixed, {B, L, E}), p.post_norm.gamma, p.post_norm.beta);
  auto gated = mul(post, silu(linear(pre, p.gate_proj.w, p.gate_proj.b)));
  auto out = linear(gated, p.out_proj.w, p.out_proj.b);
  return add(tokens, out);
}

template <class T>
PatchEmbedParams<T> PatchEmbedParams<T>::init(std::size_t M, std::size_t C,
                                              std::size_t E, Pcg32& rng) {
  PatchEmbedParams<T> p;
  p.M = M;
  p.embed = LinearLayer<T>::init(C * M * M, E, rng);
  p.unembed = LinearLayer<T>::init(E, C * M * M, rng);
  return p;
}

template <class T>
Tensor<T> patch_embed(const Tensor<T>& feat, const PatchEmbedParams<T>& p) {
  return linear(patchify(feat, p.M), p.embed.w, p.embed.b);
}

template <class T>
Tensor<T> patch_unembed(const Tensor<T>& tokens, const PatchEmbedParams<T>& p,
                        std::size_t C, std::size_t N) {
  return unpatchify(linear(tokens, p.unembed.w, p.unembed.b), p.M, C, N);
}

template <class T>
MEUNet<T> build_model(const MEUNetConfig& cfg, Pcg32& rng) {
  MEUNet<T> m;
  m.cfg = cfg;
  std::size_t downs = cfg.downsamples();
  auto ch = cfg.effective_channels();
  std::size_t N = cfg.input_size;
  if (N == 0 || N % (std::size_t(1) << downs) != 0)
    throw ConfigError("input size " + std::to_string(N) + " not divisible by 2^" +
                      std::to_string(downs));

  std::size_t cin = 1;
  for (std::size_t i = 0; i < downs; ++i) {
    m.enc.push_back(ConvBlock<T>::init(cin, ch[i], rng));
    cin = ch[i];
  }
  m.bottleneck = ConvBlock<T>::init(ch[downs - 1], ch[downs], rng);
  m.up.resize(downs);
  m.dec.resize(downs);
  for (std::size_t i = downs; i-- > 0;) {
    m.up[i] = ConvLayer<T>::init(ch[i + 1], ch[i], 3, rng);
    m.dec[i] = ConvBlock<T>::init(2 * ch[i], ch[i], rng);
  }
  m.head = ConvLayer<T>::init(ch[0], 1, 1, rng);

  bool vss_at[2] = {false, false};
  switch (cfg.variant) {
    case Variant::meunet:
    case Variant::meunet_fixed_patch: vss_at[0] = vss_at[1] = true; break;
    case Variant::meunet_v1: vss_at[0] = true; break;
    case Variant::meunet_v2: vss_at[1] = true; break;
    default: break;
  }
  m.skips.resize(downs);
  std::size_t depths[2] = {cfg.vss_depths.first, cfg.vss_depths.second};
  std::size_t edims[2] = {cfg.embed_dims.first, cfg.embed_dims.second};
  for (std::size_t i = 0; i < downs && i < 2; ++i) {
    if (!vss_at[i]) continue;
    std::size_t Ni = N >> i;
    std::size_t M = cfg.variant == Variant::meunet_fixed_patch
                        ? 8
                        : adaptive_patch_size(Ni, cfg.token_count);
    if (Ni % M != 0)
      throw ConfigError("patch size " + std::to_string(M) + " does not divide level-" +
                        std::to_string(i) + " resolution " + std::to_string(Ni));
    SkipStack<T> st;
    st.pe = PatchEmbedParams<T>::init(M, ch[i], edims[i], rng);
    for (std::size_t k = 0; k < depths[i]; ++k)
      st.blocks.push_back(VSSBlockParams<T>::init(edims[i], cfg.state_dim, rng));
    m.skips[i] = std::move(st);
  }
  return m;
}

template <class T>
Tensor<T> MEUNet<T>::forward(const Tensor<T>& x) const {
  const Shape& s = x.shape();
  std::size_t N = cfg.input_size;
  if (s.size() != 4 || s[1] != 1 || s[2] != N || s[3] != N)
    throw ShapeError("forward: expected [B,1," + std::to_string(N) + "," +
                     std::to_string(N) + "], got " + shape_str(s));
  std::size_t downs = cfg.downsamples();
  auto ch = cfg.effective_channels();

  std::vector<Tensor<T>> skip_feats;
  Tensor<T> h = x;
  for (std::size_t i = 0; i < downs; ++i) {
    h = enc[i].forward(h);
    skip_feats.push_back(h);
    h = maxpool2(h);
  }
  h = bottleneck.forward(h);
  for (std::size_t i = downs; i-- > 0;) {
    h = conv2d(upsample2(h), up[i].w, up[i].b);
    Tensor<T> skip = skip_feats[i];
    if (i < skips.size() && skips[i]) {
      const auto& st = *skips[i];
      std::size_t Ni = N >> i;
      auto tok = patch_embed(skip, st.pe);
      for (const auto& blk : st.blocks) tok = vss_block(tok, blk);
      skip = patch_unembed(tok, st.pe, ch[i], Ni);
    }
    h = dec[i].forward(concat<T>({skip, h}, 1));
  }
  return tanh(conv2d(h, head.w, head.b));
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> MEUNet<T>::named_params() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  auto add_conv = [&](const std::string& n, const ConvLayer<T>& c) {
    out.emplace_back(n + ".w", c.w);
    out.emplace_back(n + ".b", c.b);
  };
  auto add_block = [&](const std::string& n, const ConvBlock<T>& b) {
    add_conv(n + ".c1", b.c1);
    out.emplace_back(n + ".n1.gamma", b.n1.gamma);
    out.emplace_back(n + ".n1.beta", b.n1.beta);
    add_conv(n + ".c2", b.c2);
    out.emplace_back(n + ".n2.gamma", b.n2.gamma);
    out.emplace_back(n + ".n2.beta", b.n2.beta);
  };
  for (std::size_t i = 0; i < enc.size(); ++i)
    add_block("enc" + std::to_string(i), enc[i]);
  add_block("bottleneck", bottleneck);
  for (std::size_t i = 0; i < up.size(); ++i) {
    add_conv("up" + std::to_string(i), up[i]);
    add_block("dec" + std::to_string(i), dec[i]);
  }
  add_conv("head", head);
  for (std::size_t i = 0; i < skips.size(); ++i) {
    if (!skips[i]) continue;
    std::string pfx = "skip" + std::to_string(i);
    out.emplace_back(pfx + ".embed.w", skips[i]->pe.embed.w);
    out.emplace_back(pfx + ".embed.b", skips[i]->pe.embed.b);
    out.emplace_back(pfx + ".unembed.w", skips[i]->pe.unembed.w);
    out.emplace_back(pfx + ".unembed.b", skips[i]->pe.unembed.b);
    for (std::size_t k = 0; k < skips[i]->blocks.size(); ++k)
      for (auto& [n, t] : skips[i]->blocks[k].named())
        out.emplace_back(pfx + ".blk" + std::to_string(k) + "." + n, t);
  }
  return out;
}

template <class T>
std::vector<Tensor<T>> MEUNet<T>::params() const {
  std::vector<Tensor<T>> out;
  for (auto& [n, t] : named_params()) out.push_back(t);
  return out;
}

template <class T>
std::size_t MEUNet<T>::param_count() const {
  std::size_t n = 0;
  for (auto& [name, t] : named_params()) n += t.numel();
  return n;
}

#define SCT_INSTANTIATE(T)                                                         \
  template struct LinearLayer<T>;                                                  \
  template struct ConvLayer<T>;                                                    \
  template struct NormLayer<T>;                                                    \
  template struct ConvBlock<T>;                                                    \
  template struct VSSBlockParams<T>;                                               \
  template Tensor<T> vss_block(const Tensor<T>&, const VSSBlockParams<T>&);        \
  template struct PatchEmbedParams<T>;                                             \
  template Tensor<T> patch_embed(const Tensor<T>&, const PatchEmbedParams<T>&);    \
  template Tensor<T> patch_unembed(const Tensor<T>&, const PatchEmbedParams<T>&,   \
                                   std::size_t, std::size_t);                      \
  template struct MEUNet<T>;                                                       \
  template MEUNet<T> build_model(const MEUNetConfig&, Pcg32&);

SCT_INSTANTIATE(float)
SCT_INSTANTIATE(double)
#undef SCT_INSTANTIATE

}  // namespace sct
