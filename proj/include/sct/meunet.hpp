#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sct/ssm.hpp"
#include "sct/tensor.hpp"

namespace sct {

enum class Variant {
  meunet,             // VSS stacks on both skip paths, adaptive patch size
  meunet_v1,          // VSS on the first (high-res) skip only
  meunet_v2,          // VSS on the second skip only
  meunet_fixed_patch, // VSS on both skips, patch size fixed to 8
  unet_d2,            // plain UNet, 2 downsamples
  unet_d3,            // 3 downsamples, channels extended by doubling
  unet_d4,            // 4 downsamples
};

Variant variant_from_string(const std::string& name);  // ConfigError on unknown
std::string variant_name(Variant v);

struct MEUNetConfig {
  Variant variant = Variant::meunet;
  std::vector<std::size_t> channels = {64, 128, 256};
  std::size_t token_count = 1024;             // L
  std::pair<std::size_t, std::size_t> vss_depths = {16, 8};
  std::pair<std::size_t, std::size_t> embed_dims = {128, 256};
  std::size_t state_dim = 8;                  // D
  std::size_t input_size = 256;               // N (square inputs)

  std::size_t downsamples() const;
  // channels for this variant: unet_d3/d4 extend the base list by doubling
  std::vector<std::size_t> effective_channels() const;
};

// M = sqrt(N^2 / L); ConfigError when not a positive integer.
std::size_t adaptive_patch_size(std::size_t N, std::size_t L);

template <class T>
struct LinearLayer {
  Tensor<T> w, b;
  static LinearLayer init(std::size_t in, std::size_t out, Pcg32& rng);
};

template <class T>
struct ConvLayer {
  Tensor<T> w, b;  // [Cout,Cin,k,k], [Cout]
  static ConvLayer init(std::size_t cin, std::size_t cout, std::size_t k, Pcg32& rng);
};

template <class T>
struct NormLayer {
  Tensor<T> gamma, beta;
  static NormLayer init(std::size_t c);
};

// [conv3x3 -> instance_norm -> leaky_relu(0.2)] x 2
template <class T>
struct ConvBlock {
  ConvLayer<T> c1, c2;
  NormLayer<T> n1, n2;
  static ConvBlock init(std::size_t cin, std::size_t cout, Pcg32& rng);
  Tensor<T> forward(const Tensor<T>& x) const;
};

// Residual gated token mixer. The output projection starts at zero, so a
// freshly initialized block is the identity map.
template <class T>
struct VSSBlockParams {
  NormLayer<T> pre_norm;
  LinearLayer<T> in_proj, gate_proj;
  Tensor<T> dw_w, dw_b;  // depthwise 3x3 over the token grid
  SS2DParams<T> ss;
  NormLayer<T> post_norm;
  LinearLayer<T> out_proj;
  static VSSBlockParams init(std::size_t E, std::size_t D, Pcg32& rng);
  std::vector<std::pair<std::string, Tensor<T>>> named() const;
};

// tokens: [B,L,E] with L a perfect square
template <class T>
Tensor<T> vss_block(const Tensor<T>& tokens, const VSSBlockParams<T>& p);

// Non-overlapping MxM patches embedded to dim E and back.
template <class T>
struct PatchEmbedParams {
  std::size_t M = 0;
  LinearLayer<T> embed;    // C*M*M -> E
  LinearLayer<T> unembed;  // E -> C*M*M
  static PatchEmbedParams init(std::size_t M, std::size_t C, std::size_t E, Pcg32& rng);
};

template <class T>
Tensor<T> patch_embed(const Tensor<T>& feat, const PatchEmbedParams<T>& p);
template <class T>
Tensor<T> patch_unembed(const Tensor<T>& tokens, const PatchEmbedParams<T>& p,
                        std::size_t C, std::size_t N);

template <class T>
struct SkipStack {
  PatchEmbedParams<T> pe;
  std::vector<VSSBlockParams<T>> blocks;
};

template <class T>
struct MEUNet {
  MEUNetConfig cfg;
  std::vector<ConvBlock<T>> enc;
  ConvBlock<T> bottleneck;
  std::vector<ConvLayer<T>> up;   // up[i]: channels[i+1] -> channels[i] after x2
  std::vector<ConvBlock<T>> dec;  // dec[i]: 2*channels[i] -> channels[i]
  ConvLayer<T> head;              // 1x1 -> 1 channel, tanh
  std::vector<std::optional<SkipStack<T>>> skips;  // per encoder level

  Tensor<T> forward(const Tensor<T>& x) const;
  std::vector<std::pair<std::string, Tensor<T>>> named_params() const;
  std::vector<Tensor<T>> params() const;
  std::size_t param_count() const;
};

template <class T>
MEUNet<T> build_model(const MEUNetConfig& cfg, Pcg32& rng);

using MEUNetF = MEUNet<float>;

}  // namespace sct
