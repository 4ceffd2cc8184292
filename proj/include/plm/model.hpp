// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plm/optim.hpp"
#include "plm/rng.hpp"
#include "plm/tensor.hpp"

namespace plm {

struct ModelConfig {
  int64_t vocab_size = 0;
  int64_t hidden = 128;
  int64_t layers = 4;
  int64_t heads = 4;
  int64_t max_len = 256;
  uint64_t seed = 0;

  void validate() const;
};

enum class ResizeInit {
  mean_plus_noise,  // mean of existing rows + N(0, 0.02^2), seeded
  mean,
  zeros,
};

struct GenerateParams {
  int max_new = 32;
  double temperature = 0.0;  // 0 = greedy argmax
  int top_k = 0;             // 0 = full vocabulary
  uint64_t seed = 0;
  int eos_id = -1;  // -1 = never stop early
};

struct GenerateResult {
  std::vector<int> tokens;      // generated continuation, EOS not included
  std::vector<double> logps;    // log prob of each token under the sampling policy
  bool hit_eos = false;
};

/// Decoder-only transformer: pre-norm blocks, learned absolute positions,
/// causal self-attention, GELU MLP, untied input/output embeddings.
/// The object is the checkpoint: config, weights, optimizer state and the
/// training step counter all travel together through save/load.
class TransformerLM {
public:
  explicit TransformerLM(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  std::vector<std::pair<std::string, TensorPtr>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, TensorPtr>>& parameters() const { return params_; }
  TensorPtr param(const std::string& name) const;
  int64_t num_parameters() const;

  /// Logits [T, V] for a single sequence. Position i attends to 0..i only.
  TensorPtr forward(std::span<const int> ids) const;
  /// Final-layer-norm hidden states [T, H]; the reward model head reads these.
  TensorPtr hidden_states(std::span<const int> ids) const;

  /// Sum over i >= 1 of log p(ids[i] | ids[0..i-1]); the autoregressive
  /// chain evaluated in one forward pass.
  double sequence_log_prob(std::span<const int> ids) const;
  /// Per-position log p(ids[i] | prefix) for i in [1, n); length n-1.
  std::vector<double> token_log_probs(std::span<const int> ids) const;

  GenerateResult generate(std::span<const int> prompt, const GenerateParams& params) const;

  /// Grows embedding and output rows from V to new_vocab. Rows below V are
  /// left bit-identical, so logits over the old vocabulary do not move.
  void resize_vocab(int64_t new_vocab, ResizeInit rule = ResizeInit::mean_plus_noise);

  void save(const std::string& path) const;
  static TransformerLM load(const std::string& path);
  TransformerLM clone() const;

  AdamWState opt_state;
  int64_t train_step = 0;

private:
  TransformerLM() = default;
  TensorPtr forward_hidden(std::span<const int> ids) const;
  void build_params();

  ModelConfig cfg_;
  std::vector<std::pair<std::string, TensorPtr>> params_;
};

/// Checkpoint container format shared by the LM and the reward model:
/// 8-byte magic, 8-byte little-endian header length, JSON header with the
/// config and a name -> {offset, shape} table, then flat little-endian
/// float data. Loading validates magic/version/dtype before touching state.
namespace ckpt {
constexpr char kMagic[8] = {'P', 'L', 'M', 'C', 'K', 'P', 'T', '1'};
constexpr int kVersion = 1;
}  // namespace ckpt

}  // namespace plm
