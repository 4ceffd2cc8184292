// SPDX-License-Identifier: Apache-2.0
#include "plm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "plm/checkpoint_io.hpp"

namespace plm {

namespace {

using json = nlohmann::json;

constexpr real kMaskNegative = real(-1e9);
constexpr real kInitStd = real(0.02);

json config_to_json(const ModelConfig& c) {
  return json{{"vocab_size", c.vocab_size}, {"hidden", c.hidden},   {"layers", c.layers},
              {"heads", c.heads},           {"max_len", c.max_len}, {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int64_t>();
  c.hidden = j.at("hidden").get<int64_t>();
  c.layers = j.at("layers").get<int64_t>();
  c.heads = j.at("heads").get<int64_t>();
  c.max_len = j.at("max_len").get<int64_t>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

// Additive causal mask: zero at or below the diagonal, a large negative
// number above it. exp(-1e9 - max) underflows to exactly zero, so masked
// positions contribute nothing to softmax rows and causality is exact.
TensorPtr causal_mask(int64_t t) {
  auto m = Tensor::zeros({t, t});
  auto& d = m->data();
  for (int64_t i = 0; i < t; ++i)
    for (int64_t j = i + 1; j < t; ++j) d[i * t + j] = kMaskNegative;
  return m;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size <= 0) fail("ModelConfig: vocab_size must be positive");
  if (hidden <= 0 || layers <= 0 || heads <= 0) fail("ModelConfig: sizes must be positive");
  if (hidden % heads != 0) fail("ModelConfig: hidden must be divisible by heads");
  if (max_len < 2) fail("ModelConfig: max_len must be at least 2");
}

TransformerLM::TransformerLM(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  build_params();
  Rng root(cfg_.seed);
  auto init = root.split("init");
  for (auto& [name, p] : params_) {
    if (name.ends_with(".g")) {
      std::fill(p->data().begin(), p->data().end(), real(1));
    } else if (name.ends_with(".b")) {
      // stays zero
    } else {
      auto r = init.split(name);
      for (auto& v : p->data()) v = static_cast<real>(r.normal()) * kInitStd;
    }
  }
}

void TransformerLM::build_params() {
  params_.clear();
  auto add_param = [&](const std::string& name, Shape shape) {
    params_.emplace_back(name, Tensor::zeros(std::move(shape), true));
  };
  int64_t h = cfg_.hidden;
  add_param("tok_emb", {cfg_.vocab_size, h});
  add_param("pos_emb", {cfg_.max_len, h});
  for (int64_t l = 0; l < cfg_.layers; ++l) {
    std::string p = "blk" + std::to_string(l) + ".";
    add_param(p + "ln1.g", {h});
    add_param(p + "ln1.b", {h});
    add_param(p + "wq", {h, h});
    add_param(p + "wk", {h, h});
    add_param(p + "wv", {h, h});
    add_param(p + "wo", {h, h});
    add_param(p + "ln2.g", {h});
    add_param(p + "ln2.b", {h});
    add_param(p + "mlp.w1", {h, 4 * h});
    add_param(p + "mlp.w2", {4 * h, h});
  }
  add_param("lnf.g", {h});
  add_param("lnf.b", {h});
  add_param("out_proj", {cfg_.vocab_size, h});
}

TensorPtr TransformerLM::param(const std::string& name) const {
  for (const auto& [n, p] : params_)
    if (n == name) return p;
  fail("TransformerLM: no parameter named " + name);
}

int64_t TransformerLM::num_parameters() const {
  int64_t n = 0;
  for (const auto& [name, p] : params_) n += p->numel();
  return n;
}

TensorPtr TransformerLM::forward_hidden(std::span<const int> ids) const {
  int64_t t = static_cast<int64_t>(ids.size());
  if (t == 0) fail("forward: empty sequence");
  if (t > cfg_.max_len)
    fail("forward: sequence length " + std::to_string(t) + " exceeds max_len " +
         std::to_string(cfg_.max_len));
  for (int id : ids)
    if (id < 0 || id >= cfg_.vocab_size)
      fail("forward: token id " + std::to_string(id) + " outside vocabulary of size " +
           std::to_string(cfg_.vocab_size));

  int64_t h = cfg_.hidden;
  int64_t nh = cfg_.heads;
  int64_t hd = h / nh;
  real inv_sqrt_hd = static_cast<real>(1.0 / std::sqrt(static_cast<double>(hd)));

  auto x = add(embedding(param("tok_emb"), ids), slice(param("pos_emb"), 0, 0, t));
  auto mask = causal_mask(t);
  for (int64_t l = 0; l < cfg_.layers; ++l) {
    std::string p = "blk" + std::to_string(l) + ".";
    auto hn = layer_norm(x, param(p + "ln1.g"), param(p + "ln1.b"));
    auto q = matmul(hn, param(p + "wq"));
    auto k = matmul(hn, param(p + "wk"));
    auto v = matmul(hn, param(p + "wv"));
    std::vector<TensorPtr> head_outs;
    head_outs.reserve(nh);
    for (int64_t head = 0; head < nh; ++head) {
      auto qh = slice(q, 1, head * hd, (head + 1) * hd);
      auto kh = slice(k, 1, head * hd, (head + 1) * hd);
      auto vh = slice(v, 1, head * hd, (head + 1) * hd);
      auto scores = add(scale(matmul(qh, transpose(kh)), inv_sqrt_hd), mask);
      head_outs.push_back(matmul(softmax(scores), vh));
    }
    auto attn = matmul(concat(head_outs, 1), param(p + "wo"));
    x = add(x, attn);
    auto hn2 = layer_norm(x, param(p + "ln2.g"), param(p + "ln2.b"));
    auto mlp = matmul(gelu(matmul(hn2, param(p + "mlp.w1"))), param(p + "mlp.w2"));
    x = add(x, mlp);
  }
  return layer_norm(x, param("lnf.g"), param("lnf.b"));
}

TensorPtr TransformerLM::hidden_states(std::span<const int> ids) const {
  return forward_hidden(ids);
}

TensorPtr TransformerLM::forward(std::span<const int> ids) const {
  return matmul(forward_hidden(ids), transpose(param("out_proj")));
}

std::vector<double> TransformerLM::token_log_probs(std::span<const int> ids) const {
  if (ids.size() < 2) fail("token_log_probs: need at least two tokens");
  NoGradGuard ng;
  auto logits = forward(ids.subspan(0, ids.size() - 1));
  std::vector<int> targets(ids.begin() + 1, ids.end());
  auto nll = cross_entropy_logits(logits, targets);
  std::vector<double> out(nll->data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = -static_cast<double>(nll->data()[i]);
  return out;
}

double TransformerLM::sequence_log_prob(std::span<const int> ids) const {
  auto lps = token_log_probs(ids);
  return std::accumulate(lps.begin(), lps.end(), 0.0);
}

GenerateResult TransformerLM::generate(std::span<const int> prompt,
                                       const GenerateParams& params) const {
  if (prompt.empty()) fail("generate: prompt must be non-empty");
  if (params.max_new <= 0) fail("generate: max_new must be positive");
  if (params.temperature < 0) fail("generate: temperature must be non-negative");
  NoGradGuard ng;
  Rng rng(params.seed);
  auto sampler = rng.split("generate");

  std::vector<int> ctx(prompt.begin(), prompt.end());
  GenerateResult res;
  for (int step = 0; step < params.max_new; ++step) {
    size_t window = std::min(ctx.size(), static_cast<size_t>(cfg_.max_len));
    std::span<const int> view(ctx.data() + (ctx.size() - window), window);
    auto logits = forward(view);
    int64_t v = cfg_.vocab_size;
    const real* row = logits->data().data() + (window - 1) * v;

    int next;
    double logp;
    if (params.temperature == 0.0) {
      next = 0;
      for (int64_t j = 1; j < v; ++j)
        if (row[j] > row[next]) next = static_cast<int>(j);
      logp = 0.0;
    } else {
      // Candidate set: top_k ids by logit (ties to the lower id), or all.
      std::vector<int> cand(static_cast<size_t>(v));
      std::iota(cand.begin(), cand.end(), 0);
      if (params.top_k > 0 && params.top_k < v) {
        std::stable_sort(cand.begin(), cand.end(),
                         [&](int a, int b) { return row[a] > row[b]; });
        cand.resize(static_cast<size_t>(params.top_k));
      }
      double mx = -1e300;
      for (int j : cand) mx = std::max(mx, static_cast<double>(row[j]) / params.temperature);
      std::vector<double> w(cand.size());
      double denom = 0;
      for (size_t i = 0; i < cand.size(); ++i) {
        w[i] = std::exp(static_cast<double>(row[cand[i]]) / params.temperature - mx);
        denom += w[i];
      }
      size_t pick = sampler.categorical(w);
      next = cand[pick];
      logp = std::log(w[pick] / denom);
    }
    if (next == params.eos_id) {
      res.hit_eos = true;
      break;
    }
    res.tokens.push_back(next);
    res.logps.push_back(logp);
    ctx.push_back(next);
  }
  return res;
}

void TransformerLM::resize_vocab(int64_t new_vocab, ResizeInit rule) {
  int64_t old_v = cfg_.vocab_size;
  if (new_vocab <= old_v)
    fail("resize_vocab: new vocabulary " + std::to_string(new_vocab) +
         " must exceed current " + std::to_string(old_v));
  int64_t h = cfg_.hidden;
  Rng noise_rng = Rng(cfg_.seed).split("resize");

  for (const char* name : {"tok_emb", "out_proj"}) {
    auto old_t = param(name);
    auto grown = Tensor::zeros({new_vocab, h}, true);
    std::copy(old_t->data().begin(), old_t->data().end(), grown->data().begin());
    std::vector<real> mean_row(static_cast<size_t>(h), real(0));
    for (int64_t r = 0; r < old_v; ++r)
      for (int64_t c = 0; c < h; ++c) mean_row[c] += old_t->data()[r * h + c];
    for (auto& m : mean_row) m /= static_cast<real>(old_v);
    auto row_rng = noise_rng.split(name);
    for (int64_t r = old_v; r < new_vocab; ++r) {
      for (int64_t c = 0; c < h; ++c) {
        real v = 0;
        switch (rule) {
          case ResizeInit::mean_plus_noise:
            v = mean_row[c] + static_cast<real>(row_rng.normal()) * kInitStd;
            break;
          case ResizeInit::mean:
            v = mean_row[c];
            break;
          case ResizeInit::zeros:
            v = 0;
            break;
        }
        grown->data()[r * h + c] = v;
      }
    }
    for (auto& [n, p] : params_)
      if (n == name) p = grown;
    // Optimizer moments for grown tensors keep old rows and zero new rows.
    auto it = opt_state.moments.find(name);
    if (it != opt_state.moments.end()) {
      it->second.first.resize(static_cast<size_t>(new_vocab * h), real(0));
      it->second.second.resize(static_cast<size_t>(new_vocab * h), real(0));
    }
  }
  cfg_.vocab_size = new_vocab;
}

void TransformerLM::save(const std::string& path) const {
  json header;
  header["kind"] = "lm";
  header["config"] = config_to_json(cfg_);
  header["step"] = train_step;
  header["adam_step"] = opt_state.step;
  std::map<std::string, ckpt_io::NamedArray> tensors;
  for (const auto& [name, p] : params_) tensors["p." + name] = {p->shape(), p->data()};
  for (const auto& [name, mv] : opt_state.moments) {
    auto shape = param(name)->shape();
    tensors["adam.m." + name] = {shape, mv.first};
    tensors["adam.v." + name] = {shape, mv.second};
  }
  ckpt_io::write_checkpoint(path, std::move(header), tensors);
}

TransformerLM TransformerLM::load(const std::string& path) {
  auto loaded = ckpt_io::read_checkpoint(path);
  if (loaded.header.value("kind", "") != "lm")
    fail("TransformerLM::load: " + path + " is not a language-model checkpoint");
  TransformerLM m;
  m.cfg_ = config_from_json(loaded.header.at("config"));
  m.cfg_.validate();
  m.build_params();
  for (auto& [name, p] : m.params_) {
    auto it = loaded.tensors.find("p." + name);
    if (it == loaded.tensors.end()) fail("TransformerLM::load: missing tensor " + name);
    if (it->second.shape != p->shape())
      fail("TransformerLM::load: tensor " + name + " has shape " +
           shape_str(it->second.shape) + ", expected " + shape_str(p->shape()));
    p->data() = std::move(it->second.data);
  }
  m.train_step = loaded.header.value("step", int64_t{0});
  m.opt_state.step = loaded.header.value("adam_step", int64_t{0});
  for (auto& [name, arr] : loaded.tensors) {
    if (name.rfind("adam.m.", 0) == 0) {
      std::string pname = name.substr(7);
      m.opt_state.moments[pname].first = std::move(arr.data);
    } else if (name.rfind("adam.v.", 0) == 0) {
      std::string pname = name.substr(7);
      m.opt_state.moments[pname].second = std::move(arr.data);
    }
  }
  return m;
}

TransformerLM TransformerLM::clone() const {
  TransformerLM m;
  m.cfg_ = cfg_;
  m.build_params();
  for (size_t i = 0; i < params_.size(); ++i) m.params_[i].second->data() = params_[i].second->data();
  m.opt_state = opt_state;
  m.train_step = train_step;
  return m;
}

}  // namespace plm
