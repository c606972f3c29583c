#include "pcattn/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "pcattn/dataset.hpp"
#include "pcattn/rng.hpp"

namespace pcattn {

void TaskConfig::validate() const {
  if (name == "copy") {
    if (k < 1 || delay < 0 || vocab < 2) throw std::invalid_argument("copy: need k>=1, delay>=0, vocab>=2");
  } else if (name == "niah") {
    if (seq_len < 8 || depth_ratio <= 0.0 || depth_ratio >= 1.0 || vocab < 2)
      throw std::invalid_argument("niah: need seq_len>=8, 0<depth_ratio<1, vocab>=2");
  } else if (name == "listops") {
    if (max_depth < 1 || max_args < 2 || max_len < 8)
      throw std::invalid_argument("listops: need max_depth>=1, max_args>=2, max_len>=8");
  } else if (name == "phase_memory") {
    if (k < 1 || bins < 2) throw std::invalid_argument("phase_memory: need k>=1, bins>=2");
  } else if (name == "multipitch") {
    if (n_active < 1 || n_active > k) throw std::invalid_argument("multipitch: need 1<=n_active<=k");
    if (n_samples < k) throw std::invalid_argument("multipitch: need n_samples>=k");
  } else if (name == "fft_mnist") {
    if (image_size != 8 && image_size != 16) throw std::invalid_argument("fft_mnist: t in {8,16}");
  } else {
    throw std::invalid_argument("unknown task: " + name);
  }
}

int TaskConfig::model_vocab() const {
  if (name == "copy") return vocab + 1;  // blank 0, payload 1..V-1, query sentinel V
  if (name == "niah") return vocab;
  if (name == "listops") return 17;  // pad, brackets, 4 ops, 10 digits
  if (name == "phase_memory") return 3;  // blank / data / recall markers
  return 0;
}

int TaskConfig::value_channels() const {
  if (name == "phase_memory" || name == "multipitch" || name == "fft_mnist") return 1;
  return 0;
}

int TaskConfig::n_classes() const {
  if (name == "copy") return vocab;
  if (name == "niah") return vocab;
  if (name == "listops") return 10;
  if (name == "phase_memory") return bins;
  if (name == "multipitch") return k;
  if (name == "fft_mnist") return 10;
  return 0;
}

int TaskConfig::sample_len() const {
  if (name == "copy" || name == "phase_memory") return 2 * k + delay;
  if (name == "niah") return seq_len;
  if (name == "listops") return max_len;
  if (name == "multipitch") return n_samples;
  if (name == "fft_mnist") return image_size * image_size;
  return 0;
}

std::string TaskConfig::metric_name() const {
  if (name == "copy") return "copy_acc";
  if (name == "niah") return "needle_acc";
  if (name == "listops") return "listops_acc";
  if (name == "phase_memory") return "phase_acc";
  if (name == "multipitch") return "multipitch_per_label_acc";
  if (name == "fft_mnist") return "mnist_acc";
  return "acc";
}

TaskConfig default_task(const std::string& name) {
  TaskConfig cfg;
  cfg.name = name;
  if (name == "niah") cfg.vocab = 64;
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Generators. Each is a pure function of (params, seed).
// ---------------------------------------------------------------------------

TaskSample gen_copy(int k, int delay, int vocab, uint64_t seed) {
  Rng rng(mix_seed(seed, 0xc0f1, 0));
  TaskSample s;
  s.n = 2 * k + delay;
  s.tokens.assign(static_cast<size_t>(s.n), 0);
  const int32_t query = static_cast<int32_t>(vocab);
  for (int i = 0; i < k; ++i) {
    s.tokens[static_cast<size_t>(i)] = static_cast<int32_t>(1 + rng.uniform_int(vocab - 1));
    s.tokens[static_cast<size_t>(k + delay + i)] = query;
    s.loss_mask.push_back(k + delay + i);
    s.target.push_back(s.tokens[static_cast<size_t>(i)]);
  }
  return s;
}

TaskSample gen_niah(int seq_len, int vocab, double depth_ratio, uint64_t seed) {
  Rng rng(mix_seed(seed, 0x41a8, 0));
  TaskSample s;
  s.n = seq_len;
  const int pos = static_cast<int>(depth_ratio * seq_len);
  const int32_t key = static_cast<int32_t>(rng.uniform_int(vocab));
  int32_t value = static_cast<int32_t>(rng.uniform_int(vocab));
  while (value == key) value = static_cast<int32_t>(rng.uniform_int(vocab));  // keep it well posed
  s.tokens.assign(static_cast<size_t>(seq_len), 0);
  for (int i = 0; i < seq_len; ++i) {
    int32_t tok = static_cast<int32_t>(rng.uniform_int(vocab));
    while (tok == key) tok = static_cast<int32_t>(rng.uniform_int(vocab));  // the key stays unique
    s.tokens[static_cast<size_t>(i)] = tok;
  }
  s.tokens[static_cast<size_t>(pos)] = key;
  s.tokens[static_cast<size_t>(pos + 1)] = value;
  s.tokens[static_cast<size_t>(seq_len - 1)] = key;  // the query repeats the key
  s.loss_mask = {seq_len - 1};
  s.target = {value};
  return s;
}

namespace {

struct ListopsNode {
  int op = -1;  // -1: leaf digit
  int digit = 0;
  std::vector<ListopsNode> args;
};

ListopsNode listops_tree(int depth, int max_depth, int max_args, Rng& rng) {
  ListopsNode n;
  n.op = static_cast<int>(rng.uniform_int(4));
  const int n_args = 2 + static_cast<int>(rng.uniform_int(max_args - 1));
  for (int a = 0; a < n_args; ++a) {
    ListopsNode child;
    if (depth < max_depth && rng.uniform() < 0.35) {
      child = listops_tree(depth + 1, max_depth, max_args, rng);
    } else {
      child.digit = static_cast<int>(rng.uniform_int(10));
    }
    n.args.push_back(std::move(child));
  }
  return n;
}

int listops_apply(int op, std::vector<int>& vals) {
  switch (op) {
    case 0: return *std::max_element(vals.begin(), vals.end());
    case 1: return *std::min_element(vals.begin(), vals.end());
    case 2: {
      std::sort(vals.begin(), vals.end());
      return vals[(vals.size() - 1) / 2];  // lower median
    }
    default: {
      int acc = 0;
      for (int v : vals) acc += v;
      return acc % 10;
    }
  }
}

int listops_eval_tree(const ListopsNode& n) {
  if (n.op < 0) return n.digit;
  std::vector<int> vals;
  vals.reserve(n.args.size());
  for (const auto& a : n.args) vals.push_back(listops_eval_tree(a));
  return listops_apply(n.op, vals);
}

void listops_emit(const ListopsNode& n, std::vector<int32_t>& out) {
  using namespace listops_tok;
  if (n.op < 0) {
    out.push_back(kDigit0 + n.digit);
    return;
  }
  out.push_back(kOpen);
  out.push_back(kMax + n.op);
  for (const auto& a : n.args) listops_emit(a, out);
  out.push_back(kClose);
}

int listops_eval_span(const std::vector<int32_t>& toks, size_t& i);

int listops_eval_value(const std::vector<int32_t>& toks, size_t& i) {
  using namespace listops_tok;
  if (i >= toks.size()) throw std::invalid_argument("listops: truncated expression");
  if (toks[i] == kOpen) return listops_eval_span(toks, i);
  const int32_t t = toks[i];
  if (t < kDigit0 || t > kDigit0 + 9) throw std::invalid_argument("listops: expected digit");
  ++i;
  return t - kDigit0;
}

int listops_eval_span(const std::vector<int32_t>& toks, size_t& i) {
  using namespace listops_tok;
  if (toks[i] != kOpen) throw std::invalid_argument("listops: expected '['");
  ++i;
  const int32_t op_tok = toks[i];
  if (op_tok < kMax || op_tok > kSumMod) throw std::invalid_argument("listops: expected operator");
  ++i;
  std::vector<int> vals;
  while (i < toks.size() && toks[i] != kClose) vals.push_back(listops_eval_value(toks, i));
  if (i >= toks.size()) throw std::invalid_argument("listops: missing ']'");
  ++i;  // consume ']'
  if (vals.empty()) throw std::invalid_argument("listops: operator with no arguments");
  return listops_apply(op_tok - kMax, vals);
}

}  // namespace

int listops_eval_tokens(const std::vector<int32_t>& tokens) {
  size_t i = 0;
  while (i < tokens.size() && tokens[i] == listops_tok::kPad) ++i;
  if (i >= tokens.size()) throw std::invalid_argument("listops: empty sequence");
  const int v = listops_eval_value(tokens, i);
  for (; i < tokens.size(); ++i)
    if (tokens[i] != listops_tok::kPad) throw std::invalid_argument("listops: trailing tokens");
  return v;
}

TaskSample gen_listops(int max_depth, int max_args, int max_len, uint64_t seed) {
  // resample whole expressions until one fits max_len
  for (uint64_t attempt = 0;; ++attempt) {
    Rng rng(mix_seed(seed, 0x1157, attempt));
    ListopsNode root = listops_tree(1, max_depth, max_args, rng);
    std::vector<int32_t> toks;
    listops_emit(root, toks);
    if (static_cast<int>(toks.size()) > max_len) continue;
    TaskSample s;
    s.n = max_len;
    s.tokens = std::move(toks);
    s.tokens.resize(static_cast<size_t>(max_len), listops_tok::kPad);
    s.loss_mask = {max_len - 1};  // trailing pad acts as the readout query
    s.target = {listops_eval_tree(root)};
    return s;
  }
}

TaskSample gen_phase_memory(int k, int delay, int bins, uint64_t seed) {
  Rng rng(mix_seed(seed, 0xfa5e, 0));
  const double two_pi = 6.283185307179586476925287;
  TaskSample s;
  s.n = 2 * k + delay;
  s.tokens.assign(static_cast<size_t>(s.n), 0);  // 0 = blank marker
  s.values.assign(static_cast<size_t>(s.n), {0.0, 0.0});
  for (int i = 0; i < k; ++i) {
    const double theta = rng.uniform(0.0, two_pi);
    s.tokens[static_cast<size_t>(i)] = 1;  // data marker
    s.values[static_cast<size_t>(i)] = {std::cos(theta), std::sin(theta)};
    s.tokens[static_cast<size_t>(k + delay + i)] = 2;  // recall marker
    s.loss_mask.push_back(k + delay + i);
    int bin = static_cast<int>(theta * bins / two_pi);
    if (bin >= bins) bin = bins - 1;
    s.target.push_back(bin);
  }
  return s;
}

TaskSample gen_multipitch(int k, int n_active, int n_samples, double snr_db, uint64_t seed) {
  if (n_active < 1 || n_active > k) throw std::invalid_argument("multipitch: 1 <= n_active <= k");
  Rng rng(mix_seed(seed, 0x717c, 0));
  const double two_pi = 6.283185307179586476925287;
  TaskSample s;
  s.multilabel = true;
  s.n = n_samples;
  s.values.assign(static_cast<size_t>(n_samples), {0.0, 0.0});
  s.target.assign(static_cast<size_t>(k), 0);
  // active set without replacement
  std::vector<int> idx(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) idx[static_cast<size_t>(i)] = i;
  for (int i = 0; i < n_active; ++i) {
    const int j = i + static_cast<int>(rng.uniform_int(k - i));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    s.target[static_cast<size_t>(idx[static_cast<size_t>(i)])] = 1;
  }
  std::vector<double> phase(static_cast<size_t>(k), 0.0);
  for (int p = 0; p < k; ++p) phase[static_cast<size_t>(p)] = rng.uniform(0.0, two_pi);
  // unit-amplitude exponentials on a fixed frequency grid; the random phase
  // is the only non-structural cue
  const double signal_power = static_cast<double>(n_active);
  const double noise_var = signal_power / std::pow(10.0, snr_db / 10.0);
  const double comp_std = std::sqrt(noise_var / 2.0);
  for (int t = 0; t < n_samples; ++t) {
    std::complex<double> acc(0.0, 0.0);
    for (int p = 0; p < k; ++p) {
      if (!s.target[static_cast<size_t>(p)]) continue;
      const double omega = two_pi * static_cast<double>(p + 1) / (2.0 * k);
      const double ang = omega * t + phase[static_cast<size_t>(p)];
      acc += std::complex<double>(std::cos(ang), std::sin(ang));
    }
    acc += rng.complex_normal(comp_std);
    s.values[static_cast<size_t>(t)] = acc;
  }
  s.loss_mask = {n_samples - 1};
  return s;
}

Array<double> bilinear_resize(const Array<double>& src, int64_t out_rows, int64_t out_cols) {
  Array<double> dst(out_rows, out_cols);
  const double sr = static_cast<double>(src.rows()) / out_rows;
  const double sc = static_cast<double>(src.cols()) / out_cols;
  for (int64_t i = 0; i < out_rows; ++i)
    for (int64_t j = 0; j < out_cols; ++j) {
      const double y = (i + 0.5) * sr - 0.5;
      const double x = (j + 0.5) * sc - 0.5;
      const int64_t y0 = static_cast<int64_t>(std::floor(y));
      const int64_t x0 = static_cast<int64_t>(std::floor(x));
      const double fy = y - y0, fx = x - x0;
      auto pix = [&](int64_t r, int64_t c) {
        r = std::clamp<int64_t>(r, 0, src.rows() - 1);
        c = std::clamp<int64_t>(c, 0, src.cols() - 1);
        return src.at(r, c);
      };
      dst.at(i, j) = (1 - fy) * ((1 - fx) * pix(y0, x0) + fx * pix(y0, x0 + 1)) +
                     fy * ((1 - fx) * pix(y0 + 1, x0) + fx * pix(y0 + 1, x0 + 1));
    }
  return dst;
}

std::vector<std::complex<double>> fft_mnist_tokens(const Array<double>& image28, int t) {
  if (image28.rows() != image28.cols()) throw std::invalid_argument("fft_mnist: image must be square");
  const Array<double> small = bilinear_resize(image28, t, t);
  const CMat spec = fft2(small);
  return spec.data;
}

TaskSample fft_mnist_sample(const Array<double>& image28, int label, int t) {
  TaskSample s;
  s.n = t * t;
  s.values = fft_mnist_tokens(image28, t);
  s.loss_mask = {s.n - 1};
  s.target = {label};
  return s;
}

TaskSample generate(const TaskConfig& cfg, uint64_t seed) {
  cfg.validate();
  if (cfg.name == "copy") return gen_copy(cfg.k, cfg.delay, cfg.vocab, seed);
  if (cfg.name == "niah") return gen_niah(cfg.seq_len, cfg.vocab, cfg.depth_ratio, seed);
  if (cfg.name == "listops") return gen_listops(cfg.max_depth, cfg.max_args, cfg.max_len, seed);
  if (cfg.name == "phase_memory") return gen_phase_memory(cfg.k, cfg.delay, cfg.bins, seed);
  if (cfg.name == "multipitch")
    return gen_multipitch(cfg.k, cfg.n_active, cfg.n_samples, cfg.snr_db, seed);
  if (cfg.name == "fft_mnist") {
    const MnistData& data = mnist_cache(cfg.mnist_dir, /*train=*/true);
    const size_t idx = static_cast<size_t>(mix_seed(seed, 0x3a15, 1) % data.images.size());
    return fft_mnist_sample(data.images[idx], data.labels[idx], cfg.image_size);
  }
  throw std::invalid_argument("unknown task: " + cfg.name);
}

double sample_metric(const TaskSample& s, const std::vector<int32_t>& preds) {
  if (preds.size() != s.target.size())
    throw std::invalid_argument("sample_metric: prediction count mismatch");
  if (s.target.empty()) return 0.0;
  int correct = 0;
  for (size_t i = 0; i < s.target.size(); ++i)
    if (preds[i] == s.target[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(s.target.size());
}

double mc_chance(const TaskConfig& cfg, int trials, uint64_t seed) {
  cfg.validate();
  if (cfg.name == "multipitch") {
    // best constant predictor per label
    std::vector<double> active(static_cast<size_t>(cfg.k), 0.0);
    for (int tr = 0; tr < trials; ++tr) {
      const auto s = generate(cfg, mix_seed(seed, 0xc4a7, static_cast<uint64_t>(tr)));
      for (int j = 0; j < cfg.k; ++j) active[static_cast<size_t>(j)] += s.target[static_cast<size_t>(j)];
    }
    double acc = 0.0;
    for (double a : active) {
      const double p = a / trials;
      acc += std::max(p, 1.0 - p);
    }
    return acc / cfg.k;
  }
  std::map<int32_t, int64_t> hist;
  int64_t total = 0;
  for (int tr = 0; tr < trials; ++tr) {
    const auto s = generate(cfg, mix_seed(seed, 0xc4a7, static_cast<uint64_t>(tr)));
    for (int32_t t : s.target) {
      ++hist[t];
      ++total;
    }
  }
  double sum_sq = 0.0, mode = 0.0;
  for (const auto& [cls, cnt] : hist) {
    const double p = static_cast<double>(cnt) / static_cast<double>(total);
    sum_sq += p * p;
    mode = std::max(mode, p);
  }
  return std::max(sum_sq, mode);
}

}  // namespace pcattn
