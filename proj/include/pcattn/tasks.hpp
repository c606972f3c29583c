#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "pcattn/fft.hpp"
#include "pcattn/tensor.hpp"

namespace pcattn {

// One generated example. Discrete tasks fill `tokens`; phase-carrying tasks
// fill the complex `values` channel; hybrid tasks fill both (markers +
// payload). Targets are class ids per mask position, or a K-bit vector when
// multilabel.
struct TaskSample {
  int n = 0;
  std::vector<int32_t> tokens;
  std::vector<std::complex<double>> values;
  std::vector<int32_t> target;
  std::vector<int32_t> loss_mask;
  bool multilabel = false;
};

struct TaskConfig {
  std::string name = "copy";

  // copy
  int k = 10;
  int delay = 100;
  int vocab = 16;
  // niah
  int seq_len = 2048;
  double depth_ratio = 0.5;
  // listops
  int max_depth = 2;
  int max_args = 3;
  int max_len = 128;
  // phase memory
  int bins = 16;
  // multi-pitch
  int n_active = 3;
  int n_samples = 256;
  double snr_db = 10.0;
  // fft-mnist
  int image_size = 16;
  std::string mnist_dir;

  void validate() const;
  int model_vocab() const;     // token-embedding rows (0: continuous input only)
  int value_channels() const;  // complex input channels (0: tokens only)
  int n_classes() const;
  int sample_len() const;
  std::string metric_name() const;
};

TaskConfig default_task(const std::string& name);

TaskSample gen_copy(int k, int delay, int vocab, uint64_t seed);
TaskSample gen_niah(int seq_len, int vocab, double depth_ratio, uint64_t seed);
TaskSample gen_listops(int max_depth, int max_args, int max_len, uint64_t seed);
TaskSample gen_phase_memory(int k, int delay, int bins, uint64_t seed);
TaskSample gen_multipitch(int k, int n_active, int n_samples, double snr_db, uint64_t seed);

// 28x28 grayscale -> bilinear downsample to t x t -> unnormalised 2-D FFT ->
// t^2 complex tokens in row-major order.
std::vector<std::complex<double>> fft_mnist_tokens(const Array<double>& image28, int t);
TaskSample fft_mnist_sample(const Array<double>& image28, int label, int t);

// Dispatcher; fft_mnist draws from the IDX files under cfg.mnist_dir.
TaskSample generate(const TaskConfig& cfg, uint64_t seed);

// ListOps token ids
namespace listops_tok {
constexpr int32_t kPad = 0, kOpen = 1, kClose = 2, kMax = 3, kMin = 4, kMed = 5, kSumMod = 6,
                  kDigit0 = 7;
}

// Independent recursive evaluator over a token sequence (the generator's
// label oracle).
int listops_eval_tokens(const std::vector<int32_t>& tokens);

// Fraction of mask positions predicted correctly (multilabel: fraction of
// bits correct).
double sample_metric(const TaskSample& s, const std::vector<int32_t>& preds);

// Monte-Carlo chance level: best of the permutation baseline (predict a
// target drawn from the marginal) and the best constant predictor.
double mc_chance(const TaskConfig& cfg, int trials, uint64_t seed);

// Bilinear resize with the half-pixel-centre convention.
Array<double> bilinear_resize(const Array<double>& src, int64_t out_rows, int64_t out_cols);

}  // namespace pcattn
