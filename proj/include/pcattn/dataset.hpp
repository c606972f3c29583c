#pragma once

#include <string>
#include <vector>

#include "pcattn/tasks.hpp"
#include "pcattn/tensor.hpp"

namespace pcattn {

// IDX readers (big-endian magic 0x00000803 for images, 0x00000801 for
// labels). Pixel values are scaled to [0, 1].
std::vector<Array<double>> read_idx_images(const std::string& path);
std::vector<int> read_idx_labels(const std::string& path);

struct MnistData {
  std::vector<Array<double>> images;
  std::vector<int> labels;
};

// Loads train-images/train-labels (or t10k-*) from a directory once and
// caches per directory. The files are a documented manual download.
const MnistData& mnist_cache(const std::string& dir, bool train);

// Length-prefixed binary record stream with a JSON sidecar (written next to
// the stream at <path>.meta.json). Byte layout is fixed little-endian, so
// identical inputs produce identical files.
void write_records(const std::string& path, const std::vector<TaskSample>& samples,
                   const std::string& sidecar_json);
std::vector<TaskSample> read_records(const std::string& path);

std::string encode_record(const TaskSample& s);
TaskSample decode_record(const std::string& payload);

}  // namespace pcattn
