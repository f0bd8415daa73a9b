#pragma once

#include <optional>
#include <string>
#include <vector>

#include "reftrack/geometry.hpp"
#include "reftrack/tensor.hpp"

namespace reftrack {

/// One object in one frame; the shared record for ground truth and
/// predictions. Ground truth uses conf=1 and ref as the referred flag.
struct TrackRecord {
  int frame = 0;
  int id = 0;
  Box box;  // normalized cx, cy, w, h
  double conf = 1.0;
  double ref = 1.0;
  std::optional<BinMask> mask;
};

struct SequenceFile {
  std::string sequence;
  std::string expression;
  int frames = 0;
  int canvas_w = 0, canvas_h = 0;
  int mask_h = 0, mask_w = 0;
  std::vector<TrackRecord> records;
};

/// Run-length encoding of a row-major binary mask: comma-separated run
/// lengths alternating zero-run, one-run, ... starting with zeros.
std::string rle_encode(const BinMask& mask);
BinMask rle_decode(int h, int w, const std::string& rle);

std::string serialize_sequence_file(const SequenceFile& sf);
SequenceFile parse_sequence_file(const std::string& text);  // errors carry line numbers
void write_sequence_file(const std::string& path, const SequenceFile& sf);
SequenceFile read_sequence_file(const std::string& path);

/// Binary 8-bit PPM (P6). Values clamp to [0,1] on write.
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);  // [H x W x 3] in [0,1]

}  // namespace reftrack
