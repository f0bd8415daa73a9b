#include "reftrack/formats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace reftrack {

std::string rle_encode(const BinMask& mask) {
  if (static_cast<int>(mask.data.size()) != mask.h * mask.w) {
    throw std::invalid_argument("rle: mask size does not match dims");
  }
  std::string out;
  std::uint8_t current = 0;  // runs start with zeros
  long run = 0;
  for (std::uint8_t v : mask.data) {
    const std::uint8_t bit = v ? 1 : 0;
    if (bit == current) {
      ++run;
    } else {
      out += std::to_string(run);
      out += ',';
      current = bit;
      run = 1;
    }
  }
  out += std::to_string(run);
  return out;
}

BinMask rle_decode(int h, int w, const std::string& rle) {
  BinMask mask{h, w, {}};
  mask.data.reserve(static_cast<std::size_t>(h) * w);
  std::uint8_t current = 0;
  std::size_t pos = 0;
  while (pos < rle.size()) {
    std::size_t next = rle.find(',', pos);
    const std::string tok = rle.substr(pos, next == std::string::npos ? next : next - pos);
    long run = 0;
    try {
      run = std::stol(tok);
    } catch (...) {
      throw std::invalid_argument("rle: bad run '" + tok + "'");
    }
    if (run < 0) throw std::invalid_argument("rle: negative run");
    mask.data.insert(mask.data.end(), static_cast<std::size_t>(run), current);
    current = current ? 0 : 1;
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  if (static_cast<int>(mask.data.size()) != h * w) {
    throw std::invalid_argument("rle: runs sum to " + std::to_string(mask.data.size()) +
                                ", expected " + std::to_string(h * w));
  }
  return mask;
}

namespace {

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::string serialize_sequence_file(const SequenceFile& sf) {
  std::ostringstream out;
  out << "# reftrack v1\n";
  out << "# sequence " << sf.sequence << "\n";
  out << "# expression \"" << sf.expression << "\"\n";
  out << "# frames " << sf.frames << "\n";
  out << "# canvas " << sf.canvas_w << " " << sf.canvas_h << "\n";
  out << "# mask " << sf.mask_w << " " << sf.mask_h << "\n";
  for (const TrackRecord& r : sf.records) {
    out << r.frame << " " << r.id << " " << fmt6(r.box.cx) << " " << fmt6(r.box.cy) << " "
        << fmt6(r.box.w) << " " << fmt6(r.box.h) << " " << fmt6(r.conf) << " " << fmt6(r.ref);
    if (r.mask.has_value()) out << " m:" << rle_encode(*r.mask);
    out << "\n";
  }
  return out.str();
}

SequenceFile parse_sequence_file(const std::string& text) {
  SequenceFile sf;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error("sequence file: line " + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hl(line.substr(1));
      std::string key;
      hl >> key;
      if (key == "sequence") {
        hl >> sf.sequence;
      } else if (key == "expression") {
        std::string rest;
        std::getline(hl, rest);
        const std::size_t open = rest.find('"');
        const std::size_t close = rest.rfind('"');
        if (open == std::string::npos || close == open) fail("unterminated expression");
        sf.expression = rest.substr(open + 1, close - open - 1);
      } else if (key == "frames") {
        if (!(hl >> sf.frames)) fail("bad frames header");
      } else if (key == "canvas") {
        if (!(hl >> sf.canvas_w >> sf.canvas_h)) fail("bad canvas header");
      } else if (key == "mask") {
        if (!(hl >> sf.mask_w >> sf.mask_h)) fail("bad mask header");
      }
      continue;
    }
    std::istringstream rl(line);
    TrackRecord r;
    if (!(rl >> r.frame >> r.id >> r.box.cx >> r.box.cy >> r.box.w >> r.box.h >> r.conf >>
          r.ref)) {
      fail("malformed record");
    }
    std::string tail;
    if (rl >> tail) {
      if (tail.rfind("m:", 0) != 0) fail("unexpected trailing token '" + tail + "'");
      if (sf.mask_h <= 0 || sf.mask_w <= 0) fail("mask record before mask header");
      try {
        r.mask = rle_decode(sf.mask_h, sf.mask_w, tail.substr(2));
      } catch (const std::exception& e) {
        fail(e.what());
      }
    }
    if (r.frame < 0 || (sf.frames > 0 && r.frame >= sf.frames)) fail("frame index out of range");
    sf.records.push_back(std::move(r));
  }
  return sf;
}

void write_sequence_file(const std::string& path, const SequenceFile& sf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << serialize_sequence_file(sf);
}

SequenceFile read_sequence_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_sequence_file(buf.str());
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw std::invalid_argument("ppm: image must be [H x W x 3]");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const int h = image.dim(0), w = image.dim(1);
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> bytes(static_cast<std::size_t>(h) * w * 3);
  const double* d = image.data();
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const double v = std::clamp(d[i], 0.0, 1.0);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Tensor read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw std::runtime_error(path + ": not a binary PPM");
  int w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  if (w <= 0 || h <= 0 || maxval != 255) throw std::runtime_error(path + ": unsupported PPM header");
  in.get();  // single whitespace after header
  std::vector<unsigned char> bytes(static_cast<std::size_t>(h) * w * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw std::runtime_error(path + ": truncated pixel data");
  Tensor image = Tensor::zeros({h, w, 3});
  double* d = image.data();
  for (std::size_t i = 0; i < bytes.size(); ++i) d[i] = bytes[i] / 255.0;
  return image;
}

}  // namespace reftrack
