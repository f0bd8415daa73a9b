#include "reftrack/geometry.hpp"

#include <algorithm>
#include <stdexcept>

namespace reftrack {

double box_iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double giou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1()));
  const double ih = std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1()));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  const double iou = uni > 0.0 ? inter / uni : 0.0;
  const double cw = std::max(a.x2(), b.x2()) - std::min(a.x1(), b.x1());
  const double ch = std::max(a.y2(), b.y2()) - std::min(a.y1(), b.y1());
  const double c_area = cw * ch;
  if (c_area <= 0.0) return iou;
  return iou - (c_area - uni) / c_area;
}

double mask_iou(const BinMask& a, const BinMask& b) {
  if (a.h != b.h || a.w != b.w) {
    throw std::invalid_argument("mask_iou: resolution mismatch");
  }
  long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool av = a.data[i] != 0;
    const bool bv = b.data[i] != 0;
    inter += av && bv;
    uni += av || bv;
  }
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

double dice_loss_binary(const BinMask& a, const BinMask& b) {
  if (a.h != b.h || a.w != b.w) {
    throw std::invalid_argument("dice: resolution mismatch");
  }
  long inter = 0, total = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool av = a.data[i] != 0;
    const bool bv = b.data[i] != 0;
    inter += av && bv;
    total += av;
    total += bv;
  }
  if (total == 0) return 1.0;
  return 1.0 - 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

}  // namespace reftrack
