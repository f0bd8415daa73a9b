#include "reftrack/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace reftrack {

namespace {

int integer_gamma(double gamma) {
  const int g = static_cast<int>(std::lround(gamma));
  if (g < 0 || g > 6 || std::abs(gamma - g) > 1e-12) {
    throw std::invalid_argument("focal loss: gamma must be a small nonnegative integer");
  }
  return g;
}

Tensor int_pow(const Tensor& x, int n) {
  if (n == 0) return Tensor::full(x.shape(), 1.0);
  Tensor acc = x;
  for (int i = 1; i < n; ++i) acc = mul(acc, x);
  return acc;
}

}  // namespace

Tensor focal_loss_sum(const Tensor& logits, const std::vector<double>& targets, double alpha,
                      double gamma) {
  if (logits.numel() != targets.size()) {
    throw std::invalid_argument("focal loss: target count mismatch");
  }
  const int g = integer_gamma(gamma);
  Tensor flat = reshape(logits, {static_cast<int>(logits.numel())});
  Tensor t = Tensor::from({static_cast<int>(targets.size())}, targets);
  Tensor one_minus_t = add_scalar(mul_scalar(t, -1.0), 1.0);

  Tensor p = sigmoid(flat);
  Tensor one_minus_p = add_scalar(mul_scalar(p, -1.0), 1.0);
  // -log p = softplus(-x), -log(1-p) = softplus(x): overflow safe
  Tensor pos = mul(int_pow(one_minus_p, g), softplus(mul_scalar(flat, -1.0)));
  Tensor neg = mul(int_pow(p, g), softplus(flat));
  Tensor weighted = add(mul_scalar(mul(t, pos), alpha), mul_scalar(mul(one_minus_t, neg), 1.0 - alpha));
  return sum(weighted);
}

Tensor giou_loss_sum(const Tensor& pred, const Tensor& target) {
  if (pred.rank() != 2 || pred.dim(1) != 4 || target.shape() != pred.shape()) {
    throw std::invalid_argument("giou loss: expected matching [k x 4] boxes");
  }
  const double eps = 1e-9;
  auto corners = [](const Tensor& b) {
    Tensor cx = slice_cols(b, 0, 1);
    Tensor cy = slice_cols(b, 1, 1);
    Tensor hw = mul_scalar(slice_cols(b, 2, 1), 0.5);
    Tensor hh = mul_scalar(slice_cols(b, 3, 1), 0.5);
    return std::array<Tensor, 4>{sub(cx, hw), sub(cy, hh), add(cx, hw), add(cy, hh)};
  };
  auto [ax1, ay1, ax2, ay2] = corners(pred);
  auto [bx1, by1, bx2, by2] = corners(target);

  Tensor iw = clamp_min(sub(min_elem(ax2, bx2), max_elem(ax1, bx1)), 0.0);
  Tensor ih = clamp_min(sub(min_elem(ay2, by2), max_elem(ay1, by1)), 0.0);
  Tensor inter = mul(iw, ih);
  Tensor area_a = mul(sub(ax2, ax1), sub(ay2, ay1));
  Tensor area_b = mul(sub(bx2, bx1), sub(by2, by1));
  Tensor uni = sub(add(area_a, area_b), inter);
  Tensor iou = div(inter, add_scalar(uni, eps));

  Tensor cw = sub(max_elem(ax2, bx2), min_elem(ax1, bx1));
  Tensor ch = sub(max_elem(ay2, by2), min_elem(ay1, by1));
  Tensor c_area = mul(cw, ch);
  Tensor excess = div(sub(c_area, uni), add_scalar(c_area, eps));
  Tensor g = sub(iou, excess);
  return sum(add_scalar(mul_scalar(g, -1.0), 1.0));  // sum(1 - giou)
}

Tensor dice_loss_sum(const Tensor& mask_logits, const Tensor& targets) {
  if (mask_logits.rank() != 2 || targets.shape() != mask_logits.shape()) {
    throw std::invalid_argument("dice loss: expected matching [k x pixels]");
  }
  const double eps = 1e-9;
  const int pixels = mask_logits.dim(1);
  Tensor p = sigmoid(mask_logits);
  Tensor ones = Tensor::full({pixels, 1}, 1.0);
  Tensor num = matmul(mul(p, targets), ones);            // [k x 1] row sums
  Tensor den = add(matmul(p, ones), matmul(targets, ones));
  Tensor dice = div(mul_scalar(num, 2.0), add_scalar(den, eps));
  return sum(add_scalar(mul_scalar(dice, -1.0), 1.0));
}

LossBreakdown total_loss(const DecoderOutput& out, const Assignment& assignment,
                         const GroundTruthFrame& gt, const LossWeights& weights) {
  const int rows = out.conf_logits.dim(0);
  LossBreakdown result;
  result.positives = static_cast<int>(assignment.pairs.size());
  const double norm = 1.0 / std::max(1, result.positives);

  std::vector<double> targets(static_cast<std::size_t>(rows), 0.0);
  for (auto [r, g] : assignment.pairs) {
    if (r < 0 || r >= rows || g < 0 || g >= static_cast<int>(gt.objects.size())) {
      throw std::logic_error("total_loss: assignment indices out of range");
    }
    targets[static_cast<std::size_t>(r)] = 1.0;
  }

  Tensor cls = mul_scalar(
      focal_loss_sum(out.conf_logits, targets, weights.focal_alpha, weights.focal_gamma),
      weights.cls * norm);
  Tensor ref = mul_scalar(
      focal_loss_sum(out.ref_logits, targets, weights.focal_alpha, weights.focal_gamma),
      weights.ref * norm);
  result.cls = cls.value();
  result.ref = ref.value();
  Tensor total = add(cls, ref);

  if (!assignment.pairs.empty()) {
    std::vector<int> pos_rows;
    std::vector<double> box_values;
    for (auto [r, g] : assignment.pairs) {
      pos_rows.push_back(r);
      const Box& b = gt.objects[static_cast<std::size_t>(g)].box;
      box_values.insert(box_values.end(), {b.cx, b.cy, b.w, b.h});
    }
    const int k = static_cast<int>(pos_rows.size());
    Tensor pred_boxes = gather_rows(out.boxes, pos_rows);
    Tensor gt_boxes = Tensor::from({k, 4}, std::move(box_values));

    Tensor l1 = mul_scalar(sum(abs(sub(pred_boxes, gt_boxes))), weights.l1 * norm);
    Tensor gl = mul_scalar(giou_loss_sum(pred_boxes, gt_boxes), weights.giou * norm);
    result.l1 = l1.value();
    result.giou = gl.value();
    total = add(total, add(l1, gl));

    if (weights.mask > 0 || weights.dice > 0) {
      if (!out.mask_logits.valid()) {
        throw std::logic_error("total_loss: mask weights set but mask logits are unset");
      }
      const int pixels = out.mask_logits.dim(1);
      Tensor pred_masks = gather_rows(out.mask_logits, pos_rows);
      std::vector<double> flat_targets;
      flat_targets.reserve(static_cast<std::size_t>(k) * pixels);
      for (auto [r, g] : assignment.pairs) {
        const BinMask& m = gt.objects[static_cast<std::size_t>(g)].mask;
        if (static_cast<int>(m.data.size()) != pixels) {
          throw std::logic_error("total_loss: gt mask resolution mismatch");
        }
        for (auto v : m.data) flat_targets.push_back(v ? 1.0 : 0.0);
      }
      Tensor gt_masks = Tensor::from({k, pixels}, flat_targets);

      Tensor mf = mul_scalar(
          focal_loss_sum(pred_masks, flat_targets, weights.focal_alpha, weights.focal_gamma),
          weights.mask * norm / pixels);
      Tensor dl = mul_scalar(dice_loss_sum(pred_masks, gt_masks), weights.dice * norm);
      result.mask = mf.value();
      result.dice = dl.value();
      total = add(total, add(mf, dl));
    }
  }

  result.total = total;
  return result;
}

}  // namespace reftrack
