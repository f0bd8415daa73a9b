#include "reftrack/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "reftrack/config.hpp"

namespace fs = std::filesystem;

namespace reftrack {

void SceneSpec::validate() const {
  if (canvas_h % 8 != 0 || canvas_w % 8 != 0) {
    throw std::invalid_argument("scene: canvas dims must be divisible by 8");
  }
  if (frames < 2) throw std::invalid_argument("scene: need at least 2 frames");
  if (min_objects < 1 || max_objects < min_objects || max_objects > 8) {
    throw std::invalid_argument("scene: object count range invalid");
  }
  if (min_radius <= 2 || max_radius < min_radius) {
    throw std::invalid_argument("scene: radius range invalid");
  }
  if (expressions_per_sequence < 1) {
    throw std::invalid_argument("scene: need at least one expression per sequence");
  }
}

namespace {

constexpr int kLeft = 0, kRight = 1, kUp = 2, kDown = 3, kStill = 4;

const double kColors[kColorCount][3] = {
    {0.90, 0.15, 0.15},  // red
    {0.15, 0.85, 0.20},  // green
    {0.20, 0.35, 0.95},  // blue
    {0.92, 0.88, 0.15},  // yellow
};

constexpr double kMotionEps = 0.3;  // speed below this counts as still

struct ShapeGeometry {
  // triangle vertices relative to center in units of radius
  static constexpr double tri[3][2] = {{0.0, -1.0}, {-0.9, 0.8}, {0.9, 0.8}};
};

bool point_in_shape(const SceneObject& o, double px, double py) {
  const double dx = px - o.x;
  const double dy = py - o.y;
  switch (o.shape) {
    case 0:  // circle
      return dx * dx + dy * dy <= o.radius * o.radius;
    case 1:  // square
      return std::abs(dx) <= o.radius && std::abs(dy) <= o.radius;
    default: {  // triangle: half-plane tests over the three edges
      const double r = o.radius;
      double vx[3], vy[3];
      for (int i = 0; i < 3; ++i) {
        vx[i] = ShapeGeometry::tri[i][0] * r;
        vy[i] = ShapeGeometry::tri[i][1] * r;
      }
      bool all_left = true, all_right = true;
      for (int i = 0; i < 3; ++i) {
        const int j = (i + 1) % 3;
        const double cross = (vx[j] - vx[i]) * (dy - vy[i]) - (vy[j] - vy[i]) * (dx - vx[i]);
        all_left = all_left && cross >= 0;
        all_right = all_right && cross <= 0;
      }
      return all_left || all_right;
    }
  }
}

void shape_extent(const SceneObject& o, double& x1, double& y1, double& x2, double& y2) {
  switch (o.shape) {
    case 0:
    case 1:
      x1 = o.x - o.radius;
      x2 = o.x + o.radius;
      y1 = o.y - o.radius;
      y2 = o.y + o.radius;
      break;
    default:
      x1 = o.x - 0.9 * o.radius;
      x2 = o.x + 0.9 * o.radius;
      y1 = o.y - o.radius;
      y2 = o.y + 0.8 * o.radius;
      break;
  }
}

// advance with reflective walls; keeps centers at least radius away
void step_object(SceneObject& o, double W, double H) {
  o.x += o.vx;
  o.y += o.vy;
  if (o.x < o.radius) {
    o.x = 2 * o.radius - o.x;
    o.vx = -o.vx;
  } else if (o.x > W - o.radius) {
    o.x = 2 * (W - o.radius) - o.x;
    o.vx = -o.vx;
  }
  if (o.y < o.radius) {
    o.y = 2 * o.radius - o.y;
    o.vy = -o.vy;
  } else if (o.y > H - o.radius) {
    o.y = 2 * (H - o.radius) - o.y;
    o.vy = -o.vy;
  }
}

}  // namespace

const char* shape_word(int shape) {
  switch (shape) {
    case 0: return "circles";
    case 1: return "squares";
    default: return "triangles";
  }
}

const char* color_word(int color) {
  switch (color) {
    case 0: return "red";
    case 1: return "green";
    case 2: return "blue";
    default: return "yellow";
  }
}

const char* motion_phrase(int motion) {
  switch (motion) {
    case kLeft: return "moving left";
    case kRight: return "moving right";
    case kUp: return "moving up";
    case kDown: return "moving down";
    default: return "staying still";
  }
}

std::string ExpressionTemplate::text() const {
  std::string out = "the";
  if (color.has_value()) out += std::string(" ") + color_word(*color);
  out += std::string(" ") + (shape.has_value() ? shape_word(*shape) : "objects");
  if (motion.has_value()) out += std::string(" ") + motion_phrase(*motion);
  return out;
}

std::vector<ExpressionTemplate> all_templates() {
  std::vector<ExpressionTemplate> out;
  for (int c = -1; c < kColorCount; ++c) {
    for (int s = -1; s < kShapeCount; ++s) {
      for (int m = -1; m < kMotionCount; ++m) {
        if (c < 0 && s < 0 && m < 0) continue;
        ExpressionTemplate t;
        if (c >= 0) t.color = c;
        if (s >= 0) t.shape = s;
        if (m >= 0) t.motion = m;
        out.push_back(t);
      }
    }
  }
  return out;
}

std::vector<std::string> grammar_tokens() {
  return {"the",   "objects", "red",  "green", "blue", "yellow", "circles", "squares",
          "triangles", "moving", "left", "right", "up",   "down",   "staying", "still"};
}

int motion_category(const SceneObject& obj) {
  if (std::abs(obj.vx) < kMotionEps && std::abs(obj.vy) < kMotionEps) return kStill;
  if (std::abs(obj.vx) >= std::abs(obj.vy)) return obj.vx < 0 ? kLeft : kRight;
  return obj.vy < 0 ? kUp : kDown;
}

bool template_matches(const ExpressionTemplate& tmpl, const SceneObject& obj) {
  if (tmpl.color.has_value() && *tmpl.color != obj.color) return false;
  if (tmpl.shape.has_value() && *tmpl.shape != obj.shape) return false;
  if (tmpl.motion.has_value() && *tmpl.motion != motion_category(obj)) return false;
  return true;
}

std::vector<SceneObject> Scene::at_frame(int t) const {
  std::vector<SceneObject> objs = initial;
  for (int f = 0; f < t; ++f) {
    for (SceneObject& o : objs) step_object(o, spec.canvas_w, spec.canvas_h);
  }
  return objs;
}

Scene make_scene(const SceneSpec& spec, Rng& rng) {
  Scene scene;
  scene.spec = spec;
  scene.noise_seed = rng.engine()();
  const int count = rng.uniform_int(spec.min_objects, spec.max_objects);

  // distinct colors keep color references unambiguous within a scene
  std::vector<int> colors;
  for (int c = 0; c < kColorCount; ++c) colors.push_back(c);
  for (int i = kColorCount - 1; i > 0; --i) {
    std::swap(colors[static_cast<std::size_t>(i)],
              colors[static_cast<std::size_t>(rng.uniform_int(0, i))]);
  }

  for (int i = 0; i < count; ++i) {
    SceneObject o;
    o.id = i + 1;
    o.shape = rng.uniform_int(0, kShapeCount - 1);
    o.color = colors[static_cast<std::size_t>(i % kColorCount)];
    o.radius = rng.uniform(spec.min_radius, spec.max_radius);

    // rejection-sample a start position away from existing objects
    for (int attempt = 0; attempt < 50; ++attempt) {
      o.x = rng.uniform(o.radius + 1, spec.canvas_w - o.radius - 1);
      o.y = rng.uniform(o.radius + 1, spec.canvas_h - o.radius - 1);
      bool clear = true;
      for (const SceneObject& other : scene.initial) {
        const double dx = o.x - other.x, dy = o.y - other.y;
        const double min_dist = (o.radius + other.radius) * 0.9;
        if (dx * dx + dy * dy < min_dist * min_dist) clear = false;
      }
      if (clear) break;
    }

    if (rng.bernoulli(spec.static_prob)) {
      o.vx = o.vy = 0.0;
    } else {
      const double speed = rng.uniform(spec.min_speed, spec.max_speed);
      switch (rng.uniform_int(0, 3)) {
        case 0: o.vx = -speed; break;
        case 1: o.vx = speed; break;
        case 2: o.vy = -speed; break;
        default: o.vy = speed; break;
      }
    }
    scene.initial.push_back(o);
  }

  // staged crossing: re-aim two movers through a shared point mid-sequence
  if (count >= 2 && rng.bernoulli(spec.occlusion_prob)) {
    const int a = 0, b = 1;
    SceneObject& oa = scene.initial[a];
    SceneObject& ob = scene.initial[b];
    const int cross_frame = spec.frames / 2 + rng.uniform_int(-spec.frames / 6, spec.frames / 6);
    const double cy = rng.uniform(spec.canvas_h * 0.35, spec.canvas_h * 0.65);
    const double cx = rng.uniform(spec.canvas_w * 0.35, spec.canvas_w * 0.65);
    const double speed_a = rng.uniform(spec.min_speed, spec.max_speed);
    const double speed_b = rng.uniform(spec.min_speed, spec.max_speed);
    oa.vx = speed_a;
    oa.vy = 0;
    oa.x = cx - speed_a * cross_frame;
    oa.y = cy;
    ob.vx = -speed_b;
    ob.vy = 0;
    ob.x = cx + speed_b * cross_frame;
    ob.y = cy;
    auto clamp_inside = [&](SceneObject& o) {
      o.x = std::clamp(o.x, o.radius + 1, spec.canvas_w - o.radius - 1);
      o.y = std::clamp(o.y, o.radius + 1, spec.canvas_h - o.radius - 1);
    };
    clamp_inside(oa);
    clamp_inside(ob);
    scene.has_occlusion_event = true;
  }
  return scene;
}

Tensor render_frame(const Scene& scene, int t) {
  const int H = scene.spec.canvas_h, W = scene.spec.canvas_w;
  Tensor img = Tensor::zeros({H, W, 3});
  double* d = img.data();

  // deterministic per-pixel background noise, independent of t
  Rng bg(scene.noise_seed);
  std::vector<double> noise(static_cast<std::size_t>(H) * W);
  for (double& v : noise) v = bg.uniform(0.08, 0.22);

  std::vector<SceneObject> objs = scene.at_frame(t);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * W + x) * 3;
      const double g = noise[static_cast<std::size_t>(y) * W + x];
      d[base] = d[base + 1] = d[base + 2] = g;
      // later objects draw on top (z-order by list position)
      for (const SceneObject& o : objs) {
        int hits = 0;
        for (int sy = 0; sy < 2; ++sy) {
          for (int sx = 0; sx < 2; ++sx) {
            if (point_in_shape(o, x + 0.25 + 0.5 * sx, y + 0.25 + 0.5 * sy)) ++hits;
          }
        }
        if (hits == 0) continue;
        const double a = hits / 4.0;
        for (int c = 0; c < 3; ++c) {
          d[base + c] = (1.0 - a) * d[base + c] + a * kColors[o.color][c];
        }
      }
    }
  }
  return img;
}

GroundTruthFrame ground_truth(const Scene& scene, int t, const ExpressionTemplate& tmpl) {
  const int H = scene.spec.canvas_h, W = scene.spec.canvas_w;
  const int mh = H / 4, mw = W / 4;
  std::vector<SceneObject> objs = scene.at_frame(t);

  GroundTruthFrame frame;
  for (std::size_t oi = 0; oi < objs.size(); ++oi) {
    const SceneObject& o = objs[oi];
    GtObject gt;
    gt.id = o.id;
    gt.referred = template_matches(tmpl, o);

    double x1, y1, x2, y2;
    shape_extent(o, x1, y1, x2, y2);
    x1 = std::clamp(x1, 0.0, static_cast<double>(W));
    x2 = std::clamp(x2, 0.0, static_cast<double>(W));
    y1 = std::clamp(y1, 0.0, static_cast<double>(H));
    y2 = std::clamp(y2, 0.0, static_cast<double>(H));
    gt.box = Box{(x1 + x2) / 2 / W, (y1 + y2) / 2 / H, (x2 - x1) / W, (y2 - y1) / H};

    // visible-region mask at stride 4: a cell belongs to the object when it
    // wins at least half of a 4x4 point grid (z-order aware)
    gt.mask = BinMask{mh, mw, std::vector<std::uint8_t>(static_cast<std::size_t>(mh) * mw, 0)};
    for (int my = 0; my < mh; ++my) {
      for (int mx = 0; mx < mw; ++mx) {
        int wins = 0;
        for (int sy = 0; sy < 4; ++sy) {
          for (int sx = 0; sx < 4; ++sx) {
            const double px = mx * 4 + sx + 0.5;
            const double py = my * 4 + sy + 0.5;
            // topmost object containing the point
            int top = -1;
            for (std::size_t oj = 0; oj < objs.size(); ++oj) {
              if (point_in_shape(objs[oj], px, py)) top = static_cast<int>(oj);
            }
            if (top == static_cast<int>(oi)) ++wins;
          }
        }
        if (wins >= 8) gt.mask.data[static_cast<std::size_t>(my) * mw + mx] = 1;
      }
    }
    frame.objects.push_back(std::move(gt));
  }
  return frame;
}

namespace {

ExpressionTemplate sample_satisfied_template(const Scene& scene, Rng& rng) {
  // anchor on a random object's attributes at frame 0 so the template is
  // satisfiable by construction
  const std::vector<SceneObject>& objs = scene.initial;
  const SceneObject& o = objs[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(objs.size()) - 1))];
  ExpressionTemplate t;
  switch (rng.uniform_int(0, 5)) {
    case 0: t.color = o.color; break;
    case 1: t.shape = o.shape; break;
    case 2: t.motion = motion_category(o); break;
    case 3:
      t.color = o.color;
      t.shape = o.shape;
      break;
    case 4:
      t.color = o.color;
      t.motion = motion_category(o);
      break;
    default:
      t.shape = o.shape;
      t.motion = motion_category(o);
      break;
  }
  return t;
}

bool template_ever_satisfied(const Scene& scene, const ExpressionTemplate& tmpl) {
  for (int t = 0; t < scene.spec.frames; ++t) {
    for (const SceneObject& o : scene.at_frame(t)) {
      if (template_matches(tmpl, o)) return true;
    }
  }
  return false;
}

int write_split(const SceneSpec& spec, const std::string& out_dir, const std::string& split,
                int count, Rng& rng) {
  int unsatisfiable = 0;
  const auto templates = all_templates();
  for (int s = 0; s < count; ++s) {
    char name[32];
    std::snprintf(name, sizeof(name), "seq_%04d", s);
    const fs::path dir = fs::path(out_dir) / split / name;
    fs::create_directories(dir);

    Scene scene = make_scene(spec, rng);
    for (int t = 0; t < spec.frames; ++t) {
      write_ppm(frame_path(dir.string(), t), render_frame(scene, t));
    }

    std::ofstream meta(dir / "meta.txt");
    meta << "occlusion = " << (scene.has_occlusion_event ? "true" : "false") << "\n";
    meta << "objects = " << scene.initial.size() << "\n";

    for (int e = 0; e < spec.expressions_per_sequence; ++e) {
      ExpressionTemplate tmpl;
      if (e == 0) {
        tmpl = sample_satisfied_template(scene, rng);
      } else {
        // mostly satisfiable free-form templates, with a deliberate share of
        // empty-referent expressions for negative supervision
        const bool want_empty = rng.bernoulli(0.2);
        for (int attempt = 0; attempt < 12; ++attempt) {
          tmpl = templates[static_cast<std::size_t>(
              rng.uniform_int(0, static_cast<int>(templates.size()) - 1))];
          if (want_empty || template_ever_satisfied(scene, tmpl)) break;
        }
      }
      if (!template_ever_satisfied(scene, tmpl)) {
        ++unsatisfiable;
        std::cerr << "warning: expression '" << tmpl.text() << "' refers to nothing in " << split
                  << "/" << name << " (kept)\n";
      }
      SequenceFile sf;
      sf.sequence = name;
      sf.expression = tmpl.text();
      sf.frames = spec.frames;
      sf.canvas_w = spec.canvas_w;
      sf.canvas_h = spec.canvas_h;
      sf.mask_w = spec.canvas_w / 4;
      sf.mask_h = spec.canvas_h / 4;
      for (int t = 0; t < spec.frames; ++t) {
        GroundTruthFrame gt = ground_truth(scene, t, tmpl);
        for (const GtObject& obj : gt.objects) {
          TrackRecord r;
          r.frame = t;
          r.id = obj.id;
          r.box = obj.box;
          r.conf = 1.0;
          r.ref = obj.referred ? 1.0 : 0.0;
          r.mask = obj.mask;
          sf.records.push_back(std::move(r));
        }
      }
      write_sequence_file((dir / ("gt_" + std::to_string(e) + ".txt")).string(), sf);
    }
  }
  return unsatisfiable;
}

}  // namespace

std::string frame_path(const std::string& seq_dir, int frame) {
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%03d.ppm", frame);
  return (fs::path(seq_dir) / name).string();
}

int generate_dataset(const SceneSpec& spec, const std::string& out_dir) {
  spec.validate();
  fs::create_directories(out_dir);

  std::ostringstream meta;
  meta << "# reftrack dataset v1\n";
  meta << "seed = " << spec.seed << "\n";
  meta << "frames = " << spec.frames << "\n";
  meta << "canvas_h = " << spec.canvas_h << "\n";
  meta << "canvas_w = " << spec.canvas_w << "\n";
  meta << "min_objects = " << spec.min_objects << "\n";
  meta << "max_objects = " << spec.max_objects << "\n";
  meta << "train_sequences = " << spec.train_sequences << "\n";
  meta << "test_sequences = " << spec.test_sequences << "\n";
  meta << "expressions_per_sequence = " << spec.expressions_per_sequence << "\n";
  meta << "vocab =";
  for (const std::string& t : grammar_tokens()) meta << " " << t;
  meta << "\n";
  {
    std::ofstream out(fs::path(out_dir) / "dataset.txt");
    if (!out) throw std::runtime_error("cannot write dataset metadata in " + out_dir);
    out << meta.str();
  }

  Rng train_rng(spec.seed);
  Rng test_rng(spec.seed ^ 0x5DEECE66DULL);
  int unsat = write_split(spec, out_dir, "train", spec.train_sequences, train_rng);
  unsat += write_split(spec, out_dir, "test", spec.test_sequences, test_rng);
  return unsat;
}

DatasetIndex load_dataset_index(const std::string& root) {
  DatasetIndex index;
  index.root = root;
  const fs::path meta_path = fs::path(root) / "dataset.txt";
  if (!fs::exists(meta_path)) {
    throw std::runtime_error("dataset: missing " + meta_path.string());
  }
  auto kv = load_key_value_file(meta_path.string());
  auto get_int = [&](const char* key, int fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : std::stoi(it->second);
  };
  index.spec.frames = get_int("frames", 20);
  index.spec.canvas_h = get_int("canvas_h", 64);
  index.spec.canvas_w = get_int("canvas_w", 64);
  index.spec.train_sequences = get_int("train_sequences", 0);
  index.spec.test_sequences = get_int("test_sequences", 0);
  index.spec.expressions_per_sequence = get_int("expressions_per_sequence", 1);
  if (auto it = kv.find("seed"); it != kv.end()) index.spec.seed = std::stoull(it->second);
  if (auto it = kv.find("vocab"); it != kv.end()) {
    std::istringstream vs(it->second);
    std::string tok;
    while (vs >> tok) index.vocab_tokens.push_back(tok);
  }

  auto scan = [&](const std::string& split, std::vector<DatasetIndex::SequenceRef>& out) {
    const fs::path dir = fs::path(root) / split;
    if (!fs::exists(dir)) return;
    std::vector<fs::path> seqs;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_directory()) seqs.push_back(entry.path());
    }
    std::sort(seqs.begin(), seqs.end());
    for (const fs::path& seq : seqs) {
      DatasetIndex::SequenceRef ref;
      ref.dir = seq.string();
      ref.name = seq.filename().string();
      ref.frames = index.spec.frames;
      std::vector<std::string> gts;
      for (const auto& entry : fs::directory_iterator(seq)) {
        const std::string fn = entry.path().filename().string();
        if (fn.rfind("gt_", 0) == 0 && fn.find(".txt") != std::string::npos) {
          gts.push_back(entry.path().string());
        }
      }
      std::sort(gts.begin(), gts.end());
      ref.gt_files = gts;
      const fs::path meta = seq / "meta.txt";
      if (fs::exists(meta)) {
        auto mkv = load_key_value_file(meta.string());
        if (auto it = mkv.find("occlusion"); it != mkv.end()) ref.occlusion = it->second == "true";
      }
      out.push_back(std::move(ref));
    }
  };
  scan("train", index.train);
  scan("test", index.test);
  if (index.train.empty() && index.test.empty()) {
    throw std::runtime_error("dataset: no sequences under " + root);
  }
  return index;
}

}  // namespace reftrack
