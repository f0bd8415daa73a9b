#include "reftrack/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace reftrack {

void ModelConfig::validate() const {
  if (d <= 0 || n_detect <= 0 || enc_layers < 0 || dec_layers < 0 || heads <= 0 ||
      miss_tolerance <= 0 || frame_h <= 0 || frame_w <= 0) {
    throw std::invalid_argument("config: model sizes must be positive");
  }
  if (d % 8 != 0) throw std::invalid_argument("config: d must be divisible by 8");
  if (d % heads != 0) throw std::invalid_argument("config: d must be divisible by heads");
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("config: alpha must lie in [0,1]");
  if (beta_conf <= 0.0 || beta_conf >= 1.0 || beta_ref <= 0.0 || beta_ref >= 1.0) {
    throw std::invalid_argument("config: thresholds must lie in (0,1)");
  }
  if (frame_h % 8 != 0 || frame_w % 8 != 0) {
    throw std::invalid_argument("config: frame dims must be divisible by 8");
  }
}

void LossWeights::validate() const {
  if (cls < 0 || l1 < 0 || giou < 0 || ref < 0 || mask < 0 || dice < 0) {
    throw std::invalid_argument("config: loss weights must be nonnegative");
  }
  if (focal_gamma < 0 || focal_alpha < 0 || focal_alpha > 1) {
    throw std::invalid_argument("config: invalid focal parameters");
  }
}

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  if (epochs <= 0 || clip_len <= 0) throw std::invalid_argument("config: epochs/clip_len must be positive");
  if (lr_backbone <= 0 || lr_transformer <= 0) throw std::invalid_argument("config: learning rates must be positive");
  if (flip_prob < 0 || flip_prob > 1) throw std::invalid_argument("config: flip_prob must lie in [0,1]");
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: line " + std::to_string(lineno) + " has no '='");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("config: line " + std::to_string(lineno) + " has empty key");
    }
    out[key] = value;
  }
  return out;
}

std::map<std::string, std::string> load_key_value_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str());
}

namespace {

int to_int(const std::string& k, const std::string& v) {
  try {
    std::size_t pos = 0;
    int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw std::invalid_argument("config: key '" + k + "' expects an integer, got '" + v + "'");
  }
}

double to_double(const std::string& k, const std::string& v) {
  try {
    std::size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw std::invalid_argument("config: key '" + k + "' expects a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& k, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config: key '" + k + "' expects a boolean, got '" + v + "'");
}

std::uint64_t to_u64(const std::string& k, const std::string& v) {
  try {
    std::size_t pos = 0;
    unsigned long long r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return static_cast<std::uint64_t>(r);
  } catch (...) {
    throw std::invalid_argument("config: key '" + k + "' expects an unsigned integer, got '" + v + "'");
  }
}

}  // namespace

void apply_key_values(RunConfig& cfg, const std::map<std::string, std::string>& kv) {
  for (const auto& [k, v] : kv) {
    if (k == "d") cfg.model.d = to_int(k, v);
    else if (k == "n_detect") cfg.model.n_detect = to_int(k, v);
    else if (k == "enc_layers") cfg.model.enc_layers = to_int(k, v);
    else if (k == "dec_layers") cfg.model.dec_layers = to_int(k, v);
    else if (k == "heads") cfg.model.heads = to_int(k, v);
    else if (k == "alpha") cfg.model.alpha = to_double(k, v);
    else if (k == "beta_conf") cfg.model.beta_conf = to_double(k, v);
    else if (k == "beta_ref") cfg.model.beta_ref = to_double(k, v);
    else if (k == "miss_tolerance") cfg.model.miss_tolerance = to_int(k, v);
    else if (k == "frame_h") cfg.model.frame_h = to_int(k, v);
    else if (k == "frame_w") cfg.model.frame_w = to_int(k, v);
    else if (k == "disable_ice") cfg.model.disable_ice = to_bool(k, v);
    else if (k == "disable_lgd") cfg.model.disable_lgd = to_bool(k, v);
    else if (k == "detach_propagation") cfg.model.detach_propagation = to_bool(k, v);
    else if (k == "lambda_cls") cfg.loss.cls = to_double(k, v);
    else if (k == "lambda_l1") cfg.loss.l1 = to_double(k, v);
    else if (k == "lambda_giou") cfg.loss.giou = to_double(k, v);
    else if (k == "lambda_ref") cfg.loss.ref = to_double(k, v);
    else if (k == "lambda_mask") cfg.loss.mask = to_double(k, v);
    else if (k == "lambda_dice") cfg.loss.dice = to_double(k, v);
    else if (k == "focal_alpha") cfg.loss.focal_alpha = to_double(k, v);
    else if (k == "focal_gamma") cfg.loss.focal_gamma = to_double(k, v);
    else if (k == "dataset") cfg.dataset = v;
    else if (k == "out_dir") cfg.out_dir = v;
    else if (k == "epochs") cfg.epochs = to_int(k, v);
    else if (k == "clip_len") cfg.clip_len = to_int(k, v);
    else if (k == "lr_backbone") cfg.lr_backbone = to_double(k, v);
    else if (k == "lr_transformer") cfg.lr_transformer = to_double(k, v);
    else if (k == "weight_decay") cfg.weight_decay = to_double(k, v);
    else if (k == "grad_clip") cfg.grad_clip = to_double(k, v);
    else if (k == "flip_prob") cfg.flip_prob = to_double(k, v);
    else if (k == "seed") cfg.seed = to_u64(k, v);
    else if (k == "checkpoint_every") cfg.checkpoint_every = to_int(k, v);
    else if (k == "match_use_box") cfg.match_use_box = to_bool(k, v);
    else if (k == "match_use_mask") cfg.match_use_mask = to_bool(k, v);
    else throw std::invalid_argument("config: unknown key '" + k + "'");
  }
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string to_key_values(const RunConfig& cfg) {
  std::ostringstream out;
  auto put = [&](const char* k, const std::string& v) { out << k << " = " << v << "\n"; };
  put("d", std::to_string(cfg.model.d));
  put("n_detect", std::to_string(cfg.model.n_detect));
  put("enc_layers", std::to_string(cfg.model.enc_layers));
  put("dec_layers", std::to_string(cfg.model.dec_layers));
  put("heads", std::to_string(cfg.model.heads));
  put("alpha", format_double(cfg.model.alpha));
  put("beta_conf", format_double(cfg.model.beta_conf));
  put("beta_ref", format_double(cfg.model.beta_ref));
  put("miss_tolerance", std::to_string(cfg.model.miss_tolerance));
  put("frame_h", std::to_string(cfg.model.frame_h));
  put("frame_w", std::to_string(cfg.model.frame_w));
  put("disable_ice", cfg.model.disable_ice ? "true" : "false");
  put("disable_lgd", cfg.model.disable_lgd ? "true" : "false");
  put("detach_propagation", cfg.model.detach_propagation ? "true" : "false");
  put("lambda_cls", format_double(cfg.loss.cls));
  put("lambda_l1", format_double(cfg.loss.l1));
  put("lambda_giou", format_double(cfg.loss.giou));
  put("lambda_ref", format_double(cfg.loss.ref));
  put("lambda_mask", format_double(cfg.loss.mask));
  put("lambda_dice", format_double(cfg.loss.dice));
  put("focal_alpha", format_double(cfg.loss.focal_alpha));
  put("focal_gamma", format_double(cfg.loss.focal_gamma));
  put("dataset", cfg.dataset);
  put("out_dir", cfg.out_dir);
  put("epochs", std::to_string(cfg.epochs));
  put("clip_len", std::to_string(cfg.clip_len));
  put("lr_backbone", format_double(cfg.lr_backbone));
  put("lr_transformer", format_double(cfg.lr_transformer));
  put("weight_decay", format_double(cfg.weight_decay));
  put("grad_clip", format_double(cfg.grad_clip));
  put("flip_prob", format_double(cfg.flip_prob));
  put("seed", std::to_string(cfg.seed));
  put("checkpoint_every", std::to_string(cfg.checkpoint_every));
  put("match_use_box", cfg.match_use_box ? "true" : "false");
  put("match_use_mask", cfg.match_use_mask ? "true" : "false");
  return out.str();
}

}  // namespace reftrack
