#include "reftrack/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace reftrack {

namespace {

constexpr const char* kMagic = "REFTRACK-CKPT v1";

void write_doubles(std::ostream& out, const std::vector<double>& values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::istream& in, std::size_t count) {
  std::vector<double> values(count);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint: truncated float payload");
  return values;
}

std::string expect_line(std::istream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error(std::string("checkpoint: missing ") + what);
  }
  return line;
}

// ModelConfig block serialization (subset of the run-config keys)
std::string model_config_text(const ModelConfig& m) {
  std::ostringstream out;
  out << "d = " << m.d << "\n";
  out << "n_detect = " << m.n_detect << "\n";
  out << "enc_layers = " << m.enc_layers << "\n";
  out << "dec_layers = " << m.dec_layers << "\n";
  out << "heads = " << m.heads << "\n";
  out << "alpha = " << format_double(m.alpha) << "\n";
  out << "beta_conf = " << format_double(m.beta_conf) << "\n";
  out << "beta_ref = " << format_double(m.beta_ref) << "\n";
  out << "miss_tolerance = " << m.miss_tolerance << "\n";
  out << "frame_h = " << m.frame_h << "\n";
  out << "frame_w = " << m.frame_w << "\n";
  out << "vocab_size = " << m.vocab_size << "\n";
  out << "disable_ice = " << (m.disable_ice ? "true" : "false") << "\n";
  out << "disable_lgd = " << (m.disable_lgd ? "true" : "false") << "\n";
  out << "detach_propagation = " << (m.detach_propagation ? "true" : "false") << "\n";
  return out.str();
}

ModelConfig parse_model_config(const std::string& text) {
  ModelConfig m;
  auto kv = parse_key_values(text);
  auto want = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error(std::string("checkpoint: config lacks ") + key);
    return it->second;
  };
  m.d = std::stoi(want("d"));
  m.n_detect = std::stoi(want("n_detect"));
  m.enc_layers = std::stoi(want("enc_layers"));
  m.dec_layers = std::stoi(want("dec_layers"));
  m.heads = std::stoi(want("heads"));
  m.alpha = std::stod(want("alpha"));
  m.beta_conf = std::stod(want("beta_conf"));
  m.beta_ref = std::stod(want("beta_ref"));
  m.miss_tolerance = std::stoi(want("miss_tolerance"));
  m.frame_h = std::stoi(want("frame_h"));
  m.frame_w = std::stoi(want("frame_w"));
  m.vocab_size = std::stoi(want("vocab_size"));
  m.disable_ice = want("disable_ice") == "true";
  m.disable_lgd = want("disable_lgd") == "true";
  m.detach_propagation = want("detach_propagation") == "true";
  return m;
}

}  // namespace

Checkpoint Checkpoint::from_model(const Model& model, const AdamW* opt,
                                  const std::string& rng_state) {
  Checkpoint ckpt;
  ckpt.model_config = model.config();
  ckpt.vocab_tokens = model.vocab().tokens();
  for (const Parameter& p : model.parameters()) {
    ckpt.params.emplace_back(p.name,
                             std::vector<double>(p.tensor.data(), p.tensor.data() + p.tensor.numel()));
  }
  if (opt) ckpt.opt = opt->state();
  ckpt.rng_state = rng_state;
  return ckpt;
}

Model Checkpoint::to_model() const {
  if (vocab_tokens.size() < 2 || vocab_tokens[0] != "<pad>" || vocab_tokens[1] != "<unk>") {
    throw std::runtime_error("checkpoint: malformed vocabulary");
  }
  Vocabulary vocab(std::vector<std::string>(vocab_tokens.begin() + 2, vocab_tokens.end()));
  Rng rng(0);  // weights are overwritten below
  Model model(model_config, vocab, rng);
  ParamList live = model.parameters();
  if (live.size() != params.size()) {
    throw std::runtime_error("checkpoint: parameter count mismatch");
  }
  for (std::size_t i = 0; i < live.size(); ++i) {
    if (live[i].name != params[i].first) {
      throw std::runtime_error("checkpoint: parameter order mismatch at " + params[i].first);
    }
    if (live[i].tensor.numel() != params[i].second.size()) {
      throw std::runtime_error("checkpoint: parameter size mismatch at " + params[i].first);
    }
    std::memcpy(live[i].tensor.data(), params[i].second.data(),
                params[i].second.size() * sizeof(double));
  }
  return model;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out << kMagic << "\n";

  const std::string config = model_config_text(ckpt.model_config);
  out << "config " << config.size() << "\n" << config;

  out << "vocab " << ckpt.vocab_tokens.size() << "\n";
  for (const std::string& t : ckpt.vocab_tokens) out << t << "\n";

  out << "params " << ckpt.params.size() << "\n";
  for (const auto& [name, values] : ckpt.params) {
    out << "param " << name << " " << values.size() << "\n";
    write_doubles(out, values);
    out << "\n";
  }

  out << "opt " << ckpt.opt.m.size() << " " << ckpt.opt.step_count << "\n";
  for (std::size_t i = 0; i < ckpt.opt.m.size(); ++i) {
    out << "moments " << ckpt.opt.m[i].size() << "\n";
    write_doubles(out, ckpt.opt.m[i]);
    write_doubles(out, ckpt.opt.v[i]);
    out << "\n";
  }

  out << "rng " << ckpt.rng_state.size() << "\n" << ckpt.rng_state << "\n";
  out << "end\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  Checkpoint ckpt;

  if (expect_line(in, "magic") != kMagic) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }

  std::string word;
  std::size_t size = 0;

  in >> word >> size;
  in.get();
  if (word != "config") throw std::runtime_error("checkpoint: expected config block");
  std::string config(size, '\0');
  in.read(config.data(), static_cast<std::streamsize>(size));
  ckpt.model_config = parse_model_config(config);

  std::size_t vocab_count = 0;
  in >> word >> vocab_count;
  in.get();
  if (word != "vocab") throw std::runtime_error("checkpoint: expected vocab block");
  for (std::size_t i = 0; i < vocab_count; ++i) {
    ckpt.vocab_tokens.push_back(expect_line(in, "vocab token"));
  }

  std::size_t param_count = 0;
  in >> word >> param_count;
  in.get();
  if (word != "params") throw std::runtime_error("checkpoint: expected params block");
  for (std::size_t i = 0; i < param_count; ++i) {
    std::string tag, name;
    std::size_t numel = 0;
    in >> tag >> name >> numel;
    in.get();
    if (tag != "param") throw std::runtime_error("checkpoint: expected param entry");
    ckpt.params.emplace_back(name, read_doubles(in, numel));
    in.get();  // trailing newline
  }

  std::size_t opt_count = 0;
  long step_count = 0;
  in >> word >> opt_count >> step_count;
  in.get();
  if (word != "opt") throw std::runtime_error("checkpoint: expected opt block");
  ckpt.opt.step_count = step_count;
  for (std::size_t i = 0; i < opt_count; ++i) {
    std::string tag;
    std::size_t numel = 0;
    in >> tag >> numel;
    in.get();
    if (tag != "moments") throw std::runtime_error("checkpoint: expected moments entry");
    ckpt.opt.m.push_back(read_doubles(in, numel));
    ckpt.opt.v.push_back(read_doubles(in, numel));
    in.get();
  }

  in >> word >> size;
  in.get();
  if (word != "rng") throw std::runtime_error("checkpoint: expected rng block");
  ckpt.rng_state.assign(size, '\0');
  in.read(ckpt.rng_state.data(), static_cast<std::streamsize>(size));
  in.get();

  if (expect_line(in, "end marker") != "end") {
    throw std::runtime_error("checkpoint: missing end marker");
  }
  return ckpt;
}

}  // namespace reftrack
