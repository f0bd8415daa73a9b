#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "reftrack/checkpoint.hpp"

using namespace reftrack;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d = 16;
  cfg.n_detect = 4;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.heads = 2;
  cfg.frame_h = 16;
  cfg.frame_w = 16;
  return cfg;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("checkpoint save-load-save is byte identical") {
  Vocabulary vocab({"red", "green", "circles"});
  Rng rng(17);
  Model model(tiny_config(), vocab, rng);

  AdamW opt;
  for (const Parameter& p : model.parameters()) opt.add(p, 1e-3, 1e-4);
  // one step so the moments are nonzero
  opt.zero_grad();
  Frame frame;
  frame.image = Tensor::zeros({16, 16, 3});
  auto text = model.encode_text(tokenize("red circles", vocab));
  auto res = model.run_frame(frame, text, {});
  backward(sum(mul(res.output.boxes, res.output.boxes)));
  opt.step();

  const std::string p1 = (fs::temp_directory_path() / "reftrack_a.ckpt").string();
  const std::string p2 = (fs::temp_directory_path() / "reftrack_b.ckpt").string();
  save_checkpoint(p1, Checkpoint::from_model(model, &opt, "123 456 789"));
  Checkpoint loaded = load_checkpoint(p1);
  save_checkpoint(p2, loaded);
  CHECK(file_bytes(p1) == file_bytes(p2));
  CHECK(loaded.rng_state == "123 456 789");
  CHECK(loaded.opt.step_count == 1);
  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("a reloaded model reproduces identical outputs") {
  Vocabulary vocab({"red", "green", "circles"});
  Rng rng(21);
  Model model(tiny_config(), vocab, rng);

  Rng img_rng(5);
  Frame frame;
  frame.image = Tensor::zeros({16, 16, 3});
  for (std::size_t i = 0; i < frame.image.numel(); ++i) frame.image.data()[i] = img_rng.uniform(0, 1);
  auto text = model.encode_text(tokenize("green circles", vocab));

  NoGradGuard no_grad;
  auto before = model.run_frame(frame, text, {});

  const std::string path = (fs::temp_directory_path() / "reftrack_c.ckpt").string();
  save_checkpoint(path, Checkpoint::from_model(model));
  Model reloaded = load_checkpoint(path).to_model();
  auto text2 = reloaded.encode_text(tokenize("green circles", vocab));
  auto after = reloaded.run_frame(frame, text2, {});

  for (std::size_t i = 0; i < before.output.boxes.numel(); ++i) {
    CHECK(before.output.boxes.data()[i] == after.output.boxes.data()[i]);
  }
  for (std::size_t i = 0; i < before.output.conf_logits.numel(); ++i) {
    CHECK(before.output.conf_logits.data()[i] == after.output.conf_logits.data()[i]);
  }
  fs::remove(path);
}

TEST_CASE("corrupted checkpoints are rejected") {
  const std::string path = (fs::temp_directory_path() / "reftrack_bad.ckpt").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOT-A-CHECKPOINT\n";
  }
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/path.ckpt"), std::runtime_error);
  fs::remove(path);
}

TEST_CASE("vocabulary round-trips through the checkpoint") {
  Vocabulary vocab({"alpha", "beta"});
  Rng rng(1);
  Model model(tiny_config(), vocab, rng);
  const std::string path = (fs::temp_directory_path() / "reftrack_v.ckpt").string();
  save_checkpoint(path, Checkpoint::from_model(model));
  Model reloaded = load_checkpoint(path).to_model();
  CHECK(reloaded.vocab().size() == vocab.size());
  CHECK(reloaded.vocab().id("beta") == vocab.id("beta"));
  fs::remove(path);
}
