#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "sss/checkpoint.hpp"
#include "sss/self2self.hpp"
#include "testutil.hpp"

using sss::CheckpointError;
using sss::GrayImage;
using sss::TrainConfig;
using sss::UNetModel;

namespace {

UNetModel<float> make_trained_model(const GrayImage& y) {
  TrainConfig cfg;
  cfg.channels_enc = 4;
  cfg.channels_dec = 8;
  cfg.iterations = 2;
  cfg.seed = 90;
  cfg.lr = 3e-4;
  cfg.keep_prob = 0.65;
  UNetModel<float> m = sss::build_unet<float>(cfg, y.width(), y.height());
  sss::train(m, y);
  return m;
}

}  // namespace

TEST_CASE("checkpoints roundtrip config and weights exactly", "[checkpoint]") {
  const GrayImage y = testutil::make_random_image(32, 32, 91);
  UNetModel<float> m = make_trained_model(y);
  testutil::TempDir td("ckpt");
  const std::string path = td.file("model.bin");

  sss::save_model(m, path);
  UNetModel<float> loaded = sss::load_model<float>(path);

  CHECK(loaded.width == m.width);
  CHECK(loaded.height == m.height);
  CHECK(loaded.config.channels_enc == 4);
  CHECK(loaded.config.channels_dec == 8);
  CHECK(loaded.config.keep_prob == 0.65);
  CHECK(loaded.config.lr == 3e-4);
  CHECK(loaded.config.iterations == 2);
  CHECK(loaded.config.seed == 90);
  CHECK(loaded.config.literal_masked_loss == false);

  // weights are stored as f32, so a float model roundtrips bit for bit
  std::vector<sss::Parameter<float>*> orig, back;
  m.for_each_parameter([&](sss::Parameter<float>& p) { orig.push_back(&p); });
  loaded.for_each_parameter([&](sss::Parameter<float>& p) { back.push_back(&p); });
  REQUIRE(orig.size() == back.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    CHECK(back[i]->name == orig[i]->name);
    CHECK(back[i]->value == orig[i]->value);
  }

  // re-saving the loaded model reproduces the file byte for byte
  const std::string path2 = td.file("model2.bin");
  sss::save_model(loaded, path2);
  CHECK(testutil::read_file_bytes(path2) == testutil::read_file_bytes(path));
}

TEST_CASE("checkpoint files carry the magic tag", "[checkpoint]") {
  const GrayImage y = testutil::make_random_image(32, 32, 92);
  UNetModel<float> m = make_trained_model(y);
  testutil::TempDir td("ckpt_magic");
  const std::string path = td.file("model.bin");
  sss::save_model(m, path);

  const std::string bytes = testutil::read_file_bytes(path);
  REQUIRE(bytes.size() > 8);
  CHECK(bytes.substr(0, 8) == "SSSDNET1");
}

TEST_CASE("corrupt checkpoints are rejected", "[checkpoint]") {
  const GrayImage y = testutil::make_random_image(32, 32, 93);
  UNetModel<float> m = make_trained_model(y);
  testutil::TempDir td("ckpt_bad");
  const std::string path = td.file("model.bin");
  sss::save_model(m, path);
  const std::string bytes = testutil::read_file_bytes(path);

  SECTION("missing file") {
    CHECK_THROWS_AS(sss::load_model<float>(td.file("nope.bin")), CheckpointError);
  }
  SECTION("bad magic") {
    std::string tampered = bytes;
    tampered[0] = 'X';
    testutil::write_file_bytes(path, tampered);
    CHECK_THROWS_AS(sss::load_model<float>(path), CheckpointError);
  }
  SECTION("truncated header") {
    testutil::write_file_bytes(path, bytes.substr(0, 40));
    CHECK_THROWS_AS(sss::load_model<float>(path), CheckpointError);
  }
  SECTION("truncated payload") {
    testutil::write_file_bytes(path, bytes.substr(0, bytes.size() - 9));
    CHECK_THROWS_AS(sss::load_model<float>(path), CheckpointError);
  }
  SECTION("tensor count tampered") {
    // count sits right after the fixed-size config block
    const std::size_t count_off = 8 + 4 + 4 + 7 * 8 + 4 + 8 + 1 + 4 + 4;
    std::string tampered = bytes;
    tampered[count_off] = static_cast<char>(tampered[count_off] + 1);
    testutil::write_file_bytes(path, tampered);
    CHECK_THROWS_AS(sss::load_model<float>(path), CheckpointError);
  }
  SECTION("parameter name tampered") {
    const std::size_t name_off = 8 + 4 + 4 + 7 * 8 + 4 + 8 + 1 + 4 + 4 + 4 + 4;
    std::string tampered = bytes;
    REQUIRE(tampered[name_off] == 'e');  // first record is enc1.w
    tampered[name_off] = 'x';
    testutil::write_file_bytes(path, tampered);
    CHECK_THROWS_AS(sss::load_model<float>(path), CheckpointError);
  }
}

TEST_CASE("a reloaded model predicts identically", "[checkpoint]") {
  const GrayImage y = testutil::make_random_image(32, 32, 94);
  UNetModel<float> m = make_trained_model(y);
  testutil::TempDir td("ckpt_fn");
  const std::string path = td.file("model.bin");
  sss::save_model(m, path);
  UNetModel<float> loaded = sss::load_model<float>(path);

  sss::PredictConfig pc;
  pc.ensemble = 3;
  pc.seed = 95;
  const GrayImage a = sss::predict_ensemble(m, y, pc);
  const GrayImage b = sss::predict_ensemble(loaded, y, pc);
  CHECK(a.data() == b.data());  // exact vector equality
}
