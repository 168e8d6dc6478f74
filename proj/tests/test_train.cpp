#include "tacrefine/train.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace tacrefine;
namespace fs = std::filesystem;

namespace {

fs::path temp(const std::string& name) { return fs::temp_directory_path() / ("tacrefine_" + name); }

PoseBounds small_bounds() {
  PoseBounds b;
  b.pitch.steps = b.roll.steps = b.y.steps = b.z.steps = 3;
  return b;
}

const Dataset& sim() {
  static const Dataset ds =
      collect(small_bounds(), ObjectModel{}, SensorParams::nominal(), HandConfig{}, 1, DomainTag::sim);
  return ds;
}

const Dataset& real() {
  static const Dataset ds = collect(small_bounds(), ObjectModel{},
                                    perturb_params(SensorParams::nominal(), 0.2, 2), HandConfig{}, 3,
                                    DomainTag::real_analogue);
  return ds;
}

TrainConfig tiny() {
  TrainConfig c;
  c.batch_size = 8;
  c.steps_pretrain = 30;
  c.steps_finetune = 20;
  c.seed = 99;
  return c;
}

}  // namespace

TEST(Train, ZeroStepsReturnsInitialParameters) {
  TrainConfig c = tiny();
  c.steps_pretrain = 0;
  const auto [p, rep] = train_policy_a(sim(), c);
  EXPECT_EQ(p, init_params(derive_seed(c.seed, 0xa11)));
  EXPECT_TRUE(rep.losses.empty());
}

TEST(Train, DeterministicAcrossRuns) {
  const auto a = train_policy_a(sim(), tiny());
  const auto b = train_policy_a(sim(), tiny());
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second.losses, b.second.losses);
  TrainConfig other = tiny();
  other.seed = 100;
  EXPECT_NE(train_policy_a(sim(), other).first, a.first);
}

TEST(Train, PolicyBWithoutFinetuneEqualsPolicyA) {
  TrainConfig c = tiny();
  c.steps_finetune = 0;
  EXPECT_EQ(train_policy_a(sim(), c).first, train_policy_b(sim(), real(), c).first);
}

TEST(Train, PolicyBPretrainPhaseIsPolicyA) {
  const TrainConfig c = tiny();
  TrainState b = start_training(c, PolicyKind::b);
  run_training(b, sim(), &real(), c, c.steps_pretrain);
  EXPECT_EQ(b.params, train_policy_a(sim(), c).first);
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  const TrainConfig c = tiny();
  const auto full = train_policy_b(sim(), real(), c);
  TrainState s = start_training(c, PolicyKind::b);
  run_training(s, sim(), &real(), c, 37);
  const auto path = temp("ckpt.tack");
  save_checkpoint(s, path);
  TrainState r = resume(path, c);
  EXPECT_EQ(r, s);
  run_training(r, sim(), &real(), c);
  EXPECT_EQ(r.params, full.first);
  EXPECT_EQ(r.losses, full.second.losses);
  fs::remove(path);
}

TEST(Train, ResumeWithDifferentConfigRejected) {
  const TrainConfig c = tiny();
  TrainState s = start_training(c, PolicyKind::a);
  const auto path = temp("ckpt_cfg.tack");
  save_checkpoint(s, path);
  TrainConfig other = c;
  other.lr_pretrain = 5e-4;
  try {
    resume(path, other);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
  }
  EXPECT_THROW(run_training(s, sim(), nullptr, other), Error);
  fs::remove(path);
}

TEST(Train, EmptyCheckpointPathRejected) {
  TrainState s = start_training(tiny(), PolicyKind::a);
  EXPECT_THROW(save_checkpoint(s, ""), Error);
  EXPECT_THROW(load_checkpoint(""), Error);
}

TEST(Train, CheckpointVersionGuard) {
  const auto path = temp("ckpt_ver.tack");
  save_checkpoint(start_training(tiny(), PolicyKind::a), path);
  std::ifstream in(path, std::ios::binary);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
  in.close();
  bytes.resize(bytes.size() - 4);
  bytes[4] = 2;
  io::Writer w;
  w.put_bytes(bytes);
  w.finish(path);
  try {
    load_checkpoint(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::version);
  }
  fs::remove(path);
}

TEST(Train, DomainMismatchRejected) {
  const TrainConfig c = tiny();
  try {
    train_policy_a(real(), c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::domain_mismatch);
  }
  try {
    train_policy_b(sim(), sim(), c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::domain_mismatch);
  }
  TrainState b = start_training(c, PolicyKind::b);
  EXPECT_THROW(run_training(b, sim(), nullptr, c), Error);
}

TEST(Train, LossDecreases) {
  TrainConfig c = tiny();
  c.batch_size = 16;
  c.steps_pretrain = 300;
  c.steps_finetune = 0;
  const auto [p, rep] = train_policy_a(sim(), c);
  double head = 0, tail = 0;
  for (int i = 0; i < 20; ++i) {
    head += rep.losses[i];
    tail += rep.losses[rep.losses.size() - 1 - i];
  }
  EXPECT_LT(tail, head / 3.0);
}

TEST(Train, FinetuneReducesRealDomainLoss) {
  TrainConfig c = tiny();
  c.batch_size = 16;
  c.steps_pretrain = 200;
  c.steps_finetune = 200;
  c.lr_finetune = 5e-4;
  c.augmentation.scale_enabled = c.augmentation.joint_enabled = false;
  TrainState s = start_training(c, PolicyKind::b);
  run_training(s, sim(), &real(), c, c.steps_pretrain);
  const auto probe_pairs = cross_combine_all(real().records, 256, 5);
  const Batch probe = make_batch(std::span<const PairedExample>(probe_pairs));
  const double before = backward(s.params, probe).loss;
  run_training(s, sim(), &real(), c);
  const double after = backward(s.params, probe).loss;
  EXPECT_LT(after, before);
}

TEST(Train, LossCsv) {
  const auto path = temp("loss.csv");
  write_loss_csv({0.5, 0.25}, path, 7);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "# config_hash=0x0000000000000007");
  std::getline(in, line);
  EXPECT_EQ(line, "step,loss");
  std::getline(in, line);
  EXPECT_EQ(line, "0,0.5");
  fs::remove(path);
}

TEST(Train, ConfigValidation) {
  TrainConfig c = tiny();
  c.batch_size = 0;
  EXPECT_THROW(start_training(c, PolicyKind::a), Error);
  c = tiny();
  c.lr_finetune = 0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_NE(tiny().hash(), c.hash());
}
