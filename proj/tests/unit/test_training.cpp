#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "test_util.hpp"
#include "toder/training/trainer.hpp"

using namespace toder;
using namespace toder::train;
namespace fs = std::filesystem;

namespace {

constexpr int kSize = 32;

synthcolon::DatasetRequest tiny_request(const fs::path& out, StyleTag tag, uint64_t seed) {
  synthcolon::DatasetRequest req;
  req.colon = synthcolon::ColonSpec::procedural(10.0, 0.5, 0.12, 0.5, seed);
  req.style = tag == StyleTag::A ? synthcolon::TextureStyle::style_a() : synthcolon::TextureStyle::style_b();
  req.tag = tag;
  req.render.intrinsics = CameraIntrinsics::from_fov(kSize, kSize, 100.0 * std::numbers::pi / 180.0);
  req.n_train = 5;
  req.n_test_sets = 1;
  req.n_test = 2;
  req.out_dir = out;
  req.seed = seed;
  return req;
}

TrainConfig tiny_config(Variant v = Variant::full) {
  TrainConfig c;
  c.seed = 11;
  c.height = c.width = kSize;
  c.widths = {4, 4, 1, 4, 0.01f, 20.0f, 1.0f};
  c.variant = v;
  for (auto& s : c.stages) {
    s.epochs = 1;
    s.batch_size = 2;
    s.lr = 1e-3f;
  }
  c.sync();
  return c;
}

/// Two tiny datasets shared by every test in this file.
struct Corpus {
  TempDir dir;
  fs::path source, target;
  Corpus() {
    source = dir.path() / "a";
    target = dir.path() / "b";
    synthcolon::generate_dataset(tiny_request(source, StyleTag::A, 3));
    synthcolon::generate_dataset(tiny_request(target, StyleTag::B, 4));
  }
  [[nodiscard]] DomainData src() const { return load_domain(synthcolon::load_dataset_splits(source).front()); }
  [[nodiscard]] DomainData tgt() const {
    return load_domain(synthcolon::load_dataset_splits(target).front(), LoadOptions{false, false});
  }
};

const Corpus& corpus() {
  static const Corpus c;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run(const TrainConfig& cfg, const fs::path& run_dir, RunOptions opt = {}) {
  return run_all(cfg, RunPaths{corpus().source, corpus().target, run_dir}, opt);
}

std::map<std::string, int> term_counts(const std::vector<LossRecord>& h, int stage) {
  std::map<std::string, int> out;
  for (const auto& r : h)
    if (r.stage == stage) ++out[r.term];
  return out;
}

}  // namespace

TEST(Training, SmokeRunWritesArtifactsAndOneRowPerTermPerStep) {
  TempDir out;
  const auto res = run(tiny_config(), out.path());
  for (int s = 1; s <= 3; ++s) {
    EXPECT_TRUE(fs::exists(stage_dir(out.path(), s) / kCheckpointFile));
    EXPECT_TRUE(fs::exists(stage_dir(out.path(), s) / kLossesFile));
  }
  ASSERT_TRUE(fs::exists(out.path() / "report.json"));
  const auto report = nlohmann::json::parse(slurp(out.path() / "report.json"));
  EXPECT_EQ(report.at("variant"), "full");
  EXPECT_EQ(report.at("evaluation").at("per_set").size(), 1u);
  EXPECT_TRUE(std::isfinite(report.at("evaluation").at("mean").at("abs_rel").get<double>()));

  // 5 source and 5 target frames in batches of 2: 3 batches per domain.
  const auto& h = res.state.history;
  const auto s1 = term_counts(h, 1);
  for (const char* t : {"gan_s2t", "gan_t2s", "cycle_s", "cycle_t", "disc_t_real", "disc_t_fake", "disc_s_real",
                        "disc_s_fake", "total"})
    EXPECT_EQ(s1.at(t), 3) << t;
  const auto s2 = term_counts(h, 2);
  EXPECT_EQ(s2.at("sup_t"), 3);
  EXPECT_EQ(s2.at("sup_s"), 3);
  EXPECT_EQ(s2.at("self"), 3);
  EXPECT_EQ(s2.at("total"), 6);
  // Stage 3 target pairs: 4 starts -> 2 batches.
  const auto s3 = term_counts(h, 3);
  EXPECT_EQ(s3.at("sup_t"), 2);
  EXPECT_EQ(s3.at("pose"), 2);
  EXPECT_EQ(s3.at("photo"), 2);
  EXPECT_EQ(s3.at("cons"), 2);
  EXPECT_EQ(s3.at("self"), 2);
  EXPECT_EQ(s3.at("total"), 4);
  EXPECT_EQ(res.state.step, 3 + 6 + 4);
  EXPECT_EQ(read_losses_csv(out.path() / kLossesFile).size(), h.size());
}

TEST(Training, RecordedTotalsEqualWeightedSums) {
  TempDir out;
  run(tiny_config(), out.path());
  const auto rows = read_losses_csv(out.path() / kLossesFile);
  std::map<long, double> sum;
  std::map<long, double> total;
  for (const auto& r : rows) {
    if (r.term == "total")
      total[r.step] = r.value;
    else
      sum[r.step] += r.weight * r.value;
  }
  ASSERT_FALSE(total.empty());
  for (const auto& [step, t] : total) EXPECT_NEAR(sum.at(step), t, 1e-6 * std::max(1.0, std::abs(t))) << step;
}

TEST(Training, LossCsvRoundTrip) {
  TempDir out;
  const std::vector<LossRecord> h{{1, 0, "gan_s2t", 1.0, 0.25f}, {1, 0, "total", 1.0, 1.5f}, {3, 7, "photo", 0.1, 3e-7f}};
  write_losses_csv(h, out.path() / "l.csv");
  const auto back = read_losses_csv(out.path() / "l.csv");
  ASSERT_EQ(back.size(), h.size());
  for (size_t i = 0; i < h.size(); ++i) {
    EXPECT_EQ(back[i].stage, h[i].stage);
    EXPECT_EQ(back[i].step, h[i].step);
    EXPECT_EQ(back[i].term, h[i].term);
    EXPECT_DOUBLE_EQ(back[i].weight, h[i].weight);
    EXPECT_EQ(back[i].value, h[i].value);
  }
  std::ofstream(out.path() / "bad.csv") << "step,stage,term,weight,value\n1,2,x\n";
  EXPECT_THROW(read_losses_csv(out.path() / "bad.csv"), ParseError);
}

TEST(Training, RerunIsBitIdentical) {
  TempDir a, b;
  run(tiny_config(), a.path());
  run(tiny_config(), b.path());
  EXPECT_EQ(slurp(a.path() / kLossesFile), slurp(b.path() / kLossesFile));
  for (int s = 1; s <= 3; ++s)
    EXPECT_EQ(slurp(stage_dir(a.path(), s) / kCheckpointFile), slurp(stage_dir(b.path(), s) / kCheckpointFile));
}

TEST(Training, ResumeMatchesUninterruptedRun) {
  TempDir full, resumed;
  run(tiny_config(), full.path());
  RunOptions opt;
  opt.resume_stage = 1;
  opt.resume_dir = full.path();
  run(tiny_config(), resumed.path(), opt);
  EXPECT_EQ(slurp(full.path() / kLossesFile), slurp(resumed.path() / kLossesFile));
  EXPECT_EQ(slurp(stage_dir(full.path(), 3) / kCheckpointFile), slurp(stage_dir(resumed.path(), 3) / kCheckpointFile));
}

TEST(Training, TranslatorsFrozenAfterStageOne) {
  TempDir out;
  const auto res = run(tiny_config(), out.path());
  const auto& stages = res.report.at("stages");
  ASSERT_EQ(stages.size(), 3u);
  EXPECT_NE(stages[0].at("translators_before"), stages[0].at("translators_after"));
  EXPECT_EQ(stages[0].at("translators_after"), stages[1].at("translators_after"));
  EXPECT_EQ(stages[1].at("translators_after"), stages[2].at("translators_after"));
  EXPECT_TRUE(res.state.translators_frozen);
}

TEST(Training, ZeroWeightsLeaveParametersUnchanged) {
  TrainConfig cfg = tiny_config();
  auto& w = cfg.stages[1].weights;
  w.w_sup = 0;
  w.w_self = 0;
  TrainState st(cfg);
  st.completed_stage = 1;
  const std::string d_t = st.nets.d_t.value_hash(), d_s = st.nets.d_s.value_hash();
  stage2_train(st, corpus().src(), corpus().tgt());
  EXPECT_EQ(st.nets.d_t.value_hash(), d_t);
  EXPECT_EQ(st.nets.d_s.value_hash(), d_s);
  EXPECT_EQ(st.completed_stage, 2);
}

TEST(Training, PoseNetworkReceivesPhotometricGradient) {
  TrainConfig cfg = tiny_config();
  TrainState st(cfg);
  const DomainData tgt = corpus().tgt();
  const Tensor ia = train::detail::pick(tgt.images, {0, 1}), ib = train::detail::pick(tgt.images, {1, 2});
  const Var xa = nn::constant(ia), xb = nn::constant(ib);
  st.nets.tnet.set_trainable(true);
  const Var pab = st.nets.tnet(xa, xb), pba = st.nets.tnet(xb, xa);
  const Var da = st.nets.d_t(xa), db = st.nets.d_t(xb);
  const auto g = geometric_terms(da, db, pab, pba, ia, ib, tgt.intrinsics, cfg.stages[2].weights, cfg.cons_mode);
  EXPECT_GT(g.photo->value.item(), 0.0f);
  nn::backward(g.photo);
  double norm = 0;
  for (const auto& p : st.nets.tnet.parameters())
    if (!p.var->grad.data.empty())
      for (float v : p.var->grad.data) norm += std::abs(v);
  EXPECT_GT(norm, 0.0);
}

TEST(Training, SameStyleDomainsRejected) {
  TrainState st(tiny_config());
  const DomainData src = corpus().src();
  EXPECT_THROW(stage1_train(st, src, src), ValidationError);
}

TEST(Training, StageThreeNeedsOrderedTarget) {
  TrainState st(tiny_config());
  st.completed_stage = 2;
  DomainData tgt = corpus().tgt();
  std::swap(tgt.timestamps[1], tgt.timestamps[2]);
  try {
    stage3_train(st, corpus().src(), tgt);
    FAIL() << "expected a ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("temporal ordering"), std::string::npos);
  }
}

TEST(Training, StagesNeedTheirPredecessor) {
  TrainState st(tiny_config());
  EXPECT_THROW(stage2_train(st, corpus().src(), corpus().tgt()), ValidationError);
  st.completed_stage = 1;
  EXPECT_THROW(stage3_train(st, corpus().src(), corpus().tgt()), ValidationError);
}

TEST(Training, SourceWithoutDepthRejected) {
  TrainState st(tiny_config());
  st.completed_stage = 1;
  DomainData src = corpus().src();
  src.depths.clear();
  src.depth_masks.clear();
  EXPECT_THROW(stage2_train(st, src, corpus().tgt()), ValidationError);
}

TEST(Training, OneDirectionalVariantLeavesSourceDepthNetUntouched) {
  TrainState st(tiny_config(Variant::no_bidirect));
  const std::string d_s = st.nets.d_s.value_hash(), d_t = st.nets.d_t.value_hash();
  const DomainData src = corpus().src(), tgt = corpus().tgt();
  stage1_train(st, src, tgt);
  stage2_train(st, src, tgt);
  stage3_train(st, src, tgt);
  EXPECT_EQ(st.nets.d_s.value_hash(), d_s);
  EXPECT_NE(st.nets.d_t.value_hash(), d_t);
  for (int s = 2; s <= 3; ++s) {
    const auto terms = term_counts(st.history, s);
    EXPECT_EQ(terms.count("sup_s"), 0u);
    EXPECT_EQ(terms.count("self"), 0u);
  }
  // Predictions come from the target-domain net alone.
  const Frame f = load_frame(synthcolon::load_dataset_splits(corpus().target)[1], 0);
  const DepthMap fused = depth_predictor(st.nets, Variant::no_bidirect)(f);
  const DepthMap direct = predict_depth(st.nets, f.rgb, false).target_style;
  EXPECT_TRUE((fused.values == direct.values).all());
}

TEST(Training, NoPoseVariantLeavesPoseNetUntouched) {
  TrainState st(tiny_config(Variant::no_tnet));
  const std::string tnet = st.nets.tnet.value_hash();
  const DomainData src = corpus().src(), tgt = corpus().tgt();
  stage1_train(st, src, tgt);
  stage2_train(st, src, tgt);
  stage3_train(st, src, tgt);
  EXPECT_EQ(st.nets.tnet.value_hash(), tnet);
  const auto terms = term_counts(st.history, 3);
  for (const char* t : {"pose", "photo", "cons"}) EXPECT_EQ(terms.count(t), 0u) << t;
  EXPECT_GT(terms.at("self"), 0);
}

TEST(Training, StateRoundTripsThroughCheckpoint) {
  TempDir out;
  TrainState st(tiny_config());
  stage1_train(st, corpus().src(), corpus().tgt());
  save_state(st, out.path());
  const TrainState back = load_state(tiny_config(), out.path());
  EXPECT_EQ(back.completed_stage, 1);
  EXPECT_EQ(back.step, st.step);
  EXPECT_EQ(back.history.size(), st.history.size());
  EXPECT_EQ(back.nets.translator_hash(), st.nets.translator_hash());
  TrainConfig wider = tiny_config();
  wider.widths.depth = 8;
  EXPECT_THROW(load_state(wider, out.path()), IncompatibleCheckpoint);
}

TEST(Training, SingleImageOverfit) {
  // The target-domain depth net must be able to fit one labeled frame.
  TrainConfig cfg = tiny_config();
  TrainState st(cfg);
  const DomainData src = corpus().src();
  const Var x = nn::constant(train::detail::pick(src.images, {0}));
  const Var y = nn::constant(train::detail::pick(src.depths, {0}));
  const Tensor mask = train::detail::pick(src.depth_masks, {0});
  st.nets.d_t.set_trainable(true);
  nn::Adam opt(nn::parameters_of({&st.nets.d_t}), nn::AdamConfig{3e-3f});
  float first = 0, last = 0;
  for (int i = 0; i < 150; ++i) {
    const Var loss = nn::l1_loss(st.nets.d_t(x), y, &mask);
    if (i == 0) first = loss->value.item();
    last = loss->value.item();
    nn::backward(loss);
    opt.step();
  }
  EXPECT_LT(last, 0.2f * first);
}
