#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "tpap/eval.hpp"
#include "tpap/training.hpp"

using namespace tpap;
using tpap::testing::BlobsProblem;

TEST(LrSchedule, StepDrops) {
  const TrainSpec s;
  EXPECT_FLOAT_EQ(lr_at(1, s), 0.1f);
  EXPECT_FLOAT_EQ(lr_at(74, s), 0.1f);
  EXPECT_FLOAT_EQ(lr_at(75, s), 0.01f);
  EXPECT_FLOAT_EQ(lr_at(90, s), 0.001f);
  EXPECT_FLOAT_EQ(lr_at(139, s), 0.001f);
  EXPECT_FLOAT_EQ(lr_at(150, s), 0.0001f);
}

TEST(LrSchedule, ScaledToRunLength) {
  EXPECT_EQ(scaled_lr_drops(150), (std::vector<LrDrop>{{75, 10.0f}, {90, 10.0f}, {140, 10.0f}}));
  EXPECT_EQ(scaled_lr_drops(40), (std::vector<LrDrop>{{20, 10.0f}, {24, 10.0f}, {37, 10.0f}}));
  EXPECT_EQ(scaled_lr_drops(1), (std::vector<LrDrop>{{1, 10.0f}, {1, 10.0f}, {1, 10.0f}}));
  EXPECT_THROW(scaled_lr_drops(0), ValidationError);
}

TEST(Sgd, MomentumWithCoupledWeightDecay) {
  ParamMap p{{"w", Tensor::from({1.0f, -2.0f})}};
  const GradMap g{{"w", Tensor::from({0.5f, 0.0f})}};
  SgdState st;
  sgd_step(p, g, st, 0.1f, 0.9f, 0.1f);
  // v = g + wd * theta; theta -= lr * v
  EXPECT_FLOAT_EQ(st.velocity.at("w")[0], 0.6f);
  EXPECT_FLOAT_EQ(p.at("w")[0], 0.94f);
  EXPECT_FLOAT_EQ(p.at("w")[1], -1.98f);
  sgd_step(p, g, st, 0.1f, 0.9f, 0.1f);
  EXPECT_FLOAT_EQ(st.velocity.at("w")[0], 0.9f * 0.6f + (0.5f + 0.1f * 0.94f));
  EXPECT_FLOAT_EQ(p.at("w")[0], 0.94f - 0.1f * 1.134f);
}

TEST(Sgd, PlainStepWithoutMomentumOrDecay) {
  ParamMap p{{"w", Tensor::from({3.0f})}};
  SgdState st;
  sgd_step(p, GradMap{{"w", Tensor::from({2.0f})}}, st, 0.25f, 0.0f, 0.0f);
  EXPECT_EQ(p.at("w")[0], 2.5f);
  EXPECT_THROW(sgd_step(p, GradMap{}, st, 0.1f, 0.0f, 0.0f), ShapeError);
  EXPECT_THROW(sgd_step(p, GradMap{{"w", Tensor::from({1, 2})}}, st, 0.1f, 0.0f, 0.0f), ShapeError);
}

TEST(TrainSpec, Validation) {
  TrainSpec s;
  EXPECT_NO_THROW(s.validate());
  s.momentum = 1.0f;
  try {
    s.validate();
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "train.momentum");
  }
  s = TrainSpec{};
  s.attack->epsilon = 2.0f;
  EXPECT_THROW(s.validate(), ValidationError);
  s = TrainSpec{};
  s.attack.reset();
  s.dual_epsilon = true;
  EXPECT_THROW(s.validate(), ValidationError);
}

TEST(AdversarialTraining, LearnsBlobsUnderFgsm) {
  const BlobsProblem p;
  TrainSpec spec = p.spec(8);
  int calls = 0;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& rec, const Model&) { EXPECT_EQ(rec.epoch, ++calls); };
  const TrainResult r = adversarial_train(Model(p.arch, 1), p.train, p.test, spec, hooks);
  EXPECT_EQ(calls, 8);
  ASSERT_EQ(r.history.size(), 8u);
  const EpochRecord& last = r.history.back();
  ASSERT_TRUE(last.evaluated());
  EXPECT_GE(*last.clean_test_acc, 99.0);
  EXPECT_GE(*last.fgsm_test_acc, 95.0);
  EXPECT_EQ(*last.trained_test_acc, *last.fgsm_test_acc);  // trained attack == curve FGSM
  EXPECT_GE(r.best_epoch, 1);
  EXPECT_LE(r.best_epoch, 8);
  EXPECT_GT(r.history.front().mean_loss, last.mean_loss);
  EXPECT_FLOAT_EQ(last.lr, lr_at(8, spec));
}

TEST(AdversarialTraining, BitwiseDeterministic) {
  const BlobsProblem p;
  TrainSpec spec = p.spec(3);
  spec.augment.hflip = true;
  spec.dual_epsilon = true;
  const TrainResult a = adversarial_train(Model(p.arch, 4), p.train, p.test, spec);
  spec.threads = 3;  // evaluation threading must not leak into training
  const TrainResult b = adversarial_train(Model(p.arch, 4), p.train, p.test, spec);
  EXPECT_EQ(a.final_model.param_checksum(), b.final_model.param_checksum());
  EXPECT_EQ(a.best_model.param_checksum(), b.best_model.param_checksum());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].mean_loss, b.history[i].mean_loss);
    EXPECT_EQ(a.history[i].pgd_test_acc, b.history[i].pgd_test_acc);
  }
  spec.seed = 99;
  const TrainResult c = adversarial_train(Model(p.arch, 4), p.train, p.test, spec);
  EXPECT_NE(a.final_model.param_checksum(), c.final_model.param_checksum());
}

TEST(AdversarialTraining, EvalEveryLeavesGaps) {
  const BlobsProblem p;
  TrainSpec spec = p.spec(5);
  spec.eval_every = 2;
  spec.attack.reset();
  const TrainResult r = adversarial_train(Model(p.arch, 1), p.train, p.test, spec);
  EXPECT_FALSE(r.history[0].evaluated());
  EXPECT_TRUE(r.history[1].evaluated());
  EXPECT_FALSE(r.history[2].evaluated());
  EXPECT_TRUE(r.history[4].evaluated());  // the last epoch always is
  EXPECT_EQ(r.history[4].adv_train_acc, r.history[4].clean_train_acc);
}

TEST(AdversarialTraining, DivergenceIsReported) {
  const BlobsProblem p;
  TrainSpec spec = p.spec(3);
  spec.lr0 = 1e30f;
  spec.attack.reset();
  EXPECT_THROW(adversarial_train(Model(p.arch, 1), p.train, p.test, spec), TrainingError);
}

TEST(AdversarialTraining, RejectsMismatchedData) {
  const BlobsProblem p;
  const Dataset other = make_synthetic_blobs(4, 10, 8, 10.0, 1);
  EXPECT_THROW(adversarial_train(Model(p.arch, 1), other, p.test, p.spec(1)), ValidationError);
  EXPECT_THROW(adversarial_train(Model(mlp_architecture({1, 1, 5}, {4}, 3), 1), p.train, p.test, p.spec(1)),
               ShapeError);
}

TEST(Verdict, ThresholdsAreStrictWhereDocumented) {
  const OverfitThresholds t;
  EXPECT_TRUE(make_verdict(95, 5, 80, 70, t).is_robust_overfit);
  EXPECT_FALSE(make_verdict(90, 5, 80, 70, t).is_robust_overfit);   // must exceed 90
  EXPECT_FALSE(make_verdict(95, 10, 80, 70, t).is_robust_overfit);  // must be below 10
  EXPECT_TRUE(make_verdict(95, 5, 70, 60, t).is_robust_overfit);    // inclusive minima
  EXPECT_FALSE(make_verdict(95, 5, 69.9, 60, t).is_robust_overfit);
  EXPECT_FALSE(make_verdict(95, 5, 70, 59.9, t).is_robust_overfit);
  const OverfitVerdict v = make_verdict(91, 2, 75, 65, t);
  EXPECT_EQ(v.trained_attack_train_acc, 91);
  EXPECT_EQ(v.other_attack_train_acc, 2);
}

TEST(Verdict, CleanModelOnBlobsIsNotOverfit) {
  // A model that resists PGD as well as FGSM is robust, not robust-overfit.
  const BlobsProblem p;
  const TrainResult r = adversarial_train(Model(p.arch, 1), p.train, p.test, p.spec(6));
  const OverfitVerdict v = robust_overfit_check(r.final_model, p.train, p.test, AttackSpec::fgsm(8.0f / 255.0f),
                                                AttackSpec::pgd(8.0f / 255.0f, 10));
  EXPECT_FALSE(v.is_robust_overfit);
  EXPECT_GT(v.other_attack_train_acc, 10.0);
  EXPECT_GE(v.clean_test_acc, 99.0);
}
