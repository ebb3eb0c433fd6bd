#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "tpap/config.hpp"

using namespace tpap;
using tpap::testing::TempDir;

namespace {

std::string field_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.field();
  }
  return "<no error>";
}

}  // namespace

TEST(Config, DefaultsAreValid) {
  const Config c = parse_config("");
  EXPECT_EQ(c.data.name, "blobs");
  EXPECT_EQ(c.train.epochs, 150);
  ASSERT_TRUE(c.train.attack.has_value());
  EXPECT_EQ(*c.train.attack, AttackSpec::fgsm(8.0f / 255.0f));
  EXPECT_EQ(c.purifier, PurifierSpec::radius(8.0f / 255.0f));
  EXPECT_EQ(c.eval.attacks.size(), 3u);
}

TEST(Config, ParsesFractionsAndSections) {
  const Config c = parse_config(R"(
seed: 17
threads: 3
model: {arch: mlp, hidden: [32, 16], normalize: false}
train:
  epochs: 40
  batch_size: 64
  lr_drops: scaled
  augment: {pad_crop: 4, hflip: true}
attack: {kind: fgsm, epsilon: 16/255}
purifier: {xi: 4/255}
eval:
  attacks:
    - {name: clean, kind: none}
    - {name: PGD-10, kind: pgd, epsilon: 8/255, steps: 10, alpha: 2/255}
)");
  EXPECT_EQ(c.seed, 17u);
  EXPECT_EQ(c.train.seed, 17u);
  EXPECT_EQ(c.train.threads, 3u);
  EXPECT_EQ(c.model.hidden, (std::vector<std::size_t>{32, 16}));
  EXPECT_EQ(c.train.attack->epsilon, 16.0f / 255.0f);
  EXPECT_EQ(c.train.attack->alpha, 16.0f / 255.0f);
  EXPECT_EQ(c.train.lr_drops, scaled_lr_drops(40));
  EXPECT_EQ(c.purifier.xi, 4.0f / 255.0f);
  EXPECT_EQ(c.purifier.beta, 4.0f / 255.0f);
  ASSERT_EQ(c.eval.attacks.size(), 2u);
  EXPECT_FALSE(c.eval.attacks[0].attack.has_value());
  EXPECT_EQ(*c.eval.attacks[1].attack, AttackSpec::pgd(8.0f / 255.0f, 10));
  EXPECT_TRUE(c.train.augment.hflip);
}

TEST(Config, OverridesApplyOnTopOfTheFile) {
  const Config c = parse_config("train: {epochs: 10}\n", {"train.epochs=3", "attack.epsilon=4/255", "data.blobs.dims=5",
                                                        "attack.kind=none"});
  EXPECT_EQ(c.train.epochs, 3);
  EXPECT_FALSE(c.train.attack.has_value());
  EXPECT_EQ(c.data.blob_dims, 5u);
  EXPECT_EQ(field_of([] { parse_config("", {"noequals"}); }), "noequals");
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_EQ(field_of([] { parse_config("train: {foo: 1}\n"); }), "train.foo");
  EXPECT_EQ(field_of([] { parse_config("bogus: 1\n"); }), "bogus");
  EXPECT_EQ(field_of([] { parse_config("attack: {epsilon: -1}\n"); }), "attack.epsilon");
  EXPECT_EQ(field_of([] { parse_config("purifier: {xi: 0.1, beta: 0.2}\n"); }), "purifier.beta");
  EXPECT_EQ(field_of([] { parse_config("train: {epochs: ten}\n"); }), "train.epochs");
  EXPECT_EQ(field_of([] { parse_config("data: {name: mnist}\n"); }), "data.path");
  EXPECT_EQ(field_of([] { parse_config("data: {name: imagenet}\n"); }), "data.name");
  EXPECT_EQ(field_of([] { parse_config("model: {arch: resnet}\n"); }), "model.arch");
  EXPECT_EQ(field_of([] { parse_config("train: {lr_drops: [[10]]}\n"); }), "train.lr_drops");
}

TEST(Config, SyntaxErrorsCarryPosition) {
  try {
    parse_config("train:\n  epochs: [1, 2\n", {}, "bad.yaml");
    FAIL();
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("bad.yaml"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line"), std::string::npos) << msg;
  }
}

TEST(Config, YamlEchoRoundTrips) {
  const Config c = parse_config("seed: 5\ntrain: {epochs: 12, lr_drops: scaled}\nattack: {kind: pgd, epsilon: 8/255, "
                                "steps: 7}\npurifier: {xi: 2/255}\n");
  const std::string yaml = config_to_yaml(c);
  const Config back = parse_config(yaml);
  EXPECT_EQ(config_to_yaml(back), yaml);
  EXPECT_EQ(back.train.attack, c.train.attack);
  EXPECT_EQ(back.train.lr_drops, c.train.lr_drops);
  EXPECT_EQ(back.purifier, c.purifier);
  TempDir dir;
  const auto path = echo_config(c, dir / "sub");
  EXPECT_EQ(path, dir / "sub" / "config.yaml");
  EXPECT_EQ(config_to_yaml(load_config(path)), yaml);
}

TEST(Config, NumbersAndFractions) {
  EXPECT_EQ(parse_number("0.5", "f"), 0.5);
  EXPECT_DOUBLE_EQ(parse_number("8/255", "f"), 8.0 / 255.0);
  EXPECT_EQ(parse_number("-1e-3", "f"), -1e-3);
  EXPECT_THROW(parse_number("1/0", "f"), ValidationError);
  EXPECT_THROW(parse_number("abc", "f"), ValidationError);
  EXPECT_THROW(parse_number("1/2/3", "f"), ValidationError);
}

TEST(Config, LoadsBlobsAndBuildsModels) {
  const Config c = parse_config("data: {train_subset: 50}\nmodel: {arch: mlp, hidden: [8]}\n");
  const DataSplits d = load_data(c.data, c.seed);
  EXPECT_EQ(d.train.size(), 50u);
  EXPECT_EQ(d.test.size(), 300u);
  const Architecture a = build_architecture(c.model, d.train.example_shape(), d.train.num_classes, d.train.name);
  EXPECT_EQ(a.name, "mlp");
  EXPECT_EQ(a.num_classes, 3u);
  const Architecture cnn = build_architecture(ModelConfig{}, {3, 32, 32}, 10, "cifar10");
  EXPECT_EQ(cnn.layers.front().kind, LayerKind::normalize);
}
