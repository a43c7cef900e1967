#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cdcl/config.hpp"

namespace cdcl::config {
namespace {

TEST(ConfigTest, DefaultsMatchModelAndTrainingDefaults) {
  const RunConfig c;
  EXPECT_EQ(c.model.sr.channels, 64);
  EXPECT_EQ(c.model.sr.n_dags, 6);
  EXPECT_EQ(c.model.contrastive.divide, 2);
  EXPECT_EQ(c.train.batch, 64);
  EXPECT_EQ(c.train.views, 4);
  EXPECT_NO_THROW(validate(c));
}

TEST(ConfigTest, ParsesKeysCommentsAndBlankLines) {
  const auto c = parse(
      "# desk run\n"
      "model.channels = 16\n"
      "\n"
      "model.n_dags=1   # trailing comment\n"
      "contrastive.tau = 0.2\n"
      "model.fc_shared = false\n"
      "degradation.iso_widths = 0.2, 2.6\n"
      "degradation.downsampler = decimate\n"
      "scale = 3\n");
  EXPECT_EQ(c.model.sr.channels, 16);
  EXPECT_EQ(c.model.sr.n_dags, 1);
  EXPECT_DOUBLE_EQ(c.model.contrastive.tau, 0.2);
  EXPECT_FALSE(c.model.sr.fc_shared);
  EXPECT_EQ(c.train.setting.iso_widths, (std::vector<double>{0.2, 2.6}));
  EXPECT_EQ(c.train.setting.downsampler, degradation::Downsampler::Decimate);
  EXPECT_EQ(c.train.scale, 3);
  EXPECT_EQ(c.model.sr.scale, 3);
}

TEST(ConfigTest, UnknownKeyReportsLineAndKey) {
  try {
    parse("model.channels = 16\nmodel.chanels = 8\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 2"), std::string::npos);
    EXPECT_NE(msg.find("model.chanels"), std::string::npos);
  }
}

TEST(ConfigTest, MalformedValuesThrow) {
  EXPECT_THROW(parse("model.channels = sixteen"), ConfigError);
  EXPECT_THROW(parse("model.fc_shared = maybe"), ConfigError);
  EXPECT_THROW(parse("contrastive.tau = 0.1x"), ConfigError);
  EXPECT_THROW(parse("just a line"), ConfigError);
  EXPECT_THROW(parse("degradation.downsampler = lanczos"), ConfigError);
}

TEST(ConfigTest, OverrideSyntax) {
  RunConfig c;
  apply_override(c, "train.batch=16");
  apply_override(c, " optim.weight_decay = 0.01 ");
  EXPECT_EQ(c.train.batch, 16);
  EXPECT_DOUBLE_EQ(c.train.adam.weight_decay, 0.01);
  EXPECT_THROW(apply_override(c, "train.batch"), ConfigError);
  EXPECT_THROW(apply_override(c, "nope=1"), ConfigError);
}

TEST(ConfigTest, TextRoundTripIsExact) {
  RunConfig c;
  c.model.contrastive.alpha = 0.1 + 0.2;
  c.train.joint_lr_end = 1e-6;
  c.train.setting.iso_widths = {0.2, 2.6};
  c.train.seed = 1234567890123ULL;
  const auto back = parse(to_text(c));
  EXPECT_EQ(to_text(back), to_text(c));
  EXPECT_EQ(back.model.contrastive.alpha, c.model.contrastive.alpha);
  EXPECT_EQ(back.train.seed, c.train.seed);
}

TEST(ConfigTest, JsonRoundTrip) {
  RunConfig c;
  c.model.sr.channels = 32;
  c.train.augment = false;
  const auto back = from_json(to_json(c));
  EXPECT_EQ(back.model.sr.channels, 32);
  EXPECT_FALSE(back.train.augment);
  EXPECT_THROW(from_json(nlohmann::json::array()), FormatError);
  EXPECT_THROW(from_json(nlohmann::json{{"model.channels", 3}}), FormatError);
}

TEST(ConfigTest, EveryEntryIsSettable) {
  RunConfig c;
  for (const auto& [k, v] : entries(c)) EXPECT_NO_THROW(set(c, k, v)) << k;
}

TEST(ConfigTest, LoadFileMissingAndPrefixed) {
  EXPECT_THROW(load_file("/nonexistent/cdcl.cfg"), IoError);
  const auto p = std::filesystem::temp_directory_path() / "cdcl_config_test.cfg";
  {
    std::ofstream out(p);
    out << "train.views = 2\nbogus = 1\n";
  }
  try {
    load_file(p);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(p.string()), std::string::npos);
  }
  std::filesystem::remove(p);
}

TEST(ConfigTest, ValidateCatchesCrossSectionErrors) {
  RunConfig c;
  c.model.sr.channels = 10;
  EXPECT_THROW(validate(c), ConfigError);
  c = RunConfig{};
  c.train.views = 65;
  EXPECT_THROW(validate(c), ConfigError);
  c = RunConfig{};
  c.model.contrastive.tau = 0.0;
  EXPECT_THROW(validate(c), ConfigError);
}

}  // namespace
}  // namespace cdcl::config
