#include "comind/cli/checkpoint.hpp"
#include "comind/cli/commands.hpp"
#include "comind/cli/run_config.hpp"
#include "comind/data/dataset.hpp"
#include "comind/data/synthetic.hpp"
#include "comind/error.hpp"
#include "comind/model/individual.hpp"
#include "comind/scores/scores.hpp"
#include "comind/util/binary.hpp"
#include "comind/util/random.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace comind;
using linalg::Matrix;

namespace {

// Small feature-format run: synthetic views saved as CSFM, config next to them.
struct Workspace {
  test::TempDir dir;
  std::filesystem::path config;

  explicit Workspace(const std::string& extra = {}, bool labels = true) {
    data::SyntheticSpec spec;
    spec.n = 96;
    spec.d1 = 6;
    spec.d2 = 5;
    spec.shared_correlations = {0.9, 0.8};
    spec.seed = 3;
    const data::SyntheticData s = data::make_shared_latent(spec);
    const data::PairedDataset test = data::resample(s, spec, 4);
    data::save_feature_matrix(dir / "train1.csfm", s.dataset.view1);
    data::save_feature_matrix(dir / "train2.csfm", s.dataset.view2);
    data::save_feature_matrix(dir / "test1.csfm", test.view1);
    data::save_feature_matrix(dir / "test2.csfm", test.view2);
    std::string lbl;
    for (std::size_t i = 0; i < test.size(); ++i) lbl += std::to_string(i % 3) + "\n";
    test::write_text(dir / "test_labels.txt", lbl);
    config = dir / "run.cfg";
    test::write_text(config, "dataset = features\n"
                             "train_view1 = train1.csfm\ntrain_view2 = train2.csfm\n"
                             "test_view1 = test1.csfm\ntest_view2 = test2.csfm\n" +
                                 std::string(labels ? "test_labels = test_labels.txt\n" : "") +
                                 "k = 2\nhidden = 4\nbatch_size = 32\nepochs = 2\nlr = 1e-3\nseed = 5\n" + extra);
  }
  std::filesystem::path operator/(const std::string& name) const { return dir / name; }
};

int train_common(const Workspace& w, std::ostream& err) {
  std::ostringstream out;
  cli::TrainCommonOptions o;
  o.config = w.config;
  o.out = w / "common.ck";
  return cli::cmd_train_common(o, out, err);
}

int train_individual(const Workspace& w, std::ostream& err) {
  std::ostringstream out;
  cli::TrainIndividualOptions o;
  o.config = w.config;
  o.common = w / "common.ck";
  o.out = w / "individual.ck";
  return cli::cmd_train_individual(o, out, err);
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string l;
  while (std::getline(in, l)) out.push_back(l);
  return out;
}

}  // namespace

TEST(RunConfig, ParsesKeysAndDefaults) {
  std::vector<std::string> notices;
  const cli::RunConfig c = cli::parse_run_config(
      "# comment\nk = 7\nlambda1=2.5\nhidden = 10, 20\nwhiten = false\ntrain_images = a/b\n", "/base", &notices);
  EXPECT_EQ(c.train.k, 7u);
  EXPECT_EQ(c.train.lambda1, 2.5);
  EXPECT_EQ(c.train.hidden, (std::vector<std::size_t>{10, 20}));
  EXPECT_FALSE(c.train.whitening);
  EXPECT_EQ(c.train_images, std::filesystem::path("/base/a/b"));
  EXPECT_NE(std::find(notices.begin(), notices.end(), "notice: lambda2 not set, using default 1"), notices.end());
  EXPECT_EQ(std::count_if(notices.begin(), notices.end(), [](const std::string& n) { return n.find(" k ") != n.npos; }),
            0);
}

TEST(RunConfig, Rejections) {
  EXPECT_THROW(cli::parse_run_config("bogus = 1\n"), ConfigError);
  EXPECT_THROW(cli::parse_run_config("k = 1\nk = 2\n"), ConfigError);
  EXPECT_THROW(cli::parse_run_config("k = two\n"), ConfigError);
  EXPECT_THROW(cli::parse_run_config("alpha = 2\n"), ConfigError);
  EXPECT_THROW(cli::parse_run_config("just text\n"), ConfigError);
  EXPECT_THROW(cli::load_run_config("/nonexistent/run.cfg"), ConfigError);
}

TEST(Checkpoint, CommonSaveLoadSaveIsByteIdentical) {
  model::TrainConfig cfg;
  cfg.k = 3;
  cfg.hidden = {5, 4};
  model::CommonComponent c = model::make_common(6, 7, cfg);
  c.encoder1.set_running_stats(linalg::Vector::Constant(3, 0.25), linalg::Vector::Constant(3, 2.0));
  c.trained = true;
  const std::vector<std::uint8_t> a = cli::serialize(c);
  EXPECT_EQ(cli::checkpoint_kind(a), cli::CheckpointKind::Common);
  const model::CommonComponent back = cli::parse_common(a);
  EXPECT_EQ(back.checksum(), c.checksum());
  EXPECT_EQ(cli::serialize(back), a);
}

TEST(Checkpoint, IndividualSaveLoadSaveIsByteIdentical) {
  test::TempDir dir;
  model::TrainConfig cfg;
  cfg.k = 2;
  cfg.q = 3;
  cfg.hidden = {4};
  model::IndividualComponent c = model::make_individual(5, 6, cfg);
  c.common_checksum = 0xdeadbeef;
  cli::save_checkpoint(dir / "a.ck", c);
  const model::IndividualComponent back = cli::load_individual(dir / "a.ck");
  EXPECT_EQ(back.common_checksum, 0xdeadbeefu);
  EXPECT_EQ(back.q, 3u);
  cli::save_checkpoint(dir / "b.ck", back);
  EXPECT_EQ(util::read_file(dir / "a.ck"), util::read_file(dir / "b.ck"));
}

TEST(Checkpoint, CorruptionIsDetected) {
  model::TrainConfig cfg;
  cfg.k = 2;
  cfg.hidden = {};
  const std::vector<std::uint8_t> good = cli::serialize(model::make_common(3, 3, cfg));
  for (std::size_t pos : {std::size_t{0}, std::size_t{5}, good.size() / 2, good.size() - 1}) {
    std::vector<std::uint8_t> bad = good;
    bad[pos] ^= 0x40;
    EXPECT_THROW(cli::parse_common(bad), CheckpointError) << "byte " << pos;
  }
  std::vector<std::uint8_t> shorter(good.begin(), good.end() - 9);
  EXPECT_THROW(cli::parse_common(shorter), CheckpointError);
  EXPECT_THROW(cli::parse_individual(good), CheckpointError);
}

TEST(Commands, IndexRange) {
  EXPECT_EQ(cli::parse_index_range("7"), (std::pair<std::size_t, std::size_t>{7, 8}));
  EXPECT_EQ(cli::parse_index_range("0:10"), (std::pair<std::size_t, std::size_t>{0, 10}));
  EXPECT_THROW(cli::parse_index_range("5:5"), ConfigError);
  EXPECT_THROW(cli::parse_index_range("x"), ConfigError);
}

TEST(Commands, MissingConfigIsExitOne) {
  std::ostringstream out;
  std::ostringstream err;
  cli::TrainCommonOptions o;
  o.config = "/nonexistent/run.cfg";
  o.out = "/tmp/unused.ck";
  EXPECT_EQ(cli::cmd_train_common(o, out, err), cli::kExitConfig);
  EXPECT_TRUE(out.str().empty());
  EXPECT_FALSE(err.str().empty());
}

TEST(Commands, MissingDataIsExitTwo) {
  test::TempDir dir;
  test::write_text(dir / "run.cfg", "dataset = features\ntrain_view1 = none.csfm\ntrain_view2 = none.csfm\n");
  std::ostringstream out;
  std::ostringstream err;
  cli::TrainCommonOptions o;
  o.config = dir / "run.cfg";
  o.out = dir / "c.ck";
  EXPECT_EQ(cli::cmd_train_common(o, out, err), cli::kExitData);
}

TEST(Commands, TrainCommonIsDeterministicAndLoadable) {
  Workspace w;
  std::ostringstream err;
  ASSERT_EQ(train_common(w, err), 0) << err.str();
  const std::string first = test::read_text(w / "common.ck.history.csv");
  const model::CommonComponent c = cli::load_common(w / "common.ck");
  EXPECT_TRUE(c.trained);
  EXPECT_EQ(c.k, 2u);
  const std::vector<std::string> rows = lines(first);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "epoch,correlation,decorrelation1,decorrelation2,penalty,total,test_total_correlation");
  ASSERT_EQ(train_common(w, err), 0);
  EXPECT_EQ(test::read_text(w / "common.ck.history.csv"), first);
}

TEST(Commands, NumericFailureIsExitThree) {
  Workspace w;
  std::string cfg = test::read_text(w.config);
  cfg.replace(cfg.find("lr = 1e-3"), 9, "lr = 1e300");
  test::write_text(w.config, cfg);
  std::ostringstream err;
  EXPECT_EQ(train_common(w, err), cli::kExitNumeric) << err.str();
}

TEST(Commands, TrainIndividualLeavesCommonUntouched) {
  Workspace w;
  std::ostringstream err;
  ASSERT_EQ(train_common(w, err), 0);
  const std::vector<std::uint8_t> before = util::read_file(w / "common.ck");
  ASSERT_EQ(train_individual(w, err), 0) << err.str();
  EXPECT_EQ(util::read_file(w / "common.ck"), before);
  const std::vector<std::string> rows = lines(test::read_text(w / "individual.ck.history.csv"));
  EXPECT_EQ(rows[0], "epoch,reconstruction1,decorrelation1,reconstruction2,decorrelation2,total");
  EXPECT_EQ(cli::load_individual(w / "individual.ck").common_checksum, cli::load_common(w / "common.ck").checksum());
}

TEST(Commands, CorruptCheckpointIsExitFour) {
  Workspace w;
  std::ostringstream err;
  ASSERT_EQ(train_common(w, err), 0);
  std::vector<std::uint8_t> bytes = util::read_file(w / "common.ck");
  bytes[bytes.size() / 2] ^= 1;
  util::write_file(w / "common.ck", bytes);
  EXPECT_EQ(train_individual(w, err), cli::kExitCheckpoint);
}

TEST(Commands, EvalPrintsMetricAndReport) {
  Workspace w;
  std::ostringstream err;
  ASSERT_EQ(train_common(w, err), 0);
  for (const std::string metric : {"corr", "recognition"}) {
    std::ostringstream out;
    cli::EvalOptions o;
    o.config = w.config;
    o.common = w / "common.ck";
    o.metric = metric;
    o.out = w / (metric + ".csv");
    ASSERT_EQ(cli::cmd_eval(o, out, err), 0) << err.str();
    const std::string value = lines(out.str()).at(0);
    const std::vector<std::string> report = lines(test::read_text(o.out));
    EXPECT_EQ(report[0], "metric,k,value,seed");
    EXPECT_EQ(report[1], metric + ",2," + value + ",5");
  }
}

TEST(Commands, RecognitionWithoutLabelsIsExitTwo) {
  Workspace w({}, false);
  std::ostringstream err;
  ASSERT_EQ(train_common(w, err), 0);
  std::ostringstream out;
  cli::EvalOptions o;
  o.config = w.config;
  o.common = w / "common.ck";
  o.metric = "recognition";
  EXPECT_EQ(cli::cmd_eval(o, out, err), cli::kExitData);
}

TEST(Commands, GradmapFilesAndScores) {
  Workspace w;
  std::ostringstream err;
  ASSERT_EQ(train_common(w, err), 0);
  ASSERT_EQ(train_individual(w, err), 0);
  for (const std::string kind : {"common", "individual"}) {
    std::ostringstream out;
    cli::GradmapOptions o;
    o.config = w.config;
    o.common = w / "common.ck";
    o.individual = w / "individual.ck";
    o.kind = kind;
    o.begin = 0;
    o.end = 10;
    o.out = w / ("maps_" + kind);
    ASSERT_EQ(cli::cmd_gradmap(o, out, err), 0) << err.str();
    std::size_t pgm = 0;
    for (const auto& e : std::filesystem::directory_iterator(o.out)) pgm += e.path().extension() == ".pgm";
    EXPECT_EQ(pgm, 20u);
    EXPECT_TRUE(std::filesystem::exists(o.out / ("3_2_" + kind + ".pgm")));
    EXPECT_EQ(scores::read_pgm(o.out / ("0_1_" + kind + ".pgm")).width, 6u);

    const model::CommonComponent c = cli::load_common(w / "common.ck");
    const model::IndividualComponent ind = cli::load_individual(w / "individual.ck");
    const data::FeatureMatrix t1 = data::load_feature_matrix(w / "test1.csfm");
    const data::FeatureMatrix t2 = data::load_feature_matrix(w / "test2.csfm");
    const std::vector<std::string> rows = lines(test::read_text(o.out / ("scores_" + kind + ".csv")));
    ASSERT_EQ(rows.size(), 21u);
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const std::size_t i = (r - 1) / 2;
      const int view = static_cast<int>((r - 1) % 2) + 1;
      const linalg::Vector x1 = t1.values.row(static_cast<Eigen::Index>(i)).transpose();
      const linalg::Vector x2 = t2.values.row(static_cast<Eigen::Index>(i)).transpose();
      const double expected = kind == "common" ? scores::grad_map_common(c, x1, x2).value
                                               : scores::grad_map_individual(ind, c, view == 1 ? x1 : x2,
                                                                             view == 1 ? x2 : x1, view)
                                                     .value;
      std::istringstream cells(rows[r]);
      std::string cell;
      for (int col = 0; col < 4; ++col) std::getline(cells, cell, ',');
      EXPECT_EQ(cell, cli::format_double(expected)) << rows[r];
    }
  }
}

TEST(Commands, GradmapOutOfRangeIsExitTwo) {
  Workspace w;
  std::ostringstream err;
  ASSERT_EQ(train_common(w, err), 0);
  std::ostringstream out;
  cli::GradmapOptions o;
  o.config = w.config;
  o.common = w / "common.ck";
  o.begin = 90;
  o.end = 200;
  o.out = w / "maps";
  EXPECT_EQ(cli::cmd_gradmap(o, out, err), cli::kExitData);
}

TEST(Commands, OracleSuiteExitCodes) {
  std::ostringstream out;
  std::ostringstream err;
  cli::OracleOptions o;
  o.instances = 10;
  EXPECT_EQ(cli::cmd_oracle_suite(o, out, err), 0);
  EXPECT_GE(lines(out.str()).size(), 7u);
  o.inject_fault = true;
  std::ostringstream out2;
  EXPECT_EQ(cli::cmd_oracle_suite(o, out2, err), cli::kExitOracle);
}

TEST(Binary, ExitCodes) {
  const std::string cli = COMIND_CLI_PATH;
  EXPECT_EQ(std::system((cli + " > /dev/null 2>&1").c_str()) >> 8, 1);
  EXPECT_EQ(std::system((cli + " train-common --config /nonexistent --out x > /dev/null 2>&1").c_str()) >> 8, 1);
  EXPECT_EQ(std::system((cli + " oracle-suite --instances 5 > /dev/null 2>&1").c_str()) >> 8, 0);
  EXPECT_EQ(std::system((cli + " oracle-suite --instances 5 --inject-fault > /dev/null 2>&1").c_str()) >> 8, 5);
}
