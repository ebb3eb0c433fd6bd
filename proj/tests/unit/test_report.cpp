#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "tpap/report.hpp"

using namespace tpap;
using tpap::testing::TempDir;

namespace {

EpochRecord record(int epoch, bool evaluated) {
  EpochRecord r;
  r.epoch = epoch;
  r.lr = 0.1f;
  r.mean_loss = 1.25 / epoch;
  r.wall_seconds = 0.5;
  if (evaluated) {
    r.clean_train_acc = 90.0 + epoch;
    r.adv_train_acc = 50.5;
    r.clean_test_acc = 80.25;
    r.trained_test_acc = 45.0;
    r.fgsm_test_acc = 45.0;
    r.pgd_test_acc = 12.5;
  }
  return r;
}

RunReport sample_report() {
  RunReport rep;
  rep.model_id = "small_cnn";
  rep.dataset = "cifar10-test";
  rep.rows = {{"clean", false, 2000, 1600, 80.0, 0.0, 0.0, 1.5},
              {"clean", true, 2000, 1590, 79.5, 0.0, 8.0 / 255.0, 2.5},
              {"PGD-20", false, 2000, 100, 5.0, 8.0 / 255.0, 0.0, 30.0},
              {"PGD-20", true, 2000, 900, 45.0, 8.0 / 255.0, 8.0 / 255.0, 31.0}};
  return rep;
}

}  // namespace

TEST(History, CsvRoundTripWithGaps) {
  TempDir dir;
  const TrainHistory h{record(1, false), record(2, true), record(3, true)};
  write_history(dir / "h.csv", h);
  const TrainHistory back = read_history(dir / "h.csv");
  ASSERT_EQ(back.size(), 3u);
  EXPECT_FALSE(back[0].evaluated());
  EXPECT_FALSE(back[0].pgd_test_acc.has_value());
  EXPECT_EQ(back[1].pgd_test_acc, 12.5);
  EXPECT_EQ(back[2].clean_train_acc, 93.0);
  EXPECT_EQ(back[2].epoch, 3);
  EXPECT_FLOAT_EQ(back[2].lr, 0.1f);
  EXPECT_NEAR(back[2].mean_loss, 1.25 / 3, 1e-6);
  EXPECT_EQ(history_csv_header().substr(0, 9), "epoch,lr,");
}

TEST(History, AppendRecoversFromATornLine) {
  TempDir dir;
  append_history(dir / "h.csv", record(1, true));
  append_history(dir / "h.csv", record(2, true));
  {
    std::ofstream out(dir / "h.csv", std::ios::app);
    out << "3,0.1,0.4";  // interrupted writer
  }
  EXPECT_EQ(read_history(dir / "h.csv").size(), 2u);
  append_history(dir / "h.csv", record(3, false));
  const TrainHistory h = read_history(dir / "h.csv");
  ASSERT_EQ(h.size(), 3u);
  EXPECT_EQ(h[2].epoch, 3);
  EXPECT_FALSE(h[2].evaluated());
  const std::string text = read_text(dir / "h.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);  // header + 3 rows
}

TEST(History, MalformedEarlierLineThrows) {
  TempDir dir;
  write_text(dir / "h.csv", history_csv_header() + "\nnot,a,row\n" + history_csv_row(record(2, true)) + "\n");
  EXPECT_THROW(read_history(dir / "h.csv"), FormatError);
  write_text(dir / "bad.csv", "x,y\n");
  EXPECT_THROW(read_history(dir / "bad.csv"), FormatError);
}

TEST(Report, JsonRoundTrip) {
  const RunReport rep = sample_report();
  const RunReport back = report_from_json(report_to_json(rep));
  EXPECT_EQ(back.model_id, rep.model_id);
  EXPECT_EQ(back.dataset, rep.dataset);
  ASSERT_EQ(back.rows.size(), rep.rows.size());
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    EXPECT_EQ(back.rows[i].attack, rep.rows[i].attack);
    EXPECT_EQ(back.rows[i].purified, rep.rows[i].purified);
    EXPECT_EQ(back.rows[i].correct, rep.rows[i].correct);
    EXPECT_DOUBLE_EQ(back.rows[i].accuracy_pct, rep.rows[i].accuracy_pct);
    EXPECT_DOUBLE_EQ(back.rows[i].mean_linf, rep.rows[i].mean_linf);
  }
  TempDir dir;
  write_report(dir / "r.json", dir / "r.csv", rep);
  EXPECT_EQ(read_report(dir / "r.json").rows.size(), 4u);
  const std::string csv = read_text(dir / "r.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(Report, JsonValidation) {
  EXPECT_THROW(report_from_json("{"), FormatError);
  EXPECT_THROW(report_from_json(R"({"version": 2, "model": "m", "dataset": "d", "rows": []})"), FormatError);
  EXPECT_THROW(report_from_json(R"({"version": 1, "model": "m", "dataset": "d", "rows": [
      {"attack": "a", "purified": false, "n": 10, "correct": 11, "accuracy_pct": 110,
       "mean_linf": 0, "wall_seconds": 0}]})"),
               FormatError);
}

TEST(Report, TableShowsPlainTpapAndDelta) {
  const std::string t = render_report_table(sample_report());
  EXPECT_NE(t.find("TPAP %"), std::string::npos);
  EXPECT_NE(t.find("+40.00"), std::string::npos);  // PGD-20: 5 -> 45
  EXPECT_NE(t.find("-0.50"), std::string::npos);   // clean: 80 -> 79.5
  EXPECT_NE(t.find("8.00"), std::string::npos);    // Linf * 255
}

TEST(Report, PurifyTraceCsv) {
  PurifyTrace tr;
  tr.pre_labels = {1, 2};
  tr.post_labels = {0, 2};
  tr.linf_delta = {0.5f, 0.25f};
  const Labels truth{0, 1};
  EXPECT_EQ(purify_trace_csv(tr, &truth), "index,pre_label,post_label,linf_delta,true_label\n0,1,0,0.5,0\n1,2,2,0.25,1\n");
  EXPECT_EQ(purify_trace_csv(tr).substr(0, 36), "index,pre_label,post_label,linf_delt");
}

TEST(Report, AblationCsvs) {
  AblationCell c;
  c.epsilon = 8.0f / 255.0f;
  c.batch_size = 64;
  c.history = {record(1, true), record(2, true)};
  c.verdict.is_robust_overfit = true;
  const std::string cells = ablation_cells_csv({c, c});
  EXPECT_EQ(std::count(cells.begin(), cells.end(), '\n'), 3);
  EXPECT_NE(cells.find("\n8,64,"), std::string::npos);
  EXPECT_EQ(cells.back(), '\n');
  EXPECT_EQ(cells.substr(cells.size() - 2), "1\n");
  const std::string curves = ablation_curves_csv({c});
  EXPECT_EQ(curves.substr(0, 27), "epsilon_255,batch_size,epoc");
  EXPECT_EQ(std::count(curves.begin(), curves.end(), '\n'), 3);
  EXPECT_NE(verdict_to_json(c.verdict).find("\"is_robust_overfit\": true"), std::string::npos);
}

TEST(Report, GenericCsvTable) {
  const std::string t = render_csv_table("a,bb\n1,2\n");
  EXPECT_NE(t.find("a"), std::string::npos);
  EXPECT_NE(t.find("bb"), std::string::npos);
}
