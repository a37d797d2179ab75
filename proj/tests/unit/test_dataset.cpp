#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "cavq/autodiff.hpp"
#include "cavq/binary_io.hpp"
#include "cavq/dataset.hpp"
#include "cavq/errors.hpp"
#include "helpers.hpp"

using namespace cavq;
using testutil::TempDir;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.num_classes = 5;
  s.samples_per_class = 20;
  s.d_img = 8;
  s.d_text = 6;
  s.pool_size = 4;
  return s;
}

bool same_records(const std::vector<SampleRecord>& a, const std::vector<SampleRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].id != b[i].id || a[i].answer_id != b[i].answer_id || a[i].answer_text != b[i].answer_text ||
        a[i].image_embed != b[i].image_embed || a[i].question_embed != b[i].question_embed ||
        a[i].paraphrase_pool != b[i].paraphrase_pool) {
      return false;
    }
  }
  return true;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

// Softmax regression on image embeddings alone, fitted by full-batch
// gradient descent; returns held-out accuracy.
double image_probe_accuracy(const DatasetSplits& d) {
  const std::size_t dim = d.header.d_img, classes = d.header.num_classes;
  auto stack = [&](const std::vector<SampleRecord>& rs, std::vector<std::size_t>& labels) {
    Tensor x(rs.size(), dim);
    for (std::size_t i = 0; i < rs.size(); ++i) {
      std::copy(rs[i].image_embed.begin(), rs[i].image_embed.end(), x.data().begin() + static_cast<long>(i * dim));
      labels.push_back(rs[i].answer_id);
    }
    return x;
  };
  std::vector<std::size_t> train_labels, test_labels;
  const Tensor x = stack(d.train, train_labels), xt = stack(d.test, test_labels);
  Tensor w(dim, classes);
  for (int it = 0; it < 300; ++it) {
    Tape tape;
    const Var wv = tape.watch(w, true);
    tape.backward(tape.softmax_cross_entropy(tape.matmul(tape.constant(x), wv), train_labels));
    const Tensor& g = tape.grad(wv);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= 0.5 * g[i];
  }
  const Tensor logits = kernels::matmul(xt, w);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < xt.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (logits(r, c) > logits(r, best)) best = c;
    }
    correct += best == test_labels[r];
  }
  return static_cast<double>(correct) / static_cast<double>(xt.rows());
}

}  // namespace

TEST_CASE("save then load reproduces identical records") {
  TempDir dir;
  const DatasetSplits d = generate_synthetic(small_spec(), 42);
  save_dataset(dir.path(), d);
  const DatasetSplits back = load_all_splits(dir.path());
  CHECK(same_records(d.train, back.train));
  CHECK(same_records(d.dev, back.dev));
  CHECK(same_records(d.test, back.test));
  CHECK(back.header.answer_vocab == d.header.answer_vocab);
  CHECK(back.header.d_img == 8);
  CHECK(back.header.d_text == 6);
  CHECK(back.header.train_size == d.train.size());
}

TEST_CASE("arbitrary values round-trip through f32 storage bit-exactly") {
  DatasetHeader h;
  h.d_img = 2;
  h.d_text = 3;
  h.num_classes = 2;
  h.answer_vocab = {"yes", "no"};
  SampleRecord r;
  r.id = "q\xc3\xa9";
  r.image_embed = {1.5f, -0.1f};
  r.question_embed = {3.4028234663852886e38, -0x1p-149, 0.0};
  r.paraphrase_pool = {{1, 2, 3}, {-4, 5.25, 6e-10f}};
  r.answer_id = 1;
  r.answer_text = "no\tnope";
  const std::vector<SampleRecord> records{r, SampleRecord{"empty-pool", {0, 0}, {1, 1, 1}, {}, 0, "yes"}};
  const auto decoded = decode_records(encode_records(records), 2, 3);
  CHECK(same_records(records, decoded));
}

TEST_CASE("empty record list is a valid dataset") {
  TempDir dir;
  DatasetSplits d;
  d.header.d_img = 4;
  d.header.d_text = 4;
  d.header.num_classes = 2;
  d.header.answer_vocab = {"a", "b"};
  save_dataset(dir.path(), d);
  const Dataset ds = load_dataset(dir.path(), Split::Dev);
  CHECK(ds.records.empty());
}

TEST_CASE("records with wrong lengths are rejected by name") {
  TempDir dir;
  DatasetSplits d = generate_synthetic(small_spec(), 1);
  d.train[3].question_embed.pop_back();
  const std::string msg = error_of([&] { validate_records(d.header, d.train); });
  CHECK(msg.find("record 3") != std::string::npos);
  CHECK(msg.find("question_embed") != std::string::npos);
  CHECK(msg.find("d_text = 6") != std::string::npos);
  CHECK_THROWS_AS(save_dataset(dir.path(), d), ValidationError);

  d = generate_synthetic(small_spec(), 1);
  d.test[1].paraphrase_pool[2].push_back(0.0);
  CHECK(error_of([&] { validate_records(d.header, d.test); }).find("paraphrase_pool[2]") != std::string::npos);
}

TEST_CASE("loader rejects malformed files") {
  TempDir dir;
  const DatasetSplits d = generate_synthetic(small_spec(), 1);
  save_dataset(dir.path(), d);
  const DatasetHeader& h = d.header;

  const auto bytes = encode_records(d.dev);
  const std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 5);
  const std::string parse = error_of([&] { decode_records(cut, h.d_img, h.d_text); });
  CHECK(parse.find("record " + std::to_string(d.dev.size() - 1)) != std::string::npos);
  CHECK_THROWS_AS(decode_records(cut, h.d_img, h.d_text), ParseError);
  io::write_file_atomic(dir / "dev.bin", std::string(cut.begin(), cut.end()));
  CHECK_THROWS_AS(load_dataset(dir.path(), Split::Dev), ParseError);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_records(bad_magic, h.d_img, h.d_text), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_AS(decode_records(bad_version, h.d_img, h.d_text), FormatError);

  // A label outside the header's class range is caught on load.
  std::vector<SampleRecord> relabeled = d.test;
  relabeled[0].answer_id = 5;
  save_records(dir / "test.bin", relabeled);
  const std::string label = error_of([&] { load_dataset(dir.path(), Split::Test); });
  CHECK(label.find("record 0") != std::string::npos);
  CHECK(label.find("answer_id") != std::string::npos);
}

TEST_CASE("header vocabulary must be C distinct strings") {
  DatasetHeader h;
  h.num_classes = 2;
  h.answer_vocab = {"a", "a"};
  CHECK_THROWS_AS(h.validate(), ValidationError);
  h.answer_vocab = {"a"};
  CHECK_THROWS_AS(h.validate(), ValidationError);
  h.answer_vocab = {"a", "b"};
  CHECK_NOTHROW(h.validate());
}

TEST_CASE("synthetic spec invariants") {
  SyntheticSpec s = small_spec();
  s.paraphrase_noise = s.separation;
  const std::string msg = error_of([&] { s.validate(); });
  CHECK(msg.find("paraphrase_noise") != std::string::npos);
  CHECK(msg.find("separation") != std::string::npos);
  s = small_spec();
  s.label_image_correlation = 1.5;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = small_spec();
  s.num_classes = 1;
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("unsatisfiable separation is a generation error") {
  SyntheticSpec s = small_spec();
  s.d_text = 1;
  s.num_classes = 60;
  CHECK_THROWS_AS(generate_synthetic(s, 3), GenerationError);
}

TEST_CASE("generated splits are disjoint, stratified and complete") {
  const SyntheticSpec spec = small_spec();
  const DatasetSplits d = generate_synthetic(spec, 9);
  CHECK(d.train.size() == 80);
  CHECK(d.dev.size() == 10);
  CHECK(d.test.size() == 10);
  std::set<std::string> ids;
  for (const auto* split : {&d.train, &d.dev, &d.test}) {
    for (const auto& r : *split) {
      ids.insert(r.id);
      CHECK(r.paraphrase_pool.size() == spec.pool_size);
      CHECK(r.answer_text == d.header.answer_vocab[r.answer_id]);
    }
  }
  CHECK(ids.size() == 100);
  std::vector<int> per_class(spec.num_classes, 0);
  for (const auto& r : d.dev) ++per_class[r.answer_id];
  for (int n : per_class) CHECK(n == 2);
}

TEST_CASE("class centroids respect the separation") {
  SyntheticSpec spec = small_spec();
  spec.d_text = 32;
  spec.question_noise = 0.05;
  spec.samples_per_class = 50;
  const DatasetSplits d = generate_synthetic(spec, 5);
  std::vector<std::vector<double>> mean(spec.num_classes, std::vector<double>(spec.d_text, 0.0));
  std::vector<int> count(spec.num_classes, 0);
  for (const auto* split : {&d.train, &d.dev, &d.test}) {
    for (const auto& r : *split) {
      for (std::size_t k = 0; k < spec.d_text; ++k) mean[r.answer_id][k] += r.question_embed[k];
      ++count[r.answer_id];
    }
  }
  for (std::size_t c = 0; c < spec.num_classes; ++c)
    for (double& v : mean[c]) v /= count[c];
  // Class means are within about noise / sqrt(50) of the centroids.
  for (std::size_t a = 0; a < spec.num_classes; ++a) {
    for (std::size_t b = a + 1; b < spec.num_classes; ++b) {
      double s = 0.0;
      for (std::size_t k = 0; k < spec.d_text; ++k) s += (mean[a][k] - mean[b][k]) * (mean[a][k] - mean[b][k]);
      CHECK(std::sqrt(s) >= spec.separation - 0.05);
    }
  }
}

TEST_CASE("zero paraphrase noise copies the question embedding") {
  SyntheticSpec spec = small_spec();
  spec.paraphrase_noise = 0.0;
  const DatasetSplits d = generate_synthetic(spec, 2);
  for (const auto& r : d.train)
    for (const auto& p : r.paraphrase_pool) CHECK(p == r.question_embed);
}

TEST_CASE("paraphrases stay near their question") {
  SyntheticSpec spec = small_spec();
  spec.d_text = 256;
  const DatasetSplits d = generate_synthetic(spec, 2);
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& r : d.train) {
    for (const auto& p : r.paraphrase_pool) {
      double s = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) s += (p[k] - r.question_embed[k]) * (p[k] - r.question_embed[k]);
      total += s;
      ++n;
    }
  }
  // Mean squared distance equals paraphrase_noise^2 in expectation.
  CHECK(std::abs(total / n - spec.paraphrase_noise * spec.paraphrase_noise) < 0.002);
}

TEST_CASE("uncorrelated images leave an image-only probe at chance") {
  SyntheticSpec spec;
  spec.num_classes = 20;
  spec.samples_per_class = 100;
  spec.d_img = 32;
  spec.d_text = 8;
  spec.pool_size = 1;
  spec.label_image_correlation = 0.0;
  const double chance = 1.0 / 20.0;
  CHECK(std::abs(image_probe_accuracy(generate_synthetic(spec, 77)) - chance) <= 0.05);

  spec.label_image_correlation = 0.5;
  CHECK(image_probe_accuracy(generate_synthetic(spec, 77)) > 0.5);
}

TEST_CASE("generation is deterministic in (spec, seed)") {
  const DatasetSplits a = generate_synthetic(small_spec(), 123);
  const DatasetSplits b = generate_synthetic(small_spec(), 123);
  const DatasetSplits c = generate_synthetic(small_spec(), 124);
  CHECK(encode_records(a.train) == encode_records(b.train));
  CHECK(encode_records(a.test) == encode_records(b.test));
  CHECK(encode_records(a.train) != encode_records(c.train));
}

TEST_CASE("batch_iter shapes") {
  auto b = batch_iter(10, 16, 0, 1);
  REQUIRE(b.size() == 1);
  CHECK(b[0].size() == 10);

  b = batch_iter(32, 16, 3, 1);
  REQUIRE(b.size() == 2);
  CHECK(b[0].size() == 16);
  CHECK(b[1].size() == 16);
  std::set<std::size_t> all(b[0].begin(), b[0].end());
  all.insert(b[1].begin(), b[1].end());
  CHECK(all.size() == 32);

  b = batch_iter(33, 16, 0, 1);
  CHECK(b.size() == 3);
  CHECK(b[2].size() == 1);
  CHECK(batch_iter(0, 4, 0, 1).empty());
  CHECK_THROWS_AS(batch_iter(4, 0, 0, 1), ContractError);
}

TEST_CASE("batch_iter is deterministic per (seed, epoch)") {
  CHECK(batch_iter(50, 7, 4, 99) == batch_iter(50, 7, 4, 99));
  CHECK(batch_iter(50, 7, 4, 99) != batch_iter(50, 7, 5, 99));
  CHECK(batch_iter(50, 7, 4, 99) != batch_iter(50, 7, 4, 98));
}

TEST_CASE("batch_iter first positions are uniform (chi-squared)") {
  const std::size_t records = 10, epochs = 10000;
  std::vector<double> counts(records, 0.0);
  for (std::size_t e = 0; e < epochs; ++e) counts[batch_iter(records, 4, e, 2024)[0][0]] += 1.0;
  const double expected = static_cast<double>(epochs) / records;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // Upper 0.001 quantile of chi-squared with 9 degrees of freedom.
  CHECK(chi2 < 27.877);
}

TEST_CASE("sample_paraphrases edge cases") {
  SampleRecord r;
  r.paraphrase_pool = {{1.0}, {2.0}, {3.0}, {4.0}};
  Rng rng(5);
  CHECK(sample_paraphrases(r, 0, rng).empty());
  CHECK(rng.draws() == 0);

  auto all = sample_paraphrase_indices(4, 4, rng);
  std::sort(all.begin(), all.end());
  CHECK(all == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK_THROWS_AS(sample_paraphrases(r, 5, rng), PoolExhaustedError);

  const auto two = sample_paraphrases(r, 2, rng);
  REQUIRE(two.size() == 2);
  CHECK(two[0][0] != two[1][0]);

  Rng a(8), b(8);
  CHECK(sample_paraphrase_indices(10, 3, a) == sample_paraphrase_indices(10, 3, b));
  CHECK(a.draws() == b.draws());
}

TEST_CASE("paraphrase selection frequency is uniform") {
  Rng rng(31337);
  const std::size_t draws = 100000;
  std::vector<double> hits(10, 0.0);
  for (std::size_t i = 0; i < draws; ++i) {
    const auto idx = sample_paraphrase_indices(10, 2, rng);
    CHECK_MESSAGE(idx[0] != idx[1], "drawn with replacement");
    for (std::size_t k : idx) hits[k] += 1.0;
  }
  for (double h : hits) CHECK(std::abs(h / draws - 0.2) <= 0.01);
}
