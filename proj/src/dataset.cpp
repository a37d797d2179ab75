#include "cavq/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "cavq/binary_io.hpp"
#include "cavq/errors.hpp"

namespace cavq {

using nlohmann::json;

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "dev") return Split::Dev;
  if (name == "test") return Split::Test;
  throw ValidationError("unknown split '" + name + "' (expected train, dev or test)");
}

void DatasetHeader::validate() const {
  if (d_img == 0 || d_text == 0) throw ValidationError("header: d_img and d_text must be positive");
  if (num_classes == 0) throw ValidationError("header: num_classes must be positive");
  if (answer_vocab.size() != num_classes) {
    throw ValidationError("header: answer_vocab has " + std::to_string(answer_vocab.size()) +
                          " entries, expected num_classes = " + std::to_string(num_classes));
  }
  std::set<std::string> unique(answer_vocab.begin(), answer_vocab.end());
  if (unique.size() != answer_vocab.size()) throw ValidationError("header: answer_vocab entries are not distinct");
}

const std::vector<SampleRecord>& DatasetSplits::split(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Dev: return dev;
    case Split::Test: return test;
  }
  return train;
}

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ValidationError("synthetic: num_classes must be at least 2");
  if (samples_per_class == 0) throw ValidationError("synthetic: samples_per_class must be positive");
  if (d_img == 0 || d_text == 0) throw ValidationError("synthetic: d_img and d_text must be positive");
  if (!(paraphrase_noise >= 0.0)) throw ValidationError("synthetic: paraphrase_noise must be nonnegative");
  if (!(question_noise >= 0.0)) throw ValidationError("synthetic: question_noise must be nonnegative");
  if (!(separation > 0.0)) throw ValidationError("synthetic: separation must be positive");
  if (!(paraphrase_noise < separation)) {
    throw ValidationError("synthetic: paraphrase_noise (" + std::to_string(paraphrase_noise) +
                          ") must be less than separation (" + std::to_string(separation) + ")");
  }
  if (!(label_image_correlation >= 0.0 && label_image_correlation <= 1.0)) {
    throw ValidationError("synthetic: label_image_correlation must lie in [0, 1]");
  }
}

void validate_records(const DatasetHeader& header, std::span<const SampleRecord> records) {
  auto fail = [](std::size_t i, const std::string& what) {
    throw ValidationError("record " + std::to_string(i) + ": " + what);
  };
  for (std::size_t i = 0; i < records.size(); ++i) {
    const SampleRecord& r = records[i];
    if (r.image_embed.size() != header.d_img) {
      fail(i, "image_embed has length " + std::to_string(r.image_embed.size()) + ", expected d_img = " +
                  std::to_string(header.d_img));
    }
    if (r.question_embed.size() != header.d_text) {
      fail(i, "question_embed has length " + std::to_string(r.question_embed.size()) +
                  ", expected d_text = " + std::to_string(header.d_text));
    }
    for (std::size_t p = 0; p < r.paraphrase_pool.size(); ++p) {
      if (r.paraphrase_pool[p].size() != header.d_text) {
        fail(i, "paraphrase_pool[" + std::to_string(p) + "] has length " +
                    std::to_string(r.paraphrase_pool[p].size()) + ", expected d_text = " +
                    std::to_string(header.d_text));
      }
    }
    if (r.answer_id >= header.num_classes) {
      fail(i, "answer_id " + std::to_string(r.answer_id) + " is not below num_classes = " +
                  std::to_string(header.num_classes));
    }
  }
}

void save_header(const std::filesystem::path& path, const DatasetHeader& header) {
  json j;
  j["format"] = "cavq-dataset";
  j["version"] = kDatasetFormatVersion;
  j["d_img"] = header.d_img;
  j["d_text"] = header.d_text;
  j["num_classes"] = header.num_classes;
  j["answer_vocab"] = header.answer_vocab;
  j["split_sizes"] = {{"train", header.train_size}, {"dev", header.dev_size}, {"test", header.test_size}};
  io::write_file_atomic(path, j.dump(2) + "\n");
}

DatasetHeader load_header(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset header " + path.string());
  DatasetHeader h;
  try {
    const json j = json::parse(in);
    h.d_img = j.at("d_img").get<std::size_t>();
    h.d_text = j.at("d_text").get<std::size_t>();
    h.num_classes = j.at("num_classes").get<std::size_t>();
    h.answer_vocab = j.at("answer_vocab").get<std::vector<std::string>>();
    if (j.contains("split_sizes")) {
      const json& s = j.at("split_sizes");
      h.train_size = s.value("train", std::size_t{0});
      h.dev_size = s.value("dev", std::size_t{0});
      h.test_size = s.value("test", std::size_t{0});
    }
  } catch (const json::exception& e) {
    throw ParseError("dataset header " + path.string() + ": " + e.what());
  }
  h.validate();
  return h;
}

std::vector<std::uint8_t> encode_records(std::span<const SampleRecord> records) {
  io::ByteWriter w;
  w.raw("CAVQ");
  w.u16(kDatasetFormatVersion);
  for (const SampleRecord& r : records) {
    w.str(r.id);
    w.u32(r.answer_id);
    w.str(r.answer_text);
    w.f32_array(r.image_embed);
    w.f32_array(r.question_embed);
    w.u32(static_cast<std::uint32_t>(r.paraphrase_pool.size()));
    for (const auto& p : r.paraphrase_pool) w.f32_array(p);
  }
  return std::move(w.bytes());
}

std::vector<SampleRecord> decode_records(std::span<const std::uint8_t> bytes, std::size_t d_img,
                                         std::size_t d_text) {
  io::ByteReader rd(bytes);
  try {
    if (rd.raw(4) != "CAVQ") throw FormatError("record file: bad magic bytes");
    const std::uint16_t version = rd.u16();
    if (version != kDatasetFormatVersion) {
      throw FormatError("record file: unsupported version " + std::to_string(version));
    }
  } catch (const IntegrityError&) {
    throw FormatError("record file: too short for magic and version");
  }

  std::vector<SampleRecord> out;
  while (!rd.at_end()) {
    const std::size_t index = out.size();
    try {
      SampleRecord r;
      r.id = rd.str();
      r.answer_id = rd.u32();
      r.answer_text = rd.str();
      r.image_embed.resize(d_img);
      rd.f32_array(r.image_embed);
      r.question_embed.resize(d_text);
      rd.f32_array(r.question_embed);
      const std::uint32_t pool = rd.u32();
      if (static_cast<std::size_t>(pool) * d_text * 4 > rd.remaining()) {
        throw IntegrityError("paraphrase pool of " + std::to_string(pool) + " vectors exceeds remaining bytes");
      }
      r.paraphrase_pool.assign(pool, std::vector<double>(d_text));
      for (auto& p : r.paraphrase_pool) rd.f32_array(p);
      out.push_back(std::move(r));
    } catch (const IntegrityError& e) {
      throw ParseError("record " + std::to_string(index) + ": " + e.what());
    }
  }
  return out;
}

void save_records(const std::filesystem::path& path, std::span<const SampleRecord> records) {
  io::write_file_atomic(path, encode_records(records));
}

void save_dataset(const std::filesystem::path& dir, const DatasetSplits& splits) {
  std::filesystem::create_directories(dir);
  DatasetHeader h = splits.header;
  h.train_size = splits.train.size();
  h.dev_size = splits.dev.size();
  h.test_size = splits.test.size();
  h.validate();
  validate_records(h, splits.train);
  validate_records(h, splits.dev);
  validate_records(h, splits.test);
  save_header(dir / "header.json", h);
  save_records(dir / "train.bin", splits.train);
  save_records(dir / "dev.bin", splits.dev);
  save_records(dir / "test.bin", splits.test);
}

Dataset load_dataset(const std::filesystem::path& dir, Split split) {
  Dataset ds;
  ds.header = load_header(dir / "header.json");
  ds.header.split = split;
  const auto bytes = io::read_file(dir / (to_string(split) + ".bin"));
  ds.records = decode_records(bytes, ds.header.d_img, ds.header.d_text);
  validate_records(ds.header, ds.records);
  return ds;
}

DatasetSplits load_all_splits(const std::filesystem::path& dir) {
  DatasetSplits s;
  s.train = load_dataset(dir, Split::Train).records;
  s.dev = load_dataset(dir, Split::Dev).records;
  Dataset test = load_dataset(dir, Split::Test);
  s.test = std::move(test.records);
  s.header = std::move(test.header);
  s.header.split = Split::Train;
  return s;
}

namespace {

std::vector<std::string> make_vocab(std::size_t classes) {
  static const char* kColors[] = {"red",   "blue",  "green", "yellow", "black", "white",
                                  "brown", "pink",  "gray",  "orange", "purple", "silver"};
  static const char* kObjects[] = {"cat",  "dog",   "car",   "tree",  "house", "boat",
                                   "bird", "chair", "table", "phone", "horse", "bicycle"};
  std::vector<std::string> vocab;
  vocab.reserve(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    std::string word = std::string(kColors[c % 12]) + " " + kObjects[(c / 12) % 12];
    if (c >= 144) word += " " + std::to_string(c / 144);
    vocab.push_back(std::move(word));
  }
  return vocab;
}

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

// Gaussian vector whose expected squared norm is scale^2.
std::vector<double> gaussian_vector(Rng& rng, std::size_t dim, double scale) {
  const double per_coord = scale / std::sqrt(static_cast<double>(dim));
  std::vector<double> v(dim);
  for (double& x : v) x = per_coord * rng.normal();
  return v;
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

DatasetSplits generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  constexpr int kMaxRetries = 1000;
  // Centroid spread well above the separation so the constraint binds rarely.
  const double centroid_scale = 2.0 * spec.separation;

  Rng centroid_rng(derive_seed(seed, 1));
  std::vector<std::vector<double>> centroids;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxRetries && !placed; ++attempt) {
      auto mu = gaussian_vector(centroid_rng, spec.d_text, centroid_scale);
      for (double& x : mu) x = round_f32(x);
      placed = std::all_of(centroids.begin(), centroids.end(),
                           [&](const auto& other) { return distance(mu, other) >= spec.separation; });
      if (placed) centroids.push_back(std::move(mu));
    }
    if (!placed) {
      throw GenerationError("synthetic: could not place centroid " + std::to_string(c) + " at separation " +
                            std::to_string(spec.separation) + " after " + std::to_string(kMaxRetries) +
                            " attempts");
    }
  }

  Rng image_rng(derive_seed(seed, 2));
  std::vector<std::vector<double>> image_centroids(spec.num_classes, std::vector<double>(spec.d_img));
  for (auto& nu : image_centroids)
    for (double& x : nu) x = image_rng.normal();

  DatasetSplits out;
  out.header.d_img = spec.d_img;
  out.header.d_text = spec.d_text;
  out.header.num_classes = spec.num_classes;
  out.header.answer_vocab = make_vocab(spec.num_classes);

  Rng sample_rng(derive_seed(seed, 3));
  Rng split_rng(derive_seed(seed, 4));
  const double rho = spec.label_image_correlation;
  const double image_noise = std::sqrt(1.0 - rho * rho);
  const std::size_t n = spec.samples_per_class;
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_dev = n / 10;

  std::size_t next_id = 0;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    std::vector<SampleRecord> cls;
    cls.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      SampleRecord r;
      r.id = "s" + std::to_string(next_id++);
      r.answer_id = static_cast<std::uint32_t>(c);
      r.answer_text = out.header.answer_vocab[c];
      r.image_embed.resize(spec.d_img);
      for (std::size_t k = 0; k < spec.d_img; ++k) {
        r.image_embed[k] = round_f32(rho * image_centroids[c][k] + image_noise * sample_rng.normal());
      }
      auto qn = gaussian_vector(sample_rng, spec.d_text, spec.question_noise);
      r.question_embed.resize(spec.d_text);
      for (std::size_t k = 0; k < spec.d_text; ++k) r.question_embed[k] = round_f32(centroids[c][k] + qn[k]);
      r.paraphrase_pool.reserve(spec.pool_size);
      for (std::size_t p = 0; p < spec.pool_size; ++p) {
        auto pn = gaussian_vector(sample_rng, spec.d_text, spec.paraphrase_noise);
        std::vector<double> para(spec.d_text);
        for (std::size_t k = 0; k < spec.d_text; ++k) para[k] = round_f32(r.question_embed[k] + pn[k]);
        r.paraphrase_pool.push_back(std::move(para));
      }
      cls.push_back(std::move(r));
    }
    // Stratified 80/10/10 split within each class.
    for (std::size_t i = cls.size(); i > 1; --i) std::swap(cls[i - 1], cls[split_rng.below(i)]);
    for (std::size_t i = 0; i < cls.size(); ++i) {
      auto& dst = i < n_train ? out.train : (i < n_train + n_dev ? out.dev : out.test);
      dst.push_back(std::move(cls[i]));
    }
  }
  out.header.train_size = out.train.size();
  out.header.dev_size = out.dev.size();
  out.header.test_size = out.test.size();
  return out;
}

std::vector<std::vector<std::size_t>> batch_iter(std::size_t record_count, std::size_t batch_size,
                                                 std::uint64_t epoch, std::uint64_t shuffle_seed) {
  if (batch_size == 0) throw ContractError("batch_iter: batch_size must be at least 1");
  std::vector<std::size_t> order(record_count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(shuffle_seed, epoch));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<std::size_t> sample_paraphrase_indices(std::size_t pool_size, std::size_t n, Rng& rng) {
  if (n > pool_size) {
    throw PoolExhaustedError("requested " + std::to_string(n) + " paraphrases from a pool of " +
                             std::to_string(pool_size));
  }
  if (n == 0) return {};
  std::vector<std::size_t> idx(pool_size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.below(pool_size - i)]);
  idx.resize(n);
  return idx;
}

std::vector<std::span<const double>> sample_paraphrases(const SampleRecord& record, std::size_t n, Rng& rng) {
  const auto idx = sample_paraphrase_indices(record.paraphrase_pool.size(), n, rng);
  std::vector<std::span<const double>> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.emplace_back(record.paraphrase_pool[i]);
  return out;
}

}  // namespace cavq
