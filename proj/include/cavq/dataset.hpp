#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cavq/rng.hpp"

namespace cavq {

enum class Split { Train, Dev, Test };

std::string to_string(Split split);
Split parse_split(const std::string& name);

/// One training example: precomputed encoder outputs plus labels.
struct SampleRecord {
  std::string id;
  std::vector<double> image_embed;
  std::vector<double> question_embed;
  std::vector<std::vector<double>> paraphrase_pool;
  std::uint32_t answer_id = 0;
  /// Reference answer; tab-separated alternatives form a reference set.
  std::string answer_text;
};

struct DatasetHeader {
  std::size_t d_img = 768;
  std::size_t d_text = 1024;
  std::size_t num_classes = 0;
  std::vector<std::string> answer_vocab;
  Split split = Split::Train;
  std::size_t train_size = 0;
  std::size_t dev_size = 0;
  std::size_t test_size = 0;

  /// Throws ValidationError when the vocabulary is not C distinct strings.
  void validate() const;
};

struct Dataset {
  DatasetHeader header;
  std::vector<SampleRecord> records;
};

struct DatasetSplits {
  DatasetHeader header;
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> dev;
  std::vector<SampleRecord> test;

  const std::vector<SampleRecord>& split(Split s) const;
};

/// Parameters of the clustered synthetic generator.
///
/// Noise scales are per-vector: a noise vector of scale s has expected
/// squared norm s^2, so scales compare directly with `separation`, which is
/// the minimum Euclidean distance between question-cluster centroids.
struct SyntheticSpec {
  std::size_t num_classes = 20;
  std::size_t samples_per_class = 100;
  std::size_t d_img = 768;
  std::size_t d_text = 1024;
  std::size_t pool_size = 10;
  double paraphrase_noise = 0.1;
  double separation = 1.0;
  double question_noise = 0.5;
  double label_image_correlation = 0.5;

  /// Throws ValidationError naming the first violated invariant.
  void validate() const;
};

/// Validates every record against the header dimensions.
void validate_records(const DatasetHeader& header, std::span<const SampleRecord> records);

// File format: a directory holding header.json plus train.bin, dev.bin and
// test.bin. Each .bin starts with "CAVQ" and a u16 version, followed by
// little-endian records until end of file.
inline constexpr std::uint16_t kDatasetFormatVersion = 1;

void save_header(const std::filesystem::path& path, const DatasetHeader& header);
DatasetHeader load_header(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_records(std::span<const SampleRecord> records);
/// Parses a record file. The layout carries no dimensions, so they come from
/// the header. Vectors are stored as f32 and widened on load.
std::vector<SampleRecord> decode_records(std::span<const std::uint8_t> bytes, std::size_t d_img,
                                         std::size_t d_text);

void save_records(const std::filesystem::path& path, std::span<const SampleRecord> records);

/// Writes header.json and the three split files into `dir`.
void save_dataset(const std::filesystem::path& dir, const DatasetSplits& splits);
/// Loads one split from a dataset directory and validates it.
Dataset load_dataset(const std::filesystem::path& dir, Split split);
DatasetSplits load_all_splits(const std::filesystem::path& dir);

/// Deterministic in (spec, seed). Every stored value is f32-representable so
/// that a save/load round trip is exact.
DatasetSplits generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Record indices grouped into batches; a deterministic permutation of
/// (shuffle_seed, epoch). The final batch may be short.
std::vector<std::vector<std::size_t>> batch_iter(std::size_t record_count, std::size_t batch_size,
                                                 std::uint64_t epoch, std::uint64_t shuffle_seed);

/// n distinct pool indices, uniform without replacement. n == 0 leaves the
/// stream untouched.
std::vector<std::size_t> sample_paraphrase_indices(std::size_t pool_size, std::size_t n, Rng& rng);

/// Views of n paraphrase vectors drawn from the record's pool.
std::vector<std::span<const double>> sample_paraphrases(const SampleRecord& record, std::size_t n,
                                                        Rng& rng);

}  // namespace cavq
