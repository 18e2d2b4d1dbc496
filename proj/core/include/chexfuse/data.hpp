#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "chexfuse/pathology.hpp"
#include "chexfuse/tensor.hpp"

// Manifest ingestion and batching for ChestX-ray14-style datasets: CSV rows
// in, encoded (image, metadata, label) samples out, with deterministic
// patient-disjoint splits.

namespace chexfuse {

enum class Gender { kM, kF };
enum class ViewPosition { kPA, kAP };

struct ManifestRecord {
  std::string image_index;    // file name, resolved against the images dir
  std::string finding_labels; // "|"-separated pathology names or "No Finding"
  int follow_up = 0;
  std::string patient_id;
  int age_years = 0;
  Gender gender = Gender::kM;
  ViewPosition view = ViewPosition::kPA;
};

/// Multi-hot over the canonical pathology order; "No Finding" is all zeros.
using LabelVector = std::array<float, 14>;

/// [age/100, is_M, is_F, is_PA, is_AP, log(1+follow_up)/log(101)].
using MetadataVector = std::array<float, 6>;

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

struct Sample {
  Tensor image;  // [3, S, S], normalized
  MetadataVector meta{};
  LabelVector labels{};
};

struct Batch {
  Tensor images;  // [N, 3, S, S]
  Tensor meta;    // [N, 6]
  Tensor labels;  // [N, 14]
};

/// Parses a manifest CSV (header row required). Required columns: Image
/// Index, Finding Labels, Follow-up #, Patient ID, Patient Age, Patient
/// Gender, View Position; extras are ignored. Throws ValidationError with
/// the column name (schema) or the 1-based data row number (row errors).
std::vector<ManifestRecord> parse_manifest(const std::string& csv_text);

/// Reads a whole file and hands it to parse_manifest. Throws IoError.
std::vector<ManifestRecord> parse_manifest_file(const std::string& path);

LabelVector encode_labels(const std::string& finding_labels);

/// Renders a LabelVector back to sorted canonical names ("No Finding" for
/// all-zero); the inverse of encode_labels on canonical inputs.
std::string decode_labels(const LabelVector& labels);

MetadataVector encode_metadata(const ManifestRecord& record);

/// Seeded patient-disjoint split. Patients are shuffled, then filled into
/// train/val/test by record count; each split lands within half the largest
/// patient's share of its quota. Requires >= 3 distinct patients.
DatasetSplit split_dataset(const std::vector<ManifestRecord>& records,
                           const std::array<double, 3>& ratios,
                           std::uint64_t seed);

/// Seeded shuffle + fixed-size batching; the final partial batch is kept.
/// augment=true flips each image horizontally with probability 1/2. The
/// stream is a pure function of (samples, batch_size, seed, epoch, augment).
std::vector<Batch> make_batches(const std::vector<Sample>& samples,
                                int batch_size, std::uint64_t seed, int epoch,
                                bool augment);

/// CSV row split shared by the manifest parser and report round-trip tests.
std::vector<std::string> split_csv_row(const std::string& line);

}  // namespace chexfuse
