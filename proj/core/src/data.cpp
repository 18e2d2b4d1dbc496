#include "chexfuse/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "chexfuse/errors.hpp"
#include "chexfuse/image.hpp"
#include "chexfuse/rng.hpp"

namespace chexfuse {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

int parse_int(const std::string& s, const char* what, int row) {
  const std::string t = trim(s);
  if (t.empty()) {
    throw ValidationError("row " + std::to_string(row) + ": empty " + what);
  }
  std::size_t pos = 0;
  int value = 0;
  try {
    value = std::stoi(t, &pos);
  } catch (const std::exception&) {
    throw ValidationError("row " + std::to_string(row) + ": unparseable " +
                          what + " '" + t + "'");
  }
  if (pos != t.size()) {
    throw ValidationError("row " + std::to_string(row) + ": unparseable " +
                          what + " '" + t + "'");
  }
  return value;
}

}  // namespace

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(field);
  return fields;
}

std::vector<ManifestRecord> parse_manifest(const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line)) {
    throw ValidationError("manifest: empty input, header row required");
  }

  const std::vector<std::string> header = split_csv_row(line);
  const std::array<std::string, 7> required = {
      "Image Index",  "Finding Labels",  "Follow-up #",  "Patient ID",
      "Patient Age",  "Patient Gender",  "View Position"};
  std::map<std::string, std::size_t> columns;
  for (std::size_t i = 0; i < header.size(); ++i) columns[trim(header[i])] = i;
  std::array<std::size_t, 7> idx{};
  for (std::size_t c = 0; c < required.size(); ++c) {
    const auto it = columns.find(required[c]);
    if (it == columns.end()) {
      throw ValidationError("manifest: missing column '" + required[c] + "'");
    }
    idx[c] = it->second;
  }

  std::vector<ManifestRecord> records;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split_csv_row(line);
    if (fields.size() < header.size()) {
      throw ValidationError("row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
    }
    ManifestRecord rec;
    rec.image_index = trim(fields[idx[0]]);
    rec.finding_labels = trim(fields[idx[1]]);
    rec.follow_up = parse_int(fields[idx[2]], "follow-up", row);
    if (rec.follow_up < 0) {
      throw ValidationError("row " + std::to_string(row) +
                            ": negative follow-up");
    }
    rec.patient_id = trim(fields[idx[3]]);
    if (rec.patient_id.empty()) {
      throw ValidationError("row " + std::to_string(row) + ": empty patient id");
    }
    rec.age_years = parse_int(fields[idx[4]], "age", row);
    if (rec.age_years < 0 || rec.age_years > 120) {
      throw ValidationError("row " + std::to_string(row) + ": age " +
                            std::to_string(rec.age_years) +
                            " outside [0,120]");
    }
    const std::string gender = trim(fields[idx[5]]);
    if (gender == "M") {
      rec.gender = Gender::kM;
    } else if (gender == "F") {
      rec.gender = Gender::kF;
    } else {
      throw ValidationError("row " + std::to_string(row) +
                            ": unknown gender '" + gender + "'");
    }
    const std::string view = trim(fields[idx[6]]);
    if (view == "PA") {
      rec.view = ViewPosition::kPA;
    } else if (view == "AP") {
      rec.view = ViewPosition::kAP;
    } else {
      throw ValidationError("row " + std::to_string(row) + ": unknown view '" +
                            view + "'");
    }
    // Label tokens are validated here so bad rows are reported with their
    // row number rather than deep inside encoding.
    try {
      encode_labels(rec.finding_labels);
    } catch (const ValidationError& e) {
      throw ValidationError("row " + std::to_string(row) + ": " + e.what());
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<ManifestRecord> parse_manifest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str());
}

LabelVector encode_labels(const std::string& finding_labels) {
  LabelVector labels{};
  std::vector<std::string> tokens;
  std::string token;
  std::istringstream in(finding_labels);
  while (std::getline(in, token, '|')) {
    const auto begin = token.find_first_not_of(" \t");
    const auto end = token.find_last_not_of(" \t");
    if (begin == std::string::npos) continue;
    tokens.push_back(token.substr(begin, end - begin + 1));
  }
  if (tokens.empty()) throw ValidationError("empty finding labels");
  for (const auto& t : tokens) {
    if (t == "No Finding") {
      if (tokens.size() > 1) {
        throw ValidationError("'No Finding' mixed with other findings");
      }
      return labels;
    }
    const int index = pathology_index(t);
    if (index < 0) throw ValidationError("unknown pathology '" + t + "'");
    labels[static_cast<std::size_t>(index)] = 1.0f;
  }
  return labels;
}

std::string decode_labels(const LabelVector& labels) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0.0f) {
      if (!out.empty()) out += "|";
      out += std::string(kPathologies[i]);
    }
  }
  return out.empty() ? "No Finding" : out;
}

MetadataVector encode_metadata(const ManifestRecord& record) {
  MetadataVector meta{};
  meta[0] = static_cast<float>(record.age_years / 100.0);
  meta[1] = record.gender == Gender::kM ? 1.0f : 0.0f;
  meta[2] = record.gender == Gender::kF ? 1.0f : 0.0f;
  meta[3] = record.view == ViewPosition::kPA ? 1.0f : 0.0f;
  meta[4] = record.view == ViewPosition::kAP ? 1.0f : 0.0f;
  meta[5] = static_cast<float>(std::log1p(static_cast<double>(record.follow_up)) /
                               std::log(101.0));
  return meta;
}

DatasetSplit split_dataset(const std::vector<ManifestRecord>& records,
                           const std::array<double, 3>& ratios,
                           std::uint64_t seed) {
  for (const double r : ratios) {
    if (r < 0.0) throw SplitError("split ratios must be nonnegative");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw SplitError("split ratios must sum to 1");
  }

  // Distinct patients in first-appearance order, then a seeded shuffle.
  std::vector<std::string> patients;
  std::map<std::string, std::vector<std::size_t>> by_patient;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, inserted] = by_patient.try_emplace(records[i].patient_id);
    if (inserted) patients.push_back(records[i].patient_id);
    it->second.push_back(i);
  }
  if (patients.size() < 3) {
    throw SplitError("need at least 3 distinct patients, got " +
                     std::to_string(patients.size()));
  }
  Rng rng = make_rng(seed, 0x73706c69ULL);
  shuffle(patients, rng);

  const double total = static_cast<double>(records.size());
  const double train_target = ratios[0] * total;
  const double val_target = ratios[1] * total;

  DatasetSplit split;
  split.seed = seed;
  double train_count = 0, val_count = 0;
  for (const auto& patient : patients) {
    const auto& indices = by_patient[patient];
    const double size = static_cast<double>(indices.size());
    // Nearest-boundary fill: a patient joins a split while adding it brings
    // the count no further past the quota than stopping short would.
    std::vector<std::size_t>* dest;
    if (train_count < train_target &&
        (train_count + size) - train_target <= train_target - train_count) {
      dest = &split.train;
      train_count += size;
    } else if (val_count < val_target &&
               (val_count + size) - val_target <= val_target - val_count) {
      dest = &split.val;
      val_count += size;
    } else {
      dest = &split.test;
    }
    dest->insert(dest->end(), indices.begin(), indices.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::vector<Batch> make_batches(const std::vector<Sample>& samples,
                                int batch_size, std::uint64_t seed, int epoch,
                                bool augment) {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  std::vector<Batch> batches;
  if (samples.empty()) return batches;

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = make_rng(seed, 0x62617463ULL + static_cast<std::uint64_t>(epoch));
  shuffle(order, rng);
  std::vector<bool> flip(order.size(), false);
  if (augment) {
    for (std::size_t i = 0; i < order.size(); ++i)
      flip[i] = uniform_real(rng) < 0.5;
  }

  const int channels = samples[0].image.dim(0);
  const int size_h = samples[0].image.dim(1);
  const int size_w = samples[0].image.dim(2);
  const std::size_t image_len = samples[0].image.numel();

  std::size_t pos = 0;
  while (pos < order.size()) {
    const int n = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(batch_size),
                              order.size() - pos));
    Batch batch{Tensor({n, channels, size_h, size_w}), Tensor({n, 6}),
                Tensor({n, 14})};
    for (int b = 0; b < n; ++b) {
      const std::size_t src = order[pos + b];
      const Sample& sample = samples[src];
      if (sample.image.numel() != image_len) {
        throw ShapeError("make_batches: inconsistent image shapes");
      }
      const Tensor image = flip[pos + b] ? horizontal_flip(sample.image)
                                         : sample.image;
      std::copy(image.data(), image.data() + image_len,
                batch.images.data() + static_cast<std::size_t>(b) * image_len);
      for (int j = 0; j < 6; ++j)
        batch.meta.at2(b, j) = sample.meta[static_cast<std::size_t>(j)];
      for (int j = 0; j < 14; ++j)
        batch.labels.at2(b, j) = sample.labels[static_cast<std::size_t>(j)];
    }
    batches.push_back(std::move(batch));
    pos += static_cast<std::size_t>(n);
  }
  return batches;
}

}  // namespace chexfuse
