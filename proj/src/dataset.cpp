#include "bae/dataset.hpp"

#include "bae/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numbers>
#include <set>
#include <thread>

namespace bae::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kLabelTolerance = 1e-9;

bool same_label(double a, double b) { return std::abs(a - b) <= kLabelTolerance; }

void check_rate(int rate, const std::string& where) {
  if (rate < 1) throw ConfigError(where + ": sampling rate must be a positive integer, got " + std::to_string(rate));
}

/// Parses a whitespace/tab separated numeric table. Every row must have
/// `expected_cols` values when that is positive.
std::vector<std::vector<double>> parse_table(const fs::path& path, Index expected_cols) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const PersistenceError&) {
    throw IngestionError("missing or unreadable file " + path.string());
  }
  std::vector<std::vector<double>> rows;
  std::size_t pos = 0;
  Index line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    const auto fields = io::split_ws(line);
    if (fields.empty()) continue;
    std::vector<double> row;
    row.reserve(fields.size());
    for (auto f : fields) {
      const auto v = io::parse_double(f);
      if (!v || !std::isfinite(*v))
        throw IngestionError(path.filename().string() + " row " + std::to_string(line_no) + ": bad number '" +
                             std::string(f) + "'");
      row.push_back(*v);
    }
    if (expected_cols > 0 && static_cast<Index>(row.size()) != expected_cols)
      throw IngestionError(path.filename().string() + " row " + std::to_string(line_no) + ": expected " +
                           std::to_string(expected_cols) + " values, found " + std::to_string(row.size()));
    if (!rows.empty() && row.size() != rows.front().size())
      throw IngestionError(path.filename().string() + " row " + std::to_string(line_no) + ": ragged row with " +
                           std::to_string(row.size()) + " values, previous rows have " +
                           std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  return rows;
}

SensorChannel load_sensor(const fs::path& dir, const SensorSpec& spec) {
  const Index width = kCycleSeconds * spec.rate;
  const auto rows = parse_table(dir / spec.file, width);
  SensorChannel ch{spec.name, spec.rate, Matrix(static_cast<Index>(rows.size()), width)};
  for (Index r = 0; r < ch.raw.rows(); ++r)
    for (Index c = 0; c < width; ++c) ch.raw(r, c) = rows[r][c];
  return ch;
}

std::string format_row(const auto& values) {
  std::string out;
  bool first = true;
  for (double v : values) {
    if (!first) out.push_back('\t');
    first = false;
    io::append_double(out, v);
  }
  out.push_back('\n');
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

DatasetManifest DatasetManifest::hydraulic() {
  DatasetManifest m;
  const std::pair<const char*, int> sensors[] = {
      {"PS1", 100}, {"PS2", 100}, {"PS3", 100}, {"PS4", 100}, {"PS5", 100}, {"PS6", 100},
      {"EPS1", 100}, {"FS1", 10}, {"FS2", 10}, {"TS1", 1}, {"TS2", 1}, {"TS3", 1},
      {"TS4", 1}, {"VS1", 1}, {"CE", 1}, {"CP", 1}, {"SE", 1}};
  for (const auto& [name, rate] : sensors) m.sensors.push_back({name, std::string(name) + ".txt", rate});
  m.profile_file = "profile.txt";
  m.cooler_column = 0;
  m.stable_column = 4;
  return m;
}

DatasetManifest DatasetManifest::from_json_text(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
  }
  const std::set<std::string> allowed{"sensors", "profile_file", "cooler_column", "stable_column"};
  DatasetManifest m;
  try {
    for (const auto& [key, value] : j.items())
      if (!allowed.contains(key)) throw ConfigError("manifest: unknown key '" + key + "'");
    for (const auto& s : j.at("sensors")) {
      for (const auto& [key, value] : s.items())
        if (key != "name" && key != "file" && key != "rate") throw ConfigError("manifest sensor: unknown key '" + key + "'");
      SensorSpec spec{s.at("name").get<std::string>(), s.value("file", s.at("name").get<std::string>() + ".txt"),
                      s.at("rate").get<int>()};
      check_rate(spec.rate, "manifest sensor " + spec.name);
      m.sensors.push_back(std::move(spec));
    }
    m.profile_file = j.value("profile_file", m.profile_file);
    m.cooler_column = j.value("cooler_column", m.cooler_column);
    m.stable_column = j.value("stable_column", m.stable_column);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  if (m.sensors.empty()) throw ConfigError("manifest lists no sensors");
  if (m.cooler_column < 0) throw ConfigError("manifest: cooler_column must be non-negative");
  return m;
}

std::string DatasetManifest::to_json_text() const {
  json j;
  j["sensors"] = json::array();
  for (const auto& s : sensors) j["sensors"].push_back({{"name", s.name}, {"file", s.file}, {"rate", s.rate}});
  j["profile_file"] = profile_file;
  j["cooler_column"] = cooler_column;
  j["stable_column"] = stable_column;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// CycleDataset

Index CycleDataset::sensor_index(std::string_view name) const {
  for (Index k = 0; k < sensor_count(); ++k)
    if (sensors[k].name == name) return k;
  throw ConfigError("unknown sensor '" + std::string(name) + "'");
}

std::vector<std::string> CycleDataset::sensor_names() const {
  std::vector<std::string> names;
  for (const auto& s : sensors) names.push_back(s.name);
  return names;
}

CycleDataset CycleDataset::subset(std::span<const Index> rows) const {
  CycleDataset out;
  for (const auto& s : sensors) {
    SensorChannel ch{s.name, s.rate, Matrix(static_cast<Index>(rows.size()), s.raw.cols())};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] < 0 || rows[i] >= cycles()) throw DimensionError("cycle index " + std::to_string(rows[i]) + " out of range");
      ch.raw.row(static_cast<Index>(i)) = s.raw.row(rows[i]);
    }
    out.sensors.push_back(std::move(ch));
  }
  for (Index r : rows) {
    if (r < 0 || r >= cycles()) throw DimensionError("cycle index " + std::to_string(r) + " out of range");
    out.profile.push_back(profile[r]);
  }
  return out;
}

void CycleDataset::validate() const {
  if (sensors.empty()) throw IngestionError("dataset has no sensors");
  for (const auto& s : sensors) {
    if (s.raw.cols() != kCycleSeconds * s.rate)
      throw IngestionError("sensor " + s.name + ": " + std::to_string(s.raw.cols()) + " samples per cycle, expected " +
                           std::to_string(kCycleSeconds * s.rate));
    if (s.raw.rows() != cycles())
      throw IngestionError("sensor " + s.name + " has " + std::to_string(s.raw.rows()) + " cycles but the profile has " +
                           std::to_string(cycles()));
  }
}

CycleDataset concat(const CycleDataset& a, const CycleDataset& b) {
  if (a.sensor_names() != b.sensor_names()) throw DimensionError("concat: datasets have different sensors");
  CycleDataset out = a;
  for (Index k = 0; k < a.sensor_count(); ++k) {
    if (a.sensors[k].rate != b.sensors[k].rate) throw DimensionError("concat: sensor rates differ for " + a.sensors[k].name);
    Matrix m(a.sensors[k].raw.rows() + b.sensors[k].raw.rows(), a.sensors[k].raw.cols());
    m << a.sensors[k].raw, b.sensors[k].raw;
    out.sensors[k].raw = std::move(m);
  }
  out.profile.insert(out.profile.end(), b.profile.begin(), b.profile.end());
  return out;
}

// ---------------------------------------------------------------------------
// Ingestion

CycleDataset load_raw_dataset(const fs::path& dir, int jobs) {
  if (!fs::is_directory(dir)) throw IngestionError("data directory " + dir.string() + " does not exist");
  const fs::path manifest_path = dir / "manifest.json";
  if (fs::exists(manifest_path))
    return load_raw_dataset(dir, DatasetManifest::from_json_text(io::read_file(manifest_path)), jobs);
  return load_raw_dataset(dir, DatasetManifest::hydraulic(), jobs);
}

CycleDataset load_raw_dataset(const fs::path& dir, const DatasetManifest& manifest, int jobs) {
  if (!fs::is_directory(dir)) throw IngestionError("data directory " + dir.string() + " does not exist");
  CycleDataset ds;
  ds.sensors.resize(manifest.sensors.size());

  std::vector<std::exception_ptr> failures(manifest.sensors.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < manifest.sensors.size(); k = next++) {
      try {
        ds.sensors[k] = load_sensor(dir, manifest.sensors[k]);
      } catch (...) {
        failures[k] = std::current_exception();
      }
    }
  };
  const int threads = std::clamp(jobs, 1, static_cast<int>(manifest.sensors.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);

  const auto rows = parse_table(dir / manifest.profile_file, 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (static_cast<Index>(row.size()) <= std::max(manifest.cooler_column, manifest.stable_column))
      throw IngestionError(manifest.profile_file + " row " + std::to_string(r + 1) + ": too few columns");
    ConditionRecord rec;
    rec.cooler = row[manifest.cooler_column];
    rec.columns = row;
    rec.stable = manifest.stable_column < 0 || row[manifest.stable_column] == 0.0;
    ds.profile.push_back(std::move(rec));
  }
  for (std::size_t k = 0; k < ds.sensors.size(); ++k)
    if (ds.sensors[k].raw.rows() != ds.cycles())
      throw IngestionError(manifest.sensors[k].file + " has " + std::to_string(ds.sensors[k].raw.rows()) +
                           " cycles but " + manifest.profile_file + " has " + std::to_string(ds.cycles()));
  ds.validate();
  return ds;
}

void write_raw_dataset(const CycleDataset& dataset, const fs::path& dir) {
  dataset.validate();
  std::error_code ec;
  if (fs::exists(dir) && !fs::is_empty(dir, ec) && !fs::exists(dir / "manifest.json"))
    throw IngestionError("refusing to overwrite " + dir.string() + ": not empty and not a dataset directory");

  // Everything goes into a staging directory that is renamed into place at the end.
  fs::path stage = dir;
  stage += ".partial";
  fs::remove_all(stage, ec);

  DatasetManifest manifest;
  manifest.profile_file = "profile.txt";
  manifest.cooler_column = 0;
  manifest.stable_column = 1;
  for (const auto& s : dataset.sensors) {
    manifest.sensors.push_back({s.name, s.name + ".txt", s.rate});
    std::string text;
    for (Index r = 0; r < s.raw.rows(); ++r) {
      const RowVector row = s.raw.row(r);
      text += format_row(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    }
    io::write_file_atomic(stage / (s.name + ".txt"), text);
  }
  // Profile rows: cooler label, stability flag (0 = stable), then the original columns.
  std::string profile;
  for (const auto& rec : dataset.profile) {
    std::vector<double> row{rec.cooler, rec.stable ? 0.0 : 1.0};
    row.insert(row.end(), rec.columns.begin(), rec.columns.end());
    profile += format_row(row);
  }
  io::write_file_atomic(stage / manifest.profile_file, profile);
  io::write_file_atomic(stage / "manifest.json", manifest.to_json_text());

  fs::remove_all(dir, ec);
  fs::rename(stage, dir, ec);
  if (ec) throw PersistenceError("cannot move " + stage.string() + " into place: " + ec.message());
}

// ---------------------------------------------------------------------------
// Preprocessing

Vector resample_to_1hz(std::span<const double> signal, int rate) {
  check_rate(rate, "resample_to_1hz");
  if (static_cast<Index>(signal.size()) != kCycleSeconds * rate)
    throw DimensionError("resample_to_1hz: " + std::to_string(signal.size()) + " samples at " + std::to_string(rate) +
                         " Hz, expected " + std::to_string(kCycleSeconds * rate));
  Vector out(kCycleSeconds);
  for (Index t = 0; t < kCycleSeconds; ++t) {
    double sum = 0;
    for (int i = 0; i < rate; ++i) sum += signal[static_cast<std::size_t>(t * rate + i)];
    out(t) = sum / rate;
  }
  return out;
}

SensorFrames resample(const CycleDataset& dataset) {
  dataset.validate();
  SensorFrames out;
  for (const auto& s : dataset.sensors) {
    Matrix frame(s.raw.rows(), kCycleSeconds);
    for (Index c = 0; c < s.raw.rows(); ++c) {
      const RowVector row = s.raw.row(c);
      frame.row(c) = resample_to_1hz(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), s.rate).transpose();
    }
    out.names.push_back(s.name);
    out.frames.push_back(std::move(frame));
  }
  return out;
}

ScalerParams fit_scaler(const SensorFrames& train) {
  if (train.cycles() == 0) throw ConfigError("fit_scaler: empty training set");
  ScalerParams p;
  p.names = train.names;
  for (Index k = 0; k < train.sensor_count(); ++k) {
    const Matrix& f = train.frames[k];
    const double n = static_cast<double>(f.size());
    double sum = 0;
    for (Index r = 0; r < f.rows(); ++r)
      for (Index c = 0; c < f.cols(); ++c) sum += f(r, c);
    const double mean = sum / n;
    double sq = 0;
    for (Index r = 0; r < f.rows(); ++r)
      for (Index c = 0; c < f.cols(); ++c) sq += (f(r, c) - mean) * (f(r, c) - mean);
    double sd = std::sqrt(sq / n);
    if (!std::isfinite(mean) || !std::isfinite(sd))
      throw NumericError("scaler", "sensor " + train.names[k] + ": mean or spread overflows double precision");
    if (!(sd >= kScalerStdFloor)) {
      p.warnings.push_back("sensor " + train.names[k] + " has near-zero spread; using unit scale");
      sd = 1.0;
    }
    p.mean.push_back(mean);
    p.stddev.push_back(sd);
  }
  return p;
}

SensorFrames apply_scaler(const ScalerParams& scaler, const SensorFrames& frames) {
  if (scaler.names != frames.names) throw DimensionError("apply_scaler: scaler sensors do not match the data sensors");
  SensorFrames out = frames;
  for (Index k = 0; k < out.sensor_count(); ++k)
    out.frames[k] = ((out.frames[k].array() - scaler.mean[k]) / scaler.stddev[k]).matrix();
  return out;
}

Vector flatten(const Matrix& cycle) {
  if (cycle.cols() != kCycleSeconds)
    throw DimensionError("flatten: cycle has " + std::to_string(cycle.cols()) + " time points, expected 60");
  Vector out(cycle.size());
  for (Index k = 0; k < cycle.rows(); ++k) out.segment(kCycleSeconds * k, kCycleSeconds) = cycle.row(k).transpose();
  return out;
}

Matrix unflatten(const Vector& features, Index sensors) {
  if (sensors < 1 || features.size() != kCycleSeconds * sensors)
    throw DimensionError("unflatten: vector of length " + std::to_string(features.size()) + " does not hold " +
                         std::to_string(sensors) + " sensors x 60 seconds");
  Matrix out(sensors, kCycleSeconds);
  for (Index k = 0; k < sensors; ++k) out.row(k) = features.segment(kCycleSeconds * k, kCycleSeconds).transpose();
  return out;
}

Matrix to_features(const SensorFrames& frames) {
  Matrix out(frames.cycles(), kCycleSeconds * frames.sensor_count());
  for (Index k = 0; k < frames.sensor_count(); ++k) out.middleCols(kCycleSeconds * k, kCycleSeconds) = frames.frames[k];
  return out;
}

Matrix features(const CycleDataset& dataset, const ScalerParams& scaler) {
  return to_features(apply_scaler(scaler, resample(dataset)));
}

// ---------------------------------------------------------------------------
// Splits and conditions

Split split_healthy(const CycleDataset& dataset, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie strictly between 0 and 1");
  std::vector<Index> healthy;
  for (Index c = 0; c < dataset.cycles(); ++c)
    if (same_label(dataset.profile[c].cooler, kHealthyCooler)) healthy.push_back(c);
  if (healthy.empty()) throw IngestionError("dataset has no healthy cycles (cooler == 100)");
  auto engine = make_engine(seed, streams::split);
  std::shuffle(healthy.begin(), healthy.end(), engine);
  const auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(healthy.size())));
  if (n_train == 0 || n_train == healthy.size())
    throw ConfigError("split ratio " + io::format_double(ratio) + " leaves an empty train or test set for " +
                      std::to_string(healthy.size()) + " healthy cycles");
  Split s;
  s.train.assign(healthy.begin(), healthy.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(healthy.begin() + static_cast<std::ptrdiff_t>(n_train), healthy.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::vector<double> cooler_labels(const CycleDataset& dataset) {
  std::vector<double> labels;
  for (const auto& rec : dataset.profile)
    if (std::none_of(labels.begin(), labels.end(), [&](double l) { return same_label(l, rec.cooler); }))
      labels.push_back(rec.cooler);
  std::sort(labels.begin(), labels.end());
  return labels;
}

std::vector<Index> select_condition(const CycleDataset& dataset, double cooler) {
  const auto labels = cooler_labels(dataset);
  if (std::none_of(labels.begin(), labels.end(), [&](double l) { return same_label(l, cooler); })) {
    std::string known;
    for (double l : labels) known += (known.empty() ? "" : ", ") + io::format_double(l);
    throw ConfigError("cooler label " + io::format_double(cooler) + " not in dataset labels {" + known + "}");
  }
  std::vector<Index> rows;
  for (Index c = 0; c < dataset.cycles(); ++c)
    if (same_label(dataset.profile[c].cooler, cooler)) rows.push_back(c);
  return rows;
}

// ---------------------------------------------------------------------------
// Synthetic data

void SyntheticConfig::validate() const {
  if (sensors < 2) throw ConfigError("synthetic data needs at least 2 sensors");
  if (cycles < 10) throw ConfigError("synthetic data needs at least 10 cycles");
  if (affected() < 0 || affected() > sensors) throw ConfigError("affected sensor count out of range");
  if (!std::isfinite(offset_shift) || !std::isfinite(amplitude_shift) || !std::isfinite(noise_shift))
    throw ConfigError("synthetic shifts must be finite");
}

double cooler_for_degradation(double d) { return 100.0 - 97.0 * d; }
double degradation_for_cooler(double cooler) { return (100.0 - cooler) / 97.0; }

CycleDataset generate_synthetic(const SyntheticConfig& config, double degradation) {
  config.validate();
  if (!(degradation >= 0.0 && degradation <= 1.0)) throw ConfigError("degradation level must lie in [0, 1]");
  constexpr int kRates[] = {100, 10, 1};
  const Index S = config.sensors;
  const Index affected = config.affected();

  struct Shape {
    double level, amplitude, periods, phase, ramp, noise;
    bool affected;
  };
  std::vector<Shape> shapes;
  CycleDataset ds;
  for (Index k = 0; k < S; ++k) {
    const double amp = 2.0 + static_cast<double>(k % 3);
    shapes.push_back({20.0 + 10.0 * static_cast<double>(k), amp, 1.0 + static_cast<double>(k % 4),
                      0.7 * static_cast<double>(k), (k % 2 ? 1.5 : -1.5), 0.05 * amp, k < affected});
    const int rate = kRates[k % 3];
    ds.sensors.push_back({"S" + std::to_string(k + 1), rate, Matrix(config.cycles, kCycleSeconds * rate)});
  }

  const double d = degradation;
  auto engine = make_engine(config.seed, streams::synthetic);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index c = 0; c < config.cycles; ++c) {
    const double load = normal(engine);   // shared operating point of the cycle
    const double jitter = normal(engine);  // phase jitter
    for (Index k = 0; k < S; ++k) {
      const Shape& sh = shapes[k];
      SensorChannel& ch = ds.sensors[k];
      const double a = sh.affected ? 1.0 : 0.0;
      // Higher load lifts every sensor and makes it noisier; degradation pushes
      // the affected sensors further along the same direction.
      const double level = sh.level + 0.3 * sh.amplitude * load + a * config.offset_shift * sh.amplitude * d;
      const double amp = sh.amplitude * (1.0 + a * config.amplitude_shift * d) * (1.0 + 0.2 * load);
      const double noise = sh.noise * (1.0 + a * config.noise_shift * d) * std::exp(0.5 * load);
      const Index n = ch.raw.cols();
      for (Index i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / ch.rate;
        const double wave = std::sin(2.0 * std::numbers::pi * sh.periods * t / 60.0 + sh.phase + 0.15 * jitter);
        const double ramp = sh.ramp * (1.0 + 0.2 * load) * (t / 60.0 - 0.5);
        ch.raw(c, i) = level + amp * wave + ramp + noise * normal(engine);
      }
    }
    ds.profile.push_back({cooler_for_degradation(d), {cooler_for_degradation(d), d}, true});
  }
  return ds;
}

void export_features_csv(const Matrix& feats, std::span<const std::string> sensor_names, const fs::path& path) {
  if (feats.cols() != kCycleSeconds * static_cast<Index>(sensor_names.size()))
    throw DimensionError("export_features_csv: feature width does not match the sensor list");
  std::string out;
  for (std::size_t k = 0; k < sensor_names.size(); ++k)
    for (Index t = 0; t < kCycleSeconds; ++t) {
      if (k || t) out.push_back(',');
      out += sensor_names[k] + "_t" + std::to_string(t);
    }
  out.push_back('\n');
  for (Index r = 0; r < feats.rows(); ++r) {
    for (Index c = 0; c < feats.cols(); ++c) {
      if (c) out.push_back(',');
      io::append_double(out, feats(r, c));
    }
    out.push_back('\n');
  }
  io::write_file_atomic(path, out);
}

}  // namespace bae::data
