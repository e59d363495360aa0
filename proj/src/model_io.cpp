#include "bae/ensemble.hpp"
#include "bae/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

namespace bae {

namespace {

constexpr std::string_view kMagic = "bae-ensemble-model";
constexpr Index kValuesPerLine = 8;

void check_token_safe(const std::string& s, const char* what) {
  if (s.empty() || std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }))
    throw PersistenceError(std::string("cannot store ") + what + " '" + s + "': empty or contains whitespace");
}

class Writer {
 public:
  Writer& key(std::string_view k) {
    if (!line_start_) out_.push_back('\n');
    out_ += k;
    line_start_ = false;
    return *this;
  }
  Writer& value(double v) {
    out_.push_back(' ');
    io::append_double(out_, v);
    return *this;
  }
  Writer& value(Index v) { return raw(std::to_string(v)); }
  Writer& value(std::uint64_t v) { return raw(std::to_string(v)); }
  Writer& value(const std::string& s) { return raw(s); }
  Writer& raw(std::string_view s) {
    out_.push_back(' ');
    out_ += s;
    return *this;
  }
  template <typename T>
  Writer& list(std::string_view k, const std::vector<T>& values) {
    key(k).value(static_cast<Index>(values.size()));
    for (const auto& v : values) value(v);
    return *this;
  }
  Writer& block(const Vector& values) {
    for (Index i = 0; i < values.size(); ++i) {
      out_.push_back(i % kValuesPerLine == 0 ? '\n' : ' ');
      io::append_double(out_, values(i));
    }
    return *this;
  }
  std::string finish() {
    out_.push_back('\n');
    return std::move(out_);
  }

 private:
  std::string out_;
  bool line_start_ = true;
};

/// Whitespace tokenizer that remembers line numbers for error messages.
class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  std::string_view token() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of file");
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return text_.substr(start, pos_ - start);
  }

  void expect(std::string_view keyword) {
    const auto t = token();
    if (t != keyword) fail("expected '" + std::string(keyword) + "', found '" + std::string(t) + "'");
  }

  double real() {
    const auto t = token();
    const auto v = io::parse_double(t);
    if (!v) fail("bad number '" + std::string(t) + "'");
    return *v;
  }

  long long integer() {
    const auto t = token();
    const auto v = io::parse_int(t);
    if (!v) fail("bad integer '" + std::string(t) + "'");
    return *v;
  }

  Index count(long long limit = 1LL << 40) {
    const long long v = integer();
    if (v < 0 || v > limit) fail("count " + std::to_string(v) + " out of range");
    return static_cast<Index>(v);
  }

  std::uint64_t unsigned_integer() {
    const auto t = token();
    std::uint64_t v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size()) fail("bad unsigned integer '" + std::string(t) + "'");
    return v;
  }

  std::string word() { return std::string(token()); }

  template <typename F>
  auto list(std::string_view keyword, F&& read_one) {
    expect(keyword);
    const Index n = count();
    std::vector<decltype(read_one())> out;
    out.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) out.push_back(read_one());
    return out;
  }

  Vector block(Index n) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = real();
    return v;
  }

  bool at_end() {
    skip_ws();
    return pos_ >= text_.size();
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw PersistenceError("model file line " + std::to_string(line_) + ": " + what);
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

}  // namespace

std::string serialize_model(const EnsembleModel& model) {
  model.validate();
  const auto& c = model.config;
  const auto& meta = model.metadata;
  Writer w;
  w.key(kMagic).value(static_cast<Index>(kModelFormatVersion));
  w.list("network", model.spec.widths);
  w.key("activation").raw(to_string(model.spec.activation)).value(model.spec.leaky_slope);
  w.key("train").value(c.members).value(c.lambda).value(c.epochs).value(c.batch_size).value(c.learning_rate);
  w.value(c.seed).value(c.anchor_std_scale);
  w.key("n_train").value(meta.n_train);
  w.list("member_seeds", meta.member_seeds);

  w.key("sensors").value(static_cast<Index>(model.sensors.size()));
  for (const auto& s : model.sensors) {
    check_token_safe(s.name, "sensor name");
    check_token_safe(s.file, "sensor file");
    w.key("sensor").value(s.name).value(s.file).value(static_cast<Index>(s.rate));
  }
  w.key("scaler").value(model.scaler.sensor_count());
  for (Index k = 0; k < model.scaler.sensor_count(); ++k) {
    check_token_safe(model.scaler.names[k], "scaler sensor name");
    w.key("scale").value(model.scaler.names[k]).value(model.scaler.mean[k]).value(model.scaler.stddev[k]);
  }

  w.list("train_indices", meta.train_indices);
  w.list("test_indices", meta.test_indices);
  w.list("initial_loss", meta.initial_loss);
  w.list("final_loss", meta.final_loss);
  w.key("loss_traces").value(static_cast<Index>(meta.loss_traces.size()));
  for (const auto& trace : meta.loss_traces) w.list("trace", trace);

  w.key("anchor_prior").value(model.anchors.prior_mean);
  w.list("prior_std", model.anchors.prior_std);
  for (Index j = 0; j < model.size(); ++j) {
    w.key("anchor").value(j).value(model.anchors.members[j].total_count());
    w.block(model.anchors.members[j].flat());
  }
  for (Index j = 0; j < model.size(); ++j) {
    w.key("member").value(j).value(model.members[j].total_count());
    w.block(model.members[j].flat());
  }
  w.key("end");
  return w.finish();
}

EnsembleModel parse_model(std::string_view text) {
  Reader r(text);
  if (r.token() != kMagic) r.fail("not a model file (missing '" + std::string(kMagic) + "' header)");
  const long long version = r.integer();
  if (version != kModelFormatVersion)
    r.fail("incompatible model format version " + std::to_string(version) + " (this build reads version " +
           std::to_string(kModelFormatVersion) + ")");

  EnsembleModel model;
  model.spec.widths = r.list("network", [&] { return r.count(); });
  r.expect("activation");
  try {
    model.spec.activation = parse_activation(r.word());
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  model.spec.leaky_slope = r.real();
  try {
    model.spec.validate();
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }

  auto& c = model.config;
  c.network = model.spec;
  r.expect("train");
  c.members = r.count();
  c.lambda = r.real();
  c.epochs = r.count();
  c.batch_size = r.count();
  c.learning_rate = r.real();
  c.seed = r.unsigned_integer();
  c.anchor_std_scale = r.real();

  auto& meta = model.metadata;
  r.expect("n_train");
  meta.n_train = r.count();
  meta.member_seeds = r.list("member_seeds", [&] { return r.unsigned_integer(); });

  r.expect("sensors");
  const Index n_sensors = r.count();
  for (Index k = 0; k < n_sensors; ++k) {
    r.expect("sensor");
    data::SensorSpec s;
    s.name = r.word();
    s.file = r.word();
    s.rate = static_cast<int>(r.count(1000000));
    model.sensors.push_back(std::move(s));
  }
  r.expect("scaler");
  const Index n_scaler = r.count();
  for (Index k = 0; k < n_scaler; ++k) {
    r.expect("scale");
    model.scaler.names.push_back(r.word());
    model.scaler.mean.push_back(r.real());
    model.scaler.stddev.push_back(r.real());
  }

  meta.train_indices = r.list("train_indices", [&] { return r.count(); });
  meta.test_indices = r.list("test_indices", [&] { return r.count(); });
  meta.initial_loss = r.list("initial_loss", [&] { return r.real(); });
  meta.final_loss = r.list("final_loss", [&] { return r.real(); });
  r.expect("loss_traces");
  const Index n_traces = r.count();
  for (Index j = 0; j < n_traces; ++j) meta.loss_traces.push_back(r.list("trace", [&] { return r.real(); }));

  r.expect("anchor_prior");
  model.anchors.prior_mean = r.real();
  model.anchors.prior_std = r.list("prior_std", [&] { return r.real(); });

  const ParameterSet shape(model.spec);
  auto read_params = [&](std::string_view keyword, Index j) {
    r.expect(keyword);
    if (r.count() != j) r.fail(std::string(keyword) + " blocks out of order");
    const Index n = r.count();
    if (n != shape.total_count())
      r.fail(std::string(keyword) + " " + std::to_string(j) + " has " + std::to_string(n) + " values, network needs " +
             std::to_string(shape.total_count()));
    return ParameterSet::unflatten(model.spec, r.block(n));
  };
  for (Index j = 0; j < c.members; ++j) model.anchors.members.push_back(read_params("anchor", j));
  for (Index j = 0; j < c.members; ++j) model.members.push_back(read_params("member", j));
  r.expect("end");
  if (!r.at_end()) r.fail("trailing content after 'end'");
  try {
    model.validate();
  } catch (const Error& e) {
    r.fail(e.what());
  }
  return model;
}

void save_model(const EnsembleModel& model, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_model(model));
}

EnsembleModel load_model(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const PersistenceError&) {
    throw PersistenceError("cannot open model file " + path.string());
  }
  try {
    return parse_model(text);
  } catch (const PersistenceError& e) {
    throw PersistenceError(path.string() + ": " + e.what());
  }
}

}  // namespace bae
