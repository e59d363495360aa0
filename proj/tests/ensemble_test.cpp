#include "doctest.h"
#include "support.hpp"

#include "bae/ensemble.hpp"
#include "bae/io.hpp"

#include <cmath>

using namespace bae;

namespace {

NetworkSpec spec_of(std::vector<Index> widths) {
  NetworkSpec s;
  s.widths = std::move(widths);
  return s;
}

// A network whose mean head outputs `value` everywhere and whose log-variance head outputs `log_var`.
ParameterSet constant_net(const NetworkSpec& spec, double value, double log_var) {
  ParameterSet p(spec);
  p.bias(spec.mean_head()).setConstant(value);
  p.bias(spec.log_var_head()).setConstant(log_var);
  return p;
}

ParameterSet random_params(const NetworkSpec& spec, std::uint64_t seed) {
  ParameterSet p(spec);
  p.flat() = test::random_matrix(p.total_count(), 1, seed, 0.4).col(0);
  return p;
}

TrainConfig small_config(Index d, Index members) {
  TrainConfig c;
  c.network = spec_of({d, 6, 2, 6, d});
  c.members = members;
  c.epochs = 15;
  c.batch_size = 8;
  c.seed = 5;
  return c;
}

Matrix toy_data(Index n, Index d, std::uint64_t seed) {
  Matrix z = test::random_matrix(n, 2, seed);
  Matrix mix = test::random_matrix(2, d, seed + 1);
  return z * mix + 0.05 * test::random_matrix(n, d, seed + 2);
}

}  // namespace

TEST_CASE("predict combines members as an equal-weight mixture") {
  const auto spec = spec_of({2, 2, 2});
  auto model = make_model(spec, {constant_net(spec, 1, 0), constant_net(spec, 2, 0), constant_net(spec, 3, 0)});
  Matrix x(1, 2);
  x << 2, 5;
  const auto rec = predict(model, x);
  REQUIRE(rec.size() == 1);
  CHECK(rec[0].mean(0) == doctest::Approx(2.0));
  CHECK(rec[0].epistemic(0) == doctest::Approx(2.0 / 3.0));
  CHECK(rec[0].aleatoric(0) == doctest::Approx(1.0));
  // recon_loss is the feature mean of (x - mean)^2 = (0 + 9) / 2
  CHECK(rec[0].recon_loss == doctest::Approx(4.5));
  CHECK(rec[0].epistemic_mean == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("epistemic variance matches a two-pass oracle") {
  const auto spec = spec_of({5, 4, 2, 4, 5});
  std::vector<ParameterSet> members;
  for (std::uint64_t s = 0; s < 4; ++s) members.push_back(random_params(spec, 30 + s));
  const auto model = make_model(spec, members);
  const Matrix x = test::random_matrix(7, 5, 99);
  const auto rec = predict(model, x);
  std::vector<Matrix> outs;
  std::vector<Matrix> vars;
  for (const auto& m : members) {
    auto f = forward(m, x);
    outs.push_back(f.mean);
    vars.push_back(f.log_var.array().exp().matrix());
  }
  for (Index i = 0; i < x.rows(); ++i) {
    double epi_sum = 0, ale_sum = 0, rec_sum = 0;
    for (Index d = 0; d < 5; ++d) {
      double mean = 0, ale = 0;
      for (const auto& o : outs) mean += o(i, d);
      mean /= 4;
      double var = 0;
      for (const auto& o : outs) var += (o(i, d) - mean) * (o(i, d) - mean);
      var /= 4;
      for (const auto& v : vars) ale += v(i, d);
      ale /= 4;
      CHECK(std::abs(rec[i].epistemic(d) - var) < 1e-12);
      CHECK(std::abs(rec[i].aleatoric(d) - ale) < 1e-12);
      CHECK(rec[i].epistemic(d) >= 0);
      epi_sum += var;
      ale_sum += ale;
      rec_sum += (x(i, d) - mean) * (x(i, d) - mean);
    }
    CHECK(std::abs(rec[i].epistemic_mean - epi_sum / 5) < 1e-12);
    CHECK(std::abs(rec[i].aleatoric_mean - ale_sum / 5) < 1e-12);
    CHECK(std::abs(rec[i].recon_loss - rec_sum / 5) < 1e-12);
  }
}

TEST_CASE("member-mean reconstruction mode") {
  const auto spec = spec_of({1, 1, 1});
  auto model = make_model(spec, {constant_net(spec, 0, 0), constant_net(spec, 2, 0)});
  Matrix x = Matrix::Zero(1, 1);
  CHECK(predict(model, x, ReconstructionMode::ensemble_mean)[0].recon_loss == doctest::Approx(1.0));
  CHECK(predict(model, x, ReconstructionMode::member_mean)[0].recon_loss == doctest::Approx(2.0));
}

TEST_CASE("single-member and identical-member ensembles have no epistemic spread") {
  const auto spec = spec_of({4, 3, 2, 3, 4});
  const auto p = random_params(spec, 3);
  const Matrix x = test::random_matrix(6, 4, 4);
  for (Index m : {1, 3}) {
    const auto model = make_model(spec, std::vector<ParameterSet>(m, p));
    const auto rec = predict(model, x);
    const auto single = forward(p, x);
    for (Index i = 0; i < x.rows(); ++i) {
      CHECK(rec[i].epistemic.isZero(0));
      CHECK((rec[i].mean - single.mean.row(i).transpose()).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(std::abs(rec[i].recon_loss - (x.row(i) - single.mean.row(i)).squaredNorm() / 4) < 1e-12);
    }
  }
}

TEST_CASE("prediction does not depend on member order") {
  const auto spec = spec_of({4, 3, 2, 3, 4});
  std::vector<ParameterSet> members{random_params(spec, 1), random_params(spec, 2), random_params(spec, 3)};
  const Matrix x = test::random_matrix(5, 4, 9);
  const auto a = predict(make_model(spec, members), x);
  std::swap(members[0], members[2]);
  const auto b = predict(make_model(spec, members), x);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK((a[i].mean - b[i].mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a[i].epistemic - b[i].epistemic).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(a[i].aleatoric_mean - b[i].aleatoric_mean) < 1e-12);
  }
}

TEST_CASE("predict rejects the wrong width") {
  const auto spec = spec_of({4, 3, 2, 3, 4});
  CHECK_THROWS_AS(predict(make_model(spec, {random_params(spec, 1)}), Matrix::Zero(2, 3)), DimensionError);
}

TEST_CASE("anchor sampling") {
  TrainConfig c = small_config(300, 3);
  c.network = spec_of({300, 200, 3, 200, 300});
  const auto anchors = sample_anchors(c.network, c, 17);
  REQUIRE(anchors.size() == 3);
  CHECK_FALSE(anchors.members[0] == anchors.members[1]);
  CHECK(sample_member_anchor(c.network, 1.0, 17, 2) == anchors.members[2]);
  const auto w = anchors.members[0].weights(0);
  const double target = std::sqrt(2.0 / 300.0);
  const double sd = std::sqrt((w.array() - w.mean()).square().mean());
  CHECK(std::abs(sd / target - 1.0) < 0.05);
  CHECK(anchors.prior_std.front() == doctest::Approx(target));

  c.anchor_std_scale = 0;
  const auto zero = sample_anchors(c.network, c, 17);
  for (const auto& a : zero.members) CHECK(a.flat().isZero(0));
}

TEST_CASE("training") {
  const Matrix x = toy_data(60, 5, 3);
  const auto c = small_config(5, 3);
  const auto anchors = sample_anchors(c.network, c, c.seed);
  std::vector<std::uint64_t> before;
  for (const auto& a : anchors.members) before.push_back(fingerprint(a));

  const auto model = train_ensemble(x, c);
  REQUIRE(model.size() == 3);
  for (Index j = 0; j < 3; ++j) {
    CHECK(model.metadata.final_loss[j] < model.metadata.initial_loss[j]);
    CHECK(fingerprint(model.anchors.members[j]) == before[j]);
    CHECK(model.anchors.members[j] == anchors.members[j]);
  }
  CHECK_FALSE(model.members[0] == model.members[1]);
  CHECK(model.metadata.member_seeds[0] != model.metadata.member_seeds[1]);
  CHECK(model.metadata.loss_traces[0].size() == static_cast<std::size_t>(c.epochs));

  SUBCASE("deterministic and independent of thread count") {
    const auto again = train_ensemble(x, c, 3);
    for (Index j = 0; j < 3; ++j) CHECK(again.members[j] == model.members[j]);
  }
  SUBCASE("single member equals train_member") {
    const auto one = train_member(x, c, 1);
    CHECK(one.params == model.members[1]);
  }
}

TEST_CASE("training preconditions") {
  const Matrix x = toy_data(20, 4, 1);
  auto c = small_config(4, 1);
  c.epochs = 0;
  CHECK_THROWS_AS(train_ensemble(x, c), ConfigError);
  c = small_config(4, 0);
  CHECK_THROWS_AS(train_ensemble(x, c), ConfigError);
  c = small_config(4, 1);
  c.lambda = -1;
  CHECK_THROWS_AS(train_ensemble(x, c), ConfigError);
  c = small_config(4, 1);
  c.batch_size = 32;  // more than the 20 available rows
  CHECK_THROWS_AS(train_ensemble(x, c), ConfigError);
  c = small_config(5, 1);
  CHECK_THROWS_AS(train_ensemble(x, c), DimensionError);
}

TEST_CASE("divergent training names the member and the term") {
  Matrix x = toy_data(16, 4, 1);
  x(0, 0) = 1e300;
  auto c = small_config(4, 2);
  try {
    train_ensemble(x, c);
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("member 0") != std::string::npos);
    CHECK(msg.find("not finite") != std::string::npos);
    CHECK(msg.find("term") != std::string::npos);
  }
}

TEST_CASE("model persistence") {
  test::TempDir dir("model");
  const Matrix x = toy_data(40, 4, 8);
  auto c = small_config(4, 2);
  c.epochs = 3;
  auto model = train_ensemble(x, c);
  model.scaler.names = {"A", "B"};
  model.scaler.mean = {1.5, -2.25};
  model.scaler.stddev = {0.1, 3.0};
  model.sensors = {{"A", "A.txt", 100}, {"B", "B.txt", 1}};
  model.metadata.train_indices = {0, 2, 5};
  model.metadata.test_indices = {1, 3};
  const auto path = dir / "model.bae";
  save_model(model, path);

  SUBCASE("round trip is exact") {
    const auto loaded = load_model(path);
    for (Index j = 0; j < 2; ++j) {
      CHECK(loaded.members[j] == model.members[j]);
      CHECK(loaded.anchors.members[j] == model.anchors.members[j]);
    }
    CHECK(loaded.spec == model.spec);
    CHECK(loaded.config.lambda == model.config.lambda);
    CHECK(loaded.scaler.mean == model.scaler.mean);
    CHECK(loaded.scaler.stddev == model.scaler.stddev);
    CHECK(loaded.sensors == model.sensors);
    CHECK(loaded.metadata.train_indices == model.metadata.train_indices);
    CHECK(loaded.metadata.member_seeds == model.metadata.member_seeds);
    CHECK(loaded.metadata.loss_traces == model.metadata.loss_traces);
    const auto a = predict(model, x), b = predict(loaded, x);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK((a[i].mean.array() == b[i].mean.array()).all());
      CHECK((a[i].epistemic.array() == b[i].epistemic.array()).all());
      CHECK((a[i].aleatoric.array() == b[i].aleatoric.array()).all());
    }
    CHECK(serialize_model(loaded) == io::read_file(path));
  }
  SUBCASE("truncated file") {
    const auto text = io::read_file(path);
    CHECK_THROWS_AS(parse_model(text.substr(0, text.size() / 2)), PersistenceError);
    CHECK_THROWS_AS(parse_model(""), PersistenceError);
  }
  SUBCASE("version mismatch") {
    auto text = io::read_file(path);
    const auto nl = text.find('\n');
    text = "bae-ensemble-model 999" + text.substr(nl);
    try {
      parse_model(text);
      FAIL("expected an incompatibility error");
    } catch (const PersistenceError& e) {
      CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
  }
  SUBCASE("corrupt number reports its line") {
    auto text = io::read_file(path);
    const auto pos = text.find("member 0");
    REQUIRE(pos != std::string::npos);
    const auto line_end = text.find('\n', text.find('\n', pos) + 1);
    text.insert(line_end, " x1");
    try {
      parse_model(text);
      FAIL("expected a persistence error");
    } catch (const PersistenceError& e) {
      CHECK(std::string(e.what()).find("line") != std::string::npos);
    }
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_model(dir / "absent.bae"), PersistenceError); }
}
