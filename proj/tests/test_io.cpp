#include <gtest/gtest.h>

#include <functional>
#include <limits>

#include "support.hpp"
#include "wireforce/io.hpp"

using namespace wireforce;
using namespace wireforce::testing;

namespace {

std::string data_file(const std::string& name) { return std::string(WIREFORCE_DATA_DIR) + "/" + name; }

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST(Dump, NumbersRoundTripExactly) {
  Rng rng(12);
  for (int t = 0; t < 200; ++t) {
    const double v = rng.normal(1.0) * std::pow(10.0, rng.uniform(-12.0, 12.0));
    EXPECT_EQ(io::parse_json(io::dump(io::Json::array({v})), "t")[0].get<double>(), v);
  }
}

TEST(Dump, NonFiniteBecomesNull) {
  const auto text = io::dump(io::Json::array({std::numeric_limits<double>::quiet_NaN(), 1.0}));
  EXPECT_EQ(io::parse_json(text, "t")[0], nullptr);
}

TEST(Shape, JsonRoundTripIsIdentity) {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    auto shape = io::shape_from_rod(random_rod(rng, rng.index(4, 40)), {0, 1});
    if (t % 2) shape.timestamps = {rng.uniform()};
    const auto text = io::dump(io::shape_json(shape));
    const auto back = io::shape_from_json(io::parse_json(text, "shape"));
    EXPECT_TRUE(back == shape);
    EXPECT_EQ(io::dump(io::shape_json(back)), text);
  }
}

TEST(Shape, CsvWithHeaderAndComments) {
  const auto s = io::shape_from_csv("x,y,z\r\n# comment\n\n0,0,0\n0.1, 0, 0\n 0.2 ,0.1,-1e-3\n");
  ASSERT_EQ(s.nodes.size(), 3u);
  EXPECT_EQ(s.nodes[2], Vec3(0.2, 0.1, -1e-3));
  EXPECT_EQ(kind_of([] { (void)io::shape_from_csv("0,0,0\n1,2\n"); }), ErrorKind::ParseError);
  EXPECT_EQ(kind_of([] { (void)io::shape_from_csv("x,y,z\n"); }), ErrorKind::ParseError);
}

TEST(Shape, MalformedInputIsParseError) {
  const auto good = io::dump(io::shape_json(io::shape_from_rod(relax_to_equilibrium(droop_scenario()).rod)));
  EXPECT_EQ(kind_of([&] { (void)io::shape_from_json(io::parse_json(good.substr(0, good.size() / 2), "t")); }),
            ErrorKind::ParseError);
  auto j = io::parse_json(good, "t");
  j["format_version"] = 2;
  EXPECT_EQ(kind_of([&] { (void)io::shape_from_json(j); }), ErrorKind::ParseError);
  j = io::parse_json(good, "t");
  j["nodes"][3] = io::Json::array({1.0, "a", 2.0});
  EXPECT_EQ(kind_of([&] { (void)io::shape_from_json(j); }), ErrorKind::ParseError);
  j = io::parse_json(good, "t");
  j.erase("nodes");
  EXPECT_EQ(kind_of([&] { (void)io::shape_from_json(j); }), ErrorKind::ParseError);
}

TEST(Shape, MaterialIsRequiredSomewhere) {
  io::ShapeFile s;
  s.nodes = straight_shape(0.5, 10);
  EXPECT_EQ(kind_of([&] { (void)s.to_rod(); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(s.to_rod(RodState::Material{1e-3, 1e-3, Vec3::Zero()}).piece_count(), 10u);
}

TEST(Config, DataFilesLoad) {
  const auto c = io::run_config_from(io::parse_json(io::read_text(data_file("config.json")), "config"));
  ASSERT_TRUE(c.material.has_value());
  EXPECT_EQ(c.material->bend_stiffness, 1e-3);
  EXPECT_EQ(c.pipeline.mode, ResolveMode::ZeroTorque);
  EXPECT_FALSE(c.pipeline.smoothing.has_value());
  const auto s = io::run_config_from(io::parse_json(io::read_text(data_file("config_smoothing.json")), "config"));
  ASSERT_TRUE(s.pipeline.smoothing.has_value());
  EXPECT_EQ(s.pipeline.smoothing->resample_to, 30u);
}

TEST(Config, RoundTrip) {
  io::RunConfig c;
  c.material = RodState::Material{2e-3, 1e-3, Vec3(0, 0, -0.01)};
  c.pipeline.mode = ResolveMode::Midpoint;
  c.pipeline.estimator.cond_b_rel_tol = 0.05;
  c.pipeline.smoothing = SmoothingParams{};
  c.pipeline.smoothing->resample_to = 12;
  const auto text = io::dump(io::run_config_json(c));
  EXPECT_EQ(io::dump(io::run_config_json(io::run_config_from(io::parse_json(text, "c")))), text);
}

TEST(Config, InvalidValuesAreParseErrors) {
  auto base = io::Json::parse(R"({"format_version": 1})");
  auto j = base;
  j["mode"] = "sideways";
  EXPECT_EQ(kind_of([&] { (void)io::run_config_from(j); }), ErrorKind::ParseError);
  j = base;
  j["estimator"]["cond_b_rel_tol"] = 2.0;
  EXPECT_EQ(kind_of([&] { (void)io::run_config_from(j); }), ErrorKind::ParseError);
  j = base;
  j["estimator"]["resultant_fit"] = "best";
  EXPECT_EQ(kind_of([&] { (void)io::run_config_from(j); }), ErrorKind::ParseError);
}

TEST(Scenario, DroopGeneratorMatchesHandBuiltScenario) {
  const auto sc = io::scenario_from_json(io::parse_json(io::read_text(data_file("scenario_midspan.json")), "s"));
  const auto ref = droop_scenario();
  ASSERT_EQ(sc.rod.piece_count(), ref.rod.piece_count());
  for (std::size_t k = 0; k <= kPieces; ++k) EXPECT_LE((sc.rod.node(k) - ref.rod.node(k)).norm(), 1e-15);
  EXPECT_EQ(sc.wpp, ref.wpp);
  ASSERT_EQ(sc.applied_forces.size(), 1u);
  EXPECT_EQ(sc.applied_forces[0].piece, 14u);
  EXPECT_EQ(sc.clamps.size(), 2u);
}

TEST(Scenario, JsonRoundTrip) {
  for (const char* name : {"scenario_midspan.json", "scenario_gravity.json", "scenario_two_forces.json"}) {
    const auto sc = io::scenario_from_json(io::parse_json(io::read_text(data_file(name)), name));
    const auto text = io::dump(io::scenario_json(sc));
    EXPECT_EQ(io::dump(io::scenario_json(io::scenario_from_json(io::parse_json(text, name)))), text) << name;
  }
}

TEST(Scenario, InvalidContentIsParseError) {
  auto j = io::parse_json(io::read_text(data_file("scenario_midspan.json")), "s");
  j["applied_forces"][0]["piece"] = 99;
  EXPECT_EQ(kind_of([&] { (void)io::scenario_from_json(j); }), ErrorKind::ParseError);
  j = io::parse_json(io::read_text(data_file("scenario_midspan.json")), "s");
  j["rod"].erase("droop");
  EXPECT_EQ(kind_of([&] { (void)io::scenario_from_json(j); }), ErrorKind::ParseError);
}

TEST(Truth, RoundTrip) {
  const auto sc = io::scenario_from_json(io::parse_json(io::read_text(data_file("scenario_two_forces.json")), "s"));
  const auto eq = relax_to_equilibrium(sc);
  const auto truth = io::ground_truth(sc, eq);
  const auto text = io::dump(io::truth_json(truth, eq));
  const auto back = io::truth_from_json(io::parse_json(text, "truth"));
  ASSERT_EQ(back.applied_forces.size(), 2u);
  EXPECT_EQ(back.applied_forces[1].force, truth.applied_forces[1].force);
  EXPECT_EQ(back.applied_forces[1].point, truth.applied_forces[1].point);
  ASSERT_EQ(back.clamps.size(), 2u);
  EXPECT_EQ(back.clamps[0].reaction, truth.clamps[0].reaction);
}

TEST(Report, SerializationIsDeterministic) {
  const auto sc = io::scenario_from_json(io::parse_json(io::read_text(data_file("scenario_midspan.json")), "s"));
  const auto eq = relax_to_equilibrium(sc);
  const auto truth = io::ground_truth(sc, eq);
  const auto a = io::dump(io::report_json(run_estimation(eq.rod, {}, &truth)));
  const auto b = io::dump(io::report_json(run_estimation(eq.rod, {}, &truth)));
  EXPECT_EQ(a, b);
  const auto j = io::parse_json(a, "report");
  EXPECT_EQ(j["format_version"], 1);
  EXPECT_EQ(j["piece_count"], 30);
  EXPECT_EQ(j["labels"].size(), 30u);
  EXPECT_EQ(j["mode"], "zero-torque");
  EXPECT_FALSE(j["metrics"].empty());
}
