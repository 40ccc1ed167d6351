#include <gtest/gtest.h>

#include <random>

#include "chemolb/errors.hpp"
#include "chemolb/model.hpp"

using namespace chemolb;

namespace {

double eval(const Expression& e, std::map<std::string, double> env) { return e.evaluate(env); }

const char* kMinimal = R"(
[domain]
nx = 4
ny = 4
[species.u]
diffusion = 0.5
source = f - u
[control.f]
lower = 0
upper = 1
)";

}  // namespace

TEST(Builtin, CrimeSources) {
  const ProblemModel m = builtin_crime();
  ASSERT_EQ(m.num_species(), 2);
  EXPECT_EQ(m.control_names(), (std::vector<std::string>{"f11", "f12", "f2"}));
  EXPECT_NEAR(eval(m.species[0].source, {{"u", 1}, {"v", 1}, {"f11", 0.5}, {"f12", 0.2}}), -0.3, 1e-15);
  EXPECT_EQ(eval(m.species[1].source, {{"u", 0}, {"v", 3.7}, {"f2", 0}}), 0.0);
  ASSERT_EQ(m.species[1].cross.size(), 1u);
  EXPECT_EQ(m.species[1].cross[0].partner, "u");
  for (const auto& e : m.species[1].cross[0].tensor) EXPECT_EQ(eval(e, {{"u", 0.3}, {"v", 0.0}}), 0.0);
  EXPECT_DOUBLE_EQ(eval(m.species[1].cross[0].tensor[0], {{"u", 0.5}, {"v", 1.0}}), 4.0);
  EXPECT_DOUBLE_EQ(eval(m.species[0].diffusion[0], {}), 0.2);
}

TEST(Builtin, OtherModelsSources) {
  const ProblemModel ts = builtin_two_species();
  EXPECT_EQ(eval(ts.species[0].source, {{"u", 1}, {"v", 0}}), 0.0);
  const ProblemModel tis = builtin_tumor();
  ASSERT_EQ(tis.odes.size(), 1u);
  EXPECT_EQ(eval(tis.odes[0].source, {{"u", 0}, {"m", 0}, {"w", 0.4}}), 0.0);
  EXPECT_EQ(tis.num_fields(), 4);
  const ProblemModel arc = builtin_attraction_repulsion();
  EXPECT_EQ(arc.num_species(), 3);
  EXPECT_NEAR(eval(arc.species[0].source, {{"u", 1}}), 0.0, 1e-15);
  EXPECT_EQ(arc.species[0].cross.size(), 2u);
}

TEST(Builtin, RationalChemotacticForm) {
  ConfigDocument doc;
  doc.set("model", "builtin", "attraction_repulsion");
  doc.set("model", "chi", "rational");
  const ProblemModel m = load_model(doc);
  const auto& t = m.species[0].cross[0].tensor[0];
  EXPECT_NEAR(eval(t, {{"u", 1.0}, {"v", 1.0}}), 0.2 / 2.0, 1e-15);
}

TEST(Builtin, UnknownNameIsConfigError) {
  ConfigDocument doc;
  doc.set("model", "builtin", "nonexistent");
  EXPECT_THROW(load_model(doc), ConfigError);
}

TEST(Load, ConstantTensorModel) {
  const ProblemModel m = load_model(ConfigDocument::parse(kMinimal));
  EXPECT_EQ(m.num_species(), 1);
  EXPECT_TRUE(m.species[0].diffusion[0].is_constant());
  EXPECT_EQ(m.controls[0].lower, 0.0);
}

TEST(Load, ErrorsNameSectionAndKey) {
  auto expect_key = [](const std::string& text, const std::string& section, const std::string& key) {
    try {
      load_model(ConfigDocument::parse(text));
      ADD_FAILURE() << "no error for\n" << text;
    } catch (const ConfigError& e) {
      EXPECT_EQ(e.section(), section);
      EXPECT_EQ(e.key(), key);
    }
  };
  auto edit = [](const std::string& from, const std::string& to) {
    std::string s = kMinimal;
    s.replace(s.find(from), from.size(), to);
    return s;
  };
  expect_key(edit("lower = 0", "lower = 2"), "control.f", "lower");
  expect_key(edit("diffusion = 0.5", "diffusion = 0.5\nsorce = 1"), "species.u", "sorce");
  expect_key(edit("nx = 4", "nx = two"), "domain", "nx");
  expect_key(std::string(kMinimal) + "[control.g]\ninitial = 1\n", "control.g", "");
  expect_key(edit("diffusion = 0.5", "diffusion = -1"), "species.u", "diffusion");
}

TEST(Load, ParseErrorReportsLine) {
  try {
    ConfigDocument::parse("[domain]\nnx = 3\nthis line is broken\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Load, SerializationRoundTrip) {
  for (const char* name : {"crime", "attraction_repulsion", "two_species", "tumor"}) {
    const ProblemModel m = load_model(builtin_config(name));
    const ProblemModel r = load_model(serialize_model(m));
    ASSERT_EQ(r.num_fields(), m.num_fields());
    ASSERT_EQ(r.num_controls(), m.num_controls());
    const CompiledModel a(m), b(r);
    std::mt19937 rng(1);
    std::uniform_real_distribution<double> U(0.1, 2.0);
    for (int probe = 0; probe < 16; ++probe) {
      std::array<double, kMaxFields> y{};
      std::array<double, kMaxControls> f{};
      for (int j = 0; j < m.num_fields(); ++j) y[j] = U(rng);
      for (int p = 0; p < m.num_controls(); ++p) f[p] = U(rng);
      NodePoint pt;
      pt.x = U(rng);
      pt.y = U(rng);
      pt.fields = y.data();
      pt.controls = f.data();
      NodeCoeffs ca, cb;
      a.evaluate(pt, ca, true);
      b.evaluate(pt, cb, true);
      for (int s = 0; s < m.num_species(); ++s) {
        EXPECT_DOUBLE_EQ(ca.s[s].Phi, cb.s[s].Phi) << name;
        EXPECT_TRUE(ca.s[s].D.isApprox(cb.s[s].D)) << name;
        EXPECT_TRUE(ca.s[s].T.isApprox(cb.s[s].T, 1e-15) || ca.s[s].T.norm() == 0.0) << name;
      }
    }
  }
}

TEST(Compiled, PartialsMatchDifferences) {
  const ProblemModel m = builtin_attraction_repulsion();
  const CompiledModel cm(m);
  std::array<double, kMaxFields> y{0.6, 0.4, 0.3};
  std::array<double, kMaxControls> f{1, 0.5, 0.1, 0.8, 0.5, 0.1};
  NodePoint pt;
  pt.fields = y.data();
  pt.controls = f.data();
  NodeCoeffs c;
  cm.evaluate(pt, c, true);
  for (int j = 0; j < 3; ++j) {
    auto yp = y, ym = y;
    yp[j] += 1e-6;
    ym[j] -= 1e-6;
    NodeCoeffs cp, cmn;
    pt.fields = yp.data();
    cm.evaluate(pt, cp, false);
    pt.fields = ym.data();
    cm.evaluate(pt, cmn, false);
    for (int s = 0; s < 3; ++s) {
      EXPECT_NEAR(c.s[s].dPhi[j], (cp.s[s].Phi - cmn.s[s].Phi) / 2e-6, 1e-7);
      EXPECT_NEAR((c.s[s].dD[j] - (cp.s[s].D - cmn.s[s].D) / 2e-6).norm(), 0.0, 1e-7);
    }
    pt.fields = y.data();
  }
  // flux Jacobian and C' = T' T'^T
  EXPECT_NEAR(c.s[0].Tp[0], 0.05, 1e-15);
  EXPECT_TRUE(c.s[0].Cp.isApprox(c.s[0].Tp * c.s[0].Tp.transpose()));
}

TEST(Controls, ProjectionClampsIntoBox) {
  ProblemModel m = load_model(ConfigDocument::parse(kMinimal));
  ControlVector f = make_controls(m, ControlSource::Initial);
  f.slots[0].values[0] = 5.0;
  f.slots[0].values[1] = 0.5;
  f.slots[0].values[2] = -3.0;
  const ControlVector p = project_controls(f);
  EXPECT_EQ(p.slots[0].values[0], 1.0);
  EXPECT_EQ(p.slots[0].values[1], 0.5);
  EXPECT_EQ(p.slots[0].values[2], 0.0);
  EXPECT_EQ(project_controls(p).flatten(), p.flatten());
  ControlVector q = f;
  q.slots[0].lower = q.slots[0].upper = 0.25;
  const ControlVector pq = project_controls(q);
  for (double v : pq.slots[0].values) EXPECT_EQ(v, 0.25);
}

TEST(Controls, SupportShapes) {
  std::string text = kMinimal;
  text.replace(text.find("f - u"), 5, "f - u + g + k + s");
  text += "[control.g]\nsupport = time\ninitial = t\n"
                           "[control.k]\nsupport = constant\ninitial = 2\n"
                           "[control.s]\nsupport = space_time\ninitial = x + t\n";
  const ProblemModel m = load_model(ConfigDocument::parse(text));
  const ControlVector f = make_controls(m, ControlSource::Initial);
  EXPECT_EQ(f.slots[0].values.size(), 16u);
  EXPECT_EQ(f.slots[1].values.size(), 11u);
  EXPECT_EQ(f.slots[2].values.size(), 1u);
  EXPECT_EQ(f.slots[3].values.size(), 16u * 11u);
  EXPECT_DOUBLE_EQ(f.at(1, 3, 7), 3.0);
  EXPECT_DOUBLE_EQ(f.at(3, 2, 1), 1.5 + 2.0);
}

TEST(Load, InlineComments) {
  const ConfigDocument doc = ConfigDocument::parse("# head\n[domain]   ; tail\nnx = 8   # cells\nny = 6\t; more\n");
  EXPECT_EQ(doc.get_int("domain", "nx", 0), 8);
  EXPECT_EQ(doc.get_int("domain", "ny", 0), 6);
}
