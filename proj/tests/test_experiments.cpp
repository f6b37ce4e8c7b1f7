#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "sparsedom/experiments.hpp"

using namespace sparsedom;

namespace {

const char* kWeakConfig = R"(
[grid]
dim = 1
box_exp = 1
cell_exp = 4
[weight]
recipe = power
beta = 0.25
[matrices]
m1 = -I
[exponents]
alpha = 0
p = 2
q = 2
[suite]
seed = 7
size = 8
depths = 3
)";

}  // namespace

TEST_CASE("config parser round trip and hard errors") {
  ExperimentConfig cfg = ExperimentConfig::from_string(kWeakConfig);
  CHECK(cfg.dim == 1);
  CHECK(cfg.box_exp == 1);
  CHECK(cfg.cell_exp == 4);
  CHECK(cfg.weight_recipe == "power");
  CHECK(cfg.weight_params.size() == 1);
  CHECK(cfg.matrices.size() == 1);
  CHECK(cfg.exponents.p == 2.0);
  CHECK(cfg.seed == 7);

  CHECK_THROWS(ExperimentConfig::from_string("[grid]\nbogus_key = 3\n"));
  CHECK_THROWS(ExperimentConfig::from_string("[nosuch]\na = b\n"));
  CHECK_THROWS(ExperimentConfig::from_string("dim = 1\n"));  // key outside any section
}

TEST_CASE("weak type scenario on the reflection passes the identity exactly") {
  ExperimentConfig cfg = ExperimentConfig::from_string(kWeakConfig);
  cfg.scenario = "weak-type";
  auto rows = run_weak_type(cfg);
  CHECK(count_failures(rows) == 0);
  bool saw_identity = false, saw_joint = false;
  for (const auto& r : rows) {
    if (r.quantity == "level-set-identity") {
      saw_identity = true;
      CHECK(r.value <= 1e-12);
      CHECK(r.status == "pass");
    }
    if (r.quantity == "joint-stability") {
      saw_joint = true;
      CHECK(r.status == "pass");
    }
  }
  CHECK(saw_identity);
  CHECK(saw_joint);
}

TEST_CASE("weak type flags joint divergence at the class boundary") {
  ExperimentConfig cfg = ExperimentConfig::from_string(kWeakConfig);
  cfg.weight_params = {1.0};  // |x| at p=q=2 sits outside the class
  cfg.trace_depths = 5;
  cfg.box_exp = 2;
  auto rows = run_weak_type(cfg);
  for (const auto& r : rows)
    if (r.quantity == "joint-stability") {
      CHECK(r.status == "pass");
      CHECK(r.note.find("diverging") != std::string::npos);
    }
}

TEST_CASE("sawyer scenario: testing below strong, ordering row present") {
  ExperimentConfig cfg = ExperimentConfig::from_string(kWeakConfig);
  cfg.cell_exp = 4;
  cfg.suite_size = 6;
  auto rows = run_sawyer(cfg);
  CHECK(count_failures(rows) == 0);
  double testing = 0.0, strong = 0.0;
  for (const auto& r : rows) {
    if (r.quantity == "testing-constant") testing = r.value;
    if (r.quantity == "strong-quotient") strong = r.value;
    if (r.quantity == "testing-le-strong") CHECK(r.status == "pass");
    if (r.quantity == "remark-ordering") CHECK(r.status == "pass");
  }
  CHECK(testing > 0.0);
  CHECK(testing <= strong * (1.0 + 1e-12));
}

TEST_CASE("sawyer rejects an identically vanishing weight") {
  ExperimentConfig cfg = ExperimentConfig::from_string(kWeakConfig);
  cfg.weight_recipe = "piecewise";
  cfg.weight_params = {0.0, 0.0};
  CHECK_THROWS_AS(run_sawyer(cfg), std::domain_error);
}

TEST_CASE("report rendering is deterministic and sorted") {
  std::vector<ReportRow> rows;
  rows.push_back({"b-scn", "z", 0, 1.5, 0.0, false, "measured", "late"});
  rows.push_back({"a-scn", "k", 2, 0.25, 1.0, true, "pass", "x"});
  rows.push_back({"a-scn", "k", 1, 0.5, 1.0, true, "pass", "y"});
  std::string r1 = render_report(rows);
  std::string r2 = render_report(rows);
  CHECK(r1 == r2);
  CHECK(r1.rfind("scenario,quantity,depth,value,target,status,note\n", 0) == 0);
  auto a = r1.find("a-scn,k,1");
  auto b = r1.find("a-scn,k,2");
  auto c = r1.find("b-scn,z,0");
  CHECK(a < b);
  CHECK(b < c);

  std::string empty = render_report({});
  CHECK(empty == "scenario,quantity,depth,value,target,status,note\n");

  std::string path = "test_rows.csv";
  emit_report(rows, path);
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(bytes == r1);
  std::remove(path.c_str());
}

TEST_CASE("suite composition is deterministic in the seed") {
  Grid g(1, 1, 4);
  CubeFamily fam = lattice_union_family(g, g.box_exp + g.cell_exp + 1);
  auto s1 = test_function_suite(g, fam, 99, 10, true);
  auto s2 = test_function_suite(g, fam, 99, 10, true);
  REQUIRE(s1.size() == s2.size());
  for (size_t i = 0; i < s1.size(); ++i)
    for (size_t j = 0; j < s1[i].values().size(); ++j)
      CHECK(s1[i].values()[j] == s2[i].values()[j]);
  for (const auto& f : s1)
    for (double v : f.values()) CHECK(v >= 0.0);
  auto s3 = test_function_suite(g, fam, 100, 10, false);
  bool has_negative = false;
  for (const auto& f : s3)
    for (double v : f.values())
      if (v < 0.0) has_negative = true;
  CHECK(has_negative);
}

TEST_CASE("pointwise lemmas scenario emits the spread rows") {
  ExperimentConfig cfg = ExperimentConfig::from_string(kWeakConfig);
  cfg.exponents.alpha = 0.5;
  cfg.kernel_alphas = {0.25, 0.25};
  cfg.kernel_rs = {kInfExponent, kInfExponent};
  cfg.kernel_tables = {"", ""};
  cfg.matrices.clear();
  cfg.matrices.push_back(LinearMap::scalar(1, Rational(-1)));
  cfg.matrices.push_back(LinearMap::identity(1));
  cfg.suite_size = 4;
  auto rows = run_pointwise_lemmas(cfg);
  bool saw41 = false;
  for (const auto& r : rows) {
    if (r.quantity == "maximal-comparison-spread") {
      saw41 = true;
      CHECK(r.status == "pass");
    }
    if (r.quantity == "local-truncation-bound") CHECK((r.status == "pass" || r.status == "measured"));
  }
  CHECK(saw41);
  CHECK(count_failures(rows) == 0);
}

TEST_CASE("pointwise lemmas at alpha 0 include the smoothed-maximal comparison") {
  ExperimentConfig cfg = ExperimentConfig::from_string(kWeakConfig);
  cfg.exponents.alpha = 0.0;
  cfg.exponents.s = 1.0;
  cfg.kernel_alphas = {0.5, 0.5};  // sum = n - alpha = 1
  cfg.kernel_rs = {kInfExponent, kInfExponent};
  cfg.kernel_tables = {"", ""};
  cfg.matrices.clear();
  cfg.matrices.push_back(LinearMap::scalar(1, Rational(-1)));
  cfg.matrices.push_back(LinearMap::identity(1));
  cfg.suite_size = 4;
  auto rows = run_pointwise_lemmas(cfg);
  bool saw42 = false;
  for (const auto& r : rows)
    if (r.quantity == "smoothed-comparison-spread") {
      saw42 = true;
      CHECK(r.status == "pass");
    }
  CHECK(saw42);
  CHECK(count_failures(rows) == 0);
}

TEST_CASE("weak type scenario under the fractional Sobolev link") {
  ExperimentConfig cfg = ExperimentConfig::from_string(kWeakConfig);
  cfg.exponents.alpha = 0.25;
  cfg.exponents.p = 2.0;
  cfg.exponents.q = 4.0;  // 1/q = 1/p - alpha/n
  cfg.trace_depths = 3;
  auto rows = run_weak_type(cfg);
  CHECK(count_failures(rows) == 0);
  bool saw_residual = false;
  for (const auto& r : rows)
    if (r.quantity == "truncation-residual") {
      saw_residual = true;
      CHECK(r.value <= cfg.truncation_budget);
    }
  CHECK(saw_residual);
}

TEST_CASE("scaling scenario pins the exponent formula max{1-alpha/n,((p/s)'/q)(1-alpha s/n)}") {
  ExperimentConfig cfg = ExperimentConfig::from_string(kWeakConfig);
  cfg.box_exp = 1;
  cfg.cell_exp = 5;
  cfg.matrices = {LinearMap::scalar(1, Rational(2)), LinearMap::scalar(1, Rational(1, 2))};
  cfg.exponents.alpha = 0.0;
  cfg.exponents.s = 1.0;
  cfg.kernel_alphas = {0.5, 0.5};
  cfg.kernel_rs = {kInfExponent, kInfExponent};
  cfg.kernel_tables = {"", ""};
  cfg.beta_family = {0.1, 0.2, 0.3};
  cfg.suite_size = 3;
  // alpha = 0, s = 1, p = q: the exponent reduces to max{1, p'/p}
  for (double p : {2.0, 1.5}) {
    cfg.exponents.p = p;
    cfg.exponents.q = p;
    auto rows = run_scaling(cfg);
    double pp = p / (p - 1.0);
    double expect = std::max(1.0, pp / p);
    for (const auto& r : rows)
      if (r.quantity == "fitted-exponent") CHECK(r.target == doctest::Approx(expect));
  }
}
