#include "doctest.h"

#include <iostream>

#include "pixio/gradcheck.hpp"

TEST_CASE("single-precision gradients match central differences") {
  const pixio::GradcheckReport report = pixio::f32::run_gradcheck({});
  std::cout << report.summary();
  CHECK(report.tolerance == doctest::Approx(1e-2));
  for (const auto& c : report.cases) {
    CAPTURE(c.name);
    CHECK(c.passed);
  }
  CHECK(report.passed());
}

TEST_CASE("double-precision gradients match central differences") {
  const pixio::GradcheckReport report = pixio::f64::run_gradcheck({});
  std::cout << report.summary();
  CHECK(report.tolerance == doctest::Approx(1e-4));
  for (const auto& c : report.cases) {
    CAPTURE(c.name);
    CHECK(c.passed);
  }
  CHECK(report.passed());
}

TEST_CASE("gradcheck is reproducible for a fixed seed") {
  pixio::GradcheckOptions opt;
  opt.include_model = false;
  opt.seed = 11;
  const auto a = pixio::f64::run_gradcheck(opt);
  const auto b = pixio::f64::run_gradcheck(opt);
  REQUIRE(a.cases.size() == b.cases.size());
  for (std::size_t i = 0; i < a.cases.size(); ++i) CHECK(a.cases[i].max_rel_err == b.cases[i].max_rel_err);
}
