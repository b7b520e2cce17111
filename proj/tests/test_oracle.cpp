#include <doctest.h>

#include <cmath>

#include "brute_force.hpp"
#include "urs/oracle.hpp"
#include "urs/rng.hpp"

using namespace urs;

TEST_SUITE("oracle") {
  TEST_CASE("square tour") {
    UnifiedInstance in = generate_instance(make_spec("tsp", 4), 1);
    const double xy[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    for (int i = 0; i < 4; ++i) {
      in.nodes[i].rho[1] = xy[i][0];
      in.nodes[i].rho[2] = xy[i][1];
    }
    in.dist = euclidean_distances(in.nodes);
    CHECK(exact_solve(in).objective.value == doctest::Approx(4.0).epsilon(1e-15));
  }

  TEST_CASE("exact matches brute force on small instances") {
    for (const auto& name : {"tsp", "atsp", "cvrp", "op", "pctsp", "pdtsp", "cvrptw", "ocvrpb", "cvrpbpl", "acvrpl",
                             "pdcvrp", "ocvrpltw"}) {
      const int n = 6;
      for (std::uint64_t seed = 0; seed < 4; ++seed) {
        CAPTURE(name);
        CAPTURE(seed);
        auto in = generate_instance(make_spec(name, n), seed);
        auto ex = exact_solve(in);
        auto bf = testing::brute_force(in);
        REQUIRE(bf.found);
        CHECK(check_solution(in, ex.solution).feasible);
        CHECK(std::abs(ex.objective.value - bf.value) <= 1e-9);
        CHECK(ex.objective.value == evaluate_solution(in, ex.solution).value);
      }
    }
  }

  TEST_CASE("unreachable orienteering returns the depot only") {
    auto in = generate_instance(make_spec("op", 6), 3);
    double nearest = 1e9;
    for (int i = 1; i < in.size(); ++i) nearest = std::min(nearest, in.d(0, i));
    in.spec.params["max_tour_length"] = 1.9 * nearest;
    auto ex = exact_solve(in);
    CHECK(ex.objective.value == 0.0);
    CHECK(ex.solution == std::vector<int>{0});
  }

  TEST_CASE("cap on instance size") {
    auto in = generate_instance(make_spec("cvrp", 13), 1);
    CHECK_THROWS_AS(exact_solve(in), OracleCapError);
  }

  TEST_CASE("greedy is feasible and never beats exact") {
    for (const auto& name : variant_catalog()) {
      CAPTURE(name);
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        auto in = generate_instance(make_spec(name, 20), seed);
        auto g = greedy_solve(in);
        CHECK(check_solution(in, g.solution).feasible);
      }
      auto small = generate_instance(make_spec(name, 6), 17);
      auto g = greedy_solve(small);
      auto ex = exact_solve(small);
      if (ex.objective.maximize) CHECK(g.objective.value <= ex.objective.value + 1e-12);
      else CHECK(g.objective.value >= ex.objective.value - 1e-12);
    }
  }

  TEST_CASE("three-node tours all have the same length") {
    auto in = generate_instance(make_spec("tsp", 3), 5);
    const double l = in.d(0, 1) + in.d(1, 2) + in.d(2, 0);
    CHECK(greedy_solve(in).objective.value == doctest::Approx(l).epsilon(1e-15));
  }

  TEST_CASE("exact is deterministic") {
    auto in = generate_instance(make_spec("cvrptw", 7), 9);
    CHECK(exact_solve(in).solution == exact_solve(in).solution);
  }

  TEST_CASE("exact beats greedy which beats random rollouts on average") {
    Rng rng(1);
    for (const auto& name : {"tsp", "cvrp", "op"}) {
      double ex_sum = 0, g_sum = 0, r_sum = 0;
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto in = generate_instance(make_spec(name, 8), seed);
        ex_sum += exact_solve(in).objective.value;
        g_sum += greedy_solve(in).objective.value;
        RoutingEnv env(in);
        double acc = 0;
        for (int r = 0; r < 50; ++r) acc += evaluate_solution(in, random_rollout(env, rng).sequence).value;
        r_sum += acc / 50;
      }
      CAPTURE(name);
      if (std::string(name) == "op") {
        CHECK(ex_sum >= g_sum);
        CHECK(g_sum >= r_sum);
      } else {
        CHECK(ex_sum <= g_sum);
        CHECK(g_sum <= r_sum);
      }
    }
  }

  TEST_CASE("gap sign conventions") {
    CHECK(gap(10.5, 10.0, false) == doctest::Approx(5.0));
    CHECK(gap(9.0, 10.0, true) == doctest::Approx(10.0));
    CHECK(gap(9.653, 10.0, false) == doctest::Approx(-3.47));
    CHECK(gap(11.0, 10.0, true) < 0);
    CHECK_THROWS(gap(1.0, 0.0, false));
  }
}
