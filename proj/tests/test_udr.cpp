#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>

#include "urs/instance.hpp"
#include "urs/instance_io.hpp"
#include "urs/rng.hpp"

using namespace urs;

namespace {

using Lambda = std::array<std::uint8_t, kSignatureSize>;

// Rows of the seen-problem representation table.
const std::map<std::string, Lambda>& seen_rows() {
  static const std::map<std::string, Lambda> rows = {
      {"atsp", {1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}},
      {"tsp", {0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}},
      {"op", {0, 1, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0}},
      {"pctsp", {0, 1, 0, 1, 1, 0, 0, 0, 1, 0, 0, 0, 0}},
      {"pdtsp", {0, 1, 0, 0, 0, 0, 0, 0, 1, 1, 1, 0, 0}},
      {"acvrp", {1, 0, 1, 0, 0, 0, 0, 0, 1, 0, 1, 1, 0}},
      {"cvrp", {0, 1, 1, 0, 0, 0, 0, 0, 1, 0, 1, 1, 0}},
      {"cvrptw", {0, 1, 1, 0, 0, 1, 1, 1, 1, 0, 1, 1, 0}},
      {"cvrpb", {0, 1, 1, 0, 0, 0, 0, 0, 1, 1, 1, 1, 0}},
      {"ocvrp", {0, 1, 1, 0, 0, 0, 0, 0, 1, 0, 1, 1, 1}},
      {"ocvrptw", {0, 1, 1, 0, 0, 1, 1, 1, 1, 0, 1, 1, 1}},
  };
  return rows;
}

// Independent Floyd-Warshall pass; returns true if any entry can be shortened.
bool has_shortcut(const UnifiedInstance& in) {
  const int n = in.size();
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j)
        if (in.d(i, k) + in.d(k, j) < in.d(i, j)) return true;
  return false;
}

UnifiedInstance corners() {
  UnifiedInstance in = generate_instance(make_spec("tsp", 4), 1);
  const double xy[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  for (int i = 0; i < 4; ++i) {
    in.nodes[i].rho[1] = xy[i][0];
    in.nodes[i].rho[2] = xy[i][1];
  }
  in.dist = euclidean_distances(in.nodes);
  return in;
}

}  // namespace

TEST_SUITE("udr") {
  TEST_CASE("catalog covers the seen variants and at least 107 names") {
    CHECK(variant_catalog().size() >= 107);
    for (const auto& name : seen_variants()) CHECK(parse_variant(name).has_value());
    CHECK(parse_variant("ocvrpbpltw").has_value());
    CHECK(parse_variant("mdocvrpb").has_value());
    CHECK_FALSE(parse_variant("bogus").has_value());
  }

  TEST_CASE("conflicting families are named in the rejection") {
    ConstraintSpec spec;
    spec.families = {Family::C, Family::B, Family::BP};
    spec.n_customers = 5;
    try {
      validate(spec);
      FAIL("expected rejection");
    } catch (const SpecError& e) {
      const std::string what = e.what();
      CHECK(what.find("B+BP") != std::string::npos);
    }
    spec.families = {Family::C, Family::PD, Family::B};
    CHECK_THROWS_AS(validate(spec), SpecError);
    spec.families = {Family::C, Family::MD};
    spec.params["depot_count"] = 1;
    CHECK_THROWS_AS(validate(spec), SpecError);
    spec.families = {Family::C};
    spec.params["depot_count"] = 2;
    CHECK_THROWS_AS(validate(spec), SpecError);
  }

  TEST_CASE("cvrp demands are integral fractions of capacity 50") {
    auto in = generate_instance(make_spec("cvrp", 4), 123);
    CHECK(in.spec.param("capacity") == 50.0);
    for (int i = 1; i < in.size(); ++i) {
      const double raw = in.nodes[i].demand() * 50.0;
      CHECK(raw == std::round(raw));
      CHECK(raw >= 1);
      CHECK(raw <= 9);
    }
    CHECK(derive_signature(in).lambda == seen_rows().at("cvrp"));
  }

  TEST_CASE("tsp zero-fills everything but coordinates") {
    auto in = generate_instance(make_spec("tsp", 5), 9);
    for (const auto& nd : in.nodes) {
      CHECK(nd.eta() == 0.0);
      for (double v : nd.omega) CHECK(v == 0.0);
      for (auto b : nd.xi) CHECK(b == 0);
    }
  }

  TEST_CASE("pdcvrp pairs pickups with deliveries") {
    auto in = generate_instance(make_spec("pdcvrp", 6), 5);
    CHECK(in.spec.param("capacity") == 20.0);
    for (int p = 1; p <= 3; ++p) {
      CHECK(in.nodes[p].demand() < 0);
      CHECK(in.nodes[p + 3].demand() == -in.nodes[p].demand());
      CHECK(in.nodes[p].demand() + in.nodes[p + 3].demand() == 0.0);
      CHECK(in.r(p, p + 3) == 0);
      CHECK(in.r(p + 3, p) == 0);
    }
    CHECK(in.r(1, 2) == 1);
    CHECK(in.r(1, 1) == 1);
    CHECK(in.relation_pairs().size() == 3);
  }

  TEST_CASE("asymmetric matrices are closed under shortest paths") {
    for (std::uint64_t seed : {1ULL, 2ULL, 77ULL}) {
      auto in = generate_instance(make_spec("atsp", 5), seed);
      bool asym = false;
      for (int i = 0; i < in.size(); ++i) {
        CHECK(in.d(i, i) == 0.0);
        for (int j = 0; j < in.size(); ++j) asym |= in.d(i, j) != in.d(j, i);
      }
      CHECK(asym);
      CHECK_FALSE(has_shortcut(in));
      for (const auto& nd : in.nodes) {
        CHECK(nd.eta() >= 0.0);
        CHECK(nd.eta() <= 1.0);
        CHECK(nd.x() == 0.0);
      }
    }
  }

  TEST_CASE("signature rows of the seen variants") {
    for (const auto& [name, row] : seen_rows()) {
      CAPTURE(name);
      auto in = generate_instance(make_spec(name, 10), 3);
      CHECK(derive_signature(in).lambda == row);
    }
  }

  TEST_CASE("signature is invariant under node permutation") {
    auto in = generate_instance(make_spec("cvrptw", 8), 4);
    auto perm = in;
    std::reverse(perm.nodes.begin(), perm.nodes.end());
    CHECK(derive_signature(perm).lambda == derive_signature(in).lambda);
  }

  TEST_CASE("generation is deterministic") {
    for (const auto& name : {"cvrp", "acvrpltw", "mdocvrpbtw", "pdcvrp", "op", "pctsp"}) {
      auto a = generate_instance(make_spec(name, 12), 42);
      auto b = generate_instance(make_spec(name, 12), 42);
      CHECK(instance_to_json(a) == instance_to_json(b));
      auto c = generate_instance(make_spec(name, 12), 43);
      CHECK(instance_to_json(a) != instance_to_json(c));
    }
  }

  TEST_CASE("time windows leave every customer serviceable") {
    for (const auto& name : {"cvrptw", "ocvrptw", "mdcvrptw", "acvrptw", "acvrpltw", "cvrpbltw"}) {
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto in = generate_instance(make_spec(name, 20), seed);
        const double l0 = in.spec.param("depot_end_time");
        for (int i = in.customer_begin(); i < in.size(); ++i) {
          const auto& om = in.nodes[i].omega;
          CHECK(om[kEarliest] <= om[kLatest]);
          for (int k = 0; k < in.depot_count(); ++k) {
            CHECK(in.d(k, i) <= om[kLatest] + 1e-12);
            CHECK(om[kEarliest] + om[kService] + in.d(i, k) <= l0 + 1e-12);
          }
        }
      }
    }
  }

  TEST_CASE("duration limit admits a round trip to every customer") {
    for (const auto& name : {"cvrpl", "acvrpl", "mdcvrpl"}) {
      auto in = generate_instance(make_spec(name, 20), 11);
      const double lim = in.spec.param("duration_limit");
      for (int i = in.customer_begin(); i < in.size(); ++i)
        for (int k = 0; k < in.depot_count(); ++k) CHECK(in.d(k, i) + in.d(i, k) <= lim);
    }
    CHECK(make_spec("acvrpl", 5).param("duration_limit") == 0.6);
    CHECK(make_spec("acvrptw", 5).param("depot_end_time") == 1.0);
  }

  TEST_CASE("backhaul count is round(0.2 n)") {
    for (int n : {5, 10, 13, 20}) {
      for (const auto& name : {"cvrpb", "cvrpbp", "ocvrpbtw"}) {
        auto in = generate_instance(make_spec(name, n), n);
        int neg = 0;
        for (const auto& nd : in.nodes) neg += nd.demand() < 0;
        CHECK(neg == static_cast<int>(std::lround(0.2 * n)));
      }
    }
  }

  TEST_CASE("multi-depot instances place three depots first") {
    auto in = generate_instance(make_spec("mdcvrp", 7), 2);
    CHECK(in.depot_count() == 3);
    CHECK(in.size() == 10);
    for (int k = 0; k < 3; ++k) CHECK(in.nodes[k].xi[kDepotBit] == 1);
  }

  TEST_CASE("prize families") {
    auto pc = generate_instance(make_spec("pctsp", 20), 8);
    for (int i = 1; i < pc.size(); ++i) {
      CHECK(pc.nodes[i].omega[kPrize] < 4.0 / 20);
      CHECK(pc.nodes[i].omega[kPenalty] < 12.0 / 20);
    }
    auto op = generate_instance(make_spec("op", 20), 8);
    CHECK(op.nodes[0].omega[kPrize] == 0.0);
    CHECK(op.spec.param("max_tour_length") == 2.0);
    CHECK(make_spec("op", 50).param("max_tour_length") == 3.0);
    CHECK(make_spec("op", 100).param("max_tour_length") == 4.0);
    CHECK(make_spec("op", 75).param("max_tour_length") == doctest::Approx(3.5));
  }

  TEST_CASE("symmetric augmentations are isometries") {
    auto in = corners();
    auto aug = symmetric_augmentations(in);
    REQUIRE(aug.size() == 8);
    CHECK(aug[0] == in);
    for (const auto& a : aug)
      for (std::size_t k = 0; k < in.dist.size(); ++k) CHECK(std::abs(a.dist[k] - in.dist[k]) <= 1e-12);
    // reflections are involutions
    for (int t : {0, 1, 2, 4, 6, 7}) {
      auto [x, y] = dihedral_map(t, 0.3, 0.8);
      auto [x2, y2] = dihedral_map(t, x, y);
      CHECK(x2 == doctest::Approx(0.3).epsilon(1e-15));
      CHECK(y2 == doctest::Approx(0.8).epsilon(1e-15));
    }
    CHECK_THROWS(symmetric_augmentations(generate_instance(make_spec("atsp", 4), 1)));
  }

  TEST_CASE("asymmetric augmentations only resample eta") {
    auto in = generate_instance(make_spec("acvrp", 6), 1);
    auto aug = asymmetric_augmentations(in, 3);
    REQUIRE(aug.size() == 3);
    for (const auto& a : aug) {
      CHECK(a.dist == in.dist);
      for (std::size_t i = 0; i < a.nodes.size(); ++i) {
        CHECK(a.nodes[i].omega == in.nodes[i].omega);
        CHECK(a.nodes[i].eta() >= 0.0);
        CHECK(a.nodes[i].eta() <= 1.0);
      }
    }
    CHECK(asymmetric_augmentations(in, 1, 99)[0] == asymmetric_augmentations(in, 1, 99)[0]);
    CHECK_THROWS(asymmetric_augmentations(generate_instance(make_spec("cvrp", 4), 1), 2));
  }

  TEST_CASE("instance codec round trip") {
    for (const auto& name : {"cvrp", "atsp", "pdcvrp", "mdocvrpbtw", "pctsp", "op", "acvrpl"}) {
      auto in = generate_instance(make_spec(name, 10), 31);
      auto back = instance_from_json(instance_to_json(in));
      CHECK(back == in);
    }
    auto path = std::filesystem::temp_directory_path() / "urs_codec_test.json";
    auto in = generate_instance(make_spec("cvrp", 10), 5);
    write_instance(path, in);
    CHECK(read_instance(path) == in);
    std::filesystem::remove(path);
  }

  TEST_CASE("codec error reasons are distinct") {
    auto in = generate_instance(make_spec("atsp", 4), 5);
    std::string text = instance_to_json(in);
    auto reason_of = [](const std::string& t) {
      try {
        instance_from_json(t);
      } catch (const InstanceFormatError& e) {
        return e.reason();
      }
      FAIL("expected a format error");
      return InstanceFormatError::Reason::kSchema;
    };
    // drop one distance entry
    auto cut = text;
    auto pos = cut.find("\"dist\":[");
    auto comma = cut.find(',', pos);
    cut.erase(pos + 8, comma - (pos + 8) + 1);
    CHECK(reason_of(cut) == InstanceFormatError::Reason::kSize);

    auto nover = text;
    nover.replace(nover.find("\"version\":1"), 11, "\"vers\":1");
    CHECK(reason_of(nover) == InstanceFormatError::Reason::kVersion);

    auto badnum = text;
    auto xp = badnum.find("\"x\":");
    badnum.replace(xp, 5, "\"x\":\"a\"");
    CHECK(reason_of(badnum) == InstanceFormatError::Reason::kMalformed);
  }
}
