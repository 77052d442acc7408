#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "bandgap/errors.hpp"
#include "bandgap/geometry.hpp"
#include "bandgap/serialize.hpp"

using namespace bandgap;
using serialize::JValue;

TEST_CASE("float formatting is stable and round-trip exact") {
    CHECK(serialize::format_double(0.0) == "0");
    CHECK(serialize::format_double(-0.0) == "0");  // sign of zero normalized
    CHECK(serialize::format_double(1.0) == "1");
    const double v = 0.1 + 0.2;
    CHECK(std::stod(serialize::format_double(v)) == v);
    const double w = -1.2345678901234567e-21;
    CHECK(std::stod(serialize::format_double(w)) == w);
}

TEST_CASE("JValue dump: ordered keys, arrays, compact and pretty") {
    JValue obj = JValue::object();
    obj.set("zeta", 1.5).set("alpha", JValue::array_of(std::vector<double>{1.0, 2.0}));
    obj.set("flag", true).set("name", "rod");
    const std::string compact = obj.dump(-1);
    // insertion order preserved, not sorted; scalar arrays stay inline
    CHECK(compact == "{\"zeta\":1.5,\"alpha\":[1, 2],\"flag\":true,\"name\":\"rod\"}\n");
    const std::string pretty = obj.dump(2);
    CHECK(pretty.find("\"zeta\": 1.5") != std::string::npos);
    CHECK(pretty.find('\n') != std::string::npos);
}

TEST_CASE("CSV writer: metadata block, header, row shape enforcement") {
    serialize::CsvWriter csv;
    csv.meta("kind", "test");
    csv.meta("tol", 1e-10);
    csv.meta("grain", 1.0 + 1e-12);
    csv.header({"E", "g"});
    csv.row({"1", "2.5"});
    const std::string out = csv.str();
    CHECK(out.find("# kind = test") != std::string::npos);
    CHECK(out.find("# tol = 1e-10") != std::string::npos);  // %g strips zeros
    CHECK(out.find("# grain = 1.0000000000010001") != std::string::npos);
    CHECK(out.find("E,g\n") != std::string::npos);
    CHECK(out.find("1,2.5\n") != std::string::npos);
    CHECK_THROWS_AS(csv.row({"only-one-cell"}), InvalidInput);
}

TEST_CASE("crystal spec round-trips through JSON") {
    geometry::CrystalSpec spec;
    spec.lattice = geometry::Lattice::from_basis({0.51, 0.0}, {0.13, 0.49});
    spec.shape = geometry::InclusionShape::disk(1.0);
    spec.lambdas = {1.0, 2.5};
    spec.coefficients = {3.0, 1.2000000000000002};
    spec.centers = {spec.lattice.from_lattice_coords({0.25, 0.25}),
                    spec.lattice.from_lattice_coords({0.75, 0.75})};
    spec.r = 0.05;

    const std::string text = serialize::crystal_to_json(spec).dump(2);
    const geometry::CrystalSpec back = serialize::crystal_from_json_text(text);
    CHECK(back.lattice.a1.x == spec.lattice.a1.x);
    CHECK(back.lattice.a2.y == spec.lattice.a2.y);
    CHECK(back.lambdas == spec.lambdas);
    CHECK(back.coefficients == spec.coefficients);  // 17 digits: bit-exact
    REQUIRE(back.centers.size() == 2);
    CHECK(back.centers[1].x == spec.centers[1].x);
    CHECK(back.r == spec.r);
    CHECK(back.shape.kind == spec.shape.kind);
    CHECK(back.shape.radius == spec.shape.radius);
    // second dump of the parsed spec is byte-identical
    CHECK(serialize::crystal_to_json(back).dump(2) == text);
}

TEST_CASE("polygon shape round-trips") {
    const geometry::InclusionShape tri =
        geometry::InclusionShape::polygon({{-0.2, -0.2}, {1.0, -0.1}, {0.1, 0.9}});
    const std::string text = serialize::shape_to_json(tri).dump(-1);
    const geometry::InclusionShape back = serialize::shape_from_json_text(text);
    CHECK(back.kind == geometry::InclusionShape::Kind::polygon);
    REQUIRE(back.vertices.size() == 3);
    CHECK(back.vertices[2].y == 0.9);
    CHECK(back.area() == doctest::Approx(tri.area()).epsilon(1e-15));
}

TEST_CASE("shape parsing rejects malformed input") {
    CHECK_THROWS_AS((void)serialize::shape_from_json_text(R"({"kind":"peanut","params":[1]})"),
                    InvalidInput);
    CHECK_THROWS_AS((void)serialize::shape_from_json_text(R"({"kind":"disk","params":[]})"),
                    InvalidInput);
    CHECK_THROWS_AS((void)serialize::shape_from_json_text(R"({"kind":"disk","params":[1,2]})"),
                    InvalidInput);
    // odd coordinate count for a polygon
    CHECK_THROWS_AS(
        (void)serialize::shape_from_json_text(R"({"kind":"polygon","params":[0,0,1,0,1]})"),
        InvalidInput);
    CHECK_THROWS_AS((void)serialize::shape_from_json_text(R"({"kind":"disk"})"), InvalidInput);
    CHECK_THROWS_AS(
        (void)serialize::shape_from_json_text(R"({"kind":"disk","params":[1],"extra":0})"),
        InvalidInput);
    CHECK_THROWS_AS((void)serialize::shape_from_json_text("not json at all"), InvalidInput);
}

TEST_CASE("crystal parsing rejects unknown and missing keys") {
    const std::string good = R"({
        "lattice": {"a1": [1, 0], "a2": [0, 1]},
        "centers": [[0.5, 0.5]],
        "lambdas": [1.0],
        "coefficients": [2.0],
        "shape": {"kind": "disk", "params": [1.0]},
        "r": 0.1
    })";
    const geometry::CrystalSpec spec = serialize::crystal_from_json_text(good);
    CHECK(spec.r == 0.1);
    CHECK(spec.centers.size() == 1);

    std::string unknown = good;
    unknown.insert(unknown.rfind('}'), R"(, "grid": 7)");
    CHECK_THROWS_AS((void)serialize::crystal_from_json_text(unknown), InvalidInput);

    // drop the lambdas key entirely
    const std::string missing = R"({
        "lattice": {"a1": [1, 0], "a2": [0, 1]},
        "centers": [[0.5, 0.5]],
        "coefficients": [2.0],
        "shape": {"kind": "disk", "params": [1.0]},
        "r": 0.1
    })";
    CHECK_THROWS_AS((void)serialize::crystal_from_json_text(missing), InvalidInput);
}

TEST_CASE("model spec parsing") {
    const serialize::ModelSpec m = serialize::model_from_json_text(
        R"({"alpha": -0.5, "lattice": {"a1": [1, 0], "a2": [0, 1]}})");
    CHECK(m.alpha == -0.5);
    CHECK(m.lattice.a1.x == 1.0);
    CHECK(m.shift.x == 0.0);
    CHECK_THROWS_AS((void)serialize::model_from_json_text(
                        R"({"lattice": {"a1": [1, 0], "a2": [0, 1]}})"),
                    InvalidInput);
    CHECK_THROWS_AS((void)serialize::model_from_json_text(
                        R"({"alpha": 0, "lattice": {"a1": [1, 0], "a2": [0, 1]}, "x": 1})"),
                    InvalidInput);
}

TEST_CASE("gfun job parsing: theta in dual coordinates") {
    const serialize::GfunJob job = serialize::gfun_job_from_json_text(
        R"({"lattice": {"a1": [1, 0], "a2": [0, 1]},
            "theta": [-0.5, -0.5], "E_list": [-1.0, 0.0, 2.5]})");
    CHECK(job.theta_coords.x == -0.5);
    CHECK(job.E_list.size() == 3);
    CHECK(job.E_list[2] == 2.5);
    CHECK_THROWS_AS((void)serialize::gfun_job_from_json_text(
                        R"({"lattice": {"a1": [1, 0], "a2": [0, 1]}, "theta": [0, 0]})"),
                    InvalidInput);
}

TEST_CASE("design inputs parsing with optional fields") {
    const design::DesignInputs d1 =
        serialize::design_inputs_from_json_text(R"({"targets": [1.0, 2.0]})");
    CHECK(d1.targets == std::vector<double>{1.0, 2.0});
    CHECK(!d1.alpha0);
    CHECK(!d1.r);
    CHECK(!d1.centers);

    const design::DesignInputs d2 = serialize::design_inputs_from_json_text(R"({
        "targets": [1.0],
        "shape": {"kind": "disk", "params": [2.0]},
        "alpha0": -1.5,
        "margin": 0.25,
        "r": 0.03,
        "centers": [[0.5, 0.5]]
    })");
    CHECK(d2.shape.radius == 2.0);
    CHECK(d2.alpha0.value() == -1.5);
    CHECK(d2.margin.value() == 0.25);
    CHECK(d2.r.value() == 0.03);
    REQUIRE(d2.centers.has_value());
    CHECK(d2.centers->size() == 1);
    CHECK_THROWS_AS((void)serialize::design_inputs_from_json_text(R"({"target": [1.0]})"),
                    InvalidInput);
}
