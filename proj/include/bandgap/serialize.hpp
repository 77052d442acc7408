#pragma once

// Config ingestion (JSON) and bit-stable result emission (JSON/CSV).
// Writing goes through an insertion-ordered value tree with a fixed 17
// significant digit float format so identical runs give identical bytes.

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "bandgap/design.hpp"
#include "bandgap/geometry.hpp"

namespace bandgap::serialize {

// shortest-round-trip-free formatting: always %.17g, "-0" normalized to "0"
std::string format_double(double v);

class JValue {
  public:
    JValue() : kind_(Kind::null) {}
    JValue(bool b) : kind_(Kind::boolean), bool_(b) {}
    JValue(double d) : kind_(Kind::number), num_(d) {}
    JValue(int v) : kind_(Kind::integer), int_(v) {}
    JValue(std::int64_t v) : kind_(Kind::integer), int_(v) {}
    JValue(std::size_t v) : kind_(Kind::integer), int_(static_cast<std::int64_t>(v)) {}
    JValue(const char* s) : kind_(Kind::string), str_(s) {}
    JValue(std::string s) : kind_(Kind::string), str_(std::move(s)) {}

    static JValue array();
    static JValue object();
    static JValue array_of(const std::vector<double>& v);
    static JValue array_of(const std::vector<Vec2>& v);  // nested [x, y] pairs
    static JValue pair_of(Vec2 v);

    JValue& push(JValue v);                          // array append
    JValue& set(const std::string& key, JValue v);   // object insert (ordered)

    // serialize; indent >= 0 pretty-prints with that step, -1 is compact
    std::string dump(int indent = 2) const;

  private:
    enum class Kind { null, boolean, integer, number, string, array, object };
    Kind kind_;
    bool bool_ = false;
    std::int64_t int_ = 0;
    double num_ = 0.0;
    std::string str_;
    std::vector<JValue> items_;
    std::vector<std::pair<std::string, JValue>> fields_;

    void write(std::string& out, int indent, int depth) const;
};

// CSV with a leading '#'-comment metadata block; floats at 17 digits
class CsvWriter {
  public:
    void meta(const std::string& key, const std::string& value);
    void meta(const std::string& key, double value) { meta(key, format_double(value)); }
    void header(const std::vector<std::string>& columns);
    void row(const std::vector<std::string>& cells);
    std::string str() const;

  private:
    std::vector<std::string> lines_;
    std::size_t columns_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// CrystalSpec <-> JSON (keys: lattice.a1/a2, centers, lambdas, coefficients,
// shape.kind/params, r). Parsing rejects unknown keys.
JValue crystal_to_json(const geometry::CrystalSpec& spec);
geometry::CrystalSpec crystal_from_json_text(const std::string& text);

JValue shape_to_json(const geometry::InclusionShape& shape);
geometry::InclusionShape shape_from_json_text(const std::string& text);

// keys: targets, shape?, lattice0?, alpha0?, margin?, r?, centers?
design::DesignInputs design_inputs_from_json_text(const std::string& text);

// keys: alpha, lattice, shift?
struct ModelSpec {
    double alpha = 0.0;
    geometry::Lattice lattice;
    Vec2 shift{0.0, 0.0};
};
ModelSpec model_from_json_text(const std::string& text);

// keys: lattice, theta (dual coordinates, theta = t1 b1 + t2 b2), E_list
struct GfunJob {
    geometry::Lattice lattice;
    Vec2 theta_coords{0.0, 0.0};
    std::vector<double> E_list;
};
GfunJob gfun_job_from_json_text(const std::string& text);

}  // namespace bandgap::serialize
