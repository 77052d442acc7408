#include "bandgap/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bandgap/errors.hpp"

namespace bandgap::serialize {

std::string format_double(double v) {
    if (std::isnan(v)) throw InvalidInput("cannot serialize NaN");
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    std::string s(buf);
    if (s == "-0") s = "0";
    return s;
}

JValue JValue::array() {
    JValue v;
    v.kind_ = Kind::array;
    return v;
}

JValue JValue::object() {
    JValue v;
    v.kind_ = Kind::object;
    return v;
}

JValue JValue::array_of(const std::vector<double>& v) {
    JValue a = array();
    for (double d : v) a.push(JValue(d));
    return a;
}

JValue JValue::array_of(const std::vector<Vec2>& v) {
    JValue a = array();
    for (Vec2 p : v) a.push(pair_of(p));
    return a;
}

JValue JValue::pair_of(Vec2 v) {
    JValue a = array();
    a.push(JValue(v.x));
    a.push(JValue(v.y));
    return a;
}

JValue& JValue::push(JValue v) {
    items_.push_back(std::move(v));
    return *this;
}

JValue& JValue::set(const std::string& key, JValue v) {
    fields_.emplace_back(key, std::move(v));
    return *this;
}

namespace {

void write_escaped(std::string& out, const std::string& s) {
    out += '"';
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    out += '"';
}

void newline_indent(std::string& out, int indent, int depth) {
    if (indent < 0) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent) * depth, ' ');
}

}  // namespace

void JValue::write(std::string& out, int indent, int depth) const {
    switch (kind_) {
        case Kind::null: out += "null"; return;
        case Kind::boolean: out += bool_ ? "true" : "false"; return;
        case Kind::integer: out += std::to_string(int_); return;
        case Kind::number: out += format_double(num_); return;
        case Kind::string: write_escaped(out, str_); return;
        case Kind::array: {
            if (items_.empty()) {
                out += "[]";
                return;
            }
            // short numeric arrays inline regardless of indent
            bool scalars = true;
            for (const JValue& v : items_)
                scalars = scalars && v.kind_ != Kind::array && v.kind_ != Kind::object;
            out += '[';
            for (std::size_t i = 0; i < items_.size(); ++i) {
                if (i) out += scalars ? ", " : ",";
                if (!scalars) newline_indent(out, indent, depth + 1);
                items_[i].write(out, indent, depth + 1);
            }
            if (!scalars) newline_indent(out, indent, depth);
            out += ']';
            return;
        }
        case Kind::object: {
            if (fields_.empty()) {
                out += "{}";
                return;
            }
            out += '{';
            for (std::size_t i = 0; i < fields_.size(); ++i) {
                if (i) out += ',';
                newline_indent(out, indent, depth + 1);
                write_escaped(out, fields_[i].first);
                out += indent < 0 ? ":" : ": ";
                fields_[i].second.write(out, indent, depth + 1);
            }
            newline_indent(out, indent, depth);
            out += '}';
            return;
        }
    }
}

std::string JValue::dump(int indent) const {
    std::string out;
    write(out, indent, 0);
    out += '\n';
    return out;
}

void CsvWriter::meta(const std::string& key, const std::string& value) {
    lines_.push_back("# " + key + " = " + value);
}

void CsvWriter::header(const std::vector<std::string>& columns) {
    std::string line;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (i) line += ',';
        line += columns[i];
    }
    columns_ = columns.size();
    lines_.push_back(std::move(line));
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (columns_ && cells.size() != columns_)
        throw InvalidInput("csv row width does not match the header");
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) line += ',';
        line += cells[i];
    }
    lines_.push_back(std::move(line));
}

std::string CsvWriter::str() const {
    std::string out;
    for (const std::string& l : lines_) {
        out += l;
        out += '\n';
    }
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput("cannot write file: " + path);
    out << content;
    if (!out) throw InvalidInput("write failed: " + path);
}

JValue shape_to_json(const geometry::InclusionShape& shape) {
    using geometry::InclusionShape;
    JValue s = JValue::object();
    if (shape.kind == InclusionShape::Kind::disk) {
        s.set("kind", "disk");
        JValue p = JValue::array();
        p.push(JValue(shape.radius));
        s.set("params", std::move(p));
    } else {
        s.set("kind", "polygon");
        JValue p = JValue::array();
        for (Vec2 v : shape.vertices) {
            p.push(JValue(v.x));
            p.push(JValue(v.y));
        }
        s.set("params", std::move(p));
    }
    return s;
}

JValue crystal_to_json(const geometry::CrystalSpec& spec) {
    JValue lattice = JValue::object();
    lattice.set("a1", JValue::pair_of(spec.lattice.a1));
    lattice.set("a2", JValue::pair_of(spec.lattice.a2));
    JValue root = JValue::object();
    root.set("lattice", std::move(lattice));
    root.set("centers", JValue::array_of(spec.centers));
    root.set("lambdas", JValue::array_of(spec.lambdas));
    root.set("coefficients", JValue::array_of(spec.coefficients));
    root.set("shape", shape_to_json(spec.shape));
    root.set("r", JValue(spec.r));
    return root;
}

namespace {

using nlohmann::json;

void require_keys(const json& obj, const char* where,
                  std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) known = known || it.key() == k;
        if (!known)
            throw InvalidInput(std::string("unknown key \"") + it.key() + "\" in " + where);
    }
}

double as_number(const json& v, const char* what) {
    if (!v.is_number()) throw InvalidInput(std::string(what) + " must be a number");
    return v.get<double>();
}

Vec2 as_vec2(const json& v, const char* what) {
    if (!v.is_array() || v.size() != 2)
        throw InvalidInput(std::string(what) + " must be a [x, y] pair");
    return Vec2{as_number(v[0], what), as_number(v[1], what)};
}

std::vector<double> as_doubles(const json& v, const char* what) {
    if (!v.is_array()) throw InvalidInput(std::string(what) + " must be an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const json& e : v) out.push_back(as_number(e, what));
    return out;
}

std::vector<Vec2> as_vec2s(const json& v, const char* what) {
    if (!v.is_array()) throw InvalidInput(std::string(what) + " must be an array of pairs");
    std::vector<Vec2> out;
    out.reserve(v.size());
    for (const json& e : v) out.push_back(as_vec2(e, what));
    return out;
}

}  // namespace

geometry::InclusionShape shape_from_json(const nlohmann::json& s) {
    require_keys(s, "shape", {"kind", "params"});
    if (!s.contains("kind") || !s["kind"].is_string())
        throw InvalidInput("shape.kind must be \"disk\" or \"polygon\"");
    const std::string kind = s["kind"].get<std::string>();
    const std::vector<double> params =
        s.contains("params") ? as_doubles(s["params"], "shape.params") : std::vector<double>{};
    if (kind == "disk") {
        if (params.size() != 1) throw InvalidInput("disk shape needs params = [radius]");
        return geometry::InclusionShape::disk(params[0]);
    }
    if (kind == "polygon") {
        if (params.size() < 6 || params.size() % 2 != 0)
            throw InvalidInput("polygon shape needs params = [x0,y0,x1,y1,...], >= 3 vertices");
        std::vector<Vec2> verts;
        for (std::size_t i = 0; i + 1 < params.size(); i += 2)
            verts.push_back(Vec2{params[i], params[i + 1]});
        return geometry::InclusionShape::polygon(std::move(verts));
    }
    throw InvalidInput("shape.kind must be \"disk\" or \"polygon\"");
}

geometry::Lattice lattice_from_json(const nlohmann::json& l, const char* where) {
    require_keys(l, where, {"a1", "a2"});
    if (!l.contains("a1") || !l.contains("a2"))
        throw InvalidInput(std::string(where) + " needs a1 and a2");
    return geometry::Lattice::from_basis(as_vec2(l["a1"], "a1"), as_vec2(l["a2"], "a2"));
}

geometry::CrystalSpec crystal_from_json_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("crystal JSON parse error: ") + e.what());
    }
    if (!root.is_object()) throw InvalidInput("crystal JSON must be an object");
    require_keys(root, "crystal",
                 {"lattice", "centers", "lambdas", "coefficients", "shape", "r"});
    for (const char* k : {"lattice", "centers", "lambdas", "coefficients", "shape", "r"})
        if (!root.contains(k))
            throw InvalidInput(std::string("crystal JSON missing key \"") + k + "\"");
    geometry::CrystalSpec spec;
    spec.lattice = lattice_from_json(root["lattice"], "lattice");
    spec.centers = as_vec2s(root["centers"], "centers");
    spec.lambdas = as_doubles(root["lambdas"], "lambdas");
    spec.coefficients = as_doubles(root["coefficients"], "coefficients");
    spec.shape = shape_from_json(root["shape"]);
    spec.r = as_number(root["r"], "r");
    return spec;
}

namespace {

json parse_object(const std::string& text, const char* what) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidInput(std::string(what) + " JSON parse error: " + e.what());
    }
    if (!root.is_object()) throw InvalidInput(std::string(what) + " JSON must be an object");
    return root;
}

}  // namespace

geometry::InclusionShape shape_from_json_text(const std::string& text) {
    return shape_from_json(parse_object(text, "shape"));
}

design::DesignInputs design_inputs_from_json_text(const std::string& text) {
    const json root = parse_object(text, "design inputs");
    require_keys(root, "design inputs",
                 {"targets", "shape", "lattice0", "alpha0", "margin", "r", "centers"});
    if (!root.contains("targets")) throw InvalidInput("design inputs need \"targets\"");
    design::DesignInputs inputs;
    inputs.targets = as_doubles(root["targets"], "targets");
    if (root.contains("shape")) inputs.shape = shape_from_json(root["shape"]);
    if (root.contains("lattice0"))
        inputs.lattice0 = lattice_from_json(root["lattice0"], "lattice0");
    if (root.contains("alpha0")) inputs.alpha0 = as_number(root["alpha0"], "alpha0");
    if (root.contains("margin")) inputs.margin = as_number(root["margin"], "margin");
    if (root.contains("r")) inputs.r = as_number(root["r"], "r");
    if (root.contains("centers")) inputs.centers = as_vec2s(root["centers"], "centers");
    return inputs;
}

ModelSpec model_from_json_text(const std::string& text) {
    const json root = parse_object(text, "model");
    require_keys(root, "model", {"alpha", "lattice", "shift"});
    for (const char* k : {"alpha", "lattice"})
        if (!root.contains(k))
            throw InvalidInput(std::string("model JSON missing key \"") + k + "\"");
    ModelSpec spec;
    spec.alpha = as_number(root["alpha"], "alpha");
    spec.lattice = lattice_from_json(root["lattice"], "lattice");
    if (root.contains("shift")) spec.shift = as_vec2(root["shift"], "shift");
    return spec;
}

GfunJob gfun_job_from_json_text(const std::string& text) {
    const json root = parse_object(text, "gfun job");
    require_keys(root, "gfun job", {"lattice", "theta", "E_list"});
    for (const char* k : {"lattice", "theta", "E_list"})
        if (!root.contains(k))
            throw InvalidInput(std::string("gfun JSON missing key \"") + k + "\"");
    GfunJob job;
    job.lattice = lattice_from_json(root["lattice"], "lattice");
    job.theta_coords = as_vec2(root["theta"], "theta");
    job.E_list = as_doubles(root["E_list"], "E_list");
    return job;
}

}  // namespace bandgap::serialize
