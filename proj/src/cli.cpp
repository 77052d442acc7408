#include "bandgap/cli.hpp"

#include <complex>
#include <cstdio>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bandgap/approx.hpp"
#include "bandgap/bloch.hpp"
#include "bandgap/design.hpp"
#include "bandgap/errors.hpp"
#include "bandgap/geometry.hpp"
#include "bandgap/latticesum.hpp"
#include "bandgap/parallel.hpp"
#include "bandgap/pointspec.hpp"
#include "bandgap/serialize.hpp"

namespace bandgap::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using serialize::CsvWriter;
using serialize::format_double;
using serialize::JValue;

struct Options {
    std::string in;
    std::string out = ".";
    int jobs = 0;       // 0: BANDGAP_FORGE_JOBS, then hardware
    int grid = 8;       // Brillouin grid m (m x m samples)
    int mesh = 64;      // fiber mesh n (n x n cells)
    int n_bands = 12;
    double tol = -1.0;  // < 0: per-command default
    std::string r_list;
};

json parse_json(const std::string& text, const char* where) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded())
        throw InvalidInput(std::string(where) + ": malformed JSON");
    if (!j.is_object())
        throw InvalidInput(std::string(where) + ": expected a JSON object");
    return j;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const char* where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok)
            throw InvalidInput(std::string(where) + ": unknown key '" + it.key() + "'");
    }
}

double get_number(const json& j, const char* key, const char* where) {
    if (!j.contains(key))
        throw InvalidInput(std::string(where) + ": missing key '" + key + "'");
    const auto& v = j.at(key);
    if (!v.is_number())
        throw InvalidInput(std::string(where) + ": '" + key + "' must be a number");
    return v.get<double>();
}

double get_number_or(const json& j, const char* key, double fallback, const char* where) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_number())
        throw InvalidInput(std::string(where) + ": '" + key + "' must be a number");
    return v.get<double>();
}

std::string out_path(const Options& o, const std::string& name) {
    std::error_code ec;
    fs::create_directories(o.out, ec);
    if (ec) throw InvalidInput("cannot create output directory " + o.out);
    return (fs::path(o.out) / name).string();
}

std::vector<double> parse_r_list(const std::string& text) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t next = text.find(',', pos);
        if (next == std::string::npos) next = text.size();
        const std::string tok = text.substr(pos, next - pos);
        try {
            std::size_t used = 0;
            const double v = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            out.push_back(v);
        } catch (const std::exception&) {
            throw InvalidInput("--r-list: cannot parse '" + tok + "' as a number");
        }
        pos = next + 1;
    }
    if (out.empty()) throw InvalidInput("--r-list: empty list");
    return out;
}

JValue base_config(const char* command, const Options& o) {
    JValue cfg = JValue::object();
    cfg.set("command", command);
    cfg.set("in", o.in);
    return cfg;
}

void csv_base_meta(CsvWriter& csv, const char* command, const Options& o) {
    csv.meta("command", command);
    csv.meta("in", o.in);
}

// ---- crystal-bearing jobs ----------------------------------------------

struct CrystalJob {
    geometry::CrystalSpec spec;
    json body;
};

CrystalJob load_crystal_job(const Options& o, std::initializer_list<const char*> extra,
                            const char* where) {
    const json j = parse_json(serialize::read_file(o.in), where);
    std::vector<const char*> allowed{"crystal"};
    allowed.insert(allowed.end(), extra.begin(), extra.end());
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok)
            throw InvalidInput(std::string(where) + ": unknown key '" + it.key() + "'");
    }
    if (!j.contains("crystal"))
        throw InvalidInput(std::string(where) + ": missing key 'crystal'");
    CrystalJob job;
    job.spec = serialize::crystal_from_json_text(j.at("crystal").dump());
    job.body = j;
    return job;
}

bloch::FiberKind parse_kind(const json& j, const char* where) {
    if (!j.contains("kind")) return bloch::FiberKind::TM;
    const auto& v = j.at("kind");
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s == "tm") return bloch::FiberKind::TM;
        if (s == "te") return bloch::FiberKind::TE;
        if (s == "aux") return bloch::FiberKind::AUX;
    }
    throw InvalidInput(std::string(where) + ": 'kind' must be \"tm\", \"te\" or \"aux\"");
}

const char* kind_name(bloch::FiberKind kind) {
    switch (kind) {
        case bloch::FiberKind::TM: return "tm";
        case bloch::FiberKind::TE: return "te";
        default: return "aux";
    }
}

// ---- subcommand bodies ---------------------------------------------------

int cmd_design(const Options& o) {
    const double tol = o.tol < 0.0 ? 1e-10 : o.tol;
    const design::DesignInputs inputs =
        serialize::design_inputs_from_json_text(serialize::read_file(o.in));
    const design::DesignResult result = design::design_crystal(inputs, tol);
    const design::DesignReport& rep = result.report;

    JValue cfg = base_config("design", o);
    cfg.set("tol", tol);

    JValue crystal = JValue::object();
    crystal.set("config", cfg);
    crystal.set("crystal", serialize::crystal_to_json(result.spec));
    serialize::write_file(out_path(o, "crystal.json"), crystal.dump() + "\n");

    JValue report = JValue::object();
    report.set("config", base_config("design", o).set("tol", tol));
    report.set("k", rep.k);
    report.set("alpha0", rep.alpha0);
    report.set("alpha_k", rep.alpha_k);
    report.set("eta", rep.eta);
    report.set("margin", rep.margin);
    report.set("window_lo", rep.window_lo);
    report.set("window_hi", rep.window_hi);
    JValue edges = JValue::object();
    edges.set("E0", rep.edges.E0);
    edges.set("E1", rep.edges.E1);
    edges.set("E_tilde", rep.edges.E_tilde);
    edges.set("E2", rep.edges.E2);
    report.set("edges", edges);
    report.set("threshold", rep.threshold);
    report.set("r_max", rep.r_max);
    report.set("self_energy", rep.self_energy);
    serialize::write_file(out_path(o, "design_report.json"), report.dump() + "\n");

    std::string txt;
    txt += "# bandgap-forge design\n";
    txt += "# in = " + o.in + "\n";
    txt += "# tol = " + format_double(tol) + "\n";
    txt += "targets                ";
    for (double l : result.spec.lambdas) txt += " " + format_double(l);
    txt += "\n";
    txt += "scale k                 " + format_double(rep.k) + "\n";
    txt += "base coupling alpha0    " + format_double(rep.alpha0) + "\n";
    txt += "scaled coupling alpha_k " + format_double(rep.alpha_k) + "\n";
    txt += "threshold (base)        " + format_double(rep.threshold) + "\n";
    txt += "window                  [" + format_double(rep.window_lo) + ", " +
           format_double(rep.window_hi) + "]\n";
    txt += "gap (scaled edges)      (" + format_double(rep.edges.E1) + ", " +
           format_double(rep.edges.E2) + ")\n";
    txt += "eta                     " + format_double(rep.eta) + "\n";
    txt += "margin                  " + format_double(rep.margin) + "\n";
    txt += "r_max                   " + format_double(rep.r_max) + "\n";
    txt += "chosen r                " + format_double(result.spec.r) + "\n";
    txt += "self energy C(Omega)    " + format_double(rep.self_energy) + "\n";
    serialize::write_file(out_path(o, "report.txt"), txt);
    std::printf("design: wrote crystal.json, design_report.json, report.txt to %s\n",
                o.out.c_str());
    return 0;
}

int cmd_selfenergy(const Options& o) {
    const double tol = o.tol < 0.0 ? 1e-8 : o.tol;
    const geometry::InclusionShape shape =
        serialize::shape_from_json_text(serialize::read_file(o.in));
    const double value = design::log_self_energy(shape, tol);
    JValue out = JValue::object();
    out.set("config", base_config("selfenergy", o).set("tol", tol));
    out.set("shape", serialize::shape_to_json(shape));
    out.set("area", shape.area());
    out.set("value", value);
    serialize::write_file(out_path(o, "selfenergy.json"), out.dump() + "\n");
    std::printf("selfenergy: C(Omega) = %s\n", format_double(value).c_str());
    return 0;
}

int cmd_edges(const Options& o) {
    const double tol = o.tol < 0.0 ? 1e-12 : o.tol;
    const serialize::ModelSpec ms = serialize::model_from_json_text(serialize::read_file(o.in));
    pointspec::PointInteractionModel model;
    model.alpha = ms.alpha;
    model.lattice = ms.lattice;
    model.shift = ms.shift;
    const double threshold = pointspec::threshold_alpha(model.lattice, tol);
    const pointspec::EdgeSet edges = pointspec::band_edges(model, tol);
    const pointspec::Spectrum spectrum = pointspec::spectrum_pi(model, tol);

    JValue out = JValue::object();
    out.set("config", base_config("edges", o).set("tol", tol));
    out.set("alpha", model.alpha);
    out.set("threshold_alpha", threshold);
    out.set("E0", edges.E0);
    out.set("E1", edges.E1);
    out.set("E_tilde", edges.E_tilde);
    out.set("E2", edges.E2);
    JValue bands = JValue::array();
    for (const auto& band : spectrum.bands) {
        JValue iv = JValue::array();
        iv.push(band.lo);
        if (std::isfinite(band.hi))
            iv.push(band.hi);
        else
            iv.push(JValue());
        bands.push(iv);
    }
    out.set("spectrum", bands);
    serialize::write_file(out_path(o, "edges.json"), out.dump() + "\n");
    std::printf("edges: E0 = %s, band ends at E1 = %s, resumes at E2 = %s\n",
                format_double(edges.E0).c_str(), format_double(edges.E1).c_str(),
                format_double(edges.E2).c_str());
    return 0;
}

int cmd_gfun(const Options& o) {
    const double tol = o.tol < 0.0 ? 1e-12 : o.tol;
    const serialize::GfunJob job = serialize::gfun_job_from_json_text(serialize::read_file(o.in));
    const latticesum::GFunEvaluator ev(job.lattice, tol);
    const Vec2 theta{job.theta_coords.x * job.lattice.b1.x +
                         job.theta_coords.y * job.lattice.b2.x,
                     job.theta_coords.x * job.lattice.b1.y +
                         job.theta_coords.y * job.lattice.b2.y};
    CsvWriter csv;
    csv_base_meta(csv, "gfun", o);
    csv.meta("tol", tol);
    csv.meta("t1", job.theta_coords.x);
    csv.meta("t2", job.theta_coords.y);
    csv.header({"E", "t1", "t2", "g"});
    for (double E : job.E_list) {
        const double g = latticesum::g_lattice(E, theta, ev);
        csv.row({format_double(E), format_double(job.theta_coords.x),
                 format_double(job.theta_coords.y), format_double(g)});
    }
    serialize::write_file(out_path(o, "gfun.csv"), csv.str());
    std::printf("gfun: %zu values written to gfun.csv\n", job.E_list.size());
    return 0;
}

struct BandRun {
    bloch::FiberKind kind;
    double aux_lambda = 0.0;
    double r = 0.0;
    bloch::BandSet set;
};

BandRun run_band_set(const CrystalJob& job, const Options& o, const char* where) {
    const bloch::FiberKind kind = parse_kind(job.body, where);
    double aux_lambda = 0.0;
    if (kind == bloch::FiberKind::AUX) {
        if (!job.body.contains("aux_lambda"))
            throw InvalidInput(std::string(where) +
                               ": kind \"aux\" needs key 'aux_lambda'");
        aux_lambda = get_number(job.body, "aux_lambda", where);
    }
    const double r = get_number_or(job.body, "r", job.spec.r, where);
    BandRun run{kind, aux_lambda, r,
                bloch::band_set(job.spec, r, kind, o.grid, o.n_bands, o.mesh, o.jobs,
                                aux_lambda)};
    return run;
}

void write_band_files(const BandRun& run, const Options& o, const char* command) {
    const std::string stem = std::string("bands_") + kind_name(run.kind);
    CsvWriter csv;
    csv_base_meta(csv, command, o);
    csv.meta("kind", kind_name(run.kind));
    if (run.kind == bloch::FiberKind::AUX) csv.meta("aux_lambda", run.aux_lambda);
    csv.meta("r", run.r);
    csv.meta("grid", format_double(o.grid));
    csv.meta("mesh", format_double(o.mesh));
    csv.meta("n_bands", format_double(o.n_bands));
    csv.header({"theta_index", "s1", "s2", "band", "value", "err"});
    for (const auto& sample : run.set.samples)
        for (std::size_t b = 0; b < sample.values.size(); ++b)
            csv.row({std::to_string(sample.index), format_double(sample.s1),
                     format_double(sample.s2), std::to_string(b + 1),
                     format_double(sample.values[b]), format_double(sample.errs[b])});
    serialize::write_file(out_path(o, stem + ".csv"), csv.str());

    JValue out = JValue::object();
    JValue cfg = base_config(command, o);
    cfg.set("kind", kind_name(run.kind));
    if (run.kind == bloch::FiberKind::AUX) cfg.set("aux_lambda", run.aux_lambda);
    cfg.set("r", run.r);
    cfg.set("grid", o.grid);
    cfg.set("mesh", o.mesh);
    cfg.set("n_bands", o.n_bands);
    out.set("config", cfg);
    JValue bands = JValue::array();
    for (const auto& band : run.set.bands) {
        JValue b = JValue::object();
        b.set("lo", band.lo);
        b.set("hi", band.hi);
        b.set("err", band.err);
        bands.push(b);
    }
    out.set("bands", bands);
    serialize::write_file(out_path(o, stem + ".json"), out.dump() + "\n");

    std::string gp;
    gp += "# gnuplot script for " + stem + ".csv\n";
    gp += "set datafile separator \",\"\n";
    gp += "set key off\n";
    gp += "set xlabel \"theta sample\"\n";
    gp += "set ylabel \"fiber eigenvalue\"\n";
    gp += "plot \"" + stem + ".csv\" every ::1 using 1:5 with points pt 7 ps 0.4\n";
    serialize::write_file(out_path(o, stem + ".gp"), gp);
}

int cmd_bands(const Options& o) {
    const CrystalJob job = load_crystal_job(o, {"kind", "aux_lambda", "r"}, "bands");
    const BandRun run = run_band_set(job, o, "bands");
    write_band_files(run, o, "bands");
    std::printf("bands: %zu bands over a %d x %d grid written to bands_%s.csv\n",
                run.set.bands.size(), o.grid, o.grid, kind_name(run.kind));
    return 0;
}

int cmd_gaps(const Options& o) {
    const CrystalJob job =
        load_crystal_job(o, {"kind", "aux_lambda", "r", "window", "min_width"}, "gaps");
    if (!job.body.contains("window"))
        throw InvalidInput("gaps: missing key 'window' ([lo, hi])");
    const auto& w = job.body.at("window");
    if (!w.is_array() || w.size() != 2 || !w[0].is_number() || !w[1].is_number())
        throw InvalidInput("gaps: 'window' must be [lo, hi]");
    const double lo = w[0].get<double>(), hi = w[1].get<double>();
    const double min_width = get_number_or(job.body, "min_width", -1.0, "gaps");

    const BandRun run = run_band_set(job, o, "gaps");
    const std::vector<bloch::GapInterval> gaps =
        bloch::find_gaps(run.set, lo, hi, min_width);

    JValue out = JValue::object();
    JValue cfg = base_config("gaps", o);
    cfg.set("kind", kind_name(run.kind));
    cfg.set("r", run.r);
    cfg.set("grid", o.grid);
    cfg.set("mesh", o.mesh);
    cfg.set("n_bands", o.n_bands);
    cfg.set("window_lo", lo);
    cfg.set("window_hi", hi);
    out.set("config", cfg);
    JValue list = JValue::array();
    for (const auto& gap : gaps) {
        JValue g = JValue::object();
        g.set("lo", gap.lo);
        g.set("hi", gap.hi);
        list.push(g);
    }
    out.set("gaps", list);
    JValue bands = JValue::array();
    for (const auto& band : run.set.bands) {
        JValue b = JValue::object();
        b.set("lo", band.lo);
        b.set("hi", band.hi);
        b.set("err", band.err);
        bands.push(b);
    }
    out.set("bands", bands);
    serialize::write_file(out_path(o, "gaps.json"), out.dump() + "\n");
    std::printf("gaps: %zu gap(s) in [%s, %s] written to gaps.json\n", gaps.size(),
                format_double(lo).c_str(), format_double(hi).c_str());
    return 0;
}

int cmd_certify_tm(const Options& o) {
    const CrystalJob job = load_crystal_job(o, {"lambda_index", "r"}, "certify-tm");
    const double idx = get_number_or(job.body, "lambda_index", 0.0, "certify-tm");
    if (idx < 0.0 || idx != static_cast<double>(static_cast<std::size_t>(idx)))
        throw InvalidInput("certify-tm: 'lambda_index' must be a nonnegative integer");
    const std::size_t lambda_index = static_cast<std::size_t>(idx);
    const double r = get_number_or(job.body, "r", job.spec.r, "certify-tm");

    const bloch::TMCertificate cert =
        bloch::tm_gap_report(job.spec, r, lambda_index, o.grid, o.mesh, o.jobs);
    const bool pass = cert.tm_pass && cert.aux_pass;

    JValue out = JValue::object();
    JValue cfg = base_config("certify-tm", o);
    cfg.set("lambda_index", lambda_index);
    cfg.set("r", r);
    cfg.set("grid", o.grid);
    cfg.set("mesh", o.mesh);
    out.set("config", cfg);
    out.set("lambda", cert.lambda);
    out.set("tm_distance", cert.tm_distance);
    out.set("tm_required", cert.tm_required);
    out.set("tm_pass", cert.tm_pass);
    JValue gap = JValue::object();
    gap.set("lo", cert.tm_gap.lo);
    gap.set("hi", cert.tm_gap.hi);
    out.set("tm_gap", gap);
    out.set("aux_distance", cert.aux_distance);
    out.set("aux_error", cert.aux_error);
    out.set("aux_margin", cert.aux_margin);
    out.set("aux_required", cert.aux_required);
    out.set("eta", cert.eta);
    out.set("aux_pass", cert.aux_pass);
    out.set("pass", pass);
    serialize::write_file(out_path(o, "certify_tm.json"), out.dump() + "\n");

    std::printf("certify-tm: lambda = %s  tm %s (distance %s >= %s)  aux %s (margin %s)\n",
                format_double(cert.lambda).c_str(), cert.tm_pass ? "PASS" : "FAIL",
                format_double(cert.tm_distance).c_str(),
                format_double(cert.tm_required).c_str(), cert.aux_pass ? "PASS" : "FAIL",
                format_double(cert.aux_margin).c_str());
    return pass ? 0 : 1;
}

int cmd_overlap_te(const Options& o) {
    const CrystalJob job = load_crystal_job(o, {"n0", "r"}, "overlap-te");
    const double n0d = get_number_or(job.body, "n0", 4.0, "overlap-te");
    if (n0d < 2.0 || n0d != static_cast<double>(static_cast<int>(n0d)))
        throw InvalidInput("overlap-te: 'n0' must be an integer >= 2");
    const int n0 = static_cast<int>(n0d);
    const double r = get_number_or(job.body, "r", job.spec.r, "overlap-te");

    const bloch::TEOverlapReport report =
        bloch::te_overlap_check(job.spec, r, n0, o.grid, o.mesh, o.jobs);

    JValue out = JValue::object();
    JValue cfg = base_config("overlap-te", o);
    cfg.set("n0", n0);
    cfg.set("r", r);
    cfg.set("grid", o.grid);
    cfg.set("mesh", o.mesh);
    out.set("config", cfg);
    out.set("overlap", JValue::array_of(report.overlap));
    out.set("all_overlap", report.all_overlap);
    out.set("covered_hi", report.covered_hi);
    JValue bands = JValue::array();
    for (const auto& band : report.bands.bands) {
        JValue b = JValue::object();
        b.set("lo", band.lo);
        b.set("hi", band.hi);
        b.set("err", band.err);
        bands.push(b);
    }
    out.set("te_bands", bands);
    serialize::write_file(out_path(o, "overlap_te.json"), out.dump() + "\n");
    std::printf("overlap-te: consecutive TE bands %s up to band %d; [0, %s] covered\n",
                report.all_overlap ? "overlap" : "DO NOT overlap", n0,
                format_double(report.covered_hi).c_str());
    return report.all_overlap ? 0 : 1;
}

int cmd_converge(const Options& o) {
    const CrystalJob job = load_crystal_job(
        o, {"target", "nu", "r_list", "m_side", "order", "source"}, "converge");
    const double td = get_number_or(job.body, "target", 0.0, "converge");
    if (td < 0.0 || td != static_cast<double>(static_cast<std::size_t>(td)))
        throw InvalidInput("converge: 'target' must be a nonnegative integer");
    const std::size_t target = static_cast<std::size_t>(td);

    std::complex<double> nu{0.0, 2.0};
    if (job.body.contains("nu")) {
        const auto& v = job.body.at("nu");
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
            throw InvalidInput("converge: 'nu' must be [re, im]");
        nu = {v[0].get<double>(), v[1].get<double>()};
    }

    std::vector<double> r_list;
    if (!o.r_list.empty()) {
        r_list = parse_r_list(o.r_list);
    } else if (job.body.contains("r_list")) {
        const auto& v = job.body.at("r_list");
        if (!v.is_array() || v.empty())
            throw InvalidInput("converge: 'r_list' must be a nonempty array");
        for (const auto& item : v) {
            if (!item.is_number())
                throw InvalidInput("converge: 'r_list' entries must be numbers");
            r_list.push_back(item.get<double>());
        }
    } else {
        throw InvalidInput("converge: give --r-list or an 'r_list' key");
    }

    const double msd = get_number_or(job.body, "m_side", 1.0, "converge");
    if (msd < 1.0 || msd != static_cast<double>(static_cast<int>(msd)))
        throw InvalidInput("converge: 'm_side' must be a positive integer");
    const int m_side = static_cast<int>(msd);
    const double od = get_number_or(job.body, "order", 10.0, "converge");
    const int order = static_cast<int>(od);

    approx::Gaussian source;
    if (target >= job.spec.centers.size())
        throw InvalidInput("converge: 'target' out of range");
    const Vec2 base = job.spec.centers[target];  // physical coordinates
    source.center = {base.x + 0.31, base.y + 0.17};
    source.sigma = 0.25;
    if (job.body.contains("source")) {
        const auto& s = job.body.at("source");
        if (!s.is_object()) throw InvalidInput("converge: 'source' must be an object");
        check_keys(s, {"center", "sigma"}, "converge source");
        if (s.contains("center")) {
            const auto& c = s.at("center");
            if (!c.is_array() || c.size() != 2 || !c[0].is_number() || !c[1].is_number())
                throw InvalidInput("converge: 'source.center' must be [x, y]");
            source.center = {c[0].get<double>(), c[1].get<double>()};
        }
        source.sigma = get_number_or(s, "sigma", source.sigma, "converge source");
    }

    const approx::ConvergenceStudy study = approx::convergence_study(
        job.spec, target, nu, r_list, source, m_side, order, o.jobs);

    CsvWriter csv;
    csv_base_meta(csv, "converge", o);
    csv.meta("target", format_double(static_cast<double>(target)));
    csv.meta("nu_re", nu.real());
    csv.meta("nu_im", nu.imag());
    csv.meta("m_side", format_double(m_side));
    csv.meta("order", format_double(order));
    csv.meta("source_x", source.center.x);
    csv.meta("source_y", source.center.y);
    csv.meta("source_sigma", source.sigma);
    csv.meta("residual_log", study.residual_log);
    csv.meta("residual_r", study.residual_r);
    csv.meta("residual_sqrt", study.residual_sqrt);
    csv.header({"r", "inv_log_r", "resolvent_error", "F_error", "C_error",
                "fitted_kappa"});
    for (const auto& row : study.rows)
        csv.row({format_double(row.r), format_double(row.inv_log_r),
                 format_double(row.resolvent_error), format_double(row.F_error),
                 format_double(row.C_error), format_double(study.kappa)});
    serialize::write_file(out_path(o, "converge.csv"), csv.str());

    JValue out = JValue::object();
    JValue cfg = base_config("converge", o);
    cfg.set("target", target);
    cfg.set("nu", JValue::array().push(nu.real()).push(nu.imag()));
    cfg.set("r_list", JValue::array_of(r_list));
    cfg.set("m_side", m_side);
    cfg.set("order", order);
    out.set("config", cfg);
    out.set("kappa", study.kappa);
    out.set("residual_log", study.residual_log);
    out.set("residual_r", study.residual_r);
    out.set("residual_sqrt", study.residual_sqrt);
    serialize::write_file(out_path(o, "converge.json"), out.dump() + "\n");
    std::printf("converge: kappa = %s, fit residual %s (vs r: %s, sqrt r: %s)\n",
                format_double(study.kappa).c_str(),
                format_double(study.residual_log).c_str(),
                format_double(study.residual_r).c_str(),
                format_double(study.residual_sqrt).c_str());
    return 0;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{
        "bandgap-forge: designs thin-rod photonic crystals whose TM spectrum "
        "avoids prescribed frequencies, and certifies the design through band "
        "structures, point-interaction band edges and resolvent convergence."};
    app.require_subcommand(1);

    Options o;

    auto add_io = [&](CLI::App* sub) {
        sub->add_option("--in", o.in, "input JSON path")->required();
        sub->add_option("--out", o.out, "output directory")->capture_default_str();
    };
    auto add_jobs = [&](CLI::App* sub) {
        sub->add_option("--jobs", o.jobs,
                        "worker threads (0: BANDGAP_FORGE_JOBS env, then hardware)")
            ->capture_default_str();
    };
    auto add_grid_mesh = [&](CLI::App* sub) {
        sub->add_option("--grid", o.grid, "Brillouin grid m (m x m samples)")
            ->capture_default_str();
        sub->add_option("--mesh", o.mesh, "fiber mesh n (n x n cells)")
            ->capture_default_str();
    };

    CLI::App* design = app.add_subcommand(
        "design",
        "place the targets in TM gaps; writes crystal.json, design_report.json, "
        "report.txt");
    add_io(design);
    design->add_option("--tol", o.tol, "root/quadrature tolerance (default 1e-10)");

    CLI::App* selfenergy = app.add_subcommand(
        "selfenergy",
        "log self-energy C(Omega) of a shape; writes selfenergy.json");
    add_io(selfenergy);
    selfenergy->add_option("--tol", o.tol, "quadrature tolerance (default 1e-8)");

    CLI::App* edges = app.add_subcommand(
        "edges",
        "point-interaction band edges and spectrum for {alpha, lattice, shift}; "
        "writes edges.json");
    add_io(edges);
    edges->add_option("--tol", o.tol, "root tolerance (default 1e-12)");

    CLI::App* gfun = app.add_subcommand(
        "gfun",
        "lattice resolvent diagonal g(E, theta); writes gfun.csv with columns "
        "E, t1, t2, g (theta = t1 b1 + t2 b2)");
    add_io(gfun);
    gfun->add_option("--tol", o.tol, "lattice-sum tolerance (default 1e-12)");

    CLI::App* bands = app.add_subcommand(
        "bands",
        "Floquet-Bloch bands; writes bands_<kind>.csv with columns theta_index, "
        "s1, s2, band, value, err, plus bands_<kind>.json and a gnuplot script "
        "bands_<kind>.gp");
    add_io(bands);
    add_jobs(bands);
    add_grid_mesh(bands);
    bands->add_option("--bands", o.n_bands, "bands per fiber")->capture_default_str();

    CLI::App* gaps = app.add_subcommand(
        "gaps",
        "spectral gaps of inflated bands inside a window; writes gaps.json");
    add_io(gaps);
    add_jobs(gaps);
    add_grid_mesh(gaps);
    gaps->add_option("--bands", o.n_bands, "bands per fiber")->capture_default_str();

    CLI::App* certify = app.add_subcommand(
        "certify-tm",
        "TM gap certificate: band distance vs lambda r^2 |ln r| and the "
        "auxiliary-family margin; writes certify_tm.json; exit 1 when it fails");
    add_io(certify);
    add_jobs(certify);
    add_grid_mesh(certify);

    CLI::App* overlap = app.add_subcommand(
        "overlap-te",
        "TE band overlap check b_n > a_{n+1}; writes overlap_te.json; exit 1 "
        "when consecutive bands separate");
    add_io(overlap);
    add_jobs(overlap);
    add_grid_mesh(overlap);

    CLI::App* converge = app.add_subcommand(
        "converge",
        "resolvent error against the point-interaction limit over an r list; "
        "writes converge.csv with columns r, inv_log_r, resolvent_error, "
        "F_error, C_error, fitted_kappa, plus converge.json");
    add_io(converge);
    add_jobs(converge);
    converge->add_option("--r-list", o.r_list, "comma-separated decreasing radii");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        o.jobs = parallel::resolve_jobs(o.jobs);
        if (design->parsed()) return cmd_design(o);
        if (selfenergy->parsed()) return cmd_selfenergy(o);
        if (edges->parsed()) return cmd_edges(o);
        if (gfun->parsed()) return cmd_gfun(o);
        if (bands->parsed()) return cmd_bands(o);
        if (gaps->parsed()) return cmd_gaps(o);
        if (certify->parsed()) return cmd_certify_tm(o);
        if (overlap->parsed()) return cmd_overlap_te(o);
        if (converge->parsed()) return cmd_converge(o);
        std::fprintf(stderr, "bandgap-forge: no subcommand\n");
        return 2;
    } catch (const InvalidInput& e) {
        std::fprintf(stderr, "bandgap-forge: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "bandgap-forge: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "bandgap-forge: internal error: %s\n", e.what());
        return 1;
    }
}

}  // namespace bandgap::cli
