#include <doctest.h>
#include <json.hpp>

#include <complex>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "bandgap/approx.hpp"
#include "bandgap/bloch.hpp"
#include "bandgap/cli.hpp"
#include "bandgap/design.hpp"
#include "bandgap/geometry.hpp"
#include "bandgap/latticesum.hpp"
#include "bandgap/parallel.hpp"
#include "bandgap/pointspec.hpp"
#include "bandgap/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bandgap;
using serialize::JValue;

namespace {

int run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "bandgap-forge");
    std::vector<char*> argv;
    argv.reserve(args.size());
    for (auto& a : args) argv.push_back(a.data());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

// scratch directory per test case, wiped on both ends
struct Scratch {
    fs::path dir;
    explicit Scratch(const std::string& tag)
        : dir(fs::temp_directory_path() / ("bandgap_cli_" + tag)) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
    std::string put(const std::string& name, const std::string& text) const {
        const std::string path = (dir / name).string();
        serialize::write_file(path, text);
        return path;
    }
    std::string at(const std::string& name) const { return (dir / name).string(); }
};

json load_json(const std::string& path) {
    return json::parse(serialize::read_file(path));
}

struct Csv {
    std::map<std::string, std::string> meta;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t next = line.find(',', pos);
        if (next == std::string::npos) {
            out.push_back(line.substr(pos));
            return out;
        }
        out.push_back(line.substr(pos, next - pos));
        pos = next + 1;
    }
}

Csv load_csv(const std::string& path) {
    Csv out;
    const std::string text = serialize::read_file(path);
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::size_t eq = line.find(" = ");
            if (eq != std::string::npos)
                out.meta[line.substr(2, eq - 2)] = line.substr(eq + 3);
        } else if (out.header.empty()) {
            out.header = split_commas(line);
        } else {
            out.rows.push_back(split_commas(line));
        }
    }
    return out;
}

// one design, shared by the crystal-consuming subcommand tests
const design::DesignResult& designed() {
    static const design::DesignResult result = [] {
        design::DesignInputs in;
        in.targets = {1.0};
        return design::design_crystal(in, 1e-10);
    }();
    return result;
}

std::string crystal_job_text(std::vector<std::pair<std::string, JValue>> extra = {}) {
    JValue job = JValue::object();
    job.set("crystal", serialize::crystal_to_json(designed().spec));
    for (auto& [key, value] : extra) job.set(key, std::move(value));
    return job.dump() + "\n";
}

}  // namespace

TEST_CASE("worker count resolution: flag, then env, then hardware") {
    setenv("BANDGAP_FORGE_JOBS", "3", 1);
    CHECK(parallel::resolve_jobs(0) == 3);
    CHECK(parallel::resolve_jobs(7) == 7);  // explicit request wins

    setenv("BANDGAP_FORGE_JOBS", "garbage", 1);
    CHECK(parallel::resolve_jobs(0) >= 1);
    setenv("BANDGAP_FORGE_JOBS", "0", 1);
    CHECK(parallel::resolve_jobs(0) >= 1);

    unsetenv("BANDGAP_FORGE_JOBS");
    CHECK(parallel::resolve_jobs(0) >= 1);
}

TEST_CASE("usage errors exit 2, help exits 0") {
    CHECK(run_cli({}) == 2);
    CHECK(run_cli({"frobnicate"}) == 2);
    CHECK(run_cli({"edges"}) == 2);  // --in is required
    CHECK(run_cli({"--help"}) == 0);
}

TEST_CASE("edges: json mirrors the edge solver and the spectrum shape") {
    Scratch s("edges");
    const geometry::Lattice sq = geometry::Lattice::square();
    const double thr = pointspec::threshold_alpha(sq);

    // below threshold: two spectral components, second an unbounded ray
    const double alpha = thr - 0.5;
    const std::string in = s.put("model.json",
                                 std::string("{\"alpha\": ") +
                                     serialize::format_double(alpha) +
                                     ", \"lattice\": {\"a1\": [1, 0], \"a2\": [0, 1]}}");
    CHECK(run_cli({"edges", "--in", in, "--out", s.at("out")}) == 0);

    const json j = load_json(s.at("out") + "/edges.json");
    CHECK(j.at("config").at("command").get<std::string>() == "edges");
    CHECK(j.at("alpha").get<double>() == alpha);
    CHECK(j.at("threshold_alpha").get<double>() == thr);

    const pointspec::EdgeSet want =
        pointspec::band_edges({alpha, sq, {0.0, 0.0}}, 1e-12);
    CHECK(j.at("E0").get<double>() == want.E0);
    CHECK(j.at("E1").get<double>() == want.E1);
    CHECK(j.at("E_tilde").get<double>() == want.E_tilde);
    CHECK(j.at("E2").get<double>() == want.E2);

    const json spec = j.at("spectrum");
    REQUIRE(spec.size() == 2);
    CHECK(spec[0][0].get<double>() == want.E0);
    CHECK(spec[0][1].get<double>() == want.E1);
    CHECK(spec[1][0].get<double>() == want.E2);
    CHECK(spec[1][1].is_null());

    // above threshold the components merge into one ray
    const std::string in2 = s.put("model2.json",
                                  std::string("{\"alpha\": ") +
                                      serialize::format_double(thr + 0.5) +
                                      ", \"lattice\": {\"a1\": [1, 0], \"a2\": [0, 1]}}");
    CHECK(run_cli({"edges", "--in", in2, "--out", s.at("out2")}) == 0);
    const json j2 = load_json(s.at("out2") + "/edges.json");
    REQUIRE(j2.at("spectrum").size() == 1);
    CHECK(j2.at("spectrum")[0][1].is_null());
}

TEST_CASE("gfun: csv rows reproduce the lattice evaluator") {
    Scratch s("gfun");
    const std::string in = s.put(
        "job.json",
        "{\"lattice\": {\"a1\": [1, 0], \"a2\": [0, 1]},"
        " \"theta\": [0.3, -0.2], \"E_list\": [-1.0, 0.5, 3.25]}");
    CHECK(run_cli({"gfun", "--in", in, "--out", s.at("out")}) == 0);

    const Csv csv = load_csv(s.at("out") + "/gfun.csv");
    CHECK(csv.header == std::vector<std::string>{"E", "t1", "t2", "g"});
    REQUIRE(csv.rows.size() == 3);
    CHECK(csv.meta.at("command") == "gfun");
    CHECK(csv.meta.at("t1") == "0.29999999999999999");

    const geometry::Lattice sq = geometry::Lattice::square();
    const Vec2 theta = sq.b1 * 0.3 + sq.b2 * (-0.2);
    const latticesum::GFunEvaluator ev(sq, 1e-12);
    const double E_list[] = {-1.0, 0.5, 3.25};
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(std::stod(csv.rows[i][0]) == E_list[i]);
        CHECK(std::stod(csv.rows[i][3]) == latticesum::g_lattice(E_list[i], theta, ev));
    }

    // identical invocation, identical bytes
    CHECK(run_cli({"gfun", "--in", in, "--out", s.at("out2")}) == 0);
    CHECK(serialize::read_file(s.at("out") + "/gfun.csv") ==
          serialize::read_file(s.at("out2") + "/gfun.csv"));
}

TEST_CASE("selfenergy: unit disk value and area") {
    Scratch s("selfenergy");
    const std::string in = s.put("shape.json", "{\"kind\": \"disk\", \"params\": [1.0]}");
    CHECK(run_cli({"selfenergy", "--in", in, "--out", s.at("out")}) == 0);

    const json j = load_json(s.at("out") + "/selfenergy.json");
    const double pi = 3.14159265358979323846;
    CHECK(j.at("area").get<double>() == doctest::Approx(pi).epsilon(1e-14));
    CHECK(j.at("value").get<double>() ==
          doctest::Approx(-pi * pi / 4.0).epsilon(1e-7));
    CHECK(j.at("shape").at("kind").get<std::string>() == "disk");
}

TEST_CASE("design: writes a loadable crystal and a reproducible report") {
    Scratch s("design");
    const std::string in = s.put("inputs.json", "{\"targets\": [1.0]}\n");
    CHECK(run_cli({"design", "--in", in, "--out", s.at("out")}) == 0);

    const design::DesignResult& want = designed();

    const json cj = load_json(s.at("out") + "/crystal.json");
    CHECK(cj.at("config").at("command").get<std::string>() == "design");
    const geometry::CrystalSpec spec =
        serialize::crystal_from_json_text(cj.at("crystal").dump());
    CHECK(geometry::validate_crystal_spec(spec).ok());
    REQUIRE(spec.lambdas.size() == 1);
    CHECK(spec.lambdas[0] == 1.0);
    CHECK(spec.r == want.spec.r);
    CHECK(spec.centers[0].x == want.spec.centers[0].x);
    CHECK(spec.coefficients[0] == want.spec.coefficients[0]);

    const json rj = load_json(s.at("out") + "/design_report.json");
    CHECK(rj.at("k").get<double>() == want.report.k);
    CHECK(rj.at("alpha0").get<double>() == want.report.alpha0);
    CHECK(rj.at("alpha_k").get<double>() == want.report.alpha_k);
    CHECK(rj.at("eta").get<double>() == want.report.eta);
    CHECK(rj.at("window_lo").get<double>() == want.report.window_lo);
    CHECK(rj.at("window_hi").get<double>() == want.report.window_hi);
    CHECK(rj.at("edges").at("E2").get<double>() == want.report.edges.E2);
    CHECK(rj.at("threshold").get<double>() == want.report.threshold);
    CHECK(rj.at("r_max").get<double>() == want.report.r_max);
    CHECK(rj.at("self_energy").get<double>() == want.report.self_energy);

    const std::string report = serialize::read_file(s.at("out") + "/report.txt");
    CHECK(report.rfind("# bandgap-forge design", 0) == 0);

    // rerun: byte-identical artifacts
    CHECK(run_cli({"design", "--in", in, "--out", s.at("out2")}) == 0);
    CHECK(serialize::read_file(s.at("out") + "/crystal.json") ==
          serialize::read_file(s.at("out2") + "/crystal.json"));
    CHECK(serialize::read_file(s.at("out") + "/design_report.json") ==
          serialize::read_file(s.at("out2") + "/design_report.json"));
}

TEST_CASE("bands and gaps: files mirror band_set and find_gaps") {
    Scratch s("bands");
    const geometry::CrystalSpec& spec = designed().spec;

    const std::string in = s.put("job.json", crystal_job_text());
    CHECK(run_cli({"bands", "--in", in, "--out", s.at("out"), "--grid", "1", "--mesh",
                   "24", "--bands", "3", "--jobs", "2"}) == 0);

    const bloch::BandSet want =
        bloch::band_set(spec, spec.r, bloch::FiberKind::TM, 1, 3, 24, 2);

    const json bj = load_json(s.at("out") + "/bands_tm.json");
    CHECK(bj.at("config").at("kind").get<std::string>() == "tm");
    CHECK(bj.at("config").at("r").get<double>() == spec.r);
    REQUIRE(bj.at("bands").size() == 3);
    for (std::size_t b = 0; b < 3; ++b) {
        CHECK(bj.at("bands")[b].at("lo").get<double>() == want.bands[b].lo);
        CHECK(bj.at("bands")[b].at("hi").get<double>() == want.bands[b].hi);
        CHECK(bj.at("bands")[b].at("err").get<double>() == want.bands[b].err);
    }

    const Csv csv = load_csv(s.at("out") + "/bands_tm.csv");
    CHECK(csv.header == std::vector<std::string>{"theta_index", "s1", "s2", "band",
                                                 "value", "err"});
    REQUIRE(csv.rows.size() == 3);  // one theta sample, three bands
    CHECK(std::stod(csv.rows[0][4]) == want.samples[0].values[0]);
    CHECK(fs::exists(s.at("out") + "/bands_tm.gp"));

    // TE kind goes to its own stem
    const std::string in_te = s.put("job_te.json", crystal_job_text({{"kind", "te"}}));
    CHECK(run_cli({"bands", "--in", in_te, "--out", s.at("out"), "--grid", "1", "--mesh",
                   "24", "--bands", "2", "--jobs", "2"}) == 0);
    CHECK(fs::exists(s.at("out") + "/bands_te.csv"));
    CHECK(load_json(s.at("out") + "/bands_te.json")
              .at("config")
              .at("kind")
              .get<std::string>() == "te");

    // aux without its lambda is a configuration error
    const std::string in_aux = s.put("job_aux.json", crystal_job_text({{"kind", "aux"}}));
    CHECK(run_cli({"bands", "--in", in_aux, "--out", s.at("out"), "--grid", "1", "--mesh",
                   "24", "--jobs", "2"}) == 2);

    // unknown job key is rejected
    const std::string in_bad = s.put("job_bad.json", crystal_job_text({{"mesh", 3}}));
    CHECK(run_cli({"bands", "--in", in_bad, "--out", s.at("out"), "--jobs", "2"}) == 2);

    SUBCASE("gaps over a window") {
        const std::string gin =
            s.put("gaps.json", crystal_job_text({{"window", JValue::array_of(
                                                                {0.0, 40.0})}}));
        CHECK(run_cli({"gaps", "--in", gin, "--out", s.at("gout"), "--grid", "1",
                       "--mesh", "24", "--bands", "4", "--jobs", "2"}) == 0);

        const bloch::BandSet set =
            bloch::band_set(spec, spec.r, bloch::FiberKind::TM, 1, 4, 24, 2);
        const std::vector<bloch::GapInterval> want_gaps =
            bloch::find_gaps(set, 0.0, 40.0);

        const json gj = load_json(s.at("gout") + "/gaps.json");
        CHECK(gj.at("config").at("window_hi").get<double>() == 40.0);
        REQUIRE(gj.at("gaps").size() == want_gaps.size());
        for (std::size_t i = 0; i < want_gaps.size(); ++i) {
            CHECK(gj.at("gaps")[i].at("lo").get<double>() == want_gaps[i].lo);
            CHECK(gj.at("gaps")[i].at("hi").get<double>() == want_gaps[i].hi);
        }
        CHECK(gj.at("bands").size() == 4);

        const std::string gin_bad = s.put("gaps_bad.json", crystal_job_text());
        CHECK(run_cli({"gaps", "--in", gin_bad, "--out", s.at("gout"), "--jobs", "2"}) ==
              2);  // window is mandatory
    }
}

TEST_CASE("certify-tm: json round-trips the certificate, exit code tracks it") {
    Scratch s("certify");
    const geometry::CrystalSpec& spec = designed().spec;

    const std::string in = s.put("job.json", crystal_job_text());
    const int rc = run_cli({"certify-tm", "--in", in, "--out", s.at("out"), "--grid",
                            "1", "--mesh", "24", "--jobs", "2"});

    const bloch::TMCertificate want = bloch::tm_gap_report(spec, spec.r, 0, 1, 24, 2);
    CHECK(rc == ((want.tm_pass && want.aux_pass) ? 0 : 1));

    const json j = load_json(s.at("out") + "/certify_tm.json");
    CHECK(j.at("lambda").get<double>() == 1.0);
    CHECK(j.at("tm_distance").get<double>() == want.tm_distance);
    CHECK(j.at("tm_required").get<double>() == want.tm_required);
    CHECK(j.at("tm_pass").get<bool>() == want.tm_pass);
    CHECK(j.at("tm_gap").at("lo").get<double>() == want.tm_gap.lo);
    CHECK(j.at("aux_distance").get<double>() == want.aux_distance);
    CHECK(j.at("aux_margin").get<double>() == want.aux_margin);
    CHECK(j.at("aux_required").get<double>() == want.aux_required);
    CHECK(j.at("eta").get<double>() == want.eta);
    CHECK(j.at("aux_pass").get<bool>() == want.aux_pass);
    CHECK(j.at("pass").get<bool>() == (want.tm_pass && want.aux_pass));

    const std::string in_oor =
        s.put("job_oor.json", crystal_job_text({{"lambda_index", 7}}));
    CHECK(run_cli({"certify-tm", "--in", in_oor, "--out", s.at("out"), "--grid", "1",
                   "--mesh", "24", "--jobs", "2"}) == 2);
}

TEST_CASE("overlap-te: exit code mirrors the overlap flag") {
    Scratch s("overlap");
    const geometry::CrystalSpec& spec = designed().spec;

    const std::string in = s.put("job.json", crystal_job_text({{"n0", 2}}));
    const int rc = run_cli({"overlap-te", "--in", in, "--out", s.at("out"), "--grid",
                            "1", "--mesh", "24", "--jobs", "2"});

    const bloch::TEOverlapReport want = bloch::te_overlap_check(spec, spec.r, 2, 1, 24, 2);
    CHECK(rc == (want.all_overlap ? 0 : 1));

    const json j = load_json(s.at("out") + "/overlap_te.json");
    REQUIRE(j.at("overlap").size() == 1);
    CHECK(j.at("overlap")[0].get<double>() == want.overlap[0]);
    CHECK(j.at("all_overlap").get<bool>() == want.all_overlap);
    CHECK(j.at("covered_hi").get<double>() == want.covered_hi);
    CHECK(j.at("te_bands").size() == want.bands.bands.size());

    const std::string in_bad = s.put("job_bad.json", crystal_job_text({{"n0", 1}}));
    CHECK(run_cli({"overlap-te", "--in", in_bad, "--out", s.at("out"), "--jobs", "2"}) ==
          2);
}

TEST_CASE("converge: csv and json reproduce the study") {
    Scratch s("converge");
    const geometry::CrystalSpec& spec = designed().spec;

    const std::string in = s.put(
        "job.json", crystal_job_text({{"target", 0},
                                      {"nu", JValue::array_of({0.0, 2.0})},
                                      {"r_list", JValue::array_of({0.1, 0.05})},
                                      {"order", 8}}));
    CHECK(run_cli({"converge", "--in", in, "--out", s.at("out"), "--jobs", "2"}) == 0);

    approx::Gaussian f;
    f.center = {spec.centers[0].x + 0.31, spec.centers[0].y + 0.17};
    f.sigma = 0.25;
    const approx::ConvergenceStudy want = approx::convergence_study(
        spec, 0, std::complex<double>{0.0, 2.0}, {0.1, 0.05}, f, 1, 8, 2);

    const json j = load_json(s.at("out") + "/converge.json");
    CHECK(j.at("kappa").get<double>() == want.kappa);
    CHECK(j.at("residual_log").get<double>() == want.residual_log);
    CHECK(j.at("residual_r").get<double>() == want.residual_r);
    CHECK(j.at("residual_sqrt").get<double>() == want.residual_sqrt);

    const Csv csv = load_csv(s.at("out") + "/converge.csv");
    REQUIRE(csv.rows.size() == 2);
    CHECK(std::stod(csv.meta.at("source_x")) == f.center.x);
    CHECK(std::stod(csv.rows[0][2]) == want.rows[0].resolvent_error);
    CHECK(std::stod(csv.rows[1][2]) == want.rows[1].resolvent_error);

    // the --r-list flag replaces the job key
    const std::string in_nolist = s.put("job2.json", crystal_job_text({{"target", 0},
                                                                       {"order", 8}}));
    CHECK(run_cli({"converge", "--in", in_nolist, "--out", s.at("out2"), "--jobs", "2",
                   "--r-list", "0.1,0.05"}) == 0);
    const json j2 = load_json(s.at("out2") + "/converge.json");
    CHECK(j2.at("kappa").get<double>() == want.kappa);

    // no radii anywhere is a configuration error
    CHECK(run_cli({"converge", "--in", in_nolist, "--out", s.at("out2"), "--jobs",
                   "2"}) == 2);
}

TEST_CASE("exit codes: malformed input 2, infeasible design 1") {
    Scratch s("codes");
    CHECK(run_cli({"edges", "--in", s.at("missing.json"), "--out", s.at("out")}) == 2);

    const std::string junk = s.put("junk.json", "this is not json\n");
    CHECK(run_cli({"edges", "--in", junk, "--out", s.at("out")}) == 2);

    const std::string degen = s.put(
        "degen.json",
        "{\"alpha\": 0, \"lattice\": {\"a1\": [1, 0], \"a2\": [2, 0]}}");
    CHECK(run_cli({"edges", "--in", degen, "--out", s.at("out")}) == 2);

    const std::string extra = s.put(
        "extra.json",
        "{\"alpha\": 0, \"lattice\": {\"a1\": [1, 0], \"a2\": [0, 1]}, \"grid\": 3}");
    CHECK(run_cli({"edges", "--in", extra, "--out", s.at("out")}) == 2);

    // coupling above threshold: configuration error
    const std::string bad_alpha =
        s.put("bad_alpha.json", "{\"targets\": [1.0], \"alpha0\": 0.5}");
    CHECK(run_cli({"design", "--in", bad_alpha, "--out", s.at("out")}) == 2);

    // infeasible radius: a feasibility failure, not a usage one
    const std::string bad_r = s.put("bad_r.json", "{\"targets\": [1.0], \"r\": 10.0}");
    CHECK(run_cli({"design", "--in", bad_r, "--out", s.at("out")}) == 1);

    // jobs resolution through the env var still runs
    setenv("BANDGAP_FORGE_JOBS", "2", 1);
    const std::string gj = s.put(
        "gfun.json",
        "{\"lattice\": {\"a1\": [1, 0], \"a2\": [0, 1]},"
        " \"theta\": [0, 0], \"E_list\": [-1.0]}");
    CHECK(run_cli({"gfun", "--in", gj, "--out", s.at("out")}) == 0);
    unsetenv("BANDGAP_FORGE_JOBS");
}
