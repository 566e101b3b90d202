#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using adaptcar::cli::run;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result call(std::vector<std::string> args) {
  args.insert(args.begin(), "adaptcar");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("adaptcar_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("fit writes a summary row per area") {
  const auto dir = scratch("fit");
  const auto r = call({"fit", "--data", "data/city_scale.csv", "--adjacency", "data/city_scale.adj",
                       "--out-dir", dir.string(), "--permutations", "99", "--threads", "1"});
  REQUIRE(r.code == 0);
  const auto text = slurp(dir / "fit.tsv");
  const auto table = text.substr(text.find("area_id\tphi_median\tphi_lo\tphi_hi\tmu_median\trisk_median\n"));
  CHECK(std::count(table.begin(), table.end(), '\n') == 272);
  CHECK(text.find("# seed: 20120901\n") != std::string::npos);
  CHECK(slurp(dir / "diagnostics.tsv").find("moran_p_value\t") != std::string::npos);
}

TEST_CASE("input errors map to exit codes") {
  const auto dir = scratch("errors");
  write(dir / "bad.csv", "area_id,y,offset\n0,3,0\n1,4\n");
  write(dir / "g.adj", "0 1\n1 2\n");
  auto r = call({"fit", "--data", (dir / "bad.csv").string(), "--adjacency", (dir / "g.adj").string(),
                 "--out-dir", dir.string()});
  CHECK(r.code == 3);
  CHECK(r.err.find("bad.csv:3:") != std::string::npos);

  write(dir / "binom.csv", "area_id,y,offset,trials\n0,1,0,5\n1,7,0,4\n2,2,0,6\n");
  r = call({"fit", "--family", "binomial", "--data", (dir / "binom.csv").string(), "--adjacency",
            (dir / "g.adj").string(), "--out-dir", dir.string()});
  CHECK(r.code == 4);
  CHECK(r.err.find("area 1") != std::string::npos);

  CHECK(call({"fit", "--backend", "gibbs"}).code == 2);
  CHECK(call({}).code == 2);
  CHECK(call({"fit", "--out-dir", dir.string()}).code == 2);  // no inputs
  CHECK(call({"--help"}).code == 0);
}

TEST_CASE("boundaries on flat data finds none") {
  const auto dir = scratch("flat");
  std::string data = "area_id,y,offset\n";
  for (int k = 0; k < 16; ++k) data += std::to_string(k) + ",40,0\n";
  write(dir / "flat.csv", data);
  std::string adj;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      const int k = r * 4 + c;
      if (c < 3) adj += std::to_string(k) + " " + std::to_string(k + 1) + "\n";
      if (r < 3) adj += std::to_string(k) + " " + std::to_string(k + 4) + "\n";
    }
  write(dir / "lattice.adj", adj);
  const auto r = call({"boundaries", "--data", (dir / "flat.csv").string(), "--adjacency",
                       (dir / "lattice.adj").string(), "--out-dir", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("iter=1 state=") != std::string::npos);
  CHECK(r.out.find("boundaries=0\n") != std::string::npos);
  const auto edges = slurp(dir / "boundaries.adj");
  CHECK(edges.find("\n0 ") == std::string::npos);
  CHECK(slurp(dir / "trace.log").find("termination=steady_state") != std::string::npos);
}

TEST_CASE("reruns are byte-identical") {
  const auto a = scratch("rerun_a"), b = scratch("rerun_b");
  for (const auto& dir : {a, b}) {
    const auto r = call({"boundaries", "--data", "data/city_scale.csv", "--adjacency", "data/city_scale.adj",
                         "--out-dir", dir.string(), "--seed", "11", "--threads", dir == a ? "1" : "3"});
    REQUIRE(r.code == 0);
  }
  for (const char* f : {"trace.log", "boundaries.adj", "boundaries.tsv", "fit.tsv"})
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
}

TEST_CASE("simulate: two replicates of scenario B") {
  const auto dir = scratch("sim");
  write(dir / "t.csv", [] {
    std::string s = "area_id,x,y,group\n";
    for (int k = 0; k < 36; ++k)
      s += std::to_string(k) + "," + std::to_string(k % 6) + "," + std::to_string(k / 6) + "," +
           (k == 14 || k == 15 ? "1" : "0") + "\n";
    return s;
  }());
  std::string adj;
  for (int k = 0; k < 36; ++k) {
    if (k % 6 < 5) adj += std::to_string(k) + " " + std::to_string(k + 1) + "\n";
    if (k < 30) adj += std::to_string(k) + " " + std::to_string(k + 6) + "\n";
  }
  write(dir / "t.adj", adj);
  const auto r = call({"simulate", "--template", (dir / "t.csv").string(), "--adjacency", (dir / "t.adj").string(),
                       "--scenario", "B", "--replicates", "2", "--out-dir", dir.string(), "--export", "1",
                       "--max-iterations", "12"});
  REQUIRE(r.code == 0);
  const auto metrics = slurp(dir / "metrics.tsv");
  CHECK(metrics.find("ba\tNA\tNA\n") != std::string::npos);
  CHECK(metrics.find("replicates\t2\t2\n") != std::string::npos);
  const auto term = slurp(dir / "termination.tsv");
  CHECK(term.find("iterations\tcount\n1\t") != std::string::npos);
  CHECK(term.find("\n12\t") != std::string::npos);
  CHECK(term.find("\n13\t") == std::string::npos);
  CHECK(fs::exists(dir / "data_0.csv"));
  CHECK_FALSE(fs::exists(dir / "data_1.csv"));
}
