#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "polling/cli.hpp"
#include "polling/config.hpp"
#include "polling/errors.hpp"

using namespace polling;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "polling");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

class TempDir {
public:
    TempDir() : path_(fs::temp_directory_path() / ("polling-cli-" + std::to_string(::getpid()))) {
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }

    std::string write(const std::string& name, const std::string& text) const {
        std::ofstream(path_ / name) << text;
        return (path_ / name).string();
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kSymmetric = R"y(queues:
  - {lambda: 0.25, service: exp(1)}
  - {lambda: 0.25, service: exp(1)}
switchover: {ring: [det(1), det(1)]}
)y";

const bool kSeedUnset = [] {
    ::unsetenv("POLLING_SEED");
    return true;
}();

}  // namespace

TEST_CASE("analyze") {
    TempDir dir;
    auto r = run({"analyze", dir.write("m.yaml", kSymmetric)});
    CHECK(r.code == cli::kOk);
    CHECK(r.out.find("2.5") != std::string::npos);
    CHECK(r.out.find("pseudo-conservation") != std::string::npos);

    r = run({"analyze", dir.write("u.yaml", "queues: [{lambda: 1.2, service: exp(1)}]\nswitchover: {ring: [det(1)]}\n")});
    CHECK(r.code == cli::kUnstable);
    CHECK(r.err.find("1.2") != std::string::npos);

    r = run({"analyze", dir.write("k.yaml", "queues: [{lambda: 0.1, service: exp(1)}, {lambda: 0.1, service: exp(1), "
                                            "discipline: k-limited(2)}]\nswitchover: {ring: [det(1), det(1)]}\n")});
    CHECK(r.code == cli::kUnsupported);
    CHECK(r.err.find("queue 2") != std::string::npos);
    CHECK(r.err.find("simulate") != std::string::npos);

    r = run({"analyze", dir.write("bad.yaml", "queues:\n  - {lambda: x, service: exp(1)}\nswitchover: {ring: [det(1)]}\n")});
    CHECK(r.code == cli::kInput);
    CHECK(r.err.find("line 2") != std::string::npos);

    CHECK(run({"analyze", dir.file("missing.yaml")}).code == cli::kInput);
    CHECK(run({}).code == cli::kInput);
    CHECK(run({"frobnicate"}).code == cli::kInput);
}

TEST_CASE("simulate and records") {
    TempDir dir;
    const auto cfg = dir.write("m.yaml", kSymmetric);
    const auto a = dir.file("a.jsonl");
    const auto b = dir.file("b.jsonl");
    auto r = run({"simulate", cfg, "--seed", "42", "--customers", "20000", "--reps", "4", "--records", a});
    REQUIRE(r.code == cli::kOk);
    CHECK(r.out.find("±") != std::string::npos);
    CHECK(run({"simulate", cfg, "--seed", "42", "--customers", "20000", "--reps", "4", "--records", b}).code == cli::kOk);
    const std::string text = slurp(a);
    CHECK(text == slurp(b));
    CHECK(text.find("\"schema\":1") != std::string::npos);
    CHECK(text.find(config::load_file(cfg).fingerprint) != std::string::npos);

    // One record per queue per replication, plus header, pooled rows and summary.
    std::size_t per_rep = 0;
    for (std::size_t pos = 0; (pos = text.find("\"record\":\"replication\"", pos)) != std::string::npos; ++pos) ++per_rep;
    CHECK(per_rep == 8);

    std::ifstream in(a);
    const auto table = cli::sim_table_from_records(in);
    CHECK(table.replications == 4);
    CHECK(r.out.find(cli::render(table)) != std::string::npos);

    CHECK(run({"simulate", cfg, "--seed", "43", "--customers", "20000", "--reps", "4", "--records", b}).code == cli::kOk);
    CHECK(text != slurp(b));

    // Missing file, conflicting horizons and bad flags are input errors.
    CHECK(run({"simulate", dir.file("none.yaml")}).code == cli::kInput);
    CHECK(run({"simulate", cfg, "--horizon", "10", "--customers", "10"}).code == cli::kInput);
    CHECK(run({"simulate", cfg, "--warmup", "0.9"}).code == cli::kInput);

    // Instability is only a warning for the simulator.
    r = run({"simulate", dir.write("u.yaml", "queues: [{lambda: 1.2, service: exp(1)}]\nswitchover: {ring: [det(1)]}\n"),
             "--horizon", "100"});
    CHECK(r.code == cli::kOk);
    CHECK(r.err.find("unstable") != std::string::npos);
}

TEST_CASE("record files reject foreign content") {
    std::istringstream bad("{\"record\":\"run\",\"schema\":99}\n");
    CHECK_THROWS_AS(cli::sim_table_from_records(bad), InputError);
    std::istringstream junk("not json\n");
    CHECK_THROWS_AS(cli::sim_table_from_records(junk), InputError);
}

TEST_CASE("seed from the environment") {
    TempDir dir;
    const auto cfg = dir.write("m.yaml", kSymmetric);
    ::setenv("POLLING_SEED", "42", 1);
    CHECK(run({"simulate", cfg, "--customers", "5000", "--records", dir.file("env.jsonl")}).code == cli::kOk);
    ::unsetenv("POLLING_SEED");
    CHECK(run({"simulate", cfg, "--customers", "5000", "--seed", "42", "--records", dir.file("flag.jsonl")}).code == cli::kOk);
    CHECK(slurp(dir.file("env.jsonl")) == slurp(dir.file("flag.jsonl")));
}

TEST_CASE("validate") {
    TempDir dir;
    const auto cfg = dir.write("m.yaml", kSymmetric);
    auto r = run({"validate", cfg, "--customers", "200000"});
    CHECK(r.code == cli::kOk);
    CHECK(r.out.find("validation passed") != std::string::npos);

    r = run({"validate", cfg, "--customers", "200000", "--perturb-exact", "1.5"});
    CHECK(r.code == cli::kValidationFailed);
    CHECK(r.err.find("queues 1, 2") != std::string::npos);

    r = run({"validate",
             dir.write("gg.yaml", "queues:\n  - {lambda: 0.2, service: exp(1), discipline: globally-gated(1)}\n"
                                  "  - {lambda: 0.2, service: exp(1), discipline: globally-gated(1)}\n"
                                  "switchover: {ring: [det(1), det(1)]}\n"),
             "--customers", "200000"});
    CHECK(r.code == cli::kOk);
    CHECK(r.out.find("not applicable") != std::string::npos);
}

TEST_CASE("scenarios") {
    TempDir dir;
    const auto selsp = dir.write("s.yaml", R"y(selsp:
  products:
    - {name: A, demand: 0.2, production: exp(1), setup: det(1), base_stock: 3}
    - {name: B, demand: 0.1, production: det(2), setup: det(1)}
)y");
    auto r = run({"scenario", "selsp", selsp, "--customers", "50000"});
    CHECK(r.code == cli::kOk);
    CHECK(r.out.find("net stock") != std::string::npos);

    r = run({"scenario", "selsp", selsp, "--customers", "50000", "--target-fill", "0.95"});
    CHECK(r.code == cli::kOk);
    CHECK(r.out.find("base stock") != std::string::npos);
    CHECK(run({"scenario", "selsp", selsp, "--target-fill", "1.5"}).code == cli::kInput);

    const auto traffic = dir.write("t.yaml", R"y(traffic:
  flows:
    - {name: north, arrival_rate: 0.1, headway: det(2)}
    - {name: east, arrival_rate: 0.1, headway: det(2), control: k-limited(5)}
  clearance: det(4)
)y");
    r = run({"scenario", "traffic", traffic, "--customers", "50000"});
    CHECK(r.code == cli::kOk);
    CHECK(r.out.find("north") != std::string::npos);
    CHECK(run({"scenario", "traffic", traffic, "--engine", "exact"}).code == cli::kUnsupported);

    r = run({"scenario", "bogus", traffic});
    CHECK(r.code == cli::kInput);
    CHECK(r.err.find("selsp") != std::string::npos);
    CHECK(run({"scenario", "selsp", traffic}).code == cli::kInput);
}
