#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cloudrisk/cli.hpp"

namespace cloudrisk::cli {
namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli_main(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

std::string fixture(const std::string& rel) { return std::string(CLOUDRISK_FIXTURES) + "/" + rel; }

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("cloudrisk_cli_test_" + name)).string();
}

void write(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

TEST(CheckLabel, AllowedAndDenied) {
  auto r = call({"check-label", "{A/A:inf}", "{A,B/A:inf,B:inf}"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "flow: allowed\n");
  r = call({"check-label", "{A,B/A:inf,B:inf}", "{A/A:inf}"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.out, "flow: denied (content B; timing B:inf)\n");
  r = call({"check-label", "{A/", "{-/-}"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("parse error"), std::string::npos);
}

TEST(Usage, ErrorsExitTwo) {
  EXPECT_EQ(call({}).code, 2);
  EXPECT_EQ(call({"frobnicate"}).code, 2);
  EXPECT_EQ(call({"run", fixture("scenarios/dedicated.json"), "--seed", "1"}).code, 2);
  EXPECT_EQ(call({"check-label", "{-/-}", "{-/-}", "--bogus"}).code, 2);
  EXPECT_EQ(call({"depgraph", fixture("graphs/shared_provider.json"), "--method", "mc"}).code, 2);
  EXPECT_EQ(call({"depgraph", fixture("graphs/shared_provider.json"), "--method", "sample"}).code, 2);
  const auto help = call({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("diff-trace"), std::string::npos);
}

TEST(Run, InvalidScenarioIsConfigError) {
  auto r = call({"run", fixture("scenarios/bad_shared_core.json"), "--workload", fixture("workloads/bob_short.json"),
                 "--seed", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("config error"), std::string::npos);
  EXPECT_TRUE(r.out.empty());
}

TEST(Run, DeniedFlowIsStillSuccess) {
  const auto r = call({"run", fixture("scenarios/statmux_nopacer.json"), "--workload",
                       fixture("workloads/bob_short.json"), "--seed", "1", "--out", "/dev/null", "--report", "-"});
  EXPECT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  // Both gateways: each result carries the other customer's timing.
  EXPECT_EQ(j["monitor"]["rejected"]["FlowDenied"], 2);
}

TEST(Run, ReplayAndDiff) {
  const std::vector<std::string> base{"run", fixture("scenarios/dedicated.json"), "--workload",
                                      fixture("workloads/bob_short.json"), "--seed", "3"};
  const auto a = temp_path("a.jsonl"), b = temp_path("b.jsonl");
  auto args = base;
  args.insert(args.end(), {"--out", a});
  ASSERT_EQ(call(args).code, 0);
  args = base;
  args.insert(args.end(), {"--out", b});
  ASSERT_EQ(call(args).code, 0);
  auto d = call({"diff-trace", a, b});
  EXPECT_EQ(d.code, 0);
  EXPECT_EQ(d.out.rfind("identical", 0), 0u);
  EXPECT_EQ(call({"diff-trace", a, a, "--project", "A"}).code, 0);
}

TEST(DiffTrace, ReservationIdenticalStatMuxTickOnly) {
  auto trace = [](const std::string& scenario, const std::string& w) {
    const auto path = temp_path(scenario + "_" + w + ".jsonl");
    const auto r = call({"run", fixture("scenarios/" + scenario + ".json"), "--workload",
                         fixture("workloads/" + w + ".json"), "--seed", "1", "--out", path});
    EXPECT_EQ(r.code, 0);
    return path;
  };
  EXPECT_EQ(call({"diff-trace", trace("reservation", "bob_short"), trace("reservation", "bob_long"), "--project", "A"})
                .code,
            0);
  const auto rs = trace("statmux", "bob_short"), rl = trace("statmux", "bob_long");
  const auto d = report::diff_trace(report::load_trace(rs), report::load_trace(rl), Principal("A"));
  EXPECT_FALSE(d.identical);
  EXPECT_EQ(d.differing_fields, (std::set<std::string>{"tick"}));
  ASSERT_TRUE(d.first_a && d.first_b);
  EXPECT_EQ((d.first_b->tick - d.first_a->tick) % 1000000, 0u);
  const auto cli = call({"diff-trace", rs, rl, "--project", "A"});
  EXPECT_EQ(cli.code, 1);
  EXPECT_NE(cli.out.find("fields: tick\n"), std::string::npos);
  // Unprojected, Bob's own events differ too.
  EXPECT_EQ(call({"diff-trace", rs, rl}).code, 1);
}

TEST(DiffTrace, ParseErrorCarriesLine) {
  const auto good = temp_path("good.jsonl"), bad = temp_path("bad.jsonl");
  ASSERT_EQ(call({"run", fixture("scenarios/dedicated.json"), "--workload", fixture("workloads/alice_only.json"),
                  "--seed", "0", "--out", good})
                .code,
            0);
  std::ifstream in(good);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  write(bad, header + "\n" + first + "\n{\"seq\": oops}\n");
  const auto r = call({"diff-trace", good, bad});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
}

TEST(Depgraph, ExactReport) {
  const auto r = call({"depgraph", fixture("graphs/shared_provider.json"), "--method", "exact"});
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["actual"].get<double>(), 0.891);
  EXPECT_EQ(j["naive"].get<double>(), 0.9639);
  EXPECT_EQ(j["shared"], nlohmann::json::array({"C"}));
  EXPECT_EQ(call({"depgraph", fixture("graphs/bad_kofn.json")}).code, 2);
}

TEST(Depgraph, TooLargeIsDomainError) {
  nlohmann::json g;
  std::vector<std::string> kids;
  for (int i = 0; i < 30; ++i) {
    kids.push_back("l" + std::to_string(i));
    g["nodes"][kids.back()] = {{"leaf", 0.5}};
  }
  g["nodes"]["r"] = {{"or", kids}};
  g["root"] = "r";
  const auto path = temp_path("big.json");
  write(path, g.dump());
  const auto r = call({"depgraph", path});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(call({"depgraph", path, "--method", "mc", "--samples", "1000", "--seed", "1"}).code, 0);
}

TEST(Leak, TooFewTrialsIsDomainError) {
  const auto r = call({"leak", fixture("scenarios/statmux.json"), "--trials", "10", "--seed", "1"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(call({"leak", fixture("scenarios/statmux.json"), "--seed", "1", "--family", "noise"}).code, 2);
}

TEST(Leak, ReportFields) {
  const auto r = call({"leak", fixture("scenarios/statmux.json"), "--trials", "200", "--seed", "4"});
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_LE(j["mi_bits_per_period"].get<double>(), 1.0);
  EXPECT_LE(j["rate_bits_per_second"].get<double>(), j["bound_bits_per_second"].get<double>());
  EXPECT_EQ(r.out, call({"leak", fixture("scenarios/statmux.json"), "--trials", "200", "--seed", "4"}).out);
}

TEST(Feedback, CsvAndSummary) {
  const auto csv = temp_path("series.csv");
  const auto r = call({"feedback", fixture("feedback/aligned.json"), "--intervals", "20", "--out", csv});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(nlohmann::json::parse(r.out)["verdict"], "oscillating");
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "interval,split,clock1,clock2,util1,util2,rt,throughput");
  const auto piped = call({"feedback", fixture("feedback/aligned.json"), "--intervals", "20", "--out", "-"});
  EXPECT_EQ(piped.out.substr(0, header.size()), header);
  EXPECT_NE(piped.err.find("\"verdict\""), std::string::npos);
  EXPECT_EQ(call({"feedback", fixture("feedback/aligned.json"), "--intervals", "5"}).code, 2);
}

}  // namespace
}  // namespace cloudrisk::cli
