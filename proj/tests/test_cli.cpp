// Copyright (C) 2026 The matchpred authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "matchpred/csv.hpp"
#include "matchpred/match_data.hpp"
#include "support/sim.hpp"

namespace {

std::string g_cli;  // path to the binary under test, from argv[1]

struct RunResult {
    int code = -1;
    std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args) {
    std::string cmd = g_cli + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    EXPECT_NE(p, nullptr);
    RunResult r;
    char buf[4096];
    size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0)
        r.output.append(buf, n);
    int st = pclose(p);
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

std::string tmp_path(const std::string& name) { return ::testing::TempDir() + name; }

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    ASSERT_TRUE(out.is_open());
    out << text;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    EXPECT_TRUE(in.is_open()) << path;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// example rows in the input format: league, season, date, teams, goals
const char* kSmallCsv =
    "league,season,date,home_team,away_team,home_goals,away_goals\n"
    "ENG,2012-2013,2013-01-12,Arsenal,Manchester City,0,2\n"
    "ENG,2012-2013,2013-01-13,Chelsea,Stoke City,1,0\n"
    "SPA,2012-2013,2013-01-12,Barcelona,Malaga,3,1\n";

std::string sim_csv(const std::string& name, int n_teams = 8, int n_matches = 600,
                    uint64_t seed = 5) {
    auto data = testsupport::simulate_cs_ordinal(n_teams, n_matches, 0.3,
                                                 std::vector<double>(n_teams, 0.0), 0.0, 1.0,
                                                 seed);
    std::string path = tmp_path(name);
    matchpred::save_csv(data, path);
    return path;
}

}  // namespace

TEST(CliIngest, SmallCsvRoundtrip) {
    std::string in = tmp_path("ingest_in.csv");
    write_file(in, kSmallCsv);
    std::string out = tmp_path("ingest_out.csv");
    std::string rep = tmp_path("ingest_report.json");
    auto r = run_cli("ingest --input " + in + " --output " + out + " --report " + rep +
                     " --seed 9");
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("kept 3"), std::string::npos);

    auto cleaned = matchpred::load_csv(out);  // the '#' metadata line is skipped
    EXPECT_EQ(cleaned.size(), 3u);
    auto j = nlohmann::json::parse(read_file(rep));
    EXPECT_EQ(j["run_config"]["seed"], 9);
    EXPECT_EQ(j["records_out"], 3);
}

TEST(CliIngest, EmptyCsvSucceeds) {
    std::string in = tmp_path("ingest_empty.csv");
    write_file(in, "league,season,date,home_team,away_team,home_goals,away_goals\n");
    auto r = run_cli("ingest --input " + in);
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("kept 0"), std::string::npos);
}

TEST(CliIngest, CorruptRowExitsTwoWithRowIndex) {
    std::string in = tmp_path("ingest_bad.csv");
    write_file(in,
               "league,season,date,home_team,away_team,home_goals,away_goals\n"
               "ENG,2012-2013,2013-01-12,A,B,xyz,2\n");
    auto r = run_cli("ingest --input " + in);
    EXPECT_EQ(r.code, 2) << r.output;
    EXPECT_NE(r.output.find("row 1"), std::string::npos) << r.output;
}

TEST(CliIngest, MissingFileExitsTwo) {
    auto r = run_cli("ingest --input " + tmp_path("no_such_file.csv"));
    EXPECT_EQ(r.code, 2) << r.output;
}

TEST(CliFit, BlHasOneCoefficientPlusDrawParams) {
    std::string in = sim_csv("fit_bl.csv");
    std::string out = tmp_path("fit_bl.json");
    auto r = run_cli("fit --input " + in + " --spec bl --output " + out);
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("converged=yes"), std::string::npos);
    auto j = nlohmann::json::parse(read_file(out));
    EXPECT_EQ(j["kind"], "bt");
    ASSERT_EQ(j["model"]["beta"].size(), 1u);
    EXPECT_TRUE(j["model"].contains("delta1"));
    EXPECT_EQ(j["run_config"]["spec"], "bl");
}

TEST(CliFit, TvcRowParameterization) {
    std::string in = sim_csv("fit_tvc.csv");
    std::string out = tmp_path("fit_tvc.json");
    auto r = run_cli("fit --input " + in +
                     " --spec tvc --features 1,6,7,12,13 --varying 6,7,12 --output " + out);
    ASSERT_EQ(r.code, 0) << r.output;
    auto j = nlohmann::json::parse(read_file(out));
    EXPECT_EQ(j["model"]["spec"], "tvc");
    // five base effects plus three matches-played slopes
    EXPECT_EQ(j["model"]["beta"].size(), 8u);
}

TEST(CliFit, UnknownSpecExitsTwo) {
    std::string in = sim_csv("fit_bad.csv");
    auto r = run_cli("fit --input " + in + " --spec zz");
    EXPECT_EQ(r.code, 2) << r.output;
}

TEST(CliPredict, TriplesSumToOneAndUnseenTeamFlagged) {
    std::string in = sim_csv("pred_hist.csv");
    std::string model = tmp_path("pred_model.json");
    ASSERT_EQ(run_cli("fit --input " + in + " --spec cs --output " + model).code, 0);

    std::string fixtures = tmp_path("pred_fixtures.csv");
    write_file(fixtures,
               "league,season,date,home_team,away_team\n"
               "SIM,2015,2015-12-01,T00,T01\n"
               "SIM,2015,2015-12-01,ZZZ,T02\n");
    std::string out = tmp_path("pred_out.csv");
    auto r = run_cli("predict --input " + fixtures + " --model " + model + " --history " +
                     in + " --output " + out);
    ASSERT_EQ(r.code, 0) << r.output;

    auto rows = matchpred::csv::read_file(out);
    ASSERT_EQ(rows.size(), 3u);  // header + 2 fixtures (metadata line skipped)
    for (size_t i = 1; i < rows.size(); ++i) {
        double s = std::stod(rows[i][5]) + std::stod(rows[i][6]) + std::stod(rows[i][7]);
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
    EXPECT_EQ(rows[1][8], "0");  // both teams seen
    EXPECT_EQ(rows[2][8], "1");  // ZZZ unseen
}

TEST(CliValidate, ByteIdenticalReportsAndReadableReport) {
    std::string in = sim_csv("val.csv", 8, 900, 13);
    // identical run config (including the output path) twice over
    std::string out1 = tmp_path("report1.json");
    std::string args = "validate --input " + in +
                       " --models \"bl;lf:1,5\" --cutoffs 2015-03-01,2015-03-15 --horizon 10"
                       " --seed 7 --jobs 2 --output " + out1;
    ASSERT_EQ(run_cli(args).code, 0);
    std::string first = read_file(out1);
    ASSERT_EQ(run_cli(args).code, 0);
    EXPECT_EQ(first, read_file(out1));

    auto j = nlohmann::json::parse(read_file(out1));
    ASSERT_EQ(j["models"].size(), 2u);
    EXPECT_EQ(j["run_config"]["seed"], 7);
    EXPECT_TRUE(j["models"][0].contains("pooled"));

    auto rep = run_cli("report --input " + out1);
    EXPECT_EQ(rep.code, 0) << rep.output;
    EXPECT_NE(rep.output.find("pooled rps"), std::string::npos);
}

TEST(CliValidate, PredictionCsvEmitted) {
    std::string in = sim_csv("valp.csv", 8, 700, 19);
    std::string out = tmp_path("reportp.json");
    std::string prefix = tmp_path("preds_");
    auto r = run_cli("validate --input " + in +
                     " --models bl --cutoffs 2015-03-01 --output " + out +
                     " --predictions " + prefix);
    ASSERT_EQ(r.code, 0) << r.output;
    auto rows = matchpred::csv::read_file(prefix + "bl.csv");
    ASSERT_GE(rows.size(), 2u);
    EXPECT_EQ(rows[0][0], "cutoff");
}

TEST(CliValidate, BadInputsExitTwo) {
    std::string in = sim_csv("valbad.csv");
    EXPECT_EQ(run_cli("validate --input " + in + " --models nope --cutoffs 2015-04-01").code,
              2);
    EXPECT_EQ(run_cli("validate --input " + in + " --models bl --cutoffs not-a-date").code,
              2);
    EXPECT_EQ(run_cli("frobnicate").code, 2);
}

int main(int argc, char** argv) {
    ::testing::InitGoogleTest(&argc, argv);
    if (argc > 1)
        g_cli = argv[1];
    if (g_cli.empty()) {
        std::fprintf(stderr, "usage: test_cli <path-to-matchpred-binary>\n");
        return 2;
    }
    return RUN_ALL_TESTS();
}
