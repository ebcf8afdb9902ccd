#pragma once

// Small on-disk fixtures covering every `uncal` subcommand, plus a helper
// that runs the pipeline in-process and collects stdout and written files.

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "synthetic.hpp"
#include "uncal/cli.hpp"
#include "uncal/json_io.hpp"
#include "uncal/matrix_io.hpp"
#include "uncal/trajspace.hpp"
#include "uncal/trajspace_gen.hpp"

#ifndef UNCAL_TEST_DATA
#error "UNCAL_TEST_DATA must point at tests/data"
#endif

namespace uncal::testing {

namespace fs = std::filesystem;

struct CliFixture {
    fs::path dir;
    fs::path preds;
    fs::path rag;
    fs::path probe_preds;
    fs::path spaces;
    fs::path hidden;
    fs::path hidden_cal;
    fs::path pairs;
    fs::path annotations;
    fs::path mat_a;
    fs::path mat_b;
};

struct CliCommand {
    std::string name;
    std::vector<std::string> args;
    std::vector<fs::path> outputs;  ///< files the command writes
};

struct CliRun {
    int code = -1;
    std::string out;
    std::string err;
    std::map<std::string, std::string> files;
};

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

inline CliFixture make_cli_fixture(const fs::path& dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    CliFixture f;
    f.dir = dir;
    f.preds = fs::path(UNCAL_TEST_DATA) / "preds_20.jsonl";
    f.rag = fs::path(UNCAL_TEST_DATA) / "rag_traces_20.jsonl";

    f.spaces = dir / "spaces.jsonl";
    std::string spaces;
    for (const auto& s : trajspace::random_spaces(5, 12)) {
        spaces += dump_json_line(trajspace::space_to_json(s)) + "\n";
    }
    spit(f.spaces, spaces);

    // Probe fixture: 60 records, half correct; layer 2 carries the label.
    std::mt19937_64 rng(77);
    f.probe_preds = dir / "probe_preds.jsonl";
    std::vector<std::string> ids;
    std::vector<int> wrong;
    std::string preds;
    for (int i = 0; i < 60; ++i) {
        const std::string qid = "r" + std::to_string(100 + i);
        const bool correct = (i * 7) % 3 != 0;
        ids.push_back(qid);
        wrong.push_back(correct ? 0 : 1);
        const std::string answer = correct ? "Paris" : "Lyon";
        preds += dump_json_line(json{{"qid", qid},
                                     {"dataset", i % 2 ? "nq" : "triviaqa"},
                                     {"question", "Capital of France?"},
                                     {"gold_answers", {"Paris"}},
                                     {"response_text", "Thinking.\n<uncertain>\nAnswer: " + answer + "\nConfidence: 0." + std::to_string(1 + i % 9)},
                                     {"response_token_count", 6 + i % 5}}) +
                 "\n";
    }
    spit(f.probe_preds, preds);
    f.hidden = dir / "hidden_base";
    f.hidden_cal = dir / "hidden_cal";
    fs::create_directories(f.hidden);
    fs::create_directories(f.hidden_cal);
    for (int layer = 0; layer < 3; ++layer) {
        auto base = gaussian_matrix(rng, 60, 6);
        if (layer == 2) {
            for (std::size_t r = 0; r < 60; ++r) {
                base(r, 0) += 3.0 * wrong[r];
            }
        }
        auto cal = base;
        const auto noise = gaussian_matrix(rng, 60, 6);
        for (std::size_t i = 0; i < cal.values().size(); ++i) {
            cal.values()[i] += 0.3 * noise.values()[i];
        }
        write_hidden_layer(f.hidden, HiddenMatrix{layer, base, ids});
        write_hidden_layer(f.hidden_cal, HiddenMatrix{layer, cal, ids});
    }
    f.mat_a = f.hidden / "layer_0.mat";
    f.mat_b = f.hidden_cal / "layer_0.mat";

    f.pairs = dir / "pairs.jsonl";
    f.annotations = dir / "annotations.jsonl";
    const char* types[] = {"reasoning", "nearby_context", "confidence_digit", "structural_label", "uncertainty",
                           "other"};
    std::uniform_real_distribution<double> unit(0.05, 1.0);
    std::string pairs;
    std::string ann;
    for (std::size_t pos = 0; pos < 12; ++pos) {
        std::vector<double> b(4);
        std::vector<double> c(4);
        double sb = 0;
        double sc = 0;
        for (int k = 0; k < 4; ++k) {
            b[k] = unit(rng);
            c[k] = unit(rng);
            sb += b[k];
            sc += c[k];
        }
        for (int k = 0; k < 4; ++k) {
            b[k] /= sb;
            c[k] /= sc;
        }
        pairs += dump_json_line(json{{"position", pos}, {"base_probs", b}, {"calibrated_probs", c}}) + "\n";
        ann += dump_json_line(json{{"position", pos}, {"type", types[pos % 6]}}) + "\n";
    }
    spit(f.pairs, pairs);
    spit(f.annotations, ann);
    return f;
}

/// One invocation per subcommand. `probe eval` reads the model `probe fit`
/// wrote, so the list must run in order.
inline std::vector<CliCommand> cli_commands(const CliFixture& f) {
    const auto s = [](const fs::path& p) { return p.string(); };
    const fs::path o = f.dir / "out";
    fs::create_directories(o);
    const fs::path model = f.dir / "probe_model.json";
    return {
        {"theory verify", {"theory", "verify", "--in", s(f.spaces)}, {}},
        {"theory verify generated", {"theory", "verify", "--generate", "30", "--seed", "4"}, {}},
        {"theory iterate", {"theory", "iterate", "--in", s(f.spaces), "--steps", "3", "--eta", "0.5"}, {}},
        {"match", {"match", "--in", s(f.preds), "--out", s(o / "matched.jsonl")}, {o / "matched.jsonl"}},
        {"calib", {"calib", "--in", s(f.preds), "--bins-csv", s(o / "bins.csv")}, {o / "bins.csv"}},
        {"recal ts",
         {"recal", "ts", "--fit", s(f.preds), "--apply", s(f.preds), "--out", s(o / "ts.jsonl"), "--model-out",
          s(o / "ts.json")},
         {o / "ts.jsonl", o / "ts.json"}},
        {"recal ats",
         {"recal", "ats", "--fit", s(f.preds), "--apply", s(f.preds), "--iterations", "300", "--model-out",
          s(o / "ats.json")},
         {o / "ats.json"}},
        {"recal ptrue", {"recal", "ptrue", "--apply", s(f.preds)}, {}},
        {"probe sweep",
         {"probe", "sweep", "--hidden", s(f.hidden), "--preds", s(f.probe_preds), "--csv", s(o / "sweep.csv")},
         {o / "sweep.csv"}},
        {"probe fit", {"probe", "fit", "--hidden", s(f.hidden), "--preds", s(f.probe_preds), "--layer", "-1", "--model-out", s(model)},
         {}},
        {"probe eval", {"probe", "eval", "--hidden", s(f.hidden), "--preds", s(f.probe_preds), "--model", s(model)}, {}},
        {"rag", {"rag", "--policy", "conf:0.6", "--in", s(f.rag), "--csv", s(o / "rag.csv")}, {o / "rag.csv"}},
        {"repr cka files", {"repr", "cka", "--a", s(f.mat_a), "--b", s(f.mat_b)}, {}},
        {"repr cka layers", {"repr", "cka", "--a", s(f.hidden), "--b", s(f.hidden_cal), "--csv", s(o / "cka.csv")},
         {o / "cka.csv"}},
        {"repr kl",
         {"repr", "kl", "--pairs", s(f.pairs), "--annotations", s(f.annotations), "--csv", s(o / "kl.csv")},
         {o / "kl.csv"}},
        {"repr pca", {"repr", "pca", "--matrix", s(f.mat_a), "--k", "2", "--csv", s(o / "pca.csv")}, {o / "pca.csv"}},
        {"repr drift",
         {"repr", "drift", "--base", s(f.mat_a), "--cal", s(f.mat_b), "--interest-rows", "0,1,2", "--baseline-rows",
          "3,4,5"},
         {}},
    };
}

inline CliRun run_cli(const CliCommand& cmd) {
    for (const auto& p : cmd.outputs) {
        fs::remove(p);
    }
    CliRun r;
    std::ostringstream out;
    std::ostringstream err;
    r.code = cli::run_pipeline(cmd.args, out, err);
    r.out = out.str();
    r.err = err.str();
    for (const auto& p : cmd.outputs) {
        r.files[p.string()] = fs::exists(p) ? slurp(p) : std::string("<missing>");
    }
    return r;
}

}  // namespace uncal::testing
