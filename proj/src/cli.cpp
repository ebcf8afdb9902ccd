#include "uncal/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "uncal/calib.hpp"
#include "uncal/error.hpp"
#include "uncal/json_io.hpp"
#include "uncal/matrix_io.hpp"
#include "uncal/probe.hpp"
#include "uncal/ragctl.hpp"
#include "uncal/recal.hpp"
#include "uncal/records.hpp"
#include "uncal/repr.hpp"
#include "uncal/rewards.hpp"
#include "uncal/trajspace.hpp"
#include "uncal/trajspace_gen.hpp"

namespace uncal::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
    std::uint64_t seed = 0;
    std::string report;
    double f1_threshold = rewards::kDefaultF1Threshold;
};

struct TheoryArgs {
    std::string in;
    std::size_t generate = 0;
    double eta = 1.0;
    std::size_t steps = 5;
};

struct CalibArgs {
    std::string in;
    std::size_t bins = 10;
    double nll_eps = 1e-6;
    double epistemic = 0.5;
    double strict = 0.7;
    std::string bins_csv;
};

struct MatchArgs {
    std::string in;
    std::string out;
};

struct RecalArgs {
    std::string fit;
    std::string apply;
    std::string out;
    std::string model_out;
    double l2 = 0.0;
    std::size_t iterations = 2000;
    std::size_t bins = 10;
};

struct ProbeArgs {
    std::string hidden;
    std::string preds;
    std::string layers = "-1";
    int layer = -1;
    double l2 = probe::kDefaultL2;
    std::string model;
    std::string model_out;
    std::string csv;
};

struct RagArgs {
    std::string policy = "never";
    std::string in;
    std::string csv;
};

struct ReprArgs {
    std::string a;
    std::string b;
    std::string layers;
    std::string pairs;
    std::string annotations;
    double epsilon = repr::kKlEpsilon;
    std::string matrix;
    std::size_t k = 2;
    std::string base;
    std::string cal;
    std::string interest;
    std::string baseline;
    std::string csv;
};

json report_envelope(const std::string& command, json config, json result) {
    return {{"schema_version", kSchemaVersion},
            {"command", command},
            {"config", std::move(config)},
            {"result", std::move(result)}};
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
    if (path.empty()) {
        out << text;
    } else {
        write_text_file(path, text);
    }
}

void emit_report(const json& report, const Common& common, std::ostream& out) {
    emit(dump_json(report) + "\n", common.report, out);
}

template <typename T>
std::vector<T> take_items(LoadResult<T> loaded, const std::string& path, std::ostream& err) {
    for (const auto& e : loaded.errors) {
        err << path << ":" << e.line << ": " << e.message << "\n";
    }
    return std::move(loaded.items);
}

std::vector<PredictionRecord> load_preds(const std::string& path, std::ostream& err) {
    return take_items(load_predictions(path), path, err);
}

json common_config(const Common& c) {
    return {{"seed", c.seed}, {"f1_threshold", c.f1_threshold}};
}

std::vector<std::size_t> parse_index_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t v = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size()) {
            throw Error(ErrorKind::InvalidArgument, "bad row index '" + item + "'");
        }
        out.push_back(v);
    }
    return out;
}

fs::path ids_sidecar(const fs::path& mat) {
    auto p = mat;
    p.replace_extension(".ids.jsonl");
    return p;
}

std::vector<std::string> maybe_row_ids(const fs::path& mat) {
    const auto ids = ids_sidecar(mat);
    return fs::exists(ids) ? read_row_ids(ids) : std::vector<std::string>{};
}

// --- theory -----------------------------------------------------------------

std::vector<trajspace::TrajectorySpace> theory_inputs(const TheoryArgs& a, const Common& c, std::ostream& err) {
    if (!a.in.empty()) {
        return take_items(load_jsonl<trajspace::TrajectorySpace>(
                              a.in, [](const json& j) { return trajspace::space_from_json(j); }),
                          a.in, err);
    }
    if (a.generate == 0) {
        throw Error(ErrorKind::InvalidArgument, "theory needs --in or --generate");
    }
    return trajspace::random_spaces(c.seed, a.generate);
}

json theory_config(const TheoryArgs& a, const Common& c) {
    auto j = common_config(c);
    j["in"] = a.in;
    j["generate"] = a.generate;
    j["eta"] = a.eta;
    return j;
}

int run_theory_verify(const TheoryArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
    const auto spaces = theory_inputs(a, c, err);
    const auto reports = trajspace::verify_batch(spaces, a.eta);
    std::size_t ok = 0;
    std::size_t bound_failures = 0;
    std::size_t support_failures = 0;
    std::size_t ordering_failures = 0;
    double max_err = 0.0;
    for (const auto& r : reports) {
        ok += r.status == "ok" ? 1 : 0;
        bound_failures += (r.bound && !r.bound->holds) ? 1 : 0;
        support_failures += r.support_preserved ? 0 : 1;
        ordering_failures += r.compression_ordered ? 0 : 1;
        max_err = std::max(max_err, r.max_log_odds_error);
    }
    auto cfg = theory_config(a, c);
    const json summary{{"spaces", reports.size()},
                       {"hypothesis_satisfied", ok},
                       {"bound_failures", bound_failures},
                       {"support_failures", support_failures},
                       {"ordering_failures", ordering_failures},
                       {"max_log_odds_error", max_err}};
    std::string text = dump_json_line(report_envelope("theory verify", cfg, summary)) + "\n";
    for (const auto& r : reports) {
        text += dump_json_line(trajspace::to_json(r)) + "\n";
    }
    emit(text, c.report, out);
    return kExitOk;
}

int run_theory_iterate(const TheoryArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
    const auto spaces = theory_inputs(a, c, err);
    if (spaces.empty()) {
        throw Error(ErrorKind::EmptyBatch, "no trajectory space to iterate");
    }
    json runs = json::array();
    for (const auto& space : spaces) {
        const auto trace = trajspace::iterate_tilt(space, trajspace::RewardSpec::verbal(), a.eta, a.steps);
        json steps = json::array();
        steps.push_back({{"step", 0}, {"summary", trajspace::to_json(trajspace::summarize(space))}});
        for (const auto& s : trace) {
            steps.push_back({{"step", s.step}, {"summary", trajspace::to_json(s.summary)}});
        }
        runs.push_back({{"steps", steps}, {"final_space", trajspace::space_to_json(trace.back().space)}});
    }
    auto cfg = theory_config(a, c);
    cfg["steps"] = a.steps;
    emit_report(report_envelope("theory iterate", cfg, {{"runs", runs}}), c, out);
    return kExitOk;
}

// --- match / calib ----------------------------------------------------------

int run_match(const MatchArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
    auto records = load_preds(a.in, err);
    std::size_t correct = 0;
    std::map<std::string, std::size_t> by_rule;
    std::string lines;
    for (auto& r : records) {
        r = rewards::annotate(std::move(r), c.f1_threshold);
        correct += r.match->correct ? 1 : 0;
        if (r.match->correct) {
            ++by_rule[std::string(to_string(r.match->rule))];
        }
        auto j = to_json(r);
        j["schema_version"] = kSchemaVersion;
        lines += dump_json_line(j) + "\n";
    }
    if (!a.out.empty()) {
        write_text_file(a.out, lines);
    }
    auto cfg = common_config(c);
    cfg["in"] = a.in;
    cfg["out"] = a.out;
    json result{{"n", records.size()}, {"correct", correct}, {"correct_by_rule", by_rule}};
    if (a.out.empty() && c.report.empty()) {
        out << lines;
        return kExitOk;
    }
    emit_report(report_envelope("match", cfg, result), c, out);
    return kExitOk;
}

calib::CalibOptions calib_options(const CalibArgs& a) {
    calib::CalibOptions o;
    o.num_bins = a.bins;
    o.nll_epsilon = a.nll_eps;
    o.epistemic_threshold = a.epistemic;
    o.strict_threshold = a.strict;
    return o;
}

int run_calib(const CalibArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
    if (a.bins == 0) {
        throw Error(ErrorKind::InvalidArgument, "--bins must be positive");
    }
    const auto records = load_preds(a.in, err);
    const auto scored = calib::score_all(records, c.f1_threshold);
    const auto report = calib::calibration_report(scored, calib_options(a));
    auto cfg = common_config(c);
    cfg["in"] = a.in;
    cfg["bins"] = a.bins;
    cfg["nll_epsilon"] = a.nll_eps;
    cfg["epistemic_threshold"] = a.epistemic;
    cfg["strict_threshold"] = a.strict;
    cfg["bins_csv"] = a.bins_csv;
    if (!a.bins_csv.empty()) {
        write_text_file(a.bins_csv, calib::bins_csv(report.bins));
    }
    emit_report(report_envelope("calib", cfg, calib::to_json(report)), c, out);
    return kExitOk;
}

// --- recal ------------------------------------------------------------------

json nll_summary(std::span<const recal::Example> examples, const std::function<double(const recal::Example&)>& map) {
    double nll = 0.0;
    double sq = 0.0;
    std::size_t over = 0;
    for (const auto& e : examples) {
        const double p = recal::clamp_confidence(map(e));
        nll -= e.correct ? std::log(p) : std::log1p(-p);
        sq += (p - (e.correct ? 1.0 : 0.0)) * (p - (e.correct ? 1.0 : 0.0));
        over += (!e.correct && p > 0.5) ? 1 : 0;
    }
    const double n = static_cast<double>(examples.size());
    return {{"n", examples.size()},
            {"nll", examples.empty() ? json(nullptr) : json(nll / n)},
            {"brier", examples.empty() ? json(nullptr) : json(sq / n)},
            {"overconfident_wrong_rate", examples.empty() ? json(nullptr) : json(static_cast<double>(over) / n)}};
}

int run_recal(const std::string& method, const RecalArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
    auto cfg = common_config(c);
    cfg["method"] = method;
    cfg["fit"] = a.fit;
    cfg["apply"] = a.apply;
    cfg["out"] = a.out;
    cfg["model_out"] = a.model_out;
    json result;

    if (method == "ptrue") {
        if (a.apply.empty()) {
            throw Error(ErrorKind::InvalidArgument, "recal ptrue needs --apply");
        }
        auto records = load_preds(a.apply, err);
        std::size_t replaced = 0;
        std::vector<json> lines;
        for (auto& r : records) {
            r = rewards::annotate(std::move(r), c.f1_threshold);
            if (r.p_affirmative) {
                recal::ptrue_combine(r, *r.p_affirmative);
                ++replaced;
            }
            lines.push_back(to_json(r));
        }
        const auto before = calib::score_all(load_preds(a.apply, err), c.f1_threshold);
        const auto after = calib::score_all(records, c.f1_threshold);
        result = {{"replaced", replaced},
                  {"n", records.size()},
                  {"before", calib::to_json(calib::calibration_report(before, {}))},
                  {"after", calib::to_json(calib::calibration_report(after, {}))}};
        if (!a.out.empty()) {
            write_jsonl(a.out, lines);
        }
        emit_report(report_envelope("recal ptrue", cfg, result), c, out);
        return kExitOk;
    }

    if (a.fit.empty()) {
        throw Error(ErrorKind::InvalidArgument, "recal " + method + " needs --fit");
    }
    const auto fit_examples = recal::make_examples(load_preds(a.fit, err), c.f1_threshold);
    std::function<double(const recal::Example&)> mapper;
    json model_json;
    if (method == "ts") {
        const auto model = recal::fit_global_ts(fit_examples);
        mapper = [model](const recal::Example& e) { return recal::apply_ts(model, e.confidence); };
        model_json = recal::to_json(model);
    } else {
        recal::AtsOptions opts;
        opts.l2 = a.l2;
        opts.iterations = a.iterations;
        cfg["l2"] = a.l2;
        cfg["iterations"] = a.iterations;
        const auto model = recal::fit_ats(fit_examples, opts);
        mapper = [model](const recal::Example& e) { return recal::apply_ats(model, e); };
        model_json = recal::to_json(model);
    }
    const auto identity = [](const recal::Example& e) { return e.confidence; };
    result["model"] = model_json;
    result["fit"] = {{"before", nll_summary(fit_examples, identity)}, {"after", nll_summary(fit_examples, mapper)}};
    if (!a.model_out.empty()) {
        write_text_file(a.model_out, dump_json(model_json) + "\n");
    }
    if (!a.apply.empty()) {
        auto records = load_preds(a.apply, err);
        std::vector<recal::Example> apply_examples;
        std::vector<json> lines;
        for (auto& r : records) {
            r = rewards::annotate(std::move(r), c.f1_threshold);
            if (const auto e = recal::make_example(r, c.f1_threshold)) {
                apply_examples.push_back(*e);
                r.verbal_confidence = mapper(*e);
                r.confidence_clamped = false;
            }
            lines.push_back(to_json(r));
        }
        result["apply"] = {{"before", nll_summary(apply_examples, identity)},
                           {"after", nll_summary(apply_examples, mapper)}};
        if (!a.out.empty()) {
            write_jsonl(a.out, lines);
        }
    }
    emit_report(report_envelope("recal " + method, cfg, result), c, out);
    return kExitOk;
}

// --- probe ------------------------------------------------------------------

std::vector<HiddenMatrix> load_layers(const std::string& dir, const std::vector<int>& layers) {
    std::vector<HiddenMatrix> out;
    for (int l : layers) {
        out.push_back(read_hidden_layer(dir, l));
    }
    return out;
}

int run_probe(const std::string& action, const ProbeArgs& a, const Common& c, std::ostream& out,
              std::ostream& err) {
    if (a.hidden.empty() || a.preds.empty()) {
        throw Error(ErrorKind::InvalidArgument, "probe needs --hidden and --preds");
    }
    const auto records = load_preds(a.preds, err);
    const auto available = available_layers(a.hidden);
    auto cfg = common_config(c);
    cfg["hidden"] = a.hidden;
    cfg["preds"] = a.preds;
    cfg["l2"] = a.l2;
    probe::SweepOptions opts;
    opts.l2 = a.l2;
    opts.seed = c.seed;
    opts.f1_threshold = c.f1_threshold;

    if (action == "sweep") {
        const auto layers = parse_layer_list(a.layers, available);
        cfg["layers"] = layers;
        const auto rows = probe::layer_sweep(load_layers(a.hidden, layers), records, opts);
        json jrows = json::array();
        std::string csv = "layer,auroc,auprc,precision,recall,f1,threshold,dev_n,train_n\n";
        for (const auto& r : rows) {
            jrows.push_back(probe::to_json(r));
            std::ostringstream line;
            line.precision(17);
            line << r.layer << "," << r.dev.auroc << "," << r.dev.auprc << "," << r.dev.precision << ","
                 << r.dev.recall << "," << r.dev.f1 << "," << r.dev.threshold << "," << r.dev.n << "," << r.train_n
                 << "\n";
            csv += line.str();
        }
        if (!a.csv.empty()) {
            write_text_file(a.csv, csv);
        }
        const auto best = std::max_element(rows.begin(), rows.end(), [](const auto& x, const auto& y) {
            return x.dev.auroc < y.dev.auroc;
        });
        emit_report(report_envelope("probe sweep", cfg,
                                    {{"rows", jrows}, {"best_layer", best == rows.end() ? json(nullptr)
                                                                                        : json(best->layer)}}),
                    c, out);
        return kExitOk;
    }
    if (action == "fit") {
        const auto layer = parse_layer_list(std::to_string(a.layer), available).front();
        cfg["layer"] = layer;
        const auto fitted = probe::fit_layer(read_hidden_layer(a.hidden, layer), records, opts);
        const auto model_json = probe::to_json(fitted.model);
        if (!a.model_out.empty()) {
            write_text_file(a.model_out, dump_json(model_json) + "\n");
        }
        emit_report(report_envelope("probe fit", cfg,
                                    {{"model", model_json}, {"dev", probe::to_json(fitted.row.dev)},
                                     {"train_n", fitted.row.train_n}}),
                    c, out);
        return kExitOk;
    }
    // eval
    if (a.model.empty()) {
        throw Error(ErrorKind::InvalidArgument, "probe eval needs --model");
    }
    const auto model = probe::probe_from_json(json::parse(read_text_file(a.model)));
    cfg["model"] = a.model;
    cfg["layer"] = model.layer;
    const auto data = probe::align_layer(read_hidden_layer(a.hidden, model.layer), records, c.f1_threshold);
    const auto eval = probe::evaluate(model, data.features, data.wrong);
    emit_report(report_envelope("probe eval", cfg, probe::to_json(eval)), c, out);
    return kExitOk;
}

// --- rag --------------------------------------------------------------------

int run_rag(const RagArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
    const auto policy = ragctl::ControllerPolicy::parse(a.policy);
    const auto traces = take_items(ragctl::load_traces(a.in), a.in, err);
    const auto overall = ragctl::simulate(policy, traces, c.f1_threshold);
    const auto by_dataset = ragctl::simulate_by_dataset(policy, traces, c.f1_threshold);
    json datasets = json::object();
    for (const auto& [name, rep] : by_dataset) {
        datasets[name] = ragctl::to_json(rep);
    }
    if (!a.csv.empty()) {
        write_text_file(a.csv, ragctl::dataset_csv(by_dataset));
    }
    auto cfg = common_config(c);
    cfg["policy"] = policy.describe();
    cfg["in"] = a.in;
    cfg["csv"] = a.csv;
    emit_report(report_envelope("rag", cfg, {{"overall", ragctl::to_json(overall)}, {"by_dataset", datasets}}), c,
                out);
    return kExitOk;
}

// --- repr -------------------------------------------------------------------

int run_repr(const std::string& action, const ReprArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
    auto cfg = common_config(c);
    json result;
    std::string csv;
    if (action == "cka") {
        cfg["a"] = a.a;
        cfg["b"] = a.b;
        if (fs::is_directory(a.a) && fs::is_directory(a.b)) {
            const auto la = available_layers(a.a);
            const auto lb = available_layers(a.b);
            std::vector<int> common;
            std::set_intersection(la.begin(), la.end(), lb.begin(), lb.end(), std::back_inserter(common));
            const auto layers = a.layers.empty() ? common : parse_layer_list(a.layers, common);
            cfg["layers"] = layers;
            json rows = json::array();
            csv = "layer,cka\n";
            for (int l : layers) {
                const auto x = read_hidden_layer(a.a, l);
                const auto y = read_hidden_layer(a.b, l);
                if (x.row_ids != y.row_ids) {
                    throw Error(ErrorKind::ShapeError, "layer " + std::to_string(l) + " row ids differ");
                }
                const double v = repr::linear_cka(x.values, y.values);
                rows.push_back({{"layer", l}, {"cka", v}});
                std::ostringstream line;
                line.precision(17);
                line << l << "," << v << "\n";
                csv += line.str();
            }
            result = {{"layers", rows}};
        } else {
            const double v = repr::linear_cka(read_matrix_file(a.a), read_matrix_file(a.b));
            result = {{"cka", v}};
        }
    } else if (action == "kl") {
        cfg["pairs"] = a.pairs;
        cfg["annotations"] = a.annotations;
        cfg["epsilon"] = a.epsilon;
        const auto pairs = take_items(
            load_jsonl<repr::TokenDistPair>(a.pairs, [](const json& j) { return repr::dist_pair_from_json(j); }),
            a.pairs, err);
        const auto ann = take_items(load_jsonl<repr::TokenAnnotation>(
                                        a.annotations, [](const json& j) { return repr::annotation_from_json(j); }),
                                    a.annotations, err);
        const auto table = repr::kl_by_type(pairs, ann, a.epsilon);
        result = repr::to_json(table);
        csv = repr::kl_csv(table);
    } else if (action == "pca") {
        cfg["matrix"] = a.matrix;
        cfg["k"] = a.k;
        repr::PcaOptions opts;
        opts.seed = c.seed;
        const auto pca = repr::pca_project(read_matrix_file(a.matrix), a.k, opts);
        result = repr::to_json(pca);
        csv = repr::projection_csv(pca, maybe_row_ids(a.matrix));
    } else {
        cfg["base"] = a.base;
        cfg["cal"] = a.cal;
        const auto wb = read_matrix_file(a.base);
        const auto wc = read_matrix_file(a.cal);
        result["frobenius_drift"] = repr::frobenius_drift(wb, wc);
        if (!a.interest.empty() || !a.baseline.empty()) {
            cfg["interest_rows"] = a.interest;
            cfg["baseline_rows"] = a.baseline;
            const auto interest = parse_index_list(a.interest);
            const auto baseline = parse_index_list(a.baseline);
            result["embedding"] = repr::to_json(repr::embedding_drift_report(interest, baseline, wb, wc));
        }
    }
    cfg["csv"] = a.csv;
    if (!a.csv.empty() && !csv.empty()) {
        write_text_file(a.csv, csv);
    }
    emit_report(report_envelope("repr " + action, cfg, result), c, out);
    return kExitOk;
}

int exit_code_for(ErrorKind kind) {
    return (kind == ErrorKind::IoError || kind == ErrorKind::CorruptInput) ? kExitIo : kExitValidation;
}

}  // namespace

std::uint64_t resolve_seed(std::uint64_t configured) {
    const char* env = std::getenv("UNCAL_SEED");
    if (env == nullptr || *env == '\0') {
        return configured;
    }
    const std::string_view text(env);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw Error(ErrorKind::InvalidArgument, "UNCAL_SEED is not an unsigned integer");
    }
    return v;
}

std::vector<int> parse_layer_list(const std::string& text, const std::vector<int>& available) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        int v = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
            throw Error(ErrorKind::InvalidArgument, "bad layer '" + item + "'");
        }
        if (v == -1) {
            if (available.empty()) {
                throw Error(ErrorKind::IoError, "no layer files available for -1");
            }
            v = available.back();
        } else if (v < 0) {
            throw Error(ErrorKind::InvalidArgument, "negative layer other than -1");
        }
        if (std::find(out.begin(), out.end(), v) == out.end()) {
            out.push_back(v);
        }
    }
    if (out.empty()) {
        throw Error(ErrorKind::InvalidArgument, "empty layer list");
    }
    return out;
}

int run_pipeline(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Uncertainty-interface calibration toolkit", "uncal"};
    app.fallthrough();
    app.require_subcommand(1);
    Common common;
    app.add_option("--seed", common.seed, "Seed for every randomized step (UNCAL_SEED overrides)");
    app.add_option("--report", common.report, "Write the report here instead of stdout");
    app.add_option("--f1-threshold", common.f1_threshold, "Token-F1 threshold for a fuzzy match")
        ->check(CLI::Range(0.0, 1.0));

    TheoryArgs theory;
    auto* theory_cmd = app.add_subcommand("theory", "Tilted-policy checks on trajectory spaces");
    theory_cmd->require_subcommand(1);
    for (const char* name : {"verify", "iterate"}) {
        auto* sub = theory_cmd->add_subcommand(name);
        sub->add_option("--in", theory.in, "Trajectory spaces (JSONL)");
        sub->add_option("--generate", theory.generate, "Generate this many seeded random spaces instead");
        sub->add_option("--eta", theory.eta, "Tilt step size")->check(CLI::PositiveNumber);
        if (std::string(name) == "iterate") {
            sub->add_option("--steps", theory.steps, "Number of tilts")->check(CLI::PositiveNumber);
        }
    }

    MatchArgs match;
    auto* match_cmd = app.add_subcommand("match", "Annotate predictions with match results");
    match_cmd->add_option("--in", match.in)->required();
    match_cmd->add_option("--out", match.out, "Annotated JSONL (stdout when omitted)");

    CalibArgs calib_args;
    auto* calib_cmd = app.add_subcommand("calib", "Calibration report");
    calib_cmd->add_option("--in", calib_args.in)->required();
    calib_cmd->add_option("--bins", calib_args.bins);
    calib_cmd->add_option("--nll-eps", calib_args.nll_eps)->check(CLI::Range(1e-300, 0.5));
    calib_cmd->add_option("--epistemic-threshold", calib_args.epistemic)->check(CLI::Range(0.0, 1.0));
    calib_cmd->add_option("--strict-threshold", calib_args.strict)->check(CLI::Range(0.0, 1.0));
    calib_cmd->add_option("--bins-csv", calib_args.bins_csv);

    RecalArgs recal_args;
    std::string recal_method;
    auto* recal_cmd = app.add_subcommand("recal", "Post-hoc recalibration");
    recal_cmd->require_subcommand(1);
    for (const char* name : {"ts", "ats", "ptrue"}) {
        auto* sub = recal_cmd->add_subcommand(name);
        sub->add_option("--fit", recal_args.fit);
        sub->add_option("--apply", recal_args.apply);
        sub->add_option("--out", recal_args.out);
        sub->add_option("--model-out", recal_args.model_out);
        if (std::string(name) == "ats") {
            sub->add_option("--l2", recal_args.l2)->check(CLI::NonNegativeNumber);
            sub->add_option("--iterations", recal_args.iterations);
        }
    }

    ProbeArgs probe_args;
    auto* probe_cmd = app.add_subcommand("probe", "Wrongness probe on hidden states");
    probe_cmd->require_subcommand(1);
    for (const char* name : {"sweep", "fit", "eval"}) {
        auto* sub = probe_cmd->add_subcommand(name);
        sub->add_option("--hidden", probe_args.hidden)->required();
        sub->add_option("--preds", probe_args.preds)->required();
        sub->add_option("--l2", probe_args.l2)->check(CLI::NonNegativeNumber);
        const std::string n(name);
        if (n == "sweep") {
            sub->add_option("--layers", probe_args.layers, "Comma-separated; -1 is the last layer");
            sub->add_option("--csv", probe_args.csv);
        } else if (n == "fit") {
            sub->add_option("--layer", probe_args.layer);
            sub->add_option("--model-out", probe_args.model_out);
        } else {
            sub->add_option("--model", probe_args.model)->required();
        }
    }

    RagArgs rag_args;
    auto* rag_cmd = app.add_subcommand("rag", "Adaptive-retrieval controller simulation");
    rag_cmd->add_option("--policy", rag_args.policy,
                        "always|never|conf:<tau>|emit|emit+probe:<theta>|flare:<tau_p>[:<w>]|external");
    rag_cmd->add_option("--in", rag_args.in)->required();
    rag_cmd->add_option("--csv", rag_args.csv, "Per-dataset dataset,n,em,f1,t table");

    ReprArgs repr_args;
    auto* repr_cmd = app.add_subcommand("repr", "Representation analytics");
    repr_cmd->require_subcommand(1);
    auto* cka = repr_cmd->add_subcommand("cka");
    cka->add_option("--a", repr_args.a, "Matrix file or layer directory")->required();
    cka->add_option("--b", repr_args.b, "Matrix file or layer directory")->required();
    cka->add_option("--layers", repr_args.layers);
    auto* klc = repr_cmd->add_subcommand("kl");
    klc->add_option("--pairs", repr_args.pairs)->required();
    klc->add_option("--annotations", repr_args.annotations)->required();
    klc->add_option("--epsilon", repr_args.epsilon)->check(CLI::NonNegativeNumber);
    auto* pca = repr_cmd->add_subcommand("pca");
    pca->add_option("--matrix", repr_args.matrix)->required();
    pca->add_option("--k", repr_args.k);
    auto* drift = repr_cmd->add_subcommand("drift");
    drift->add_option("--base", repr_args.base)->required();
    drift->add_option("--cal", repr_args.cal)->required();
    drift->add_option("--interest-rows", repr_args.interest);
    drift->add_option("--baseline-rows", repr_args.baseline);
    for (auto* sub : {cka, klc, pca, drift}) {
        sub->add_option("--csv", repr_args.csv);
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitValidation;
    }

    try {
        common.seed = resolve_seed(common.seed);
        if (theory_cmd->parsed()) {
            return theory_cmd->got_subcommand("verify") ? run_theory_verify(theory, common, out, err)
                                                        : run_theory_iterate(theory, common, out, err);
        }
        if (match_cmd->parsed()) {
            return run_match(match, common, out, err);
        }
        if (calib_cmd->parsed()) {
            return run_calib(calib_args, common, out, err);
        }
        if (recal_cmd->parsed()) {
            recal_method = recal_cmd->get_subcommands().front()->get_name();
            return run_recal(recal_method, recal_args, common, out, err);
        }
        if (probe_cmd->parsed()) {
            return run_probe(probe_cmd->get_subcommands().front()->get_name(), probe_args, common, out, err);
        }
        if (rag_cmd->parsed()) {
            return run_rag(rag_args, common, out, err);
        }
        return run_repr(repr_cmd->get_subcommands().front()->get_name(), repr_args, common, out, err);
    } catch (const Error& e) {
        err << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const json::exception& e) {
        err << "error [ParseError]: " << e.what() << "\n";
        return kExitValidation;
    } catch (const fs::filesystem_error& e) {
        err << "error [IoError]: " << e.what() << "\n";
        return kExitIo;
    }
}

}  // namespace uncal::cli
