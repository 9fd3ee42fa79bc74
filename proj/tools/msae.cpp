// SPDX-License-Identifier: Apache-2.0
//
// msae command-line tool: training, evaluation, and dictionary tooling for
// masked group-sparse autoencoders over paired multimodal embeddings.
//
// Exit codes: 0 success, 1 configuration/argument error, 2 data/format
// error, 3 numeric divergence.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "msae/batching.hpp"
#include "msae/dict_theory.hpp"
#include "msae/embedding.hpp"
#include "msae/errors.hpp"
#include "msae/eval.hpp"
#include "msae/interpret.hpp"
#include "msae/loss.hpp"
#include "msae/metrics.hpp"
#include "msae/sae.hpp"
#include "msae/synth.hpp"
#include "msae/toml.hpp"
#include "msae/train.hpp"

namespace {

using namespace msae;

// ---------------------------------------------------------------------------
// Small shared helpers
// ---------------------------------------------------------------------------

/// Every run echoes its fully-resolved configuration before doing work.
class ConfigEcho {
public:
    explicit ConfigEcho(std::string subcommand) { add("subcommand", std::move(subcommand)); }

    void add(const std::string& key, const std::string& value) {
        lines_.push_back(key + " = \"" + value + "\"");
    }
    void add(const std::string& key, const char* value) { add(key, std::string(value)); }
    void add(const std::string& key, double value) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", value);
        lines_.push_back(key + " = " + buf);
    }
    template <typename Int>
        requires std::is_integral_v<Int>
    void add(const std::string& key, Int value) {
        lines_.push_back(key + " = " + std::to_string(value));
    }
    void add(const std::string& key, bool value) {
        lines_.push_back(key + std::string(" = ") + (value ? "true" : "false"));
    }

    void print(std::ostream& out, const std::string& prefix = "") const {
        out << prefix << "[config]\n";
        for (const auto& line : lines_) out << prefix << line << "\n";
    }

private:
    std::vector<std::string> lines_;
};

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw msae::error("cannot open '" + path + "' for writing");
    out << content;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

toml::Table load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open manifest '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return toml::parse(text);
}

std::string resolve_relative(const std::string& manifest_path, const std::string& p) {
    std::filesystem::path fp(p);
    if (fp.is_absolute()) return fp.string();
    return (std::filesystem::path(manifest_path).parent_path() / fp).string();
}

std::pair<std::string, std::string> parse_modality_pair(const std::string& raw) {
    const auto comma = raw.find(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 == raw.size())
        throw config_error("--pair expects 'modality_m,modality_n', got '" + raw + "'");
    return {raw.substr(0, comma), raw.substr(comma + 1)};
}

/// Dictionary from either an MSC1 checkpoint (its decoder) or an MEB file
/// (atoms as rows). Columns are renormalized: an f32 round trip perturbs
/// norms past the dictionary's 1e-8 unit tolerance.
Dictionary load_dictionary(const std::string& path) {
    auto in = binio::open_input(path);
    char magic[4];
    binio::read_bytes(in, magic, 4, "magic");
    in.close();
    Dictionary dict;
    if (std::string(magic, 4) == "MSC1") {
        dict.atoms = load_checkpoint(path).params.w_dec;
    } else {
        dict.atoms = load_embeddings(path).data.transpose();
    }
    for (Eigen::Index c = 0; c < dict.atoms.cols(); ++c) {
        const double norm = dict.atoms.col(c).norm();
        if (norm > 0.0) dict.atoms.col(c) /= norm;
    }
    return dict;
}

void save_dictionary(const Dictionary& dict, const std::string& path) {
    EmbeddingMatrix rows;
    rows.modality = "dictionary";
    rows.data = dict.atoms.transpose();
    toml::Writer meta;
    meta.add("transposed", true);
    save_embeddings(rows, path, meta.str());
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string manifest;
    std::string out;
    std::string log_path; // defaults to out + ".log"
    std::string variant = "sae";
    std::int64_t k = 32;
    std::int64_t expansion = 16;
    double lambda = 0.05;
    double p_mask = 0.2;
    double lr = 1e-4;
    std::int64_t steps = 25000;
    std::int64_t batch_size = 128;
    std::int64_t seed = 0;
    std::int64_t log_interval = 100;
    std::int64_t ckpt_every = 0;
    bool no_decoder_renorm = false;
};

int run_train(const TrainArgs& args) {
    TrainConfig cfg;
    cfg.variant = parse_variant(args.variant);
    cfg.k = args.k;
    cfg.expansion = args.expansion;
    cfg.lambda_gs = args.lambda;
    cfg.p_mask = args.p_mask;
    cfg.lr = args.lr;
    cfg.steps = static_cast<std::uint64_t>(args.steps);
    cfg.batch_size = static_cast<std::size_t>(args.batch_size);
    cfg.seed = static_cast<std::uint64_t>(args.seed);
    cfg.log_interval = static_cast<std::uint64_t>(args.log_interval);
    cfg.ckpt_interval = static_cast<std::uint64_t>(args.ckpt_every);
    cfg.renormalize_decoder = !args.no_decoder_renorm;
    const TrainConfig resolved = cfg.resolved();
    resolved.validate();

    if (!std::filesystem::exists(args.manifest))
        throw config_error("manifest '" + args.manifest + "' does not exist");
    const PairedDataset ds = load_paired(args.manifest);

    ConfigEcho echo("train");
    echo.add("manifest", args.manifest);
    echo.add("out", args.out);
    echo.add("variant", variant_name(resolved.variant));
    echo.add("k", resolved.k);
    echo.add("expansion", resolved.expansion);
    echo.add("lambda", resolved.lambda_gs);
    echo.add("p_mask", resolved.p_mask);
    echo.add("lr", resolved.lr);
    echo.add("steps", static_cast<std::int64_t>(resolved.steps));
    echo.add("batch_size", static_cast<std::int64_t>(resolved.batch_size));
    echo.add("seed", static_cast<std::int64_t>(resolved.seed));
    echo.add("log_interval", static_cast<std::int64_t>(resolved.log_interval));
    echo.add("ckpt_every", static_cast<std::int64_t>(resolved.ckpt_interval));
    echo.add("renormalize_decoder", resolved.renormalize_decoder);
    echo.add("n_pairs", static_cast<std::int64_t>(ds.n_pairs()));
    echo.add("d", static_cast<std::int64_t>(ds.side_a.d()));
    echo.add("modality_a", ds.side_a.modality);
    echo.add("modality_b", ds.side_b.modality);
    echo.print(std::cout);

    const std::string log_path = args.log_path.empty() ? args.out + ".log" : args.log_path;
    std::ofstream log(log_path, std::ios::trunc);
    if (!log) throw msae::error("cannot open log file '" + log_path + "'");
    echo.print(log, "# ");
    log.flush();

    const LogHook on_log = [&](std::uint64_t step, const LossReport& r, double wall_ms) {
        log << "step = " << step << ", recon_a = " << fmt_double(r.recon_a)
            << ", recon_b = " << fmt_double(r.recon_b) << ", gs = " << fmt_double(r.gs)
            << ", total = " << fmt_double(r.total) << ", fve_a = " << fmt_double(r.fve_a)
            << ", fve_b = " << fmt_double(r.fve_b) << ", wall_ms = " << static_cast<long long>(wall_ms)
            << "\n";
        log.flush();
    };
    const CheckpointHook on_checkpoint = [&](std::uint64_t step, const Checkpoint& ck) {
        save_checkpoint(ck, args.out + ".step" + std::to_string(step));
    };

    const TrainResult result = train(ds, resolved, on_log, on_checkpoint);
    save_checkpoint(result.checkpoint, args.out);
    if (result.diverged) {
        std::cerr << "training diverged at step " << result.divergence_step
                  << "; wrote last-good checkpoint to " << args.out << "\n";
        return 3;
    }
    std::cout << "wrote checkpoint " << args.out << " (" << result.checkpoint.meta.steps
              << " steps)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval subcommands
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string ckpt;
    std::string val_manifest;
    std::string scorer_manifest;
    std::string task_manifest;
    std::string pair = "image,text";
    std::string out;
    std::string format = "toml";
    bool baseline = false;
};

void check_format(const std::string& format) {
    if (format != "toml" && format != "csv")
        throw config_error("--format must be toml or csv, got '" + format + "'");
}

int run_eval_dead(const EvalArgs& args) {
    const Checkpoint ck = load_checkpoint(args.ckpt);
    const PairedDataset val = load_paired(args.val_manifest);
    ConfigEcho echo("eval dead");
    echo.add("ckpt", args.ckpt);
    echo.add("val", args.val_manifest);
    echo.add("k", static_cast<std::int64_t>(ck.k));
    echo.add("format", args.format);
    echo.print(std::cout);

    const DeadNeuronReport report = dead_neuron_census(ck.params, val, ck.k);
    if (args.format == "csv") {
        std::string csv = "neuron,active_a,active_b\n";
        for (std::size_t i = 0; i < report.per_neuron.size(); ++i)
            csv += std::to_string(i) + "," + (report.per_neuron[i].first ? "1" : "0") + "," +
                   (report.per_neuron[i].second ? "1" : "0") + "\n";
        write_text_file(args.out, csv);
    } else {
        toml::Writer w;
        w.add("p", static_cast<std::int64_t>(report.p()));
        w.add("only_a", static_cast<std::int64_t>(report.only_a));
        w.add("only_b", static_cast<std::int64_t>(report.only_b));
        w.add("both", static_cast<std::int64_t>(report.both));
        w.add("neither", static_cast<std::int64_t>(report.neither));
        write_text_file(args.out, w.str());
    }
    std::cout << "only_a = " << report.only_a << ", only_b = " << report.only_b
              << ", both = " << report.both << ", neither = " << report.neither << "\n";
    return 0;
}

int run_eval_mms(const EvalArgs& args) {
    const PairedDataset val = load_paired(args.val_manifest);
    const PairedDataset scorer = load_paired(args.scorer_manifest);
    const auto pair = parse_modality_pair(args.pair);

    ConfigEcho echo("eval mms");
    echo.add("ckpt", args.baseline ? "(baseline: raw embeddings)" : args.ckpt);
    echo.add("val", args.val_manifest);
    echo.add("scorer", args.scorer_manifest);
    echo.add("pair", pair.first + "," + pair.second);
    echo.add("baseline", args.baseline);
    echo.add("format", args.format);
    echo.print(std::cout);

    MmsReport report;
    if (args.baseline) {
        report = mms_report_baseline(val, scorer, pair);
    } else {
        const Checkpoint ck = load_checkpoint(args.ckpt);
        report = mms_report(ck.params, val, scorer, ck.k, pair);
    }

    double mean = 0.0;
    std::size_t coactive = 0;
    for (Eigen::Index i = 0; i < report.scores.size(); ++i) {
        mean += report.scores(i);
        if (report.coactivation_counts[static_cast<std::size_t>(i)] > 0) ++coactive;
    }
    mean /= static_cast<double>(report.scores.size());

    if (args.format == "csv") {
        std::string csv = "neuron,score,coactivations\n";
        for (Eigen::Index i = 0; i < report.scores.size(); ++i)
            csv += std::to_string(i) + "," + fmt_double(report.scores(i)) + "," +
                   std::to_string(report.coactivation_counts[static_cast<std::size_t>(i)]) + "\n";
        write_text_file(args.out, csv);
    } else {
        toml::Writer w;
        w.add("modality_m", pair.first);
        w.add("modality_n", pair.second);
        w.add("p", static_cast<std::int64_t>(report.scores.size()));
        w.add("mean_score", mean);
        w.add("max_score", report.scores.size() > 0 ? report.scores.maxCoeff() : 0.0);
        w.add("neurons_with_coactivation", static_cast<std::int64_t>(coactive));
        write_text_file(args.out, w.str());
    }
    std::cout << "mean_mms = " << fmt_double(mean) << ", neurons_with_coactivation = " << coactive
              << "\n";
    return 0;
}

int run_eval_zeroshot(const EvalArgs& args) {
    const Checkpoint ck = load_checkpoint(args.ckpt);
    const toml::Table manifest = load_manifest(args.task_manifest);
    ZeroShotTask task;
    task.class_embeddings =
        load_embeddings(resolve_relative(args.task_manifest, manifest.get_string("classes.path")),
                        std::nullopt, manifest.get_string("classes.modality"));
    task.test_embeddings =
        load_embeddings(resolve_relative(args.task_manifest, manifest.get_string("test.path")),
                        std::nullopt, manifest.get_string("test.modality"));
    task.labels = load_labels(resolve_relative(args.task_manifest, manifest.get_string("test.labels")));

    ConfigEcho echo("eval zeroshot");
    echo.add("ckpt", args.ckpt);
    echo.add("task", args.task_manifest);
    echo.add("classes", static_cast<std::int64_t>(task.class_embeddings.n_samples()));
    echo.add("test_samples", static_cast<std::int64_t>(task.test_embeddings.n_samples()));
    echo.print(std::cout);

    const double accuracy =
        zero_shot_classify(ck.params, task, ck.k, ck.meta.side_for(task.class_embeddings.modality),
                           ck.meta.side_for(task.test_embeddings.modality));
    toml::Writer w;
    w.add("accuracy", accuracy);
    w.add("n_test", static_cast<std::int64_t>(task.test_embeddings.n_samples()));
    w.add("n_classes", static_cast<std::int64_t>(task.class_embeddings.n_samples()));
    write_text_file(args.out, args.format == "csv"
                                  ? "accuracy\n" + fmt_double(accuracy) + "\n"
                                  : w.str());
    std::cout << "accuracy = " << fmt_double(accuracy) << "\n";
    return 0;
}

int run_eval_retrieval(const EvalArgs& args) {
    const Checkpoint ck = load_checkpoint(args.ckpt);
    const toml::Table manifest = load_manifest(args.task_manifest);
    const EmbeddingMatrix queries =
        load_embeddings(resolve_relative(args.task_manifest, manifest.get_string("queries.path")),
                        std::nullopt, manifest.get_string("queries.modality"));
    const EmbeddingMatrix corpus =
        load_embeddings(resolve_relative(args.task_manifest, manifest.get_string("corpus.path")),
                        std::nullopt, manifest.get_string("corpus.modality"));
    const auto ground_truth =
        load_labels(resolve_relative(args.task_manifest, manifest.get_string("queries.ground_truth")));

    ConfigEcho echo("eval retrieval");
    echo.add("ckpt", args.ckpt);
    echo.add("task", args.task_manifest);
    echo.add("queries", static_cast<std::int64_t>(queries.n_samples()));
    echo.add("corpus", static_cast<std::int64_t>(corpus.n_samples()));
    echo.print(std::cout);

    const double mrr = retrieval_mrr(ck.params, queries, corpus, ground_truth, ck.k,
                                     ck.meta.side_for(queries.modality),
                                     ck.meta.side_for(corpus.modality));
    toml::Writer w;
    w.add("mrr", mrr);
    w.add("n_queries", static_cast<std::int64_t>(queries.n_samples()));
    w.add("n_corpus", static_cast<std::int64_t>(corpus.n_samples()));
    write_text_file(args.out, args.format == "csv" ? "mrr\n" + fmt_double(mrr) + "\n" : w.str());
    std::cout << "mrr = " << fmt_double(mrr) << "\n";
    return 0;
}

int run_eval_align(const EvalArgs& args) {
    const Checkpoint ck = load_checkpoint(args.ckpt);
    const PairedDataset val = load_paired(args.val_manifest);
    ConfigEcho echo("eval align");
    echo.add("ckpt", args.ckpt);
    echo.add("val", args.val_manifest);
    echo.print(std::cout);

    const AlignmentReport report = alignment_report(ck.params, val, ck.k);
    toml::Writer w;
    w.add("mean_cosine", report.mean_cosine);
    w.add("mean_support_overlap", report.mean_support_overlap);
    w.add("n_pairs", static_cast<std::int64_t>(val.n_pairs()));
    w.add("k", static_cast<std::int64_t>(ck.k));
    write_text_file(args.out, args.format == "csv"
                                  ? "mean_cosine,mean_support_overlap\n" +
                                        fmt_double(report.mean_cosine) + "," +
                                        fmt_double(report.mean_support_overlap) + "\n"
                                  : w.str());
    std::cout << "mean_cosine = " << fmt_double(report.mean_cosine)
              << ", mean_support_overlap = " << fmt_double(report.mean_support_overlap) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// tools subcommands
// ---------------------------------------------------------------------------

struct ToolsArgs {
    std::string ckpt;
    std::string terms;
    std::string vocab_emb;
    std::string probe;
    std::string input;
    std::string pairs;
    std::string out;
    std::string out_dir;
    std::string format = "toml";
    std::string side = "a";
    std::string corpus;
    std::string regime = "shared-support";
    std::string modality_a = "image";
    std::string modality_b = "text";
    std::int64_t top_m = 7;
    std::int64_t neuron = 0;
    std::int64_t row = 0;
    double delta = 0.0;
    double c = 0.0;
    bool c_set = false;
    // synth-gen
    std::int64_t d = 32;
    std::int64_t p_true = 64;
    std::int64_t s = 8;
    std::int64_t n_pairs = 1000;
    std::int64_t n_classes = 0;
    std::int64_t seed = 0;
    double noise = 0.0;
    double offset_scale = 0.0;
    double c_target = 0.3;
    double coeff_corr = 0.0;
};

int run_name_concepts(const ToolsArgs& args) {
    const Checkpoint ck = load_checkpoint(args.ckpt);
    const VocabBank vocab = load_vocab(args.terms, args.vocab_emb);
    ConfigEcho echo("tools name-concepts");
    echo.add("ckpt", args.ckpt);
    echo.add("terms", args.terms);
    echo.add("vocab_emb", args.vocab_emb);
    echo.add("vocab_size", static_cast<std::int64_t>(vocab.terms.size()));
    echo.print(std::cout);

    const ConceptNaming naming = name_concepts(ck.params, vocab);
    if (args.format == "csv") {
        std::string csv = "neuron,term_index,term,similarity\n";
        for (std::size_t i = 0; i < naming.term_index.size(); ++i) {
            std::string term = vocab.terms[naming.term_index[i]];
            for (auto& c : term)
                if (c == ',') c = ' ';
            csv += std::to_string(i) + "," + std::to_string(naming.term_index[i]) + "," + term +
                   "," + fmt_double(naming.similarity(static_cast<Eigen::Index>(i))) + "\n";
        }
        write_text_file(args.out, csv);
    } else {
        toml::Writer w;
        w.add("p", static_cast<std::int64_t>(naming.term_index.size()));
        w.add("vocab_size", static_cast<std::int64_t>(vocab.terms.size()));
        w.add("mean_similarity", naming.similarity.mean());
        write_text_file(args.out, w.str());
    }
    std::cout << "named " << naming.term_index.size() << " atoms, mean similarity = "
              << fmt_double(naming.similarity.mean()) << "\n";
    return 0;
}

int run_probe(const ToolsArgs& args) {
    const Checkpoint ck = load_checkpoint(args.ckpt);
    const EmbeddingMatrix probe_rows = load_embeddings(args.probe, ck.params.d());
    if (probe_rows.n_samples() != 1)
        throw data_error("probe file must hold exactly one row, got " +
                         std::to_string(probe_rows.n_samples()));
    std::optional<VocabBank> vocab;
    if (!args.terms.empty()) vocab = load_vocab(args.terms, args.vocab_emb);

    ConfigEcho echo("tools probe");
    echo.add("ckpt", args.ckpt);
    echo.add("probe", args.probe);
    echo.add("top_m", args.top_m);
    echo.print(std::cout);

    if (args.top_m > ck.params.p())
        std::cerr << "warning: top_m " << args.top_m << " exceeds p = " << ck.params.p()
                  << "; clipping\n";
    const auto ranked = probe_decompose(ck.params, probe_rows.data.row(0).transpose(), args.top_m,
                                        vocab ? &*vocab : nullptr);
    std::string csv = "rank,neuron,coefficient,term\n";
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        std::string term = ranked[i].term;
        for (auto& c : term)
            if (c == ',') c = ' ';
        csv += std::to_string(i) + "," + std::to_string(ranked[i].neuron) + "," +
               fmt_double(ranked[i].coefficient) + "," + term + "\n";
        std::cout << "#" << i << " neuron " << ranked[i].neuron << " coeff "
                  << fmt_double(ranked[i].coefficient)
                  << (ranked[i].term.empty() ? "" : " term \"" + ranked[i].term + "\"") << "\n";
    }
    if (args.format == "csv") {
        write_text_file(args.out, csv);
    } else {
        toml::Writer w;
        w.add("top_m", static_cast<std::int64_t>(ranked.size()));
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            const std::string prefix = "rank_" + std::to_string(i);
            w.add(prefix + ".neuron", static_cast<std::int64_t>(ranked[i].neuron));
            w.add(prefix + ".coefficient", ranked[i].coefficient);
            if (!ranked[i].term.empty()) w.add(prefix + ".term", ranked[i].term);
        }
        write_text_file(args.out, w.str());
    }
    return 0;
}

int run_steer(const ToolsArgs& args) {
    const Checkpoint ck = load_checkpoint(args.ckpt);
    const EmbeddingMatrix input = load_embeddings(args.input, ck.params.d());
    if (args.row < 0 || args.row >= input.n_samples())
        throw argument_error("--row " + std::to_string(args.row) + " out of range for " +
                             std::to_string(input.n_samples()) + " rows");
    if (args.side != "a" && args.side != "b")
        throw config_error("--side must be a or b");
    const Side side = args.side == "a" ? Side::a : Side::b;

    ConfigEcho echo("tools steer");
    echo.add("ckpt", args.ckpt);
    echo.add("in", args.input);
    echo.add("row", args.row);
    echo.add("side", args.side);
    echo.add("neuron", args.neuron);
    echo.add("delta", args.delta);
    echo.print(std::cout);

    const Vector x = input.data.row(args.row).transpose();
    const SparseCode code = encode(ck.params, x, side, ck.k);
    const SparseCode intervened =
        steered_code(code, static_cast<std::uint32_t>(args.neuron), args.delta, ck.params.p());
    const Vector decoded = decode(ck.params, intervened, side);

    if (!args.out.empty()) {
        EmbeddingMatrix out_row;
        out_row.modality = side == Side::a ? ck.meta.modality_a : ck.meta.modality_b;
        out_row.data = decoded.transpose();
        save_embeddings(out_row, args.out);
        std::cout << "wrote steered vector to " << args.out << "\n";
    }
    std::cout << "code nonzeros: " << code.entries.size() << " -> " << intervened.entries.size()
              << ", steered value at neuron " << args.neuron << " = "
              << fmt_double(intervened.value_at(static_cast<std::uint32_t>(args.neuron))) << "\n";

    if (!args.corpus.empty()) {
        // Retrieval demo: rank corpus codes against the steered code.
        const Side corpus_side = side == Side::a ? Side::b : Side::a;
        const EmbeddingMatrix corpus = load_embeddings(args.corpus, ck.params.d());
        const auto corpus_codes = encode_all(ck.params, corpus, corpus_side, ck.k);
        std::vector<std::pair<double, std::size_t>> scored;
        for (std::size_t i = 0; i < corpus_codes.size(); ++i)
            scored.emplace_back(sparse_cosine(intervened, corpus_codes[i]), i);
        std::sort(scored.begin(), scored.end(), [](const auto& l, const auto& r) {
            if (l.first != r.first) return l.first > r.first;
            return l.second < r.second;
        });
        const std::size_t show = std::min<std::size_t>(5, scored.size());
        for (std::size_t i = 0; i < show; ++i)
            std::cout << "top" << (i + 1) << ": corpus row " << scored[i].second << " score "
                      << fmt_double(scored[i].first) << "\n";
    }
    return 0;
}

int run_augment(const ToolsArgs& args) {
    const SynthTruth truth = load_truth(args.pairs);
    if (truth.spec.regime != Regime::split)
        throw data_error("'" + args.pairs + "' does not hold split-regime pairs");
    Dictionary dict{truth.dictionary};
    if (!args.input.empty()) {
        dict = load_dictionary(args.input);
        if (dict.d() != truth.dictionary.rows() || dict.p() != truth.dictionary.cols())
            throw shape_error("dictionary from '" + args.input + "' is " +
                              std::to_string(dict.d()) + "x" + std::to_string(dict.p()) +
                              ", pair codes expect " + std::to_string(truth.dictionary.rows()) +
                              "x" + std::to_string(truth.dictionary.cols()));
    }
    const double c = args.c_set ? args.c : truth.spec.c_target;

    ConfigEcho echo("tools augment-dict");
    echo.add("in", args.input.empty() ? "(dictionary embedded in pairs file)" : args.input);
    echo.add("pairs", args.pairs);
    echo.add("c", c);
    echo.add("n_pairs", static_cast<std::int64_t>(truth.spec.n_pairs));
    echo.print(std::cout);

    // Rebuild unit embeddings from the exact stored decompositions.
    PairedDataset ds;
    ds.side_a.modality = truth.spec.modality_a;
    ds.side_b.modality = truth.spec.modality_b;
    ds.side_a.data.resize(truth.spec.n_pairs, truth.spec.d);
    ds.side_b.data.resize(truth.spec.n_pairs, truth.spec.d);
    for (Eigen::Index n = 0; n < truth.spec.n_pairs; ++n) {
        const auto idx = static_cast<std::size_t>(n);
        Vector x = Vector::Zero(truth.spec.d), y = Vector::Zero(truth.spec.d);
        for (std::size_t i = 0; i < truth.supports_a[idx].size(); ++i)
            x += truth.coeffs_a[idx][i] * dict.atoms.col(truth.supports_a[idx][i]);
        for (std::size_t i = 0; i < truth.supports_b[idx].size(); ++i)
            y += truth.coeffs_b[idx][i] * dict.atoms.col(truth.supports_b[idx][i]);
        ds.side_a.data.row(n) = x.transpose();
        ds.side_b.data.row(n) = y.transpose();
    }
    const auto pairs = truth_pairs(truth, ds);

    const AugmentResult result = augment_split_dictionary(dict, pairs, c);
    double min_inner = std::numeric_limits<double>::infinity();
    double max_residual = 0.0;
    Eigen::Index max_y_sparsity = 0;
    for (const auto& pair : result.pairs) {
        double inner = 0.0;
        for (const auto& ex : pair.z_x.entries) inner += ex.value * pair.z_y.value_at(ex.index);
        min_inner = std::min(min_inner, inner);
        max_residual = std::max({max_residual, pair.residual_x, pair.residual_y});
        max_y_sparsity = std::max(max_y_sparsity, static_cast<Eigen::Index>(pair.z_y.entries.size()));
    }
    std::cout << "atoms: " << dict.p() << " -> " << result.dict.p() << "\n";
    std::cout << "min_pair_code_inner_product = " << fmt_double(min_inner) << "\n";
    std::cout << "max_residual = " << fmt_double(max_residual) << "\n";
    std::cout << "max_y_code_nonzeros = " << max_y_sparsity << "\n";
    if (!(min_inner > 0.0)) {
        std::cerr << "augmentation failed to produce positive code inner products\n";
        return 2;
    }
    if (!args.out.empty()) {
        save_dictionary(result.dict, args.out);
        std::cout << "wrote augmented dictionary to " << args.out << "\n";
    }
    return 0;
}

int run_synth_gen(const ToolsArgs& args) {
    SynthSpec spec;
    spec.regime = parse_regime(args.regime);
    spec.d = args.d;
    spec.p_true = args.p_true;
    spec.s = args.s;
    spec.n_pairs = args.n_pairs;
    spec.noise_sigma = args.noise;
    spec.modality_offset_scale = args.offset_scale;
    spec.c_target = args.c_target;
    spec.coeff_corr = args.coeff_corr;
    spec.n_classes = args.n_classes;
    spec.seed = static_cast<std::uint64_t>(args.seed);
    spec.modality_a = args.modality_a;
    spec.modality_b = args.modality_b;
    spec.validate();

    ConfigEcho echo("tools synth-gen");
    echo.add("regime", regime_name(spec.regime));
    echo.add("d", args.d);
    echo.add("p_true", args.p_true);
    echo.add("s", args.s);
    echo.add("n_pairs", args.n_pairs);
    echo.add("noise_sigma", args.noise);
    echo.add("offset_scale", args.offset_scale);
    echo.add("c_target", args.c_target);
    echo.add("coeff_corr", args.coeff_corr);
    echo.add("n_classes", args.n_classes);
    echo.add("seed", args.seed);
    echo.add("out_dir", args.out_dir);
    echo.print(std::cout);

    const SynthData data = generate(spec);
    std::filesystem::create_directories(args.out_dir);
    const std::filesystem::path dir(args.out_dir);
    save_embeddings(data.ds.side_a, (dir / "side_a.meb").string());
    save_embeddings(data.ds.side_b, (dir / "side_b.meb").string());
    save_truth(data.truth, (dir / "truth.mst").string());

    toml::Writer manifest;
    manifest.section("side_a");
    manifest.add("path", "side_a.meb");
    manifest.add("modality", spec.modality_a);
    manifest.section("side_b");
    manifest.add("path", "side_b.meb");
    manifest.add("modality", spec.modality_b);
    write_text_file((dir / "manifest.toml").string(), manifest.str());

    // Identity retrieval task: query i's target is corpus row i.
    std::vector<std::uint32_t> identity(static_cast<std::size_t>(spec.n_pairs));
    for (std::size_t i = 0; i < identity.size(); ++i) identity[i] = static_cast<std::uint32_t>(i);
    save_labels(identity, (dir / "identity_gt.lbl").string());
    toml::Writer retrieval;
    retrieval.section("queries");
    retrieval.add("path", "side_b.meb");
    retrieval.add("modality", spec.modality_b);
    retrieval.add("ground_truth", "identity_gt.lbl");
    retrieval.section("corpus");
    retrieval.add("path", "side_a.meb");
    retrieval.add("modality", spec.modality_a);
    write_text_file((dir / "retrieval.toml").string(), retrieval.str());

    if (spec.n_classes > 0) {
        const ZeroShotTask task = make_planted_task(data.truth, data.ds, 0, spec.n_pairs);
        save_embeddings(task.class_embeddings, (dir / "classes.meb").string());
        save_labels(task.labels, (dir / "labels.lbl").string());
        toml::Writer zs;
        zs.section("classes");
        zs.add("path", "classes.meb");
        zs.add("modality", spec.modality_b);
        zs.section("test");
        zs.add("path", "side_a.meb");
        zs.add("modality", spec.modality_a);
        zs.add("labels", "labels.lbl");
        write_text_file((dir / "task.toml").string(), zs.str());
    }
    std::cout << "wrote dataset to " << args.out_dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    if (const char* threads = std::getenv("MMSAE_THREADS")) {
        const int cap = std::atoi(threads);
        if (cap > 0) Eigen::setNbThreads(cap);
    }

    CLI::App app{"masked group-sparse autoencoders for paired multimodal embeddings"};
    app.require_subcommand(1);
    std::function<int()> action;

    // train ------------------------------------------------------------
    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train an SAE / GSAE / MGSAE");
    train_cmd->add_option("--manifest", train_args.manifest, "pairing manifest (TOML)")->required();
    train_cmd->add_option("--out", train_args.out, "output checkpoint path")->required();
    train_cmd->add_option("--variant", train_args.variant, "sae|gsae|mgsae");
    train_cmd->add_option("--k", train_args.k, "sparsity level (default 32)");
    train_cmd->add_option("--expansion", train_args.expansion, "dictionary expansion p/d (default 16)");
    train_cmd->add_option("--lambda", train_args.lambda, "group-sparse weight (default 0.05)");
    train_cmd->add_option("--p-mask", train_args.p_mask,
                          "mask probability (default 0.2; 0.1 suits audio/text)");
    train_cmd->add_option("--lr", train_args.lr, "Adam learning rate (default 1e-4)");
    train_cmd->add_option("--steps", train_args.steps, "training steps (default 25000)");
    train_cmd->add_option("--batch-size", train_args.batch_size, "batch size (default 128)");
    train_cmd->add_option("--seed", train_args.seed, "master seed");
    train_cmd->add_option("--log", train_args.log_path, "log path (default <out>.log)");
    train_cmd->add_option("--log-interval", train_args.log_interval, "steps between log records");
    train_cmd->add_option("--ckpt-every", train_args.ckpt_every,
                          "write <out>.stepN checkpoints every N steps (0 = final only)");
    train_cmd->add_flag("--no-decoder-renorm", train_args.no_decoder_renorm,
                        "skip decoder column renormalization (ablation)");
    train_cmd->callback([&] { action = [&] { return run_train(train_args); }; });

    // eval ---------------------------------------------------------------
    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->require_subcommand(1);

    auto* dead_cmd = eval_cmd->add_subcommand("dead", "per-modality dead-neuron census");
    dead_cmd->add_option("--ckpt", eval_args.ckpt, "checkpoint")->required();
    dead_cmd->add_option("--val", eval_args.val_manifest, "validation pairing manifest")->required();
    dead_cmd->add_option("--out", eval_args.out, "report path")->required();
    dead_cmd->add_option("--format", eval_args.format, "toml|csv");
    dead_cmd->callback([&] {
        action = [&] {
            check_format(eval_args.format);
            return run_eval_dead(eval_args);
        };
    });

    auto* mms_cmd = eval_cmd->add_subcommand("mms", "multimodal monosemanticity scores");
    mms_cmd->add_option("--ckpt", eval_args.ckpt, "checkpoint (omit with --baseline)");
    mms_cmd->add_option("--val", eval_args.val_manifest, "validation pairing manifest")->required();
    mms_cmd->add_option("--scorer", eval_args.scorer_manifest,
                        "same samples under a second encoder (pairing manifest)")
        ->required();
    mms_cmd->add_option("--pair", eval_args.pair, "modality pair, e.g. image,text");
    mms_cmd->add_flag("--baseline", eval_args.baseline,
                      "score raw embedding coordinates instead of a checkpoint");
    mms_cmd->add_option("--out", eval_args.out, "report path")->required();
    mms_cmd->add_option("--format", eval_args.format, "toml|csv");
    mms_cmd->callback([&] {
        action = [&] {
            check_format(eval_args.format);
            if (!eval_args.baseline && eval_args.ckpt.empty())
                throw config_error("eval mms requires --ckpt (or --baseline)");
            return run_eval_mms(eval_args);
        };
    });

    auto* zs_cmd = eval_cmd->add_subcommand("zeroshot", "zero-shot classification on sparse codes");
    zs_cmd->add_option("--ckpt", eval_args.ckpt, "checkpoint")->required();
    zs_cmd->add_option("--task", eval_args.task_manifest, "task manifest")->required();
    zs_cmd->add_option("--out", eval_args.out, "report path")->required();
    zs_cmd->add_option("--format", eval_args.format, "toml|csv");
    zs_cmd->callback([&] {
        action = [&] {
            check_format(eval_args.format);
            return run_eval_zeroshot(eval_args);
        };
    });

    auto* ret_cmd = eval_cmd->add_subcommand("retrieval", "cross-modal retrieval MRR");
    ret_cmd->add_option("--ckpt", eval_args.ckpt, "checkpoint")->required();
    ret_cmd->add_option("--task", eval_args.task_manifest, "task manifest")->required();
    ret_cmd->add_option("--out", eval_args.out, "report path")->required();
    ret_cmd->add_option("--format", eval_args.format, "toml|csv");
    ret_cmd->callback([&] {
        action = [&] {
            check_format(eval_args.format);
            return run_eval_retrieval(eval_args);
        };
    });

    auto* align_cmd = eval_cmd->add_subcommand("align", "paired sparse-code alignment");
    align_cmd->add_option("--ckpt", eval_args.ckpt, "checkpoint")->required();
    align_cmd->add_option("--val", eval_args.val_manifest, "validation pairing manifest")->required();
    align_cmd->add_option("--out", eval_args.out, "report path")->required();
    align_cmd->add_option("--format", eval_args.format, "toml|csv");
    align_cmd->callback([&] {
        action = [&] {
            check_format(eval_args.format);
            return run_eval_align(eval_args);
        };
    });

    // tools ----------------------------------------------------------------
    ToolsArgs tools_args;
    auto* tools_cmd = app.add_subcommand("tools", "dictionary and dataset tooling");
    tools_cmd->require_subcommand(1);

    auto* name_cmd = tools_cmd->add_subcommand("name-concepts", "assign vocabulary terms to atoms");
    name_cmd->add_option("--ckpt", tools_args.ckpt, "checkpoint")->required();
    name_cmd->add_option("--terms", tools_args.terms, "terms file, one per line")->required();
    name_cmd->add_option("--vocab-emb", tools_args.vocab_emb, "term embeddings (MEB)")->required();
    name_cmd->add_option("--out", tools_args.out, "report path")->required();
    name_cmd->add_option("--format", tools_args.format, "toml|csv");
    name_cmd->callback([&] {
        action = [&] {
            check_format(tools_args.format);
            return run_name_concepts(tools_args);
        };
    });

    auto* probe_cmd = tools_cmd->add_subcommand("probe", "decompose a linear probe onto atoms");
    probe_cmd->add_option("--ckpt", tools_args.ckpt, "checkpoint")->required();
    probe_cmd->add_option("--probe", tools_args.probe, "probe vector (MEB with one row)")->required();
    probe_cmd->add_option("--top-m", tools_args.top_m, "entries to report (default 7)");
    probe_cmd->add_option("--terms", tools_args.terms, "optional vocabulary terms file");
    probe_cmd->add_option("--vocab-emb", tools_args.vocab_emb, "optional term embeddings (MEB)");
    probe_cmd->add_option("--out", tools_args.out, "report path")->required();
    probe_cmd->add_option("--format", tools_args.format, "toml|csv");
    probe_cmd->callback([&] {
        action = [&] {
            check_format(tools_args.format);
            if (tools_args.terms.empty() != tools_args.vocab_emb.empty())
                throw config_error("--terms and --vocab-emb must be given together");
            return run_probe(tools_args);
        };
    });

    auto* steer_cmd = tools_cmd->add_subcommand("steer", "intervene on one latent coordinate");
    steer_cmd->add_option("--ckpt", tools_args.ckpt, "checkpoint")->required();
    steer_cmd->add_option("--in", tools_args.input, "input embeddings (MEB)")->required();
    steer_cmd->add_option("--row", tools_args.row, "input row (default 0)");
    steer_cmd->add_option("--side", tools_args.side, "encode side: a|b (default a)");
    steer_cmd->add_option("--neuron", tools_args.neuron, "latent coordinate")->required();
    steer_cmd->add_option("--delta", tools_args.delta, "value added to the coordinate")->required();
    steer_cmd->add_option("--out", tools_args.out, "write the steered decoded vector (MEB)");
    steer_cmd->add_option("--corpus", tools_args.corpus,
                          "optional corpus (MEB, other side) to rank against the steered code");
    steer_cmd->callback([&] { action = [&] { return run_steer(tools_args); }; });

    auto* aug_cmd = tools_cmd->add_subcommand("augment-dict",
                                              "make a split dictionary's paired codes overlap");
    aug_cmd->add_option("--in", tools_args.input,
                        "dictionary (MSC1 checkpoint or MEB atoms-as-rows); defaults to the "
                        "dictionary stored in --pairs");
    aug_cmd->add_option("--pairs", tools_args.pairs, "split-regime truth container (MST1)")->required();
    aug_cmd->add_option("--c", tools_args.c, "alignment lower bound (default: generator's c_target)")
        ->each([&](const std::string&) { tools_args.c_set = true; });
    aug_cmd->add_option("--out", tools_args.out, "write the augmented dictionary (MEB)");
    aug_cmd->callback([&] { action = [&] { return run_augment(tools_args); }; });

    auto* synth_cmd = tools_cmd->add_subcommand("synth-gen", "generate a synthetic paired dataset");
    synth_cmd->add_option("--regime", tools_args.regime, "shared-support|split");
    synth_cmd->add_option("--d", tools_args.d, "embedding dimension");
    synth_cmd->add_option("--p-true", tools_args.p_true, "true dictionary size");
    synth_cmd->add_option("--s", tools_args.s, "true support size per sample");
    synth_cmd->add_option("--n-pairs", tools_args.n_pairs, "number of pairs");
    synth_cmd->add_option("--noise", tools_args.noise, "Gaussian noise sigma");
    synth_cmd->add_option("--offset-scale", tools_args.offset_scale, "per-modality offset magnitude");
    synth_cmd->add_option("--coeff-corr", tools_args.coeff_corr,
                          "cross-modal coefficient correlation in [0,1]");
    synth_cmd->add_option("--c-target", tools_args.c_target, "split regime: required pair alignment");
    synth_cmd->add_option("--n-classes", tools_args.n_classes, "planted zero-shot classes");
    synth_cmd->add_option("--seed", tools_args.seed, "generator seed");
    synth_cmd->add_option("--modality-a", tools_args.modality_a, "side A label");
    synth_cmd->add_option("--modality-b", tools_args.modality_b, "side B label");
    synth_cmd->add_option("--out-dir", tools_args.out_dir, "output directory")->required();
    synth_cmd->callback([&] { action = [&] { return run_synth_gen(tools_args); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        return action ? action() : 1;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const argument_error& e) {
        std::cerr << "argument error: " << e.what() << "\n";
        return 1;
    } catch (const numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const msae::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 2;
    }
}
