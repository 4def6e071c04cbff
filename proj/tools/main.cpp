#include <cstdio>
#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "tbeam/cli.hpp"
#include "tbeam/types.hpp"

namespace {

using namespace tbeam;
using namespace tbeam::cli;

void add_model_flags(CLI::App* cmd, ModelSpec& spec) {
    cmd->add_option("--lattice", spec.lattice_path,
                    "Lattice JSON file or directory of them");
    cmd->add_flag("--lattice-strict", spec.lattice_strict,
                  "Error on missing (frame, context) rows instead of uniform fallback");
    cmd->add_option("--tokens", spec.tokens_path, "Token table (one token per line)");
    cmd->add_flag("--toy", spec.toy, "Use a seeded toy model");
    std::uint64_t seed_holder = 0;
    cmd->add_option_function<std::uint64_t>(
           "--seed", [&spec](std::uint64_t v) { spec.toy_seed = v; },
           "Toy model seed (mandatory for toy runs)")
        ->expected(1);
    (void)seed_holder;
    cmd->add_option("--toy-vocab", spec.toy_vocab, "Toy vocabulary size");
    cmd->add_option("--toy-context", spec.toy_context, "Toy context order n");
    cmd->add_option("--toy-frames", spec.toy_frames, "Frames per toy stream");
    cmd->add_option("--toy-frames-min", spec.toy_frames_min,
                    "Vary per-stream frames in [min, --toy-frames]");
    cmd->add_option("--streams", spec.toy_streams, "Number of toy streams");
    cmd->add_option("--toy-blank-bias", spec.toy_blank_bias,
                    "Additive blank logit bias of the toy model");
}

void add_decode_flags(CLI::App* cmd, DecodeArgs& args) {
    cmd->add_option("--algo", args.algo,
                    "greedy | alsd++ | aes++ | alsd-ref | aes-ref");
    cmd->add_option("--beam", args.beam, "Beam size");
    cmd->add_option("--batch", args.batch, "Streams per decode session");
    cmd->add_option("--max-symbols", args.max_symbols,
                    "Scoring rounds per frame (ALSD++/greedy)");
    cmd->add_option("--aes-expansions", args.aes_expansions,
                    "Token rounds per frame (AES++)");
    cmd->add_option("--max-len", args.max_len, "Maximum tokens per transcript");
    cmd->add_option("--nbest", args.nbest, "Transcripts to keep per stream");
    cmd->add_flag("!--no-prefix-search", args.prefix_search,
                  "Disable AES++ prefix combination");
    cmd->add_option("--lm", args.lm_path, "ARPA n-gram LM for shallow fusion");
    cmd->add_flag("--lm-strict", args.lm_strict,
                  "Error on LM tokens missing from the vocabulary");
    cmd->add_option("--lm-weight", args.lm_weight, "LM weight (lambda)");
    cmd->add_option("--blank-scoring", args.blank_scoring, "omit | scored");
    cmd->add_option("--pruning", args.pruning, "early | late");
    cmd->add_flag("--lm-eos", args.lm_eos, "Add weighted </s> score at utterance end");
}

int run(int argc, char** argv) {
    CLI::App app{"tbeam: batched transducer beam-search decoder"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    DecodeArgs decode_args;
    std::string replay_manifest;
    auto* decode = app.add_subcommand("decode", "Decode streams to transcripts");
    add_model_flags(decode, decode_args.model);
    add_decode_flags(decode, decode_args);
    decode->add_option("--out", decode_args.out_dir, "Output directory");
    decode->add_option("--replay", replay_manifest,
                       "Re-run the decode recorded in a manifest.json");

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Corpus WER of hypotheses vs references");
    eval->add_option("--refs", eval_args.refs_path, "id<TAB>text references")
        ->required();
    eval->add_option("--hyps", eval_args.hyps_path, "id<TAB>text hypotheses")
        ->required();

    BenchArgs bench_args;
    double frame_seconds = 0.0;
    auto* bench = app.add_subcommand("bench", "Throughput over batch x beam grids");
    add_model_flags(bench, bench_args.model);
    add_decode_flags(bench, bench_args.decode);
    bench->add_option("--algos", bench_args.algos, "Algorithms to benchmark");
    bench->add_option("--batch-grid", bench_args.batch_grid, "Batch sizes");
    bench->add_option("--beam-grid", bench_args.beam_grid, "Beam sizes");
    bench->add_option("--warmup", bench_args.warmup, "Untimed warmup runs");
    bench->add_option("--repeats", bench_args.repeats, "Timed runs to average");
    bench->add_option("--bench-streams", bench_args.streams,
                      "Total streams (default: largest batch)");
    bench->add_option("--frame-seconds", frame_seconds,
                      "Audio seconds per frame, enables RTFx");

    GenFixturesArgs gen_args;
    auto* gen = app.add_subcommand("gen-fixtures", "Emit seeded test fixtures");
    gen->add_option("--out", gen_args.out_dir, "Output directory")->required();
    gen->add_option("--seed", gen_args.seed, "Generator seed");
    gen->add_option("--suite", gen_args.suite, "smoke | deletion-trend | lm-pack");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);  // --help / --version
        }
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (decode->parsed()) {
            nlohmann::json manifest;
            if (!replay_manifest.empty()) {
                manifest = cmd_replay(replay_manifest, decode_args.out_dir);
            } else {
                manifest = cmd_decode(decode_args);
            }
            std::cout << "decoded " << manifest["streams"].size() << " stream(s) -> "
                      << decode_args.out_dir << "\n";
        } else if (eval->parsed()) {
            const WerReport report = cmd_eval(eval_args);
            std::printf("wer %.6f sub %llu ins %llu del %llu ref-words %llu\n",
                        report.wer(),
                        static_cast<unsigned long long>(report.substitutions),
                        static_cast<unsigned long long>(report.insertions),
                        static_cast<unsigned long long>(report.deletions),
                        static_cast<unsigned long long>(report.reference_words));
        } else if (bench->parsed()) {
            if (frame_seconds > 0.0) {
                bench_args.seconds_per_frame = frame_seconds;
            }
            const auto rows = cmd_bench(bench_args);
            std::printf("%-10s %6s %5s %12s %12s %10s\n", "algo", "batch", "beam",
                        "frames", "fps", "rtfx");
            for (const auto& row : rows) {
                std::printf("%-10s %6d %5d %12llu %12.1f %10s\n", row.algo.c_str(),
                            row.batch, row.beam,
                            static_cast<unsigned long long>(row.report.frames),
                            row.report.frames_per_second,
                            row.report.rtfx
                                ? std::to_string(*row.report.rtfx).c_str()
                                : "-");
            }
        } else if (gen->parsed()) {
            cmd_gen_fixtures(gen_args);
            std::cout << "fixtures (" << gen_args.suite << ") -> " << gen_args.out_dir
                      << "\n";
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 3;
    } catch (const ValidationError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
