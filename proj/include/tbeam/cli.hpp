#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tbeam/metrics.hpp"
#include "tbeam/types.hpp"

namespace tbeam::cli {

// Bad flag combinations; the binary maps this to exit code 2 (data and parse
// problems exit 3).
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ModelSpec {
    std::string lattice_path;  // file or directory of lattice JSON files
    bool lattice_strict = false;
    std::string tokens_path;   // optional token table for lattice runs

    bool toy = false;
    std::optional<std::uint64_t> toy_seed;  // mandatory for toy runs
    int toy_vocab = 32;
    int toy_context = 2;
    int toy_frames = 24;
    int toy_frames_min = 0;  // when > 0, per-stream lengths vary in [min, frames]
    int toy_streams = 8;
    double toy_blank_bias = 1.5;
};

struct DecodeArgs {
    ModelSpec model;
    std::string algo = "alsd++";  // greedy | alsd++ | aes++ | alsd-ref | aes-ref
    int beam = 4;
    int batch = 8;
    int max_symbols = 10;
    int aes_expansions = 2;
    int max_len = 256;
    int nbest = 1;
    bool prefix_search = true;

    std::string lm_path;
    bool lm_strict = false;
    double lm_weight = 0.0;
    std::string blank_scoring = "omit";  // omit | scored
    std::string pruning = "late";        // early | late
    bool lm_eos = false;

    std::string out_dir;
};

nlohmann::json decode_args_to_json(const DecodeArgs& args);
DecodeArgs decode_args_from_json(const nlohmann::json& doc);

// Runs a decode, writes transcripts.tsv / nbest.tsv / manifest.json into
// out_dir, and returns the manifest.
nlohmann::json cmd_decode(const DecodeArgs& args);

// Re-runs the decode recorded in a manifest (the resolved config is part of
// the manifest, so identical manifests reproduce identical transcripts).
nlohmann::json cmd_replay(const std::string& manifest_path,
                          const std::string& out_dir);

struct EvalArgs {
    std::string refs_path;
    std::string hyps_path;
};
WerReport cmd_eval(const EvalArgs& args);

struct BenchArgs {
    ModelSpec model;  // toy models only
    std::vector<std::string> algos = {"alsd++"};
    std::vector<int> batch_grid = {1, 4, 8};
    std::vector<int> beam_grid = {1, 6};
    int warmup = 1;
    int repeats = 3;
    int streams = 0;  // 0: max of batch_grid
    std::optional<double> seconds_per_frame;
    DecodeArgs decode;  // beam-search knobs + fusion flags reused
};

struct BenchRow {
    std::string algo;
    int batch = 0;
    int beam = 0;
    ThroughputReport report;
};
std::vector<BenchRow> cmd_bench(const BenchArgs& args);

struct GenFixturesArgs {
    std::string out_dir;
    std::uint64_t seed = 1;
    std::string suite = "smoke";  // smoke | deletion-trend | lm-pack
};
void cmd_gen_fixtures(const GenFixturesArgs& args);

}  // namespace tbeam::cli
