#include "tbeam/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "tbeam/decoder.hpp"
#include "tbeam/fixtures.hpp"
#include "tbeam/io.hpp"
#include "tbeam/kernels.hpp"
#include "tbeam/ngram_lm.hpp"

namespace tbeam::cli {

namespace fs = std::filesystem;

namespace {

struct LoadedModels {
    std::vector<std::unique_ptr<EmissionModel>> owned;
    std::vector<StreamInput> streams;
    std::vector<std::string> ids;
    std::unique_ptr<Vocabulary> vocab;  // table used for detok and the LM
};

LoadedModels load_models(const ModelSpec& spec) {
    const bool has_lattice = !spec.lattice_path.empty();
    if (has_lattice && spec.toy) {
        throw UsageError("give either --lattice or --toy, not both");
    }
    if (!has_lattice && !spec.toy) {
        throw UsageError("no model source: need --lattice or --toy");
    }
    LoadedModels out;
    if (spec.toy) {
        if (!spec.toy_seed) {
            throw UsageError("toy runs need an explicit --seed");
        }
        if (spec.toy_streams < 1) {
            throw UsageError("--streams must be >= 1");
        }
        auto model = std::make_unique<ToyModel>(*spec.toy_seed, spec.toy_context,
                                                spec.toy_vocab, spec.toy_frames,
                                                spec.toy_blank_bias);
        out.vocab = std::make_unique<Vocabulary>(model->vocab());
        for (int i = 0; i < spec.toy_streams; ++i) {
            int frames = spec.toy_frames;
            if (spec.toy_frames_min > 0 && spec.toy_frames_min < spec.toy_frames) {
                SplitMix64 rng(*spec.toy_seed * 0x9e3779b9ull + 17 * i + 3);
                frames = static_cast<int>(
                    rng.range(spec.toy_frames_min, spec.toy_frames));
            }
            out.streams.push_back({model.get(), frames});
            std::ostringstream id;
            id << "utt" << std::setw(4) << std::setfill('0') << i;
            out.ids.push_back(id.str());
        }
        out.owned.push_back(std::move(model));
        return out;
    }

    std::vector<fs::path> files;
    const fs::path root(spec.lattice_path);
    if (fs::is_directory(root)) {
        for (const auto& entry : fs::directory_iterator(root)) {
            if (entry.is_regular_file() && entry.path().extension() == ".json") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) {
            throw ParseError(spec.lattice_path, 0, "no *.json lattice files");
        }
    } else if (fs::is_regular_file(root)) {
        files.push_back(root);
    } else {
        throw ParseError(spec.lattice_path, 0, "no such lattice file or directory");
    }
    int vocab_size = -1;
    for (const auto& file : files) {
        auto model = std::make_unique<LatticeModel>(
            LatticeModel::load(file, spec.lattice_strict));
        if (vocab_size < 0) {
            vocab_size = model->vocab().size();
        } else if (model->vocab().size() != vocab_size) {
            throw ValidationError("lattices disagree on vocab_size: " +
                                  file.string());
        }
        out.streams.push_back({model.get(), model->num_frames()});
        out.ids.push_back(file.stem().string());
        out.owned.push_back(std::move(model));
    }
    if (!spec.tokens_path.empty()) {
        out.vocab = std::make_unique<Vocabulary>(Vocabulary::load(spec.tokens_path));
        if (out.vocab->size() != vocab_size) {
            throw ValidationError("token table size does not match lattice vocab");
        }
    } else {
        out.vocab = std::make_unique<Vocabulary>(Vocabulary::synthetic(vocab_size));
    }
    return out;
}

DecodeConfig build_config(const DecodeArgs& args, const NGramLm* lm) {
    DecodeConfig cfg;
    cfg.beam = args.beam;
    cfg.max_symbols_per_frame = args.max_symbols;
    cfg.aes_expansions_per_frame = args.aes_expansions;
    cfg.max_len = args.max_len;
    cfg.return_nbest = args.nbest;
    cfg.aes_prefix_search = args.prefix_search;
    cfg.lm = lm;
    cfg.fusion.lambda = args.lm_weight;
    if (args.blank_scoring == "omit") {
        cfg.fusion.blank_mode = BlankMode::kOmit;
    } else if (args.blank_scoring == "scored") {
        cfg.fusion.blank_mode = BlankMode::kScored;
    } else {
        throw UsageError("--blank-scoring must be omit or scored");
    }
    if (args.pruning == "early") {
        cfg.fusion.pruning = PruneMode::kEarly;
    } else if (args.pruning == "late") {
        cfg.fusion.pruning = PruneMode::kLate;
    } else {
        throw UsageError("--pruning must be early or late");
    }
    cfg.fusion.eos_enabled = args.lm_eos;
    return cfg;
}

using DecodeFn = DecodeResult (*)(std::span<const StreamInput>, const DecodeConfig&);

DecodeFn algo_fn(const std::string& algo) {
    if (algo == "greedy") return &greedy_batched;
    if (algo == "alsd++") return &alsd_pp;
    if (algo == "aes++") return &aes_pp;
    if (algo == "alsd-ref") {
        return +[](std::span<const StreamInput> s, const DecodeConfig& c) {
            return reference_beam(s, c, RefAlgo::kAlsd);
        };
    }
    if (algo == "aes-ref") {
        return +[](std::span<const StreamInput> s, const DecodeConfig& c) {
            return reference_beam(s, c, RefAlgo::kAes);
        };
    }
    throw UsageError("unknown --algo: " + algo);
}

// Decodes all streams in sessions of at most `batch` streams.
DecodeResult decode_chunked(DecodeFn fn, std::span<const StreamInput> streams,
                            const DecodeConfig& cfg, int batch) {
    DecodeResult all;
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t off = 0; off < streams.size();
         off += static_cast<std::size_t>(batch)) {
        const std::size_t n =
            std::min<std::size_t>(batch, streams.size() - off);
        DecodeResult part = fn(streams.subspan(off, n), cfg);
        for (auto& s : part.streams) {
            all.streams.push_back(std::move(s));
        }
    }
    all.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    return all;
}

nlohmann::json model_spec_to_json(const ModelSpec& m) {
    nlohmann::json j;
    j["lattice"] = m.lattice_path;
    j["lattice_strict"] = m.lattice_strict;
    j["tokens"] = m.tokens_path;
    j["toy"] = m.toy;
    if (m.toy_seed) {
        j["toy_seed"] = *m.toy_seed;
    }
    j["toy_vocab"] = m.toy_vocab;
    j["toy_context"] = m.toy_context;
    j["toy_frames"] = m.toy_frames;
    j["toy_frames_min"] = m.toy_frames_min;
    j["toy_streams"] = m.toy_streams;
    j["toy_blank_bias"] = m.toy_blank_bias;
    return j;
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
    ModelSpec m;
    m.lattice_path = j.at("lattice").get<std::string>();
    m.lattice_strict = j.at("lattice_strict").get<bool>();
    m.tokens_path = j.at("tokens").get<std::string>();
    m.toy = j.at("toy").get<bool>();
    if (j.contains("toy_seed")) {
        m.toy_seed = j.at("toy_seed").get<std::uint64_t>();
    }
    m.toy_vocab = j.at("toy_vocab").get<int>();
    m.toy_context = j.at("toy_context").get<int>();
    m.toy_frames = j.at("toy_frames").get<int>();
    m.toy_frames_min = j.at("toy_frames_min").get<int>();
    m.toy_streams = j.at("toy_streams").get<int>();
    m.toy_blank_bias = j.at("toy_blank_bias").get<double>();
    return m;
}

}  // namespace

nlohmann::json decode_args_to_json(const DecodeArgs& args) {
    nlohmann::json j;
    j["model"] = model_spec_to_json(args.model);
    j["algo"] = args.algo;
    j["beam"] = args.beam;
    j["batch"] = args.batch;
    j["max_symbols"] = args.max_symbols;
    j["aes_expansions"] = args.aes_expansions;
    j["max_len"] = args.max_len;
    j["nbest"] = args.nbest;
    j["prefix_search"] = args.prefix_search;
    j["lm"] = args.lm_path;
    j["lm_strict"] = args.lm_strict;
    j["lm_weight"] = args.lm_weight;
    j["blank_scoring"] = args.blank_scoring;
    j["pruning"] = args.pruning;
    j["lm_eos"] = args.lm_eos;
    return j;
}

DecodeArgs decode_args_from_json(const nlohmann::json& j) {
    DecodeArgs args;
    args.model = model_spec_from_json(j.at("model"));
    args.algo = j.at("algo").get<std::string>();
    args.beam = j.at("beam").get<int>();
    args.batch = j.at("batch").get<int>();
    args.max_symbols = j.at("max_symbols").get<int>();
    args.aes_expansions = j.at("aes_expansions").get<int>();
    args.max_len = j.at("max_len").get<int>();
    args.nbest = j.at("nbest").get<int>();
    args.prefix_search = j.at("prefix_search").get<bool>();
    args.lm_path = j.at("lm").get<std::string>();
    args.lm_strict = j.at("lm_strict").get<bool>();
    args.lm_weight = j.at("lm_weight").get<double>();
    args.blank_scoring = j.at("blank_scoring").get<std::string>();
    args.pruning = j.at("pruning").get<std::string>();
    args.lm_eos = j.at("lm_eos").get<bool>();
    return args;
}

nlohmann::json cmd_decode(const DecodeArgs& args) {
    if (args.out_dir.empty()) {
        throw UsageError("decode needs --out");
    }
    if (args.batch < 1) {
        throw UsageError("--batch must be >= 1");
    }
    if (args.lm_weight > 0.0 && args.lm_path.empty()) {
        throw UsageError("--lm-weight > 0 needs --lm");
    }
    LoadedModels models = load_models(args.model);
    std::unique_ptr<NGramLm> lm;
    if (!args.lm_path.empty()) {
        lm = std::make_unique<NGramLm>(
            NGramLm::parse_arpa(args.lm_path, *models.vocab, args.lm_strict));
    }
    const DecodeConfig cfg = build_config(args, lm.get());
    const DecodeFn fn = algo_fn(args.algo);

    const DecodeResult result =
        decode_chunked(fn, models.streams, cfg, args.batch);

    IdTextPairs transcripts;
    std::ostringstream nbest_text;
    nbest_text.precision(12);
    nlohmann::json stream_summaries = nlohmann::json::array();
    Counters totals;
    for (std::size_t i = 0; i < result.streams.size(); ++i) {
        const auto& sr = result.streams[i];
        const std::string best =
            sr.nbest.empty() ? ""
                             : detokenize_text(*models.vocab, sr.nbest[0].tokens);
        transcripts.emplace_back(models.ids[i], best);
        for (std::size_t r = 0; r < sr.nbest.size(); ++r) {
            nbest_text << models.ids[i] << "\t" << r << "\t" << sr.nbest[r].score
                       << "\t" << detokenize_text(*models.vocab, sr.nbest[r].tokens)
                       << "\n";
        }
        nlohmann::json s;
        s["id"] = models.ids[i];
        s["frames"] = sr.counters.frames;
        s["best"] = best;
        s["score"] = sr.nbest.empty() ? 0.0 : sr.nbest[0].score;
        stream_summaries.push_back(std::move(s));
        totals.frames += sr.counters.frames;
        totals.scoring_rounds += sr.counters.scoring_rounds;
        totals.scored_slots += sr.counters.scored_slots;
        totals.lm_token_queries += sr.counters.lm_token_queries;
        totals.lm_vocab_queries += sr.counters.lm_vocab_queries;
    }

    nlohmann::json manifest;
    manifest["tool"] = "tbeam";
    manifest["version"] = std::string(kVersion);
    manifest["command"] = "decode";
    manifest["kernels"] = std::string(kernels::active().name);
    manifest["args"] = decode_args_to_json(args);
    manifest["streams"] = std::move(stream_summaries);
    manifest["counters"] = {{"frames", totals.frames},
                            {"scoring_rounds", totals.scoring_rounds},
                            {"scored_slots", totals.scored_slots},
                            {"lm_token_queries", totals.lm_token_queries},
                            {"lm_vocab_queries", totals.lm_vocab_queries}};
    manifest["wall_seconds"] = result.wall_seconds;

    fs::create_directories(args.out_dir);
    atomic_write_file(fs::path(args.out_dir) / "transcripts.tsv",
                      render_id_text(transcripts));
    atomic_write_file(fs::path(args.out_dir) / "nbest.tsv", nbest_text.str());
    atomic_write_file(fs::path(args.out_dir) / "manifest.json",
                      manifest.dump(2) + "\n");
    return manifest;
}

nlohmann::json cmd_replay(const std::string& manifest_path,
                          const std::string& out_dir) {
    std::ifstream in(manifest_path);
    if (!in) {
        throw ParseError(manifest_path, 0, "cannot open manifest");
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(manifest_path, 0, std::string("bad manifest: ") + e.what());
    }
    DecodeArgs args = decode_args_from_json(doc.at("args"));
    args.out_dir = out_dir;
    return cmd_decode(args);
}

WerReport cmd_eval(const EvalArgs& args) {
    const IdTextPairs ref_rows = read_id_text_file(args.refs_path);
    const IdTextPairs hyp_rows = read_id_text_file(args.hyps_path);
    std::map<std::string, std::string> hyp_by_id(hyp_rows.begin(), hyp_rows.end());
    std::vector<std::string> missing;
    std::vector<std::vector<std::string>> refs;
    std::vector<std::vector<std::string>> hyps;
    for (const auto& [id, text] : ref_rows) {
        const auto it = hyp_by_id.find(id);
        if (it == hyp_by_id.end()) {
            missing.push_back(id);
            continue;
        }
        refs.push_back(split_words(text));
        hyps.push_back(split_words(it->second));
    }
    if (!missing.empty()) {
        std::ostringstream oss;
        oss << "hypotheses missing for " << missing.size() << " utterance id(s):";
        for (const auto& id : missing) {
            oss << " " << id;
        }
        throw ValidationError(oss.str());
    }
    if (refs.empty()) {
        throw ValidationError("no reference utterances to score");
    }
    return wer(refs, hyps);
}

std::vector<BenchRow> cmd_bench(const BenchArgs& args) {
    if (!args.model.toy) {
        throw UsageError("bench runs on toy models (--toy)");
    }
    if (args.batch_grid.empty() || args.beam_grid.empty() || args.algos.empty()) {
        throw UsageError("bench needs non-empty algo, batch and beam grids");
    }
    ModelSpec spec = args.model;
    if (args.streams > 0) {
        spec.toy_streams = args.streams;
    } else {
        spec.toy_streams = *std::max_element(args.batch_grid.begin(),
                                             args.batch_grid.end());
    }
    LoadedModels models = load_models(spec);
    std::unique_ptr<NGramLm> lm;
    if (!args.decode.lm_path.empty()) {
        lm = std::make_unique<NGramLm>(NGramLm::parse_arpa(
            args.decode.lm_path, *models.vocab, args.decode.lm_strict));
    }
    std::vector<BenchRow> rows;
    for (const auto& algo : args.algos) {
        const DecodeFn fn = algo_fn(algo);
        for (const int batch : args.batch_grid) {
            for (const int beam : args.beam_grid) {
                DecodeArgs da = args.decode;
                da.beam = beam;
                DecodeConfig cfg = build_config(da, lm.get());
                const auto run = [&]() -> std::uint64_t {
                    const DecodeResult r =
                        decode_chunked(fn, models.streams, cfg, batch);
                    return r.total_frames();
                };
                BenchRow row{algo, batch, beam,
                             bench(run, args.warmup, args.repeats,
                                   args.seconds_per_frame)};
                rows.push_back(std::move(row));
            }
        }
    }
    return rows;
}

void cmd_gen_fixtures(const GenFixturesArgs& args) {
    if (args.out_dir.empty()) {
        throw UsageError("gen-fixtures needs --out");
    }
    const fs::path out(args.out_dir);
    fs::create_directories(out);
    if (args.suite == "smoke") {
        const LatticeModel lattice = make_blank_heavy_lattice(args.seed, 4, 3, 1);
        const Vocabulary vocab = Vocabulary::synthetic(3);
        atomic_write_file(out / "lattice.json", lattice.to_json_text());
        std::ostringstream toks;
        for (const auto& t : vocab.tokens()) {
            toks << t << "\n";
        }
        atomic_write_file(out / "tokens.txt", toks.str());
        atomic_write_file(out / "lm.arpa",
                          make_random_consistent_arpa(args.seed, vocab, 2));
        const auto dist = enumerate_alignments(lattice, 4, 6);
        const std::vector<TokenId>* best = nullptr;
        double best_p = -1.0;
        for (const auto& [tokens, p] : dist) {
            if (p > best_p) {
                best_p = p;
                best = &tokens;
            }
        }
        IdTextPairs refs;
        refs.emplace_back("lattice", best ? detokenize_text(vocab, *best) : "");
        atomic_write_file(out / "refs.tsv", render_id_text(refs));
        return;
    }
    if (args.suite == "deletion-trend") {
        const DeletionTrendSuite suite = make_deletion_trend_suite();
        IdTextPairs refs;
        for (std::size_t i = 0; i < suite.lattices.size(); ++i) {
            std::ostringstream name;
            name << "del" << std::setw(2) << std::setfill('0') << i;
            atomic_write_file(out / (name.str() + ".json"),
                              suite.lattices[i].to_json_text());
            refs.emplace_back(name.str(),
                              detokenize_text(suite.vocab, suite.ref_tokens[i]));
        }
        std::ostringstream toks;
        for (const auto& t : suite.vocab.tokens()) {
            toks << t << "\n";
        }
        atomic_write_file(out / "tokens.txt", toks.str());
        atomic_write_file(out / "lm.arpa", suite.arpa_text);
        atomic_write_file(out / "refs.tsv", render_id_text(refs));
        return;
    }
    if (args.suite == "lm-pack") {
        const Vocabulary vocab = Vocabulary::synthetic(12);
        std::ostringstream toks;
        for (const auto& t : vocab.tokens()) {
            toks << t << "\n";
        }
        atomic_write_file(out / "tokens.txt", toks.str());
        atomic_write_file(out / "lm3.arpa",
                          make_random_consistent_arpa(args.seed, vocab, 3));
        return;
    }
    throw UsageError("unknown fixture suite: " + args.suite);
}

}  // namespace tbeam::cli
