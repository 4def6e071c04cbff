#include "tbeam/ngram_lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace tbeam {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_blank_line(const std::string& s) {
    return s.find_first_not_of(" \t\r") == std::string::npos;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream iss(line);
    std::string field;
    while (iss >> field) {
        out.push_back(std::move(field));
    }
    return out;
}

struct TmpNode {
    double prob = kNaN;
    double backoff = 0.0;
    std::int32_t parent = -1;
    std::int32_t token = -1;
    std::int32_t depth = 0;
};

}  // namespace

NGramLm NGramLm::parse_arpa(const std::filesystem::path& path,
                            const Vocabulary& vocab, bool strict) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError(path.string(), 0, "cannot open ARPA file");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_arpa_text(buf.str(), path.string(), vocab, strict);
}

NGramLm NGramLm::parse_arpa_text(const std::string& text,
                                 const std::string& source_name,
                                 const Vocabulary& vocab, bool strict) {
    NGramLm lm;
    lm.vocab_size_ = vocab.size();
    const std::int32_t token_space = lm.vocab_size_ + 3;

    std::vector<TmpNode> tmp(1);  // root
    std::unordered_map<std::uint64_t, std::int32_t> child_map;
    const auto ensure_child = [&](std::int32_t parent,
                                  std::int32_t token) -> std::int32_t {
        const std::uint64_t key =
            static_cast<std::uint64_t>(parent) * token_space + token;
        const auto [it, inserted] =
            child_map.emplace(key, static_cast<std::int32_t>(tmp.size()));
        if (inserted) {
            TmpNode node;
            node.parent = parent;
            node.token = token;
            node.depth = tmp[parent].depth + 1;
            tmp.push_back(node);
        }
        return it->second;
    };

    const auto map_token = [&](const std::string& word,
                               std::size_t line_no) -> std::int32_t {
        if (word == "<s>") return lm.bos_id();
        if (word == "</s>") return lm.eos_id();
        if (word == "<unk>" || word == "<UNK>") return lm.unk_id();
        const TokenId id = vocab.find(word);
        if (id != kNoToken) return id;
        if (strict) {
            throw ParseError(source_name, line_no,
                             "token '" + word + "' not in vocabulary");
        }
        ++lm.oov_mapped_;
        return lm.unk_id();
    };

    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    enum class Section { kPreamble, kData, kGrams, kDone };
    Section section = Section::kPreamble;
    std::vector<std::size_t> declared;  // declared[k-1] = count of k-grams
    std::vector<std::size_t> seen;
    int current_order = 0;

    const auto check_section_complete = [&](std::size_t at_line) {
        if (current_order == 0) return;
        if (seen[current_order - 1] != declared[current_order - 1]) {
            std::ostringstream oss;
            oss << "\\" << current_order << "-grams: section has "
                << seen[current_order - 1] << " entries, header declared "
                << declared[current_order - 1];
            throw ParseError(source_name, at_line, oss.str());
        }
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (is_blank_line(line)) {
            continue;
        }
        if (section == Section::kPreamble) {
            if (line == "\\data\\") {
                section = Section::kData;
            }
            continue;
        }
        if (line == "\\end\\") {
            check_section_complete(line_no);
            if (current_order != static_cast<int>(declared.size())) {
                throw ParseError(source_name, line_no,
                                 "missing n-gram sections before \\end\\");
            }
            section = Section::kDone;
            break;
        }
        if (section == Section::kData) {
            if (line.rfind("ngram ", 0) == 0) {
                const auto eq = line.find('=');
                if (eq == std::string::npos) {
                    throw ParseError(source_name, line_no, "malformed ngram count line");
                }
                int k = 0;
                std::size_t count = 0;
                try {
                    k = std::stoi(line.substr(6, eq - 6));
                    count = std::stoul(line.substr(eq + 1));
                } catch (const std::exception&) {
                    throw ParseError(source_name, line_no, "malformed ngram count line");
                }
                if (k != static_cast<int>(declared.size()) + 1) {
                    throw ParseError(source_name, line_no,
                                     "ngram orders must be contiguous from 1");
                }
                declared.push_back(count);
                continue;
            }
            // fall through to a section header
            section = Section::kGrams;
            seen.assign(declared.size(), 0);
        }
        if (section == Section::kGrams) {
            if (line.size() >= 2 && line.front() == '\\' &&
                line.find("-grams:") != std::string::npos) {
                check_section_complete(line_no);
                int k = 0;
                try {
                    k = std::stoi(line.substr(1, line.find("-grams:") - 1));
                } catch (const std::exception&) {
                    throw ParseError(source_name, line_no, "malformed section header");
                }
                if (k != current_order + 1 || k > static_cast<int>(declared.size())) {
                    throw ParseError(source_name, line_no,
                                     "unexpected section " + line +
                                         " (orders must be contiguous)");
                }
                current_order = k;
                continue;
            }
            if (current_order == 0) {
                throw ParseError(source_name, line_no,
                                 "entry before any n-gram section header");
            }
            const auto fields = split_fields(line);
            const std::size_t k = static_cast<std::size_t>(current_order);
            if (fields.size() != k + 1 && fields.size() != k + 2) {
                std::ostringstream oss;
                oss << "\\" << current_order << "-grams: expected " << (k + 1)
                    << " or " << (k + 2) << " fields, got " << fields.size();
                throw ParseError(source_name, line_no, oss.str());
            }
            double logp = 0.0;
            double backoff10 = 0.0;
            const bool has_backoff = fields.size() == k + 2;
            try {
                logp = std::stod(fields[0]);
                if (has_backoff) {
                    backoff10 = std::stod(fields[k + 1]);
                }
            } catch (const std::exception&) {
                throw ParseError(source_name, line_no, "malformed log probability");
            }
            std::int32_t ctx = 0;
            for (std::size_t i = 0; i + 1 < k; ++i) {
                ctx = ensure_child(ctx, map_token(fields[1 + i], line_no));
            }
            const std::int32_t node =
                ensure_child(ctx, map_token(fields[k], line_no));
            tmp[node].prob = logp * M_LN10;
            if (has_backoff) {
                tmp[node].backoff = backoff10 * M_LN10;
            }
            ++seen[current_order - 1];
        }
    }
    if (section != Section::kDone) {
        throw ParseError(source_name, line_no,
                         section == Section::kPreamble ? "no \\data\\ section found"
                                                       : "missing \\end\\ terminator");
    }
    if (declared.empty()) {
        throw ParseError(source_name, 0, "ARPA file declares no n-gram orders");
    }
    lm.order_ = static_cast<int>(declared.size());
    if (lm.oov_mapped_ > 0) {
        std::cerr << "[tbeam] " << source_name << ": mapped " << lm.oov_mapped_
                  << " out-of-vocabulary n-gram tokens to <unk>\n";
    }

    // Freeze the trie: contiguous children sorted by token, then suffix
    // links in depth order.
    const std::size_t n = tmp.size();
    lm.nodes_.resize(n);
    std::vector<std::int32_t> child_count(n, 0);
    for (std::size_t i = 1; i < n; ++i) {
        ++child_count[tmp[i].parent];
    }
    std::int32_t offset = 0;
    for (std::size_t i = 0; i < n; ++i) {
        lm.nodes_[i].child_begin = offset;
        lm.nodes_[i].child_end = offset;
        offset += child_count[i];
    }
    lm.edge_token_.resize(n - 1);
    lm.edge_node_.resize(n - 1);
    for (std::size_t i = 1; i < n; ++i) {
        const std::int32_t p = tmp[i].parent;
        const std::int32_t e = lm.nodes_[p].child_end++;
        lm.edge_token_[e] = tmp[i].token;
        lm.edge_node_[e] = static_cast<std::int32_t>(i);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto b = lm.edge_token_.begin() + lm.nodes_[i].child_begin;
        const auto e = lm.edge_token_.begin() + lm.nodes_[i].child_end;
        std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
        pairs.reserve(e - b);
        for (std::int32_t j = lm.nodes_[i].child_begin; j < lm.nodes_[i].child_end;
             ++j) {
            pairs.emplace_back(lm.edge_token_[j], lm.edge_node_[j]);
        }
        std::sort(pairs.begin(), pairs.end());
        for (std::size_t j = 0; j < pairs.size(); ++j) {
            lm.edge_token_[lm.nodes_[i].child_begin + j] = pairs[j].first;
            lm.edge_node_[lm.nodes_[i].child_begin + j] = pairs[j].second;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        lm.nodes_[i].prob = tmp[i].prob;
        lm.nodes_[i].backoff = tmp[i].backoff;
        lm.nodes_[i].depth = tmp[i].depth;
        lm.nodes_[i].suffix = 0;
    }
    std::vector<std::int32_t> by_depth(n - 1);
    for (std::size_t i = 1; i < n; ++i) {
        by_depth[i - 1] = static_cast<std::int32_t>(i);
    }
    std::sort(by_depth.begin(), by_depth.end(),
              [&](std::int32_t a, std::int32_t b) {
                  return lm.nodes_[a].depth < lm.nodes_[b].depth;
              });
    for (const std::int32_t node : by_depth) {
        if (lm.nodes_[node].depth == 1) {
            lm.nodes_[node].suffix = 0;
            continue;
        }
        std::int32_t s = lm.nodes_[tmp[node].parent].suffix;
        while (true) {
            const std::int32_t c = lm.find_child(s, tmp[node].token);
            if (c >= 0) {
                lm.nodes_[node].suffix = c;
                break;
            }
            if (s == 0) {
                lm.nodes_[node].suffix = 0;
                break;
            }
            s = lm.nodes_[s].suffix;
        }
    }

    lm.token_remap_.assign(lm.vocab_size_, -1);
    const std::int32_t unk_node = lm.find_child(0, lm.unk_id());
    const bool has_unk = unk_node >= 0 && !std::isnan(lm.nodes_[unk_node].prob);
    for (std::int32_t k = 0; k < lm.vocab_size_; ++k) {
        const std::int32_t c = lm.find_child(0, k);
        if (c >= 0 && !std::isnan(lm.nodes_[c].prob)) {
            lm.token_remap_[k] = k;
        } else if (has_unk) {
            lm.token_remap_[k] = lm.unk_id();
        }
    }

    const std::int32_t bos_node = lm.find_child(0, lm.bos_id());
    if (bos_node >= 0) {
        lm.initial_state_ = lm.nodes_[bos_node].depth == lm.order_
                                ? lm.nodes_[bos_node].suffix
                                : bos_node;
    }
    return lm;
}

std::int32_t NGramLm::find_child(State node, std::int32_t internal_token) const {
    const auto first = edge_token_.begin() + nodes_[node].child_begin;
    const auto last = edge_token_.begin() + nodes_[node].child_end;
    const auto it = std::lower_bound(first, last, internal_token);
    if (it == last || *it != internal_token) {
        return -1;
    }
    return edge_node_[it - edge_token_.begin()];
}

double NGramLm::score_internal(State state, std::int32_t internal_token) const {
    double acc = 0.0;
    State c = state;
    while (true) {
        const std::int32_t node = find_child(c, internal_token);
        if (node >= 0 && !std::isnan(nodes_[node].prob)) {
            return std::max(acc + nodes_[node].prob, kLogZeroFloor);
        }
        if (c == 0) {
            return kLogZeroFloor;
        }
        acc += nodes_[c].backoff;
        c = nodes_[c].suffix;
    }
}

double NGramLm::score_token(State state, TokenId token) const {
    counters_->token_queries.fetch_add(1, std::memory_order_relaxed);
    if (token < 0 || token >= vocab_size_) {
        throw std::invalid_argument("NGramLm::score_token: not an ASR token id");
    }
    const std::int32_t itok = token_remap_[token];
    if (itok < 0) {
        return kLogZeroFloor;
    }
    return score_internal(state, itok);
}

double NGramLm::score_eos(State state) const {
    counters_->token_queries.fetch_add(1, std::memory_order_relaxed);
    return score_internal(state, eos_id());
}

void NGramLm::score_vocab(State state, std::span<double> out,
                          Scratch& scratch) const {
    counters_->vocab_queries.fetch_add(1, std::memory_order_relaxed);
    if (static_cast<int>(out.size()) != vocab_size_) {
        throw std::invalid_argument("NGramLm::score_vocab: out size != |V|");
    }
    if (scratch.stamp.size() != static_cast<std::size_t>(vocab_size_)) {
        scratch.stamp.assign(vocab_size_, 0);
        scratch.epoch = 0;
    }
    if (++scratch.epoch == 0) {
        std::fill(scratch.stamp.begin(), scratch.stamp.end(), 0);
        scratch.epoch = 1;
    }
    const std::uint32_t epoch = scratch.epoch;

    double acc = 0.0;
    State c = state;
    while (true) {
        for (std::int32_t e = nodes_[c].child_begin; e < nodes_[c].child_end; ++e) {
            const std::int32_t tok = edge_token_[e];
            if (tok >= vocab_size_) {
                continue;  // <s>, </s>, <unk> never appear in output rows
            }
            if (scratch.stamp[tok] == epoch) {
                continue;
            }
            const std::int32_t node = edge_node_[e];
            if (std::isnan(nodes_[node].prob)) {
                continue;  // implicit context node, no probability here
            }
            out[tok] = std::max(acc + nodes_[node].prob, kLogZeroFloor);
            scratch.stamp[tok] = epoch;
        }
        if (c == 0) {
            break;
        }
        acc += nodes_[c].backoff;
        c = nodes_[c].suffix;
    }
    const std::int32_t unk_node = find_child(0, unk_id());
    const double unk_prob =
        unk_node >= 0 && !std::isnan(nodes_[unk_node].prob) ? nodes_[unk_node].prob
                                                            : kNegInf;
    for (std::int32_t k = 0; k < vocab_size_; ++k) {
        if (scratch.stamp[k] == epoch) {
            continue;
        }
        // never seen at any level: score as <unk> under the full backoff
        // chain, or floor out entirely
        out[k] = std::isfinite(unk_prob) ? std::max(acc + unk_prob, kLogZeroFloor)
                                         : kLogZeroFloor;
    }
}

NGramLm::State NGramLm::advance(State state, TokenId token) const {
    if (token < 0 || token >= vocab_size_) {
        throw std::invalid_argument(
            "NGramLm::advance: blank or out-of-range token cannot advance the LM");
    }
    const std::int32_t itok = token_remap_[token];
    if (itok < 0) {
        return 0;
    }
    State c = state;
    while (true) {
        const std::int32_t node = find_child(c, itok);
        if (node >= 0) {
            return nodes_[node].depth == order_ ? nodes_[node].suffix : node;
        }
        if (c == 0) {
            return 0;
        }
        c = nodes_[c].suffix;
    }
}

void NGramLm::advance_batch(std::span<State> states,
                            std::span<const TokenId> tokens) const {
    if (states.size() != tokens.size()) {
        throw std::invalid_argument("NGramLm::advance_batch: size mismatch");
    }
    for (std::size_t i = 0; i < states.size(); ++i) {
        states[i] = advance(states[i], tokens[i]);
    }
}

void NGramLm::score_vocab_batch(std::span<const State> states,
                                std::span<double> out, Scratch& scratch) const {
    if (out.size() != states.size() * static_cast<std::size_t>(vocab_size_)) {
        throw std::invalid_argument("NGramLm::score_vocab_batch: size mismatch");
    }
    for (std::size_t i = 0; i < states.size(); ++i) {
        score_vocab(states[i], out.subspan(i * vocab_size_, vocab_size_), scratch);
    }
}

}  // namespace tbeam
