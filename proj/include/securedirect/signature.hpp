#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "securedirect/util.hpp"

// Signature database and payload matcher. Signatures are raw byte patterns;
// a payload is an attack iff at least one pattern occurs in it as a
// contiguous substring. Matching runs on an Aho-Corasick automaton compiled
// once at load (the database is immutable afterwards). No normalization of
// any kind is applied to the payload.

namespace securedirect {

struct Signature {
  std::uint32_t id = 0;
  std::string name;
  Bytes pattern;  // non-empty
};

struct Verdict {
  bool attack = false;
  std::vector<std::uint32_t> matched;  // ascending signature ids
};

/// Multi-pattern substring automaton (Aho-Corasick with goto function
/// completed into a DFA). Sized for signature databases, not dictionaries:
/// each node carries a full 256-way transition row.
class PatternMatcher {
 public:
  PatternMatcher() { nodes_.emplace_back(); }

  explicit PatternMatcher(const std::vector<Signature>& signatures) : PatternMatcher() {
    for (const auto& sig : signatures) add_pattern(sig.pattern, sig.id);
    compile();
  }

  void add_pattern(ByteView pattern, std::uint32_t id) {
    int state = 0;
    for (auto byte : pattern) {
      int next = nodes_[state].next[byte];
      if (next == -1) {
        next = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        nodes_[state].next[byte] = next;
      }
      state = next;
    }
    nodes_[state].out.push_back(id);
  }

  void compile() {
    std::vector<int> queue;
    for (int c = 0; c < 256; ++c) {
      int& next = nodes_[0].next[c];
      if (next == -1) {
        next = 0;
      } else {
        nodes_[next].fail = 0;
        queue.push_back(next);
      }
    }
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
      const int state = queue[qi];
      const auto& fail_out = nodes_[nodes_[state].fail].out;
      nodes_[state].out.insert(nodes_[state].out.end(), fail_out.begin(), fail_out.end());
      for (int c = 0; c < 256; ++c) {
        int& next = nodes_[state].next[c];
        if (next == -1) {
          next = nodes_[nodes_[state].fail].next[c];
        } else {
          nodes_[next].fail = nodes_[nodes_[state].fail].next[c];
          queue.push_back(next);
        }
      }
    }
    compiled_ = true;
  }

  /// Ids of every pattern occurring in the payload, ascending, deduplicated.
  std::vector<std::uint32_t> match_ids(ByteView payload) const {
    std::set<std::uint32_t> hits;
    int state = 0;
    for (auto byte : payload) {
      state = nodes_[state].next[byte];
      for (auto id : nodes_[state].out) hits.insert(id);
    }
    return std::vector<std::uint32_t>(hits.begin(), hits.end());
  }

  bool compiled() const { return compiled_; }

 private:
  struct Node {
    Node() { next.fill(-1); }
    std::array<int, 256> next;
    int fail = 0;
    std::vector<std::uint32_t> out;
  };
  std::vector<Node> nodes_;
  bool compiled_ = false;
};

/// Loaded attack-signature database. File format, line oriented:
///   <id> <name> <hex-pattern>
/// `#` starts a comment, blank lines are ignored, ids must be unique
/// positive integers, hex-pattern is even-length hex for a pattern of at
/// least one byte.
class SignatureDb {
 public:
  static Expected<SignatureDb> load(std::string_view text) {
    SignatureDb db;
    db.source_digest_ = fnv1a64(ByteView(reinterpret_cast<const std::uint8_t*>(text.data()),
                                         text.size()));
    std::set<std::uint32_t> seen_ids;
    std::size_t line_no = 0;
    for (std::string_view raw : split(text, '\n')) {
      ++line_no;
      std::string_view line = raw;
      if (auto hash = line.find('#'); hash != std::string_view::npos) {
        line = line.substr(0, hash);
      }
      line = trim(line);
      if (line.empty()) continue;

      std::vector<std::string_view> fields;
      for (auto tok : split(line, ' ')) {
        for (auto sub : split(tok, '\t')) {
          if (!sub.empty()) fields.push_back(sub);
        }
      }
      if (fields.size() != 3) {
        return Error{Errc::parse_error,
                     "line " + std::to_string(line_no) + ": expected `<id> <name> <hex-pattern>`"};
      }
      std::uint64_t id = 0;
      for (char c : fields[0]) {
        if (c < '0' || c > '9') {
          return Error{Errc::parse_error, "line " + std::to_string(line_no) + ": bad id"};
        }
        id = id * 10 + static_cast<std::uint64_t>(c - '0');
        if (id > 0xFFFFFFFFull) {
          return Error{Errc::parse_error, "line " + std::to_string(line_no) + ": id out of range"};
        }
      }
      if (id == 0) {
        return Error{Errc::parse_error, "line " + std::to_string(line_no) + ": id must be positive"};
      }
      if (!seen_ids.insert(static_cast<std::uint32_t>(id)).second) {
        return Error{Errc::duplicate_id,
                     "line " + std::to_string(line_no) + ": duplicate id " + std::to_string(id)};
      }
      auto pattern = parse_hex(fields[2]);
      if (!pattern || pattern->empty()) {
        return Error{Errc::parse_error,
                     "line " + std::to_string(line_no) + ": bad hex pattern"};
      }
      db.signatures_.push_back(Signature{static_cast<std::uint32_t>(id),
                                         std::string(fields[1]), std::move(*pattern)});
    }
    db.matcher_ = PatternMatcher(db.signatures_);
    return db;
  }

  static Expected<SignatureDb> load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return Error{Errc::io_error, "cannot open " + path};
    std::ostringstream ss;
    ss << in.rdbuf();
    return load(ss.str());
  }

  /// Canonical text form: one `<id> <name> <hex>` line per signature.
  std::string serialize() const {
    std::string out;
    for (const auto& sig : signatures_) {
      out += std::to_string(sig.id);
      out += ' ';
      out += sig.name;
      out += ' ';
      out += to_hex(sig.pattern);
      out += '\n';
    }
    return out;
  }

  const std::vector<Signature>& signatures() const { return signatures_; }
  const PatternMatcher& matcher() const { return matcher_; }
  std::uint64_t source_digest() const { return source_digest_; }
  bool empty() const { return signatures_.empty(); }

  const Signature* find(std::uint32_t id) const {
    for (const auto& s : signatures_) {
      if (s.id == id) return &s;
    }
    return nullptr;
  }

 private:
  std::vector<Signature> signatures_;
  PatternMatcher matcher_;
  std::uint64_t source_digest_ = 0;
};

/// Pure verdict function: attack iff any signature pattern occurs in the
/// payload.
inline Verdict inspect(const SignatureDb& db, ByteView payload) {
  Verdict v;
  v.matched = db.matcher().match_ids(payload);
  v.attack = !v.matched.empty();
  return v;
}

}  // namespace securedirect
