#include "gcx/protocol.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>

#include <json.hpp>

#include "gcx/circuitgen.hpp"

namespace gcx {

using ojson = nlohmann::ordered_json;

std::string to_string(Party p) { return p == Party::Client ? "client" : "server"; }

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::Plain: return "PLAIN";
    case Provenance::Masked: return "MASKED";
    case Provenance::MockEnc: return "MOCK_ENC";
    case Provenance::GcLabels: return "GC_LABELS";
  }
  return "?";
}

std::string to_string(Phase p) { return p == Phase::Offline ? "offline" : "online"; }

namespace {

std::uint64_t ring_mask(unsigned bits) { return bits >= 64 ? ~0ull : (1ull << bits) - 1; }

std::int64_t ring_signed(std::uint64_t v, unsigned bits) {
  v &= ring_mask(bits);
  if (bits < 64 && (v >> (bits - 1)) & 1) v |= ~ring_mask(bits);
  return static_cast<std::int64_t>(v);
}

struct Fnv {
  std::uint64_t h = 0xcbf29ce484222325ull;
  void add(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 0x100000001b3ull;
    }
  }
  void add(const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
  }
};

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t op) {
  Fnv f;
  f.add(a);
  f.add(b);
  f.add(op);
  return f.h;
}

std::uint64_t labels_digest(std::span<const Label> labels) {
  Fnv f;
  for (const Label& l : labels) f.add(label_digest(l));
  return f.h;
}

std::uint64_t circuit_digest(const GarbledCircuit& gc) {
  Fnv f;
  for (const auto& t : gc.tables) {
    f.add(t.row_g.lo);
    f.add(t.row_g.hi);
    f.add(t.row_e.lo);
    f.add(t.row_e.hi);
  }
  for (const auto& d : gc.decode) {
    f.add(d.bit);
    f.add(d.check0);
    f.add(d.check1);
  }
  return f.h;
}

void check_same_size(const MockCiphertext& a, std::size_t n) {
  if (a.size() != n) throw ProtocolError("mock HE: operand length mismatch");
}

}  // namespace

// ---- matrices ------------------------------------------------------------

FixedMatrix FixedMatrix::zeros(std::size_t rows, std::size_t cols, const FixedPointFormat& fmt) {
  return {rows, cols, fmt, std::vector<std::int64_t>(rows * cols, 0)};
}

FixedMatrix FixedMatrix::identity(std::size_t n, const FixedPointFormat& fmt) {
  FixedMatrix m = zeros(n, n, fmt);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1;
  return m;
}

void FixedMatrix::validate() const {
  fmt.validate();
  if (raw.size() != rows * cols) throw ProtocolError("matrix: storage does not match its shape");
  for (auto v : raw)
    if (v < fmt.min_raw() || v > fmt.max_raw())
      throw ProtocolError("matrix: entry " + std::to_string(v) + " outside " + fmt.describe());
}

std::vector<std::int64_t> SharedMatrix::recombine() const {
  if (client.size() != rows * cols || server.size() != rows * cols) throw ProtocolError("shares: shape mismatch");
  std::vector<std::int64_t> out(client.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ring_signed(client[i] + server[i], ring_bits);
  return out;
}

// ---- mock HE ---------------------------------------------------------------

std::uint64_t MockCiphertext::digest() const {
  Fnv f;
  f.add(key_id_);
  f.add(nonce_);
  f.add(sealed_.size());
  return f.h;
}

MockCiphertext operator+(const MockCiphertext& a, const std::vector<std::uint64_t>& plain) {
  check_same_size(a, plain.size());
  auto v = a.sealed_;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += plain[i];
  return {a.key_id_, std::move(v), mix(a.nonce_, 0, 1)};
}

MockCiphertext operator-(const MockCiphertext& a, const std::vector<std::uint64_t>& plain) {
  check_same_size(a, plain.size());
  auto v = a.sealed_;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= plain[i];
  return {a.key_id_, std::move(v), mix(a.nonce_, 0, 2)};
}

MockCiphertext operator*(const MockCiphertext& a, const std::vector<std::uint64_t>& plain) {
  check_same_size(a, plain.size());
  auto v = a.sealed_;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= plain[i];
  return {a.key_id_, std::move(v), mix(a.nonce_, 0, 3)};
}

MockCiphertext operator*(const MockCiphertext& a, std::uint64_t scalar) {
  auto v = a.sealed_;
  for (auto& x : v) x *= scalar;
  return {a.key_id_, std::move(v), mix(a.nonce_, scalar, 4)};
}

MockCiphertext operator+(const MockCiphertext& a, const MockCiphertext& b) {
  if (a.key_id_ != b.key_id_) throw ProtocolError("mock HE: ciphertexts under different keys");
  check_same_size(a, b.size());
  auto v = a.sealed_;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += b.sealed_[i];
  return {a.key_id_, std::move(v), mix(a.nonce_, b.nonce_, 5)};
}

MockCiphertext operator*(const MockCiphertext& a, const MockCiphertext& b) {
  if (a.key_id_ != b.key_id_) throw ProtocolError("mock HE: ciphertexts under different keys");
  check_same_size(a, b.size());
  auto v = a.sealed_;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= b.sealed_[i];
  return {a.key_id_, std::move(v), mix(a.nonce_, b.nonce_, 6)};
}

MockCiphertext matmul(const MockCiphertext& a, std::size_t rows, std::size_t inner, const std::vector<std::uint64_t>& w,
                      std::size_t cols) {
  check_same_size(a, rows * inner);
  if (w.size() != inner * cols) throw ProtocolError("mock HE: weight shape mismatch");
  std::vector<std::uint64_t> v(rows * cols, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < inner; ++k)
      for (std::size_t c = 0; c < cols; ++c) v[r * cols + c] += a.sealed_[r * inner + k] * w[k * cols + c];
  return {a.key_id_, std::move(v), mix(a.nonce_, rows * cols, 7)};
}

MockCiphertext inner_product(const MockCiphertext& a, const std::vector<std::uint64_t>& plain) {
  check_same_size(a, plain.size());
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < plain.size(); ++i) s += a.sealed_[i] * plain[i];
  return {a.key_id_, {s}, mix(a.nonce_, 0, 8)};
}

MockCiphertext slice(const MockCiphertext& a, std::size_t first, std::size_t count) {
  if (first + count > a.size()) throw ProtocolError("mock HE: slice out of range");
  std::vector<std::uint64_t> v(a.sealed_.begin() + first, a.sealed_.begin() + first + count);
  return {a.key_id_, std::move(v), mix(a.nonce_, first, 9)};
}

MockCiphertext MockHe::encrypt(std::vector<std::uint64_t> v) { return {key_id_, std::move(v), mix(++nonce_, 0, 0)}; }

std::vector<std::uint64_t> MockHe::decrypt(const MockCiphertext& c) const {
  if (c.key_id_ != key_id_) throw ProtocolError("mock HE: ciphertext is under key '" + c.key_id_ + "'");
  return c.sealed_;
}

// ---- transcript ----------------------------------------------------------

const Message& Transcript::send(Message m) {
  if (m.from == m.to) throw ProtocolError("transcript: a message must cross parties");
  m.seq = seq_++;
  if (m.provenance == Provenance::Plain || m.provenance == Provenance::Masked) {
    m.count = m.payload.size();
    m.digest = 0;
  } else {
    m.payload.clear();
    m.ring_bits = 0;
  }
  messages_.push_back(std::move(m));
  return messages_.back();
}

void Transcript::declare(Phase phase, Party owner, const std::string& id, std::uint64_t count) {
  decls_.push_back({seq_++, phase, owner, id, count});
}

std::string Transcript::to_jsonl() const {
  std::string out;
  std::size_t i = 0, j = 0;
  while (i < messages_.size() || j < decls_.size()) {
    ojson o;
    if (j >= decls_.size() || (i < messages_.size() && messages_[i].seq < decls_[j].seq)) {
      const Message& m = messages_[i++];
      o["seq"] = m.seq;
      o["phase"] = to_string(m.phase);
      o["from"] = to_string(m.from);
      o["to"] = to_string(m.to);
      o["kind"] = m.kind;
      o["provenance"] = to_string(m.provenance);
      o["tag"] = m.tag;
      o["count"] = m.count;
      if (m.provenance == Provenance::Plain || m.provenance == Provenance::Masked) {
        o["ring_bits"] = m.ring_bits;
        o["payload"] = m.payload;
      } else {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(m.digest));
        o["digest"] = buf;
      }
    } else {
      const MaskDecl& d = decls_[j++];
      o["seq"] = d.seq;
      o["phase"] = to_string(d.phase);
      o["sample"] = d.id;
      o["owner"] = to_string(d.owner);
      o["count"] = d.count;
    }
    out += o.dump();
    out += '\n';
  }
  return out;
}

// ---- audit ---------------------------------------------------------------

AuditReport audit(const Transcript& t) {
  AuditReport r;
  r.messages = t.messages().size();
  std::map<std::string, std::pair<Party, std::uint64_t>> offline_masks;  // id -> owner, seq
  std::map<std::string, std::pair<Party, std::uint64_t>> all_masks;
  for (const MaskDecl& d : t.declarations()) {
    all_masks.emplace(d.id, std::pair{d.owner, d.seq});
    if (d.phase == Phase::Offline) offline_masks.emplace(d.id, std::pair{d.owner, d.seq});
  }
  std::map<std::string, std::uint64_t> offline_tags;  // first offline message carrying the tag
  std::array<std::size_t, 16> bins{};

  auto violation = [&](const Message& m, const std::string& what) {
    r.violations.push_back("message " + std::to_string(m.seq) + " '" + m.kind + "' (" + to_string(m.from) + " -> " +
                           to_string(m.to) + "): " + what);
  };

  for (const Message& m : t.messages()) {
    ++r.by_provenance[to_string(m.provenance)];
    if (m.provenance == Provenance::Plain) violation(m, "PLAIN payload crossed parties");
    if (m.provenance == Provenance::Masked) {
      auto it = all_masks.find(m.tag);
      if (it == all_masks.end() || it->second.first != m.from || it->second.second > m.seq)
        violation(m, "masked with '" + m.tag + "', which its sender never sampled");
      const unsigned digits = m.ring_bits / 4;
      for (std::uint64_t v : m.payload)
        for (unsigned k = 0; k < digits; ++k) ++bins[(v >> (4 * k)) & 15];
      r.samples += m.payload.size() * digits;
    }
    if (m.phase == Phase::Offline) {
      offline_tags.emplace(m.tag, m.seq);
    } else if (!m.tag.empty()) {
      auto mk = offline_masks.find(m.tag);
      const bool own_offline_mask = mk != offline_masks.end() && mk->second.first == m.from;
      auto ot = offline_tags.find(m.tag);
      const bool set_up = ot != offline_tags.end() && ot->second < m.seq;
      if (!own_offline_mask && !set_up) violation(m, "online use of '" + m.tag + "' without offline setup");
    }
  }

  if (r.samples >= AuditReport::kMinSamples) {
    r.uniformity_checked = true;
    const double expect = static_cast<double>(r.samples) / 16.0;
    for (auto c : bins) r.chi_square += (c - expect) * (c - expect) / expect;
    if (r.chi_square > AuditReport::kChiSquareCritical)
      r.violations.push_back("masked payload digits are not uniform: chi-square " + std::to_string(r.chi_square) +
                             " over " + std::to_string(r.samples) + " samples");
  }
  r.pass = r.violations.empty();
  return r;
}

std::string AuditReport::to_json() const {
  ojson o;
  o["pass"] = pass;
  o["messages"] = messages;
  o["by_provenance"] = by_provenance;
  o["uniformity"] = {{"checked", uniformity_checked},
                     {"samples", samples},
                     {"chi_square", chi_square},
                     {"critical", kChiSquareCritical}};
  o["violations"] = violations;
  return o.dump(2);
}

// ---- session ---------------------------------------------------------------

Session::Session(const ProtocolOptions& o)
    : opts_(o), client_rng_(o.seed * 0x9e3779b97f4a7c15ull + 1), server_rng_(o.seed * 0x9e3779b97f4a7c15ull + 2) {}

std::string Session::next_mask_id(Party owner) {
  return owner == Party::Client ? "R" + std::to_string(++client_masks_) : "S" + std::to_string(++server_masks_);
}

std::vector<std::uint64_t> Session::sample_mask(Phase phase, Party owner, const std::string& id, std::size_t count) {
  std::vector<std::uint64_t> v(count, 0);
  Prg& rng = owner == Party::Client ? client_rng_ : server_rng_;
  if (!opts_.zero_masks)
    for (auto& x : v) x = rng.next_u64();
  transcript_.declare(phase, owner, id, count);
  return v;
}

std::string Session::next_circuit_id() { return "C" + std::to_string(++circuits_); }

void Session::tally_gc(const FoldedNetlist& f, const GarbledCircuit& gc) {
  ++gc_.circuits;
  gc_.and_gates += f.and_count();
  gc_.table_bytes += gc.table_bytes();
  gc_.label_count += f.input_count();
}

// ---- layers ------------------------------------------------------------------

namespace {

std::vector<std::uint64_t> to_ring(const std::vector<std::int64_t>& v) {
  return {v.begin(), v.end()};
}

void push_bits(Bits& out, std::uint64_t v, unsigned width) {
  for (unsigned i = 0; i < width; ++i) out.push_back(static_cast<std::uint8_t>((v >> i) & 1));
}

std::uint64_t read_bits(const Bits& b, std::size_t offset, unsigned width) {
  std::uint64_t v = 0;
  for (unsigned i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(b[offset + i] & 1) << i;
  return v;
}

/// Labels of the given plaintext bits, starting at input `offset`.
std::vector<Label> select_labels(const GarblerKeys& keys, std::size_t offset, const Bits& bits) {
  std::vector<Label> out(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) out[i] = keys.input_zero[offset + i] ^ keys.delta.select(bits[i]);
  return out;
}

/*
 * One garbled execution: the client garbles offline and sends tables plus the
 * labels of its own bits; the server's labels come from the transfer oracle
 * online. Returns the decoded output bits (server side).
 */
class GcRound {
 public:
  GcRound(Session& s, const FoldedNetlist& f) : s_(s), f_(f), id_(s.next_circuit_id()) {}

  void offline(const Bits& client_bits) {
    if (client_bits.size() != f_.inputs_a) throw ProtocolError("gc: garbler input width mismatch");
    g_ = garble(f_, s_.garble_seed());
    s_.tally_gc(f_, g_.circuit);
    s_.transcript().send({.phase = Phase::Offline, .from = Party::Client, .to = Party::Server, .kind = "gc.tables",
                          .provenance = Provenance::GcLabels, .tag = id_, .count = g_.circuit.tables.size(),
                          .digest = circuit_digest(g_.circuit)});
    a_labels_ = select_labels(g_.keys, 0, client_bits);
    s_.transcript().send({.phase = Phase::Offline, .from = Party::Client, .to = Party::Server,
                          .kind = "gc.garbler_labels", .provenance = Provenance::GcLabels, .tag = id_,
                          .count = a_labels_.size(), .digest = labels_digest(a_labels_)});
  }

  Bits online(const Bits& server_bits) {
    if (server_bits.size() != f_.inputs_b) throw ProtocolError("gc: evaluator input width mismatch");
    // Transfer oracle: the server learns exactly the labels of its own bits.
    const auto b_labels = select_labels(g_.keys, f_.inputs_a, server_bits);
    s_.transcript().send({.phase = Phase::Online, .from = Party::Client, .to = Party::Server,
                          .kind = "ot.evaluator_labels", .provenance = Provenance::GcLabels, .tag = id_,
                          .count = b_labels.size(), .digest = labels_digest(b_labels)});
    std::vector<Label> in = a_labels_;
    in.insert(in.end(), b_labels.begin(), b_labels.end());
    const auto out = evaluate(f_, g_.circuit, in);
    return decode(out, g_.circuit.decode);
  }

 private:
  Session& s_;
  const FoldedNetlist& f_;
  std::string id_;
  GarbleResult g_;
  std::vector<Label> a_labels_;
};

}  // namespace

std::vector<std::int64_t> linear_reference(const FixedMatrix& x, const FixedMatrix& w) {
  if (x.cols != w.rows) throw ProtocolError("linear: inner dimensions differ");
  std::vector<std::uint64_t> y(x.rows * w.cols, 0);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t k = 0; k < x.cols; ++k)
      for (std::size_t c = 0; c < w.cols; ++c)
        y[r * w.cols + c] += static_cast<std::uint64_t>(x.at(r, k)) * static_cast<std::uint64_t>(w.at(k, c));
  return {y.begin(), y.end()};
}

SharedMatrix linear_layer(Session& s, const FixedMatrix& x1, const FixedMatrix& w) {
  x1.validate();
  if (w.raw.size() != w.rows * w.cols) throw ProtocolError("linear: weight storage does not match its shape");
  if (x1.cols != w.rows) throw ProtocolError("linear: inner dimensions differ");
  const std::size_t rows = x1.rows, inner = x1.cols, cols = w.cols;
  auto& t = s.transcript();
  MockHe& key = s.client_key();

  // Offline.
  const std::string r1_id = s.next_mask_id(Party::Client);
  const auto r1 = s.sample_mask(Phase::Offline, Party::Client, r1_id, rows * inner);
  const MockCiphertext enc_r1 = key.encrypt(r1);
  t.send({.phase = Phase::Offline, .from = Party::Client, .to = Party::Server, .kind = "linear.enc_mask",
          .provenance = Provenance::MockEnc, .tag = key.key_id(), .count = enc_r1.size(), .digest = enc_r1.digest()});

  const std::string s_id = s.next_mask_id(Party::Server);
  const auto smask = s.sample_mask(Phase::Offline, Party::Server, s_id, rows * cols);
  const auto wv = to_ring(w.raw);
  const MockCiphertext enc_r2 = matmul(enc_r1, rows, inner, wv, cols) - smask;
  t.send({.phase = Phase::Offline, .from = Party::Server, .to = Party::Client, .kind = "linear.enc_masked_product",
          .provenance = Provenance::MockEnc, .tag = key.key_id(), .count = enc_r2.size(), .digest = enc_r2.digest()});
  SharedMatrix out{rows, cols, 64, key.decrypt(enc_r2), {}};

  // Online.
  std::vector<std::uint64_t> masked(rows * inner);
  for (std::size_t i = 0; i < masked.size(); ++i) masked[i] = static_cast<std::uint64_t>(x1.raw[i]) - r1[i];
  t.send({.phase = Phase::Online, .from = Party::Client, .to = Party::Server, .kind = "linear.masked_input",
          .provenance = Provenance::Masked, .tag = r1_id, .ring_bits = 64, .payload = masked});
  if (s.options().inject_plain)
    t.send({.phase = Phase::Online, .from = Party::Client, .to = Party::Server, .kind = "linear.input",
            .provenance = Provenance::Plain, .ring_bits = 64, .payload = to_ring(x1.raw)});

  out.server.assign(rows * cols, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < inner; ++k)
      for (std::size_t c = 0; c < cols; ++c) out.server[r * cols + c] += masked[r * inner + k] * wv[k * cols + c];
  for (std::size_t i = 0; i < out.server.size(); ++i) out.server[i] += smask[i];
  return out;
}

SharedMatrix nonlinear_layer_gc(Session& s, const SharedMatrix& x, const Netlist& f, const FixedPointFormat& fmt) {
  fmt.validate();
  const unsigned w = fmt.total_bits, sb = x.ring_bits;
  if (sb < w) throw ProtocolError("gc layer: share ring narrower than the format");
  const std::size_t count = x.rows * x.cols;
  if (x.client.size() != count || x.server.size() != count) throw ProtocolError("gc layer: share shape mismatch");
  const FoldedNetlist circuit = fold_inv(gen_shared_unary(f, w, static_cast<unsigned>(count), sb));

  // Offline: the client's share is already known, so all garbler inputs are.
  const std::string r3_id = s.next_mask_id(Party::Client);
  auto r3 = s.sample_mask(Phase::Offline, Party::Client, r3_id, count);
  Bits a;
  for (auto v : x.client) push_bits(a, v, w);
  for (auto& v : r3) {
    v &= ring_mask(sb);
    push_bits(a, v, sb);
  }
  GcRound round(s, circuit);
  round.offline(a);

  // Online.
  Bits b;
  for (auto v : x.server) push_bits(b, v, w);
  const Bits out = round.online(b);
  SharedMatrix y{x.rows, x.cols, sb, r3, std::vector<std::uint64_t>(count)};
  for (std::size_t k = 0; k < count; ++k) y.server[k] = read_bits(out, k * sb, sb);
  return y;
}

SharedMatrix layernorm_offload(Session& s, const SharedMatrix& x, const std::vector<std::int64_t>& beta,
                               const std::vector<std::int64_t>& gamma, const LayerNormConfig& cfg) {
  cfg.validate();
  const unsigned n = cfg.n, w = cfg.fmt.total_bits, wd = cfg.var_bits(), wbd = cfg.bd_bits();
  if (x.cols != n) throw ProtocolError("layernorm: row length differs from the configuration");
  if (x.ring_bits != 64) throw ProtocolError("layernorm: input shares must be in the 64-bit ring");
  if (beta.size() != n || gamma.size() != n) throw ProtocolError("layernorm: parameter length mismatch");
  if (x.client.size() != x.rows * n || x.server.size() != x.rows * n) throw ProtocolError("layernorm: share shape mismatch");
  const FoldedNetlist circuit = fold_inv(gen_layernorm(cfg, LayerNormVariant::Reduced));
  auto& t = s.transcript();
  MockHe& key = s.client_key();

  auto centred = [n](const std::uint64_t* v) {
    std::uint64_t sum = 0;
    for (unsigned i = 0; i < n; ++i) sum += v[i];
    std::vector<std::uint64_t> d(n);
    for (unsigned i = 0; i < n; ++i) d[i] = n * v[i] - sum;
    return d;
  };

  struct RowState {
    MockCiphertext enc_dr, enc_q;
    std::vector<std::uint64_t> sv, sb;   // server masks
    std::vector<std::uint64_t> rv, rb, ro;  // client masks
    std::string rv_id, rb_id;
    std::unique_ptr<GcRound> gc;
  };
  std::vector<RowState> st;
  st.reserve(x.rows);

  // Offline, all rows.
  for (std::size_t row = 0; row < x.rows; ++row) {
    const auto dr = centred(&x.client[row * n]);
    std::uint64_t q = 0;
    for (auto v : dr) q += v * v;
    MockCiphertext enc_dr = key.encrypt(dr);
    MockCiphertext enc_q = key.encrypt({q});
    t.send({.phase = Phase::Offline, .from = Party::Client, .to = Party::Server, .kind = "layernorm.enc_centred_mask",
            .provenance = Provenance::MockEnc, .tag = key.key_id(), .count = n, .digest = enc_dr.digest()});
    t.send({.phase = Phase::Offline, .from = Party::Client, .to = Party::Server, .kind = "layernorm.enc_mask_square",
            .provenance = Provenance::MockEnc, .tag = key.key_id(), .count = 1, .digest = enc_q.digest()});
    RowState r{std::move(enc_dr), std::move(enc_q), {}, {}, {}, {}, {}, {}, {}, {}};
    r.sv = s.sample_mask(Phase::Offline, Party::Server, s.next_mask_id(Party::Server), 1);
    r.sb = s.sample_mask(Phase::Offline, Party::Server, s.next_mask_id(Party::Server), n);
    r.rv_id = s.next_mask_id(Party::Client);
    r.rv = s.sample_mask(Phase::Offline, Party::Client, r.rv_id, 1);
    r.rb_id = s.next_mask_id(Party::Client);
    r.rb = s.sample_mask(Phase::Offline, Party::Client, r.rb_id, n);
    r.ro = s.sample_mask(Phase::Offline, Party::Client, s.next_mask_id(Party::Client), n);
    for (auto& v : r.ro) v &= ring_mask(w);
    Bits a;
    push_bits(a, r.rv[0], wd);
    for (auto v : r.rb) push_bits(a, v, wbd);
    for (auto v : r.ro) push_bits(a, v, w);
    r.gc = std::make_unique<GcRound>(s, circuit);
    r.gc->offline(a);
    st.push_back(std::move(r));
  }

  // Online, all rows.
  SharedMatrix y{x.rows, n, w, std::vector<std::uint64_t>(x.rows * n), std::vector<std::uint64_t>(x.rows * n)};
  const auto bv = to_ring(beta);
  for (std::size_t row = 0; row < x.rows; ++row) {
    RowState& r = st[row];
    // Server: its own centred share, then the homomorphic cross terms.
    const auto ds = centred(&x.server[row * n]);
    const MockCiphertext enc_v = inner_product(r.enc_dr, ds) * 2 + r.enc_q - r.sv;
    const MockCiphertext enc_b = r.enc_dr * bv - r.sb;
    t.send({.phase = Phase::Online, .from = Party::Server, .to = Party::Client, .kind = "layernorm.enc_variance_share",
            .provenance = Provenance::MockEnc, .tag = key.key_id(), .count = 1, .digest = enc_v.digest()});
    t.send({.phase = Phase::Online, .from = Party::Server, .to = Party::Client, .kind = "layernorm.enc_scaled_share",
            .provenance = Provenance::MockEnc, .tag = key.key_id(), .count = n, .digest = enc_b.digest()});

    // Client: open, re-mask with its circuit masks, return.
    const std::uint64_t v = key.decrypt(enc_v)[0] - r.rv[0];
    auto u = key.decrypt(enc_b);
    for (unsigned i = 0; i < n; ++i) u[i] -= r.rb[i];
    t.send({.phase = Phase::Online, .from = Party::Client, .to = Party::Server, .kind = "layernorm.variance_masked",
            .provenance = Provenance::Masked, .tag = r.rv_id, .ring_bits = 64, .payload = {v}});
    t.send({.phase = Phase::Online, .from = Party::Client, .to = Party::Server, .kind = "layernorm.scaled_masked",
            .provenance = Provenance::Masked, .tag = r.rb_id, .ring_bits = 64, .payload = u});

    // Server: D - R_v and beta d - R_b, then the reduced circuit.
    std::uint64_t var_b = r.sv[0] + v;
    for (auto d : ds) var_b += d * d;
    Bits b;
    push_bits(b, var_b, wd);
    for (unsigned i = 0; i < n; ++i) push_bits(b, bv[i] * ds[i] + r.sb[i] + u[i], wbd);
    const Bits out = r.gc->online(b);
    for (unsigned i = 0; i < n; ++i) {
      y.client[row * n + i] = r.ro[i];
      y.server[row * n + i] = (read_bits(out, i * w, w) + static_cast<std::uint64_t>(gamma[i])) & ring_mask(w);
    }
  }
  return y;
}

// ---- end-to-end run ----------------------------------------------------------

namespace {

double uniform01(Prg& p) { return static_cast<double>((p.next_u64() >> 11) + 1) * 0x1.0p-53; }

double gaussian(Prg& p) {
  const double u1 = uniform01(p), u2 = uniform01(p);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<double> float_layernorm(const FixedPointFormat& f, const std::int64_t* x, const std::vector<std::int64_t>& beta,
                                    const std::vector<std::int64_t>& gamma) {
  const std::size_t n = beta.size();
  double mean = 0, var = 0;
  for (std::size_t i = 0; i < n; ++i) mean += f.to_double(x[i]);
  mean /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) var += (f.to_double(x[i]) - mean) * (f.to_double(x[i]) - mean);
  var /= static_cast<double>(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = var > 0 ? (f.to_double(x[i]) - mean) / std::sqrt(var) : 0.0;
    y[i] = f.to_double(beta[i]) * z + f.to_double(gamma[i]);
  }
  return y;
}

}  // namespace

LayerNormRun run_layernorm_protocol(const LayerNormConfig& cfg, std::size_t rows, const ProtocolOptions& o) {
  cfg.validate();
  const FixedPointFormat& f = cfg.fmt;
  LayerNormRun run;
  run.cfg = cfg;
  run.rows = rows;

  // Plaintext data of both parties, drawn apart from the masks.
  Prg data(o.seed ^ 0x5eed5eed5eed5eedull);
  run.x = FixedMatrix::zeros(rows, cfg.n, f);
  for (auto& v : run.x.raw) v = f.from_double(1.5 * gaussian(data));
  const std::int64_t one = std::int64_t{1} << f.frac_bits;
  for (unsigned i = 0; i < cfg.n; ++i) {
    run.beta.push_back(static_cast<std::int64_t>(data.next_u64() % static_cast<std::uint64_t>(2 * one + 1)) - one);
    run.gamma.push_back(static_cast<std::int64_t>(data.next_u64() % static_cast<std::uint64_t>(2 * one + 1)) - one);
  }

  Session s(o);
  const SharedMatrix x2 = linear_layer(s, run.x, FixedMatrix::identity(cfg.n, f));
  const SharedMatrix y = layernorm_offload(s, x2, run.beta, run.gamma, cfg);
  run.output = y.recombine();

  for (std::size_t r = 0; r < rows; ++r) {
    const std::vector<std::int64_t> xr(run.x.raw.begin() + r * cfg.n, run.x.raw.begin() + (r + 1) * cfg.n);
    const auto model = layernorm_model(cfg, xr, run.beta, run.gamma);
    const auto ref = float_layernorm(f, xr.data(), run.beta, run.gamma);
    for (unsigned i = 0; i < cfg.n; ++i) {
      const std::int64_t got = run.output[r * cfg.n + i];
      if (got != model[i]) ++run.model_mismatches;
      run.max_ulp_vs_float = std::max(run.max_ulp_vs_float, std::abs(f.to_double(got) - ref[i]) / f.ulp());
    }
  }
  run.offload_and_gates = census(gen_layernorm(cfg, LayerNormVariant::Reduced)).and_count;
  run.full_gc_and_gates = census(gen_layernorm(cfg, LayerNormVariant::FullShared)).and_count;
  run.gc = s.gc();
  run.audit = audit(s.transcript());
  run.transcript_jsonl = s.transcript().to_jsonl();
  return run;
}

std::string LayerNormRun::report_json() const {
  ojson o;
  o["schema"] = "gcx.protocol.layernorm/1";
  o["format"] = cfg.fmt.describe();
  o["n"] = cfg.n;
  o["rows"] = rows;
  o["model_mismatches"] = model_mismatches;
  o["max_ulp_vs_float"] = max_ulp_vs_float;
  o["gc"] = {{"offload_and_per_row", offload_and_gates},
             {"full_gc_and_per_row", full_gc_and_gates},
             {"circuits", gc.circuits},
             {"and_gates", gc.and_gates},
             {"table_bytes", gc.table_bytes},
             {"labels", gc.label_count}};
  o["audit"] = ojson::parse(audit.to_json());
  return o.dump(2);
}

}  // namespace gcx
