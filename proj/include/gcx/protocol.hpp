#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gcx/block.hpp"
#include "gcx/fixed_point.hpp"
#include "gcx/garble.hpp"
#include "gcx/layernorm.hpp"
#include "gcx/netlist.hpp"

namespace gcx {

/*
 * Two-party inference protocol, simulated in process.
 *
 * The client owns the input and the masks R*; the server owns the weights,
 * LayerNorm parameters and the masks S*. Every value that crosses between
 * them goes through the Transcript with a provenance tag, so an auditor can
 * check afterwards that nothing derived from the input crossed in the clear.
 *
 * Homomorphic encryption is mocked: a MockCiphertext keeps its plaintext
 * sealed and only the MockHe instance holding the key can open it. The laws
 * are exact, so this checks dataflow, not hardness. Oblivious transfer is an
 * oracle that hands the evaluator the labels for its own bits and logs the
 * grant; choice bits never appear in a payload.
 *
 * Shares live in Z_{2^64} and represent signed raw fixed-point values, so
 * integer statistics (row sums, squares) can be taken locally on shares.
 * The LayerNorm output is shared in Z_{2^w}, the width of its circuit.
 */

enum class Party : std::uint8_t { Client, Server };
enum class Provenance : std::uint8_t { Plain, Masked, MockEnc, GcLabels };
enum class Phase : std::uint8_t { Offline, Online };

std::string to_string(Party p);
std::string to_string(Provenance p);
std::string to_string(Phase p);

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FixedMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  FixedPointFormat fmt;
  std::vector<std::int64_t> raw;  // row-major

  static FixedMatrix zeros(std::size_t rows, std::size_t cols, const FixedPointFormat& fmt);
  static FixedMatrix identity(std::size_t n, const FixedPointFormat& fmt);  // raw weight 1 on the diagonal
  std::int64_t& at(std::size_t r, std::size_t c) { return raw[r * cols + c]; }
  std::int64_t at(std::size_t r, std::size_t c) const { return raw[r * cols + c]; }
  /// Throws ProtocolError on a size mismatch or an entry outside the format.
  void validate() const;
  bool operator==(const FixedMatrix&) const = default;
};

/// Additive shares: value = client + server mod 2^ring_bits, read as signed.
struct SharedMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  unsigned ring_bits = 64;
  std::vector<std::uint64_t> client;
  std::vector<std::uint64_t> server;

  std::vector<std::int64_t> recombine() const;
};

// ---- mock homomorphic encryption ----------------------------------------

class MockCiphertext {
 public:
  const std::string& key_id() const { return key_id_; }
  std::size_t size() const { return sealed_.size(); }
  std::uint64_t digest() const;  // identifies the ciphertext without revealing it

  friend MockCiphertext operator+(const MockCiphertext& a, const std::vector<std::uint64_t>& plain);
  friend MockCiphertext operator-(const MockCiphertext& a, const std::vector<std::uint64_t>& plain);
  friend MockCiphertext operator*(const MockCiphertext& a, const std::vector<std::uint64_t>& plain);
  friend MockCiphertext operator*(const MockCiphertext& a, std::uint64_t scalar);
  friend MockCiphertext operator+(const MockCiphertext& a, const MockCiphertext& b);
  friend MockCiphertext operator*(const MockCiphertext& a, const MockCiphertext& b);
  /// (rows x inner) sealed matrix times a plain (inner x cols) matrix.
  friend MockCiphertext matmul(const MockCiphertext& a, std::size_t rows, std::size_t inner,
                               const std::vector<std::uint64_t>& w, std::size_t cols);
  /// Sum of a[i] * plain[i] as a one-element ciphertext.
  friend MockCiphertext inner_product(const MockCiphertext& a, const std::vector<std::uint64_t>& plain);
  /// Elements [first, first + count).
  friend MockCiphertext slice(const MockCiphertext& a, std::size_t first, std::size_t count);

 private:
  friend class MockHe;
  MockCiphertext(std::string key, std::vector<std::uint64_t> v, std::uint64_t nonce)
      : key_id_(std::move(key)), sealed_(std::move(v)), nonce_(nonce) {}
  std::string key_id_;
  std::vector<std::uint64_t> sealed_;  // plaintext under seal, mod 2^64
  std::uint64_t nonce_ = 0;
};

class MockHe {
 public:
  explicit MockHe(std::string key_id) : key_id_(std::move(key_id)) {}
  const std::string& key_id() const { return key_id_; }
  MockCiphertext encrypt(std::vector<std::uint64_t> v);
  /// Throws ProtocolError for a ciphertext under another key.
  std::vector<std::uint64_t> decrypt(const MockCiphertext& c) const;

 private:
  std::string key_id_;
  std::uint64_t nonce_ = 0;
};

// ---- transcript ----------------------------------------------------------

struct Message {
  std::uint64_t seq = 0;
  Phase phase = Phase::Offline;
  Party from = Party::Client;
  Party to = Party::Server;
  std::string kind;
  Provenance provenance = Provenance::Plain;
  std::string tag;            // mask id, key id or circuit id
  unsigned ring_bits = 0;     // PLAIN / MASKED entries are mod 2^ring_bits
  std::uint64_t count = 0;    // logical entries (labels, tables, ciphertext slots)
  std::vector<std::uint64_t> payload;  // PLAIN / MASKED only
  std::uint64_t digest = 0;            // MOCK_ENC / GC_LABELS only
};

/// A party sampled fresh randomness; local, never crosses.
struct MaskDecl {
  std::uint64_t seq = 0;
  Phase phase = Phase::Offline;
  Party owner = Party::Client;
  std::string id;
  std::uint64_t count = 0;
};

class Transcript {
 public:
  const Message& send(Message m);
  void declare(Phase phase, Party owner, const std::string& id, std::uint64_t count);

  const std::vector<Message>& messages() const { return messages_; }
  const std::vector<MaskDecl>& declarations() const { return decls_; }
  /// One JSON object per line, in sequence order.
  std::string to_jsonl() const;

 private:
  std::uint64_t seq_ = 0;
  std::vector<Message> messages_;
  std::vector<MaskDecl> decls_;
};

struct AuditReport {
  bool pass = true;
  std::vector<std::string> violations;
  std::size_t messages = 0;
  std::map<std::string, std::size_t> by_provenance;
  // Uniformity of masked payloads: 4-bit digits of every masked entry, 16 bins.
  std::size_t samples = 0;
  double chi_square = 0;
  bool uniformity_checked = false;  // needs kMinSamples digits

  static constexpr std::size_t kMinSamples = 10000;
  static constexpr double kChiSquareCritical = 30.578;  // 15 degrees of freedom, p = 0.01

  std::string to_json() const;
};

/*
 * Checks: no PLAIN payload crosses parties; a MASKED payload names a mask its
 * sender declared earlier; every online message refers only to masks sampled
 * offline or to keys and circuits already sent offline; masked digits are
 * uniform (chi-square) once there are enough of them.
 */
AuditReport audit(const Transcript& t);

// ---- session and layers ----------------------------------------------------

struct ProtocolOptions {
  std::uint64_t seed = 0;
  bool zero_masks = false;    // test mode: every mask is zero
  bool inject_plain = false;  // negative test: the client also sends its input in the clear
};

struct GcTally {
  std::uint64_t circuits = 0;
  std::uint64_t and_gates = 0;
  std::uint64_t table_bytes = 0;
  std::uint64_t label_count = 0;
};

class Session {
 public:
  explicit Session(const ProtocolOptions& o);

  const ProtocolOptions& options() const { return opts_; }
  Transcript& transcript() { return transcript_; }
  const Transcript& transcript() const { return transcript_; }
  const GcTally& gc() const { return gc_; }

  // Building blocks for the layers.
  std::string next_mask_id(Party owner);
  std::vector<std::uint64_t> sample_mask(Phase phase, Party owner, const std::string& id, std::size_t count);
  std::string next_circuit_id();
  std::uint64_t garble_seed() { return client_rng_.next_u64(); }
  MockHe& client_key() { return client_key_; }
  void tally_gc(const FoldedNetlist& f, const GarbledCircuit& gc);

 private:
  ProtocolOptions opts_;
  Transcript transcript_;
  Prg client_rng_;
  Prg server_rng_;
  MockHe client_key_{"client-he"};
  unsigned client_masks_ = 0;
  unsigned server_masks_ = 0;
  unsigned circuits_ = 0;
  GcTally gc_;
};

/// X1 * W over raw integers, mod 2^64 (no rescaling).
std::vector<std::int64_t> linear_reference(const FixedMatrix& x, const FixedMatrix& w);

/*
 * Client input X1 (rows x k), server weights W (k x cols). Offline the client
 * sends Enc(R1) and receives Enc(R1 W - S); online it sends X1 - R1 and the
 * server computes (X1 - R1) W + S. Client share R2 = R1 W - S.
 */
SharedMatrix linear_layer(Session& s, const FixedMatrix& x1, const FixedMatrix& w);

/*
 * Element function f (A: x of fmt.total_bits, out: same width) on shared
 * input. The client garbles the share wrapper around f offline with its own
 * share and a fresh output mask R3; the server obtains labels for its share
 * online, evaluates and decodes f(X) - R3.
 */
SharedMatrix nonlinear_layer_gc(Session& s, const SharedMatrix& x, const Netlist& f, const FixedPointFormat& fmt);

/*
 * LayerNorm with the statistics outside the circuit. Per row:
 *   both parties centre their own share locally: d = ds + dr
 *   offline  client sends Enc(dr) and Enc(sum dr^2)
 *   online   server returns Enc(2<ds, dr> + sum dr^2 - S_v) and Enc(beta dr - S_b);
 *            the client opens them and sends back the values minus its GC masks
 *   the server now holds D - R_v and beta d - R_b; the reduced circuit, garbled
 *   offline with R_v, R_b and the output mask R_o, yields beta z - R_o;
 *   the server adds gamma to its share.
 */
SharedMatrix layernorm_offload(Session& s, const SharedMatrix& x, const std::vector<std::int64_t>& beta,
                               const std::vector<std::int64_t>& gamma, const LayerNormConfig& cfg);

// ---- end-to-end runs for the command line and tests ----------------------

struct LayerNormRun {
  LayerNormConfig cfg;
  std::size_t rows = 0;
  FixedMatrix x;
  std::vector<std::int64_t> beta, gamma;
  std::vector<std::int64_t> output;  // recombined, row-major
  std::size_t model_mismatches = 0;  // against layernorm_model
  double max_ulp_vs_float = 0;
  std::uint64_t offload_and_gates = 0;  // per row
  std::uint64_t full_gc_and_gates = 0;  // shared full circuit, per row
  GcTally gc;
  AuditReport audit;
  std::string transcript_jsonl;

  std::string report_json() const;
};

/// Input rows: X1 ~ N(0, 1.5) in fmt; beta, gamma uniform in [-1, 1]. Linear layer with identity weights first.
LayerNormRun run_layernorm_protocol(const LayerNormConfig& cfg, std::size_t rows, const ProtocolOptions& o);

}  // namespace gcx
