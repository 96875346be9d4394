#pragma once

// Shared generators for tests.

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "gcx/netlist.hpp"

namespace gcx::testing {

struct RandomNetlistOptions {
  std::uint32_t inputs_a = 8;
  std::uint32_t inputs_b = 8;
  std::uint32_t gates = 100;
  std::uint32_t outputs = 8;
  double and_fraction = 0.4;
  double inv_fraction = 0.1;
  // Inputs are drawn from the last `locality` wires most of the time, which
  // yields deep circuits instead of shallow random fans.
  std::uint32_t locality = 64;
};

inline Netlist random_netlist(std::mt19937_64& rng, const RandomNetlistOptions& o) {
  const std::uint32_t nin = o.inputs_a + o.inputs_b;
  std::vector<Gate> gates;
  gates.reserve(o.gates);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto pick = [&](std::uint32_t defined) -> WireId {
    if (u01(rng) < 0.8 && defined > o.locality) {
      std::uniform_int_distribution<std::uint32_t> d(defined - o.locality, defined - 1);
      return d(rng);
    }
    std::uniform_int_distribution<std::uint32_t> d(0, defined - 1);
    return d(rng);
  };
  for (std::uint32_t i = 0; i < o.gates; ++i) {
    const std::uint32_t defined = nin + i;
    const WireId out = nin + i;
    const double r = u01(rng);
    if (r < o.inv_fraction) {
      gates.push_back({GateKind::Inv, pick(defined), kNoWire, out});
    } else if (r < o.inv_fraction + o.and_fraction) {
      gates.push_back({GateKind::And, pick(defined), pick(defined), out});
    } else {
      gates.push_back({GateKind::Xor, pick(defined), pick(defined), out});
    }
  }
  std::vector<WireId> candidates;
  for (std::uint32_t i = 0; i < o.gates; ++i) candidates.push_back(nin + i);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  const std::uint32_t nout = std::min(o.outputs, o.gates);
  std::vector<WireId> outs(candidates.begin(), candidates.begin() + nout);
  return Netlist::from_raw(o.inputs_a, o.inputs_b, outs, gates);
}

inline Bits random_bits(std::mt19937_64& rng, std::size_t n) {
  Bits b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng() & 1);
  return b;
}

/// Little-endian bit expansion of `v` into `width` bits appended to `out`.
inline void push_bits(Bits& out, std::uint64_t v, unsigned width) {
  for (unsigned i = 0; i < width; ++i) out.push_back(static_cast<std::uint8_t>((v >> i) & 1));
}

inline std::uint64_t bits_value(const Bits& b, std::size_t offset, unsigned width) {
  std::uint64_t v = 0;
  for (unsigned i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(b[offset + i] & 1) << i;
  return v;
}

}  // namespace gcx::testing

namespace gcx::testing {

/*
 * Evaluates a netlist on many integer-valued input tuples, 64 at a time via
 * bit-sliced evaluation. Inputs and outputs are split into little-endian
 * fields of the given widths.
 */
class FieldRunner {
 public:
  FieldRunner(const Netlist& n, std::vector<unsigned> in_widths, std::vector<unsigned> out_widths)
      : n_(n), in_(std::move(in_widths)), out_(std::move(out_widths)) {}

  std::vector<std::vector<std::uint64_t>> run(const std::vector<std::vector<std::uint64_t>>& tuples) const {
    std::vector<std::vector<std::uint64_t>> results;
    results.reserve(tuples.size());
    for (std::size_t base = 0; base < tuples.size(); base += 64) {
      const std::size_t lanes = std::min<std::size_t>(64, tuples.size() - base);
      std::vector<std::uint64_t> words(n_.input_count(), 0);
      for (std::size_t l = 0; l < lanes; ++l) {
        std::size_t pos = 0;
        for (std::size_t f = 0; f < in_.size(); ++f) {
          const std::uint64_t v = tuples[base + l][f];
          for (unsigned i = 0; i < in_[f]; ++i, ++pos)
            if (i < 64 && ((v >> i) & 1)) words[pos] |= 1ull << l;
        }
      }
      const auto out = eval_plain_packed(n_, words);
      for (std::size_t l = 0; l < lanes; ++l) {
        std::vector<std::uint64_t> fields;
        std::size_t pos = 0;
        for (unsigned w : out_) {
          std::uint64_t v = 0;
          for (unsigned i = 0; i < w; ++i, ++pos)
            if (i < 64) v |= ((out[pos] >> l) & 1) << i;
          fields.push_back(v);
        }
        results.push_back(std::move(fields));
      }
    }
    return results;
  }

  std::vector<std::uint64_t> run_one(const std::vector<std::uint64_t>& tuple) const { return run({tuple})[0]; }

 private:
  Netlist n_;
  std::vector<unsigned> in_;
  std::vector<unsigned> out_;
};

inline std::uint64_t mask_bits(unsigned w) { return w >= 64 ? ~0ull : (1ull << w) - 1; }

inline std::int64_t as_signed(std::uint64_t v, unsigned w) {
  if (w < 64 && ((v >> (w - 1)) & 1)) return static_cast<std::int64_t>(v | ~mask_bits(w));
  return static_cast<std::int64_t>(v);
}

}  // namespace gcx::testing
