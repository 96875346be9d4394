import json
import random

import pytest

import gcx


def bits(value, width):
    return [(value >> i) & 1 for i in range(width)]


def value(bs):
    return sum(b << i for i, b in enumerate(bs))


def test_adder_roundtrip_through_bristol():
    add = gcx.gen_adder(8)
    again = gcx.Netlist.from_bristol(add.to_bristol())
    assert again == add
    assert add.hash() == again.hash()
    assert value(add.eval(bits(200, 8) + bits(100, 8))) == (300 & 0xFF)


def test_garbled_multiply_matches_integers():
    mul = gcx.gen_mul(8, style="xfbq", full_width=True)
    rng = random.Random(3)
    ands = mul.census()["and"]
    for _ in range(20):
        a, b = rng.randrange(256), rng.randrange(256)
        r = gcx.garble_roundtrip(mul, bits(a, 8) + bits(b, 8), seed=rng.randrange(1 << 32))
        assert value(r["outputs"]) == a * b
        assert r["table_bytes"] == 32 * ands
        assert r["garble_hash_calls"] == 4 * ands
        assert r["eval_hash_calls"] == 2 * ands


def test_xfbq_value_law():
    for a in range(256):
        assert gcx.xfbq_value(a, 8) == a + (1 - (a & 1))


def test_schedule_and_simulation():
    gelu = gcx.gen_gelu()
    sched = json.loads(gcx.schedule(gelu, mode="cpfe"))
    assert sched["mode"] == "cpfe"
    assert sum(len(c) for c in sched["per_core"]) > 0
    inputs = bits(0x1234, 16)
    r = gcx.simulate(gelu, "sr", inputs)
    assert r["outputs"] == gelu.eval(inputs)
    stats = json.loads(r["stats_json"])
    assert stats["total_cycles"] > 0


def test_layernorm_protocol_report():
    rep = json.loads(gcx.layernorm_protocol(n=4, rows=8, seed=1))
    assert rep["audit"]["pass"] is True
    leak = json.loads(gcx.layernorm_protocol(n=4, rows=8, seed=1, inject_plain=True))
    assert leak["audit"]["pass"] is False


def test_bad_inputs_raise():
    with pytest.raises(ValueError):
        gcx.Netlist.from_bristol("not a circuit")
    with pytest.raises(ValueError):
        gcx.bench_run("[[benchmark]]\nname = \"x\"\nfunction = \"nope\"\n")
    with pytest.raises(ValueError):
        gcx.garble_roundtrip(gcx.gen_adder(4), [0, 1])
