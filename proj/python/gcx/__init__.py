"""Garbled-circuit toolkit: netlists, garbling, scheduling, accelerator model, protocol runs."""

from ._gcx import (  # noqa: F401
    ConfigError,
    Netlist,
    NetlistError,
    ProtocolError,
    SpecError,
    bench_run,
    garble_roundtrip,
    gen_adder,
    gen_gelu,
    gen_layernorm,
    gen_mul,
    gen_softmax,
    layernorm_protocol,
    schedule,
    simulate,
    xfbq_value,
)

__all__ = [name for name in dir() if not name.startswith("_")]
