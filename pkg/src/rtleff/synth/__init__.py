"""Synthesis backends and the timing/power estimator."""

from rtleff.synth.harness import (
    MockBackend,
    ParserSpec,
    StrategyHint,
    StrategyScript,
    SynthBackend,
    SynthOutcome,
    SynthStatus,
    extract_metric,
    list_strategies,
    load_backends,
    render_fixture,
    synthesize,
)

__all__ = [
    "MockBackend",
    "ParserSpec",
    "StrategyHint",
    "StrategyScript",
    "SynthBackend",
    "SynthOutcome",
    "SynthStatus",
    "extract_metric",
    "list_strategies",
    "load_backends",
    "render_fixture",
    "synthesize",
]
