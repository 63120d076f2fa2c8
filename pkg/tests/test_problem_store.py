from __future__ import annotations

import shutil
from dataclasses import replace
from pathlib import Path

import pytest

from rtleff.errors import DuplicateId, HeaderMismatch, InvalidBundle, MalformedManifest, MissingComponent
from rtleff.problem_store import (
    ThresholdPolicy,
    load_bundle,
    load_manifest,
    load_suite,
    serialize_bundle,
    validate_bundle,
)
from rtleff.types import Design, Metric, MetricVector

IDS = [
    "p017_trailing_zeros",
    "p060_mips_alu",
    "p068_sequence_detector",
    "p087_shift_enable",
    "p104_conway_life",
]


def _copy_bundle(suite_dir: Path, name: str, dest: Path) -> Path:
    out = dest / name
    shutil.copytree(suite_dir / name, out)
    return out


def test_load_p017(suite_dir):
    b = load_bundle(suite_dir / "p017_trailing_zeros")
    assert b.id == "p017_trailing_zeros"
    assert b.is_sequential is False
    assert b.difficulty == "Easy"
    assert b.top_name == "trailing_zeros"
    assert set(b.header_ports) == {"din", "dout"}
    assert b.references.aliases == ()


def test_alias_is_recorded(suite):
    alu = next(b for b in suite if b.id == "p060_mips_alu")
    assert alu.references.aliases == (("area", "power"),)
    assert alu.references.canonical_design(Metric.POWER) is Design.OPT_AREA
    assert alu.unique_designs() == [Design.UNOPT, Design.OPT_AREA, Design.OPT_DELAY]
    assert alu.references.source("power") == alu.references.source("area")


def test_suite_is_sorted_and_complete(suite):
    assert [b.id for b in suite] == IDS


def test_suite_is_order_insensitive(tmp_path, suite_dir):
    for name in IDS:
        _copy_bundle(suite_dir, name, tmp_path)
    (tmp_path / "suite.toml").write_text(
        'suite_name = "shuffled"\nbundles = [' + ", ".join(f'"{n}"' for n in reversed(IDS)) + "]\n"
    )
    assert load_suite(tmp_path) == load_suite(suite_dir)


def test_empty_suite_is_valid(tmp_path):
    (tmp_path / "suite.toml").write_text("bundles = []\n")
    assert load_suite(tmp_path) == []


def test_duplicate_id_rejected(tmp_path, suite_dir):
    _copy_bundle(suite_dir, "p017_trailing_zeros", tmp_path)
    (tmp_path / "suite.toml").write_text('bundles = ["p017_trailing_zeros", "p017_trailing_zeros"]\n')
    with pytest.raises(DuplicateId):
        load_suite(tmp_path)


def test_missing_testbench(tmp_path, suite_dir):
    d = _copy_bundle(suite_dir, "p017_trailing_zeros", tmp_path)
    (d / "testbench.v").unlink()
    with pytest.raises(MissingComponent) as ei:
        load_bundle(d)
    assert ei.value.component == "testbench"


def test_missing_manifest(tmp_path):
    with pytest.raises(MissingComponent) as ei:
        load_bundle(tmp_path)
    assert ei.value.component == "manifest"


@pytest.mark.parametrize("text", ["id = ", 'difficulty = "Easy"\n', 'id = "x"\ndifficulty = "Easy"\ntags = "a"\n'])
def test_malformed_manifest(tmp_path, suite_dir, text):
    d = _copy_bundle(suite_dir, "p017_trailing_zeros", tmp_path)
    (d / "manifest").write_text(text)
    with pytest.raises(MalformedManifest):
        load_bundle(d)


def test_suite_error_carries_bundle_context(tmp_path, suite_dir):
    d = _copy_bundle(suite_dir, "p087_shift_enable", tmp_path)
    (d / "prompt.txt").unlink()
    (tmp_path / "suite.toml").write_text('bundles = ["p087_shift_enable"]\n')
    with pytest.raises(MissingComponent, match="p087_shift_enable"):
        load_suite(tmp_path)


def test_header_port_mutation_detected(tmp_path, suite_dir, p017):
    bad = replace(p017, unoptimized_src=p017.unoptimized_src.replace("din", "data_in"))
    rep = validate_bundle(bad)
    assert not rep.ok
    assert [c.name for c in rep.failures] == ["header-consistency"]
    d = _copy_bundle(suite_dir, "p017_trailing_zeros", tmp_path)
    (d / "unopt.v").write_text(bad.unoptimized_src)
    with pytest.raises(HeaderMismatch):
        load_bundle(d)


def test_testbench_without_unopt_model(p017):
    tb = p017.testbench_src.replace("unopt_model", "other_model")
    rep = validate_bundle(replace(p017, testbench_src=tb))
    assert [c.name for c in rep.failures] == ["testbench-dual-instantiation"]


def test_testbench_missing_verdict_token(tmp_path, suite_dir):
    d = _copy_bundle(suite_dir, "p017_trailing_zeros", tmp_path)
    tb = (d / "testbench.v").read_text().replace("Simulation completed.", "done")
    (d / "testbench.v").write_text(tb)
    with pytest.raises(InvalidBundle) as ei:
        load_bundle(d)
    assert ei.value.check == "testbench-verdict-tokens"


def test_every_loaded_bundle_validates(suite):
    for b in suite:
        assert validate_bundle(b).ok, b.id


def test_serialize_round_trip(tmp_path, suite):
    for b in suite:
        out = serialize_bundle(b, tmp_path / b.id)
        again = load_bundle(out)
        assert again == b
        assert again.references.aliases == b.references.aliases


def test_manifest_thresholds(tmp_path, suite_dir):
    _copy_bundle(suite_dir, "p017_trailing_zeros", tmp_path)
    (tmp_path / "suite.toml").write_text(
        'bundles = ["p017_trailing_zeros"]\nthreshold_policy = "Explicit"\n'
        "[thresholds.p017_trailing_zeros]\nT = {area = 600.0}\nR = {area = 300.0, delay = 1.0}\n"
    )
    m = load_manifest(tmp_path)
    assert m.threshold_policy is ThresholdPolicy.EXPLICIT
    assert m.thresholds["p017_trailing_zeros"]["T"] == MetricVector(area=600.0)
    assert m.thresholds["p017_trailing_zeros"]["R"].delay == 1.0


def test_manifest_rejects_unknown_metric(tmp_path):
    (tmp_path / "suite.toml").write_text("bundles = []\n[thresholds.p]\nT = {speed = 1.0}\n")
    with pytest.raises(MalformedManifest):
        load_manifest(tmp_path)
