from __future__ import annotations

import pytest

from rtleff.errors import ConfigMismatch
from rtleff.records import Record, RecordLog, config_hash, read_records


def test_config_hash_is_order_insensitive():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_lines_are_self_describing(tmp_path):
    log = RecordLog(tmp_path / "r.jsonl", "h1")
    log.append("sim", "k1", {"status": "Pass"})
    line = (tmp_path / "r.jsonl").read_text().splitlines()[0]
    assert Record.from_line(line) == Record("sim", "k1", {"status": "Pass"}, "h1")


def test_duplicate_key_keeps_first(tmp_path):
    log = RecordLog(tmp_path / "r.jsonl", "h")
    log.append("s", "k", {"v": 1})
    assert log.append("s", "k", {"v": 2}).payload == {"v": 1}
    assert len(read_records(tmp_path / "r.jsonl")) == 1


def test_torn_tail_is_dropped_on_resume(tmp_path):
    p = tmp_path / "r.jsonl"
    log = RecordLog(p, "h")
    for i in range(3):
        log.append("s", str(i), {"i": i})
    data = p.read_text()
    p.write_text(data[: len(data) - 7])
    assert len(read_records(p)) == 2
    again = RecordLog(p, "h")
    assert len(again) == 2 and not again.has("s", "2")
    again.append("s", "2", {"i": 2})
    assert [r.key for r in read_records(p)] == ["0", "1", "2"]


def test_config_mismatch(tmp_path):
    p = tmp_path / "r.jsonl"
    RecordLog(p, "aaa").append("s", "k", {})
    with pytest.raises(ConfigMismatch):
        RecordLog(p, "bbb")
    fresh = RecordLog(p, "bbb", resume=False)
    assert len(fresh) == 0
