import json

import numpy as np
import pytest

from pb2 import trialstore
from pb2.core.errors import ParseError, ResumeMismatch, StorageError
from pb2.schemas.run import RunConfig
from pb2.schemas.trial import TrialRecord


def record(t=1, b=0, y=0.5, event="step", **kwargs):
    doc = {
        "t": t,
        "b": b,
        "x": {"lr": 0.01},
        "u": [0.5],
        "y": y,
        "F": -10.0,
        "event": event,
        "seed": 3,
        "policy": "pbt",
    }
    doc.update(kwargs)
    return TrialRecord(**doc)


@pytest.fixture
def config():
    return RunConfig(policy="pbt", B=2, T=10, seed=3)


class TestTrialRecord:
    def test_exploit_needs_source(self):
        with pytest.raises(ValueError):
            record(event="exploit")
        assert record(event="exploit", copied_from=1).copied_from == 1

    def test_unknown_event(self):
        with pytest.raises(ValueError):
            record(event="mutate")


class TestAppendAndRead:
    def test_append_then_load(self, tmp_path):
        path = tmp_path / "log.jsonl"
        records = [record(t=1, b=0), record(t=1, b=1), record(t=2, b=0, event="exploit", copied_from=1)]
        for r in records:
            trialstore.append(path, r)
        assert trialstore.load(path) == records

    def test_one_line_per_record(self, tmp_path):
        path = tmp_path / "log.jsonl"
        trialstore.append_many(path, [record(b=0), record(b=1)])
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        assert json.loads(lines[1])["b"] == 1

    def test_floats_round_trip_exactly(self, tmp_path, rng):
        path = tmp_path / "log.jsonl"
        values = rng.normal(scale=1e3, size=200).tolist() + [1e-300, -2.5e-17, 1 / 3]
        trialstore.append_many(path, [record(b=i, y=v) for i, v in enumerate(values)])
        assert [r.y for r in trialstore.load(path)] == values

    def test_empty_append_writes_nothing(self, tmp_path):
        path = tmp_path / "log.jsonl"
        trialstore.append_many(path, [])
        assert not path.exists()

    def test_creates_parent_directories(self, tmp_path):
        path = tmp_path / "a" / "b" / "log.jsonl"
        trialstore.append(path, record())
        assert path.exists()

    def test_unwritable_location(self, tmp_path):
        target = tmp_path / "dir.jsonl"
        target.mkdir()
        with pytest.raises(StorageError):
            trialstore.append(target, record())


class TestReadLog:
    def test_header_round_trip(self, tmp_path, config):
        path = tmp_path / "log.jsonl"
        trialstore.write_header(path, trialstore.header_for(config))
        trialstore.append(path, record())
        header, records = trialstore.read_log(path)
        assert header.config_hash == config.config_hash()
        assert (header.seed, header.B, header.policy) == (3, 2, "pbt")
        assert records == [record()]
        assert trialstore.read_header(path) == header

    def test_headerless_log(self, tmp_path):
        path = tmp_path / "log.jsonl"
        trialstore.append(path, record())
        assert trialstore.read_header(path) is None

    def test_truncated_tail_skipped(self, tmp_path, caplog):
        path = tmp_path / "log.jsonl"
        trialstore.append_many(path, [record(b=0), record(b=1)])
        with open(path, "a") as fh:
            fh.write(trialstore.encode(record(b=2))[:25])
        assert len(trialstore.load(path)) == 2
        assert "truncated" in caplog.text

    def test_corrupt_line_reports_line_number(self, tmp_path):
        path = tmp_path / "log.jsonl"
        trialstore.append(path, record(b=0))
        with open(path, "a") as fh:
            fh.write("{not json}\n")
        trialstore.append(path, record(b=1))
        with pytest.raises(ParseError) as info:
            trialstore.load(path)
        assert info.value.line_number == 2

    def test_invalid_record_reports_line_number(self, tmp_path):
        path = tmp_path / "log.jsonl"
        with open(path, "w") as fh:
            fh.write(json.dumps({"t": 1}) + "\n")
        with pytest.raises(ParseError) as info:
            trialstore.load(path)
        assert info.value.line_number == 1

    def test_invalid_utf8_reports_line_number(self, tmp_path):
        path = tmp_path / "log.jsonl"
        trialstore.append(path, record(b=0))
        with open(path, "ab") as fh:
            fh.write(trialstore.encode(record(b=1)).encode().replace(b'"pbt"', b'"pbt\xff"'))
        trialstore.append(path, record(b=2))
        with pytest.raises(ParseError) as info:
            trialstore.load(path)
        assert info.value.line_number == 2

    def test_duplicate_record_reports_line_number(self, tmp_path):
        path = tmp_path / "log.jsonl"
        trialstore.append_many(path, [record(t=1, b=0), record(t=1, b=1), record(t=1, b=0, y=9.0)])
        with pytest.raises(ParseError, match="duplicate") as info:
            trialstore.load(path)
        assert info.value.line_number == 3

    def test_same_round_different_events(self, tmp_path):
        path = tmp_path / "log.jsonl"
        trialstore.append_many(
            path,
            [record(t=2, b=0), record(t=2, b=0, event="exploit", copied_from=1), record(t=2, b=0, event="explore")],
        )
        assert len(trialstore.load(path)) == 3

    def test_empty_file(self, tmp_path):
        path = tmp_path / "log.jsonl"
        path.touch()
        assert trialstore.read_log(path) == (None, [])


class TestRepair:
    def test_cuts_partial_line(self, tmp_path):
        path = tmp_path / "log.jsonl"
        trialstore.append(path, record())
        intact = path.read_bytes()
        with open(path, "ab") as fh:
            fh.write(b'{"t": 2, "b"')
        assert trialstore.repair(path) == len(b'{"t": 2, "b"')
        assert path.read_bytes() == intact

    def test_clean_file_untouched(self, tmp_path):
        path = tmp_path / "log.jsonl"
        trialstore.append(path, record())
        assert trialstore.repair(path) == 0

    def test_missing_file(self, tmp_path):
        assert trialstore.repair(tmp_path / "nope.jsonl") == 0


class TestResumeState:
    def test_rebuilds_last_complete_round(self, config):
        records = [
            record(t=1, b=0, F=1.0),
            record(t=1, b=1, F=2.0),
            record(t=2, b=0, F=3.0),
            record(t=2, b=1, F=4.0),
            record(t=2, b=0, F=4.0, event="exploit", copied_from=1),
            record(t=2, b=0, F=4.0, event="explore", x={"lr": 0.02}),
            record(t=3, b=0, F=5.0),
        ]
        state, next_round = trialstore.resume_state(records, config)
        assert next_round == 3
        assert state.round == 2
        assert state.agent(0).config == {"lr": 0.02}
        assert state.agent(0).lineage == [(2, 1)]
        assert [a.score for a in state.agents] == [4.0, 4.0]
        assert all(a.trainer_state is None for a in state.agents)

    def test_empty_log_starts_at_round_one(self, config):
        _, next_round = trialstore.resume_state([], config)
        assert next_round == 1

    def test_header_hash_mismatch(self, config):
        other = RunConfig(policy="pbt", B=2, T=10, seed=4)
        with pytest.raises(ResumeMismatch):
            trialstore.resume_state([], config, trialstore.header_for(other))

    def test_agent_outside_population(self, config):
        with pytest.raises(ResumeMismatch):
            trialstore.resume_state([record(b=5)], config)

    def test_smaller_population_rejected(self):
        records = [record(t=t, b=b) for t in (1, 2) for b in (0, 1)]
        with pytest.raises(ResumeMismatch, match="B=4"):
            trialstore.resume_state(records, RunConfig(policy="pbt", B=4, T=10, seed=3))

    def test_missing_round_rejected(self, config):
        records = [record(t=t, b=b) for t in (1, 3) for b in (0, 1)]
        with pytest.raises(ResumeMismatch):
            trialstore.resume_state(records, config)

    def test_partial_last_round_allowed(self, config):
        records = [record(t=1, b=0), record(t=1, b=1), record(t=2, b=1)]
        state, next_round = trialstore.resume_state(records, config)
        assert next_round == 2
        assert state.round == 1

    def test_other_seed(self, config):
        with pytest.raises(ResumeMismatch):
            trialstore.resume_state([record(seed=9)], config)

    def test_hash_ignores_horizon(self):
        a = RunConfig(policy="pbt", B=2, T=10, seed=3)
        b = RunConfig(policy="pbt", B=2, T=50, seed=3)
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != RunConfig(policy="pb2", B=2, T=10, seed=3).config_hash()
