import pytest

from sebd.channels import NoiseModel
from sebd.lightcone import build_lattice, random_instance
from sebd.sampler import RunConfig, run_trajectory
from sebd.serialize import (
    PROBABILITY_SCHEMA,
    SerializeError,
    format_sample_record,
    load_circuit,
    parse_sample_record,
    read_csv,
    save_circuit,
    write_csv,
)


def small_circuit(seed=0):
    lat = build_lattice("square", 2, 3)
    noise = NoiseModel("dephasing", 0.1)
    return random_instance(lat, "ABC", "fsim", noise, seed)


class TestCsv:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "t.csv"
        rows = [[0.02, 8, "1.5"], [0.05, 12, "0.7"]]
        write_csv(p, PROBABILITY_SCHEMA, ["epsilon", "L_x", "value"], rows)
        schema, header, back = read_csv(p, expect_schema=PROBABILITY_SCHEMA)
        assert schema == PROBABILITY_SCHEMA
        assert header == ["epsilon", "L_x", "value"]
        assert back == [["0.02", "8", "1.5"], ["0.05", "12", "0.7"]]

    def test_schema_line_first(self, tmp_path):
        p = tmp_path / "t.csv"
        write_csv(p, "sebd.x.v1", ["a"], [[1]])
        assert p.read_text().splitlines()[0] == "# schema=sebd.x.v1"

    def test_schema_mismatch_and_missing(self, tmp_path):
        p = tmp_path / "t.csv"
        write_csv(p, "sebd.x.v1", ["a"], [[1]])
        with pytest.raises(SerializeError, match="expected"):
            read_csv(p, expect_schema="sebd.y.v1")
        q = tmp_path / "plain.csv"
        q.write_text("a,b\n1,2\n")
        with pytest.raises(SerializeError, match="schema"):
            read_csv(q)


class TestSampleRecords:
    def test_round_trip_real_trajectory(self):
        cfg = RunConfig(small_circuit(), unravel_form="weak-optimal", master_seed=9)
        rec = run_trajectory(cfg, 3)
        line = format_sample_record(rec)
        seed, groups, trunc, chi = parse_sample_record(line)
        assert seed == 3
        assert len(groups) == 3 and all(len(g) == 2 for g in groups)
        assert "".join(groups) == "".join(str(b) for b in rec.bits_scan_order())
        assert trunc == pytest.approx(rec.trunc_total, rel=1e-7, abs=1e-12)
        assert chi == rec.chi_max_seen

    def test_failed_record_rejected(self):
        cfg = RunConfig(small_circuit(), unravel_form="weak-optimal")
        rec = run_trajectory(cfg, 0)
        broken = type(rec)(
            seed=rec.seed, z=rec.z, m=rec.m, failed="truncation overflow"
        )
        with pytest.raises(SerializeError, match="failed"):
            format_sample_record(broken)

    def test_malformed_lines(self):
        for bad in ("", "1 01", "x 01 10 0.0 4", "1 01 2a 0.0 4", "1 0.0 4"):
            with pytest.raises(SerializeError):
                parse_sample_record(bad)


class TestCircuitFiles:
    def test_round_trip(self, tmp_path):
        c = small_circuit(seed=5)
        p = tmp_path / "inst.json"
        save_circuit(p, c)
        back = load_circuit(p)
        assert back.schedule == c.schedule
        assert back.lattice.sites == c.lattice.sites
        assert back.noise.kind == "dephasing"
        assert back.noise.epsilon == 0.1
        for la, lb in zip(c.layers, back.layers):
            for (a1, b1, m1), (a2, b2, m2) in zip(la.gates, lb.gates):
                assert (a1, b1) == (a2, b2)
                assert m1 == pytest.approx(m2, abs=1e-15)

    def test_format_tag_enforced(self, tmp_path):
        p = tmp_path / "x.json"
        p.write_text("{}")
        with pytest.raises(SerializeError, match="sebd-circuit2d"):
            load_circuit(p)

    def test_deterministic_bytes(self, tmp_path):
        c = small_circuit(seed=5)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_circuit(a, c)
        save_circuit(b, c)
        assert a.read_bytes() == b.read_bytes()
