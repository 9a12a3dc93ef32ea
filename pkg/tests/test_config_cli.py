import csv
import hashlib
import json
import math

import pytest
import yaml

from lattice_she import cli
from lattice_she.acceptance import CriterionResult
from lattice_she.config import DEFAULTS, content_hash, load, resolve
from lattice_she.errors import NumericalGuardError, PreconditionError


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _write(tmp_path, payload, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(payload if isinstance(payload, str) else yaml.safe_dump(payload), encoding="utf-8")
    return path


def test_defaults_and_merge():
    cfg = resolve({"simulate": {"n": 32}}, environ={})
    assert cfg["simulate"]["n"] == 32
    assert cfg["simulate"]["T"] == DEFAULTS["simulate"]["T"]
    assert cfg["kernel"] == {"family": "lazy"}
    assert resolve(None, environ={}) == resolve({}, environ={})


def test_unknown_and_mistyped_keys_rejected():
    with pytest.raises(PreconditionError, match="simulate"):
        resolve({"simulate": {"steps": 3}}, environ={})
    with pytest.raises(PreconditionError):
        resolve({"replicas": "many"}, environ={})
    with pytest.raises(PreconditionError):
        resolve({"noise": {"family": "cauchy"}}, environ={})
    with pytest.raises(PreconditionError):
        resolve(["not", "a", "mapping"], environ={})


def test_environment_overrides():
    cfg = resolve({"seed": 1}, environ={"LATTICE_SHE_SEED": "9", "LATTICE_SHE_OUTDIR": "elsewhere"})
    assert cfg["seed"] == 9 and cfg["output_dir"] == "elsewhere"
    with pytest.raises(PreconditionError):
        resolve({}, environ={"LATTICE_SHE_REPLICAS": "ten"})
    with pytest.raises(PreconditionError):
        resolve({}, environ={"LATTICE_SHE_THREADS": "0"})


def test_load_errors(tmp_path):
    with pytest.raises(PreconditionError, match="malformed"):
        load(_write(tmp_path, "seed: [1, 2\n"), environ={})
    with pytest.raises(PreconditionError, match="cannot read"):
        load(tmp_path / "missing.yaml", environ={})


def test_content_hash_is_order_independent():
    a = {"seed": 1, "kernel": {"family": "lazy", "p_stay": 0.5}}
    b = {"kernel": {"p_stay": 0.5, "family": "lazy"}, "seed": 1}
    assert content_hash(a) == content_hash(b)
    assert content_hash(a) != content_hash({**a, "seed": 2})


def test_malformed_config_exits_2_without_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    cfg = _write(tmp_path, {"simulate": {"bogus": 1}})
    assert cli.main(["simulate", str(cfg), "--output", str(out)]) == 2
    assert not out.exists()
    assert not list(tmp_path.glob(".stage-*"))
    assert "invalid configuration" in capsys.readouterr().err


def test_precondition_during_run_leaves_nothing(tmp_path):
    out = tmp_path / "out"
    cfg = _write(tmp_path, {"simulate": {"times": [2.0]}})
    assert cli.main(["simulate", str(cfg), "--output", str(out)]) == 2
    assert not out.exists() and not list(tmp_path.glob(".stage-*"))


def test_numerical_guard_exits_3(tmp_path, monkeypatch):
    def boom(cfg, out):
        raise NumericalGuardError("overflow")

    monkeypatch.setitem(cli.RUNNERS, "moments", boom)
    assert cli.main(["moments", "--output", str(tmp_path / "o")]) == 3
    assert not (tmp_path / "o").exists()


def test_failed_acceptance_exits_1(tmp_path, monkeypatch):
    import lattice_she.acceptance as acc

    monkeypatch.setattr(acc, "run_acceptance", lambda only, seed, threads: [CriterionResult(3, "x", False, {})])
    assert cli.main(["acceptance", "--output", str(tmp_path / "o")]) == 1
    payload = json.loads((tmp_path / "o" / "acceptance.json").read_text())
    assert payload["passed"] is False


def test_simulate_without_noise_reproduces_semigroup(tmp_path, monkeypatch):
    from lattice_she.walk_kernel import lazy_walk, nstep_pmf

    monkeypatch.delenv("LATTICE_SHE_SEED", raising=False)
    cfg = _write(tmp_path, {"replicas": 3, "simulate": {
        "n": 16, "sigma": {"name": "zero"}, "initial": {"variant": "dirac"}, "times": [1.0], "xs": [0.0, 0.5]}})
    out = tmp_path / "sim"
    assert cli.main(["simulate", str(cfg), "--output", str(out)]) == 0
    rows = _rows(out / "moments.csv")
    pm = nstep_pmf(lazy_walk(), 16)
    assert float(rows[0]["mean"]) == pytest.approx(4.0 * pm(0), abs=1e-14)
    assert float(rows[1]["mean"]) == pytest.approx(4.0 * pm(2), abs=1e-14)
    assert float(rows[0]["stderr_second_moment"]) == 0.0
    assert list(rows[0]) == list(cli.COLUMNS["simulate_moments"])
    assert len(_rows(out / "samples.csv")) == 6


def test_manifest_records_hashes(tmp_path):
    out = tmp_path / "llt"
    cfg = _write(tmp_path, {"llt_check": {"ns": [64, 128, 256]}})
    assert cli.main(["llt-check", str(cfg), "--output", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["artifacts"]) == {"llt.csv", "llt_fit.json"}
    for name, digest in manifest["artifacts"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert manifest["config_sha256"] == content_hash(manifest["config"])
    rows = _rows(out / "llt.csv")
    assert [int(r["n"]) for r in rows] == [64, 128, 256]
    assert all(float(r["sup_error"]) > 0 for r in rows)


def test_polymer_coupling_and_moments_runs(tmp_path):
    cfg = _write(tmp_path, {"replicas": 8, "polymer": {"ns": [16], "endpoint_environments": 1},
                            "coupling_check": {"ns": [256], "samples": 1024},
                            "moments": {"ns": [64], "betas": [0.5]}})
    for sub in ("polymer", "coupling-check", "moments"):
        assert cli.main([sub, str(cfg), "--output", str(tmp_path / sub)]) == 0
    poly = _rows(tmp_path / "polymer" / "moments.csv")
    assert int(poly[0]["environments"]) == 8
    law = _rows(tmp_path / "polymer" / "endpoint.csv")
    assert math.fsum(float(r["scaled_probability"]) for r in law) / 4.0 == pytest.approx(1.0)
    coup = _rows(tmp_path / "coupling-check" / "coupling.csv")
    assert int(coup[0]["time_block"]) == 9
    mom = _rows(tmp_path / "moments" / "moments.csv")
    assert float(mom[0]["rel_err"]) < 0.05


def test_outputs_are_byte_stable(tmp_path):
    cfg = _write(tmp_path, {"replicas": 16, "simulate": {"n": 32, "sigma": {"name": "identity"},
                                                         "initial": {"variant": "constant", "value": 1.0}}})
    for d in ("a", "b"):
        assert cli.main(["simulate", str(cfg), "--output", str(tmp_path / d)]) == 0
    for name in ("samples.csv", "moments.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
