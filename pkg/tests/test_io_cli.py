import csv
import io
import json
import math

import numpy as np
import pytest

from certopt import cli
from certopt.harmonic import BesselSpectrumDistribution, ChebPoly, KernelMixture, TrigPoly
from certopt.io import (
    ProblemFormatError,
    generate_problem,
    load_problem,
    problem_digest,
    problem_from_dict,
    problem_to_dict,
    save_problem,
)


def sample_points(rng, f, n=100):
    x = rng.random((n, f.dim))
    return 2 * x - 1 if f.basis != "torus" else x


@pytest.mark.parametrize("kind", ["trig_poly", "cheb_poly", "kernel_mixture"])
def test_round_trip_is_exact(tmp_path, kind, rng):
    f, meta = generate_problem(kind, 2, 3, seed=11)
    path = tmp_path / "p.json"
    save_problem(f, path, meta)
    g, meta2 = load_problem(path)
    x = sample_points(rng, f)
    assert np.array_equal(f.evaluate(x), g.evaluate(x))
    assert meta2 == json.loads(json.dumps(meta))
    assert problem_digest(f) == problem_digest(g)


def test_digest_sensitive_to_coefficients():
    f, _ = generate_problem("trig_poly", 1, 3, seed=0)
    g = TrigPoly(f.freqs, f.coeffs * (1 + 2**-52), True, 1)
    assert problem_digest(f) != problem_digest(g)


def test_decimal_mirror_is_ignored():
    f, _ = generate_problem("cheb_poly", 1, 3, seed=0)
    data = problem_to_dict(f)
    for t in data["terms"]:
        t["decimal"] = 0.0
    g = problem_from_dict(data)
    np.testing.assert_array_equal(g.coeffs, f.coeffs)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(format="other"),
        lambda d: d.update(kind="spline"),
        lambda d: d.update(dim=0),
        lambda d: d["terms"][0].update(freq=[-1]),
        lambda d: d["terms"][0].update(re="not-a-float"),
        lambda d: d.pop("terms"),
    ],
)
def test_malformed_problems_rejected(mutate):
    data = problem_to_dict(TrigPoly.from_dict({(1,): 0.5, (-1,): 0.5}, dim=1))
    mutate(data)
    with pytest.raises(ProblemFormatError):
        problem_from_dict(data)


@pytest.mark.parametrize("kind,dim", [("trig_poly", 1), ("trig_poly", 3), ("cheb_poly", 2)])
def test_generator_norm(kind, dim):
    f, meta = generate_problem(kind, dim, 3, norm=1.0, seed=5)
    w = BesselSpectrumDistribution(np.ones(dim), f.basis).weight
    assert math.sqrt(f.hilbert_norm_sq(w)) == pytest.approx(1.0, abs=1e-12)
    assert meta["rkhs_norm"] == 1.0


def test_generator_mixture_norm():
    f, _ = generate_problem("kernel_mixture", 2, 0, norm=2.5, size=7, seed=1)
    assert f.rkhs_norm() == pytest.approx(2.5, rel=1e-12)


def test_single_center_mixture_norm():
    assert KernelMixture(np.array([[0.3]]), np.array([-1.7]), 2.0).rkhs_norm() == pytest.approx(1.7, rel=1e-14)


def test_generator_support_sizes():
    f, _ = generate_problem("trig_poly", 3, 5, seed=0)
    # one representative per +-w pair in the box, Hermitian completion doubles it
    assert len(f.freqs) == 11**3 - 1
    g, _ = generate_problem("trig_poly", 3, 5, n_terms=85, seed=0)
    assert len(g.freqs) == 2 * 85
    h, _ = generate_problem("cheb_poly", 2, 4, seed=0)
    assert len(h.freqs) == 5**2 - 1


def test_generator_deterministic():
    a, _ = generate_problem("trig_poly", 2, 3, seed=42)
    b, _ = generate_problem("trig_poly", 2, 3, seed=42)
    assert problem_digest(a) == problem_digest(b)


# -- CLI ------------------------------------------------------------------

FAST = ["--epochs", "30", "--batch-size", "128", "--samples", "4000", "--blocks", "1", "--block-size", "4",
        "--rank", "2", "--starts", "4"]


def run(capsys, argv):
    code = cli.main([str(a) for a in argv])
    return code, capsys.readouterr()


def problem_file(tmp_path, f, name="p.json"):
    path = tmp_path / name
    save_problem(f, path)
    return path


def test_generate_and_certify(tmp_path, capsys):
    path = tmp_path / "p.json"
    code, _ = run(capsys, ["generate", "--dim", 2, "--degree", 2, "--seed", 3, "-o", path])
    assert code == 0
    code, out = run(capsys, ["certify", path, "--seed", 1, *FAST])
    assert code == 0
    report = json.loads(out.out)
    cert = report["certificate"]
    assert cert["epsilon"] >= 0
    assert cert["lower_bound"] == pytest.approx(report["candidate"]["c"] - cert["epsilon"])
    assert float.fromhex(report["epsilon_hex"]) == cert["epsilon"]
    assert report["problem_digest"] == problem_digest(load_problem(path)[0])
    assert set(report["versions"]) >= {"certopt", "numpy", "python", "backend"}


def test_certify_deterministic(tmp_path, capsys):
    f, _ = generate_problem("trig_poly", 1, 3, seed=2)
    path = problem_file(tmp_path, f)
    reports = []
    for _ in range(2):
        code, out = run(capsys, ["certify", path, "--seed", 9, *FAST])
        assert code == 0
        reports.append(json.loads(out.out))
    a, b = reports
    assert a["certificate"] == b["certificate"] and a["candidate"] == b["candidate"]


def test_seed_from_environment(tmp_path, capsys, monkeypatch):
    f, _ = generate_problem("trig_poly", 1, 2, seed=2)
    path = problem_file(tmp_path, f)
    monkeypatch.setenv("CERTOPT_SEED", "7")
    _, out = run(capsys, ["certify", path, *FAST])
    env = json.loads(out.out)
    monkeypatch.delenv("CERTOPT_SEED")
    _, out = run(capsys, ["certify", path, "--seed", 7, *FAST])
    explicit = json.loads(out.out)
    assert env["seed"] == 7
    assert env["certificate"] == explicit["certificate"]


def test_constant_problem_zero_epsilon(tmp_path, capsys):
    path = problem_file(tmp_path, TrigPoly.from_dict({(0, 0): 1.25}, dim=2))
    code, out = run(capsys, ["certify", path, *FAST])
    report = json.loads(out.out)
    assert code == 0
    assert report["certificate"]["epsilon"] == 0.0
    assert report["certificate"]["lower_bound"] == 1.25


def test_invalid_problem_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, out = run(capsys, ["certify", bad, *FAST])
    assert code == cli.EXIT_INVALID and "error" in out.err
    code, _ = run(capsys, ["oracle", tmp_path / "missing.json"])
    assert code == cli.EXIT_INVALID


def test_out_of_reach_exit_code(tmp_path, capsys):
    path = problem_file(tmp_path, TrigPoly.from_dict({(200,): 0.5, (-200,): 0.5}, dim=1))
    code, out = run(capsys, ["certify", path, *FAST, "--epochs", 0])
    assert code == cli.EXIT_OUT_OF_REACH and "increase s" in out.err


def test_oracle_cosine(tmp_path, capsys):
    path = problem_file(tmp_path, TrigPoly.from_dict({(1,): 0.5, (-1,): 0.5}, dim=1))
    code, out = run(capsys, ["oracle", path, "--points", 512])
    report = json.loads(out.out)
    assert code == 0
    assert report["value"] == pytest.approx(-1.0, abs=1e-12)
    assert report["lower_bound"] <= -1.0


def test_oracle_refuses_high_dimension(tmp_path, capsys):
    path = problem_file(tmp_path, TrigPoly.from_dict({(0, 0, 0, 0): 1.0}, dim=4))
    code, out = run(capsys, ["oracle", path])
    assert code == cli.EXIT_INVALID and "--allow-high-dim" in out.err


def test_sweep_rows(tmp_path, capsys):
    f, _ = generate_problem("trig_poly", 1, 3, seed=4)
    path = problem_file(tmp_path, f)
    argv = ["sweep", path, "--shapes", "1,3,2", "1,4,2", "--samples", 4000, 16000, "--seeds", 0, 1,
            "--epochs", 20, "--batch-size", 64, "--starts", 4]
    code, out = run(capsys, argv)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out.out)))
    assert len(rows) == 2 * 2 * 2
    assert tuple(rows[0]) == cli.SWEEP_COLUMNS
    assert all(r["error"] == "" for r in rows)
    # the deviation term shrinks as 1/sqrt(N) for a fixed model
    for a, b in zip(rows[::2], rows[1::2]):
        assert (a["shape"], a["seed"]) == (b["shape"], b["seed"])
        assert float(a["deviation"]) / float(b["deviation"]) == pytest.approx(
            2.0 * float(a["norm_bound"]) / float(b["norm_bound"]), rel=1e-12
        )


def test_sweep_records_errors(tmp_path, capsys):
    path = problem_file(tmp_path, TrigPoly.from_dict({(200,): 0.5, (-200,): 0.5}, dim=1))
    code, out = run(capsys, ["sweep", path, "--shapes", "1,2,1", "--samples", 100, "--epochs", 0, "--starts", 2])
    rows = list(csv.DictReader(io.StringIO(out.out)))
    assert code == 0 and len(rows) == 1
    assert rows[0]["error"].startswith("OutOfReachError")


def test_parse_shape():
    assert cli.parse_shape("2,8,4") == (2, 8, 4)
    with pytest.raises(Exception):
        cli.parse_shape("2,8")


def test_derived_seeds_distinct():
    s = cli.derive_seeds(0)
    assert len(set(s.values())) == 3
    assert s == cli.derive_seeds(0) and s != cli.derive_seeds(1)
