import json

import numpy as np
import pytest

from mkdvlab import cli, experiments as ex
from mkdvlab.backlund import InversionError
from mkdvlab.grid import Field, Grid


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_dotted_keys():
    cfg = cli.parse_config(
        "# comment\nexperiment = stability\ngrid.n = 1024\ngrid.L = 30\n"
        "evolution.t_final = 2.5\ntolerances.tube_factor = 4\nshifts.x1 = 0.25\nperturbation = gaussian\n"
    )
    assert cfg.experiment == "stability" and cfg.n == 1024 and cfg.L == 30.0
    assert cfg.t_final == 2.5 and cfg.x1 == 0.25 and cfg.perturbation == "gaussian"
    assert cfg.tolerances["tube_factor"] == 4.0
    assert cfg.tolerances["identity"] == ex.DEFAULT_TOLERANCES["identity"]


@pytest.mark.parametrize("text", ["bogus = 1\n", "grid.n = many\n", "just a line\n", "tolerances.x = big\n"])
def test_parse_errors(text):
    with pytest.raises(cli.ConfigError):
        cli.parse_config(text)


def test_validate_default_has_no_findings():
    assert cli.validate(ex.ExperimentConfig()) == []


def test_validate_singular_lattice():
    cfg = ex.ExperimentConfig(x1=np.pi / 2, x2=0.0)
    found = cli.validate(cfg)
    assert len(found) == 1 and "singular lattice" in found[0]


def test_validate_small_domain():
    cfg = ex.ExperimentConfig(L=5.0, beta=0.3, n=256)
    assert any("domain too small" in f for f in cli.validate(cfg))


@pytest.mark.parametrize(
    "kw",
    [dict(alpha=-1.0), dict(experiment="nope"), dict(perturbation="nope"), dict(n=1000), dict(dt=1.0),
     dict(tolerances={"identity": -1.0})],
)
def test_validate_catches_bad_values(kw):
    assert cli.validate(ex.ExperimentConfig(**kw))


def test_identities_run_is_deterministic(tmp_path):
    cfg = write(tmp_path, "experiment = identities\nseed = 7\n")
    outs = []
    for d in ("a", "b"):
        assert cli.main([str(cfg), "--output-dir", str(tmp_path / d), "--quiet"]) == 0
        outs.append((tmp_path / d / "identities.csv").read_bytes())
    assert outs[0] == outs[1]
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["passed"] and report["config"]["seed"] == 7
    assert report["extras"]["draws"] == 20
    assert all({"name", "value", "threshold", "passed"} <= set(c) for c in report["checks"])
    header = outs[0].decode().splitlines()[0].split(",")
    assert header[:4] == ["alpha", "beta", "x1", "x2"]


def test_seed_override_changes_draws(tmp_path):
    cfg = write(tmp_path, "experiment = identities\nidentities.draws = 3\n")
    cli.main([str(cfg), "--output-dir", str(tmp_path / "a"), "--seed", "1", "--quiet"])
    cli.main([str(cfg), "--output-dir", str(tmp_path / "b"), "--seed", "2", "--quiet"])
    assert (tmp_path / "a" / "identities.csv").read_bytes() != (tmp_path / "b" / "identities.csv").read_bytes()


def test_env_output_dir(tmp_path, monkeypatch):
    cfg = write(tmp_path, "experiment = identities\nidentities.draws = 2\n")
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert cli.main([str(cfg), "--quiet"]) == 0
    assert (tmp_path / "env" / "report.json").is_file()


def test_exit_codes(tmp_path, monkeypatch, capsys):
    assert cli.main([str(write(tmp_path, "grid.n = 1000\n"))]) == cli.EXIT_CONFIG
    assert cli.main([str(tmp_path / "missing.cfg")]) == cli.EXIT_CONFIG
    good = write(tmp_path, "experiment = identities\nidentities.draws = 1\n", "g.cfg")

    def boom(cfg):
        raise InversionError("forward inversion did not converge")

    monkeypatch.setitem(ex.RUNNERS, "identities", boom)
    monkeypatch.setattr(cli, "RUNNERS", ex.RUNNERS)
    assert cli.main([str(good), "--output-dir", str(tmp_path / "o")]) == cli.EXIT_NUMERIC
    assert "forward inversion did not converge" in capsys.readouterr().err

    def failing(cfg):
        return [ex.Check("x", 2.0, 1.0)], {}, {}

    monkeypatch.setitem(ex.RUNNERS, "identities", failing)
    assert cli.main([str(good), "--output-dir", str(tmp_path / "o")]) == cli.EXIT_FAIL


def test_check_relations():
    assert ex.Check("a", 1.0, 2.0).passed
    assert not ex.Check("a", float("nan"), 2.0).passed
    assert ex.Check("b", 3.0, 2.0, relation=">=").passed


def test_snapshot_round_trip(tmp_path):
    g = Grid(10.0, 64)
    for u in (Field(g, np.exp(-g.nodes**2), realness_hint=True), Field(g, np.exp(-g.nodes**2) * (1 + 2j))):
        p = ex.write_snapshot(tmp_path / "s.bin", u, 0.75)
        raw = p.read_bytes()
        assert len(raw) == 32 + 8 * g.n * (1 if u.realness_hint else 2)
        v, t = ex.read_snapshot(p)
        assert t == 0.75 and v.grid == g and np.array_equal(v.values, u.values)
    (tmp_path / "bad.bin").write_bytes(b"x" * 40)
    with pytest.raises(ValueError):
        ex.read_snapshot(tmp_path / "bad.bin")


def test_csv_precision(tmp_path):
    p = ex.write_csv(tmp_path / "c.csv", ["t"], [[0.1], [1 / 3]])
    lines = p.read_text().splitlines()
    assert lines == ["t", "0.10000000000000001", "0.33333333333333331"]


def test_perturbation_shapes_unit_norm(tmp_path):
    from mkdvlab.grid import sobolev_norm

    cfg = ex.ExperimentConfig(n=512)
    g = cfg.grid
    for kind in ("sech-cosine", "gaussian", "b1-direction"):
        cfg.perturbation = kind
        assert sobolev_norm(Field(g, ex.perturbation(cfg))) == pytest.approx(1.0)
    f = tmp_path / "p.txt"
    np.savetxt(f, np.exp(-g.nodes**2))
    cfg.perturbation, cfg.perturbation_file = "custom-file", str(f)
    assert sobolev_norm(Field(g, ex.perturbation(cfg))) == pytest.approx(1.0)


def test_random_draws_are_admissible():
    g = Grid(40.0, 2048)
    for p in ex.random_draws(np.random.default_rng(0), 30, g):
        assert 0.3 <= p.alpha <= 2 and 0.5 <= p.beta <= 2
        assert ex.admissible(p.alpha, p.beta, p.x1, p.x2, g)


def test_permutability_experiment(tmp_path):
    cfg = write(tmp_path, "experiment = permutability\neta = 1e-3\n")
    assert cli.main([str(cfg), "--output-dir", str(tmp_path / "o"), "--quiet"]) == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    names = {c["name"]: c for c in rep["checks"]}
    assert names["base_case_u3_vs_conj_soliton"]["value"] < 1e-9


def test_stability_experiment_writes_schema(tmp_path):
    cfg = write(
        tmp_path,
        "experiment = stability\nalpha = 0.5\ngrid.n = 1024\nevolution.dt = 2.5e-4\nevolution.t_final = 1\n",
    )
    assert cli.main([str(cfg), "--output-dir", str(tmp_path / "o"), "--quiet"]) == 0
    lines = (tmp_path / "o" / "stability.csv").read_text().splitlines()
    assert lines[0] == "t,x1,x2,tube_distance_h1,mass_drift,energy_drift,drift_rate,halfline_norm"
    assert len(lines) == 1 + 41
    u, t = ex.read_snapshot(tmp_path / "o" / "snapshot_final.bin")
    assert t == pytest.approx(1.0) and u.grid.n == 1024
