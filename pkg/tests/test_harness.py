import numpy as np
import pytest

from kinlab.harness import experiments as ex
from kinlab.harness.cli import main as cli_main
from kinlab.harness.config import ConfigError, parse_config
from kinlab.harness.manifest import RunManifest
from kinlab.harness.stats import EnsembleStats, StreamingMoments, bootstrap_slope

SMALL_CFG = """
[run]
lambdas = 0.6 0.45
T = 0.2
tau_grid = 4
L = 20
dt = 0.05
n_realizations = 4
master_seed = 12345
n_particles = 4000
shell_halfwidth = 0.02
dos_samples = 400000
dos_bins = 256
out_dir = out

[wkb]
center = 0 0 0
sigma = 0.25
linear = 1.5707963 0 0

[observable]
center = 0.1 0 0
sigma = 0.8 0.8 0.8
amplitude = 1.0
harmonics = 0 0 0 : 0.5 0 ; 1 0 0 : 0.25 0 ; -1 0 0 : 0.25 0

[duhamel]
L = 8
t = 1.0
lam = 0.3
dt = 0.005
N = 2
"""


@pytest.fixture(scope="module")
def cfg():
    return parse_config(SMALL_CFG)


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


def test_config_roundtrip_fields(cfg):
    assert cfg.lambdas == (0.6, 0.45)
    assert cfg.etas == (0.36, 0.2025)
    assert cfg.observable.coeff_dict()[(1, 0, 0)] == 0.25
    assert cfg.wkb.linear == (1.5707963, 0.0, 0.0)
    assert cfg.duhamel.N == 2


def test_config_digest_stable(cfg):
    assert cfg.digest() == parse_config(SMALL_CFG).digest()
    other = parse_config(SMALL_CFG.replace("master_seed = 12345", "master_seed = 99"))
    assert other.digest() != cfg.digest()


def test_config_rejects_box_budget_violation():
    bad = SMALL_CFG.replace("lambdas = 0.6 0.45", "lambdas = 0.6 0.1")
    with pytest.raises(ConfigError):
        parse_config(bad)


def test_config_rejects_nondescending():
    bad = SMALL_CFG.replace("lambdas = 0.6 0.45", "lambdas = 0.45 0.6")
    with pytest.raises(ConfigError):
        parse_config(bad)


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------


def test_streaming_moments_match_numpy(rng):
    x = rng.normal(size=257)
    acc = StreamingMoments()
    for v in x:
        acc.push(float(v))
    assert acc.mean == pytest.approx(x.mean(), rel=1e-12)
    assert acc.variance == pytest.approx(x.var(ddof=1), rel=1e-12)


def test_streaming_merge_associative(rng):
    x = rng.normal(size=100)
    parts = []
    for chunk in np.array_split(x, 7):
        acc = StreamingMoments()
        for v in chunk:
            acc.push(float(v))
        parts.append(acc)
    merged_lr = parts[0]
    for p in parts[1:]:
        merged_lr = merged_lr.merge(p)
    merged_tree = parts[0].merge(parts[1]).merge(parts[2].merge(parts[3])).merge(
        parts[4].merge(parts[5]).merge(parts[6])
    )
    assert merged_lr.variance == pytest.approx(merged_tree.variance, rel=1e-10)
    assert merged_lr.variance == pytest.approx(np.var(x, ddof=1), rel=1e-10)


def test_single_realization_variance_undefined():
    s = EnsembleStats(lam=0.3, eta=0.09, values=[1.0 + 0j])
    assert not s.variance_defined
    assert np.isnan(s.variance)


def test_bootstrap_slope_recovers_trend(rng):
    lams = (0.6, 0.45, 0.3)
    values = [rng.normal(scale=lam, size=400) for lam in lams]  # var ~ lam^2: slope 2
    slope, lo, hi = bootstrap_slope(lams, values, 400, rng)
    assert lo <= slope <= hi
    assert abs(slope - 2.0) < 0.5
    assert lo > 0


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


def test_ensemble_deterministic_and_seed_isolated(cfg):
    a = ex.run_ensemble(cfg, 0.6)
    b = ex.run_ensemble(cfg, 0.6)
    assert a.values == b.values  # bit-identical
    import dataclasses

    bigger = dataclasses.replace(cfg, n_realizations=6)
    c = ex.run_ensemble(bigger, 0.6)
    assert c.values[:4] == a.values  # realization i keyed by stream, not count


def test_ensemble_workers_equivalent(cfg):
    a = ex.run_ensemble(cfg, 0.6, workers=1)
    b = ex.run_ensemble(cfg, 0.6, workers=2)
    assert a.values == b.values


def test_ensemble_zero_coupling_override_kills_variance(cfg):
    s = ex.run_ensemble(cfg, 0.6, coupling_override=0.0)
    assert s.variance <= 1e-12
    assert s.max_rel_imag < 1e-8


def test_ensemble_moments_exposed(cfg):
    s = ex.run_ensemble(cfg, 0.6)
    assert s.central_moment(2) >= 0
    assert s.central_moment(4) >= 0
    assert s.n == cfg.n_realizations


# ---------------------------------------------------------------------------
# reports and files
# ---------------------------------------------------------------------------


def test_csv_roundtrip(tmp_path):
    path = tmp_path / "t.csv"
    rows = [[0.1, 3, "abc", 1.2345678901234567e-8], [2.0, -1, "x,y", 7.0]]
    ex.write_csv(path, ["a", "b", "c", "d"], rows)
    back = ex.read_csv(path)
    assert back[0]["a"] == 0.1
    assert back[0]["d"] == 1.2345678901234567e-8
    assert back[1]["c"] == "x,y"
    assert back[1]["b"] == -1


def test_manifest_digest_roundtrip(tmp_path):
    m = RunManifest(config_digest="abc", master_seed=7, task_seeds={"x": 1})
    p = tmp_path / "manifest.json"
    m.add_output_bytes = None  # no outputs
    m.write(p, reproducible=True)
    back = RunManifest.load(p)
    assert back.config_digest == "abc"
    assert back.created == "1970-01-01T00:00:00Z"
    # tampering breaks the digest check
    text = p.read_text().replace('"master_seed": 7', '"master_seed": 8')
    p.write_text(text)
    with pytest.raises(ValueError):
        RunManifest.load(p)


def test_timegrid_report_max_dominates(cfg):
    rep = ex.run_timegrid_sup(cfg)
    for lam in rep.lams:
        assert rep.sup_deviation[lam] == max(rep.deviations[lam])
        assert all(d <= rep.sup_deviation[lam] for d in rep.deviations[lam])


def test_timegrid_needs_four_points(cfg):
    import dataclasses

    with pytest.raises(ValueError):
        ex.run_timegrid_sup(dataclasses.replace(cfg, tau_grid=1))


def test_graph_suite_rows(cfg):
    graph_rows, sched_rows = ex.run_graph_suite(cfg)
    from kinlab.graphs import connected_count

    for nbar in range(1, 6):
        total = sum(r[3] for r in graph_rows if r[0] + r[1] == nbar)
        assert total == connected_count(nbar) * (nbar + 1)  # all splits
    # schedule rows only for couplings within the lam <= 1/2 hypothesis
    assert [r[0] for r in sched_rows] == [0.45]
    assert sched_rows[0][2] == pytest.approx(1.0 / (3.0 + 0.2 / 0.2025), rel=1e-12)


def test_cli_graphs_and_duhamel(tmp_path):
    cfg_path = tmp_path / "cfg.ini"
    cfg_path.write_text(SMALL_CFG)
    out = tmp_path / "o1"
    assert cli_main(["graphs", "--config", str(cfg_path), "--out", str(out), "--reproducible"]) == 0
    assert (out / "graphs.csv").exists()
    assert (out / "schedule.csv").exists()
    m = RunManifest.load(out / "manifest.json")
    assert m.master_seed == 12345

    out2 = tmp_path / "o2"
    assert cli_main(["duhamel", "--config", str(cfg_path), "--out", str(out2)]) == 0
    rows = ex.read_csv(out2 / "duhamel.csv")
    assert rows[-1]["residual_norm"] < rows[0]["residual_norm"]


def test_cli_determinism_bytes(tmp_path):
    cfg_path = tmp_path / "cfg.ini"
    cfg_path.write_text(SMALL_CFG)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        cli_main(["graphs", "--config", str(cfg_path), "--out", str(out), "--reproducible"])
        outs.append(out)
    for fname in ("graphs.csv", "schedule.csv", "manifest.json"):
        assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()


def test_cli_seed_override(tmp_path):
    cfg_path = tmp_path / "cfg.ini"
    cfg_path.write_text(SMALL_CFG)
    out = tmp_path / "o3"
    cli_main(["graphs", "--config", str(cfg_path), "--out", str(out), "--seed", "777"])
    m = RunManifest.load(out / "manifest.json")
    assert m.master_seed == 777


def test_cli_simulate_compare_supnorm(tmp_path):
    cfg_path = tmp_path / "cfg.ini"
    cfg_path.write_text(SMALL_CFG)
    out = tmp_path / "o4"
    assert cli_main(["simulate", "--config", str(cfg_path), "--out", str(out), "--lam", "0.6"]) == 0
    rows = ex.read_csv(out / "ensemble_lam0.6.csv")
    assert len(rows) == 4 and {"realization", "value_re", "value_im", "truncation"} <= set(rows[0])

    out5 = tmp_path / "o5"
    assert cli_main(["compare", "--config", str(cfg_path), "--out", str(out5)]) == 0
    rows = ex.read_csv(out5 / "compare.csv")
    assert [r["lam"] for r in rows] == [0.6, 0.45]

    out6 = tmp_path / "o6"
    assert cli_main(["supnorm", "--config", str(cfg_path), "--out", str(out6)]) == 0
    rows = ex.read_csv(out6 / "supnorm.csv")
    assert len(rows) == 2 * 4  # two couplings, four grid points


def test_variance_estimator_error_halves_with_doubled_realizations(rng):
    # variance-of-variance scaling under doubling: stderr ratio within 30% of halving
    n = 64
    ratios = []
    for _ in range(200):
        x = rng.normal(size=2 * n)
        v_n = np.var(x[:n], ddof=1)
        v_2n = np.var(x, ddof=1)
        ratios.append((v_n, v_2n))
    sd_n = np.std([a for a, _ in ratios], ddof=1)
    sd_2n = np.std([b for _, b in ratios], ddof=1)
    assert abs(sd_2n / sd_n - 0.5) <= 0.3


def test_transport_only_agreement():
    # collisionless transport against the free quantum evolution at eta = 0.04
    text = SMALL_CFG.replace("lambdas = 0.6 0.45", "lambdas = 0.6 0.2").replace(
        "L = 20", "L = 96"
    ).replace("sigma = 0.25", "sigma = 0.2").replace("T = 0.2", "T = 0.5")
    cfg = parse_config(text)
    lam = 0.2  # eta = 0.04
    stats = ex.run_ensemble(
        __import__("dataclasses").replace(cfg, n_realizations=1), lam, coupling_override=0.0
    )
    quantum = stats.values[0].real
    table = ex._dos_table(cfg)
    val, err = ex.boltzmann_observable(cfg, cfg.T, table, collisions=False)
    rel = abs(quantum - val.real) / abs(val.real)
    assert rel <= 0.03


def test_timegrid_sup_smaller_at_weaker_coupling_over_seeds():
    import dataclasses

    text = SMALL_CFG.replace("lambdas = 0.6 0.45", "lambdas = 0.6 0.3").replace(
        "L = 20", "L = 64"
    ).replace("T = 0.2", "T = 0.5").replace("n_particles = 4000", "n_particles = 20000")
    base = parse_config(text)
    wins = 0
    for seed in (11, 12, 13, 14, 15):
        cfg = dataclasses.replace(base, master_seed=seed)
        rep = ex.run_timegrid_sup(cfg)
        if rep.sup_deviation[0.3] < rep.sup_deviation[0.6]:
            wins += 1
    assert wins >= 4
