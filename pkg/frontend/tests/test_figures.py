"""Figure rendering: fits, schema guards, determinism, real CSV inputs."""

import csv
import math
import subprocess
import sys

import pytest

from labplot import (
    REQUIRED_COLUMNS,
    EmptyInputError,
    FigureSpec,
    SchemaMismatchError,
    UnknownKindError,
    fit_crossing_decay,
    iso_qq_points,
    read_rows,
    render,
)


def write_csv(path, rows):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=REQUIRED_COLUMNS)
        writer.writeheader()
        for r in rows:
            writer.writerow({c: r.get(c, "") for c in REQUIRED_COLUMNS})
    return str(path)


def crossing_row(lam, p, n=64, experiment="prop21_crossing"):
    return {"experiment": experiment, "n": n, "lam": lam,
            "statistic": "crossing_prob", "estimate": p,
            "ci_low": max(p - 0.01, 0.0), "ci_high": min(p + 0.01, 1.0),
            "replicas": 10000}


def synthetic_crossing(path):
    rows = [crossing_row(lam, 1.0 - 2.0 * math.exp(-lam * lam))
            for lam in (0.9, 1.1, 1.3, 1.5, 1.7, 1.9)]
    return write_csv(path, rows)


def test_synthetic_fit_recovers_unit_rate(tmp_path):
    p = synthetic_crossing(tmp_path / "syn.csv")
    fits = fit_crossing_decay(read_rows(p))
    c, r2 = fits[64]
    assert abs(c - 1.0) < 0.01
    assert r2 > 0.999


def test_single_level_gets_no_fit(tmp_path):
    p = write_csv(tmp_path / "one.csv", [crossing_row(1.0, 0.8)])
    fits = fit_crossing_decay(read_rows(p))
    assert fits == {}
    out = render(FigureSpec((p,), "crossing_vs_lambda",
                            str(tmp_path / "one.png")))
    assert (tmp_path / "one.png").stat().st_size > 0
    assert out.endswith("one.png")


def test_saturated_levels_excluded_from_fit(tmp_path):
    rows = [crossing_row(lam, 1.0 - 2.0 * math.exp(-lam * lam))
            for lam in (1.0, 1.4)] + [crossing_row(5.0, 1.0)]
    fits = fit_crossing_decay(read_rows(write_csv(tmp_path / "sat.csv", rows)))
    assert abs(fits[64][0] - 1.0) < 0.01


def test_iso_qq_identical_columns_on_diagonal(tmp_path):
    rows = []
    for i, q in enumerate((0.1, 0.5, 1.2)):
        for stat in ("occ_quantile", "half_square_quantile"):
            rows.append({"experiment": "isomorphism", "n": 7,
                         "label": f"p={i}", "statistic": stat, "estimate": q})
    p = write_csv(tmp_path / "iso.csv", rows)
    pts = iso_qq_points(read_rows(p))
    assert all(x == y for x, y in pts)
    render(FigureSpec((p,), "iso_qq", str(tmp_path / "iso.png")))


def test_missing_columns_fail_loudly(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("experiment,n\nprop21_crossing,16\n")
    with pytest.raises(SchemaMismatchError):
        read_rows(str(bad))


def test_wrong_experiment_for_kind(tmp_path):
    p = write_csv(tmp_path / "w.csv", [crossing_row(1.0, 0.5,
                                                    experiment="makarov")])
    with pytest.raises(SchemaMismatchError):
        render(FigureSpec((p,), "crossing_vs_lambda", str(tmp_path / "w.png")))


def test_empty_csv_rejected(tmp_path):
    p = write_csv(tmp_path / "e.csv", [])
    with pytest.raises(EmptyInputError):
        read_rows(p)


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(UnknownKindError):
        FigureSpec(("x.csv",), "pie_chart", "y.png")


def test_render_is_deterministic(tmp_path):
    p = synthetic_crossing(tmp_path / "syn.csv")
    outs = []
    for name in ("a.svg", "b.svg"):
        render(FigureSpec((p,), "crossing_vs_lambda", str(tmp_path / name)))
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


def test_cli_exit_codes(tmp_path):
    from labplot.cli import main

    p = synthetic_crossing(tmp_path / "syn.csv")
    assert main(["crossing_vs_lambda", p, "-o", str(tmp_path / "f.png")]) == 0
    bad = tmp_path / "bad.csv"
    bad.write_text("experiment,n\nprop21_crossing,16\n")
    assert main(["crossing_vs_lambda", str(bad),
                 "-o", str(tmp_path / "g.png")]) == 2


# ---------------------------------------------------------------------------
# real experiment outputs, produced through the lab CLI


@pytest.fixture(scope="session")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    configs = {
        "prop21_crossing": 'ns = [16]\nlams = [0.5, 1.0, 1.5, 2.0]\nreplicas = 60\n',
        "makarov": "ns = [16]\nlams = [1.0]\nreplicas = 2\n",
        "isomorphism": "ns = [5]\nreplicas = 2000\n",
        "variance_gap": "ns = [9, 17]\n",
        "repulsion_profile": "ns = [9]\nlams = [0.5]\nreplicas = 200\n",
    }
    for name, body in configs.items():
        cfg = out / f"{name}.toml"
        cfg.write_text(f'experiment = "{name}"\n' + body)
        subprocess.run(
            [sys.executable, "-m", "gfflab.expcli", "run",
             "--experiment", name, "--config", str(cfg),
             "--out", str(out), "--seed", "1"],
            check=True, capture_output=True, text=True,
        )
    return out


@pytest.mark.parametrize("kind,experiment", [
    ("crossing_vs_lambda", "prop21_crossing"),
    ("makarov_decay", "makarov"),
    ("iso_qq", "isomorphism"),
    ("variance_gap", "variance_gap"),
    ("repulsion_profile", "repulsion_profile"),
])
def test_kinds_render_from_real_outputs(run_dir, tmp_path, kind, experiment):
    csv_path = run_dir / f"{experiment}_seed1.csv"
    out = tmp_path / f"{kind}.png"
    render(FigureSpec((str(csv_path),), kind, str(out)))
    assert out.stat().st_size > 0
