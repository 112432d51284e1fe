import numpy as np

from ncdoa.cli import main
from ncdoa.covio import load_covariances


def test_identifiability(capsys, tmp_path):
    cfg = tmp_path / "ex.toml"
    cfg.write_text('geometry = "custom"\noffsets = [[[0,0],[1,0]],[[0,0],[2,0]],[[0,0],[3,0]]]\n'
                   "doas_deg = [10.0]\n")
    assert main(["identifiability", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "kruskal_rank_estimate = 7" in out and "corollary_bound = 3" in out


def test_crb_csv(tmp_path):
    out = tmp_path / "crb.csv"
    assert main(["crb", "--preset", "fig2_s1", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "snr_db,crb_deg_1,crb_deg_2,crb_deg"
    last = dict(zip(lines[0].split(","), lines[-1].split(",")))
    assert last["snr_db"] == "50" and abs(float(last["crb_deg"]) - 0.4009) < 0.02


def test_estimate_round_trip(tmp_path, capsys):
    cov = tmp_path / "c.txt"
    assert main(["estimate", "--preset", "fig4", "--seed", "3", "--save-covariances", str(cov)]) == 0
    first = capsys.readouterr().out
    cs, arr = load_covariances(cov)
    assert arr.n_subarrays == 12 and cs.n_snapshots == 50
    assert main(["estimate", str(cov), "--sources", "2"]) == 0
    assert capsys.readouterr().out == first


def test_montecarlo_seed_flag(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["montecarlo", "--preset", "fig2_s1", "--trials", "1"]
    small = tmp_path / "s.toml"
    small.write_text("snr_db = [0.0, 10.0]\ntrials = 2\n")
    assert main(["montecarlo", str(small), "--seed", "4", "--out", str(a)]) == 0
    assert main(["montecarlo", str(small), "--seed", "4", "--threads", "2", "--out", str(b)]) == 0
    assert a.read_text() == b.read_text()
    assert a.read_text().splitlines()[0] == "sweep,estimator,rmse_deg,resolution_pct,crb_deg,trials,failures"


def test_errors_give_nonzero_exit(tmp_path, capsys):
    assert main(["crb"]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("trials = -1\n")
    assert main(["montecarlo", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err
    many = tmp_path / "many.toml"
    many.write_text('geometry = "custom"\noffsets = [[[0,0],[1,0]]]\ndoas_deg = [-40.0, 0.0, 35.0]\n')
    assert main(["crb", str(many)]) == 0
    assert "nan" in capsys.readouterr().out
    cov = tmp_path / "c.txt"
    cov.write_text("ncdoa-covariance 1\nkind sample\nK 1\nN 5\nM 1\n1 0\n")
    assert main(["estimate", str(cov), "--sources", "1"]) == 2
