import math

from elastoschwarz.history import STATUSES, ConvergenceHistory


def test_round_trip(tmp_path):
    h = ConvergenceHistory(label="x")
    for e, r in [(1.0, 1.0), (0.5, 0.25), (1 / 3, 1e-17)]:
        h.append(e, r)
    h.status = "converged"
    back = ConvergenceHistory.from_csv(h.to_csv(tmp_path / "h.csv"))
    assert back.rel_error == h.rel_error and back.rel_residual == h.rel_residual
    assert back.status == "converged" and back.iterations == 2


def test_status_flag_on_last_row(tmp_path):
    h = ConvergenceHistory()
    h.append(1.0, 1.0)
    h.append(2.0, 3.0)
    h.status = "diverged"
    lines = (tmp_path / "h.csv").write_text("") or h.to_csv(tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "iter,rel_error,rel_residual,flag"
    assert lines[1].endswith(",") and lines[2].endswith(",diverged")
    assert h.diverged and not h.converged


def test_missing_error_falls_back_to_residual():
    h = ConvergenceHistory()
    h.append(None, 1.0)
    h.append(None, 0.1)
    assert math.isnan(h.rel_error[0])
    assert h.monitored() == [1.0, 0.1] and h.final() == 0.1


def test_empty():
    h = ConvergenceHistory()
    assert h.iterations == 0 and math.isnan(h.final())
    assert h.status in STATUSES
