import csv
import io
import json

import numpy as np
import pytest

from sctc.cli import main
from sctc.presets import preset, select_rows, table_rows


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows_of(text):
    return list(csv.reader(io.StringIO(text)))


def test_transfer_3output(capsys):
    code, out, _ = run(capsys, "transfer", "--generator", "1 0 1/11; 0 1 01/11",
                       "--notation", "binary", "--p", "0.5")
    assert code == 0
    assert out.splitlines()[1] == "0.500000,0.500000,0.500000,0.836735,0.836735,0.734694"


def test_transfer_zero_and_grid_monotone(capsys):
    code, out, _ = run(capsys, "transfer", "--generator", "1,5/7", "--p", "0 0")
    assert code == 0 and out.splitlines()[1] == "0.000000,0.000000,0.000000,0.000000"
    code, out, _ = run(capsys, "transfer", "--generator", "1,5/7", "--p-grid", "11")
    table = np.array(rows_of(out)[1:], dtype=float)
    assert table.shape == (11, 4)
    assert np.all(np.diff(table[:, 2:], axis=0) >= 0)


def test_output_is_byte_identical(capsys, tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"o{i}.csv"
        assert run(capsys, "transfer", "--generator", "1,15/13", "--p-grid", "5",
                   "--out", str(path))[0] == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_transfer_json(capsys):
    code, out, _ = run(capsys, "transfer", "--generator", "1,5/7", "--p", "0.3,0.6",
                       "--format", "json")
    data = json.loads(out)
    assert code == 0 and data["states"] == 4 and len(data["f"][0]) == 2


@pytest.mark.parametrize("argv", [
    ["transfer", "--generator", "1,8/7"],
    ["transfer", "--generator", "1,5/7", "--p", "0.5 0.5 0.5"],
    ["transfer", "--generator", "1,5/7", "--p", "1.5"],
    ["transfer"],
    ["threshold", "--preset", "PCC-4", "--tol", "1e-7"],
    ["threshold", "--preset", "nope"],
    ["threshold"],
    ["de-run", "--preset", "PCC-4"],
    ["de-run", "--preset", "PCC-4", "--eps", "2"],
    ["sweep", "--preset", "PCC-4", "--workers", "0"],
    ["reproduce", "table7"],
    ["reproduce", "table1", "--rows", "nothing"],
    ["frobnicate"],
])
def test_validation_errors_exit_1(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 1
    assert err


def test_bad_config_file(capsys, tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    assert run(capsys, "threshold", "--config", str(p))[0] == 1
    assert run(capsys, "threshold", "--config", str(tmp_path / "missing.json"))[0] == 1


def test_env_worker_default(capsys, monkeypatch):
    monkeypatch.setenv("SCTC_WORKERS", "0")
    assert run(capsys, "sweep", "--preset", "PCC-4")[0] == 1


def test_config_and_flag_precedence(capsys, tmp_path):
    cfg = {"family": "PCC", "upper": "1,5/7", "lower": "1,5/7", "rho0": 1, "rho1": 1,
           "rho2": 0.5, "timeVarying": False, "eps": 0.3, "maxIter": 3, "format": "json"}
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    code, out, _ = run(capsys, "de-run", "--config", str(p))
    data = json.loads(out)
    assert code == 0 and data["eps"] == 0.3 and data["iterations"] <= 3
    code, out, _ = run(capsys, "de-run", "--config", str(p), "--eps", "0.1",
                       "--max-iter", "500", "--format", "csv")
    assert code == 0 and out.startswith("# converged=True")


def test_threshold_command(capsys):
    code, out, _ = run(capsys, "threshold", "--preset", "table1:SCC-4", "--tol", "1e-3")
    rows = rows_of(out)
    assert code == 0
    assert rows[0] == ["family", "states", "rate", "m", "L", "kind", "value", "tol"]
    assert rows[1][:6] == ["SCC", "4", "0.500000", "0", "1", "BP"]
    assert abs(float(rows[1][6]) - 0.3594) <= 1e-3


def test_threshold_kind_follows_m(capsys):
    code, out, _ = run(capsys, "threshold", "--preset", "PCC-4", "--m", "1", "--L", "6",
                       "--tol", "1e-2")
    rows = rows_of(out)
    assert code == 0 and rows[1][3:6] == ["1", "6", "SC"]


def test_computation_failure_exit_2(capsys, monkeypatch):
    import sctc.de_engine as de

    def boom(*a, **k):
        raise de.ThresholdError("forced")

    monkeypatch.setattr(de, "map_threshold", boom)
    code, out, _ = run(capsys, "threshold", "--preset", "PCC-4", "--kind", "MAP")
    assert code == 2 and "nan" in out
    # a failing cell does not stop the others
    code, out, _ = run(capsys, "reproduce", "table2", "--rows", "PCC-4-9/10", "--tol", "1e-3",
                       "--L", "5")
    rows = rows_of(out)
    assert code == 2 and len(rows) == 6
    assert rows[2][7] == "nan" and "nan" not in (rows[1][7], rows[3][7])


def test_sweep_m_and_rates(capsys):
    code, out, _ = run(capsys, "sweep", "--preset", "PCC-4", "--m-list", "0,1", "--L", "8",
                       "--tol", "1e-3")
    rows = rows_of(out)
    assert code == 0 and [r[3] for r in rows[1:]] == ["0", "1"]
    assert [r[5] for r in rows[1:]] == ["BP", "SC"]
    code, out, _ = run(capsys, "sweep", "--preset", "PCC-4", "--rates", "1/3,1/2",
                       "--tol", "1e-3")
    rows = rows_of(out)
    assert code == 0 and [r[2] for r in rows[1:]] == ["0.333333", "0.500000"]
    assert float(rows[1][6]) > float(rows[2][6])
    code, out, _ = run(capsys, "sweep", "--preset", "PCC-4", "--m-max", "0", "--tol", "1e-3")
    assert code == 0 and len(rows_of(out)) == 2


def test_potential_command(capsys):
    code, out, _ = run(capsys, "potential", "--preset", "table2:PCC-4-1/3", "--eps", "0.65",
                       "--points", "11")
    assert code == 0 and out.splitlines()[0] == "x,U" and len(out.splitlines()) == 12
    code, out, _ = run(capsys, "potential", "--preset", "table2:PCC-4-1/3", "--thresholds",
                       "--tol", "1e-3", "--format", "json")
    data = json.loads(out)
    assert abs(data["bp"] - 0.6428) <= 1e-3 and abs(data["potential"] - 0.6553) <= 1e-3


def test_reproduce_row_filter(capsys):
    code, out, _ = run(capsys, "reproduce", "table2", "--rows", "PCC-4-1/3", "--L", "8",
                       "--tol", "1e-3", "--max-iter", "2000")
    rows = rows_of(out)
    assert code == 0
    assert rows[0] == ["table", "row", "family", "states", "rate", "rho2", "kind",
                       "computed", "published", "deviation"]
    assert [r[6] for r in rows[1:]] == ["BP", "MAP", "SC1", "SC3", "SC5"]
    bp = rows[1]
    assert bp[8] == "0.642800" and abs(float(bp[7]) - 0.6428) <= 1e-3
    assert float(bp[9]) == pytest.approx(abs(float(bp[7]) - 0.6428), abs=2e-6)


def test_presets_metadata():
    t1 = table_rows("table1")
    assert [r.key for r in t1] == ["PCC-4", "SCC-4", "PCC-8", "SCC-8", "TypeI-4", "TypeII-4"]
    for r in t1:
        assert r.spec.rate == pytest.approx(0.5)
    for r in table_rows("table2") + table_rows("table3"):
        rate = float(r.key.split("-")[-1].split("/")[0]) / float(r.key.split("/")[-1])
        assert r.spec.rate == pytest.approx(rate)
        # printed permeabilities are truncated to three decimals
        assert abs(r.spec.rho[2] - r.rho2_printed) < 2e-3
        assert r.spec.states == int(r.key.split("-")[1])
    assert len(select_rows("table2")) == 24
    assert [r.key for r in select_rows("table3", "TypeII-4-1/2")] == ["TypeII-4-1/2"]
    assert preset("table2:SCC-4-9/10").rho == (1.0, 0.0, pytest.approx(1 / 18))
