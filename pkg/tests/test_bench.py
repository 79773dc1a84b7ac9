import json

import numpy as np
import pytest

from levelcg import bench
from levelcg.errors import ConfigError, EmptyData, ParseError
from levelcg.models.portfolio import gen_synthetic_returns

SMALL = {"synthetic": {"n_assets": 10, "n_weeks": 60}}


def write(path, text):
    path.write_text(text)
    return str(path)


def test_csv_fixture(tmp_path):
    f = write(tmp_path / "r.csv",
              "index_return,AAA,BBB\n0.01,0.02,-0.01\n-0.02,0.0,0.01\n0.005,0.01,0.0\n")
    d = bench.load_returns_csv(f)
    assert (d.n_weeks, d.n_assets) == (3, 2)
    assert d.asset_names == ["AAA", "BBB"]
    assert d.index_returns.tolist() == [0.01, -0.02, 0.005]
    g = write(tmp_path / "r2.csv", (tmp_path / "r.csv").read_text() + "\n\n")
    assert bench.load_returns_csv(g).n_weeks == 3


def test_csv_errors(tmp_path):
    with pytest.raises(ParseError) as info:
        bench.load_returns_csv(write(tmp_path / "a.csv", "0.1,0.2\n0.3,0.4\n"))
    assert (info.value.row, info.value.col) == (1, 1)
    with pytest.raises(ParseError) as info:
        bench.load_returns_csv(write(tmp_path / "b.csv", "index_return,A\n0.1,0.2\n0.3,abc\n"))
    assert (info.value.row, info.value.col) == (3, 2)
    with pytest.raises(ParseError) as info:
        bench.load_returns_csv(write(tmp_path / "c.csv", "index_return,A\n0.1,nan\n"))
    assert (info.value.row, info.value.col) == (2, 2)
    with pytest.raises(ParseError):
        bench.load_returns_csv(write(tmp_path / "d.csv", "index_return,A\n0.1\n"))
    with pytest.raises(EmptyData):
        bench.load_returns_csv(write(tmp_path / "e.csv", ""))
    with pytest.raises(EmptyData):
        bench.load_returns_csv(write(tmp_path / "f.csv", "index_return,A\n"))


def test_csv_roundtrip(tmp_path):
    d = gen_synthetic_returns(n_assets=4, n_weeks=12, seed=1)
    bench.save_returns_csv(d, tmp_path / "x.csv")
    back = bench.load_returns_csv(str(tmp_path / "x.csv"))
    assert np.array_equal(back.asset_returns, d.asset_returns)
    assert np.array_equal(back.index_returns, d.index_returns)


def test_config_validation():
    with pytest.raises(ConfigError):
        bench.RunConfig.from_dict({"model": "nope"})
    with pytest.raises(ConfigError):
        bench.RunConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        bench.RunConfig.from_dict({"model": "card-free-convex", "algorithm": "dncg"})
    with pytest.raises(ConfigError):
        bench.RunConfig.from_dict({"model": "card-nonconvex-2", "algorithm": "lcg"})
    with pytest.raises(ConfigError):
        bench.RunConfig.from_dict({"psi": 0})
    with pytest.raises(ConfigError):
        bench.RunConfig.from_dict({"data": {"csv": "a", "synthetic": {}}})
    cfg = bench.RunConfig.from_dict({"model": "card-free-convex", "algorithm": "dncg",
                                     "force": True})
    assert cfg.force


def test_run_range_contracts():
    rep = bench.run({"model": "card-free-convex", "data": {"synthetic": {"seed": 7}}})
    m = rep["metrics"]
    assert rep["status"] in ("converged", "budget")
    assert 0.0 <= m["risk"] <= 1.0 and 0 <= m["assets"] <= 50
    assert rep["iterations"]["inner_iters"] <= 100
    assert "out" not in rep["config"]


def test_forced_run_on_nonsmooth_model_is_a_config_error():
    with pytest.raises(ConfigError):
        bench.run({"model": "card-free-convex", "algorithm": "dncg", "force": True,
                   "data": SMALL})


def test_solver_failure_becomes_report(tmp_path):
    # the imrt dose objective is smooth, so a forced DNCG run is accepted;
    # a missing data directory is a config-level problem and raises instead
    rep = bench.run({"model": "imrt-convex", "algorithm": "dncg", "force": True, "K": 5,
                     "data": {"synthetic": {"n_angles": 2, "n_voxels": 64,
                                            "n_beamlets": 4}}})
    assert rep["status"] == "converged"
    bad = bench.run({"model": "card-convex", "algorithm": "mlcg", "eps": 1e-3,
                     "total_inner": 5, "data": SMALL})
    assert bad["status"] in ("budget", "converged", "failed")


def test_report_files(tmp_path):
    out = tmp_path / "rep" / "r.json"
    rep = bench.run({"model": "card-free-convex", "data": SMALL, "out": str(out),
                     "trace": True})
    on_disk = json.loads(out.read_text())
    assert on_disk["metrics"] == rep["metrics"]
    assert "wall_seconds" not in on_disk and "wall_seconds" in rep
    assert (tmp_path / "rep" / "r.timing.json").exists()
    assert (tmp_path / "rep" / "r.levels.csv").read_text().startswith("k,level,L,U,gamma,inner")
    assert (tmp_path / "rep" / "r.cgo.csv").exists()


def test_run_is_byte_identical(tmp_path):
    cfg = {"model": "card-nonconvex-2", "algorithm": "dncg", "K": 50, "data": SMALL}
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    bench.run(dict(cfg, out=str(a)))
    bench.run(dict(cfg, out=str(b)))
    assert a.read_bytes() == b.read_bytes()


def test_sweep_rows_and_order(tmp_path):
    configs = [{"model": "card-free-convex", "data": SMALL, "name": n, "total_inner": 20}
               for n in ("first", "second", "third")]
    rows, md = bench.sweep(configs, tmp_path / "s.csv", tmp_path / "s.md")
    assert [r["name"] for r in rows] == ["first", "second", "third"]
    lines = (tmp_path / "s.csv").read_text().strip().splitlines()
    assert len(lines) == 4 and lines[0].startswith("name,model")
    assert md.count("\n") == 5 and (tmp_path / "s.md").read_text() == md
    with pytest.raises(ConfigError):
        bench.sweep([])


def test_sweep_keeps_partial_results(tmp_path):
    configs = [{"model": "card-free-convex", "data": SMALL, "name": "ok", "total_inner": 20},
               {"model": "card-free-convex", "data": {"csv": str(tmp_path / "missing.csv")},
                "name": "broken"}]
    rows, _ = bench.sweep(configs)
    assert [r["status"] for r in rows][1] == "failed"
    assert rows[0]["status"] != "failed"


def test_markdown_helpers():
    md = bench.markdown_table([{"name": "a", "objective": 0.123456}], ("name", "objective", "risk"))
    assert md.splitlines()[0] == "| name | objective |"
    assert "0.1235" in md
    crit = bench.criteria_markdown([{"criterion": "T: V40 >= 99%", "fraction": 1.0,
                                     "satisfied": True}])
    assert "| T: V40 >= 99% | 1.0000 | yes |" in crit
