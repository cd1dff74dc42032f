import filecmp
import os

import pytest

from streambw import cli
from streambw.runner import Cell, cells_for, run_matrix
from streambw.scenario import parse_scenario

SHORT = {"duration": 30}


def test_cells_for_sweep_and_alphas():
    ti = parse_scenario("ti_bottleneck")
    assert [c.label for c in cells_for(ti)] == [
        "app_aware_10mbps", "maxmin_tcp_10mbps", "app_aware_15mbps", "maxmin_tcp_15mbps",
        "app_aware_20mbps", "maxmin_tcp_20mbps"]
    assert len(cells_for(ti, sweep=False)) == 2
    fair = parse_scenario("fair_5apps")
    labels = [c.label for c in cells_for(fair, ["app_fair"])]
    assert labels == ["app_fair_alpha0.25", "app_fair_alpha0.5", "app_fair_alpha0.75", "app_fair_alpha1"]
    assert Cell("maxmin_tcp").label == "maxmin_tcp"


def test_matrix_has_improvement_columns(tmp_path):
    table = run_matrix(parse_scenario("ti_bottleneck"), out_dir=str(tmp_path), **SHORT)
    assert len(table.rows) == 6 and not table.failed
    assert "tp_improvement" in table.columns()
    aa = [r for r in table.rows if r["allocator"] == "app_aware"]
    assert all("tp_improvement" in r for r in aa)
    assert (tmp_path / "comparison.csv").exists() and (tmp_path / "comparison.txt").exists()
    assert (tmp_path / "app_aware_10mbps" / "summary.json").exists()


def test_single_cell_has_no_improvement():
    table = run_matrix(parse_scenario("ti_bottleneck"), ["app_aware"], sweep=False, **SHORT)
    assert len(table.rows) == 1 and "tp_improvement" not in table.columns()


def test_failed_cell_is_reported_not_raised():
    table = run_matrix(parse_scenario("ti_bottleneck"), ["app_aware"], sweep=False, duration=7)
    assert table.failed and table.rows[0]["status"].startswith("failed")


def tree_equal(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.diff_files or cmp.funny_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    if mismatch or errors:
        return False
    return all(tree_equal(os.path.join(a, d), os.path.join(b, d)) for d in cmp.common_dirs)


def test_reruns_are_byte_identical(tmp_path):
    sc = parse_scenario("ti_bottleneck")
    run_matrix(sc, sweep=False, out_dir=str(tmp_path / "a"), **SHORT)
    run_matrix(sc, sweep=False, out_dir=str(tmp_path / "b"), **SHORT)
    assert tree_equal(tmp_path / "a", tmp_path / "b")


def test_cli_list(capsys):
    assert cli.main(["--list"]) == 0
    assert "ti_bottleneck" in capsys.readouterr().out


def test_cli_runs_and_prints_table(tmp_path, capsys):
    rc = cli.main(["--scenario", "ti_bottleneck", "--allocator", "app-aware", "--allocator",
                   "maxmin-tcp", "--duration", "30", "--out", str(tmp_path), "--table"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "tp_improvement" in out and "app_aware" in out
    assert (tmp_path / "maxmin_tcp_10mbps" / "flow_states.csv").exists()


@pytest.mark.parametrize("argv", [
    [],
    ["--scenario", "ti_bottleneck", "--alpha", "1.5"],
    ["--scenario", "no_such_scenario"],
    ["--scenario", "ti_bottleneck", "--duration", "7"],
])
def test_cli_rejects_bad_input(argv, capsys):
    assert cli.main(argv) == 2
    assert capsys.readouterr().err


def test_cli_rejects_unknown_allocator():
    with pytest.raises(SystemExit) as ex:
        cli.main(["--scenario", "ti_bottleneck", "--allocator", "reno"])
    assert ex.value.code == 2
