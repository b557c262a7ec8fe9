import argparse

import numpy as np
import pytest

from eqpac.cli import build_parser, cmd_axioms_check, main
from eqpac.config import RunConfig, load_config, parse_config
from eqpac.errors import ConfigError
from eqpac.groups import FiniteGroupTable
from eqpac.pipeline import SWEEP_HEADER, sweep_grid

FAST = """\
scenario.n_train = 200
scenario.n_val = 100
scenario.n_prior = 100
opt.steps = 60
opt.eval_every = 20
bound.n_models = 32
axioms.n_predictors = 10
axioms.kl_trials = 20
"""


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(FAST)
    return path


def run(argv):
    return main([str(a) for a in argv])


def test_parse_with_comments_and_types():
    cfg = parse_config("run.seed = 3  # master\nbound.delta=0.1\nsweep.n = 10, 20\nsweep.delta =\n")
    assert cfg["run.seed"] == 3 and cfg["bound.delta"] == 0.1
    assert cfg["sweep.n"] == (10, 20)
    assert cfg["sweep.delta"] == ()
    assert cfg["sweep.kernel_mix"] is None


def test_bad_lines_name_their_line_number():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("run.seed=1\nno.such.key=4\n")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("bound.delta = abc\n")
    with pytest.raises(ConfigError):
        parse_config("bound.loss = squared\n")
    with pytest.raises(ConfigError):
        parse_config("just words\n")


def test_resolved_text_reads_back():
    cfg = parse_config("run.seed=5\nscenario.kernel_mix=0.25\nsweep.group_order=4,8\n")
    again = parse_config(cfg.resolved_text())
    assert again.resolved_text() == cfg.resolved_text()


def test_seed_is_required():
    with pytest.raises(ConfigError):
        RunConfig().require_seed()


def test_sweep_axes():
    assert sweep_grid(RunConfig()) == [{}]
    assert sweep_grid(parse_config("sweep.n=\n")) == []
    grid = sweep_grid(parse_config("sweep.n=10,20\nsweep.delta=0.1,0.05\n"))
    assert len(grid) == 4 and {"n": 20, "delta": 0.05} in grid


def test_global_flags_before_or_after_the_command():
    parser = build_parser()
    a = parser.parse_args(["--seed", "4", "gen-data"])
    b = parser.parse_args(["gen-data", "--seed", "4"])
    assert a.seed == b.seed == 4


def test_usage_errors_exit_two(capsys):
    with pytest.raises(SystemExit) as info:
        main(["no-such-command"])
    assert info.value.code == 2


def test_kl_demo(tmp_path, capsys):
    assert run(["kl-demo", "--out", tmp_path]) == 0
    assert "total=0.5" in capsys.readouterr().out
    assert (tmp_path / "kl_demo.csv").read_text().splitlines()[1].startswith("average,0.5,")
    assert run(["kl-demo", "--projection", "identity", "--out", tmp_path]) == 0
    assert run(["kl-demo", "--projection", "corrupt", "--out", tmp_path]) == 2


def test_certify_without_seed_exits_two(tmp_path, fast_config, capsys):
    assert run(["certify", "--config", fast_config, "--out", tmp_path]) == 2
    assert "run.seed" in capsys.readouterr().err


def test_missing_config_file_exits_three(tmp_path):
    assert run(["certify", "--config", tmp_path / "absent.cfg", "--seed", 1]) == 3


def test_gen_data_and_reload(tmp_path, fast_config):
    data = tmp_path / "data"
    assert run(["gen-data", "--config", fast_config, "--seed", 2, "--out", data]) == 0
    names = {p.name for p in data.iterdir()}
    assert {"prior.csv", "train.csv", "val.csv", "representatives.csv", "manifest.csv",
            "resolved_config.txt"} <= names
    resolved = load_config(data / "resolved_config.txt")
    assert resolved["run.seed"] == 2 and resolved["scenario.n_train"] == 200
    cfg = tmp_path / "reload.cfg"
    cfg.write_text(FAST + f"data.dir = {data}\n")
    assert run(["certify", "--config", cfg, "--seed", 2, "--out", tmp_path / "cert"]) == 0


def test_malformed_data_exits_three(tmp_path, fast_config):
    data = tmp_path / "data"
    assert run(["gen-data", "--config", fast_config, "--seed", 2, "--out", data]) == 0
    lines = (data / "train.csv").read_text().splitlines()
    (data / "train.csv").write_text("\n".join(lines[:5] + ["0.1"]) + "\n")
    cfg = tmp_path / "reload.cfg"
    cfg.write_text(FAST + f"data.dir = {data}\n")
    assert run(["certify", "--config", cfg, "--seed", 2, "--out", tmp_path / "cert"]) == 3


def test_certify_is_byte_identical(tmp_path, fast_config):
    for out in ("a", "b"):
        assert run(["certify", "--config", fast_config, "--seed", 7, "--out", tmp_path / out]) == 0
    for name in ("certificates.csv", "risks.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = (tmp_path / "a" / "certificates.csv").read_text().splitlines()
    assert len(rows) == 7
    assert rows[0].split(",")[:4] == ["model", "variant", "status", "rhs"]


def test_linear_family_with_skewed_kernel_marks_rows_skipped(tmp_path, fast_config):
    cfg = tmp_path / "linear.cfg"
    cfg.write_text(FAST + "model.family = linear\nscenario.kernel = nonuniform\n")
    assert run(["certify", "--config", cfg, "--seed", 1, "--out", tmp_path]) == 0
    rows = (tmp_path / "certificates.csv").read_text().splitlines()[1:]
    assert rows[0].split(",")[2] == "ok"
    assert all(r.split(",")[2].startswith("skipped") for r in rows[1:])


def test_compare_outputs(tmp_path, fast_config):
    cfg = tmp_path / "cmp.cfg"
    cfg.write_text(FAST + "scenario.name = restricted-rotation\n")
    assert run(["compare", "--config", cfg, "--seed", 3, "--out", tmp_path]) == 0
    hist = (tmp_path / "histogram.csv").read_text().splitlines()
    assert hist[0] == "model_tag,sample_index,test_error"
    assert len(hist) == 1 + 2 * 32
    summary = (tmp_path / "summary.csv").read_text().splitlines()
    assert [r.split(",")[:2] for r in summary[1:]] == [["baseline", "mcallester"], ["equivariant", "representative"]]


def test_empty_sweep_grid_writes_header_only(tmp_path, fast_config):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text(FAST + "sweep.n =\n")
    assert run(["sweep", "--config", cfg, "--seed", 1, "--out", tmp_path]) == 0
    assert (tmp_path / "sweep.csv").read_text() == ",".join(SWEEP_HEADER) + "\n"


def test_sweep_records_bad_points(tmp_path, fast_config):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text(FAST + "sweep.n = 100\nsweep.group_order = 4\n")
    assert run(["sweep", "--config", cfg, "--seed", 1, "--out", tmp_path]) == 0
    rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(rows) == 2
    fields = rows[1].split(",")
    assert fields[4] == "error" and "group order" in rows[1]


def test_axioms_check_passes_and_reports_corruption(tmp_path, fast_config, capsys):
    assert run(["axioms-check", "--config", fast_config, "--seed", 1, "--out", tmp_path]) == 0
    table = np.array([[0, 1], [1, 1]])
    args = argparse.Namespace()
    code = cmd_axioms_check(args, parse_config(FAST), tmp_path, group_override=FiniteGroupTable(table, [0, 1]))
    assert code == 1
    assert "first failing suite: group-axioms" in capsys.readouterr().err
