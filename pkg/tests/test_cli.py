from vbe.cli import main

SMALL = """
[env]
name = "deepsea"
grid_size = 4

[agent]
name = "vbe"
k = 2
batch_size = 8

[training]
episodes = 3
"""


def test_run_prints_csv(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text(SMALL)
    assert main(["run", "--config", str(cfg), "--seed", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "run,seed,step,episode,metric,coverage"
    assert len(lines) == 4


def test_run_writes_file(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text(SMALL)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    written = list((tmp_path / "o").glob("*.csv"))
    assert len(written) == 1


def test_sweep_summary(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text(SMALL)
    assert main(["sweep", "--config", str(cfg), "--k", "1,2", "--c", "1"]) == 0
    captured = capsys.readouterr()
    assert captured.out.splitlines()[0] == "k,c,final_window_mean,area_under_curve"
    assert len(captured.out.splitlines()) == 3
    assert "best cell" in captured.err


def test_coverage(capsys):
    assert main(["coverage", "--grids", "3", "--episodes", "50", "--runs", "1"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == "grid,run,episodes,coverage,ceiling"
    assert rows[1].split(",")[-1] == "6"


def test_bad_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text('[env]\nname = "pong"\n[training]\nepisodes = 1\n')
    assert main(["run", "--config", str(cfg)]) == 2
    assert "env.name" in capsys.readouterr().err
