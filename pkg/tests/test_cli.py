import socket
import subprocess
import sys

import pytest

from analog_cartpole.cli import build_config, main, read_config_file, UsageFailure

SMALL = ["--set", "rbf_exemplars=20", "--set", "rbf_gamma_count=2", "--max-steps", "100"]


def cli(*argv):
    return subprocess.run([sys.executable, "-m", "analog_cartpole.cli", *argv],
                          capture_output=True, text=True, timeout=120)


@pytest.mark.parametrize("sub", ["emulate", "train", "run", "baseline"])
def test_help_exits_zero(sub, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as info:
        main([sub, "--help"])
    assert info.value.code == 0
    assert list(tmp_path.iterdir()) == []


def test_train_writes_csv_and_snapshots(tmp_path, capsys):
    brain = tmp_path / "b.json"
    metrics = tmp_path / "m.csv"
    rc = main(["train", "--episodes", "25", "--probe", "10", "--seed", "3", "--virtual-time",
               "--brain", str(brain), "--metrics", str(metrics), *SMALL])
    assert rc == 0
    lines = metrics.read_text().splitlines()
    assert lines[0] == "episode,steps,reward,epsilon,eta"
    assert len(lines) == 26
    assert sorted(p.name for p in tmp_path.glob("b*.json")) == \
        ["b-00010.json", "b-00020.json", "b.json"]
    assert "median steps over last 25 episodes" in capsys.readouterr().out


def test_single_episode_csv(tmp_path):
    metrics = tmp_path / "m.csv"
    assert main(["train", "--episodes", "1", "--virtual-time", "--in-process", "--seed", "1",
                 "--brain", str(tmp_path / "b.json"), "--metrics", str(metrics),
                 *SMALL]) == 0
    assert len(metrics.read_text().splitlines()) == 2


def test_wire_and_in_process_agree(tmp_path):
    outs = []
    for extra in ([], ["--in-process"]):
        metrics = tmp_path / f"m{len(outs)}.csv"
        main(["train", "--episodes", "5", "--virtual-time", "--seed", "9", *extra,
              "--brain", str(tmp_path / "b.json"), "--metrics", str(metrics), *SMALL])
        outs.append(metrics.read_bytes())
    assert outs[0] == outs[1]


def test_run_reports_disturbance(tmp_path, capsys):
    brain = tmp_path / "b.json"
    main(["train", "--episodes", "2", "--virtual-time", "--in-process", "--seed", "1",
          "--brain", str(brain), "--metrics", str(tmp_path / "m.csv"), *SMALL])
    capsys.readouterr()
    rc = main(["run", "--brain", str(brain), "--virtual-time", "--in-process", "--seed", "1",
               "--disturb", "5.0:100@0.0"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "disturbance 5.0:100 at step 0" in out
    assert "episode 1:" in out


def test_run_missing_or_corrupt_brain(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{\"format\": ")
    assert main(["run", "--brain", str(bad), "--virtual-time", "--in-process"]) == 2
    assert main(["run", "--brain", str(tmp_path / "none.json"), "--virtual-time"]) == 2
    assert main(["run", "--virtual-time"]) == 2


def test_baseline_round_trip(tmp_path, capsys):
    theta = tmp_path / "t.json"
    argv = ["baseline", "--tries", "1", "--seed", "7", "--virtual-time", "--in-process",
            "--max-steps", "100"]
    assert main(argv + ["--save", str(theta)]) == 0
    first = capsys.readouterr().out
    assert main(argv) == 0
    assert capsys.readouterr().out == first
    assert main(["run", "--theta", str(theta), "--virtual-time", "--in-process",
                 "--max-steps", "100"]) == 0


def test_bad_settings_exit_two(tmp_path):
    assert main(["baseline", "--tries", "1", "--set", "warp=9"]) == 2
    assert main(["baseline", "--tries", "1", "--set", "gamma=2"]) == 2
    assert main(["run", "--theta", "x", "--disturb", "nope"]) == 2


def test_config_file_and_precedence(tmp_path):
    path = tmp_path / "c.conf"
    path.write_text("# comment\ngamma = 0.9\nmode = full\nreadout_scale_phi = 2\n"
                    "machine_units = yes\n")
    settings = read_config_file(path)
    cfg = build_config(settings, "virtual", 5)
    assert cfg.hyper.gamma == 0.9 and cfg.plant.mode == "full"
    assert cfg.emulator.gain("phi") == 2.0 and cfg.emulator.machine_units
    assert cfg.emulator.seed == 5
    settings["gamma"] = "0.5"
    assert build_config(settings, "virtual", None).hyper.gamma == 0.5
    path.write_text("gamma 0.9\n")
    with pytest.raises(UsageFailure):
        read_config_file(path)


def test_emulate_stdio():
    proc = subprocess.run([sys.executable, "-m", "analog_cartpole.cli", "emulate", "--stdio",
                           "--virtual-time", "--seed", "1"],
                          input=b"G0223;0222;0161;0160. i o f", capture_output=True,
                          timeout=60)
    assert proc.returncode == 0
    values = proc.stdout.decode().strip().split(";")
    assert len(values) == 4 and all(len(v.split(".")[1]) == 4 for v in values)


def test_emulate_listen_prints_port_and_refuses_second_client():
    proc = subprocess.Popen([sys.executable, "-m", "analog_cartpole.cli", "emulate",
                             "--listen", "127.0.0.1:0", "--virtual-time", "--sessions", "1"],
                            stdout=subprocess.PIPE, text=True)
    try:
        line = proc.stdout.readline()
        assert line.startswith("listening on 127.0.0.1:")
        port = int(line.rsplit(":", 1)[1])
        first = socket.create_connection(("127.0.0.1", port), timeout=5)
        first.sendall(b"g0223")
        reader = first.makefile("rb")
        assert reader.readline() == b"0.0000 0223\n"
        second = socket.create_connection(("127.0.0.1", port), timeout=5)
        assert second.makefile("rb").readline() == b"? busy\n"
        second.close()
        reader.close()
        first.close()
        assert proc.wait(timeout=10) == 0
    finally:
        proc.kill()


def test_bind_failure_is_reported():
    holder = socket.create_server(("127.0.0.1", 0))
    try:
        port = holder.getsockname()[1]
        proc = cli("emulate", "--listen", f"127.0.0.1:{port}")
        assert proc.returncode == 1
        assert "cannot listen" in proc.stderr
    finally:
        holder.close()
