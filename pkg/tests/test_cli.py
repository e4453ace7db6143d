"""CLI harness: subcommands, exit codes, and the TCP stream path."""

import hashlib
import json
import socket
import threading

import pytest

from respsim.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture()
def capture_path(tmp_path, capsys):
    out = str(tmp_path / "session.raw")
    code, _, _ = run_cli(capsys, "simulate", "--out", out, "--duration", "60")
    assert code == 0
    return out


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def test_simulate_writes_capture_and_truth(tmp_path, capsys):
    out = str(tmp_path / "s.raw")
    code, stdout, _ = run_cli(capsys, "simulate", "--out", out, "--duration", "60")
    assert code == 0
    assert "630 frames" in stdout
    data = (tmp_path / "s.raw").read_bytes()
    assert len(data) > 0
    truth = json.loads((tmp_path / "s.raw.truth.json").read_text())
    assert truth["counts"]["frames"] == 630
    assert len(truth["breath_times_ms"]) == 15


def test_simulate_is_hash_stable(tmp_path, capsys):
    hashes = []
    for name in ("a.raw", "b.raw"):
        out = str(tmp_path / name)
        assert run_cli(capsys, "simulate", "--out", out, "--seed", "3")[0] == 0
        payload = (tmp_path / name).read_bytes() + (tmp_path / (name + ".truth.json")).read_bytes()
        hashes.append(hashlib.sha256(payload).hexdigest())
    assert hashes[0] == hashes[1]


def test_simulate_with_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("rate_bpm: 10\nduration_s: 30\n")
    out = str(tmp_path / "s.raw")
    code, _, _ = run_cli(capsys, "simulate", "--config", str(cfg), "--out", out)
    assert code == 0
    truth = json.loads((tmp_path / "s.raw.truth.json").read_text())
    assert len(truth["breath_times_ms"]) == 5  # 10 bpm for 30 s


def test_simulate_rejects_bad_config(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("firmware:\n  accel_batch: 100\n")
    code, _, err = run_cli(capsys, "simulate", "--config", str(cfg),
                           "--out", str(tmp_path / "s.raw"))
    assert code == 1
    assert "accel_batch" in err


def test_simulate_rejects_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("duraton_s: 10\n")
    code, _, err = run_cli(capsys, "simulate", "--config", str(cfg),
                           "--out", str(tmp_path / "s.raw"))
    assert code == 1
    assert "duraton_s" in err


def test_missing_config_file_is_io_error(tmp_path, capsys):
    code, _, err = run_cli(capsys, "simulate", "--config", str(tmp_path / "nope.yaml"),
                           "--out", str(tmp_path / "s.raw"))
    assert code == 2


def test_usage_error_exits_one(capsys):
    assert run_cli(capsys, "simulate")[0] == 1          # --out is required
    assert run_cli(capsys, "no-such-command")[0] == 1
    assert run_cli(capsys)[0] == 1


# ---------------------------------------------------------------------------
# decode
# ---------------------------------------------------------------------------

def test_decode_prints_one_line_per_frame(capture_path, capsys):
    code, stdout, err = run_cli(capsys, "decode", capture_path)
    assert code == 0
    lines = stdout.splitlines()
    assert len(lines) == 630
    first = json.loads(lines[0])
    # the t=0 battery measurement frames out before any batch fills
    assert first["kind"] == "battery_status"
    assert first["seq"] == 0
    first_fsr = next(
        json.loads(l) for l in lines if json.loads(l)["kind"] == "fsr_batch"
    )
    assert first_fsr["t0_ms"] == 0
    assert len(first_fsr["codes"]) == 5
    assert "630 frames, 0 resyncs" in err


def test_decode_to_file(capture_path, tmp_path, capsys):
    out = str(tmp_path / "frames.jsonl")
    code, stdout, _ = run_cli(capsys, "decode", capture_path, "--out", out)
    assert code == 0
    assert stdout == ""
    assert len((tmp_path / "frames.jsonl").read_text().splitlines()) == 630


def test_decode_missing_input(capsys, tmp_path):
    assert run_cli(capsys, "decode", str(tmp_path / "nope.raw"))[0] == 2


def test_decode_empty_file_is_ok(tmp_path, capsys):
    p = tmp_path / "empty.raw"
    p.write_bytes(b"")
    code, stdout, _ = run_cli(capsys, "decode", str(p))
    assert code == 0
    assert stdout == ""


def test_decode_pure_garbage_is_corrupt(tmp_path, capsys):
    p = tmp_path / "junk.raw"
    p.write_bytes(bytes(range(1, 200)) * 3)
    code, _, err = run_cli(capsys, "decode", str(p))
    assert code == 3
    assert "no decodable frames" in err


def test_decode_survives_mid_stream_corruption(capture_path, tmp_path, capsys):
    raw = bytearray(open(capture_path, "rb").read())
    for i in range(40, 400, 60):
        raw[i] ^= 0xFF
    p = tmp_path / "dented.raw"
    p.write_bytes(bytes(raw))
    code, stdout, err = run_cli(capsys, "decode", str(p))
    assert code == 0
    decoded = len(stdout.splitlines())
    assert 600 <= decoded < 630
    assert "resyncs" in err


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def test_analyze_summary_and_csv(capture_path, tmp_path, capsys):
    out = str(tmp_path / "rows.csv")
    code, stdout, _ = run_cli(capsys, "analyze", capture_path, "--out", out)
    assert code == 0
    summary = json.loads(stdout)
    assert summary["fsr_samples"] == 1500
    assert summary["accel_samples"] == 3000
    assert summary["battery_reports"] == 30
    assert summary["median_rate_bpm"] == pytest.approx(15.0, abs=1.0)
    assert summary["export"]["rows"] == summary["fsr_samples"] + \
        summary["accel_samples"] + summary["battery_reports"] + \
        summary["breaths_detected"] + len(summary["alerts"]) + 1
    lines = (tmp_path / "rows.csv").read_text().splitlines()
    assert len(lines) == summary["export"]["rows"] + 1


def test_analyze_jsonl_format(capture_path, tmp_path, capsys):
    out = str(tmp_path / "rows.jsonl")
    code, stdout, _ = run_cli(capsys, "analyze", capture_path,
                              "--out", out, "--format", "jsonl")
    assert code == 0
    rows = [json.loads(l) for l in (tmp_path / "rows.jsonl").read_text().splitlines()]
    assert sum(1 for r in rows if r["record"] == "estimate") == 1


def test_analyze_garbage_only_is_corrupt(tmp_path, capsys):
    p = tmp_path / "junk.raw"
    p.write_bytes(b"\x00\x01\x02" * 100)
    assert run_cli(capsys, "analyze", str(p))[0] == 3


def test_analyze_empty_capture(tmp_path, capsys):
    p = tmp_path / "empty.raw"
    p.write_bytes(b"")
    code, stdout, _ = run_cli(capsys, "analyze", str(p))
    assert code == 0
    assert json.loads(stdout)["fsr_samples"] == 0


# ---------------------------------------------------------------------------
# stream
# ---------------------------------------------------------------------------

def test_stream_round_trip_over_tcp(tmp_path, capsys):
    port = free_port()
    received = {}

    def receiver():
        with socket.socket() as server:
            server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            server.bind(("127.0.0.1", port))
            server.listen(1)
            conn, _ = server.accept()
            chunks = []
            with conn:
                while True:
                    chunk = conn.recv(65536)
                    if not chunk:
                        break
                    chunks.append(chunk)
            received["data"] = b"".join(chunks)

    thread = threading.Thread(target=receiver)
    thread.start()
    code = main(["stream", "--connect", f"127.0.0.1:{port}",
                 "--duration", "10", "--speed", "1000"])
    thread.join(timeout=10)
    assert code == 0
    assert not thread.is_alive()

    # the streamed bytes are exactly what simulate would have written
    ref = str(tmp_path / "ref.raw")
    assert main(["simulate", "--out", ref, "--duration", "10"]) == 0
    capsys.readouterr()
    assert received["data"] == open(ref, "rb").read()


def test_stream_listen_captures_to_file(tmp_path, capsys):
    port = free_port()
    out = str(tmp_path / "captured.raw")
    result = {}

    def listener():
        result["code"] = main(["stream", "--listen", f"127.0.0.1:{port}", "--out", out])

    thread = threading.Thread(target=listener)
    thread.start()
    # stream a short session into the listener
    for _ in range(50):
        try:
            sender = main(["stream", "--connect", f"127.0.0.1:{port}",
                           "--duration", "4", "--speed", "1000"])
            break
        except SystemExit:  # pragma: no cover - defensive
            pass
    thread.join(timeout=10)
    capsys.readouterr()
    assert sender == 0
    assert result["code"] == 0
    data = open(out, "rb").read()
    ref = str(tmp_path / "ref.raw")
    assert main(["simulate", "--out", ref, "--duration", "4"]) == 0
    capsys.readouterr()
    assert data == open(ref, "rb").read()


def test_stream_connection_refused_is_io_error(capsys):
    port = free_port()
    code, _, err = run_cli(capsys, "stream", "--connect", f"127.0.0.1:{port}",
                           "--duration", "2", "--speed", "1000")
    assert code == 2
    assert "i/o error" in err


def test_stream_bad_endpoint_is_usage_error(capsys):
    assert run_cli(capsys, "stream", "--connect", "nonsense",
                   "--duration", "2")[0] == 1


def test_stream_rejects_nonpositive_speed(capsys):
    assert run_cli(capsys, "stream", "--connect", "127.0.0.1:1",
                   "--speed", "0", "--duration", "2")[0] == 1


# ---------------------------------------------------------------------------
# power
# ---------------------------------------------------------------------------

def test_power_surfaces_both_claims(capsys, tmp_path):
    out = str(tmp_path / "audit.json")
    code, stdout, _ = run_cli(capsys, "power", "--duration", "60", "--out", out)
    assert code == 0
    assert "abstract-claim" in stdout
    assert "intro-claim" in stdout
    assert "400" in stdout and "4900" in stdout
    assert "disagree" in stdout
    audit = json.loads((tmp_path / "audit.json").read_text())
    assert audit["reports"]["abstract-claim"]["projected_battery_life_h"] == \
        pytest.approx(4162.5, rel=1e-9)
    assert audit["reports"]["intro-claim"]["projected_battery_life_h"] == \
        pytest.approx(1665.0 / 4.9, rel=1e-9)
    assert audit["claims_disagreement"]["ratio"] == pytest.approx(12.25)


def test_power_preset_flag_headlines_selection(capsys):
    code, stdout, _ = run_cli(capsys, "power", "--duration", "10",
                              "--preset", "intro-claim")
    assert code == 0
    marked = [l for l in stdout.splitlines() if l.endswith("*")]
    assert len(marked) == 1
    assert marked[0].startswith("intro-claim")


def test_power_custom_profile_duty_cycle(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(
        "power:\n  p_idle_uw: 0\n  p_active_uw: 1000\n  p_radio_uw: 5000\n"
    )
    out = str(tmp_path / "audit.json")
    code, stdout, _ = run_cli(capsys, "power", "--config", str(cfg),
                              "--duration", "60", "--out", out)
    assert code == 0
    audit = json.loads((tmp_path / "audit.json").read_text())
    selected = audit["selected"]
    avg = audit["reports"][selected]["average_power_uw"]
    # mostly idle at 0 uW: the duty-cycled average must sit far below active
    assert 0 < avg < 1000
