import shutil
import subprocess
import sys

import pytest

from fslkit.cli import EXIT_CHECK, EXIT_CUCKOO, EXIT_OK, EXIT_USAGE, bundled_scenarios, main
from fslkit.dpf import DpfParams, dpf_deserialize, dpf_eval
from fslkit.group import GroupParams


@pytest.fixture
def out(tmp_path, monkeypatch):
    monkeypatch.setenv("FSLKIT_OUT", str(tmp_path))
    return tmp_path


def test_dpf_gen_and_eval(out, capsys):
    assert main(["dpf", "gen", "--depth", "9", "--alpha", "300", "--beta-hex", "ff" * 16, "--seed", "1"]) == EXIT_OK
    k0 = (out / "key0.dpf").read_bytes()
    k1 = (out / "key1.dpf").read_bytes()
    assert len(k0) == len(k1) == 8 + -(-1426 // 8)
    capsys.readouterr()
    shares = []
    for party, path in ((0, "key0.dpf"), (1, "key1.dpf")):
        assert main(["dpf", "eval", "--key", str(out / path), "--party", str(party), "--x", "300"]) == EXIT_OK
        shares.append(int(capsys.readouterr().out.strip(), 16))
    assert (shares[0] + shares[1]) % (1 << 128) == (1 << 128) - 1
    key = dpf_deserialize(k0, party=0)
    assert key.params == DpfParams(9, GroupParams(128, 1))
    assert dpf_eval(key, 300).elems[0] == shares[0]


def test_dpf_eval_full(out, capsys):
    main(["dpf", "gen", "--depth", "3", "--alpha", "2", "--beta-hex", "07", "--l", "32", "--seed", "2"])
    capsys.readouterr()
    assert main(["dpf", "eval", "--key", str(out / "key0.dpf"), "--party", "0", "--full"]) == EXIT_OK
    assert len(capsys.readouterr().out.splitlines()) == 8


@pytest.mark.parametrize(
    "argv",
    [
        ["dpf", "eval", "--key", "KEY", "--party", "0", "--x", "512"],
        ["dpf", "eval", "--key", "KEY", "--party", "0"],
        ["dpf", "eval", "--key", "missing.dpf", "--party", "0", "--x", "1"],
        ["dpf", "eval", "--key", "KEY", "--party", "2", "--x", "1"],
        ["dpf", "gen", "--depth", "4", "--alpha", "16", "--beta-hex", "01"],
        ["dpf", "gen", "--depth", "4", "--alpha", "1", "--beta-hex", "zz"],
        ["dpf", "gen", "--depth", "4", "--alpha", "1", "--beta-hex", "01" * 17],
        ["dpf", "gen", "--depth", "4", "--alpha", "1", "--beta-hex", "01", "--l", "48"],
        ["params", "--m", "100"],
        ["params", "--m", "10", "--k", "100"],
        ["nonsense"],
        [],
    ],
)
def test_usage_errors(out, argv):
    main(["dpf", "gen", "--depth", "9", "--alpha", "1", "--beta-hex", "01", "--seed", "0"])
    argv = [str(out / "key0.dpf") if a == "KEY" else a for a in argv]
    assert main(argv) == EXIT_USAGE


def test_selftest(capsys):
    assert main(["dpf", "selftest", "--depth", "6"]) == EXIT_OK
    assert "ok" in capsys.readouterr().out
    assert main(["dpf", "selftest", "--depth", "4", "--l", "32", "--tau", "3", "--trials", "5"]) == EXIT_OK


def test_selftest_reports_failure(monkeypatch):
    import fslkit.cli as cli

    monkeypatch.setattr(cli, "dpf_selftest", lambda *a, **k: ["alpha=1 x=1"])
    assert main(["dpf", "selftest"]) == EXIT_CHECK


def test_bundled_scenarios_listed():
    assert {"small_ssa.scn", "udpf_3round.scn"} <= set(bundled_scenarios())


def test_run_small_ssa(out, capsys):
    assert main(["run", "examples/small_ssa.scn"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "oracle_match = true" in text
    assert (out / "small_ssa.messages.csv").is_file()
    assert (out / "small_ssa.summary.txt").read_text() == text


def test_run_udpf_has_hint_sized_rounds(out, capsys):
    assert main(["run", "udpf_3round"]) == EXIT_OK
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("round ")]
    sizes = [int(ln.split("client0_upload_bytes=")[1].split()[0]) for ln in lines]
    assert len(sizes) == 3
    assert sizes[1] == sizes[2] < sizes[0] / 10


def test_run_psr(out, capsys):
    assert main(["run", "small_ssa", "--psr"]) == EXIT_OK
    assert "kind = psr" in capsys.readouterr().out


def test_run_errors(out, tmp_path):
    empty = tmp_path / "empty.scn"
    empty.write_text("")
    assert main(["run", str(empty)]) == EXIT_USAGE
    assert main(["run", "no_such_scenario"]) == EXIT_USAGE
    tight = tmp_path / "tight.scn"
    tight.write_text("m = 200\nk = 16\nn = 1\nbins = 12\n")
    assert main(["run", str(tight)]) == EXIT_CUCKOO


def test_run_is_deterministic(out, capsys):
    main(["run", "small_ssa"])
    a = capsys.readouterr().out
    main(["run", "small_ssa"])
    b = capsys.readouterr().out
    digest = [ln for ln in a.splitlines() if ln.startswith("digest")]
    assert digest and digest == [ln for ln in b.splitlines() if ln.startswith("digest")]


def test_rate(capsys):
    assert main(["rate", "--paper-check"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "FAIL" not in text
    assert main(["rate", "--tau", "18"]) == EXIT_OK
    assert "threshold c = 53.06%" in capsys.readouterr().out
    assert main(["rate", "--depth", "5"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "threshold c = 13.16%" in text and "13.4%" in text
    assert main(["rate", "--format", "csv", "--c", "0.1"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("m,k,c,")


def test_rate_check_detects_drift(monkeypatch):
    import fslkit.analytics as A

    monkeypatch.setitem(A.COMM_TABLE_OURS, (1 << 20, 0.10), 25.0)
    assert main(["rate", "--paper-check"]) == EXIT_CHECK


def test_params(capsys):
    assert main(["params", "--m", "1048576", "--k", "104857"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "epsilon = 1.27" in out
    depth = int(out.split("depth = ")[1].split()[0])
    assert depth <= 9
    assert main(["params", "--m", "100", "--k", "100"]) == EXIT_OK
    assert "warning: c = 100%" in capsys.readouterr().err


def test_bench(out, capsys):
    assert main(["bench", "--m", "256", "--c", "0.1", "--out-file", "b.csv"]) == EXIT_OK
    text = (out / "b.csv").read_text()
    assert text.startswith("m,k,c,tau,sigma,mode,round,client_upload_bytes")


@pytest.mark.skipif(shutil.which("fslkit") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["fslkit", "params", "--m", "1024", "--k", "100"], capture_output=True, text=True)
    assert res.returncode == 0 and "depth" in res.stdout
    res = subprocess.run([sys.executable, "-m", "fslkit.cli", "params"], capture_output=True, text=True)
    assert res.returncode == 2
