import csv
import io

import pytest

from apps import CORPUS
from secfb.cli import EXIT_INVALID, EXIT_IO, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def plan_dir(tmp_path, capsys):
    out = tmp_path / "plan"
    code, stdout, _ = run(capsys, "compile", "@casestudy", "--out", str(out), "--group", "toy23")
    assert code == EXIT_OK and "wrote 4 device files" in stdout
    return out


def test_inspect_case_study(capsys):
    code, out, _ = run(capsys, "inspect", "@casestudy")
    assert code == EXIT_OK
    assert "3 secure links" in out and "3 across devices" in out
    assert "link 1 secure   diff.TRIP->breaker.DIFF_TRIP data 239.0.0.1:61000" in out
    assert "link 3 secure   ef.TRIP->breaker.EF_TRIP data 239.0.0.1:61000" in out


def test_inspect_custom_base(capsys):
    code, out, _ = run(capsys, "inspect", "@casestudy", "--base-port", "50000")
    assert code == EXIT_OK and "data 239.0.0.1:50003" in out
    assert run(capsys, "inspect", "@casestudy", "--base-group", "10.0.0.1")[0] == EXIT_USAGE


def test_compile_writes_documents(plan_dir):
    assert sorted(p.name for p in plan_dir.iterdir()) == [
        "IED_CB.fbs",
        "IED_DIFF.fbs",
        "IED_EF.fbs",
        "IED_OC.fbs",
        "manifest.txt",
    ]
    assert "CLSender_0" in (plan_dir / "IED_OC.fbs").read_text()


def test_run_virtual(plan_dir, capsys):
    code, out, _ = run(capsys, "run", str(plan_dir), "--duration", "0.5", "--latency-ms", "1")
    assert code == EXIT_OK
    assert "link 1: 44 samples, L min 1 ms, max 1 ms" in out
    assert "CLRecv.DHResponder:sessions = 2" in out


def test_run_faulted_device(plan_dir, capsys):
    doc = plan_dir / "IED_OC.fbs"
    doc.write_text(doc.read_text().replace('"toy23"', '"modp9"'))
    code, out, _ = run(capsys, "run", str(plan_dir), "--duration", "0.2", "--device", "IED_OC")
    assert code == EXIT_RUNTIME and "fault" in out


def test_run_unknown_device(plan_dir, capsys):
    code, _, err = run(capsys, "run", str(plan_dir), "--device", "Nope")
    assert code == EXIT_USAGE and "unknown device Nope" in err


def test_bench_table_and_csv(capsys):
    args = ("bench", "@casestudy", "--keysize", "128", "--group", "toy23")
    code, out, _ = run(capsys, *args)
    assert code == EXIT_OK
    assert out.startswith("Latency of FBs over 100 cycles")
    assert "AES128                      0-0 ms (mean 0.00)  1-1 ms (mean 1.00)" in out
    code, out, _ = run(capsys, *args, "--format", "csv", "--topology", "single")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == EXIT_OK and rows[0][0] == "config" and len(rows) == 1 + 600


def test_bench_figure(tmp_path, capsys):
    pytest.importorskip("matplotlib")
    fig = tmp_path / "f.png"
    code, _, err = run(capsys, "bench", "@casestudy", "--no-encrypt", "--figure", str(fig))
    assert code == EXIT_OK and fig.exists() and "figure written" in err


@pytest.mark.parametrize(
    "argv, code",
    [
        (["bogus"], EXIT_USAGE),
        (["bench", "@casestudy", "--cycles", "10"], EXIT_USAGE),
        (["bench", "@casestudy", "--keysize", "100"], EXIT_USAGE),
        (["inspect", "/nonexistent/app.fbs"], EXIT_IO),
        (["inspect", str(CORPUS / "invalid" / "unknown_device.fbs")], EXIT_INVALID),
        (["inspect", str(CORPUS / "invalid" / "syntax_error.fbs")], EXIT_INVALID),
        (["compile", str(CORPUS / "invalid" / "unsupported_alg.fbs"), "--out", "/tmp/secfb-never"], EXIT_INVALID),
        (["compile", "@casestudy", "--out", "/proc/secfb-never"], EXIT_IO),
        (["run", "/nonexistent-plan"], EXIT_IO),
    ],
)
def test_exit_codes(argv, code, capsys):
    try:
        got = main(argv)
    except SystemExit as exc:
        got = exc.code
    assert got == code
