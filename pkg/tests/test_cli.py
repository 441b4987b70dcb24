import json
from pathlib import Path

import pytest

from flexv.cli import main
from flexv.isa import CSRS, OPS
from flexv.manual import render

HERE = Path(__file__).parent
FIX = HERE / "fixtures"


def test_manual_lists_every_mnemonic_and_csr():
    text = render()
    for m in OPS:
        assert f"`{m}`" in text
    for c in CSRS.values():
        assert f"`{c.name}`" in text and f"{c.addr:#05x}" in text


def test_manual_lists_timing_constants_with_ranges():
    text = render()
    raw = json.loads((HERE.parent / "src/flexv/data/timing.json").read_text())
    for name, (lo, hi) in raw["ranges"].items():
        assert f"| `{name}` | {raw[name]} | [{lo}, {hi}] |" in text


def test_committed_manual_is_current():
    assert (HERE.parent / "docs/isa.md").read_text() == render()


def test_isa_manual_command(tmp_path, capsys):
    assert main(["isa-manual"]) == 0
    assert "ml.sdotp" in capsys.readouterr().out
    out = tmp_path / "isa.md"
    assert main(["isa-manual", "--output", str(out)]) == 0
    assert out.read_text() == render()


def test_verify_passes_and_fault_fails(capsys):
    assert main(["verify", "--count", "2", "--precision", "a4w2"]) == 0
    assert "4/4 cases bit-exact" in capsys.readouterr().out
    assert main(["verify", "--count", "6", "--precision", "a8w8", "--inject", "stride"]) == 1
    out = capsys.readouterr().out
    assert "FAIL" in out and "first diverging byte" in out and "0x1000" in out


def test_run_network_report_is_stable(tmp_path, capsys):
    out = tmp_path / "r.json"
    rc = main(["run-network", str(FIX / "small-net.json"), "--cores", "4", "--budget", "2500",
               "--json", str(out), "--output", str(tmp_path / "y.fxvt")])
    assert rc == 0
    assert "bit-exact" in capsys.readouterr().out
    assert json.loads(out.read_text()) == json.loads((FIX / "small-net-report.json").read_text())
    assert (tmp_path / "y.fxvt").read_bytes()[:4] == b"FXVT"


def test_schema_error_exit_code(tmp_path, capsys):
    bad = json.loads((FIX / "small-net.json").read_text())
    bad["layers"][0]["stride"] = 0
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(bad))
    assert main(["run-network", str(p)]) == 2
    assert "/layers/0/stride" in capsys.readouterr().err


def test_bad_flags():
    with pytest.raises(SystemExit):
        main(["bench", "--precision", "a3"])
    with pytest.raises(SystemExit):
        main(["bench", "--cores", "9"])


def test_bench_single_core_scales_linearly(tmp_path, capsys):
    js, cs = tmp_path / "b.json", tmp_path / "b.csv"
    rc = main(["bench", "--case", "a2w2", "--cores", "1", "--json", str(js), "--csv", str(cs)])
    doc = json.loads(js.read_text())
    case = doc["cases"][0]
    assert case["expected"] == pytest.approx(91.5 / 8)
    assert rc == (0 if case["passed"] else 1)
    assert case["passed"], case
    assert cs.read_text().startswith("pair,mode,cores")
