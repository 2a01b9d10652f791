import json
from pathlib import Path

import pytest

from capmono_plot import PlotSpec, ReportError, load_report, render
from capmono_plot.cli import main

DATA = Path(__file__).parent / "data"
SCHW = DATA / "schwarzschild_report.json"
FLAT = DATA / "flat_report.json"


def test_load_report_validates_schema(tmp_path):
    with pytest.raises(ReportError):
        load_report(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 99, "body": {}}))
    with pytest.raises(ReportError):
        load_report(bad)
    assert load_report(SCHW)["schema_version"] == 1


def test_render_all_panels(tmp_path):
    spec = PlotSpec(reports=(SCHW, FLAT), panels=("F", "G", "margins"),
                    out_dir=tmp_path, fmt="svg")
    result = render(spec)
    assert [p.panel for p in result.panels] == ["F", "G", "margins"]
    for p in result.panels:
        assert p.path.is_file()
        assert p.path.stat().st_size > 1000


def test_png_format(tmp_path):
    spec = PlotSpec(reports=(SCHW,), panels=("G",), out_dir=tmp_path, fmt="png")
    out = render(spec).files[0]
    assert out.suffix == ".png"
    assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_missing_curve_is_error(tmp_path):
    data = json.loads(SCHW.read_text())
    del data["body"]["curve"]
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps(data))
    spec = PlotSpec(reports=(broken,), panels=("F",), out_dir=tmp_path)
    with pytest.raises(ReportError, match="curve"):
        render(spec)


def test_spec_validation(tmp_path):
    with pytest.raises(ReportError):
        PlotSpec(reports=(SCHW,), panels=(), out_dir=tmp_path)
    with pytest.raises(ReportError):
        PlotSpec(reports=(SCHW,), panels=("F", "Z"), out_dir=tmp_path)
    with pytest.raises(ReportError):
        PlotSpec(reports=(SCHW,), panels=("F",), out_dir=tmp_path, fmt="gif")


def test_convergence_panel_requires_grid_validate(tmp_path):
    spec = PlotSpec(reports=(SCHW,), panels=("convergence",), out_dir=tmp_path)
    with pytest.raises(ReportError, match="grid-validate"):
        render(spec)


def test_grid_audit_report_renders(tmp_path):
    # grid-mode curves carry no geometric F' (null in the rows); panels must
    # still render from the remaining columns
    grid = DATA / "schwarzschild_grid_report.json"
    spec = PlotSpec(reports=(grid,), panels=("F", "G", "margins"), out_dir=tmp_path)
    result = render(spec)
    assert all(p.path.is_file() for p in result.panels)
    f_extent = next(iter(result.panels[0].extents.values()))
    assert f_extent[0] > 0  # t axis positive


def test_convergence_panel_renders(tmp_path):
    gv = DATA / "grid_validate_report.json"
    spec = PlotSpec(reports=(gv,), panels=("convergence",), out_dir=tmp_path)
    result = render(spec)
    panel = result.panels[0]
    assert panel.path.is_file()
    orders = next(iter(panel.extents.values()))
    assert all(o >= 0.8 for o in orders)


def test_renders_have_identical_extents(tmp_path):
    spec1 = PlotSpec(reports=(FLAT,), panels=("F", "G"), out_dir=tmp_path / "a")
    spec2 = PlotSpec(reports=(FLAT,), panels=("F", "G"), out_dir=tmp_path / "b")
    r1, r2 = render(spec1), render(spec2)
    for p1, p2 in zip(r1.panels, r2.panels):
        assert p1.extents == p2.extents
        assert p1.overlays == p2.overlays


def test_cli_roundtrip(tmp_path, capsys):
    rc = main(["--report", str(SCHW), "--report", str(FLAT),
               "--panels", "F,G,margins", "--out", str(tmp_path), "--format", "svg"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "wrote" in out
    assert (tmp_path / "F.svg").is_file()
    assert (tmp_path / "G.svg").is_file()
    assert (tmp_path / "margins.svg").is_file()


def test_cli_error_path(tmp_path, capsys):
    rc = main(["--report", str(tmp_path / "no.json"), "--out", str(tmp_path)])
    assert rc == 2
    assert "error" in capsys.readouterr().err
