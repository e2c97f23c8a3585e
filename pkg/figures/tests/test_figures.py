"""Tests for the figure scripts: schema checks, rendering, idempotency.

These tests synthesize schema-conformant CSVs; the primary toolkit is never
imported (the CSV contract is the whole interface).
"""

import json
import sys

import pytest
from PIL import Image

from seqdyn_figures import FigureSpec, SchemaError, render
from seqdyn_figures.plot_decay import main as decay_main


def write_csv(path, scenario, header, rows):
    lines = [f"# schema: {scenario}.v1", ",".join(header)]
    lines += [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture
def sample_inputs(tmp_path):
    csvs = {}
    csvs["decay"] = write_csv(
        tmp_path / "decay.csv", "decay",
        ["n", "min", "max", "variation", "l1", "bv"],
        [[n, -0.5 * 0.5**n, 0.5 * 0.5**n, 0.999 * 0.5**n, 0.25 * 0.5**n, 1.249 * 0.5**n]
         for n in range(12)])
    csvs["tail"] = write_csv(
        tmp_path / "tail.csv", "ld_tail",
        ["t", "empirical_prob"],
        [[0.0, 0.5], [0.01, 0.31], [0.02, 0.12], [0.05, 0.004], [0.1, 0.0]])
    csvs["kantorovich_scaling"] = write_csv(
        tmp_path / "emp.csv", "empirical_measure",
        ["n", "mean_kappa", "se_kappa"],
        [[2**k, 0.45 * 2 ** (-k / 2.0), 0.001] for k in range(6, 13)])
    csvs["asclt_cdf"] = write_csv(
        tmp_path / "asclt.csv", "asclt",
        ["t", "empirical_cdf", "normal_cdf"],
        [[-4 + 0.05 * i, min(1.0, max(0.0, 0.5 + 0.18 * (-4 + 0.05 * i))),
          min(1.0, max(0.0, 0.5 + 0.2 * (-4 + 0.05 * i)))] for i in range(161)])
    summary = tmp_path / "decay.json"
    summary.write_text(json.dumps({"fitted": {"theta_hat": 0.494, "k_hat": 1.03}}))
    return tmp_path, csvs, str(summary)


def pixels(path):
    with Image.open(path) as img:
        return img.tobytes()


class TestRender:
    def test_all_four_kinds_render(self, sample_inputs):
        tmp_path, csvs, summary = sample_inputs
        for kind, csv_path in csvs.items():
            out = tmp_path / f"{kind}.png"
            got = render(FigureSpec(kind=kind, csv_path=csv_path, out_path=str(out),
                                    summary_path=summary if kind == "decay" else None))
            assert got == str(out)
            assert out.stat().st_size > 0
            with Image.open(out) as img:
                assert img.size[0] > 100

    def test_idempotent_pixels(self, sample_inputs):
        tmp_path, csvs, summary = sample_inputs
        for kind, csv_path in csvs.items():
            a = tmp_path / f"{kind}_a.png"
            b = tmp_path / f"{kind}_b.png"
            for out in (a, b):
                render(FigureSpec(kind=kind, csv_path=csv_path, out_path=str(out),
                                  summary_path=summary if kind == "decay" else None))
            assert pixels(a) == pixels(b)

    def test_unknown_kind_rejected(self, sample_inputs):
        tmp_path, csvs, _ = sample_inputs
        with pytest.raises(SchemaError, match="kind"):
            FigureSpec(kind="sparklines", csv_path=csvs["decay"], out_path="x.png")


class TestSchema:
    def test_empty_csv_is_schema_error(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(SchemaError, match="schema"):
            render(FigureSpec(kind="decay", csv_path=str(path), out_path=str(tmp_path / "o.png")))

    def test_headers_only_is_schema_error(self, tmp_path):
        path = write_csv(tmp_path / "hdr.csv", "decay",
                         ["n", "min", "max", "variation", "l1", "bv"], [])
        with pytest.raises(SchemaError, match="no data rows"):
            render(FigureSpec(kind="decay", csv_path=path, out_path=str(tmp_path / "o.png")))

    def test_missing_column_named(self, tmp_path):
        path = write_csv(tmp_path / "bad.csv", "decay", ["n", "variation"], [[1, 0.5]])
        with pytest.raises(SchemaError, match="'bv'"):
            render(FigureSpec(kind="decay", csv_path=path, out_path=str(tmp_path / "o.png")))

    def test_wrong_scenario_tag(self, tmp_path):
        path = write_csv(tmp_path / "wrong.csv", "minoration",
                         ["n", "bv"], [[1, 0.5]])
        with pytest.raises(SchemaError, match="expected decay"):
            render(FigureSpec(kind="decay", csv_path=path, out_path=str(tmp_path / "o.png")))


class TestScripts:
    def test_decay_script_end_to_end(self, sample_inputs, capsys):
        tmp_path, csvs, summary = sample_inputs
        out = tmp_path / "cli.png"
        code = decay_main([csvs["decay"], "--summary", summary, "--out", str(out)])
        assert code == 0 and out.exists()

    def test_script_schema_failure_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "nope.csv"
        bad.write_text("garbage\n")
        code = decay_main([str(bad), "--out", str(tmp_path / "o.png")])
        assert code == 2


def test_primary_toolkit_never_imported():
    loaded = [m for m in sys.modules if m == "seqdyn" or m.startswith("seqdyn.")]
    assert loaded == []
