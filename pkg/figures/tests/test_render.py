import numpy as np
import pytest

from eptr_figures import FigureSpec, SchemaError, aggregate, build_figure, read_table, render
from eptr_figures.render import EXPECTED_COLUMNS, _legend_label

HEADER = ",".join(EXPECTED_COLUMNS)


def write_csv(path, rows):
    path.write_text(HEADER + "\n" + "\n".join(rows) + ("\n" if rows else ""))


def simple_rows():
    rows = []
    for rep, value in enumerate([1.0, 2.0, 3.0, 4.0]):
        rows.append(f"linreg,eptr,epsilon,1.0,{rep},123,param_error,{value},1")
    for rep, value in enumerate([0.5, 0.7]):
        rows.append(f"linreg,nonprivate,epsilon,1.0,{rep},123,param_error,{value},1")
    return rows


class TestReadTable:
    def test_schema_mismatch_names_columns(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("problem,method,value\nlinreg,eptr,1.0\n")
        with pytest.raises(SchemaError) as exc:
            read_table(str(bad))
        assert "sweep_var" in str(exc.value)

    def test_empty_file_rejected(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        with pytest.raises(SchemaError):
            read_table(str(empty))

    def test_header_only_rejected(self, tmp_path):
        path = tmp_path / "header.csv"
        write_csv(path, [])
        with pytest.raises(SchemaError) as exc:
            read_table(str(path))
        assert "no data rows" in str(exc.value)

    def test_non_numeric_value_rejected(self, tmp_path):
        path = tmp_path / "nan.csv"
        write_csv(path, ["linreg,eptr,epsilon,1.0,0,1,param_error,oops,1"])
        with pytest.raises(SchemaError) as exc:
            read_table(str(path))
        assert "value" in str(exc.value)

    def test_roundtrip(self, tmp_path):
        path = tmp_path / "ok.csv"
        write_csv(path, simple_rows())
        table = read_table(str(path))
        assert table.n == 6
        assert set(table.method) == {"eptr", "nonprivate"}


class TestAggregate:
    def test_mean_and_standard_error(self, tmp_path):
        path = tmp_path / "ok.csv"
        write_csv(path, simple_rows())
        table = read_table(str(path))
        series = aggregate(table, "param_error", "epsilon")
        xs, means, errs = series["eptr"]
        assert np.array_equal(xs, [1.0])
        assert means[0] == pytest.approx(2.5)
        expected_se = np.std([1, 2, 3, 4], ddof=1) / 2.0
        assert errs[0] == pytest.approx(expected_se)

    def test_single_observation_zero_error(self, tmp_path):
        path = tmp_path / "one.csv"
        write_csv(path, ["bayes,eptr,n,500,0,9,balanced_error,0.25,1"])
        table = read_table(str(path))
        xs, means, errs = aggregate(table, "balanced_error", "n")["eptr"]
        assert means[0] == 0.25 and errs[0] == 0.0


class TestBuildFigure:
    def test_minimal_single_panel(self, tmp_path):
        path = tmp_path / "one.csv"
        write_csv(path, simple_rows())
        fig, panels = build_figure(FigureSpec(str(path), str(tmp_path / "o.png")))
        assert len(panels) == 1
        assert panels[0]["metric"] == "param_error"
        assert panels[0]["methods"] == ["eptr", "nonprivate"]

    def test_unknown_metric_filter(self, tmp_path):
        path = tmp_path / "one.csv"
        write_csv(path, simple_rows())
        spec = FigureSpec(str(path), str(tmp_path / "o.png"), metrics=("mystery",))
        with pytest.raises(SchemaError) as exc:
            build_figure(spec)
        assert "metric" in str(exc.value)

    def test_problem_filter_must_match(self, tmp_path):
        path = tmp_path / "one.csv"
        write_csv(path, simple_rows())
        spec = FigureSpec(str(path), str(tmp_path / "o.png"), problem="kernel")
        with pytest.raises(SchemaError):
            build_figure(spec)


class TestRender:
    def test_writes_file_and_is_deterministic(self, tmp_path):
        path = tmp_path / "one.csv"
        write_csv(path, simple_rows())
        out_a = tmp_path / "a.png"
        out_b = tmp_path / "b.png"
        render(FigureSpec(str(path), str(out_a)))
        render(FigureSpec(str(path), str(out_b)))
        assert out_a.exists()
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_does_not_mutate_input(self, tmp_path):
        path = tmp_path / "one.csv"
        write_csv(path, simple_rows())
        before = path.read_bytes()
        render(FigureSpec(str(path), str(tmp_path / "o.png")))
        assert path.read_bytes() == before


class TestLegendLabels:
    def test_simplified_suffix(self):
        assert _legend_label("noisy_gd_simplified") == "noisy-gd (simplified)"
        assert _legend_label("eptr") == "eptr"
