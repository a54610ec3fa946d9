"""Tests for CSV tables and SVG charts."""
import pytest

from posdebias.metrics import PositionRow
from posdebias.report import (
    SystemEval,
    bar_chart,
    line_chart,
    write_position_chart,
    write_position_csv,
    write_scores_csv,
    write_split_chart,
    write_sweep_chart,
)


@pytest.fixture
def two_systems():
    return [
        SystemEval(
            "zoe",
            "accuracy",
            {"biased": (0.5, 10), "non_biased": (0.25, 20)},
            by_position=(PositionRow(-2, 0.5, 4), PositionRow(0, 1.0, 6), PositionRow(None, 0.25, 2)),
        ),
        SystemEval(
            "ft",
            "accuracy",
            {"biased": (0.9, 10), "non_biased": (0.1, 20)},
            by_position=(PositionRow(0, 0.9, 6), PositionRow(-2, 0.1, 4)),
        ),
    ]


class TestScoresCsv:
    def test_golden_bytes(self, two_systems, tmp_path):
        path = write_scores_csv(two_systems, tmp_path / "scores.csv")
        expected = (
            b"system,split,metric,score,count\r\n"
            b"ft,biased,accuracy,0.900000,10\r\n"
            b"ft,non_biased,accuracy,0.100000,20\r\n"
            b"zoe,biased,accuracy,0.500000,10\r\n"
            b"zoe,non_biased,accuracy,0.250000,20\r\n"
        )
        assert path.read_bytes() == expected

    def test_rows_sorted_regardless_of_input_order(self, two_systems, tmp_path):
        forward = write_scores_csv(two_systems, tmp_path / "a.csv").read_bytes()
        reverse = write_scores_csv(list(reversed(two_systems)), tmp_path / "b.csv").read_bytes()
        assert forward == reverse

    def test_creates_parent_directories(self, two_systems, tmp_path):
        path = write_scores_csv(two_systems, tmp_path / "deep" / "nested" / "scores.csv")
        assert path.exists()


class TestPositionCsv:
    def test_golden_bytes_with_unknown_position_last(self, two_systems, tmp_path):
        path = write_position_csv(two_systems, tmp_path / "relpos.csv")
        expected = (
            b"system,split,metric,score,count,relpos\r\n"
            b"ft,all,accuracy,0.100000,4,-2\r\n"
            b"ft,all,accuracy,0.900000,6,0\r\n"
            b"zoe,all,accuracy,0.500000,4,-2\r\n"
            b"zoe,all,accuracy,1.000000,6,0\r\n"
            b"zoe,all,accuracy,0.250000,2,none\r\n"
        )
        assert path.read_bytes() == expected

    def test_positions_sort_numerically_not_lexically(self, tmp_path):
        ev = SystemEval(
            "m", "accuracy", {},
            by_position=(PositionRow(10, 0.1, 1), PositionRow(2, 0.2, 1), PositionRow(-1, 0.3, 1)),
        )
        lines = write_position_csv([ev], tmp_path / "p.csv").read_text().splitlines()
        assert [row.rsplit(",", 1)[1] for row in lines[1:]] == ["-1", "2", "10"]


class TestLineChart:
    def test_structure(self):
        svg = line_chart(
            {"ft": [(0, 0.9), (1, 0.8), (2, 0.3)], "zoe": [(0, 0.7), (1, 0.7), (2, 0.6)]},
            "score by position", "position", "score",
        )
        assert svg.startswith('<svg xmlns="http://www.w3.org/2000/svg"')
        assert svg.endswith("</svg>")
        assert svg.count("<polyline") == 2
        assert svg.count("<circle") == 6
        assert ">ft</text>" in svg and ">zoe</text>" in svg
        assert ">score by position</text>" in svg
        assert "href" not in svg

    def test_deterministic(self):
        series = {"a": [(0, 0.5), (1, 0.25)]}
        assert line_chart(series, "t", "x", "y") == line_chart(series, "t", "x", "y")

    def test_degenerate_spans_do_not_crash(self):
        svg = line_chart({"a": [(3, 0.5)]}, "t", "x", "y")
        assert "<polyline" in svg and "NaN" not in svg

    def test_empty_series_rejected(self):
        with pytest.raises(ValueError, match="no data"):
            line_chart({}, "t", "x", "y")


class TestBarChart:
    def test_structure(self):
        svg = bar_chart(
            {"ft": [("biased", 0.9), ("non_biased", 0.1)], "zoe": [("biased", 0.7), ("non_biased", 0.6)]},
            "score by split", "split", "score",
        )
        # One background, four bars, two legend swatches.
        assert svg.count("<rect") == 7
        assert ">biased</text>" in svg and ">non_biased</text>" in svg
        assert svg.endswith("</svg>")

    def test_missing_category_leaves_gap(self):
        svg = bar_chart({"a": [("x", 1.0)], "b": [("x", 0.5), ("y", 0.25)]}, "t", "x", "y")
        assert svg.count("<rect") == 1 + 3 + 2

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="no data"):
            bar_chart({}, "t", "x", "y")


class TestChartWriters:
    def test_position_chart_skips_unknown_positions(self, two_systems, tmp_path):
        path = write_position_chart(two_systems, tmp_path / "relpos.svg", "accuracy")
        svg = path.read_text(encoding="utf-8")
        assert svg.count("<polyline") == 2
        # zoe has rows at -2 and 0 plus an unknown-position row that is dropped.
        assert svg.count("<circle") == 4

    def test_split_chart_written(self, two_systems, tmp_path):
        path = write_split_chart(two_systems, tmp_path / "splits.svg", "accuracy")
        svg = path.read_text(encoding="utf-8")
        assert svg.count("<rect") == 1 + 4 + 2
        assert ">accuracy by split</text>" in svg

    def test_sweep_chart_written(self, tmp_path):
        path = write_sweep_chart(
            {"zoe": [(0.1, 0.6), (0.2, 0.7), (0.3, 0.65)]},
            tmp_path / "sweep.svg", "score by alpha", "alpha", "score",
        )
        svg = path.read_text(encoding="utf-8")
        assert ">score by alpha</text>" in svg
        assert svg.count("<circle") == 3

    def test_rewrite_is_byte_identical(self, two_systems, tmp_path):
        a = write_position_chart(two_systems, tmp_path / "a.svg", "accuracy").read_bytes()
        b = write_position_chart(two_systems, tmp_path / "b.svg", "accuracy").read_bytes()
        assert a == b
