import io
import xml.etree.ElementTree as ET

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from ridge_anova import svg
from ridge_anova.io import format_value, read_csv, write_matrix, write_table

values = st.one_of(
    st.floats(allow_nan=False, allow_infinity=False),
    st.integers(-10**9, 10**9),
    st.text(alphabet="abcxyz_:", min_size=1, max_size=8).filter(lambda s: not s.isdigit()),
)


@given(st.lists(st.tuples(values, values), min_size=1, max_size=10))
def test_csv_round_trip(pairs):
    rows = [{"a": a, "b": b} for a, b in pairs]
    buf = io.StringIO()
    write_table(rows, ("a", "b"), buf)
    buf.seek(0)
    back = read_csv(buf)
    for row, got in zip(rows, back):
        for key, want in row.items():
            assert got[key] == want and type(got[key]) is type(want)


def test_format_value():
    assert format_value(True) == "true"
    assert format_value(None) == ""
    assert format_value(float("nan")) == "nan"
    assert format_value(0.1) == "0.1"


def test_jsonl_output():
    buf = io.StringIO()
    write_table([{"x": np.float64(1.5), "y": float("nan")}], ("x", "y"), buf, "jsonl")
    assert buf.getvalue() == '{"x": 1.5, "y": null}\n'


def test_matrix_layout():
    buf = io.StringIO()
    write_matrix(np.array([[1.0, 2.0], [3.0, 4.0]]), [0.5, 1.0], [0.1, 0.2], buf, corner="d\\p")
    assert buf.getvalue().splitlines() == ["d\\p,0.1,0.2", "0.5,1.0,2.0", "1.0,3.0,4.0"]


def _parse(text):
    root = ET.fromstring(text)
    assert root.tag.endswith("svg")
    return root


def test_line_plot_is_valid_svg():
    s = svg.Series("mse <&>", [0, 1, 2], [1.0, float("nan"), 3.0], err=[0.1, 0.1, 0.1], markers=True)
    root = _parse(svg.line_plot([s, svg.Series("t", [0, 2], [1, 2], dashed=True)], title="a & b"))
    assert any(e.tag.endswith("circle") for e in root.iter())


def test_stacked_and_heatmap_are_valid_svg():
    _parse(svg.stacked_area([0, 1, 2], {"a": [1, 2, 3], "b": [0.5, 0.5, 0.5]}))
    root = _parse(svg.heatmap(np.arange(6.0).reshape(2, 3), [0, 1], [0, 1, 2]))
    assert sum(e.tag.endswith("rect") for e in root.iter()) >= 6
