"""Tests for the dependency-free SVG chart renderer."""

import pytest

import iorpo.svgplot as sp
from iorpo.objective import TrainingCurvePoint


def _panel(**kw):
    defaults = dict(
        title="loss",
        series=(sp.Series("total", [0.0, 1.0, 2.0], [3.0, 2.0, 1.0]),),
        x_label="step",
        y_label="nats",
    )
    defaults.update(kw)
    return sp.Panel(**defaults)


def test_series_validation():
    with pytest.raises(ValueError):
        sp.Series("a", [1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        sp.Series("a", [], [])


def test_panel_needs_series():
    with pytest.raises(ValueError):
        sp.Panel(title="t", series=())


def test_render_is_deterministic():
    panels = [_panel()]
    assert sp.render_chart(panels) == sp.render_chart(panels)


def test_render_is_a_standalone_svg_document():
    text = sp.render_chart([_panel()])
    assert text.startswith("<svg ")
    assert text.rstrip().endswith("</svg>")
    assert 'xmlns="http://www.w3.org/2000/svg"' in text
    assert text.endswith("\n")


def test_render_requires_panels():
    with pytest.raises(ValueError):
        sp.render_chart([])


def test_panel_width_scales_with_panel_count():
    one = sp.render_chart([_panel()])
    two = sp.render_chart([_panel(), _panel(title="other")])
    assert 'width="420"' in one
    assert 'width="840"' in two
    assert "other" in two


def test_labels_titles_and_legend_text_appear():
    text = sp.render_chart([_panel()])
    for needle in ("loss", "step", "nats", "total"):
        assert needle in text


def test_markup_characters_are_escaped():
    panel = _panel(title='a<b & "c"', series=(sp.Series("s>1", [0.0, 1.0], [0.0, 1.0]),))
    text = sp.render_chart([panel])
    assert "a&lt;b &amp; &quot;c&quot;" in text
    assert "s&gt;1" in text
    assert "a<b" not in text


def test_each_series_gets_a_polyline_and_palette_color():
    series = tuple(
        sp.Series(f"s{i}", [0.0, 1.0], [float(i), float(i + 1)]) for i in range(3)
    )
    text = sp.render_chart([_panel(series=series)])
    assert text.count("<polyline") == 3
    for color in sp.PALETTE[:3]:
        assert color in text


def test_flat_series_does_not_divide_by_zero():
    panel = _panel(series=(sp.Series("flat", [0.0, 1.0], [2.0, 2.0]),))
    text = sp.render_chart([panel])
    assert "nan" not in text.lower()
    panel0 = _panel(series=(sp.Series("zero", [0.0, 0.0], [0.0, 0.0]),))
    assert "nan" not in sp.render_chart([panel0]).lower()


def test_single_point_series_renders():
    panel = _panel(series=(sp.Series("dot", [1.0], [1.0]),))
    text = sp.render_chart([panel])
    assert "<polyline" in text


def test_coordinates_are_fixed_precision():
    text = sp.render_chart([_panel()])
    for token in text.split():
        if token.startswith('points="'):
            coords = token[len('points="') :].rstrip('"')
            for pair in coords.split():
                x, y = pair.split(",")
                assert len(x.split(".")[1]) == 2
                assert len(y.split(".")[1]) == 2


def test_write_chart_round_trips_bytes(tmp_path):
    path = tmp_path / "c.svg"
    panels = [_panel()]
    sp.write_chart(panels, path)
    assert path.read_text(encoding="utf-8") == sp.render_chart(panels)


def test_curve_panels_layout():
    curve = [
        TrainingCurvePoint(
            step=s,
            logps_y_given_xw=-2.0 + 0.1 * s,
            logps_y_given_xl=-2.0,
            logps_xw=-1.5,
            logps_xl=-1.6,
            l_sft=2.0,
            l_ior=0.7,
            total=2.7,
        )
        for s in (0, 10, 20)
    ]
    panels = sp.curve_panels(curve)
    assert [p.title for p in panels] == ["instruction logps", "response logps"]
    inst, resp = panels
    assert [s.label for s in inst.series] == ["logps(x_w)", "logps(x_l)"]
    assert [s.label for s in resp.series] == ["logps(y|x_w)", "logps(y|x_l)"]
    assert list(inst.series[0].xs) == [0.0, 10.0, 20.0]
    assert list(resp.series[0].ys) == [-2.0, -1.0, 0.0]
    text = sp.render_chart(panels)
    assert text.count("<polyline") == 4
