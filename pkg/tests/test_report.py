import pytest
from hypothesis import given, strategies as st

from avsr.report import REFERENCE, Cell, build_tables, emit, parse


def _results(acc=0.5, modalities=("audio", "video", "fused")):
    out = {}
    for m in modalities:
        for att in (False, True):
            out[Cell(m, att, False, 18)] = acc
    return out


def test_attention_table_shape_and_reference():
    (table,) = build_tables(_results(), ("audio", "video", "fused"))
    assert table.key == "attention"
    assert table.rows == ["Audio", "Visual", "AudioVisual"]
    assert table.columns == ["without attention", "with attention"]
    ref = table.reference
    assert (ref[("Audio", "without attention")], ref[("Audio", "with attention")]) == (0.9594, 0.9702)
    assert (ref[("Visual", "without attention")], ref[("Visual", "with attention")]) == (0.8290, 0.8617)
    assert (ref[("AudioVisual", "without attention")],
            ref[("AudioVisual", "with attention")]) == (0.9743, 0.9823)


def test_noise_reference_values():
    assert [REFERENCE[(m, True, True, 18)] for m in ("audio", "video", "fused")] == [0.9792, 0.8642, 0.9864]
    assert [REFERENCE[(m, True, False, 18)] for m in ("audio", "video", "fused")] == [0.9702, 0.8617, 0.9823]


def test_tables_only_for_complete_columns():
    results = _results()
    results.update({Cell(m, True, True, 18): 0.6 for m in ("audio", "video", "fused")})
    keys = [t.key for t in build_tables(results, ("audio", "video", "fused"))]
    assert keys == ["attention", "noise", "overall"]


def test_failed_cells_are_marked():
    results = _results()
    results[Cell("video", True, False, 18)] = None
    (table,) = build_tables(results, ("audio", "video", "fused"))
    assert "failed" in table.text()
    assert parse(table.lines())[0].values[("Visual", "with attention")] is None


def test_text_layout_has_reference_columns():
    (table,) = build_tables(_results(0.93), ("audio",))
    text = table.text()
    assert "Audio" in text and "0.9300" in text
    assert "reference (paper): with attention" in text


@given(st.lists(st.one_of(st.none(), st.floats(0, 1)), min_size=6, max_size=6))
def test_machine_lines_round_trip(values):
    results = dict(zip(_results(), values))
    tables = build_tables(results, ("audio", "video", "fused"))
    back = parse(emit(tables))
    assert [(t.key, t.title, t.rows, t.columns, t.values, t.reference) for t in back] == \
           [(t.key, t.title, t.rows, t.columns, t.values, t.reference) for t in tables]


def test_malformed_line():
    with pytest.raises(ValueError):
        parse(["cell\tonly\tthree"])
