import math

import pytest
from hypothesis import given, strategies as st

from intentmerge.learn import CellStats
from intentmerge.results import HEADER, ResultsParseError, ResultsTable, Summary

ROWS = [("IDLE", None)] + [(n, t) for n, ts in (("LANE_LEFT", (220.0, 250.0, 280.0)),
                                                ("FASTER", (190.0, 220.0, 250.0)),
                                                ("SLOWER", (160.0, 190.0, 220.0))) for t in ts]

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(st.lists(st.tuples(finite, finite, st.sampled_from([0.0, 20.0, 100.0])), min_size=20, max_size=20),
       st.lists(st.booleans(), min_size=20, max_size=20))
def test_csv_roundtrip(values, present):
    t = ResultsTable()
    for k, (intent, trig) in enumerate(ROWS):
        for j, sharing in enumerate((True, False)):
            if present[2 * k + j]:
                t.add(intent, trig, sharing, Summary(*values[2 * k + j]))
            else:
                t.rows.setdefault((intent, trig), {})
    back = ResultsTable.from_csv(t.to_csv())
    assert back.rows == t.rows


def test_csv_layout():
    stats = [CellStats("IDLE", None, True, 3.5, 0.1, 0.0, (), ()),
             CellStats("SLOWER", 160.0, False, 2.5, 0.25, 20.0, (), ())]
    text = ResultsTable.from_stats(stats).to_csv()
    lines = text.split("\r\n")
    assert lines[0] == ",".join(HEADER)
    assert lines[1] == "IDLE,N/A,3.5±0.1,0.0,absent,absent"
    assert lines[2] == "SLOWER,160.0,absent,absent,2.5±0.25,20.0"


@pytest.mark.parametrize("text", ["", "a,b\r\n", ",".join(HEADER) + "\r\nIDLE,N/A,x±1,0,absent,absent\r\n",
                                  ",".join(HEADER) + "\r\nIDLE,N/A\r\n"])
def test_parse_errors(text):
    with pytest.raises(ResultsParseError):
        ResultsTable.from_csv(text)


def test_format_has_all_rows():
    t = ResultsTable()
    for intent, trig in ROWS:
        t.add(intent, trig, True, Summary(3.0, 0.1, 0.0))
    out = t.format().splitlines()
    assert len(out) == 11
    assert "absent" in out[1] and "N/A" in out[1]
