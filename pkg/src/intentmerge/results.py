"""Result tables: one row per (intent, trigger), with and without intent sharing.

CSV columns::

    Intent, Trigger, With sharing (mean±SE), With sharing crash %,
    Without sharing (mean±SE), Without sharing crash %

``Trigger`` is ``N/A`` for the IDLE intent; a column pair reads ``absent``
when that scenario was not evaluated. Numbers are written with round-trip
precision, so reading a written table gives back the same values.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable

from intentmerge.learn import CellStats

HEADER = ("Intent", "Trigger", "With sharing (mean±SE)", "With sharing crash %",
          "Without sharing (mean±SE)", "Without sharing crash %")
ABSENT = "absent"
NA = "N/A"


class ResultsParseError(ValueError):
    pass


@dataclass(frozen=True)
class Summary:
    mean: float
    stderr: float
    crash_rate: float


@dataclass
class ResultsTable:
    rows: dict[tuple[str, float | None], dict[bool, Summary]] = field(default_factory=dict)

    @classmethod
    def from_stats(cls, stats: Iterable[CellStats]) -> "ResultsTable":
        t = cls()
        for s in stats:
            t.add(s.intent, s.trigger, s.sharing, Summary(s.mean, s.stderr, s.crash_rate))
        return t

    def add(self, intent: str, trigger: float | None, sharing: bool, summary: Summary) -> None:
        self.rows.setdefault((intent, trigger), {})[sharing] = summary

    def keys(self) -> list[tuple[str, float | None]]:
        return list(self.rows)

    def get(self, intent: str, trigger: float | None, sharing: bool) -> Summary | None:
        return self.rows.get((intent, trigger), {}).get(sharing)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(HEADER)
        for (intent, trigger), cells in self.rows.items():
            row = [intent, NA if trigger is None else repr(trigger)]
            for sharing in (True, False):
                s = cells.get(sharing)
                if s is None:
                    row += [ABSENT, ABSENT]
                else:
                    row += [f"{s.mean!r}±{s.stderr!r}", repr(s.crash_rate)]
            w.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ResultsTable":
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise ResultsParseError("empty results file") from None
        if tuple(header) != HEADER:
            raise ResultsParseError(f"unexpected header {header}")
        t = cls()
        for n, row in enumerate(reader, start=2):
            if len(row) != len(HEADER):
                raise ResultsParseError(f"line {n}: expected {len(HEADER)} fields")
            intent, trig = row[0], row[1]
            try:
                trigger = None if trig == NA else float(trig)
                for sharing, (ms, cr) in ((True, row[2:4]), (False, row[4:6])):
                    if ms == ABSENT:
                        t.rows.setdefault((intent, trigger), {})
                        continue
                    mean, se = ms.split("±")
                    t.add(intent, trigger, sharing, Summary(float(mean), float(se), float(cr)))
            except ValueError as e:
                raise ResultsParseError(f"line {n}: {e}") from None
        return t

    def format(self) -> str:
        """Fixed-width text rendering for the terminal."""
        lines = [f"{'Intent':<10} {'Trigger':>7}  {'with sharing':>22}  {'without sharing':>22}"]
        for (intent, trigger), cells in self.rows.items():
            parts = [f"{intent:<10} {NA if trigger is None else f'{trigger:.0f}':>7}"]
            for sharing in (True, False):
                s = cells.get(sharing)
                parts.append(f"{ABSENT:>22}" if s is None else
                             f"{s.mean:7.3f} ± {s.stderr:5.3f} ({s.crash_rate:5.1f}%)")
            lines.append("  ".join(parts))
        return "\n".join(lines) + "\n"
