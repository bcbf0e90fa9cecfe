"""Deterministic SVG snapshot of an episode at the merge instant, with faded trails."""
from __future__ import annotations

import math
from typing import Sequence

from intentmerge.world import RoadGeometry, VehicleState, WorldState

PX_X = 2.5   # px per metre along the road
PX_Y = 8.0   # px per metre across it
MARGIN = 20.0
SENDER_COLOR = "#f2c200"
MERGER_COLOR = "#2ca02c"
HUMAN_COLOR = "#1f77b4"


def _f(v: float) -> str:
    return f"{v:.2f}"


def _color(k: int) -> str:
    return MERGER_COLOR if k == 0 else SENDER_COLOR if k == 1 else HUMAN_COLOR


class _Canvas:
    def __init__(self, geometry: RoadGeometry):
        self.g = geometry
        self.y_top = -geometry.lane_width / 2
        n = geometry.highway_lane_count
        self.y_bottom = n * geometry.lane_width + geometry.lane_width / 2
        self.width = geometry.road_end * PX_X + 2 * MARGIN
        self.height = (self.y_bottom - self.y_top) * PX_Y + 2 * MARGIN + 40

    def px(self, x: float, y: float) -> tuple[float, float]:
        return MARGIN + x * PX_X, MARGIN + 30 + (y - self.y_top) * PX_Y

    def rect(self, x0: float, y0: float, x1: float, y1: float, **attrs) -> str:
        (a, b), (c, d) = self.px(x0, y0), self.px(x1, y1)
        extra = "".join(f' {k.replace("_", "-")}="{v}"' for k, v in attrs.items())
        return f'<rect x="{_f(a)}" y="{_f(b)}" width="{_f(c - a)}" height="{_f(d - b)}"{extra}/>'

    def line(self, x0: float, y0: float, x1: float, y1: float, **attrs) -> str:
        (a, b), (c, d) = self.px(x0, y0), self.px(x1, y1)
        extra = "".join(f' {k.replace("_", "-")}="{v}"' for k, v in attrs.items())
        return f'<line x1="{_f(a)}" y1="{_f(b)}" x2="{_f(c)}" y2="{_f(d)}"{extra}/>'

    def vehicle(self, v: VehicleState, color: str, opacity: float) -> str:
        c, s = math.cos(v.heading), math.sin(v.heading)
        hl, hw = v.length / 2, v.width / 2
        pts = []
        for dx, dy in ((hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)):
            pts.append(self.px(v.x + dx * c - dy * s, v.y + dx * s + dy * c))
        p = " ".join(f"{_f(a)},{_f(b)}" for a, b in pts)
        stroke = ' stroke="#d62728" stroke-width="1.5"' if v.crashed else ' stroke="#333" stroke-width="0.5"'
        return f'<polygon points="{p}" fill="{color}" fill-opacity="{opacity:.2f}"{stroke}/>'


def render_svg(frames: Sequence[WorldState], title: str = "", note: str = "") -> str:
    """SVG of the last frame, with earlier frames drawn as fading trails.

    ``frames`` are snapshots at 1 s spacing ending at the instant to show.
    """
    if not frames:
        raise ValueError("nothing to render")
    g = frames[-1].geometry
    cv = _Canvas(g)
    w = g.lane_width
    n = g.highway_lane_count
    lo, hi = g.merge_zone
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_f(cv.width)}" '
        f'height="{_f(cv.height)}" viewBox="0 0 {_f(cv.width)} {_f(cv.height)}">',
        f'<rect x="0" y="0" width="{_f(cv.width)}" height="{_f(cv.height)}" fill="#ffffff"/>',
        cv.rect(0, -w / 2, g.road_end, (n - 0.5) * w, fill="#8c8c8c"),
        cv.rect(0, (n - 0.5) * w, g.ramp_end, (n + 0.5) * w, fill="#a6a6a6"),
        cv.rect(lo, (n - 0.5) * w, hi, (n + 0.5) * w, fill="#c7b9a0", fill_opacity="0.6"),
    ]
    for k in range(1, n):
        out.append(cv.line(0, (k - 0.5) * w, g.road_end, (k - 0.5) * w,
                           stroke="#ffffff", stroke_width="1", stroke_dasharray="8,8"))
    out.append(cv.line(0, (n - 0.5) * w, lo, (n - 0.5) * w, stroke="#ffffff", stroke_width="1.5"))
    out.append(cv.line(lo, (n - 0.5) * w, hi, (n - 0.5) * w,
                       stroke="#ffffff", stroke_width="1", stroke_dasharray="4,6"))
    for x in range(0, int(g.road_end) + 1, 50):
        a, b = cv.px(x, (n + 0.5) * w)
        out.append(f'<text x="{_f(a)}" y="{_f(b + 14)}" font-family="monospace" font-size="9" '
                   f'text-anchor="middle" fill="#444">{x}</text>')
    last = len(frames) - 1
    for i, frame in enumerate(frames):
        opacity = 1.0 if i == last else 0.15 + 0.45 * i / max(last, 1)
        for k, v in enumerate(frame.vehicles):
            if v.exited:
                continue
            out.append(cv.vehicle(v, _color(k), opacity))
    out.append(f'<text x="{_f(MARGIN)}" y="{_f(MARGIN + 8)}" font-family="monospace" '
               f'font-size="12" fill="#000">{_escape(title)}</text>')
    if note:
        out.append(f'<text x="{_f(cv.width - MARGIN)}" y="{_f(MARGIN + 8)}" font-family="monospace" '
                   f'font-size="12" text-anchor="end" fill="#d62728">{_escape(note)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
