"""A tiny SVG document builder and a linear data-to-pixel axis mapping.

Coordinate mapping used by :class:`Panel`: a data point (x, y) inside the
ranges ``[x0, x1] x [y0, y1]`` lands at pixel::

    px = left + (x - x0) / (x1 - x0) * width
    py = top + (y1 - y) / (y1 - y0) * height

so larger y values are drawn higher up (SVG's y axis points down).
"""
from __future__ import annotations

from xml.sax.saxutils import escape, quoteattr


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.2f}".rstrip("0").rstrip(".") if abs(v) < 1e6 else f"{v:.6g}"
    return str(v)


class SvgDocument:
    def __init__(self, width: int, height: int, title: str = ""):
        self.width = width
        self.height = height
        self.items: list[str] = []
        if title:
            self.items.append(f"<title>{escape(title)}</title>")
        self.rect(0, 0, width, height, fill="white")

    def _el(self, tag: str, text: str | None = None, **attrs) -> None:
        parts = " ".join(f"{k.rstrip('_').replace('_', '-')}={quoteattr(_fmt(v))}" for k, v in attrs.items() if v is not None)
        if text is None:
            self.items.append(f"<{tag} {parts}/>")
        else:
            self.items.append(f"<{tag} {parts}>{escape(text)}</{tag}>")

    def rect(self, x, y, w, h, **style):
        self._el("rect", x=x, y=y, width=w, height=h, **style)

    def line(self, x1, y1, x2, y2, stroke="black", **style):
        self._el("line", x1=x1, y1=y1, x2=x2, y2=y2, stroke=stroke, **style)

    def polyline(self, points, stroke="black", fill="none", **style):
        if not points:
            return
        pts = " ".join(f"{_fmt(float(x))},{_fmt(float(y))}" for x, y in points)
        self._el("polyline", points=pts, stroke=stroke, fill=fill, **style)

    def polygon(self, points, fill, **style):
        if not points:
            return
        pts = " ".join(f"{_fmt(float(x))},{_fmt(float(y))}" for x, y in points)
        self._el("polygon", points=pts, fill=fill, **style)

    def circle(self, cx, cy, r, fill, **style):
        self._el("circle", cx=cx, cy=cy, r=r, fill=fill, **style)

    def text(self, x, y, content: str, size: int = 11, anchor: str = "start", **style):
        self._el("text", content, x=x, y=y, font_size=size, text_anchor=anchor, font_family="sans-serif", **style)

    def to_string(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}">')
        return '<?xml version="1.0" encoding="UTF-8"?>\n' + head + "\n" + "\n".join(self.items) + "\n</svg>\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_string())


def _nice_range(lo: float, hi: float) -> tuple[float, float]:
    if lo == hi:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


class Panel:
    """A plotting rectangle on a document with fixed data ranges."""

    def __init__(self, doc: SvgDocument, left, top, width, height, xrange, yrange, pad_y: bool = True):
        self.doc = doc
        self.left, self.top, self.width, self.height = left, top, width, height
        self.x0, self.x1 = xrange if xrange[0] != xrange[1] else (xrange[0] - 1, xrange[1] + 1)
        self.y0, self.y1 = _nice_range(*yrange) if pad_y else yrange

    def px(self, x) -> float:
        return self.left + (x - self.x0) / (self.x1 - self.x0) * self.width

    def py(self, y) -> float:
        return self.top + (self.y1 - y) / (self.y1 - self.y0) * self.height

    def frame(self, ylabel: str = "", xlabel: str = "", ticks: int = 4) -> None:
        d = self.doc
        d.rect(self.left, self.top, self.width, self.height, fill="none", stroke="#888888")
        for i in range(ticks + 1):
            y = self.y0 + (self.y1 - self.y0) * i / ticks
            d.line(self.left - 4, self.py(y), self.left, self.py(y), stroke="#888888")
            d.text(self.left - 6, self.py(y) + 4, f"{y:.4g}", size=9, anchor="end")
        for i in range(ticks + 1):
            x = self.x0 + (self.x1 - self.x0) * i / ticks
            d.text(self.px(x), self.top + self.height + 14, f"{x:.4g}", size=9, anchor="middle")
        if ylabel:
            d.text(self.left, self.top - 6, ylabel, size=11)
        if xlabel:
            d.text(self.left + self.width, self.top + self.height + 28, xlabel, size=10, anchor="end")

    def series(self, xs, ys, **style) -> None:
        self.doc.polyline([(self.px(x), self.py(y)) for x, y in zip(xs, ys)], **style)

    def band(self, xs, lower, upper, fill, **style) -> None:
        pts = [(self.px(x), self.py(y)) for x, y in zip(xs, upper)]
        pts += [(self.px(x), self.py(y)) for x, y in reversed(list(zip(xs, lower)))]
        self.doc.polygon(pts, fill=fill, **style)

    def dot(self, x, y, r=2.5, fill="black", **style) -> None:
        self.doc.circle(self.px(x), self.py(y), r, fill=fill, **style)
