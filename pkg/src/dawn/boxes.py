from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box by centre and size, in frame pixels.

    Pixel (row i, col j) covers [j, j+1) x [i, i+1), so a VOT-style
    ``x,y,w,h`` record with top-left corner (x, y) has centre (x + w/2, y + h/2).
    """

    cx: float
    cy: float
    w: float
    h: float

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "BoundingBox":
        return cls(x + w / 2.0, y + h / 2.0, w, h)

    def xywh(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2.0, self.cy - self.h / 2.0, self.w, self.h)

    @property
    def aspect(self) -> float:
        return self.w / self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def moved(self, cx: float, cy: float) -> "BoundingBox":
        return BoundingBox(cx, cy, self.w, self.h)
