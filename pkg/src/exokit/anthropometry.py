"""Slider-interface compatibility bounds and the hand-length range.

Native unit here is millimeters; every quantity is kept at full
precision (display rounding is a CLI concern).
"""

from __future__ import annotations

from dataclasses import dataclass

from .kvformat import float_field, parse_kv


@dataclass(frozen=True)
class SliderParams:
    """Geometry of the passive finger slider, millimeters.

    L_min: ring-to-fingercot distance at rest
    d_max: maximum distance permitted by slider travel
    d_curl: free slider length required for full flexion
    delta: maximum ring offset above the webbing
    r: middle-finger-to-hand-length ratio (dimensionless)
    """

    L_min: float
    d_max: float
    d_curl: float
    delta: float
    r: float

    def __post_init__(self):
        for name in ("L_min", "d_max", "d_curl", "delta"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")
        if not 0.0 < self.r < 1.0:
            raise ValueError("r must be in (0, 1)")
        if self.d_max <= self.d_curl:
            raise ValueError("d_max must exceed d_curl")
        if self.L_min > self.d_max - self.d_curl:
            raise ValueError("L_min exceeds the available slider travel")


@dataclass(frozen=True)
class CompatibilityVerdict:
    compatible: bool
    H_min: float
    H_max: float
    margin_low: float
    margin_high: float


def slider_bounds(p: SliderParams) -> tuple[float, float]:
    """(L_max, MFL_max): longest rest distance and middle-finger length."""
    L_max = p.d_max - p.d_curl
    return L_max, L_max + p.delta


def hand_length_range(p: SliderParams) -> tuple[float, float]:
    """(H_min, H_max) of compatible hand lengths, millimeters."""
    _, mfl_max = slider_bounds(p)
    return p.L_min / p.r, mfl_max / p.r


def check_hand(hand_length: float, p: SliderParams) -> CompatibilityVerdict:
    """Inclusive-bounds verdict with signed margins to each bound."""
    if hand_length <= 0.0:
        raise ValueError("hand_length must be > 0")
    h_min, h_max = hand_length_range(p)
    margin_low = hand_length - h_min
    margin_high = h_max - hand_length
    return CompatibilityVerdict(
        compatible=margin_low >= 0.0 and margin_high >= 0.0,
        H_min=h_min, H_max=h_max,
        margin_low=margin_low, margin_high=margin_high)


def parse_slider_params(text: str) -> SliderParams:
    kv = parse_kv(text)
    return SliderParams(
        L_min=float_field(kv, "L_min"),
        d_max=float_field(kv, "d_max"),
        d_curl=float_field(kv, "d_curl"),
        delta=float_field(kv, "delta"),
        r=float_field(kv, "r"),
    )
