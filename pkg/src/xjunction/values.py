"""Values with one-sigma uncertainties, combined in quadrature."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass


@dataclass(frozen=True)
class Measured:
    value: float
    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0 or math.isnan(self.sigma):
            raise ValueError(f"uncertainty must be >= 0, got {self.sigma}")

    def __add__(self, other):
        if not isinstance(other, Measured):
            other = Measured(float(other))
        return Measured(self.value + other.value, math.hypot(self.sigma, other.sigma))

    __radd__ = __add__

    def __sub__(self, other):
        if not isinstance(other, Measured):
            other = Measured(float(other))
        return Measured(self.value - other.value, math.hypot(self.sigma, other.sigma))

    def __mul__(self, k):
        # a scalar multiple of one quantity: fully correlated, sigma scales linearly
        return Measured(self.value * k, abs(k) * self.sigma)

    __rmul__ = __mul__

    def __truediv__(self, k):
        return Measured(self.value / k, self.sigma / abs(k))

    def within(self, other, k=1.0):
        """True when |self - other| <= k * sigma of `other` (or of self for plain numbers)."""
        if isinstance(other, Measured):
            return abs(self.value - other.value) <= k * other.sigma + 1e-12
        return abs(self.value - other) <= k * self.sigma + 1e-12

    def to_list(self):
        return [self.value, self.sigma]

    @classmethod
    def coerce(cls, obj):
        if isinstance(obj, Measured):
            return obj
        if isinstance(obj, (list, tuple)):
            return cls(float(obj[0]), float(obj[1]) if len(obj) > 1 else 0.0)
        if isinstance(obj, str):
            return cls.parse(obj)
        return cls(float(obj))

    @classmethod
    def parse(cls, text):
        """Parse the compact notation ``0.045(3)`` as 0.045 +/- 0.003."""
        m = re.fullmatch(r"\s*(-?\d*\.?\d+)\((\d+)\)\s*", text)
        if not m:
            return cls(float(text))
        digits, unc = m.groups()
        decimals = len(digits.split(".")[1]) if "." in digits else 0
        return cls(float(digits), int(unc) * 10.0**-decimals)

    def __str__(self):
        return f"{self.value:.4g}({self.sigma:.2g})"


def quadrature_sum(values):
    total = Measured(0.0)
    for v in values:
        total = total + v
    return total
