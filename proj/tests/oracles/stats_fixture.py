#!/usr/bin/env python3
"""Brute-force expected values for the 4-frame pose-statistics fixture.

Fixture rule (mirrored in test_skeleton.cpp):
  keypoint k of frame f is present iff (7*f + 3*k) % 5 != 0
  its reprojection error is 0.5 + 0.25 * ((11*f + 5*k) % 13)
Statistics are computed with exact rational arithmetic and rounded once.
"""
from fractions import Fraction
import math

GROUPS = [("Nostrils", 2), ("Ears", 2), ("Eyes", 2), ("Head Top", 1),
          ("Withers", 1), ("Croup", 1), ("Tail", 3), ("Legs", 16)]
FRAMES = 4
NKP = sum(n for _, n in GROUPS)


def present(f, k):
    return (7 * f + 3 * k) % 5 != 0


def error(f, k):
    return Fraction(1, 2) + Fraction(1, 4) * ((11 * f + 5 * k) % 13)


def mean_std(values):
    n = len(values)
    m = sum(values, Fraction(0)) / n
    var = sum(((v - m) ** 2 for v in values), Fraction(0)) / n
    return float(m), math.sqrt(var)


def main():
    start = 0
    for name, size in GROUPS:
        members = range(start, start + size)
        start += size
        errs = [error(f, k) for k in members for f in range(FRAMES) if present(f, k)]
        kpp = sum(Fraction(sum(present(f, k) for f in range(FRAMES)), FRAMES) for k in members) / size
        m, s = mean_std(errs)
        print(f'{{"{name}", {m!r}, {s!r}, {float(kpp)!r}, {size}}},')
    all_errs = [error(f, k) for f in range(FRAMES) for k in range(NKP) if present(f, k)]
    m, s = mean_std(all_errs)
    print(f"all: mean {m!r} std {s!r} n {len(all_errs)}")
    srt = sorted(all_errs)
    n = len(srt)
    med = srt[n // 2] if n % 2 else (srt[n // 2 - 1] + srt[n // 2]) / 2
    print(f"median {float(med)!r}")
    counts = [Fraction(sum(present(f, k) for k in range(NKP))) for f in range(FRAMES)]
    m, s = mean_std(counts)
    print(f"per-frame count: mean {m!r} std {s!r}")


if __name__ == "__main__":
    main()
