"""Toy external limit state: g = 3.2 - x1 - 0.8 * x2 for CSV rows on stdin."""

import sys

for line in sys.stdin:
    if line.strip():
        x1, x2 = map(float, line.split(","))
        print(repr(3.2 - x1 - 0.8 * x2))
