"""Fractional difference quotients of the plate curvature.

A smooth plate gives growth ratio 1 for every order s. A plate whose
curvature jumps has quotient norms growing as the shift shrinks once s
passes one half.
"""
import numpy as np

from fsiplate import Grid, PlateField
from fsiplate.regularity import regularity_scan


def main():
    grid = Grid(512, 4)
    x = grid.plate_axes()[0]
    fields = {"smooth": PlateField(0.1 * np.sin(x), grid),
              "curvature jump": PlateField(np.where(x < np.pi, x ** 2 * (np.pi - x) ** 2, 0.0), grid)}
    s_grid = [0.1, 0.3, 0.5, 0.7, 0.9, 0.99]
    for name, w in fields.items():
        rep = regularity_scan([w, w], [0.0, 1.0], s_grid)
        print(name)
        for s, r in zip(s_grid, rep.ratios):
            print(f"  s = {s:4.2f}  growth ratio = {r:7.3f}")


if __name__ == "__main__":
    main()
