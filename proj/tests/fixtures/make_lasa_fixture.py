"""Writes lasa_fixture.csv: 7 planar handwriting-style trajectories of 1000 samples.

The values are deterministic but distinct per trajectory and axis so that row
selection can be checked bitwise. Run from this directory:

    python3 make_lasa_fixture.py
"""
import math

DT = 0.004
N_DEMOS, LENGTH = 7, 1000

with open("lasa_fixture.csv", "w", newline="\n") as f:
    f.write("demo,t,x,y\n")
    for j in range(N_DEMOS):
        for m in range(LENGTH):
            s = m / (LENGTH - 1)
            decay = (1.0 - s) ** 2
            x = -(30.0 + 1.7 * j) * decay * math.cos(2.2 * s + 0.13 * j)
            y = (18.0 - 0.9 * j) * decay * math.sin(3.1 * s + 0.07 * j) + 0.01 * j * decay
            f.write(f"{j},{m * DT!r},{x!r},{y!r}\n")
