"""Independent pressure oracle for f(z) = z^2 + c (c inside the main cardioid).

Exact preimage enumeration with numpy: level-n sums of (f^n)^x(z)^(-t) over all
2^n preimages of a base point on the Julia set, pressure from the ratio of
consecutive levels. The base point is the repelling fixed point.
"""
import sys
import numpy as np
from scipy.optimize import brentq

C = complex(sys.argv[1]) if len(sys.argv) > 1 else 0.1 + 0j
N = int(sys.argv[2]) if len(sys.argv) > 2 else 20


def levels(t, n=N):
    a = (1 + np.sqrt(1 - 4 * C)) / 2  # repelling fixed point
    pts = np.array([a], dtype=complex)
    logd = np.zeros(1)
    out = []
    for _ in range(n):
        r = np.sqrt(pts - C)
        z = np.concatenate([r, -r])
        w = np.concatenate([pts, pts])
        ld = np.concatenate([logd, logd])
        # f^x(z) = |2z| (1+|z|^2) / (1+|w|^2)
        ld = ld + np.log(2 * np.abs(z)) + np.log1p(np.abs(z) ** 2) - np.log1p(np.abs(w) ** 2)
        pts, logd = z, ld
        m = (-t * logd).max()
        out.append(m + np.log(np.exp(-t * logd - m).sum()))
    return np.array(out)


def pressure(t):
    l = levels(t)
    return l[-1] - l[-2]


if __name__ == "__main__":
    for t in (0.0, 0.5, 1.0, 1.5, 2.0):
        l = levels(t)
        print(t, np.diff(l)[-4:])
    s = brentq(pressure, 0.9, 1.2, xtol=1e-12)
    print("c =", C, "s =", s, "ruelle small-c:", 1 + abs(C) ** 2 / (4 * np.log(2)))
