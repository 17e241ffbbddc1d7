"""Box-count preview: corner-orbit separation marking, numpy implementation."""
import sys
import numpy as np

def chordal(a, b):
    num = np.abs(a - b)
    den = np.sqrt((1 + np.abs(a) ** 2) * (1 + np.abs(b) ** 2))
    return np.arcsin(np.clip(num / den, 0, 1))

def render(f, x0, x1, y0, y1, w, h, steps, thr):
    xs = np.linspace(x0, x1, w + 1)
    ys = np.linspace(y0, y1, h + 1)
    Z = xs[None, :] + 1j * ys[:, None]
    spread = np.zeros((h, w))
    for _ in range(steps):
        with np.errstate(all="ignore"):
            Z = f(Z)
        Z = np.where(np.isfinite(Z), Z, 1e300)
        d = np.maximum.reduce([chordal(Z[:-1, :-1], Z[:-1, 1:]), chordal(Z[:-1, :-1], Z[1:, :-1]),
                               chordal(Z[1:, 1:], Z[:-1, 1:]), chordal(Z[1:, 1:], Z[1:, :-1]),
                               chordal(Z[:-1, :-1], Z[1:, 1:]), chordal(Z[1:, :-1], Z[:-1, 1:])])
        spread = np.maximum(spread, d)
    return spread > thr

def boxcount(occ, levels):
    h, w = occ.shape
    out = []
    for l in levels:
        s = 2 ** l
        hh, ww = -(-h // s), -(-w // s)
        p = np.zeros((hh * s, ww * s), bool)
        p[:h, :w] = occ
        n = p.reshape(hh, s, ww, s).any(axis=(1, 3)).sum()
        out.append((s, n))
    s = np.array([o[0] for o in out], float); n = np.array([o[1] for o in out], float)
    slope = np.polyfit(np.log(1 / s), np.log(n), 1)[0]
    return slope, out

if __name__ == "__main__":
    which = sys.argv[1]
    res = int(sys.argv[2]); thr = float(sys.argv[3])
    if which == "tan":
        occ = render(lambda z: 0.5 * np.tan(z), -2 * np.pi, 2 * np.pi, -2, 2, res, res, 60, thr)
    elif which == "quad":
        occ = render(lambda z: z * z + 0.1, -2, 2, -2, 2, res, res, 60, thr)
    else:
        occ = render(lambda z: z * z, -2, 2, -2, 2, res, res, 60, thr)
    print("marked", occ.sum())
    for lv in [range(0, 8), range(1, 8), range(2, 8), range(2, 9), range(3, 9)]:
        sl, out = boxcount(occ, lv)
        print(list(lv), round(sl, 4), out)
