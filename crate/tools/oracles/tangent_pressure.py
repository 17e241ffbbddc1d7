"""Independent pressure oracle for f(z) = lam * tan(z) with 0 < lam < 1.

The Julia set is a real Cantor set inside X = {|x| >= x*} u {inf}, where x* is
the positive repelling fixed point. The spherical transfer operator

    (L_t h)(a) = sum_k f^x(y_k)^(-t) h(y_k),  y_k = arctan(a/lam) + k*pi

maps functions on X to functions on X. We discretize it by Chebyshev
collocation in the stereographic angle psi (a = -cot(psi/2)), which is smooth
through the point at infinity, and take the leading eigenvalue. The branch
sum is truncated at |k| <= K and the remainder is added with h frozen at
h(inf), using a midpoint-rule integral for the weights.
"""
import sys
import numpy as np
from scipy.optimize import brentq
from scipy.integrate import quad

LAM = float(sys.argv[1]) if len(sys.argv) > 1 else 0.5


def fixed_point(lam):
    return brentq(lambda x: lam * np.tan(x) - x, 1e-6 if lam > 1 else 0.5, np.pi / 2 - 1e-12)


XSTAR = fixed_point(LAM)
PSI_MAX = np.pi - 2 * np.arctan(XSTAR)


def a_of_psi(psi):
    with np.errstate(divide="ignore"):
        return -1.0 / np.tan(psi / 2)


def psi_of_a(a):
    th = 2 * np.arctan(a)
    return np.where(a > 0, th - np.pi, th + np.pi)


def cheb_nodes(m):
    j = np.arange(m)
    x = np.cos(np.pi * j / (m - 1))
    w = np.ones(m)
    w[0] = w[-1] = 0.5
    w *= (-1.0) ** j
    return x, w


def interp_matrix(xn, wn, x):
    # barycentric Lagrange interpolation matrix rows for targets x
    d = x[:, None] - xn[None, :]
    exact = np.abs(d) < 1e-15
    d[exact] = 1.0
    c = wn[None, :] / d
    c /= c.sum(axis=1, keepdims=True)
    rows = np.where(exact.any(axis=1))[0]
    for r in rows:
        c[r, :] = 0
        c[r, np.argmax(exact[r])] = 1
    return c


def log_weight(a, y, t):
    # log f^x(y) where f(y) = a (a finite) ; a = inf handled by caller
    fp = LAM + a * a / LAM
    return -t * (np.log(fp) + np.log1p(y * y) - np.log1p(a * a))


def operator(t, m, K):
    xn, wn = cheb_nodes(m)
    psi = PSI_MAX * xn
    mat = np.zeros((m, m))
    ks = np.arange(-K, K + 1)
    tail_node = interp_matrix(xn, wn, np.array([0.0]))[0]
    for i, p in enumerate(psi):
        if abs(p) < 1e-14:
            y0 = np.pi / 2
            ys = y0 + ks * np.pi
            lw = -t * (np.log1p(ys * ys) - np.log(LAM))
            def g(x, s):
                yy = y0 + s * x * np.pi
                return np.exp(-t * (np.log1p(yy * yy) - np.log(LAM)))
        else:
            a = a_of_psi(p)
            y0 = np.arctan(a / LAM)
            ys = y0 + ks * np.pi
            lw = log_weight(a, ys, t)
            def g(x, s, a=a, y0=y0):
                yy = y0 + s * x * np.pi
                return np.exp(log_weight(a, yy, t))
        w = np.exp(lw)
        tp = psi_of_a(ys) / PSI_MAX
        mat[i] += w @ interp_matrix(xn, wn, tp)
        tail = quad(g, K + 0.5, np.inf, args=(1,), limit=200)[0] + quad(g, K + 0.5, np.inf, args=(-1,), limit=200)[0]
        mat[i] += tail * tail_node
    return mat


def pressure(t, m=48, K=4000):
    ev = np.linalg.eigvals(operator(t, m, K))
    return float(np.log(np.max(ev.real)))


if __name__ == "__main__":
    print("x* =", XSTAR)
    for m, K in [(32, 2000), (48, 4000), (64, 8000)]:
        print(m, K, [round(pressure(t, m, K), 10) for t in (0.6, 0.7, 0.8, 1.0)])
    s = brentq(lambda t: pressure(t, 64, 8000), 0.55, 1.2, xtol=1e-10)
    print("s =", s)
