"""Independent reference values frozen into the test suite.

Nothing here imports ``diqss``. Closed forms are evaluated with mpmath at
50 digits; the loading probability uses the literal double sum; Eve's
correlation bound uses multi-start SLSQP over (theta, g, h, Delta).

Run ``python3 tools/derive_oracles.py`` and paste changed values into
``tests/frozen.py``.
"""
import itertools
import math
import sys

import mpmath as mp
import numpy as np
from scipy.optimize import minimize

mp.mp.dps = 50


def h(x):
    x = mp.mpf(x)
    if x in (0, 1):
        return mp.mpf(0)
    return -x * mp.log(x, 2) - (1 - x) * mp.log(1 - x, 2)


def p_loaded(n, Ps, etaM):
    Ps, etaM = mp.mpf(Ps), mp.mpf(etaM)
    tot = mp.mpf(0)
    for m in range(n + 1):
        for l in range(n + 1):
            tot += (Ps * (1 - Ps) ** (n - l) * etaM ** (2 * (n - l))
                    * Ps * (1 - Ps) ** (n - m) * etaM ** (2 * (n - m)))
    return tot * Ps * (1 - Ps) ** n


def E_m(d, etaM, N, T=0.5, alpha=0.2, eta_t=None):
    if eta_t is None:
        eta_t = mp.mpf(10) ** (-mp.mpf(alpha) * mp.mpf(d) / 10)
    eta_t = mp.mpf(eta_t)
    Ps = 2 * eta_t * mp.mpf(T) * (1 - mp.mpf(T))
    P = [p_loaded(n, Ps, etaM) for n in range(N + 1)]
    Pt = sum(P)
    Pw = sum((n + 1) * P[n] for n in range(N)) + (N + 1) * (1 - sum(P[:N]))
    return Pt / Pw


def chsh(F, eta):
    return 2 * mp.sqrt(2) * mp.mpf(F) * mp.mpf(eta) ** 3


def r_base(F, eta, strategy="base"):
    F, eta = mp.mpf(F), mp.mpf(eta)
    S = chsh(F, eta)
    if strategy == "base":
        delta = (1 - F) / 2 * eta ** 3 + 1 - eta ** 3
    else:
        delta = (1 - F) / 2 * eta ** 3 + (1 - eta ** 3) / 2
    eve = 1 - h(mp.mpf(1) / 2 + mp.sqrt(S ** 2 / 4 - 1) / 2) if S > 2 else 0
    return mp.mpf(1) / 4 * (eve - h(delta))


def eve_bound(S, lam, starts=400, seed=0):
    """Minimum of the objective by multi-start SLSQP; returns sqrt(min)."""
    rng = np.random.default_rng(seed)

    def f(x):
        t, g, hh, D = x
        s, c = math.sin(t), math.cos(t)
        return s * s * g * g + c * c * hh * hh + 2 * (2 * lam - 1) * s * c * g * hh * D

    cons = [
        {"type": "ineq", "fun": lambda x: math.cos(x[0]) * x[1] + math.sin(x[0]) * x[2] - S / 2},
        {"type": "ineq", "fun": lambda x: (1 - x[1] ** 2) * (1 - x[2] ** 2) - x[1] ** 2 * x[2] ** 2 * x[3] ** 2},
    ]
    bounds = [(-2 * math.pi, 2 * math.pi), (-1, 1), (-1, 1), (-1, 1)]
    best = math.inf
    for _ in range(starts):
        x0 = [rng.uniform(0, 2 * math.pi), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)]
        r = minimize(f, x0, method="SLSQP", bounds=bounds, constraints=cons,
                     options={"ftol": 1e-14, "maxiter": 500})
        if r.success and all(c["fun"](r.x) >= -1e-10 for c in cons):
            best = min(best, r.fun)
    return math.sqrt(max(best, 0.0))


def main():
    print("E_m(d=50, eta_M=0.8, N=3) =", mp.nstr(E_m(50, 0.8, 3), 17))
    print("E_m(d=60.77, eta_M=0.8, N=3) =", mp.nstr(E_m(60.77, 0.8, 3), 17))
    print("E_m(d=50, eta_M=1, N=3) =", mp.nstr(E_m(50, 1, 3), 17))
    print("E_m(d=10, eta_M=1, N=0) =", mp.nstr(E_m(10, 1, 0), 17))
    print("E_m(eta_t=0.9, eta_M=1, N=3) =", mp.nstr(E_m(0, 1, 3, eta_t="0.9"), 17))
    print("p_loaded(2, 0.030452, 0.8) =", mp.nstr(p_loaded(2, "0.030452", "0.8"), 17))
    print("p_loaded(1, 0.5, 1) =", mp.nstr(p_loaded(1, "0.5", 1), 17))
    print("p_loaded(5, 0.1, 0.8) =", mp.nstr(p_loaded(5, 0.1, 0.8), 17))
    print("p_loaded(3, 0.5, 0.0) =", mp.nstr(p_loaded(3, 0.5, 0.0), 17))
    print("qber base (0.98, 0.9702) =", mp.nstr((1 - mp.mpf("0.98")) / 2 * mp.mpf("0.9702") ** 3
                                                + 1 - mp.mpf("0.9702") ** 3, 17))
    print("R base (0.98, 0.9702) =", mp.nstr(r_base("0.98", "0.9702"), 17))
    for strategy in ("base", "postselect"):
        root = mp.findroot(lambda e: r_base(1, e, strategy), (0.93, 0.99), solver="anderson")
        print(f"eta_l* {strategy} =", mp.nstr(root, 17))
    print("F* base (eta_l=1) =", mp.nstr(mp.findroot(lambda F: r_base(F, 1), (0.8, 0.9), solver="anderson"), 17))
    print("F* base (eta_l=0.99) =", mp.nstr(mp.findroot(lambda F: r_base(F, "0.99"), (0.85, 0.95), solver="anderson"), 17))
    print("h(0.09579) =", mp.nstr(h("0.09579"), 17))
    print("R base at F=1, eta_l=0.9 =", mp.nstr(r_base(1, "0.9"), 17))
    if "--skip-solver" in sys.argv:
        return
    for S, lam in itertools.product((2.2, 2.6, 2.8), (0.5, 0.8, 1.0)):
        print(f"E_tilde(S={S}, lam={lam}) =", repr(round(eve_bound(S, lam), 10)))


if __name__ == "__main__":
    main()
