"""Regenerate ``special_values.json`` from mpmath at 50 significant digits.

The JSON file is committed; this script documents how it was produced.
"""

import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 50


def f(x):
    return float(x)


def main():
    lgamma_x = [0.01, 0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.7, 7.25, 10.0, 33.3, 100.5, 1234.5, -0.5, -1.5, -2.25]
    digamma_x = [0.01, 0.1, 0.5, 1.0, 1.5, 2.0, 3.7, 9.99, 10.0, 50.0, 500.0, -0.5, -1.25]
    beta_abx = [(0.5, 0.5, 0.3), (1.0, 1.0, 0.42), (2.5, 0.5, 0.9), (0.5, 2.5, 0.05), (3.0, 7.0, 0.3),
                (10.0, 10.0, 0.5), (50.0, 0.5, 0.99), (0.5, 50.0, 0.01), (150.0, 0.5, 0.999),
                (4.0, 0.5, 0.2), (0.75, 1.25, 0.999999)]
    gamma_sx = [(0.5, 0.1), (0.5, 2.0), (1.0, 1.0), (1.0, 30.0), (2.5, 0.3), (2.5, 10.0), (10.0, 5.0),
                (10.0, 15.0), (50.0, 45.0), (0.5, 40.0)]
    chi2 = [(0.09581855361898306, 1), (3.841458820694124, 1), (18.436749346185934, 1), (1.0, 1),
            (5.991464547107979, 2), (0.5, 2), (40.0, 2), (60.0, 1)]
    out = {
        "lgamma": [[x, f(mp.loggamma(x).real if x > 0 else mp.log(abs(mp.gamma(x))))] for x in lgamma_x],
        "digamma": [[x, f(mp.digamma(x))] for x in digamma_x],
        "erf": [[x, f(mp.erf(x))] for x in [-3.0, -0.5, 0.0, 1e-8, 0.3, 1.0, 2.5, 5.0]],
        "incomplete_beta": [[a, b, x, f(mp.betainc(a, b, 0, x, regularized=True))] for a, b, x in beta_abx],
        "incomplete_gamma": [[s, x, f(mp.gammainc(s, 0, x, regularized=True))] for s, x in gamma_sx],
        "chi2_sf": [[x, k, f(mp.gammainc(mp.mpf(k) / 2, mp.mpf(x) / 2, mp.inf, regularized=True))] for x, k in chi2],
    }
    path = Path(__file__).with_name("special_values.json")
    path.write_text(json.dumps(out, indent=1) + "\n")


if __name__ == "__main__":
    main()
