"""Symmetric quadrature rules on the reference triangle.

Rules are stored in barycentric coordinates with weights normalised to sum
to one; integrals over a physical triangle are weight-sums scaled by the
triangle area.  The tabulated rules are the standard symmetric ones of
Dunavant (1985) for degrees 2, 4, 6, 8 and 10, all with positive weights.
"""

from __future__ import annotations

import itertools

import numpy as np


def _orbit3(a: float, b: float) -> list[tuple[float, float, float]]:
    # permutations of (a, b, b)
    return [(a, b, b), (b, a, b), (b, b, a)]


def _orbit6(a: float, b: float, c: float) -> list[tuple[float, float, float]]:
    return list(set(itertools.permutations((a, b, c)))) if len({a, b, c}) < 3 else [
        (a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)
    ]


def _build_rule(groups) -> tuple[np.ndarray, np.ndarray]:
    points, weights = [], []
    for w, bary in groups:
        for p in bary:
            points.append(p)
            weights.append(w)
    return np.array(points, dtype=float), np.array(weights, dtype=float)


_RULES: dict[int, tuple[np.ndarray, np.ndarray]] = {
    2: _build_rule([
        (1.0 / 3.0, _orbit3(2.0 / 3.0, 1.0 / 6.0)),
    ]),
    4: _build_rule([
        (0.223381589678011, _orbit3(0.108103018168070, 0.445948490915965)),
        (0.109951743655322, _orbit3(0.816847572980459, 0.091576213509771)),
    ]),
    6: _build_rule([
        (0.050844906370207, _orbit3(0.873821971016996, 0.063089014491502)),
        (0.116786275726379, _orbit3(0.501426509658179, 0.249286745170910)),
        (0.082851075618374, _orbit6(0.636502499121399, 0.310352451033785, 0.053145049844816)),
    ]),
    8: _build_rule([
        (0.144315607677787, [(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)]),
        (0.095091634267285, _orbit3(0.081414823414554, 0.459292588292723)),
        (0.103217370534718, _orbit3(0.658861384496480, 0.170569307751760)),
        (0.032458497623198, _orbit3(0.898905543365938, 0.050547228317031)),
        (0.027230314174435, _orbit6(0.008394777409958, 0.263112829634638, 0.728492392955404)),
    ]),
    10: _build_rule([
        (0.090817990382754, [(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)]),
        (0.036725957756467, _orbit3(0.028844733232685, 0.485577633383657)),
        (0.045321059435528, _orbit3(0.781036849029926, 0.109481575485037)),
        (0.072757916845420, _orbit6(0.141707219414880, 0.307939838764121, 0.550352941820999)),
        (0.028327242531057, _orbit6(0.025003534762686, 0.246672560639903, 0.728323904597411)),
        (0.009421666963733, _orbit6(0.009540815400299, 0.066803251012200, 0.923655933587500)),
    ]),
}

MAX_DEGREE = max(_RULES)


def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (points, weights) of a rule exact for polynomials of `degree`.

    Points are barycentric, shape (q, 3); weights sum to 1.  The smallest
    tabulated rule of sufficient exactness is selected.
    """
    if degree > MAX_DEGREE:
        raise ValueError(f"no tabulated triangle rule of degree {degree} (max {MAX_DEGREE})")
    d = min(k for k in _RULES if k >= degree)
    return _RULES[d]


def reference_monomial_integral(i: int, j: int) -> float:
    """Exact integral of x^i y^j over the reference triangle {x,y>=0, x+y<=1}."""
    from math import factorial

    return factorial(i) * factorial(j) / factorial(i + j + 2)
