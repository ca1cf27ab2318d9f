#!/usr/bin/env python3
"""Independent zeta-regularized spectral oracles for the circle backgrounds.

Writes the fixture consumed by the acceptance suite. The energy density of
the antiperiodic massless circle follows from the Hurwitz zeta value
zeta(-1, 1/2) = 1/24 applied to the two chiralities:

    T00(L) = -(2/L) * (2*pi/L) * zeta(-1, 1/2) = -pi / (6 L^2)

The constant-mass Wick square uses the mode sum with its logarithmic
divergence matched to the log(Lambda^2) convention of the subtraction
kernels:

    <Psi>(mu, L, Lambda) = -(mu/L) * sum_n [1/E_n - 1/|k_n|]
                           - (mu/pi) * log(2 L / (pi Lambda))
"""
import json
import math

def casimir_T00(L):
    return -math.pi / (6.0 * L * L)

def psisq(mu, L, lam, terms=2_000_000):
    acc = 0.0
    for n in range(terms):
        k = 2.0 * math.pi * (n + 0.5) / L
        E = math.sqrt(k * k + mu * mu)
        acc += 2.0 * (1.0 / E - 1.0 / k)
    return -(mu / L) * acc - (mu / math.pi) * math.log(2.0 * L / (math.pi * lam))

if __name__ == "__main__":
    fixture = {
        "casimir": [{"L": L, "T00": casimir_T00(L)} for L in (1.0, 1.7)],
        "psisq": [{"mu": 0.8, "L": 1.0, "lambda": 1.0, "value": psisq(0.8, 1.0, 1.0)}],
    }
    with open("tests/fixtures/casimir_zeta.json", "w") as f:
        json.dump(fixture, f, indent=2)
        f.write("\n")
    print(json.dumps(fixture, indent=2))
