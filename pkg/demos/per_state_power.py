"""Per-state PCLC power: the self-biased water level and its fixed point.

Prints the fixed-point function G(z) on a grid for one state, the power
the solver picks, and a state whose per-state objective has two local
maxima (where the plain zero-power test and the global maximizer differ).

    python3 demos/per_state_power.py
"""

import numpy as np

from specshare import DualPair, FadingState, pclc_power, pclc_powers
from specshare.pclc import fixed_point_residual


def objective(z, h, g, a, nu, mu):
    return np.log1p(h * z) + nu * np.log1p(a / (1 + g * z)) - mu * z


def main():
    h, g, a, nu, mu = 2.0, 1.0, 1.0, 1.0, 0.2
    print(f"state h={h}, g={g}, f*q={a}; multipliers nu={nu}, mu={mu}")
    for z in np.linspace(0, 5, 11):
        print(f"  G({z:4.1f}) = {fixed_point_residual(z, h, g, a, nu, mu):+.5f}")
    z = pclc_power(FadingState(f=a, e=h, g=g, o=0.0, q=1.0), DualPair(nu, mu))
    print(f"solver power {z:.12f}, residual {fixed_point_residual(z, h, g, a, nu, mu):.1e}")

    # small powers hurt the PU more than they help the SU, large ones pay off:
    # the objective dips below its value at zero before rising again
    h, g, a, nu, mu = 0.23, 0.27, 4.7, 1.3, 0.01
    grid = np.linspace(0, 1 / mu, 200001)
    vals = objective(grid, h, g, a, nu, mu)
    peaks = np.flatnonzero((vals[1:-1] > vals[:-2]) & (vals[1:-1] >= vals[2:])) + 1
    if vals[0] >= vals[1]:
        peaks = np.concatenate(([0], peaks))
    print(f"\nstate h={h}, g={g}, f*q={a}; nu={nu}, mu={mu}")
    print(f"  G(0) = {fixed_point_residual(0.0, h, g, a, nu, mu):+.4f} (zero-power test says p = 0)")
    print(f"  local maxima at z = {np.round(grid[peaks], 3).tolist()}")
    for rule in ("global", "activation"):
        p = pclc_powers([h], [g], [a], nu, mu, rule=rule)[0]
        print(f"  rule={rule:10s} p = {p:9.4f}  objective {objective(p, h, g, a, nu, mu):.5f}")
    print(f"  p = 0{'':16s}objective {objective(0.0, h, g, a, nu, mu):.5f}")


if __name__ == "__main__":
    main()
