"""Stationary-environment behaviour of the reward-penalty automaton.

For a two-action environment the expected drift of p1 under equal
reward and penalty steps a is a * (c2 - (c1 + c2) * p1), where c_i is the
penalty probability of action i, so p1 settles near c2 / (c1 + c2)
rather than at 1.  This script prints that fixed point next to the
empirical terminal distribution, and shows how shrinking the penalty
step pushes the automaton toward the best action.
"""

import argparse
import statistics

import numpy as np

from lln_balance.cli import converge


def fixed_point(d1, d2, alpha, beta):
    # E[dp1] = a (d1 - d2) p1 p2 - b c1 p1^2 + b c2 p2^2 with p2 = 1 - p1; root in [0, 1]
    c1, c2 = 1 - d1, 1 - d2
    a, b = alpha, beta
    coeffs = [-a * d1 + a * d2 - b * c1 + b * c2, a * d1 - a * d2 - 2 * b * c2, b * c2]
    roots = [r.real for r in np.roots(coeffs) if abs(r.imag) < 1e-12 and 0 <= r.real <= 1]
    return roots[0] if roots else float("nan")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reward-probs", default="0.9,0.2")
    ap.add_argument("--iterations", type=int, default=10_000)
    ap.add_argument("--seeds", type=int, default=100)
    args = ap.parse_args(argv)
    d1, d2 = (float(x) for x in args.reward_probs.split(","))

    print(f"{'alpha':>7}{'beta':>8}{'fixed pt':>10}{'median':>9}{'min':>8}{'>0.95':>7}")
    for alpha, beta in [(0.05, 0.05), (0.05, 0.01), (0.05, 0.001), (0.1, 0.0)]:
        rows = converge(alpha, beta, [d1, d2], args.iterations, range(1, args.seeds + 1))
        finals = [p for _, p, _, _ in rows]
        passed = sum(ok for _, _, ok, _ in rows)
        print(f"{alpha:>7}{beta:>8}{fixed_point(d1, d2, alpha, beta):>10.4f}"
              f"{statistics.median(finals):>9.4f}{min(finals):>8.4f}{passed:>7}")


if __name__ == "__main__":
    main()
