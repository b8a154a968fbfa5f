"""Allen-Cahn front on a truncated cylinder: solve, stability, splitting audit.

    python demos/cylinder_splitting.py [h]
"""

import math
import sys

import numpy as np

from stablesplit import ModelSpace
from stablesplit.rigidity import splitting_audit
from stablesplit.semilinear import Nonlinearity, initial_guess, newton_solve
from stablesplit.stability import min_eigenpair


def main(h=0.02):
    space = ModelSpace.cylinder(12.0, h, [1.28])
    nl = Nonlinearity.allen_cahn()
    sol = newton_solve(space, nl, initial_guess(space, "tanh:1.0"), tol=1e-10)
    err = np.abs(sol.u.values - np.tanh(space.mesh[0] / math.sqrt(2))).max()
    print(f"grid {space.shape}, Newton iterations {sol.iterations}, residual {sol.residual_norm:.1e}")
    print(f"sup |u - tanh(t/sqrt 2)| = {err:.2e}")

    spec = min_eigenpair(sol.u, nl)
    print(f"lambda_min = {spec.lambda_min:.2e}, ground state {spec.positivity.value}")

    audit = splitting_audit(sol.u, nl, spec)
    for v in audit.verdicts:
        print(f"  {'ok  ' if v['passed'] else 'FAIL'} {v['name']:<40} {v['value']}")
    st = audit.stats
    print(f"|grad u| = c w with c = {st['ratio_sign'] * st['ratio_abs_c']:.6f}, "
          f"relative spread {st['ratio_constancy']:.2e}")


if __name__ == "__main__":
    main(*(float(a) for a in sys.argv[1:]))
