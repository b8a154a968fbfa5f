"""Capacity sequences and growth exponents on the model spaces."""

import numpy as np

from stablesplit import DensitySpec, Exhaustion, ModelSpace, Region
from stablesplit.capacity import capacity_limit, parabolicity_by_capacity, parabolicity_by_growth

MODELS = {
    "flat plane": (ModelSpace.flat_box([33.0, 33.0], 0.25), [2, 4, 8, 16, 32]),
    "Gaussian line": (ModelSpace.weighted_line(10.0, 0.01, DensitySpec.gaussian()), [2, 3, 4, 5, 6]),
    "growing density line": (ModelSpace.weighted_line(6.0, 0.01, DensitySpec.polynomial([0.0, 0.0, -0.5])),
                             [1.5, 2, 2.5, 3, 3.5, 4]),
}


def main():
    for name, (space, radii) in MODELS.items():
        res = capacity_limit(space, Region.ball(1.0), Exhaustion.balls(radii))
        v = parabolicity_by_capacity(space, Region.ball(1.0), Exhaustion.balls(radii))
        seq = np.array(res["sequence"])
        print(f"{name:<22} cap_j = {np.array2string(seq, precision=4)}  ->  {v.verdict.value}")
    for name, space, rmax in (("flat plane", MODELS["flat plane"][0], 32.0),
                              ("flat 3D box", ModelSpace.flat_box([12.0] * 3, 0.25), 12.0)):
        g = parabolicity_by_growth(space, rmax, samples=16)
        print(f"{name:<22} V exponent {g.evidence['V_exponent']:.3f}  ->  {g.verdict.value}")


if __name__ == "__main__":
    main()
