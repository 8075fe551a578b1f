"""Regenerate the frozen erfcx oracle table used by the acceptance tests.

Values come from 50-digit mpmath arithmetic, rounded to the nearest
double. Run from the repository root:

    python tests/tools/gen_erfcx_table.py > tests/data/erfcx_oracle.csv
"""

import numpy as np
import mpmath as mp

mp.mp.dps = 50

N_POINTS = 1000
Z_LO, Z_HI = -26.0, 30.0


def main():
    print("# z, erfcx(z) -- 50-digit oracle rounded to double")
    for z in np.linspace(Z_LO, Z_HI, N_POINTS):
        zm = mp.mpf(float(z))
        val = mp.exp(zm * zm) * mp.erfc(zm)
        print(f"{float(z)!r},{float(val)!r}")


if __name__ == "__main__":
    main()
