"""Partial sums of the t-deformed flag measure approach 1.

For n=1, k=1, t=1 the sums are exactly 1 - 2^(-D-1).  With two steps and
t=(1, 1/2) there is no closed form but the sums still climb towards 1.
"""

from fractions import Fraction

from flagcl.formulas import MeasureParams, normalization_partial_sums

for params in (MeasureParams(2, 1, (1,)), MeasureParams(2, 2, (1, Fraction(1, 2)))):
    sums = normalization_partial_sums(params, 10)
    print(f"p={params.p} n={params.n} t={tuple(str(x) for x in params.t)}")
    for d in (0, 1, 2, 4, 10):
        print(f"  |G_k| <= p^{d:<2}  {float(sums[d]):.6f}  ({sums[d]})" if d < 3 else
              f"  |G_k| <= p^{d:<2}  {float(sums[d]):.6f}")
