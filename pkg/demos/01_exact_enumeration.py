"""Exhaust every matrix tuple mod p^e and compare class frequencies with the closed forms.

Two cases: a pair of 1x1 matrices over Z/8, then the non-square pair
Mat_{1x2}(Z/4) x Mat_{2x3}(Z/4).  Classes whose top module has a part of
exponent >= e are not certified at that precision and are tallied separately.
"""

from fractions import Fraction

from flagcl.enumerator import enumerate_matrix_tuples
from flagcl.formulas import ShapeOffsets, prob_flag_nonsquare, prob_flag_square


def show(dist, theory):
    print(f"  {'class':<28} {'observed':>10} {'formula':>10}")
    for label in sorted(dist.counts):
        obs = Fraction(dist.counts[label], dist.total)
        th = theory(dist.classes[label])
        mark = "" if obs == th else "  <-- mismatch"
        print(f"  {label:<28} {str(obs):>10} {str(th):>10}{mark}")
    print(f"  uncertified tuples: {dist.uncertified_count} of {dist.total}")


print("Square case: two 1x1 matrices over Z/8")
d = enumerate_matrix_tuples(2, 3, [(1, 1), (1, 1)])
show(d, lambda f: prob_flag_square(1, 2, 2, f))

print("\nNon-square case: Mat_{1x2}(Z/4) x Mat_{2x3}(Z/4)")
off = ShapeOffsets((1, 2))
d = enumerate_matrix_tuples(2, 2, off.shapes(1))
show(d, lambda f: prob_flag_nonsquare(1, 2, off, f))
print("  the trivial flag should carry mass 21/32")
