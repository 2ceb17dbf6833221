"""Sample Haar matrices over Z_2 at finite precision and test the limiting law.

A modest run (2e5 samples of 6x6 matrices) so it finishes in seconds.  The
report gives per-class z-scores, a pooled chi-square and the mass that could
not be certified at the chosen precision.
"""

import os

from flagcl.flags import enumerate_flag_classes
from flagcl.formulas import prob_flag_square
from flagcl.sampler import ExperimentConfig, compare_distributions, run_experiment, uncertified_bound

p, n, k, e = 2, 6, 1, 10
cfg = ExperimentConfig(p=p, k=k, n=n, samples=200_000, seed=7, e=e, workers=os.cpu_count() or 1)
dist = run_experiment(cfg)

classes = enumerate_flag_classes(p, k, e - 1, max_rank=n)
theory = {f.canonical_label: prob_flag_square(n, p, k, f) for f in classes}
rep = compare_distributions(dist, theory, uncertified_bound=uncertified_bound(p, k, e))

print(f"{dist.total} samples, p={p}, n={n}, e={e}")
print(f"{'class':<24} {'freq':>9} {'theory':>9} {'z':>7}")
for row in sorted(rep.rows, key=lambda r: -r.count)[:8]:
    th = float(row.theory) if row.theory is not None else float("nan")
    z = f"{row.zscore:+.2f}" if row.zscore is not None else "-"
    print(f"{row.label:<24} {row.count / dist.total:9.5f} {th:9.5f} {z:>7}")
print(f"chi-square {rep.chi2:.1f} on {rep.dof} dof, p-value {rep.p_value:.3f}")
print(f"uncertified mass {rep.uncertified_mass:.2e}")
print("About 1.45e-3 of the limiting mass has a cyclic part of exponent >= 10,")
print("so the uncertified share cannot drop below that at e=10.")
