"""Reproducible Monte Carlo estimates of flag-class frequencies.

Randomness comes from a counter-based Philox stream keyed by the seed.
Sample ``s`` owns the word range ``[s*B, (s+1)*B)`` of that stream, where B
is the number of 64-bit words a tuple needs, rounded up to a Philox block of
four.  Entries are laid out matrix by matrix, row-major, each taking ``w``
consecutive words (little-endian) reduced mod p^e.  A sample's matrices are
therefore a function of (seed, sample index) alone, which gives replay and
worker-count invariance for free.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from ._batch import OVERSIZE, UNCERTIFIED, KeyClassifier, classify_slow, compute_keys
from .flags import ClassificationBound
from .formulas import ShapeOffsets
from .ring import MatZpe, PrimeModulus
from .tally import EmpiricalDistribution

CHUNK = 2**14
# Monte Carlo runs meet many large groups; past this they are tallied as oversize
SAMPLER_BOUND = ClassificationBound(max_order=2**6, max_work=2**22)


def words_per_entry(modulus: PrimeModulus) -> int:
    """64-bit words drawn per residue.

    For p = 2 the low e bits of the draw are exact.  Otherwise enough words
    are drawn that reduction mod p^e has bias below 2^-64.
    """
    if modulus.p == 2:
        return max(1, math.ceil(modulus.e / 64))
    bits = modulus.q.bit_length() + 64
    return math.ceil(bits / 64)


def reduce_words(words: np.ndarray, modulus: PrimeModulus) -> np.ndarray:
    """Residues from an array of shape (..., w) of uint64 words."""
    q, w = modulus.q, words.shape[-1]
    if modulus.fast:
        if modulus.p == 2:
            return (words[..., 0] & np.uint64(q - 1)).astype(np.int64)
        assert w == 2
        qq = np.uint64(q)
        hi = words[..., 1] % qq
        lo = words[..., 0] % qq
        return ((hi * np.uint64(2**64 % q) + lo) % qq).astype(np.int64)
    flat = words.reshape(-1, w)
    out = np.empty(len(flat), dtype=object)
    for i, row in enumerate(flat):
        out[i] = sum(int(x) << (64 * j) for j, x in enumerate(row)) % q
    return out.reshape(words.shape[:-1])


class RandomStream:
    """Sequential reader over the Philox stream for ``seed``, from a word offset."""

    def __init__(self, seed: int, word_offset: int = 0):
        if not 0 <= seed < 2**128:
            raise ValueError("seed must lie in [0, 2^128)")
        self.seed = int(seed)
        self._start = int(word_offset)
        self._pos = 0

    def substream(self, index: int, block_words: int) -> "RandomStream":
        """The stream owned by item ``index`` when every item uses ``block_words`` words."""
        return RandomStream(self.seed, self._start + index * block_words)

    def words(self, count: int) -> np.ndarray:
        start = self._start + self._pos
        blk, skip = divmod(start, 4)
        gen = np.random.Philox(key=self.seed, counter=blk)
        out = gen.random_raw(skip + count)[skip:]
        self._pos += count
        return out


def sample_uniform_matrix(rows: int, cols: int, modulus: PrimeModulus, stream: RandomStream) -> MatZpe:
    """Matrix with independent uniform entries mod p^e drawn from ``stream``."""
    w = words_per_entry(modulus)
    raw = stream.words(rows * cols * w).reshape(rows * cols, w)
    ents = reduce_words(raw, modulus) if rows * cols else np.zeros(0, dtype=np.int64)
    return MatZpe(modulus, rows, cols, tuple(int(x) for x in ents))


def expected_top_exponent(p: int, n: int, k: int) -> int:
    """Rounded-up mean of log_p |G_k|: k times the mean valuation of det of one Haar matrix."""
    return math.ceil(k * sum(1 / (p**i - 1) for i in range(1, n + 1)))


def default_precision(p: int, n: int, k: int) -> int:
    return max(8, 2 + expected_top_exponent(p, n, k))


@dataclass(frozen=True)
class ExperimentConfig:
    p: int
    k: int
    n: int
    samples: int
    seed: int = 0
    e: int | None = None
    offsets: tuple[int, ...] | None = None
    workers: int = 1
    bound: ClassificationBound = field(default=SAMPLER_BOUND)

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("sample count must be at least 1")
        if self.k < 1 or self.n < 1:
            raise ValueError("need k >= 1 and n >= 1")
        if self.workers < 1:
            raise ValueError("worker count must be at least 1")
        offs = (0,) * self.k if self.offsets is None else tuple(int(x) for x in self.offsets)
        if len(offs) != self.k:
            raise ValueError(f"{len(offs)} offsets given for k={self.k}")
        object.__setattr__(self, "offsets", ShapeOffsets(offs).u)
        e = default_precision(self.p, self.n, self.k) if self.e is None else int(self.e)
        if e < 2:
            raise ValueError("precision e must be at least 2")
        object.__setattr__(self, "e", e)
        PrimeModulus(self.p, e)

    @property
    def modulus(self) -> PrimeModulus:
        return PrimeModulus(self.p, self.e)

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return ShapeOffsets(self.offsets).shapes(self.n)

    @property
    def entry_count(self) -> int:
        return sum(r * c for r, c in self.shapes)

    @property
    def block_words(self) -> int:
        w = self.entry_count * words_per_entry(self.modulus)
        return -(-w // 4) * 4


def sample_entries(config: ExperimentConfig, start: int, count: int) -> np.ndarray:
    """Entries of samples ``start .. start+count-1``, shape (count, entry_count)."""
    mod, B = config.modulus, config.block_words
    w = words_per_entry(mod)
    raw = RandomStream(config.seed).substream(start, B).words(count * B).reshape(count, B)
    used = raw[:, : config.entry_count * w].reshape(count, config.entry_count, w)
    return reduce_words(used, mod)


def sample_matrices(config: ExperimentConfig, index: int) -> list[MatZpe]:
    """The matrix tuple of one sample, read through :func:`sample_uniform_matrix`."""
    stream = RandomStream(config.seed).substream(index, config.block_words)
    return [sample_uniform_matrix(r, c, config.modulus, stream) for r, c in config.shapes]


def _chunk(config: ExperimentConfig, clf: KeyClassifier | None, start: int, count: int):
    ents = sample_entries(config, start, count)
    dist = EmpiricalDistribution()
    if clf is not None:
        keys = compute_keys(ents, config.shapes, config.n, config.p, config.e)
        return clf.tally(keys, into=dist)
    for row in ents:
        out = classify_slow(row, config.shapes, config.modulus, config.bound)
        if out is UNCERTIFIED:
            dist.add_uncertified()
        elif out is OVERSIZE:
            dist.add_oversize()
        else:
            dist.add(out)
    return dist


def sample_outcomes(config: ExperimentConfig, start: int, count: int) -> list[str]:
    """Per-sample outcome (label, ``uncertified`` or ``oversize``) for a range of samples."""
    ents = sample_entries(config, start, count)
    out = []
    for row in ents:
        r = classify_slow(row, config.shapes, config.modulus, config.bound)
        out.append(r if isinstance(r, str) else r.canonical_label)
    return out


def run_experiment(config: ExperimentConfig) -> EmpiricalDistribution:
    """Tally the flag classes of ``config.samples`` sampled tuples.

    Samples are cut into fixed chunks of 2^14 that do not depend on the
    worker count, and the per-chunk tallies are added in chunk order.
    """
    fast = config.modulus.fast
    clf = KeyClassifier(config.p, config.k, config.n, config.bound) if fast else None
    starts = list(range(0, config.samples, CHUNK))
    jobs = [(s, min(CHUNK, config.samples - s)) for s in starts]
    if config.workers == 1:
        parts = [_chunk(config, clf, s, c) for s, c in jobs]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(lambda job: _chunk(config, clf, *job), jobs))
    dist = EmpiricalDistribution()
    for part in parts:
        dist = dist.merge(part)
    dist.check()
    assert dist.total == config.samples
    return dist


def uncertified_bound(p: int, k: int, e: int) -> float:
    """Heuristic bound on P(some part of G_k >= e).

    A part >= e forces val(det) >= e for the product, so one factor has
    val(det M_i) >= ceil(e/k); for a Haar matrix (large n) that has
    probability at most p^(1-m)/(p-1).
    """
    m = -(-e // k)
    return k * float(p) ** (1 - m) / (p - 1)


@dataclass
class ComparisonRow:
    label: str
    theory: Fraction
    count: int
    expected: float
    zscore: float | None


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow]
    total: int
    chi2: float | None
    dof: int
    p_value: float | None
    pooled_bins: list[str]
    uncertified_mass: float
    oversize_mass: float
    uncertified_bound: float | None
    warnings: list[str]

    def row(self, label: str) -> ComparisonRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)


def _zscore(count: int, total: int, m: Fraction) -> float | None:
    mean = total * float(m)
    var = total * float(m) * (1 - float(m))
    if var == 0:
        return 0.0 if count == mean else math.copysign(math.inf, count - mean)
    return (count - mean) / math.sqrt(var)


def compare_distributions(emp: EmpiricalDistribution, theory: dict[str, Fraction],
                          uncertified_bound: float | None = None, min_expected: float = 5.0) -> ComparisonReport:
    """Per-label binomial z-scores and a pooled chi-square test against ``theory``.

    Labels with expected count >= ``min_expected`` form their own bins; all
    remaining mass (other labels, uncertified, oversize) goes to one or two
    pools.  The uncertified mass is reported next to ``uncertified_bound``.
    """
    if emp.total < 1:
        raise ValueError("empirical distribution is empty")
    theory = {k: Fraction(v) for k, v in theory.items()}
    if any(not 0 <= v <= 1 for v in theory.values()) or sum(theory.values()) > 1:
        raise ValueError("theory masses must be probabilities summing to at most 1")
    N = emp.total
    notes = []
    rows = []
    for label in sorted(set(theory) | set(emp.counts)):
        m = theory.get(label, Fraction(0))
        c = emp.counts.get(label, 0)
        rows.append(ComparisonRow(label, m, c, N * float(m), _zscore(c, N, m)))

    overlap = set(theory) & set(emp.counts)
    if overlap:
        bins = [r for r in rows if r.label in theory and r.expected >= min_expected]
        obs = [r.count for r in bins]
        exp = [r.expected for r in bins]
        names = [r.label for r in bins]
    else:
        msg = "no label is both observed and predicted; chi-square uses pooled masses only"
        warnings.warn(msg)
        notes.append(msg)
        mass = sum(theory.values())
        obs = [sum(emp.counts.get(k, 0) for k in theory)]
        exp = [N * float(mass)]
        names = ["<theory pool>"]
    rest_obs = N - sum(obs)
    rest_exp = N - sum(exp)
    if rest_exp > 1e-9 * N or rest_obs:
        obs.append(rest_obs)
        exp.append(max(rest_exp, 0.0))
        names.append("<other>")
    chi2 = p_value = None
    dof = len(obs) - 1
    if dof >= 1:
        terms = []
        for o, x in zip(obs, exp):
            if x > 0:
                terms.append((o - x) ** 2 / x)
            elif o:
                terms.append(math.inf)
        chi2 = float(sum(terms))
        p_value = float(stats.chi2.sf(chi2, dof))
    return ComparisonReport(
        rows, N, chi2, dof, p_value, names,
        emp.uncertified_count / N, emp.oversize_count / N, uncertified_bound, notes,
    )


__all__ = [
    "ComparisonReport",
    "ComparisonRow",
    "ExperimentConfig",
    "RandomStream",
    "SAMPLER_BOUND",
    "compare_distributions",
    "default_precision",
    "run_experiment",
    "sample_entries",
    "sample_matrices",
    "sample_outcomes",
    "sample_uniform_matrix",
    "uncertified_bound",
    "words_per_entry",
]
