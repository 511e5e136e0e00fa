"""Brute-force checks of the divergence identities and inequalities behind
the temporal-stability analysis.

Natural logarithms throughout, so the log e factors of the bounds equal 1.
The entropy-confidence implication is checked only on two-mass
distributions (a dominant mass with the remainder split uniformly); it is
false for arbitrary distributions, where entropy does not determine the
maximum mass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import erf

_DIST_TOL = 1e-12


def _validate_dist(p: np.ndarray) -> np.ndarray:
    q = np.asarray(p, dtype=float)
    if q.ndim != 1 or q.size < 1:
        raise ValueError(f"distribution must be a 1-d vector, got shape {q.shape}")
    if q.min() < -_DIST_TOL:
        raise ValueError(f"negative probability {q.min()}")
    if abs(q.sum() - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {q.sum()}, not 1")
    return q


def entropy(p: np.ndarray) -> float:
    """Shannon entropy in nats with 0 log 0 := 0."""
    q = _validate_dist(p)
    terms = np.where(q > 0.0, q * np.log(np.where(q > 0.0, q, 1.0)), 0.0)
    return float(-terms.sum())


def two_point_entropy(p_star: float, k: int) -> float:
    """Entropy of (p*, remainder split over the other K-1 classes)."""
    if k < 2:
        raise ValueError(f"need K >= 2, got {k}")
    if not 1.0 / k - 1e-12 <= p_star <= 1.0 + 1e-12:
        raise ValueError(f"p_star must lie in [1/K, 1], got {p_star}")
    rest = 1.0 - p_star
    h = 0.0
    if p_star > 0.0:
        h -= p_star * np.log(p_star)
    if rest > 0.0:
        h -= rest * np.log(rest / (k - 1))
    return float(h)


def _check_support(p: np.ndarray, q: np.ndarray):
    if np.any((p > 0.0) & (q <= 0.0)):
        raise ValueError("support violation: p puts mass where q has none")


def kl(p: np.ndarray, q: np.ndarray) -> float:
    """Kullback-Leibler divergence in nats."""
    pp, qq = _validate_dist(p), _validate_dist(q)
    _check_support(pp, qq)
    mask = pp > 0.0
    return float((pp[mask] * np.log(pp[mask] / qq[mask])).sum())


def tv(p: np.ndarray, q: np.ndarray) -> float:
    """Total variation distance (half the L1 distance)."""
    return float(0.5 * np.abs(_validate_dist(p) - _validate_dist(q)).sum())


def chi2(p: np.ndarray, q: np.ndarray) -> float:
    """Pearson chi-square divergence sum (p-q)^2 / q."""
    pp, qq = _validate_dist(p), _validate_dist(q)
    _check_support(pp, qq)
    mask = (pp > 0.0) | (qq > 0.0)
    return float((((pp[mask] - qq[mask]) ** 2) / qq[mask]).sum())


def _two_mass_decompose(p: np.ndarray, tol: float = 1e-9):
    """Return (p_star, K) if p is a two-mass distribution, else raise."""
    q = _validate_dist(p)
    k = q.size
    if k < 2:
        raise ValueError("need K >= 2")
    star = int(np.argmax(q))
    rest = np.delete(q, star)
    expected = (1.0 - q[star]) / (k - 1)
    if np.abs(rest - expected).max() > tol:
        raise ValueError(
            "not a two-mass distribution (max mass plus uniform remainder); "
            "the entropy-confidence implication is only checked on that family"
        )
    return float(q[star]), k


def lemma1_check(p_t: np.ndarray, p_t1: np.ndarray) -> bool:
    """On two-mass distributions: entropy rising implies max confidence falling."""
    star_t, k_t = _two_mass_decompose(p_t)
    star_t1, k_t1 = _two_mass_decompose(p_t1)
    if k_t != k_t1:
        raise ValueError(f"class counts differ: {k_t} vs {k_t1}")
    h_t = two_point_entropy(star_t, k_t)
    h_t1 = two_point_entropy(star_t1, k_t1)
    if h_t <= h_t1:
        return star_t >= star_t1 - 1e-12
    return True


def chi2_gaussian_shift(delta: float, sigma: float) -> float:
    """Chi-square divergence between equal-variance Gaussians shifted by delta."""
    if sigma <= 0.0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return float(np.expm1(delta**2 / sigma**2))


def fisher_info_gaussian(sigma: float) -> float:
    """Fisher information of a Gaussian location family."""
    if sigma <= 0.0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return 1.0 / sigma**2


def _chi2_gaussian_quadrature(delta: float, sigma: float) -> float:
    """Numeric integral of p^2/q - 1 for the shifted-Gaussian pair."""

    def integrand(x):
        p = np.exp(-((x - delta) ** 2) / (2 * sigma**2)) / (sigma * np.sqrt(2 * np.pi))
        q = np.exp(-(x**2) / (2 * sigma**2)) / (sigma * np.sqrt(2 * np.pi))
        return p * p / q

    lo, hi = -12 * sigma + min(0.0, delta), 12 * sigma + max(0.0, delta)
    value, _ = integrate.quad(integrand, lo, hi, limit=200)
    return float(value - 1.0)


def score_dist_tv(scores_a: np.ndarray, scores_b: np.ndarray, bins: int) -> float:
    """Total variation between binned empirical score distributions.

    A diagnostic proxy for the covariate-vs-semantic score-distribution
    dissimilarity; the bin grid spans the pooled range of both samples.
    """
    a = np.asarray(scores_a, dtype=float)
    b = np.asarray(scores_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("need nonempty score vectors")
    if bins < 2:
        raise ValueError(f"need at least 2 bins, got {bins}")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if lo == hi:
        return 0.0
    edges = np.linspace(lo, hi, bins + 1)
    ha, _ = np.histogram(a, bins=edges)
    hb, _ = np.histogram(b, bins=edges)
    return float(0.5 * np.abs(ha / a.size - hb / b.size).sum())


def analytic_gaussian_tv(mean_gap: float, sigma: float) -> float:
    """Closed-form TV between two equal-variance Gaussians."""
    return float(erf(abs(mean_gap) / (2.0 * sigma * np.sqrt(2.0))))


@dataclass(frozen=True)
class PropertyCheck:
    name: str
    trials: int
    violations: int
    max_violation: float
    passed: bool

    def to_row(self) -> list:
        return [self.name, self.trials, self.violations, self.max_violation, self.passed]


SWEEP_COLUMNS = ("property", "trials", "violations", "max_violation", "passed")


def _random_dist_pairs(rng, count: int, max_k: int = 16):
    """Random distribution pairs with q bounded away from zero mass."""
    for _ in range(count):
        k = int(rng.integers(2, max_k + 1))
        p = rng.dirichlet(np.full(k, 2.0))
        q = rng.dirichlet(np.full(k, 2.0))
        q = 0.99 * q + 0.01 / k
        yield p, q


def run_verification_sweep(seed: int = 0) -> list[PropertyCheck]:
    """All randomized and grid checks, one result row per property."""
    rng = np.random.default_rng(seed)
    results = []

    # Strict monotone decrease of the two-mass entropy over [1/K, 1].
    trials, violations, worst = 0, 0, 0.0
    for k in range(2, 17):
        grid = np.linspace(1.0 / k, 1.0, 10_000)
        values = np.array([two_point_entropy(p, k) for p in grid])
        diffs = np.diff(values)
        trials += diffs.size
        violations += int((diffs >= 0.0).sum())
        worst = max(worst, float(diffs.max()) if diffs.size else 0.0)
    results.append(
        PropertyCheck("two_point_entropy_monotone", trials, violations, max(0.0, worst), violations == 0)
    )

    # chi-square as sum p^2/q - 1 agrees with the (p-q)^2/q form.
    trials, violations, worst = 0, 0, 0.0
    for p, q in _random_dist_pairs(rng, 1000):
        gap = abs((p * p / q).sum() - 1.0 - chi2(p, q))
        trials += 1
        worst = max(worst, gap)
        if gap > 1e-12:
            violations += 1
    results.append(PropertyCheck("chi2_moment_identity", trials, violations, worst, violations == 0))

    # KL bounded by half of TV plus chi-square (nats).
    trials, violations, worst = 0, 0, 0.0
    for p, q in _random_dist_pairs(rng, 1000):
        gap = kl(p, q) - 0.5 * (tv(p, q) + chi2(p, q))
        trials += 1
        worst = max(worst, gap)
        if gap > 1e-12:
            violations += 1
    results.append(PropertyCheck("kl_tv_chi2_bound", trials, violations, worst, violations == 0))

    # Entropy up implies max confidence down, over random two-mass pairs.
    trials, violations = 100_000, 0
    for _ in range(trials):
        k = int(rng.integers(2, 17))
        p_star_a = rng.uniform(1.0 / k, 1.0)
        p_star_b = rng.uniform(1.0 / k, 1.0)
        pa = np.full(k, (1.0 - p_star_a) / (k - 1))
        pa[0] = p_star_a
        pb = np.full(k, (1.0 - p_star_b) / (k - 1))
        pb[0] = p_star_b
        if not lemma1_check(pa, pb):
            violations += 1
    results.append(
        PropertyCheck("two_mass_entropy_confidence", trials, violations, float(violations), violations == 0)
    )

    # Small-shift chi-square matches delta^2 times the Fisher information.
    ratio = chi2_gaussian_shift(0.01, 1.0) / (0.01**2 * fisher_info_gaussian(1.0))
    small_ok = 0.9999 <= ratio <= 1.0001
    results.append(
        PropertyCheck("chi2_fisher_small_shift", 1, int(not small_ok), abs(ratio - 1.0), small_ok)
    )

    ratios = [
        chi2_gaussian_shift(d, 1.0) / (d**2 * fisher_info_gaussian(1.0)) for d in (0.5, 0.1, 0.01)
    ]
    mono_ok = ratios[0] > ratios[1] > ratios[2] >= 1.0
    results.append(
        PropertyCheck(
            "chi2_fisher_ratio_monotone",
            len(ratios),
            int(not mono_ok),
            max(r - 1.0 for r in ratios),
            mono_ok,
        )
    )

    # Closed form against numeric quadrature of the shifted-Gaussian integral.
    trials, violations, worst = 0, 0, 0.0
    for delta, sigma in ((0.5, 1.0), (0.25, 0.5), (1.0, 2.0)):
        gap = abs(chi2_gaussian_shift(delta, sigma) - _chi2_gaussian_quadrature(delta, sigma))
        trials += 1
        worst = max(worst, gap)
        if gap > 1e-8:
            violations += 1
    results.append(
        PropertyCheck("chi2_gaussian_quadrature", trials, violations, worst, violations == 0)
    )

    # Binned empirical TV recovers the analytic Gaussian value.
    a = rng.normal(0.0, 1.0, size=100_000)
    b = rng.normal(3.0, 1.0, size=100_000)
    gap = abs(score_dist_tv(a, b, 100) - analytic_gaussian_tv(3.0, 1.0))
    results.append(PropertyCheck("score_dist_tv_gaussian", 1, int(gap > 0.02), gap, gap <= 0.02))

    return results
