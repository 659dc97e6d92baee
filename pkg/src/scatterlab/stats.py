"""Statistics of two-port scattering ensembles.

Transforms S-matrix samples into reaction-matrix samples through the
Cayley map K = i (S - I)(S + I)^-1, estimates transmission coefficients
T_m = 1 - |<S_mm>|^2 and the enhancement factor

    W = sqrt(var(S_aa) var(S_bb)) / var(S_ab),
    var(X) = <|X|^2> - |<X>|^2,

builds empirical density estimates, and fits the loss parameter gamma of
the exact off-diagonal reaction-matrix density to data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import theory
from .io import TwoPortSamples

__all__ = [
    "KMatrix",
    "DistributionEstimate",
    "FitResult",
    "DirectProcessReport",
    "SingularSampleError",
    "FitError",
    "k_from_s",
    "s_from_k",
    "transmission_coefficient",
    "gamma_from_channels",
    "solve_t_parasitic",
    "enhancement_factor",
    "estimate_distribution",
    "ks_statistic",
    "ks_two_sample",
    "fit_gamma",
    "direct_process_check",
    "subtract_mean_s",
]

_I2 = np.eye(2)


class SingularSampleError(np.linalg.LinAlgError):
    """Cayley transform hit an S eigenvalue at -1 (or K at i)."""


class FitError(RuntimeError):
    """The gamma fit could not be performed on the given data."""


@dataclass(frozen=True)
class KMatrix:
    """A single 2x2 reaction matrix with its provenance tag."""

    values: np.ndarray
    source_id: int = -1

    @property
    def k_aa(self) -> complex:
        return complex(self.values[0, 0])

    @property
    def k_ab(self) -> complex:
        return complex(self.values[0, 1])

    @property
    def k_ba(self) -> complex:
        return complex(self.values[1, 0])

    @property
    def k_bb(self) -> complex:
        return complex(self.values[1, 1])

    @property
    def impedance(self) -> np.ndarray:
        """Normalized impedance view z = i K (so that K = -i z)."""
        return 1j * self.values

    @classmethod
    def from_s(cls, s: np.ndarray, source_id: int = -1) -> "KMatrix":
        return cls(values=k_from_s(np.asarray(s, dtype=complex)), source_id=source_id)


def _cayley(num: np.ndarray, den: np.ndarray, what: str) -> np.ndarray:
    dets = den[..., 0, 0] * den[..., 1, 1] - den[..., 0, 1] * den[..., 1, 0]
    bad = np.abs(dets) < 1e-12
    if np.any(bad):
        idx = np.argwhere(np.atleast_1d(bad)).ravel()[:5].tolist()
        raise SingularSampleError(f"{what} singular for sample index(es) {idx}")
    # X (den) = num  =>  X = solve(den^T, num^T)^T
    return np.swapaxes(
        np.linalg.solve(np.swapaxes(den, -1, -2), np.swapaxes(num, -1, -2)), -1, -2
    )


def k_from_s(s: np.ndarray) -> np.ndarray:
    """Reaction matrix K = i (S - I)(S + I)^-1 for one matrix or a batch."""
    s = np.asarray(s, dtype=complex)
    return 1j * _cayley(s - _I2, s + _I2, "S + I")


def s_from_k(k: np.ndarray) -> np.ndarray:
    """Inverse map S = (iI + K)(iI - K)^-1."""
    k = np.asarray(k, dtype=complex)
    return _cayley(1j * _I2 + k, 1j * _I2 - k, "iI - K")


def k_samples(samples: TwoPortSamples) -> TwoPortSamples:
    """Apply the Cayley map to a whole sample set, keeping the tags."""
    return TwoPortSamples(
        s=k_from_s(samples.s), coord=samples.coord,
        realization=samples.realization, source=samples.source,
    )


_PORT_INDEX = {"a": 0, "b": 1, 0: 0, 1: 1}


def transmission_coefficient(samples: TwoPortSamples | np.ndarray, port="a") -> float:
    """T_m = 1 - |<S_mm>|^2 averaged over the whole ensemble (all
    realizations and spectral points pooled)."""
    s = samples.s if isinstance(samples, TwoPortSamples) else np.asarray(samples)
    if len(s) == 0:
        raise ValueError("no samples")
    if len(s) < 100:
        raise ValueError(f"need at least 100 samples for a transmission estimate, got {len(s)}")
    m = _PORT_INDEX[port]
    return float(1.0 - abs(s[:, m, m].mean()) ** 2)


def gamma_from_channels(t_a: float, t_b: float, m_channels: int, t_c: float) -> float:
    """Total loss parameter gamma = T_a + T_b + M * T_c."""
    for name, t in (("t_a", t_a), ("t_b", t_b), ("t_c", t_c)):
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {t}")
    if m_channels < 1:
        raise ValueError("m_channels must be >= 1")
    return t_a + t_b + m_channels * t_c

def solve_t_parasitic(gamma: float, t_a: float, t_b: float, m_channels: int) -> float:
    """Invert the decomposition for the per-channel parasitic transmission."""
    if m_channels < 1:
        raise ValueError("m_channels must be >= 1")
    t_c = (gamma - t_a - t_b) / m_channels
    if not 0.0 <= t_c <= 1.0:
        raise ValueError(
            f"infeasible decomposition: T_c = {t_c:.4g} outside [0, 1] "
            f"for gamma={gamma}, T_a={t_a}, T_b={t_b}, M={m_channels}"
        )
    return t_c


def _complex_var(x: np.ndarray) -> float:
    return float((np.abs(x) ** 2).mean() - abs(x.mean()) ** 2)


def enhancement_factor(
    samples: TwoPortSamples | np.ndarray,
    n_boot: int = 200,
    seed: int = 0,
) -> tuple[float, float]:
    """Enhancement factor W with a bootstrap standard error.

    Resampling is over realizations, not individual spectral points,
    because points within one realization are correlated.
    """
    if isinstance(samples, TwoPortSamples):
        s, real = samples.s, samples.realization
    else:
        s = np.asarray(samples)
        real = np.arange(len(s))
    if len(s) < 500:
        raise ValueError(f"need at least 500 samples for a variance ratio, got {len(s)}")

    def w_of(sub: np.ndarray) -> float:
        v_ab = _complex_var(sub[:, 0, 1])
        if v_ab == 0.0:
            raise ValueError("var(S_ab) vanishes; enhancement factor undefined")
        return math.sqrt(_complex_var(sub[:, 0, 0]) * _complex_var(sub[:, 1, 1])) / v_ab

    w = w_of(s)
    groups = np.unique(real)
    rng = np.random.default_rng(seed)
    boots = np.empty(n_boot)
    by_group = {g: np.flatnonzero(real == g) for g in groups}
    for b in range(n_boot):
        pick = rng.choice(groups, size=len(groups), replace=True)
        idx = np.concatenate([by_group[g] for g in pick])
        boots[b] = w_of(s[idx])
    return w, float(boots.std(ddof=1))


@dataclass
class DistributionEstimate:
    """Binned or kernel-smoothed empirical density."""

    edges: np.ndarray
    density: np.ndarray
    n_samples: int
    kind: str = "histogram"
    bandwidth: float | None = None

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        self.density = np.asarray(self.density, dtype=float)
        if np.any(self.density < 0.0):
            raise ValueError("negative density")
        mass = float(np.sum(self.density * np.diff(self.edges)))
        if abs(mass - 1.0) > 1e-12:
            raise ValueError(f"density mass {mass} deviates from 1")

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def interp(self, u) -> np.ndarray:
        """Piecewise-constant density lookup, zero outside the support."""
        u = np.asarray(u, dtype=float)
        idx = np.searchsorted(self.edges, u, side="right") - 1
        val = np.where((idx >= 0) & (idx < len(self.density)),
                       self.density[np.clip(idx, 0, len(self.density) - 1)], 0.0)
        return val


def estimate_distribution(
    values: np.ndarray,
    kind: str = "histogram",
    bins="fd",
    bandwidth: float | None = None,
    grid_points: int = 512,
) -> DistributionEstimate:
    """Normalized empirical density of a real-valued sample.

    Histogram bin width defaults to the Freedman-Diaconis rule; the kernel
    option uses a Gaussian kernel of the given (or Scott) bandwidth,
    evaluated on a regular grid and renormalized.
    """
    values = np.asarray(values, dtype=float)
    if len(values) < 100:
        raise ValueError(f"need at least 100 values, got {len(values)}")
    if float(values.min()) == float(values.max()):
        raise ValueError("degenerate sample: all values equal")
    if kind == "histogram":
        edges = np.histogram_bin_edges(values, bins=bins)
        if len(edges) < 3:
            raise ValueError("degenerate sample: bin rule produced a single bin")
        dens, edges = np.histogram(values, bins=edges, density=True)
        return DistributionEstimate(edges=edges, density=dens, n_samples=len(values))
    if kind == "kernel":
        from scipy.stats import gaussian_kde

        kde = gaussian_kde(values, bw_method=bandwidth)
        bw = float(kde.factor * values.std(ddof=1))
        lo, hi = values.min() - 4 * bw, values.max() + 4 * bw
        edges = np.linspace(lo, hi, grid_points + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        dens = kde(mids)
        dens /= np.sum(dens * np.diff(edges))
        return DistributionEstimate(edges=edges, density=dens, n_samples=len(values),
                                    kind="kernel", bandwidth=bw)
    raise ValueError(f"unknown estimator kind {kind!r}")


def ks_statistic(values: np.ndarray, cdf) -> float:
    """One-sample Kolmogorov-Smirnov distance against a CDF callable."""
    values = np.sort(np.asarray(values, dtype=float))
    if len(values) == 0:
        raise ValueError("empty sample")
    f = np.asarray(cdf(values), dtype=float)
    if np.any(np.diff(f) < -1e-12) or np.any(f < -1e-12) or np.any(f > 1.0 + 1e-12):
        raise ValueError("CDF callable is not monotone into [0, 1]")
    n = len(values)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_two_sample(x: np.ndarray, y: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov distance (exact sup difference)."""
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    if len(x) == 0 or len(y) == 0:
        raise ValueError("empty sample")
    both = np.concatenate([x, y])
    fx = np.searchsorted(x, both, side="right") / len(x)
    fy = np.searchsorted(y, both, side="right") / len(y)
    return float(np.max(np.abs(fx - fy)))


@dataclass
class FitResult:
    """Outcome of the 1-D loss-parameter fit."""

    gamma_hat: float
    stderr: float
    objective: float
    objective_kind: str
    n_samples: int
    ks_by_curve: dict = field(default_factory=dict)
    t_a: float | None = None
    t_b: float | None = None
    m_channels: int | None = None
    t_c: float | None = None

    def decomposition_residual(self) -> float | None:
        if self.t_c is None:
            return None
        return abs(self.gamma_hat - (self.t_a + self.t_b + self.m_channels * self.t_c))


def _golden_minimize(fn, lo: float, hi: float, rel_tol: float = 1e-4):
    """Golden-section on log-gamma; assumes a bracket with interior min."""
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = math.log(lo), math.log(hi)
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = fn(math.exp(c)), fn(math.exp(d))
    while (b - a) > rel_tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = fn(math.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = fn(math.exp(d))
    xm = math.exp(0.5 * (a + b))
    return xm, fn(xm)


def _bracket(fn, g0: float):
    """Coarse log-grid scan around g0 until the minimum is interior."""
    grid = [g0 * 3.0**e for e in range(-3, 4)]
    vals = [fn(g) for g in grid]
    for _ in range(6):
        i = int(np.argmin(vals))
        if 0 < i < len(grid) - 1:
            return grid[i - 1], grid[i + 1]
        if i == 0 and grid[0] / 3.0 > 1e-4:
            grid.insert(0, grid[0] / 3.0)
            vals.insert(0, fn(grid[0]))
        elif i == len(grid) - 1 and grid[-1] * 3.0 < 1e4:
            grid.append(grid[-1] * 3.0)
            vals.append(fn(grid[-1]))
        else:
            break
    raise FitError("objective has no interior minimum in gamma (flat or insufficient data)")


def fit_gamma(
    values: np.ndarray | None = None,
    estimate: DistributionEstimate | None = None,
    objective: str = "ks",
    realization: np.ndarray | None = None,
    t_a: float | None = None,
    t_b: float | None = None,
    m_channels: int | None = None,
    n_boot: int = 40,
    seed: int = 0,
    rel_tol: float = 1e-4,
) -> FitResult:
    """Fit the loss parameter gamma of the exact off-diagonal density.

    ``values`` are pooled Re/Im reaction-matrix samples (the two parts are
    identically distributed without time-reversal symmetry, so pooling
    doubles the sample).  The default objective is the bandwidth-free KS
    distance; ``objective='ise'`` minimizes the integrated squared error
    against a density estimate instead (useful for curve-only input).

    The standard error is read off where the objective rises by the
    bootstrap noise floor above its minimum.
    """
    if objective not in ("ks", "ise"):
        raise ValueError(f"unknown objective {objective!r}")
    if objective == "ks":
        if values is None:
            raise FitError("KS objective needs raw sample values")
        values = np.asarray(values, dtype=float)
        if len(values) < 200:
            raise FitError(f"too few samples for a fit: {len(values)}")
        var0 = values.var()
        n_eff = len(values)

        def obj(g: float) -> float:
            return ks_statistic(values, theory.marginal_cdf(theory.TheoryParams(g)))

    else:
        if estimate is None:
            if values is None:
                raise FitError("ISE objective needs a density estimate or samples")
            estimate = estimate_distribution(np.asarray(values, dtype=float))
        mids = estimate.centers
        widths = np.diff(estimate.edges)
        var0 = float(np.sum(estimate.density * widths * mids**2))
        n_eff = estimate.n_samples

        def obj(g: float) -> float:
            th = theory.marginal_curve(mids, theory.TheoryParams(g))
            return float(np.sum((estimate.density - th) ** 2 * widths))

    # moment-based starting point: the marginal has variance 2/gamma
    g0 = min(max(2.0 / max(var0, 1e-9), 1e-3), 1e3)
    lo, hi = _bracket(obj, g0)
    gamma_hat, f_min = _golden_minimize(obj, lo, hi, rel_tol=rel_tol)

    stderr = 0.0
    if objective == "ks" and n_boot > 0:
        rng = np.random.default_rng(seed)
        cdf_hat = theory.marginal_cdf(theory.TheoryParams(gamma_hat))
        if realization is not None and len(np.unique(realization)) > 1:
            groups = np.unique(realization)
            by_group = {g: values[realization == g] for g in groups}
            draws = [
                np.concatenate([by_group[g] for g in rng.choice(groups, len(groups))])
                for _ in range(n_boot)
            ]
        else:
            draws = [rng.choice(values, size=len(values), replace=True) for _ in range(n_boot)]
        noise = np.std([ks_statistic(d, cdf_hat) for d in draws], ddof=1)
        stderr = _objective_halfwidth(obj, gamma_hat, f_min + noise)

    t_c = None
    if t_a is not None and t_b is not None and m_channels:
        t_c = solve_t_parasitic(gamma_hat, t_a, t_b, m_channels)
    return FitResult(
        gamma_hat=gamma_hat, stderr=stderr, objective=f_min, objective_kind=objective,
        n_samples=n_eff, t_a=t_a, t_b=t_b, m_channels=m_channels, t_c=t_c,
    )


def _objective_halfwidth(obj, gamma_hat: float, level: float) -> float:
    """Half-width of {gamma : obj(gamma) <= level} around the minimum."""

    def cross(direction: int) -> float:
        step = 0.02 * gamma_hat
        g_prev, f_prev = gamma_hat, obj(gamma_hat)
        for _ in range(60):
            g = g_prev + direction * step
            if g <= 0:
                return abs(g_prev - gamma_hat)
            f = obj(g)
            if f >= level:
                # linear interpolation to the crossing
                frac = (level - f_prev) / max(f - f_prev, 1e-300)
                return abs(g_prev + direction * step * frac - gamma_hat)
            g_prev, f_prev = g, f
            step *= 1.3
        return abs(g_prev - gamma_hat)

    return 0.5 * (cross(+1) + cross(-1))


@dataclass
class DirectProcessReport:
    """Magnitudes of the ensemble-averaged S entries and a contamination flag."""

    mean_ab: float
    mean_aa: float
    mean_bb: float
    flagged: bool
    threshold: float = 0.1

    def summary(self) -> str:
        state = "FLAG: direct-process contamination" if self.flagged else "ok"
        return (f"|<S_ab>| = {self.mean_ab:.4f}, |<S_aa>| = {self.mean_aa:.4f}, "
                f"|<S_bb>| = {self.mean_bb:.4f} -> {state}")


def direct_process_check(samples: TwoPortSamples | np.ndarray, threshold: float = 0.1) -> DirectProcessReport:
    """Report residual direct (non-chaotic) transmission between the ports.

    A large |<S_ab>| cannot be removed by this pipeline; it requires
    hardware-level mitigation before the Cayley transform is meaningful.
    """
    s = samples.s if isinstance(samples, TwoPortSamples) else np.asarray(samples)
    if len(s) < 500:
        raise ValueError(f"need at least 500 samples, got {len(s)}")
    mean_ab = abs(s[:, 0, 1].mean())
    return DirectProcessReport(
        mean_ab=float(mean_ab),
        mean_aa=float(abs(s[:, 0, 0].mean())),
        mean_bb=float(abs(s[:, 1, 1].mean())),
        flagged=bool(mean_ab > threshold),
        threshold=threshold,
    )


def subtract_mean_s(samples: TwoPortSamples) -> TwoPortSamples:
    """Optional mean-subtraction mode (off by default in the pipeline):
    removes the ensemble-averaged S matrix from every sample."""
    return TwoPortSamples(
        s=samples.s - samples.s.mean(axis=0), coord=samples.coord,
        realization=samples.realization, source=samples.source,
    )
