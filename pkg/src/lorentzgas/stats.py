"""Estimators and comparators: histograms with censoring accounting,
empirical free-path densities, the empirical 2D transition kernel, tail
fits, counting statistics, and distances against analytic targets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class StatsError(ValueError):
    pass


class Histogram:
    """Binned accumulator with exact integer counts.

    total = accepted counts + out-of-range counts + censored counts, so the
    normalized density integrates to exactly
    (in-range count)/(total) and (density integral) + (overflow fraction)
    + (censored fraction) = 1.
    """

    def __init__(self, edges):
        if isinstance(edges, np.ndarray) and edges.ndim == 1:
            edges = [edges]
        self.edges = [np.asarray(e, dtype=float) for e in edges]
        if not 1 <= len(self.edges) <= 3:
            raise StatsError("histogram supports 1 to 3 dimensions")
        for e in self.edges:
            if len(e) < 2 or np.any(np.diff(e) <= 0):
                raise StatsError("edges must be strictly increasing")
        shape = tuple(len(e) - 1 for e in self.edges)
        self.counts = np.zeros(shape, dtype=np.int64)
        self.total = 0
        self.censored = 0

    @property
    def dim(self):
        return len(self.edges)

    def add(self, samples, censored=0):
        """Accumulate samples (array (n,) for 1D or (n, dim)); out-of-range
        samples count toward total but not into any bin."""
        samples = np.asarray(samples, dtype=float)
        if self.dim == 1:
            samples = samples.reshape(-1, 1)
        elif samples.ndim == 1:
            raise StatsError("need (n, dim) samples")
        n = len(samples)
        H, _ = np.histogramdd(samples, bins=self.edges)
        self.counts += H.astype(np.int64)
        self.total += n + int(censored)
        self.censored += int(censored)
        return self

    def add_censored(self, k):
        self.total += int(k)
        self.censored += int(k)
        return self

    def bin_volumes(self):
        vols = np.diff(self.edges[0])
        for e in self.edges[1:]:
            vols = np.multiply.outer(vols, np.diff(e))
        return vols

    def density(self):
        """Probability density: counts / (total * bin volume); integrates to
        1 - (censored + overflow fraction)."""
        if self.total == 0:
            raise StatsError("empty histogram")
        return self.counts / (self.total * self.bin_volumes())

    def centers(self, axis=0):
        e = self.edges[axis]
        return 0.5 * (e[1:] + e[:-1])

    @property
    def censored_fraction(self):
        return self.censored / self.total if self.total else 0.0

    def merge(self, other):
        """Exact count merge; binning must match."""
        if len(self.edges) != len(other.edges) or any(
                len(a) != len(b) or not np.array_equal(a, b)
                for a, b in zip(self.edges, other.edges)):
            raise StatsError("histogram binning mismatch")
        out = Histogram(self.edges)
        out.counts = self.counts + other.counts
        out.total = self.total + other.total
        out.censored = self.censored + other.censored
        return out

    def copy(self):
        out = Histogram(self.edges)
        out.counts = self.counts.copy()
        out.total = self.total
        out.censored = self.censored
        return out


def merge(h1, h2):
    return h1.merge(h2)


def make_xi_edges(xi_bar, n_main=200, main_span=10.0, tail_span=1000.0,
                  n_tail=60):
    """Default free-path binning: uniform on [0, main_span*xi_bar] plus
    logarithmic tail bins out to tail_span*xi_bar."""
    main = np.linspace(0.0, main_span * xi_bar, n_main + 1)
    tail = np.geomspace(main_span * xi_bar, tail_span * xi_bar, n_tail + 1)
    return np.concatenate([main, tail[1:]])


def ks_distance(samples, cdf):
    """One-sample Kolmogorov-Smirnov distance against a CDF callable or
    (grid, cdf_values) pair."""
    xs = np.sort(np.asarray(samples, dtype=float))
    n = len(xs)
    if n == 0:
        raise StatsError("no samples")
    if callable(cdf):
        F = np.asarray(cdf(xs), dtype=float)
    else:
        grid, vals = cdf
        F = np.interp(xs, grid, vals)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def l1_bin_error(h: Histogram, target_density, cell_average=True, order=3):
    """L1 distance between the histogram density and a target density
    callable over the binned region (cell-averaged by Gauss-Legendre so the
    comparison is binning-consistent)."""
    if h.dim != 1:
        raise StatsError("l1_bin_error is 1D")
    e = h.edges[0]
    if cell_average:
        nodes, wts = np.polynomial.legendre.leggauss(order)
        mid = 0.5 * (e[1:] + e[:-1])
        half = 0.5 * np.diff(e)
        x = mid[:, None] + half[:, None] * nodes
        target = np.sum(np.asarray(target_density(x)) * wts, axis=1) / 2.0
    else:
        target = np.asarray(target_density(h.centers()))
    return float(np.sum(np.abs(h.density() - target) * np.diff(e)))


# ---------------------------------------------------------------------------
# Free path accumulation
# ---------------------------------------------------------------------------

def accumulate_paths(batch, r=None, d=2, edges=None, xi_bar=None,
                     skip_first=True):
    """Histogram of macroscopic free paths xi = r^(d-1) ell.

    batch: dict from microdyn.run_batch (uses 'ell', 'censored') or a plain
    array of path lengths (then censored counts can't be inferred).  The
    first flight of each trajectory follows the residual law K rather than
    Phi0 and is excluded by default.
    """
    if edges is None:
        if xi_bar is None:
            raise StatsError("need edges or xi_bar")
        edges = make_xi_edges(xi_bar)
    h = Histogram(edges)
    if isinstance(batch, dict):
        ell = batch["ell"]
        start = 1 if skip_first else 0
        vals = ell[:, start:]
        vals = vals[np.isfinite(vals)]
        xi = vals * (r ** (d - 1)) if r is not None else vals
        h.add(xi, censored=int(batch["censored"].sum()))
    else:
        ell = np.asarray(batch, dtype=float)
        xi = ell * (r ** (d - 1)) if r is not None else ell
        h.add(xi[np.isfinite(xi)])
    return h


def censor_corrected_mean(batch, r=None, d=2, L_max_macro=None,
                          skip_first=True):
    """Mean macroscopic path with each censored flight entering at its cap
    (a lower bound whose bias is reported separately)."""
    ell = batch["ell"]
    start = 1 if skip_first else 0
    vals = ell[:, start:]
    vals = vals[np.isfinite(vals)]
    fac = r ** (d - 1) if r is not None else 1.0
    n_cens = int(batch["censored"].sum())
    s = vals.sum() * fac
    n = len(vals)
    if n_cens and L_max_macro is not None:
        s += n_cens * L_max_macro
        n += n_cens
    return s / n


# ---------------------------------------------------------------------------
# Empirical 2D transition kernel
# ---------------------------------------------------------------------------

@dataclass
class EmpiricalKernel2D:
    """Conditional density estimate khat(w', xi, w) from consecutive
    collision events, normalized per w'-slice against the slice's full
    transition count (so the binned region integrates to the in-window mass).
    """

    wp_edges: np.ndarray
    xi_edges: np.ndarray
    w_edges: np.ndarray
    counts: np.ndarray
    slice_totals: np.ndarray
    sigma_bar: float = 2.0

    def density(self):
        """khat with respect to dxi dp(w) given the w' slice:
        counts / (slice_total * dxi * dw / sigma_bar)."""
        dxi = np.diff(self.xi_edges)
        dw = np.diff(self.w_edges)
        vol = dxi[None, :, None] * dw[None, None, :] / self.sigma_bar
        tot = np.maximum(self.slice_totals, 1)[:, None, None]
        return self.counts / (tot * vol)

    def slice_weights(self):
        tot = self.slice_totals.sum()
        return self.slice_totals / tot if tot else self.slice_totals

    @property
    def xi_bar(self):
        """Mean flight length of the binned transitions (tail-truncated)."""
        xc = 0.5 * (self.xi_edges[1:] + self.xi_edges[:-1])
        tot = self.counts.sum()
        return float((self.counts.sum(axis=(0, 2)) * xc).sum() / tot)

    def sample_conditional(self, w_prev, rng, size=None):
        """Draw (xi, w) from the histogram conditional of the w' slice
        (cells proportional to counts, uniform within a cell).  Lets the
        flight process run on an empirically estimated kernel."""
        if np.ndim(w_prev) == 0:
            w_prev = np.full(size if size is not None else 1, float(w_prev))
        w_prev = np.asarray(w_prev, dtype=float)
        slices = np.clip(np.searchsorted(self.wp_edges, w_prev,
                                         side="right") - 1,
                         0, len(self.wp_edges) - 2)
        n_xi = len(self.xi_edges) - 1
        n_w = len(self.w_edges) - 1
        flat = self.counts.reshape(len(self.slice_totals), -1)
        xi_out = np.empty(len(w_prev))
        w_out = np.empty(len(w_prev))
        for s in np.unique(slices):
            rows = np.where(slices == s)[0]
            weights = flat[s].astype(float)
            if weights.sum() == 0:
                raise StatsError(f"empty w' slice {s} in empirical kernel")
            cells = rng.choice(len(weights), size=len(rows),
                               p=weights / weights.sum())
            i_xi, i_w = np.divmod(cells, n_w)
            u1 = rng.random(len(rows))
            u2 = rng.random(len(rows))
            xi_out[rows] = self.xi_edges[i_xi] + u1 * np.diff(
                self.xi_edges)[i_xi]
            w_out[rows] = self.w_edges[i_w] + u2 * np.diff(
                self.w_edges)[i_w]
        return xi_out, w_out


def estimate_kernel_2d(batch, r, wp_bins=20, xi_max=2.0, xi_bins=20,
                       w_bins=20, min_slice=100):
    """Empirical kernel from consecutive events of a run_batch result.

    Pairs are (exit parameter of collision n-1, macroscopic flight n, impact
    parameter of collision n); in d=2 the signed exit equals the signed
    impact of the same collision, so consecutive w columns pair up.  The
    first flight of each trajectory has no predecessor and is skipped.
    """
    if "w" not in batch:
        raise StatsError("need a batch with impact parameters (store_extra)")
    ell = batch["ell"]
    w = batch["w"]
    s_prev = w[:, :-1].ravel()
    b_next = w[:, 1:].ravel()
    xi = ell[:, 1:].ravel() * r
    ok = np.isfinite(s_prev) & np.isfinite(b_next) & np.isfinite(xi)
    s_prev, b_next, xi = s_prev[ok], b_next[ok], xi[ok]

    wp_edges = np.linspace(-1.0, 1.0, wp_bins + 1)
    xi_edges = np.linspace(0.0, xi_max, xi_bins + 1)
    w_edges = np.linspace(-1.0, 1.0, w_bins + 1)
    H, _ = np.histogramdd(np.stack([s_prev, xi, b_next], axis=1),
                          bins=[wp_edges, xi_edges, w_edges])
    slice_totals, _ = np.histogram(s_prev, bins=wp_edges)
    thin = slice_totals < min_slice
    return EmpiricalKernel2D(wp_edges=wp_edges, xi_edges=xi_edges,
                             w_edges=w_edges, counts=H.astype(np.int64),
                             slice_totals=slice_totals), bool(np.any(thin))


def kernel_l1_distance(emp: EmpiricalKernel2D, kernel_fn, order=3,
                       weighted=True):
    """Slice-averaged L1 distance between khat and an analytic kernel
    k(w', xi, w), with the analytic kernel cell-averaged."""
    nodes, wts = np.polynomial.legendre.leggauss(order)

    def cell_nodes(edges):
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * np.diff(edges)
        return mid[:, None] + half[:, None] * nodes

    wp_n = cell_nodes(emp.wp_edges)
    xi_n = cell_nodes(emp.xi_edges)
    w_n = cell_nodes(emp.w_edges)
    kbar = np.zeros((len(emp.wp_edges) - 1, len(emp.xi_edges) - 1,
                     len(emp.w_edges) - 1))
    for a in range(order):
        for b in range(order):
            for c in range(order):
                kbar += (wts[a] * wts[b] * wts[c]
                         * kernel_fn(wp_n[:, a][:, None, None],
                                     xi_n[:, b][None, :, None],
                                     w_n[:, c][None, None, :]))
    kbar /= 8.0
    dens = emp.density()
    dxi = np.diff(emp.xi_edges)
    dw = np.diff(emp.w_edges)
    vol = dxi[:, None] * dw[None, :] / emp.sigma_bar
    per_slice = np.sum(np.abs(dens - kbar) * vol[None, :, :], axis=(1, 2))
    if weighted:
        return float(np.sum(per_slice * emp.slice_weights()))
    return float(per_slice.mean())


def kernel_slice_spread(emp: EmpiricalKernel2D):
    """Max L1 distance between any w'-slice conditional law and the pooled
    conditional (product-form check for the Poisson configuration)."""
    tot = np.maximum(emp.slice_totals, 1)[:, None, None]
    cond = emp.counts / tot
    pooled = emp.counts.sum(axis=0) / max(emp.slice_totals.sum(), 1)
    keep = emp.slice_totals >= max(100, int(0.2 * emp.slice_totals.mean()))
    spreads = [float(np.sum(np.abs(cond[i] - pooled)))
               for i in range(len(cond)) if keep[i]]
    return max(spreads) if spreads else np.inf


def kernel_symmetry_l1(emp: EmpiricalKernel2D):
    """|khat(w',xi,w) - khat(w,xi,w')| integrated, from the count tensor.

    Uses the joint relative frequencies (symmetry of the stationary pair
    law), which requires matching w and w' binning.
    """
    if len(emp.wp_edges) != len(emp.w_edges) or not np.array_equal(
            emp.wp_edges, emp.w_edges):
        raise StatsError("symmetry check needs matching w/w' bins")
    joint = emp.counts / max(emp.counts.sum(), 1)
    sym = np.transpose(joint, (2, 1, 0))
    return float(np.abs(joint - sym).sum())


# ---------------------------------------------------------------------------
# Tail fit
# ---------------------------------------------------------------------------

def tail_slope(hist: Histogram, window, min_bins=10):
    """Weighted least squares of log density vs log xi over the window.

    Weights are the bin counts (Poisson); censored mass is excluded from
    the fit but visible through hist.censored_fraction.  Returns (slope,
    intercept, slope stderr); the fitted density is exp(intercept) *
    xi^slope.
    """
    lo, hi = window
    e = hist.edges[0]
    centers = np.sqrt(e[1:] * np.maximum(e[:-1], 1e-300))  # geometric mean
    dens = hist.density()
    counts = hist.counts
    sel = (centers >= lo) & (centers <= hi) & (counts > 0)
    if sel.sum() < min_bins:
        raise StatsError(f"tail window has {int(sel.sum())} nonempty bins "
                         f"(need {min_bins})")
    x = np.log(centers[sel])
    y = np.log(dens[sel])
    wgt = counts[sel].astype(float)
    X = np.stack([x, np.ones_like(x)], axis=1)
    WX = X * wgt[:, None]
    cov = np.linalg.inv(X.T @ WX)
    coef = cov @ (WX.T @ y)
    resid = y - X @ coef
    dof = max(len(x) - 2, 1)
    scale = float((wgt * resid ** 2).sum() / dof)
    stderr = float(np.sqrt(cov[0, 0] * scale))
    return float(coef[0]), float(coef[1]), stderr


# ---------------------------------------------------------------------------
# Counting statistics
# ---------------------------------------------------------------------------

def count_statistics(theta_factory, boxes, n_resamples, seed):
    """Empirical count distributions of a renormalized process view.

    theta_factory(w_prime, resample_index) must return an object with
    count_in_box; w' is drawn uniformly on (-1, 1) (an absolutely
    continuous label law).  Returns one integer count array per box.
    """
    rng = np.random.default_rng(seed)
    wps = rng.uniform(-1.0, 1.0, n_resamples)
    results = [np.empty(n_resamples, dtype=np.int64) for _ in boxes]
    for i, wp in enumerate(wps):
        view = theta_factory(float(wp), i)
        for j, box in enumerate(boxes):
            results[j][i] = view.count_in_box(box)
    return results


def count_pmf(counts, k_max=None):
    counts = np.asarray(counts)
    if k_max is None:
        k_max = int(counts.max())
    pmf = np.bincount(counts, minlength=k_max + 1).astype(float)
    return pmf / pmf.sum()


def tv_distance(counts_a, counts_b):
    """Total variation distance between two empirical count distributions."""
    k = int(max(np.max(counts_a), np.max(counts_b)))
    pa = count_pmf(counts_a, k)
    pb = count_pmf(counts_b, k)
    return 0.5 * float(np.abs(pa - pb).sum())


def mean_variance_ratio(counts):
    counts = np.asarray(counts, dtype=float)
    m = counts.mean()
    v = counts.var(ddof=1)
    return float(m / v) if v > 0 else np.inf
