"""Vectorized truncated-normal variates.

Inverse-CDF in the central regime; when the whole interval sits more than
``TAIL`` standard deviations out, exponential rejection (Robert, 1995) or a
uniform proposal for narrow intervals.
"""
import numpy as np
from scipy.special import log_ndtr, ndtri_exp

TAIL = 5.0


def _inverse_cdf(a, b, u):
    # standardized a < b with a <= TAIL; sample in the lower-tail orientation
    flip = a > 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    la = log_ndtr(lo)
    lb = log_ndtr(hi)
    # log(Phi(lo) + u (Phi(hi) - Phi(lo)))
    with np.errstate(divide="ignore"):
        lt = np.logaddexp(la + np.log1p(-u), lb + np.log(u))
    x = ndtri_exp(np.minimum(lt, 0.0))
    x = np.clip(x, lo, hi)
    return np.where(flip, -x, x)


def _tail(a, b, rng):
    """Draws on (a, b] with a > TAIL by vectorized rejection."""
    out = np.empty_like(a)
    narrow = np.isfinite(b) & ((b - a) < 1.0 / a)
    lam = 0.5 * (a + np.sqrt(a * a + 4.0))
    todo = np.arange(a.size)
    while todo.size:
        lo, hi, nw, lm = a[todo], b[todo], narrow[todo], lam[todo]
        # narrow intervals: uniform proposal, acceptance >= exp(-1)
        with np.errstate(invalid="ignore"):
            xu = lo + (hi - lo) * rng.uniform(size=todo.size)
        xe = lo + rng.exponential(size=todo.size) / lm
        x = np.where(nw, xu, xe)
        logacc = np.where(nw, -0.5 * (x * x - lo * lo), -0.5 * (x - lm) ** 2)
        ok = (np.log(rng.uniform(size=todo.size)) <= logacc) & (x <= hi)
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
    return out


def rtruncnorm(mean, sd, lo, hi, rng):
    """Draw N(mean, sd^2) truncated to (lo, hi], elementwise.

    All arguments broadcast; bounds may be infinite.
    """
    mean, sd, lo, hi = np.broadcast_arrays(*(np.asarray(v, dtype=float)
                                             for v in (mean, sd, lo, hi)))
    a = (lo - mean) / sd
    b = (hi - mean) / sd
    u = rng.uniform(size=a.shape)
    x = np.empty(a.shape)
    upper = a > TAIL
    lower = b < -TAIL
    central = ~(upper | lower)
    x[central] = _inverse_cdf(a[central], b[central], u[central])
    if upper.any():
        x[upper] = _tail(a[upper], b[upper], rng)
    if lower.any():
        x[lower] = -_tail(-b[lower], -a[lower], rng)
    z = mean + sd * x
    # guard against rounding onto a closed-open boundary
    z = np.where(z <= lo, np.nextafter(lo, np.inf), z)
    z = np.minimum(z, hi)
    return z
