"""Inertia from a low-order identified model of power-to-speed dynamics.

Per area the map from power deviation to COI speed deviation is identified
with a deterministic subspace (N4SID) method, the model's unit step response
is fitted with a polynomial in time, and the inertia follows from the initial
slope: ``H = -1 / (2 c1)``.  Damping is not estimated.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy import signal as sps

from .core import AreaDataset, AreaResult, InertiaEstimate, Method, SignalTrace


RCOND = 1e-12
# default past/future horizon of the block-Hankel matrices (40 rows at 60 Hz)
HORIZON_S = 2.0 / 3.0


class InsufficientExcitation(ValueError):
    pass


class NoContinuousEquivalent(ValueError):
    """Discrete model with an eigenvalue on the negative real axis."""


@dataclass(frozen=True)
class SysIdConfig:
    order: int = 2
    n_poly: int = 4
    t_fit: float = 0.5
    # step-response sampling; None uses the dataset interval
    step_dt: float | None = None
    horizon_rows: int | None = None
    projection: str = "moesp"

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("model order must be >= 1")
        if self.n_poly < 1:
            raise ValueError("polynomial order must be >= 1")
        if not self.t_fit > 0:
            raise ValueError("t_fit must be positive")


@dataclass(frozen=True)
class IdentifiedModel:
    """Discrete SISO state-space model plus its continuous-time equivalent."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    dt: float
    Ac: np.ndarray
    Bc: np.ndarray
    num: np.ndarray  # continuous transfer function, highest power first
    den: np.ndarray
    fit_pct: float
    singular_values: np.ndarray
    unstable: bool = False
    diagnostics: dict = field(default_factory=dict)

    @property
    def order(self) -> int:
        return self.A.shape[0]

    @property
    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.A)

    @property
    def continuous_poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.Ac)


@dataclass(frozen=True)
class PolynomialFit:
    order: int
    coefficients: np.ndarray  # c0 .. c_order, unscaled monomial basis
    t_fit: float
    residual_rms: float

    @property
    def slope(self) -> float:
        return float(self.coefficients[1])

    def __call__(self, t):
        return np.polynomial.polynomial.polyval(t, self.coefficients)


# ---------------------------------------------------------------------------
# subspace identification
# ---------------------------------------------------------------------------


def _hankel(x: np.ndarray, rows: int, cols: int) -> np.ndarray:
    return np.lib.stride_tricks.sliding_window_view(x, cols)[:rows].copy()


def _project(A, B):
    """Row-space projection A / B."""
    return A @ np.linalg.pinv(B, rcond=RCOND) @ B


def _observability(u, y, n, i, projection):
    """Extended observability matrix from block-Hankel data.

    ``"moesp"``: future outputs with the future-input part removed, correlated
    with past inputs/outputs as instruments.  ``"oblique"``: the classic N4SID
    oblique projection along future inputs onto past data.
    """
    N = u.size
    j = N - 2 * i + 1
    if j < 2 * i + 1:
        raise ValueError(f"too few samples ({N}) for horizon {i}")
    data = np.vstack([_hankel(u, 2 * i, j), _hankel(y, 2 * i, j)]) / math.sqrt(j)
    # rows of the LQ factor stand in for the data rows (same inner products)
    L = np.linalg.qr(data.T, mode="r").T
    U = L[: 2 * i]
    Y = L[2 * i:]
    Wp = np.vstack([U[:i], Y[:i]])
    Yf_perp = Y[i:] - _project(Y[i:], U[i:])
    if projection == "moesp":
        O = Yf_perp @ Wp.T
    elif projection == "oblique":
        Wp_perp = Wp - _project(Wp, U[i:])
        O = Yf_perp @ np.linalg.pinv(Wp_perp, rcond=RCOND) @ Wp
    else:
        raise ValueError(f"unknown projection {projection!r}")
    Us, s, _ = np.linalg.svd(O)
    if s[0] <= 1e-12 * max(1.0, np.abs(Y).max()):
        raise InsufficientExcitation("insufficient excitation: output not explained by input history")
    n_eff = int(min(n, np.sum(s > 1e-9 * s[0])))
    return Us[:, :n_eff] * np.sqrt(s[:n_eff]), s


def _reflect_unstable(A):
    """Mirror eigenvalues outside the unit circle to ``1/conj(mu)``."""
    mu, V = np.linalg.eig(A)
    bad = np.abs(mu) > 1.0
    if not bad.any():
        return A, False
    mu = np.where(bad, 1.0 / np.conj(mu), mu)
    return (V @ np.diag(mu) @ np.linalg.inv(V)).real, True


def _output_error_fit(A, C, u, y):
    """Least-squares B, D and initial state for fixed (A, C)."""
    n = A.shape[0]
    N = u.size
    cols = []
    zero = np.zeros((1, 1))
    for k in range(n):
        e = np.zeros((n, 1))
        e[k] = 1.0
        cols.append(_simulate(A, e, C, zero, u))
    cols.append(u)
    free = np.empty((N, n))
    x = np.eye(n)
    for k in range(N):
        free[k] = C[0] @ x
        x = A @ x
    Phi = np.column_stack(cols + [free])
    scale = np.linalg.norm(Phi, axis=0)
    scale[scale == 0] = 1.0
    theta = np.linalg.lstsq(Phi / scale, y, rcond=None)[0] / scale
    return theta[:n, None], theta[n: n + 1, None], theta[n + 1:], Phi @ theta


def _to_continuous(A, B, dt):
    """Invert zero-order-hold discretisation via the block matrix logarithm."""
    n = A.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = A
    M[:n, n:] = B
    M[n, n] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        L = linalg.logm(M) / dt
    if np.iscomplexobj(L):
        if np.abs(L.imag).max() > 1e-8 * max(1.0, np.abs(L.real).max()):
            raise NoContinuousEquivalent("discrete model has no real continuous-time equivalent")
        L = L.real
    return L[:n, :n], L[:n, n:]


def _simulate(A, B, C, D, u, x0=None):
    x = np.zeros(A.shape[0]) if x0 is None else x0
    y = np.empty(u.size)
    b = B[:, 0]
    c = C[0]
    d = D[0, 0]
    for k, uk in enumerate(u):
        y[k] = c @ x + d * uk
        x = A @ x + b * uk
    return y


def identify(
    u: SignalTrace,
    y: SignalTrace,
    order: int = 2,
    horizon_rows: int | None = None,
    projection: str = "moesp",
) -> IdentifiedModel:
    """Subspace identification of the SISO map ``u -> y``.

    (A, C) come from the shift structure of the extended observability matrix;
    eigenvalues outside the unit circle are mirrored inside (flagged as
    ``unstable``).  (B, D) and the initial state then minimise the simulated
    output error, which keeps near-integrating models well conditioned.
    Signals are scaled to unit RMS first.  Data of lower numerical rank than
    ``order`` give a smaller model with ``diagnostics["rank_limited"]`` set.
    """
    if len(u) != len(y) or u.dt != y.dt:
        raise ValueError("input and output must share length and sampling")
    if order < 1:
        raise ValueError("order must be >= 1")
    uv = u.values
    yv = y.values
    su = math.sqrt(np.mean(uv ** 2))
    sy = math.sqrt(np.mean(yv ** 2))
    if su == 0 or not np.any(np.abs(uv - uv[0]) > 0):
        raise InsufficientExcitation("insufficient excitation: input is constant")
    if sy == 0:
        raise InsufficientExcitation("insufficient excitation: output is identically zero")
    i = horizon_rows or max(10, 4 * order, round(HORIZON_S / u.dt))
    un, yn = uv / su, yv / sy
    gamma, s = _observability(un, yn, order, i, projection)
    n_eff = gamma.shape[1]
    C = gamma[:1]
    A = np.linalg.lstsq(gamma[:-1], gamma[1:], rcond=None)[0]
    A, unstable = _reflect_unstable(A)
    B, D, x0, yhat = _output_error_fit(A, C, un, yn)
    B = B / su
    C = C * sy
    D = D * sy / su

    dt = u.dt
    Ac, Bc = _to_continuous(A, B, dt)
    num, den = sps.ss2tf(Ac, Bc, C, D)
    num = np.atleast_1d(np.squeeze(num))

    denom = np.linalg.norm(yn - yn.mean())
    fit = 100.0 * (1.0 - np.linalg.norm(yn - yhat) / denom) if denom > 0 else float("nan")
    diag = {
        "horizon_rows": i,
        "projection": projection,
        "rank_limited": n_eff < order,
        "requested_order": order,
        "x0": (x0 * sy).tolist(),
    }
    return IdentifiedModel(A, B, C, D, dt, Ac, Bc, num, den, float(fit), s, unstable, diag)


def step_response(model: IdentifiedModel, horizon_s: float, dt: float | None = None) -> SignalTrace:
    """Unit-step response of the continuous model sampled every ``dt``.

    Sampling is exact (zero-order hold of a constant input), so ``g(0)`` equals
    the feed-through term.
    """
    if not horizon_s > 0:
        raise ValueError("horizon must be positive")
    dt = model.dt if dt is None else dt
    n_pts = math.ceil(horizon_s / dt - 1e-9) + 1
    n = model.Ac.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = model.Ac
    M[:n, n:] = model.Bc
    E = linalg.expm(M * dt)
    Phi, Gam = E[:n, :n], E[:n, n:]
    u = np.ones(n_pts)
    g = _simulate(Phi, Gam, model.C, model.D, u)
    return SignalTrace(g, dt, 0.0)


def fit_polynomial(g: SignalTrace, n_poly: int, t_fit: float) -> PolynomialFit:
    """Least-squares polynomial of order ``n_poly`` over ``[0, t_fit]`` of the trace."""
    if n_poly < 1:
        raise ValueError("polynomial order must be >= 1")
    t = g.times - g.t0
    if t_fit > t[-1] + 1e-9:
        raise ValueError("fit window extends past the step response")
    mask = t <= t_fit + 1e-9
    if mask.sum() < n_poly + 1:
        raise ValueError(f"{mask.sum()} samples cannot determine an order-{n_poly} polynomial")
    tau = t[mask] / t_fit
    scaled = np.polynomial.polynomial.polyfit(tau, g.values[mask], n_poly)
    coeffs = scaled / t_fit ** np.arange(n_poly + 1)
    resid = g.values[mask] - np.polynomial.polynomial.polyval(t[mask], coeffs)
    return PolynomialFit(n_poly, coeffs, t_fit, float(np.sqrt(np.mean(resid ** 2))))


def estimate_area(power: SignalTrace, speed: SignalTrace, cfg: SysIdConfig):
    # A spurious extra mode can land on the negative real axis (an area with
    # first-order dynamics fitted at order 2); drop to the next lower order.
    order = cfg.order
    while True:
        try:
            model = identify(power, speed, order, cfg.horizon_rows, cfg.projection)
            break
        except NoContinuousEquivalent:
            if order == 1:
                raise
            order -= 1
    g = step_response(model, cfg.t_fit, cfg.step_dt or power.dt)
    fit = fit_polynomial(g, cfg.n_poly, cfg.t_fit)
    return model, fit


def estimate(dataset: AreaDataset, cfg: SysIdConfig | None = None) -> InertiaEstimate:
    cfg = cfg or SysIdConfig()
    results = {}
    diagnostics = {"config": cfg.__dict__.copy(), "areas": {}}
    for area, speed, power in zip(dataset.area_ids, dataset.speed_dev, dataset.power_dev):
        try:
            model, fit = estimate_area(power, speed, cfg)
        except (ValueError, np.linalg.LinAlgError) as exc:
            results[area] = AreaResult(None, failure=str(exc))
            continue
        c1 = fit.slope
        diagnostics["areas"][area] = {
            "c1": c1,
            "fit_pct": model.fit_pct,
            "singular_values": model.singular_values[:6].tolist(),
            "poles": [complex(p) for p in model.continuous_poles],
            "unstable": model.unstable,
            "rank_limited": model.diagnostics["rank_limited"],
            "order_used": model.order,
            "poly_residual_rms": fit.residual_rms,
        }
        if not c1 < 0:
            results[area] = AreaResult(None, failure=f"non-physical slope (c1={c1:.3g})")
        else:
            results[area] = AreaResult(-1.0 / (2.0 * c1))
    return InertiaEstimate.build(Method.SYSID, results, diagnostics)
