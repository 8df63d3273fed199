"""Lowest-mode transient analysis and Levenberg-Marquardt fitting of probe histories."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
import logging
import math

import numpy as np

from .history import ProbeHistory, fmt

log = logging.getLogger(__name__)

PARAM_NAMES = ("u0_amp", "decay_s", "freq_w", "phase", "offset_s0")


class FitNoConvergence(RuntimeError):
    def __init__(self, msg, fit=None):
        super().__init__(msg)
        self.fit = fit


class DegenerateHistory(ValueError):
    pass


# ----------------------------------------------------------------------------
# modal model

@dataclass(frozen=True)
class ModalModel:
    Re: float
    Rm: float
    Ha: float
    matrix_A: np.ndarray
    decay_s: float
    freq_w: float
    oscillatory: bool
    real_eigenvalues: tuple = ()


def modal_matrix(Re: float, Rm: float, Ha: float) -> np.ndarray:
    p = math.pi
    return np.array([
        [p ** 2 / (2 * Re), -(p / 2) * Ha / Re],
        [(p / 2) * Ha / Rm, p ** 2 / (2 * Rm)],
    ])


def modal_eigenvalues(Re: float, Rm: float, Ha: float):
    """(s, w, True) if the lowest mode oscillates, else (lam1, lam2, False)."""
    if Re <= 0 or Rm <= 0 or Ha < 0:
        raise ValueError("Re, Rm must be positive and Ha non-negative")
    s = (math.pi ** 2 / 4) * (1 / Re + 1 / Rm)
    rad = 1.0 - (math.pi ** 2 / (4 * Ha ** 2)) * (Rm - Re) ** 2 / (Rm * Re) if Ha > 0 else -1.0
    if Ha > 0 and rad > 0:
        return s, (math.pi / 2) * Ha / math.sqrt(Re * Rm) * math.sqrt(rad), True
    # real pair s +- sqrt(disc)
    disc = (math.pi ** 4 / 16) * (1 / Re - 1 / Rm) ** 2 - math.pi ** 2 * Ha ** 2 / (4 * Re * Rm)
    r = math.sqrt(max(disc, 0.0))
    return s - r, s + r, False


def modal_model(Re: float, Rm: float, Ha: float) -> ModalModel:
    a, b, osc = modal_eigenvalues(Re, Rm, Ha)
    A = modal_matrix(Re, Rm, Ha)
    if osc:
        return ModalModel(Re, Rm, Ha, A, a, b, True)
    return ModalModel(Re, Rm, Ha, A, 0.5 * (a + b), 0.0, False, (a, b))


# ----------------------------------------------------------------------------
# response model

@dataclass
class TransientFit:
    u0_amp: float
    decay_s: float
    freq_w: float
    phase: float
    offset_s0: float
    residual_norm: float = float("nan")
    converged: bool = False
    iterations: int = 0
    residual_trace: list = field(default_factory=list, repr=False)

    @property
    def params(self) -> np.ndarray:
        return np.array([self.u0_amp, self.decay_s, self.freq_w, self.phase, self.offset_s0])

    @classmethod
    def from_params(cls, p, **kw) -> "TransientFit":
        return cls(*[float(v) for v in p], **kw)

    def canonical(self) -> "TransientFit":
        """u0_amp > 0, freq_w >= 0, phase in [0, 2 pi)."""
        a, w, ph = self.u0_amp, self.freq_w, self.phase
        if w < 0:
            w, ph = -w, math.pi - ph
        if a < 0:
            a, ph = -a, ph + math.pi
        ph = float(np.mod(ph, 2 * math.pi))
        if ph >= 2 * math.pi:
            ph = 0.0
        return replace(self, u0_amp=a, freq_w=w, phase=ph)


def asymptotic_response(t, params) -> np.ndarray:
    """u(t) = u0 exp(-s t) sin(w t + phi) + s0."""
    a, s, w, ph, s0 = params.params if isinstance(params, TransientFit) else params
    t = np.asarray(t, dtype=float)
    return a * np.exp(-s * t) * np.sin(w * t + ph) + s0


def response_jacobian(t, p) -> np.ndarray:
    a, s, w, ph, _ = p
    e = np.exp(-s * t)
    sn = np.sin(w * t + ph)
    cs = np.cos(w * t + ph)
    return np.stack([e * sn, -t * a * e * sn, t * a * e * cs, a * e * cs, np.ones_like(t)], axis=1)


# ----------------------------------------------------------------------------
# Levenberg-Marquardt

@dataclass
class LmResult:
    x: np.ndarray
    cost: float
    iterations: int
    converged: bool
    costs: list


def levenberg_marquardt(residual, jacobian, x0, lam0: float = 1e-3, max_iter: int = 500,
                        step_tol: float = 1e-10, grad_tol: float = 1e-12) -> LmResult:
    """Minimise 0.5 |r(x)|^2 with Marquardt-scaled damping.

    ``costs`` holds the cost after every accepted step, so it never increases.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = residual(x)
    cost = 0.5 * float(r @ r)
    lam = lam0
    costs = [cost]
    for it in range(1, max_iter + 1):
        J = jacobian(x)
        g = J.T @ r
        if np.abs(g).max() <= grad_tol:
            return LmResult(x, cost, it - 1, True, costs)
        JtJ = J.T @ J
        d = np.diag(JtJ).copy()
        d[d == 0] = 1.0
        while True:
            try:
                step = np.linalg.solve(JtJ + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                if lam > 1e16:
                    return LmResult(x, cost, it, False, costs)
                continue
            xn = x + step
            with np.errstate(over="ignore", invalid="ignore"):
                rn = residual(xn)
                cn = 0.5 * float(rn @ rn)
            if np.isfinite(cn) and cn <= cost:
                lam = max(lam / 10, 1e-15)
                break
            lam *= 10
            if lam > 1e16:
                # no descent direction left at machine precision
                return LmResult(x, cost, it, True, costs)
        small = np.linalg.norm(step) <= step_tol * (np.linalg.norm(x) + step_tol)
        x, r, cost = xn, rn, cn
        costs.append(cost)
        if small:
            return LmResult(x, cost, it, True, costs)
    return LmResult(x, cost, max_iter, False, costs)


def _history_arrays(history, t_start):
    if isinstance(history, ProbeHistory):
        t, u = history.times, history.u_center
    else:
        t, u = (np.asarray(a, dtype=float) for a in history)
    m = t >= t_start
    return t[m], u[m]


def default_window_start(history) -> float:
    Ha = history.metadata.get("Ha") if isinstance(history, ProbeHistory) else None
    return 1.0 / Ha if Ha else 0.0


def initial_guess(t, u, Re=1.0, Rm=1.0, Ha=None) -> TransientFit:
    s0 = float(u[-1])
    dev = np.abs(u - s0)
    amp = float(dev.max()) if len(dev) else 1.0
    if Ha:
        s, w, osc = modal_eigenvalues(Re, Rm, Ha)
        if not osc:
            s, w = 0.5 * (s + w), 0.0
    else:
        s, w = 1.0, 2 * math.pi / max(t[-1] - t[0], 1e-12)
    return TransientFit(amp, s, w, 0.0, s0)


def lm_fit(history, initial: TransientFit | None = None, t_start: float | None = None,
           phase_starts: int = 8, max_iter: int = 500, raise_on_failure: bool = True) -> TransientFit:
    """Five-parameter fit of u0 exp(-s t) sin(w t + phi) + s0 to a centre-velocity history."""
    if t_start is None:
        t_start = default_window_start(history)
    t, u = _history_arrays(history, t_start)
    if len(t) < 5:
        raise DegenerateHistory(f"{len(t)} samples in the fit window; need at least 5")
    meta = history.metadata if isinstance(history, ProbeHistory) else {}
    if len(t) < 50:
        log.warning("fit window holds only %d samples", len(t))
    if initial is None:
        initial = initial_guess(t, u, meta.get("Re", 1.0), meta.get("Rm", 1.0), meta.get("Ha"))
        starts = [replace(initial, phase=2 * math.pi * k / phase_starts) for k in range(phase_starts)]
    else:
        starts = [initial]

    def res(p):
        return asymptotic_response(t, p) - u

    def jac(p):
        return response_jacobian(t, p)

    best = None
    for st in starts:
        r = levenberg_marquardt(res, jac, st.params, max_iter=max_iter)
        if best is None or (r.converged, -r.cost) > (best.converged, -best.cost):
            best = r
    fit = TransientFit.from_params(
        best.x, residual_norm=math.sqrt(2 * best.cost), converged=best.converged,
        iterations=best.iterations, residual_trace=best.costs,
    ).canonical()
    if not fit.converged and raise_on_failure:
        raise FitNoConvergence(f"LM did not converge in {max_iter} iterations", fit)
    return fit


def constrained_fit(history, fixed_s: float, fixed_w: float, t_start: float | None = None,
                    fixed_s0: float | None = None) -> TransientFit:
    """Fit (u0, phi, s0) with s and w pinned.

    With s and w fixed the model is linear in (u0 cos phi, u0 sin phi, s0), so
    the least-squares problem is solved exactly in one step.
    """
    if t_start is None:
        t_start = default_window_start(history)
    t, u = _history_arrays(history, t_start)
    nfree = 2 if fixed_s0 is not None else 3
    if len(t) < nfree:
        raise DegenerateHistory(f"{len(t)} samples in the fit window; need at least {nfree}")
    e = np.exp(-fixed_s * t)
    cols = [e * np.sin(fixed_w * t), e * np.cos(fixed_w * t)]
    rhs = u.copy()
    if fixed_s0 is None:
        cols.append(np.ones_like(t))
    else:
        rhs = rhs - fixed_s0
    M = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    c, d = coef[0], coef[1]
    s0 = float(coef[2]) if fixed_s0 is None else float(fixed_s0)
    fit = TransientFit(float(math.hypot(c, d)), float(fixed_s), float(fixed_w),
                       float(math.atan2(d, c)), s0, converged=True, iterations=1)
    fit.residual_norm = float(np.linalg.norm(asymptotic_response(t, fit) - u))
    return fit.canonical()


# ----------------------------------------------------------------------------
# two-exponential model for the non-oscillatory regime

@dataclass
class TwoExpFit:
    a1: float
    lam1: float
    a2: float
    lam2: float
    offset_s0: float
    residual_norm: float = float("nan")
    converged: bool = False


def two_exponential(t, p):
    a1, l1, a2, l2, s0 = p
    return a1 * np.exp(-l1 * t) + a2 * np.exp(-l2 * t) + s0


def fit_two_exponential(history, lam_guess=(1.0, 10.0), t_start: float | None = None) -> TwoExpFit:
    if t_start is None:
        t_start = default_window_start(history)
    t, u = _history_arrays(history, t_start)
    if len(t) < 5:
        raise DegenerateHistory(f"{len(t)} samples in the fit window; need at least 5")
    # amplitudes referenced to the window start keep the problem well scaled
    t0 = t[0]
    tau = t - t0

    def res(p):
        return two_exponential(tau, p) - u

    def jac(p):
        a1, l1, a2, l2, _ = p
        e1, e2 = np.exp(-l1 * tau), np.exp(-l2 * tau)
        return np.stack([e1, -tau * a1 * e1, e2, -tau * a2 * e2, np.ones_like(tau)], axis=1)

    # amplitudes from the linear problem at the guessed rates; equal halves is a saddle
    l1, l2 = lam_guess
    M = np.stack([np.exp(-l1 * tau), np.exp(-l2 * tau), np.ones_like(tau)], axis=1)
    (a1, a2, s0), *_ = np.linalg.lstsq(M, u, rcond=None)
    r = levenberg_marquardt(res, jac, [a1, l1, a2, l2, s0])
    a1, l1, a2, l2, s0 = r.x
    if l1 > l2:
        a1, l1, a2, l2 = a2, l2, a1, l1
    return TwoExpFit(a1 * math.exp(l1 * t0), l1, a2 * math.exp(l2 * t0), l2, s0,
                     math.sqrt(2 * r.cost), r.converged)


def fit_auto(history, Re=1.0, Rm=1.0, Ha=None):
    """Damped-sine fit when the modal radicand is positive, two exponentials otherwise."""
    Ha = Ha if Ha is not None else history.metadata.get("Ha")
    a, b, osc = modal_eigenvalues(Re, Rm, Ha)
    if osc:
        return lm_fit(history)
    return fit_two_exponential(history, (a, b))


# ----------------------------------------------------------------------------
# reporting

def has_zero_crossings(history, t_start: float | None = None, rel: float = 1e-6) -> bool:
    """Does u - u_final change sign in the tail of the history?"""
    if t_start is None:
        t_start = default_window_start(history)
    t, u = _history_arrays(history, t_start)
    dev = u - u[-1]
    scale = np.abs(dev).max()
    if scale == 0:
        return False
    sig = dev[np.abs(dev) > rel * scale]
    return bool(np.any(np.sign(sig[1:]) != np.sign(sig[:-1])))


COMPARISON_COLUMNS = ("Ha", "s_analytic", "s_fit", "w_analytic", "w_fit", "s0_fit",
                      "s0_model", "residual_norm")


def comparison_rows(fits: dict, Re: float = 1.0, Rm: float = 1.0) -> list[dict]:
    rows = []
    for Ha in sorted(fits):
        f = fits[Ha]
        s, w, osc = modal_eigenvalues(Re, Rm, Ha)
        rows.append({
            "Ha": Ha, "s_analytic": s if osc else float("nan"), "s_fit": f.decay_s,
            "w_analytic": w if osc else float("nan"), "w_fit": f.freq_w,
            "s0_fit": f.offset_s0, "s0_model": 1.0 / Ha ** 2, "residual_norm": f.residual_norm,
        })
    return rows


def write_comparison_csv(fits: dict, path, Re: float = 1.0, Rm: float = 1.0) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COMPARISON_COLUMNS)
        for row in comparison_rows(fits, Re, Rm):
            w.writerow([fmt(float(row[c])) for c in COMPARISON_COLUMNS])
