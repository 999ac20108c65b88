"""Gradient attacks on the two-layer network.

All attacks perturb along the input gradient. The single-step attack takes
one step of size c2/||grad||^2 against the sign of f. The minimal-eta search
finds the smallest step that flips the sign by scanning a geometric grid and
refining each bracket by bisection (f is piecewise linear along the ray, so
no monotonicity of the flip predicate is assumed). The PGD attack ascends
the logistic loss under an l2 ball constraint, plain gradient steps, no
sign trick, matching the inner loop of the adversarial trainer.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DegenerateGradientError
from .network import forward_batch, input_gradient_batch, _check_batch
from .numerics import _PROJECT_SHRINK

# |f| at or below this counts as "on the boundary": no sign, no flip credit.
TIE_TOL = 1e-12

# The search grid spans [GRID_MIN_FRAC * eta_max, eta_max] geometrically.
GRID_MIN_FRAC = 1e-6


@dataclass
class AttackOutcome:
    """Result of one attack on one example.

    eta is the signed step along the input gradient; delta_norm equals
    |eta| * grad_norm for the gradient-step attacks and the actual ||delta||
    for PGD (eta then holds the equivalent single-step size). boundary marks
    |f| <= TIE_TOL at the clean input, degenerate a zero gradient; neither
    ever counts as a flip.
    """

    eta: float
    delta_norm: float
    grad_norm: float
    f_before: float
    f_after: float
    flipped: bool
    boundary: bool = False
    degenerate: bool = False


def _is_flip(f_before, f_after):
    return (abs(f_before) > TIE_TOL and abs(f_after) > TIE_TOL
            and (f_before > 0.0) != (f_after > 0.0))


def single_step_attack(p, x, c2):
    """One gradient step of size c2/||grad||^2 against the sign of f."""
    if c2 <= 0:
        raise ValueError(f"c2 must be > 0, got {c2}")
    x = np.asarray(x, dtype=np.float64)
    f0 = forward_batch(p, x[None, :])[0]
    g = input_gradient_batch(p, x[None, :])[0]
    gn = float(np.linalg.norm(g))
    if gn == 0.0:
        raise DegenerateGradientError("input gradient is zero")
    sign = -1.0 if f0 > 0.0 else 1.0
    eta = sign * c2 / gn ** 2
    f1 = forward_batch(p, (x + eta * g)[None, :])[0]
    boundary = abs(f0) <= TIE_TOL
    return AttackOutcome(eta=float(eta), delta_norm=abs(eta) * gn, grad_norm=gn,
                         f_before=float(f0), f_after=float(f1),
                         flipped=_is_flip(f0, f1), boundary=boundary)


def minimal_eta_search(p, x, eta_max=10.0, tol=1e-6, grid_points=64,
                       bisect_steps=40):
    """Smallest |eta| whose gradient step flips the sign of f.

    Scans a geometric grid of grid_points candidate magnitudes in
    (0, eta_max], takes the leftmost cell where the flip predicate turns on
    and narrows it with bisect_steps bisection rounds (far below tol).
    Returns a flipped=False outcome evaluated at eta_max when no grid point
    flips, and a boundary outcome with eta 0 when f(x) is already a tie.
    """
    x = np.asarray(x, dtype=np.float64)
    out = min_eta_attack_batch(p, x[None, :], eta_max=eta_max, tol=tol,
                               grid_points=grid_points,
                               bisect_steps=bisect_steps)[0]
    if out.degenerate:
        raise DegenerateGradientError("input gradient is zero")
    return out


def min_eta_attack_batch(p, x, eta_max=10.0, tol=1e-6, grid_points=64,
                         bisect_steps=40):
    """minimal_eta_search over a (n, d) batch; one outcome per row.

    eta_max may be a scalar or a per-example array (used for budget-capped
    attacks). Degenerate and boundary rows are recorded, not raised.
    """
    if grid_points < 2 or bisect_steps < 0:
        raise ValueError("need grid_points >= 2 and bisect_steps >= 0")
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    caps = np.broadcast_to(np.asarray(eta_max, dtype=np.float64), (n,))
    if np.any(caps <= 0):
        raise ValueError("eta_max must be > 0")
    f0 = forward_batch(p, x)
    g = input_gradient_batch(p, x)
    gn = np.linalg.norm(g, axis=1)
    sign = np.where(f0 > 0.0, -1.0, 1.0)

    degenerate = gn == 0.0
    boundary = np.abs(f0) <= TIE_TOL
    live = ~(degenerate | boundary)

    fracs = GRID_MIN_FRAC ** (np.arange(grid_points - 1, -1, -1)
                              / (grid_points - 1))
    # boundary and degenerate rows are never attacked; no-flip rows report
    # eta_max with whatever f they reached there
    eta_final = np.where(degenerate | boundary, 0.0, caps * sign)
    f_final = f0.copy()
    flipped = np.zeros(n, dtype=bool)

    idx = np.flatnonzero(live)
    if idx.size:
        xs, gs, f0s = x[idx], g[idx], f0[idx]
        step = (sign[idx] * caps[idx])[:, None] * gs       # delta at eta_max
        flips = np.zeros((idx.size, grid_points), dtype=bool)
        fvals = np.zeros((idx.size, grid_points))
        for j, frac in enumerate(fracs):
            fj = forward_batch(p, xs + frac * step)
            fvals[:, j] = fj
            flips[:, j] = _flip_rows(f0s, fj)
        has_flip = flips.any(axis=1)
        first = np.argmax(flips, axis=1)

        rows = np.flatnonzero(has_flip)
        if rows.size:
            j1 = first[rows]
            hi = caps[idx[rows]] * fracs[j1]
            lo = np.where(j1 > 0, caps[idx[rows]] * fracs[np.maximum(j1 - 1, 0)], 0.0)
            f_hi = fvals[rows, j1]
            xr, gr = xs[rows], gs[rows]
            sr, f0r = sign[idx[rows]], f0s[rows]
            for _ in range(bisect_steps):
                mid = 0.5 * (lo + hi)
                fm = forward_batch(p, xr + (sr * mid)[:, None] * gr)
                hit = _flip_rows(f0r, fm)
                hi = np.where(hit, mid, hi)
                f_hi = np.where(hit, fm, f_hi)
                lo = np.where(hit, lo, mid)
            sub = idx[rows]
            eta_final[sub] = sr * hi
            f_final[sub] = f_hi
            flipped[sub] = True
        miss = idx[np.flatnonzero(~has_flip)]
        f_final[miss] = fvals[~has_flip, grid_points - 1]

    return [AttackOutcome(eta=float(eta_final[i]),
                          delta_norm=abs(float(eta_final[i])) * float(gn[i]),
                          grad_norm=float(gn[i]),
                          f_before=float(f0[i]), f_after=float(f_final[i]),
                          flipped=bool(flipped[i]),
                          boundary=bool(boundary[i]),
                          degenerate=bool(degenerate[i]))
            for i in range(n)]


def _flip_rows(f_before, f_after):
    return ((np.abs(f_before) > TIE_TOL) & (np.abs(f_after) > TIE_TOL)
            & ((f_before > 0.0) != (f_after > 0.0)))


def pgd_attack_batch(p, x, y, budget, steps=100, alpha=None):
    """Projected gradient ascent on the logistic loss inside l2 balls.

    Starts at the clean inputs and takes `steps` plain-gradient steps of
    size alpha (default 2.5*budget/100, the adversarial trainer's inner
    configuration), projecting each row back onto B(x_i, budget) after
    every step. Returns (x_adv, f_adv, success) with success meaning
    y * f(x_adv) <= 0.
    """
    x, y = _check_batch(p, x, y)
    if budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if alpha is None:
        alpha = 2.5 * budget / 100.0
    xt = x.copy()
    for _ in range(steps):
        f = forward_batch(p, xt)
        g = input_gradient_batch(p, xt)
        xt += (alpha * (-y) * expit(-y * f))[:, None] * g
        diff = xt - x
        dist = np.linalg.norm(diff, axis=1)
        over = dist > budget
        if np.any(over):
            scale = (budget / dist[over]) * _PROJECT_SHRINK
            xt[over] = x[over] + diff[over] * scale[:, None]
    f_adv = forward_batch(p, xt)
    return xt, f_adv, (y * f_adv <= 0.0)


def pgd_attack(p, x, y, budget, steps=100, alpha=None):
    """Single-example PGD; see pgd_attack_batch."""
    x = np.asarray(x, dtype=np.float64)
    f0 = forward_batch(p, x[None, :])[0]
    gn = float(np.linalg.norm(input_gradient_batch(p, x[None, :])[0]))
    if gn == 0.0:
        raise DegenerateGradientError("input gradient is zero")
    xt, f_adv, success = pgd_attack_batch(p, x[None, :], np.asarray([y]),
                                          budget, steps=steps, alpha=alpha)
    delta_norm = float(np.linalg.norm(xt[0] - x))
    sign = -1.0 if f0 > 0.0 else 1.0
    return AttackOutcome(eta=sign * delta_norm / gn, delta_norm=delta_norm,
                         grad_norm=gn, f_before=float(f0),
                         f_after=float(f_adv[0]), flipped=bool(success[0]),
                         boundary=abs(f0) <= TIE_TOL)


def robust_accuracy(p, x, y, budget, steps=100, alpha=None):
    """Fraction of examples PGD fails to push across the boundary."""
    _, _, success = pgd_attack_batch(p, x, y, budget, steps=steps, alpha=alpha)
    return float(np.mean(~success))
