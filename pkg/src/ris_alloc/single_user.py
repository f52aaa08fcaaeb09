"""Joint beamformer / surface-phase design for a single-user, single-BS link.

All three strategies maximize |w^H (D phi + h_d)|^2 over the unit-norm
beamformer w and the unit-modulus-rho reflection vector phi.  The two
closed-form routes optimize an upper and a lower bound of the objective; the
reported objective is always the true value at the returned point.
"""

from dataclasses import dataclass

import numpy as np

from .channel import RisConfig, composite_channel


@dataclass
class SingleUserSolution:
    beamformer: np.ndarray      # unit norm, length N_B
    config: RisConfig
    objective: float            # |w^H (D phi + h_d)|^2 at the returned point
    method: str                 # "UB" | "LB" | "AM"
    bound: float | None = None  # UB method: certified upper bound on any strategy
    trace: np.ndarray | None = None   # AM method: objective per iteration


def snr(w: np.ndarray, cascade: np.ndarray, direct: np.ndarray, cfg: RisConfig,
        power: float = 1.0, noise_var: float = 1.0) -> float:
    """Downlink SNR (power/noise_var) |w^H (D phi + h_d)|^2 for a unit-norm w."""
    comp = composite_channel(cascade, direct, cfg)
    return float(power / noise_var * np.abs(np.vdot(w, comp)) ** 2)


def _objective(w, cascade, direct, cfg) -> float:
    return snr(w, cascade, direct, cfg, 1.0, 1.0)


def align_phases(g: np.ndarray, t: complex, rho: float) -> RisConfig:
    """Phases that co-phase every term of g^H phi with t.

    With phi_n = rho exp(j angle(g_n) + j angle(t)) each summand of g^H phi
    has phase angle(t), so |g^H phi + t| = rho sum|g_n| + |t|.
    """
    g = np.atleast_1d(np.asarray(g))
    phases = np.angle(g) + np.angle(t)
    return RisConfig(rho, np.angle(np.exp(1j * phases)))


def optimize_ub(cascade: np.ndarray, direct: np.ndarray, rho: float) -> SingleUserSolution:
    """Closed form through the upper bound built on the SVD of the cascade.

    Per singular triplet (lambda_i, u_i, v_i) the best phases co-phase
    lambda_i v_i^H phi with alpha_i = u_i^H h_d; the triplet with the largest
    aligned value wins (ties: smallest index).  ``bound`` is N_B times that
    value and upper-bounds the objective of every feasible (w, phi).
    """
    cascade = np.asarray(cascade)
    direct = np.asarray(direct)
    n_b, n_r = cascade.shape

    if n_r == 0 or not np.any(cascade):
        norm = np.linalg.norm(direct)
        if norm == 0:
            raise ValueError("both cascade and direct channels are zero")
        w = direct / norm
        cfg = RisConfig(rho, np.zeros(n_r))
        obj = _objective(w, cascade, direct, cfg)
        return SingleUserSolution(w, cfg, obj, "UB", bound=n_b * obj)

    u, sing, vh = np.linalg.svd(cascade, full_matrices=False)
    alpha = u.conj().T @ direct
    best_val, best_idx, best_cfg = -1.0, 0, None
    for i in range(sing.shape[0]):
        v_i = vh[i].conj()
        cfg_i = align_phases(v_i, alpha[i], rho)
        val = np.abs(sing[i] * (v_i.conj() @ cfg_i.vector()) + alpha[i]) ** 2
        if val > best_val + 0.0:
            best_val, best_idx, best_cfg = val, i, cfg_i
    w = u[:, best_idx]
    obj = _objective(w, cascade, direct, best_cfg)
    return SingleUserSolution(w, best_cfg, obj, "UB", bound=float(n_b * best_val))


def optimize_lb(cascade: np.ndarray, direct: np.ndarray, rho: float,
                rng: np.random.Generator | None = None) -> SingleUserSolution:
    """Closed form through the lower bound: beamform along the column sum
    plus direct channel, then co-phase the surface for that beamformer."""
    cascade = np.asarray(cascade)
    direct = np.asarray(direct)
    n_b, n_r = cascade.shape

    combined = cascade.sum(axis=1) + direct
    norm = np.linalg.norm(combined)
    if norm == 0:
        rng = np.random.default_rng(0) if rng is None else rng
        w = rng.standard_normal(n_b) + 1j * rng.standard_normal(n_b)
        w /= np.linalg.norm(w)
    else:
        w = combined / norm
    cfg = align_phases(cascade.conj().T @ w, np.vdot(w, direct), rho)
    return SingleUserSolution(w, cfg, _objective(w, cascade, direct, cfg), "LB")


def optimize_am(cascade: np.ndarray, direct: np.ndarray, rho: float,
                init: RisConfig | None = None, tol: float = 1e-8,
                max_iter: int = 200) -> SingleUserSolution:
    """Alternating maximization: matched beamformer for the current phases,
    then exact phase alignment for the current beamformer.

    Both half-steps are exact maximizers, so the objective trace is
    non-decreasing; stops when the relative improvement drops below tol.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    cascade = np.asarray(cascade)
    direct = np.asarray(direct)
    n_r = cascade.shape[1]
    cfg = RisConfig(rho, np.zeros(n_r)) if init is None else init.canonical()

    trace = []
    prev = -np.inf
    w = None
    for _ in range(max_iter):
        comp = composite_channel(cascade, direct, cfg)
        norm = np.linalg.norm(comp)
        if norm == 0:
            raise ValueError("composite channel is zero; nothing to beamform on")
        w = comp / norm
        cfg = align_phases(cascade.conj().T @ w, np.vdot(w, direct), rho)
        obj = _objective(w, cascade, direct, cfg)
        trace.append(obj)
        if prev > 0 and (obj - prev) < tol * prev:
            break
        prev = obj
    return SingleUserSolution(w, cfg, trace[-1], "AM", trace=np.asarray(trace))
