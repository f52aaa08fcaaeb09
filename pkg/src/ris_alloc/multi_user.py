"""Two-cell multi-user allocation of surface phases and transmit powers.

Beamformers are channel matched; the figure of merit is the geometric mean of
the per-user downlink SINRs, optimized by alternating gradient ascent on the
surface phases with a sequential-convex power step.  Users may be served by
one BS or jointly by both (association matrix I with rows = BSs).
"""

from dataclasses import dataclass

import numpy as np

from .channel import RisConfig, Scenario

LOG2E = float(np.log2(np.e))

# smallest power used inside sqrt-ratio derivatives to avoid the singular corner
POWER_DERIVATIVE_FLOOR = 1e-15


@dataclass
class PowerAllocation:
    """Downlink powers eta[i, k] in watts with per-BS budgets."""

    powers: np.ndarray   # (2, K)
    budgets: np.ndarray  # (2,)

    def __post_init__(self):
        self.powers = np.asarray(self.powers, dtype=float)
        self.budgets = np.asarray(self.budgets, dtype=float)
        if np.any(self.powers < -1e-12):
            raise ValueError("powers must be non-negative")
        if np.any(self.powers.sum(axis=1) > self.budgets + 1e-9):
            raise ValueError("per-BS power budget exceeded")


@dataclass
class CouplingCoefficients:
    """F[k, l, i] = I[i,l] eta[i,l] (composite_{i,k})^H composite_{i,l}."""

    f: np.ndarray   # (K, K, 2)


@dataclass
class AllocationResult:
    beamformers: np.ndarray    # (2, K, N_B)
    powers: PowerAllocation
    config: RisConfig
    sinr: np.ndarray           # (K,)
    objective: float           # geometric mean of the SINRs
    trace: np.ndarray          # sum log2 SINR per outer iteration


def _composites(cascade: np.ndarray, direct: np.ndarray, cfg: RisConfig) -> np.ndarray:
    """Composite channels for every (BS, MS) pair, shape (2, K, N_B)."""
    return cascade @ cfg.vector() + direct


def cm_beamformer(cascade: np.ndarray, direct: np.ndarray, cfg: RisConfig) -> np.ndarray:
    """Channel-matched unit-norm beamformer for one (BS, MS) pair."""
    comp = cascade @ cfg.vector() + direct
    norm = np.linalg.norm(comp)
    if norm == 0:
        raise ValueError("zero composite channel, beamformer undefined")
    return comp / norm


def cm_beamformers(cascade: np.ndarray, direct: np.ndarray, cfg: RisConfig) -> np.ndarray:
    """Channel-matched beamformers for all pairs, shape (2, K, N_B)."""
    comp = _composites(cascade, direct, cfg)
    norms = np.linalg.norm(comp, axis=2)
    if np.any(norms == 0):
        raise ValueError("zero composite channel, beamformer undefined")
    return comp / norms[:, :, None]


def evaluate_sinr(cascade: np.ndarray, direct: np.ndarray, beamformers: np.ndarray,
                  powers: np.ndarray, cfg: RisConfig, assoc: np.ndarray,
                  noise_var: float) -> np.ndarray:
    """Per-user downlink SINR; the serving BSs add coherently in the numerator."""
    comp = _composites(cascade, direct, cfg)
    k = comp.shape[1]
    # gains[i, k, l] = composite_{i,k}^H w_{i,l}
    gains = np.einsum("ikn,iln->ikl", comp.conj(), beamformers)
    amp = np.sqrt(np.maximum(powers, 0.0)) * assoc          # (2, K)
    # signal[k, l]: amplitude at user k of the stream intended for user l
    signal = np.einsum("il,ikl->kl", amp, gains)
    power_rx = np.abs(signal) ** 2
    useful = np.diag(power_rx)
    interference = power_rx.sum(axis=1) - useful
    return useful / (interference + noise_var)


def geometric_mean_sinr(sinr: np.ndarray) -> float:
    return float(np.exp(np.mean(np.log(sinr))))


def coupling_f(cascade: np.ndarray, direct: np.ndarray, powers: np.ndarray,
               cfg: RisConfig, assoc: np.ndarray) -> CouplingCoefficients:
    """Coupling coefficients between every pair of users at each BS."""
    comp = _composites(cascade, direct, cfg)
    inner = np.einsum("ikn,iln->kli", comp.conj(), comp)      # (K, K, 2)
    weights = (assoc * powers).T[None, :, :]                  # (1, K, 2) over l
    return CouplingCoefficients(f=inner * weights)


def _diag_inverses(f_diag: np.ndarray):
    """1/F_ll per (user, BS) and 1/sqrt(F_ll^1 F_ll^2) per user, zero where unserved."""
    served = f_diag > 0
    inv = np.where(served, 1.0 / np.where(served, f_diag, 1.0), 0.0)
    both = served[:, 0] & served[:, 1]
    prod = np.where(both, f_diag[:, 0] * f_diag[:, 1], 1.0)
    root_inv = np.where(both, 1.0 / np.sqrt(prod), 0.0)
    return inv, root_inv


def _num_den(f: np.ndarray, noise_var: float):
    """Useful and interference-plus-noise terms of every user's SINR.

    Terms whose serving power I[i,l] eta[i,l] vanishes are dropped: they
    contribute nothing and their normalizations F[l,l,i] are zero.
    """
    f_diag = np.maximum(np.real(np.einsum("kki->ki", f)), 0.0)   # (K, 2)
    num = f_diag[:, 0] + f_diag[:, 1] + 2.0 * np.sqrt(f_diag[:, 0] * f_diag[:, 1])
    inv, root_inv = _diag_inverses(f_diag)
    total = np.einsum("kli,li->kl", np.abs(f) ** 2, inv)
    total += 2.0 * np.real(f[:, :, 0] * np.conj(f[:, :, 1])) * root_inv[None, :]
    np.fill_diagonal(total, 0.0)
    return num, noise_var + total.sum(axis=1)


def objective_g(cfg: RisConfig, cascade: np.ndarray, direct: np.ndarray,
                powers: np.ndarray, assoc: np.ndarray, noise_var: float) -> float:
    """Sum over users of log2 SINR under channel-matched beamforming."""
    f = coupling_f(cascade, direct, powers, cfg, assoc).f
    num, den = _num_den(f, noise_var)
    if np.any(num <= 0):
        return -np.inf
    return float(np.sum(np.log2(num / den)))


def _coupling_derivatives(cfg, cascade, direct, powers, assoc):
    """F[k, l, i] and dF[k, l, i]/dphase_n, shapes (K,K,2) and (K,K,2,N_R)."""
    rho = cfg.rho
    unit = np.exp(1j * cfg.phases)                       # modulus-1 phase vector

    comp = cascade @ (rho * unit) + direct               # (2, K, N_B)
    proj = cascade @ unit                                # (2, K, N_B), D e
    weights = (assoc * powers).T[None, :, :]             # over the column user l

    f = np.einsum("ikm,ilm->kli", comp.conj(), comp) * weights

    # quad[i, k, l, n] = (D_k^H D_l e)_n and its k<->l swapped conjugate
    quad_right = np.einsum("ikmn,ilm->ikln", cascade.conj(), proj)
    quad_left = np.conj(quad_right.transpose(0, 2, 1, 3))
    lin_neg = np.einsum("ikmn,ilm->ikln", cascade.conj(), direct)   # D_k^H h_l
    lin_pos = np.conj(lin_neg.transpose(0, 2, 1, 3))                # D_l^T h_k^*
    inner = (rho * (unit * quad_left - unit.conj() * quad_right)
             + unit * lin_pos - unit.conj() * lin_neg)
    df = rho * 1j * inner.transpose(1, 2, 0, 3) * ((assoc * powers).T)[None, :, :, None]
    return f, df


def grad_g(cfg: RisConfig, cascade: np.ndarray, direct: np.ndarray,
           powers: np.ndarray, assoc: np.ndarray, noise_var: float) -> np.ndarray:
    """Analytic gradient of :func:`objective_g` with respect to the phases."""
    f, df = _coupling_derivatives(cfg, cascade, direct, powers, assoc)
    num, den = _num_den(f, noise_var)
    f_diag = np.maximum(np.real(np.einsum("kki->ki", f)), 0.0)   # (K, 2)
    df_diag = np.real(np.einsum("kkin->kin", df))                # (K, 2, N_R)
    inv, root_inv = _diag_inverses(f_diag)

    # numerator derivative, sqrt coupling only for jointly served users
    d_num = df_diag[:, 0] + df_diag[:, 1] \
        + (df_diag[:, 0] * f_diag[:, 1, None]
           + df_diag[:, 1] * f_diag[:, 0, None]) * root_inv[:, None]

    # quotient rule on |F_kl|^2 / F_ll plus the cross-BS coupling term
    d_abs2 = 2.0 * np.real(df * np.conj(f)[..., None])           # (K, K, 2, N_R)
    d_den = np.einsum("klin,li->kln", d_abs2, inv)
    d_den -= np.einsum("lin,kli,li->kln", df_diag, np.abs(f) ** 2, inv ** 2)
    cross = np.real(f[:, :, 0] * np.conj(f[:, :, 1]))            # (K, K)
    d_cross = np.real(df[:, :, 0] * np.conj(f[:, :, 1])[..., None]
                      + np.conj(df[:, :, 1]) * f[:, :, 0][..., None])
    d_root = 0.5 * (df_diag[:, 0] * f_diag[:, 1, None]
                    + df_diag[:, 1] * f_diag[:, 0, None]) * root_inv[:, None]
    d_den += 2.0 * (d_cross * root_inv[None, :, None]
                    - d_root[None, :, :] * cross[:, :, None]
                    * (root_inv ** 2)[None, :, None])
    k_idx = np.arange(f.shape[0])
    d_den[k_idx, k_idx, :] = 0.0
    d_den = d_den.sum(axis=1)                                    # (K, N_R)

    return LOG2E * (d_num / num[:, None] - d_den / den[:, None]).sum(axis=0)


def optimize_phases(cfg_init: RisConfig, cascade: np.ndarray, direct: np.ndarray,
                    powers: np.ndarray, assoc: np.ndarray, noise_var: float,
                    step_init: float = 1.0, step_shrink: float = 0.5,
                    max_backtracks: int = 30, tol: float = 1e-6,
                    max_iter: int = 100):
    """Gradient ascent on the phases with Armijo backtracking.

    Returns (config, trace); the trace of objective values is non-decreasing
    by construction since only improving steps are accepted.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    phases = np.array(cfg_init.phases, dtype=float)
    rho = cfg_init.rho
    current = objective_g(RisConfig(rho, phases), cascade, direct, powers,
                          assoc, noise_var)
    trace = [current]
    step = step_init
    for _ in range(max_iter):
        grad = grad_g(RisConfig(rho, phases), cascade, direct, powers, assoc, noise_var)
        grad_sq = float(grad @ grad)
        if grad_sq == 0.0:
            break
        accepted = False
        for _ in range(max_backtracks):
            candidate = phases + step * grad
            value = objective_g(RisConfig(rho, candidate), cascade, direct,
                                powers, assoc, noise_var)
            if value >= current + 1e-4 * step * grad_sq:
                phases, current = candidate, value
                accepted = True
                break
            step *= step_shrink
        if not accepted:
            break
        trace.append(current)
        # adaptive step: retry a slightly larger step next round, capped at init
        step = min(step / step_shrink, step_init)
        if trace[-1] - trace[-2] < tol:
            break
    return RisConfig(rho, phases).canonical(), np.asarray(trace)


# ---------------------------------------------------------------------------
# power allocation
# ---------------------------------------------------------------------------

def a_coefficients(cascade: np.ndarray, direct: np.ndarray, cfg: RisConfig) -> np.ndarray:
    """a[k, l, i]: inner product of composites k and l normalized by ||composite_l||."""
    comp = _composites(cascade, direct, cfg)
    inner = np.einsum("ikn,iln->kli", comp.conj(), comp)
    norms = np.linalg.norm(comp, axis=2).T[None, :, :]      # (1, K, 2)
    return inner / norms


def _rate_terms(powers: np.ndarray, a: np.ndarray, assoc: np.ndarray,
                noise_var: float):
    """Per-user useful power and interference-plus-noise from the a-coefficients."""
    served = assoc * np.maximum(powers, 0.0)                 # (2, K)
    a_diag = np.real(np.einsum("kki->ki", a))                # (K, 2), >= 0
    num = (served[0] * a_diag[:, 0] ** 2 + served[1] * a_diag[:, 1] ** 2
           + 2.0 * np.sqrt(served[0] * served[1]) * a_diag[:, 0] * a_diag[:, 1])
    total = (np.abs(a[:, :, 0]) ** 2 * served[0][None, :]
             + np.abs(a[:, :, 1]) ** 2 * served[1][None, :]
             + 2.0 * np.sqrt(served[0] * served[1])[None, :]
             * np.real(a[:, :, 0] * np.conj(a[:, :, 1])))
    np.fill_diagonal(total, 0.0)
    return num, noise_var + total.sum(axis=1)


def sum_rate(powers: np.ndarray, a: np.ndarray, assoc: np.ndarray,
             noise_var: float) -> float:
    """Sum over users of log2 SINR expressed through the a-coefficients."""
    num, den = _rate_terms(powers, a, assoc, noise_var)
    if np.any(num <= 0):
        return -np.inf
    return float(np.sum(np.log2(num / den)))


def _project_budget(x: np.ndarray, limit: float) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) <= limit}."""
    clipped = np.maximum(x, 0.0)
    if clipped.sum() <= limit:
        return clipped
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - limit
    j = np.arange(1, x.size + 1)
    rho_idx = np.nonzero(u - css / j > 0)[0][-1]
    tau = css[rho_idx] / (rho_idx + 1.0)
    return np.maximum(x - tau, 0.0)


def _project_powers(powers: np.ndarray, assoc: np.ndarray,
                    budgets: np.ndarray) -> np.ndarray:
    out = np.zeros_like(powers)
    for i in range(2):
        served = assoc[i] == 1
        if np.any(served):
            out[i, served] = _project_budget(powers[i, served], budgets[i])
    return out


def _interference_gradient(powers, a, assoc, noise_var):
    """Gradient of sum_k log2(den_k) with respect to the powers."""
    served = assoc * np.maximum(powers, 0.0)
    _, dens = _rate_terms(powers, a, assoc, noise_var)
    inv_den = 1.0 / dens                                     # (K,)
    cross = np.real(a[:, :, 0] * np.conj(a[:, :, 1]))        # (K, K)
    jt = (assoc[0] * assoc[1]).astype(float)
    floored = np.maximum(served, POWER_DERIVATIVE_FLOOR)
    ratio = jt[None, :] * np.sqrt(served[::-1] / floored)    # (2, K) over column user l

    grad = np.zeros_like(powers)
    for i in range(2):
        coef = np.abs(a[:, :, i]) ** 2 + ratio[i][None, :] * cross   # (K, K)
        np.fill_diagonal(coef, 0.0)
        grad[i] = LOG2E * assoc[i] * (inv_den @ coef)
    return grad


def _signal_gradient(powers, a, assoc):
    """Gradient of sum_k log2(num_k) with respect to the powers."""
    served = assoc * np.maximum(powers, 0.0)
    a_diag = np.real(np.einsum("kki->ki", a))
    num = (served[0] * a_diag[:, 0] ** 2 + served[1] * a_diag[:, 1] ** 2
           + 2.0 * np.sqrt(served[0] * served[1]) * a_diag[:, 0] * a_diag[:, 1])
    jt = (assoc[0] * assoc[1]).astype(float)
    floored = np.maximum(served, POWER_DERIVATIVE_FLOOR)
    ratio = jt[None, :] * np.sqrt(served[::-1] / floored)    # (2, K)
    safe_num = np.where(num > 0, num, 1.0)
    terms = a_diag.T ** 2 + ratio * (a_diag[:, 0] * a_diag[:, 1])[None, :]
    return np.where((num > 0)[None, :], LOG2E * assoc * terms / safe_num[None, :], 0.0)


def _maximize_surrogate(powers, a, assoc, budgets, lin_grad, noise_var,
                        tol=1e-7, max_iter=300):
    """Projected gradient ascent on sum_k log2(num_k) - <lin_grad, powers>."""
    a_diag = np.real(np.einsum("kki->ki", a))
    active = assoc.sum(axis=0) > 0

    def value(p):
        served = assoc * np.maximum(p, 0.0)
        num = (served[0] * a_diag[:, 0] ** 2 + served[1] * a_diag[:, 1] ** 2
               + 2.0 * np.sqrt(served[0] * served[1]) * a_diag[:, 0] * a_diag[:, 1])
        if np.any(num[active] <= 0):
            return -np.inf
        return float(np.sum(np.log2(num[active])) - np.sum(lin_grad * p))

    current = value(powers)
    p = powers.copy()
    step = 1.0
    for _ in range(max_iter):
        grad = _signal_gradient(p, a, assoc) - lin_grad
        improved = False
        for _ in range(40):
            candidate = _project_powers(p + step * grad, assoc, budgets)
            cand_val = value(candidate)
            if cand_val > current + 1e-12:
                gain = cand_val - current
                p, current = candidate, cand_val
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        step = min(step * 2.0, 1e6)
        if gain < tol * max(1.0, abs(current)):
            break
    return p


def optimize_powers(powers_init: np.ndarray, a: np.ndarray, assoc: np.ndarray,
                    budgets: np.ndarray, noise_var: float, tol: float = 1e-6,
                    max_iter: int = 30):
    """Sequential-convex power allocation.

    Each iteration linearizes the interference-plus-noise part of the sum
    log-SINR around the current powers and maximizes the remaining concave
    surrogate over the per-BS budget polytopes; iterates that fail to improve
    the true objective are damped toward the previous point, so the returned
    trace is non-decreasing.
    """
    budgets = np.asarray(budgets, dtype=float)
    if np.any(budgets <= 0):
        raise ValueError("power budgets must be positive")
    powers = _project_powers(np.asarray(powers_init, dtype=float), assoc, budgets)
    current = sum_rate(powers, a, assoc, noise_var)
    trace = [current]
    for _ in range(max_iter):
        lin_grad = _interference_gradient(powers, a, assoc, noise_var)
        candidate = _maximize_surrogate(powers, a, assoc, budgets, lin_grad, noise_var)
        cand_val = sum_rate(candidate, a, assoc, noise_var)
        if cand_val < current:
            # safeguard: the linearized interference is not globally concave
            # when cross-BS terms are negative, so damp toward the last iterate
            for _ in range(20):
                candidate = powers + 0.5 * (candidate - powers)
                cand_val = sum_rate(candidate, a, assoc, noise_var)
                if cand_val >= current:
                    break
            else:
                break
        gain = cand_val - current
        powers, current = candidate, cand_val
        trace.append(current)
        if gain < tol * max(1.0, abs(current)):
            break
    return powers, np.asarray(trace)


def associate_users(scenario: Scenario, p_jt: float) -> np.ndarray:
    """Serve each MS from its strongest-direct-gain BS; the round(p_jt*K)
    users with the most balanced gains get joint transmission from both."""
    if not 0.0 <= p_jt <= 1.0:
        raise ValueError("p_jt must lie in [0, 1]")
    beta = scenario.beta_direct
    k = beta.shape[1]
    assoc = np.zeros((2, k), dtype=int)
    assoc[np.argmax(beta, axis=0), np.arange(k)] = 1
    gamma = beta.max(axis=0) / beta.min(axis=0)
    num_jt = int(np.floor(p_jt * k + 0.5))    # round half up
    for idx in np.argsort(gamma, kind="stable")[:num_jt]:
        assoc[:, idx] = 1
    return assoc


def uniform_powers(assoc: np.ndarray, budgets) -> np.ndarray:
    """Each BS splits its budget equally among the users it serves."""
    budgets = np.asarray(budgets, dtype=float)
    powers = np.zeros(assoc.shape)
    for i in range(2):
        served = assoc[i] == 1
        if np.any(served):
            powers[i, served] = budgets[i] / served.sum()
    return powers


def allocate(cascade: np.ndarray, direct: np.ndarray, assoc: np.ndarray,
             budgets, noise_var: float, rho: float = 1.0,
             init_cfg: RisConfig | None = None,
             optimize_ris: bool = True, optimize_power: bool = True,
             outer_tol: float = 1e-4, max_outer: int = 20,
             phase_kwargs: dict | None = None,
             power_kwargs: dict | None = None) -> AllocationResult:
    """Alternate phase and power optimization for Problem-level allocation.

    With both switches off this just evaluates the initial point (uniform
    powers, zero phases unless ``init_cfg`` is given), which serves as the
    no-optimization baseline.
    """
    if np.any(assoc.sum(axis=0) < 1):
        raise ValueError("every user needs at least one serving BS")
    budgets = np.asarray(budgets, dtype=float)
    phase_kwargs = phase_kwargs or {}
    power_kwargs = power_kwargs or {}
    n_r = cascade.shape[3]

    cfg = RisConfig(rho, np.zeros(n_r)) if init_cfg is None else init_cfg.canonical()
    powers = uniform_powers(assoc, budgets)

    current = objective_g(cfg, cascade, direct, powers, assoc, noise_var)
    trace = [current]
    rounds = max_outer if (optimize_ris and optimize_power) else 1
    for _ in range(rounds):
        if optimize_ris:
            cfg, _ = optimize_phases(cfg, cascade, direct, powers, assoc,
                                     noise_var, **phase_kwargs)
        if optimize_power:
            a = a_coefficients(cascade, direct, cfg)
            powers, _ = optimize_powers(powers, a, assoc, budgets, noise_var,
                                        **power_kwargs)
        value = objective_g(cfg, cascade, direct, powers, assoc, noise_var)
        trace.append(value)
        if value - trace[-2] < outer_tol:
            break

    beams = cm_beamformers(cascade, direct, cfg)
    sinr = evaluate_sinr(cascade, direct, beams, powers, cfg, assoc, noise_var)
    return AllocationResult(
        beamformers=beams,
        powers=PowerAllocation(powers=powers, budgets=budgets),
        config=cfg,
        sinr=sinr,
        objective=geometric_mean_sinr(sinr),
        trace=np.asarray(trace),
    )
