"""Uplink pilot training and estimation of the cascade/direct channels.

Each BS observes K pilot transmissions repeated over Q reflecting-surface
configurations and estimates, per MS, the (N_B x N_R) cascade matrix and the
N_B direct vector.  Estimators: plain least squares on the stacked linear
system, and linear MMSE using diagonal large-scale priors.

Note on noise scaling: the stacked observable divides each pilot projection
by sqrt(eta_k), so the noise on the stacked system has variance
sigma_w^2 / eta_k per entry.  The ``noise_var`` argument of the estimators is
that effective variance (a scalar when all MSs train at the same power).
"""

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, RisConfig, Scenario, composite_channel

# refuse to materialize stacked systems beyond this many matrix elements;
# the orthogonal per-user path has no such limit
MAX_DENSE_ELEMENTS = 2 * 10 ** 8

SINGULAR_COND_LIMIT = 1e12


@dataclass
class PilotBook:
    """Per-MS training sequences (columns, unit energy) and total pilot energies."""

    matrix: np.ndarray   # (tau_p, K)
    powers: np.ndarray   # (K,) eta_k = tau_p * eta_bar_k

    @property
    def num_users(self) -> int:
        return self.matrix.shape[1]

    def gram(self) -> np.ndarray:
        """Cross-correlations p_j^H p_k."""
        return self.matrix.conj().T @ self.matrix

    def is_orthogonal(self, tol: float = 1e-10) -> bool:
        k = self.num_users
        return bool(np.allclose(self.gram(), np.eye(k), atol=tol))


@dataclass
class TrainingObservation:
    """Received pilot matrices at one BS, one per surface configuration."""

    received: np.ndarray        # (Q, N_B, tau_p)
    configs: list               # Q RisConfig entries

    def __post_init__(self):
        if len(self.configs) != self.received.shape[0] or len(self.configs) < 1:
            raise ValueError("need one received block per configuration, Q >= 1")


@dataclass
class StackedSystem:
    """Dense linear model y = A d for all users' unknowns at one BS."""

    y: np.ndarray       # (K * N_B * Q,)
    a: np.ndarray       # (K * N_B * Q, K * N_B * (N_R + 1))
    num_users: int
    num_antennas: int
    num_elements: int
    num_configs: int


@dataclass
class EstimateSet:
    """Estimated cascade matrices and direct vectors for every MS at one BS."""

    cascade: np.ndarray   # (K, N_B, N_R)
    direct: np.ndarray    # (K, N_B)
    method: str           # "LS" | "MMSEQ" | "MMSE1"


@dataclass
class PriorCovariance:
    """Diagonal prior: beta_cascade on cascade entries, beta_direct on direct ones."""

    beta_cascade: np.ndarray   # (K,)
    beta_direct: np.ndarray    # (K,)

    def __post_init__(self):
        if np.any(self.beta_cascade <= 0) or np.any(self.beta_direct <= 0):
            raise ValueError("prior variances must be strictly positive")

    def user_diagonal(self, k: int, n_b: int, n_r: int) -> np.ndarray:
        return np.concatenate([np.full(n_b * n_r, self.beta_cascade[k]),
                               np.full(n_b, self.beta_direct[k])])

    def diagonal(self, n_b: int, n_r: int) -> np.ndarray:
        return np.concatenate([self.user_diagonal(k, n_b, n_r)
                               for k in range(len(self.beta_cascade))])


def generate_pilot_book(num_users: int, pilot_len: int, eta_bar) -> PilotBook:
    """Orthogonal unit-energy pilots from the scaled pilot_len-point DFT."""
    if pilot_len < num_users:
        raise ValueError(
            f"orthogonal pilots need pilot_len >= num_users, got {pilot_len} < {num_users}")
    idx = np.arange(pilot_len)
    dft = np.exp(-2j * np.pi * np.outer(idx, idx) / pilot_len)
    matrix = dft[:, :num_users] / np.sqrt(pilot_len)
    powers = pilot_len * np.broadcast_to(np.asarray(eta_bar, dtype=float), (num_users,)).copy()
    return PilotBook(matrix=matrix, powers=powers)


def generate_training_configs(num_elements: int, num_configs: int, rho: float,
                              rng: np.random.Generator | None = None) -> list:
    """Surface configurations used during training.

    For num_configs >= 2 the phases come from rows 1..N_R of a DFT of size
    max(num_configs, N_R + 1), which makes the extended config matrix
    [phi^(1) .. phi^(Q); 1^T] nonsingular whenever Q >= N_R + 1.  A single
    configuration is drawn uniformly at random.
    """
    if num_configs < 1:
        raise ValueError("need at least one training configuration")
    if num_configs == 1:
        rng = np.random.default_rng() if rng is None else rng
        return [RisConfig(rho, rng.uniform(-np.pi, np.pi, num_elements))]
    base = max(num_configs, num_elements + 1)
    n = np.arange(1, num_elements + 1)
    configs = []
    for q in range(num_configs):
        phases = np.angle(np.exp(-2j * np.pi * q * n / base))
        configs.append(RisConfig(rho, phases))
    return configs


def simulate_training(channels: ChannelSet, pilots: PilotBook, configs,
                      noise_var: float, rng: np.random.Generator,
                      bs: int = 0) -> TrainingObservation:
    """Received training signal at one BS over all surface configurations.

    Y^(q) = sum_k sqrt(eta_k) (D_k phi^(q) + h_d_k) p_k^H + W^(q),
    W entries i.i.d. CN(0, noise_var); fresh noise per repetition.
    """
    k = channels.num_users
    n_b = channels.direct.shape[2]
    tau_p = pilots.matrix.shape[0]
    if pilots.num_users != k:
        raise ValueError("pilot book and channel set disagree on user count")

    received = np.empty((len(configs), n_b, tau_p), dtype=complex)
    sigma = np.sqrt(noise_var)
    for q, cfg in enumerate(configs):
        block = np.zeros((n_b, tau_p), dtype=complex)
        for user in range(k):
            comp = composite_channel(channels.cascade[bs, user],
                                     channels.direct[bs, user], cfg)
            block += np.sqrt(pilots.powers[user]) * np.outer(comp, pilots.matrix[:, user].conj())
        if noise_var > 0:
            block += sigma * ((rng.standard_normal((n_b, tau_p))
                               + 1j * rng.standard_normal((n_b, tau_p))) / np.sqrt(2.0))
        received[q] = block
    return TrainingObservation(received=received, configs=list(configs))


def build_stacked_system(obs: TrainingObservation, pilots: PilotBook) -> StackedSystem:
    """Assemble the dense linear model relating observations to all unknowns.

    Row block (q, k) holds Y^(q) p_k / sqrt(eta_k); the (k, j) block of the
    model matrix is sqrt(eta_j/eta_k) p_{j,k} [phi^(q)T kron I_NB, I_NB].
    """
    q_count, n_b, _ = obs.received.shape
    k = pilots.num_users
    n_r = obs.configs[0].phases.shape[0]
    cols = k * n_b * (n_r + 1)
    rows = k * n_b * q_count
    if rows * cols > MAX_DENSE_ELEMENTS:
        raise ValueError(
            f"stacked system {rows}x{cols} too large to materialize; "
            "use the orthogonal per-user estimators instead")

    gram = pilots.gram()
    eye = np.eye(n_b)
    y = np.empty(rows, dtype=complex)
    a = np.zeros((rows, cols), dtype=complex)
    for q in range(q_count):
        phi = obs.configs[q].vector()
        block_row = np.hstack([np.kron(phi[None, :], eye), eye])   # (N_B, N_B*(N_R+1))
        for k_idx in range(k):
            r0 = (q * k + k_idx) * n_b
            y[r0:r0 + n_b] = obs.received[q] @ pilots.matrix[:, k_idx] / np.sqrt(pilots.powers[k_idx])
            for j in range(k):
                cross = gram[j, k_idx]
                if cross == 0:
                    continue
                scale = np.sqrt(pilots.powers[j] / pilots.powers[k_idx]) * cross
                c0 = j * n_b * (n_r + 1)
                a[r0:r0 + n_b, c0:c0 + n_b * (n_r + 1)] = scale * block_row
    return StackedSystem(y=y, a=a, num_users=k, num_antennas=n_b,
                         num_elements=n_r, num_configs=q_count)


def _unpack(d: np.ndarray, k: int, n_b: int, n_r: int, method: str) -> EstimateSet:
    cascade = np.empty((k, n_b, n_r), dtype=complex)
    direct = np.empty((k, n_b), dtype=complex)
    per_user = n_b * (n_r + 1)
    for user in range(k):
        seg = d[user * per_user:(user + 1) * per_user]
        cascade[user] = seg[:n_b * n_r].reshape(n_b, n_r, order="F")
        direct[user] = seg[n_b * n_r:]
    return EstimateSet(cascade=cascade, direct=direct, method=method)


def estimate_ls(sys: StackedSystem) -> EstimateSet:
    """Least-squares estimate; exact inverse in the square case Q = N_R + 1."""
    rows, cols = sys.a.shape
    if rows < cols:
        raise ValueError(
            f"underdetermined training: Q={sys.num_configs} configurations give {rows} "
            f"observations for {cols} unknowns; need Q >= N_R+1 = {sys.num_elements + 1}")
    if rows == cols:
        if np.linalg.cond(sys.a) > SINGULAR_COND_LIMIT:
            raise ValueError(
                "singular training system: the surface configurations are not "
                "linearly independent (together with the constant direct column)")
        d = np.linalg.solve(sys.a, sys.y)
    else:
        d = np.linalg.lstsq(sys.a, sys.y, rcond=None)[0]
    return _unpack(d, sys.num_users, sys.num_antennas, sys.num_elements, "LS")


def build_prior_covariance(scenario: Scenario, bs: int, users=None) -> PriorCovariance:
    """Diagonal prior from the known large-scale coefficients at one BS."""
    users = range(scenario.num_users) if users is None else users
    idx = np.asarray(list(users), dtype=int)
    return PriorCovariance(beta_cascade=scenario.beta_reflected[bs, idx].copy(),
                           beta_direct=scenario.beta_direct[bs, idx].copy())


def estimate_mmse(sys: StackedSystem, prior: PriorCovariance,
                  noise_var: float) -> EstimateSet:
    """Linear MMSE estimate d = R A^H (A R A^H + noise_var I)^-1 y."""
    r_diag = prior.diagonal(sys.num_antennas, sys.num_elements)
    ar = sys.a * r_diag[None, :]
    gain = ar @ sys.a.conj().T
    gain[np.diag_indices_from(gain)] += noise_var
    d = ar.conj().T @ np.linalg.solve(gain, sys.y)
    method = "MMSE1" if sys.num_configs == 1 else "MMSEQ"
    return _unpack(d, sys.num_users, sys.num_antennas, sys.num_elements, method)


# ---------------------------------------------------------------------------
# Scalable per-user paths, valid for orthogonal pilots.  With p_j^H p_k =
# delta_jk the stacked system is block diagonal across users and, inside a
# user, across BS antennas; each antenna sees the Q x (N_R + 1) system
# [phi^(q)T, 1].  These routes return exactly the dense results.
# ---------------------------------------------------------------------------

def _projected_observations(obs: TrainingObservation, pilots: PilotBook) -> np.ndarray:
    """Per-user pilot projections, shape (K, Q, N_B)."""
    q_count, _, _ = obs.received.shape
    k = pilots.num_users
    proj = np.empty((k, q_count, obs.received.shape[1]), dtype=complex)
    for user in range(k):
        p = pilots.matrix[:, user]
        for q in range(q_count):
            proj[user, q] = obs.received[q] @ p / np.sqrt(pilots.powers[user])
    return proj


def _config_matrix(configs) -> np.ndarray:
    """Q x (N_R + 1) matrix [phi^(q)T, 1]."""
    phis = np.stack([cfg.vector() for cfg in configs])
    return np.hstack([phis, np.ones((phis.shape[0], 1))])


def estimate_ls_orthogonal(obs: TrainingObservation, pilots: PilotBook) -> EstimateSet:
    """Least squares through the per-antenna factorization (orthogonal pilots)."""
    if not pilots.is_orthogonal():
        raise ValueError("per-user estimation requires orthogonal pilots")
    c = _config_matrix(obs.configs)
    q_count, unknowns = c.shape
    if q_count < unknowns:
        raise ValueError(
            f"underdetermined training: Q={q_count} configurations for "
            f"{unknowns - 1} surface elements; need Q >= {unknowns}")
    if q_count == unknowns and np.linalg.cond(c) > SINGULAR_COND_LIMIT:
        raise ValueError(
            "singular training system: the surface configurations are not "
            "linearly independent (together with the constant direct column)")
    proj = _projected_observations(obs, pilots)
    k, _, n_b = proj.shape
    # one factorization serves every user and antenna: columns are (k, m) pairs
    rhs = proj.transpose(1, 0, 2).reshape(q_count, k * n_b)
    if q_count == unknowns:
        x = np.linalg.solve(c, rhs)
    else:
        x = np.linalg.lstsq(c, rhs, rcond=None)[0]
    x = x.reshape(unknowns, k, n_b)
    cascade = x[:-1].transpose(1, 2, 0)
    direct = x[-1]
    return EstimateSet(cascade=cascade, direct=direct, method="LS")


def estimate_mmse_orthogonal(obs: TrainingObservation, pilots: PilotBook,
                             prior: PriorCovariance, noise_var) -> EstimateSet:
    """Linear MMSE through the per-antenna factorization (orthogonal pilots).

    ``noise_var`` is the effective variance of the projected observations,
    scalar or per user.
    """
    if not pilots.is_orthogonal():
        raise ValueError("per-user estimation requires orthogonal pilots")
    c = _config_matrix(obs.configs)
    q_count, unknowns = c.shape
    proj = _projected_observations(obs, pilots)
    k, _, n_b = proj.shape
    n_r = unknowns - 1
    noise = np.broadcast_to(np.asarray(noise_var, dtype=float), (k,))

    cascade = np.empty((k, n_b, n_r), dtype=complex)
    direct = np.empty((k, n_b), dtype=complex)
    for user in range(k):
        r = np.concatenate([np.full(n_r, prior.beta_cascade[user]),
                            [prior.beta_direct[user]]])
        cr = c * r[None, :]
        gain = cr @ c.conj().T
        gain[np.diag_indices_from(gain)] += noise[user]
        x = cr.conj().T @ np.linalg.solve(gain, proj[user])   # (N_R+1, N_B)
        cascade[user] = x[:-1].T
        direct[user] = x[-1]
    method = "MMSE1" if q_count == 1 else "MMSEQ"
    return EstimateSet(cascade=cascade, direct=direct, method=method)


def nmse(channels: ChannelSet, bs: int, est: EstimateSet) -> float:
    """Total squared error over direct and cascade parts, normalized by the
    true channel energy, for one BS."""
    true_cascade = channels.cascade[bs]
    true_direct = channels.direct[bs]
    if true_cascade.shape != est.cascade.shape or true_direct.shape != est.direct.shape:
        raise ValueError("estimate dimensions do not match the channel set")
    num = (np.sum(np.abs(true_direct - est.direct) ** 2)
           + np.sum(np.abs(true_cascade - est.cascade) ** 2))
    den = np.sum(np.abs(true_direct) ** 2) + np.sum(np.abs(true_cascade) ** 2)
    if den == 0:
        raise ValueError("true channel energy is zero")
    return float(num / den)
