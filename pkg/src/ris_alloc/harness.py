"""Configuration-driven Monte-Carlo experiments over the allocation toolkit.

Six experiments cover estimation quality, single-user SNR optimization, and
two-cell multi-user allocation; each emits long-format rows plus summary rows
(empirical CDF points on a dB grid, or per-sweep means).  Runs are
reproducible: every trial draws from generators keyed by (seed, trial, role),
so the trial count and worker count never perturb individual realizations.
"""

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from .channel import (
    RisConfig,
    SystemConstants,
    generate_scenario,
    noise_power,
    sample_fading,
)
from .estimation import (
    EstimateSet,
    build_prior_covariance,
    estimate_ls_orthogonal,
    estimate_mmse_orthogonal,
    generate_pilot_book,
    generate_training_configs,
    nmse,
    simulate_training,
)
from .multi_user import (
    allocate,
    associate_users,
    cm_beamformer,
    evaluate_sinr,
    geometric_mean_sinr,
)
from .single_user import optimize_am, optimize_lb, optimize_ub, snr

EXPERIMENTS = ("nmse-vs-nr", "su-cdf", "su-vs-nr", "mu-cdf", "mu-sinr-vs-nr", "jt-sweep")
ESTIMATORS = ("PCSI", "LS", "MMSE1", "MMSEQ")
SU_METHODS = ("am", "cf-ub", "cf-lb", "no-opt")
MU_METHODS = ("joint", "only-ris", "only-powers", "no-opt")

CSV_COLUMNS = ("experiment", "method", "estimator", "n_r", "p_jt", "trial",
               "user", "metric", "grid_db", "value")

PILOT_POWER_W = 0.1   # per-symbol uplink training power

# desk-scale defaults keep the full pipeline in CI time budgets
DESK_SCALE = dict(bs_antennas=8, ris_elements=16, users=4)
PAPER_SCALE = dict(bs_antennas=64, ris_elements=64, users=20)

CDF_POINTS = 41


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    method: str | None
    estimator: str | None
    n_r: int
    p_jt: float | None
    trial: int | None
    user: int | None
    metric: str
    grid_db: float | None
    value: float

    def sort_key(self):
        return tuple("" if v is None else str(v) for v in
                     (self.experiment, self.method, self.estimator, self.n_r,
                      self.p_jt, self.metric, self.trial, self.user, self.grid_db))


@dataclass
class ResultTable:
    rows: list

    def samples(self, metric, **filters):
        out = []
        for row in self.rows:
            if row.metric != metric:
                continue
            if any(getattr(row, key) != val for key, val in filters.items()):
                continue
            out.append(row.value)
        return np.asarray(out)


@dataclass
class ExperimentConfig:
    experiment: str
    trials: int = 50
    seed: int = 1
    estimators: tuple = ()
    methods: tuple = ()
    p_jt: tuple = ()
    n_r_list: tuple = ()
    out: str = "results.csv"
    paper_scale: bool = False
    workers: int = 1
    bs_antennas: int = 0        # 0 = use scale default
    ris_elements: int = 0
    users: int = 0
    ris_amplitude: float = 1.0
    pilot_power_w: float = PILOT_POWER_W
    max_bs_power_w: float = 10.0

    def normalized(self) -> "ExperimentConfig":
        """Fill in experiment-dependent defaults and validate."""
        if self.experiment not in EXPERIMENTS:
            raise ValueError(
                f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        cfg = replace(self)
        scale = PAPER_SCALE if cfg.paper_scale else DESK_SCALE
        cfg.bs_antennas = cfg.bs_antennas or scale["bs_antennas"]
        cfg.ris_elements = cfg.ris_elements or scale["ris_elements"]
        cfg.users = cfg.users or scale["users"]

        if not cfg.estimators:
            cfg.estimators = (("LS", "MMSE1", "MMSEQ") if cfg.experiment == "nmse-vs-nr"
                              else ("PCSI",))
        if not cfg.methods:
            if cfg.experiment.startswith("su"):
                cfg.methods = SU_METHODS
            elif cfg.experiment == "jt-sweep":
                cfg.methods = ("joint",)
            elif cfg.experiment.startswith("mu"):
                cfg.methods = MU_METHODS
            else:
                cfg.methods = ()
        if not cfg.n_r_list:
            if cfg.experiment in ("nmse-vs-nr", "su-vs-nr", "mu-sinr-vs-nr"):
                cfg.n_r_list = ((8, 16, 32, 64, 128) if cfg.paper_scale
                                else (8, 16, 32))
            else:
                cfg.n_r_list = (cfg.ris_elements,)
        if not cfg.p_jt:
            cfg.p_jt = (0.0, 0.2, 0.5) if cfg.experiment == "jt-sweep" else (0.2,)

        if cfg.trials < 1:
            raise ValueError("trials must be >= 1")
        for est in cfg.estimators:
            if est not in ESTIMATORS:
                raise ValueError(f"unknown estimator {est!r}; choose from {', '.join(ESTIMATORS)}")
        if cfg.experiment == "nmse-vs-nr" and "PCSI" in cfg.estimators:
            raise ValueError("nmse-vs-nr measures estimation error; PCSI is not valid here")
        valid_methods = SU_METHODS if cfg.experiment.startswith("su") else MU_METHODS
        if cfg.experiment != "nmse-vs-nr":
            for m in cfg.methods:
                if m not in valid_methods:
                    raise ValueError(
                        f"method {m!r} is not valid for {cfg.experiment}; "
                        f"choose from {', '.join(valid_methods)}")
        for p in cfg.p_jt:
            if not 0.0 <= p <= 1.0:
                raise ValueError("p_jt values must lie in [0, 1]")
        if cfg.workers < 1:
            raise ValueError("workers must be >= 1")
        return cfg

    def constants(self, n_r: int | None = None, users: int | None = None) -> SystemConstants:
        return SystemConstants(
            bs_antennas=self.bs_antennas,
            ris_elements=self.ris_elements if n_r is None else n_r,
            users=self.users if users is None else users,
            ris_amplitude=self.ris_amplitude,
            max_bs_power_w=self.max_bs_power_w,
        )


# ---------------------------------------------------------------------------
# per-trial building blocks
# ---------------------------------------------------------------------------

def _rng(cfg, trial, role, extra=0):
    return np.random.default_rng((cfg.seed, trial, role, extra))


def _estimate_arrays(channels, scenario, constants, estimator, pilot_power_w,
                     rng, bs_list=(0, 1)):
    """Channel knowledge handed to the optimizers: true under PCSI, otherwise
    per-BS estimates from simulated uplink training."""
    if estimator == "PCSI":
        return channels.cascade, channels.direct

    k = channels.num_users
    pilots = generate_pilot_book(k, k, pilot_power_w)
    sigma_w = noise_power(constants)
    if estimator == "MMSE1":
        configs = generate_training_configs(constants.ris_elements, 1,
                                            constants.ris_amplitude, rng)
    else:
        configs = generate_training_configs(constants.ris_elements,
                                            constants.ris_elements + 1,
                                            constants.ris_amplitude)

    cascade = np.array(channels.cascade)
    direct = np.array(channels.direct)
    for bs in bs_list:
        obs = simulate_training(channels, pilots, configs, sigma_w, rng, bs=bs)
        if estimator == "LS":
            est = estimate_ls_orthogonal(obs, pilots)
        else:
            prior = build_prior_covariance(scenario, bs)
            est = estimate_mmse_orthogonal(obs, pilots, prior,
                                           sigma_w / pilots.powers)
        cascade[bs] = est.cascade
        direct[bs] = est.direct
    return cascade, direct


def _db(x):
    return 10.0 * np.log10(x)


def _row(cfg, **kw):
    base = dict(experiment=cfg.experiment, method=None, estimator=None,
                n_r=cfg.ris_elements, p_jt=None, trial=None, user=None,
                metric="", grid_db=None, value=np.nan)
    base.update(kw)
    return ResultRow(**base)


# ---------------------------------------------------------------------------
# trial runners (one per experiment id)
# ---------------------------------------------------------------------------

def _trial_nmse(cfg, trial):
    rows = []
    for j, n_r in enumerate(cfg.n_r_list):
        constants = cfg.constants(n_r=n_r)
        scenario = generate_scenario(constants, _rng(cfg, trial, 0))
        channels = sample_fading(scenario, constants, _rng(cfg, trial, 1, j))
        for estimator in cfg.estimators:
            rng = _rng(cfg, trial, 2, j * 16 + ESTIMATORS.index(estimator))
            cascade, direct = _estimate_arrays(channels, scenario, constants,
                                               estimator, cfg.pilot_power_w, rng)
            per_bs = [nmse(channels, bs, EstimateSet(cascade[bs], direct[bs], estimator))
                      for bs in (0, 1)]
            rows.append(_row(cfg, estimator=estimator, n_r=n_r, trial=trial,
                             metric="nmse", value=float(np.mean(per_bs))))
    return rows


_SU_OPTIMIZERS = {"am": optimize_am, "cf-ub": optimize_ub, "cf-lb": optimize_lb}


def _trial_su(cfg, trial):
    rows = []
    for j, n_r in enumerate(cfg.n_r_list):
        constants = cfg.constants(n_r=n_r, users=1)
        # the single-user link is the cell-edge deployment the surface serves
        scenario = generate_scenario(constants, _rng(cfg, trial, 0),
                                     cell_edge_users=True)
        channels = sample_fading(scenario, constants, _rng(cfg, trial, 1, j))
        sigma_z = noise_power(constants)
        random_phases = _rng(cfg, trial, 3, j).uniform(-np.pi, np.pi, n_r)
        for estimator in cfg.estimators:
            rng = _rng(cfg, trial, 2, j * 16 + ESTIMATORS.index(estimator))
            cascade, direct = _estimate_arrays(channels, scenario, constants,
                                               estimator, cfg.pilot_power_w,
                                               rng, bs_list=(0,))
            for method in cfg.methods:
                if method == "no-opt":
                    ris_cfg = RisConfig(constants.ris_amplitude, random_phases)
                    w = cm_beamformer(cascade[0, 0], direct[0, 0], ris_cfg)
                else:
                    sol = _SU_OPTIMIZERS[method](cascade[0, 0], direct[0, 0],
                                                 constants.ris_amplitude)
                    w, ris_cfg = sol.beamformer, sol.config
                value = snr(w, channels.cascade[0, 0], channels.direct[0, 0],
                            ris_cfg, constants.max_bs_power_w, sigma_z)
                rows.append(_row(cfg, method=method, estimator=estimator, n_r=n_r,
                                 trial=trial, user=0, metric="snr_db",
                                 value=float(_db(value))))
    return rows


def _trial_mu(cfg, trial):
    rows = []
    for j, n_r in enumerate(cfg.n_r_list):
        constants = cfg.constants(n_r=n_r)
        scenario = generate_scenario(constants, _rng(cfg, trial, 0))
        channels = sample_fading(scenario, constants, _rng(cfg, trial, 1, j))
        sigma_z = noise_power(constants)
        budgets = [constants.max_bs_power_w] * 2
        for p_idx, p_jt in enumerate(cfg.p_jt):
            assoc = associate_users(scenario, p_jt)
            random_cfg = RisConfig(constants.ris_amplitude,
                                   _rng(cfg, trial, 3, j * 16 + p_idx)
                                   .uniform(-np.pi, np.pi, n_r))
            for estimator in cfg.estimators:
                rng = _rng(cfg, trial, 2, j * 16 + ESTIMATORS.index(estimator))
                cascade, direct = _estimate_arrays(channels, scenario, constants,
                                                   estimator, cfg.pilot_power_w, rng)
                for method in cfg.methods:
                    res = allocate(
                        cascade, direct, assoc, budgets, sigma_z,
                        rho=constants.ris_amplitude,
                        init_cfg=random_cfg if method in ("only-powers", "no-opt") else None,
                        optimize_ris=method in ("joint", "only-ris"),
                        optimize_power=method in ("joint", "only-powers"),
                    )
                    true_sinr = evaluate_sinr(channels.cascade, channels.direct,
                                              res.beamformers, res.powers.powers,
                                              res.config, assoc, sigma_z)
                    tag = dict(method=method, estimator=estimator, n_r=n_r,
                               p_jt=p_jt, trial=trial)
                    rows.append(_row(cfg, metric="gm_sinr_db",
                                     value=float(_db(geometric_mean_sinr(true_sinr))),
                                     **tag))
                    for user, val in enumerate(true_sinr):
                        rows.append(_row(cfg, user=user, metric="sinr_db",
                                         value=float(_db(val)), **tag))
    return rows


_TRIAL_RUNNERS = {
    "nmse-vs-nr": _trial_nmse,
    "su-cdf": _trial_su,
    "su-vs-nr": _trial_su,
    "mu-cdf": _trial_mu,
    "mu-sinr-vs-nr": _trial_mu,
    "jt-sweep": _trial_mu,
}


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

def compute_cdf(samples, grid) -> list:
    """Empirical CDF of the samples evaluated on a grid: P(X <= g)."""
    samples = np.sort(np.asarray(samples, dtype=float))
    if samples.size == 0:
        raise ValueError("cannot build a CDF from zero samples")
    return [(float(g), float(np.searchsorted(samples, g, side="right") / samples.size))
            for g in np.asarray(grid, dtype=float)]


def _db_grid(samples, points=CDF_POINTS):
    lo = np.floor(np.min(samples)) - 1.0
    hi = np.ceil(np.max(samples)) + 1.0
    return np.linspace(lo, hi, points)


def _group_keys(rows, attrs):
    keys = sorted({tuple(getattr(r, a) for a in attrs) for r in rows},
                  key=lambda t: tuple(str(x) for x in t))
    return keys


def _summaries(cfg, rows):
    out = []
    if cfg.experiment in ("su-cdf", "mu-cdf", "jt-sweep"):
        metric = "snr_db" if cfg.experiment == "su-cdf" else "gm_sinr_db"
        attrs = ("method", "estimator", "p_jt", "n_r")
        for key in _group_keys([r for r in rows if r.metric == metric], attrs):
            vals = [r.value for r in rows
                    if r.metric == metric
                    and tuple(getattr(r, a) for a in attrs) == key]
            for g, p in compute_cdf(vals, _db_grid(vals)):
                out.append(_row(cfg, method=key[0], estimator=key[1], p_jt=key[2],
                                n_r=key[3], metric="cdf", grid_db=g, value=p))
    else:
        per_point = {"nmse-vs-nr": ("nmse", "mean_nmse_db"),
                     "su-vs-nr": ("snr_db", "mean_snr_db"),
                     "mu-sinr-vs-nr": ("sinr_db", "mean_sinr_db")}[cfg.experiment]
        metric, summary_name = per_point
        attrs = ("method", "estimator", "p_jt", "n_r")
        for key in _group_keys([r for r in rows if r.metric == metric], attrs):
            vals = np.array([r.value for r in rows
                             if r.metric == metric
                             and tuple(getattr(r, a) for a in attrs) == key])
            mean = _db(np.mean(vals)) if metric == "nmse" else np.mean(vals)
            out.append(_row(cfg, method=key[0], estimator=key[1], p_jt=key[2],
                            n_r=key[3], metric=summary_name, value=float(mean)))
    return out


def _run_one(args):
    cfg, trial = args
    return _TRIAL_RUNNERS[cfg.experiment](cfg, trial)


def run_experiment(cfg: ExperimentConfig) -> ResultTable:
    """Run all trials of one experiment and attach summary rows."""
    cfg = cfg.normalized()
    jobs = [(cfg, trial) for trial in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            per_trial = list(pool.map(_run_one, jobs))
    else:
        per_trial = [_run_one(job) for job in jobs]
    rows = [row for chunk in per_trial for row in chunk]
    rows += _summaries(cfg, rows)
    rows.sort(key=ResultRow.sort_key)
    return ResultTable(rows=rows)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def write_results(table: ResultTable, path) -> None:
    rows = sorted(table.rows, key=ResultRow.sort_key)
    try:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(CSV_COLUMNS)
            for row in rows:
                writer.writerow(["" if (v := getattr(row, col)) is None else v
                                 for col in CSV_COLUMNS])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def read_results(path) -> ResultTable:
    def parse(text, kind):
        if text == "":
            return None
        return kind(text)

    rows = []
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
                raise ValueError(f"unexpected CSV header in {path}: {reader.fieldnames}")
            for rec in reader:
                rows.append(ResultRow(
                    experiment=rec["experiment"],
                    method=parse(rec["method"], str),
                    estimator=parse(rec["estimator"], str),
                    n_r=int(rec["n_r"]),
                    p_jt=parse(rec["p_jt"], float),
                    trial=parse(rec["trial"], int),
                    user=parse(rec["user"], int),
                    metric=rec["metric"],
                    grid_db=parse(rec["grid_db"], float),
                    value=float(rec["value"]),
                ))
    except OSError as exc:
        raise OSError(f"cannot read results from {path}: {exc}") from exc
    return ResultTable(rows=rows)


_CONFIG_PARSERS = {
    "experiment": str,
    "trials": int,
    "seed": int,
    "estimators": lambda s: tuple(x.strip() for x in s.split(",") if x.strip()),
    "methods": lambda s: tuple(x.strip() for x in s.split(",") if x.strip()),
    "p_jt": lambda s: tuple(float(x) for x in s.split(",") if x.strip()),
    "n_r_list": lambda s: tuple(int(x) for x in s.split(",") if x.strip()),
    "out": str,
    "paper_scale": lambda s: s.strip().lower() in ("1", "true", "yes"),
    "workers": int,
    "bs_antennas": int,
    "ris_elements": int,
    "users": int,
    "ris_amplitude": float,
    "pilot_power_w": float,
    "max_bs_power_w": float,
}


def read_config(path) -> ExperimentConfig:
    """Parse a flat `key = value` config file ('#' starts a comment)."""
    values = {}
    try:
        with open(path, encoding="utf-8") as handle:
            for lineno, raw in enumerate(handle, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
                key, _, val = line.partition("=")
                key = key.strip()
                if key not in _CONFIG_PARSERS:
                    raise ValueError(
                        f"{path}:{lineno}: unknown key {key!r}; valid keys: "
                        + ", ".join(sorted(_CONFIG_PARSERS)))
                values[key] = _CONFIG_PARSERS[key](val.strip())
    except OSError as exc:
        raise OSError(f"cannot read config from {path}: {exc}") from exc
    if "experiment" not in values:
        raise ValueError(f"{path}: missing required key 'experiment'")
    return ExperimentConfig(**values)


def write_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for f in fields(cfg):
            val = getattr(cfg, f.name)
            if isinstance(val, tuple):
                val = ",".join(str(x) for x in val)
            handle.write(f"{f.name} = {val}\n")
