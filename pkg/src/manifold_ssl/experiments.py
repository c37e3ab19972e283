"""Scripted experiment families: axis sweeps over seeds, the unit-square
harmonic interpolation study, and the learning-rate/gradient-flow
comparison. Every run derives all of its randomness from named streams of
its seed, so identical specs reproduce identical outputs byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from multiprocessing import Pool

import numpy as np

from . import network, objectives, training
from .manifold import (AugmentationSpec, Augmenter, Dataset, generate_dataset,
                       make_manifold_map, make_task, phi_forward_batch)
from .network import NetworkParams
from .numerics import RngState, prng_new
from .training import TrainConfig

# named substreams of an experiment seed
STREAM_MAP = 0
STREAM_TASK = 1
STREAM_DATA = 2
STREAM_TRAIN = 3
STREAM_FROZEN = 4

SWEEP_AXES = ("lambda", "epsilon", "k", "beta_mt", "eta")

SUMMARY_CSV_HEADER = "axis_value,mean_final_nll,std_final_nll,n_seeds"
GRID_CSV_HEADER = "u,v,f,analytic,abs_err"
FLUID_CSV_HEADER = "eta,seed,sup_distance"


@dataclass
class Metrics:
    test_nll: float
    test_acc: float
    n_test: int


def evaluate(params: NetworkParams, xs: np.ndarray, ys: np.ndarray,
             kind: str = "logistic") -> Metrics:
    """Mean held-out loss and sign accuracy (sign(0) counts as +1)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape[0] == 0:
        raise ValueError("evaluate: empty test set")
    f = network.forward_batch(params, xs)
    values, _ = objectives.LOSSES[kind](f, ys)
    if kind == "logistic":
        predicted = np.where(f >= 0.0, 1.0, -1.0)
        acc = float(np.mean(predicted == ys))
    else:
        acc = math.nan
    return Metrics(test_nll=float(values.mean()), test_acc=acc,
                   n_test=xs.shape[0])


@dataclass
class TaskParams:
    """Generation knobs for one synthetic world."""
    latent_dim: int = 10
    gen_hidden: int = 30
    ambient_dim: int = 100
    n_labelled: int = 10
    n_unlabelled: int = 1000
    n_test: int = 2000
    separation: float = 3.0


def build_world(tp: TaskParams, seed: int):
    """Map, task and dataset for one experiment seed."""
    mmap = make_manifold_map(prng_new(seed, STREAM_MAP), tp.latent_dim,
                             tp.gen_hidden, tp.ambient_dim)
    task = make_task(prng_new(seed, STREAM_TASK), tp.latent_dim, tp.separation,
                     tp.n_labelled, tp.n_unlabelled, tp.n_test)
    dataset = generate_dataset(prng_new(seed, STREAM_DATA), mmap, task)
    return mmap, task, dataset


def apply_axis(config: TrainConfig, axis: str, value) -> TrainConfig:
    if axis == "lambda":
        return replace(config, lam=float(value))
    if axis == "epsilon":
        return replace(config, augmentation=replace(config.augmentation,
                                                    epsilon=float(value)))
    if axis == "k":
        return replace(config, augmentation=replace(config.augmentation,
                                                    k=int(value)))
    if axis == "beta_mt":
        return replace(config, method="mean_teacher", beta_mt=float(value))
    if axis == "eta":
        return replace(config, eta=float(value))
    raise ValueError(f"apply_axis: unknown axis {axis!r}")


@dataclass
class RunResult:
    run_id: str
    method: str
    axis: str
    value: float
    seed: int
    records: list
    final_nll: float = math.nan
    final_acc: float = math.nan
    ema_gap: float = math.nan
    error: str | None = None


def run_single(tp: TaskParams, config: TrainConfig, axis: str = "none",
               value: float = 0.0, run_id: str | None = None) -> RunResult:
    """One full training run derived entirely from config.seed."""
    seed = config.seed
    cfg = config if axis == "none" else apply_axis(config, axis, value)
    if run_id is None:
        run_id = f"{cfg.method}-{axis}{value:g}-s{seed}"
    mmap, _, dataset = build_world(tp, seed)
    rng = prng_new(seed, STREAM_TRAIN)
    ema_gap = math.nan
    if cfg.method == "supervised":
        params, records = training.train_supervised(cfg, dataset, rng,
                                                    run_id=run_id)
    else:
        augmenter = Augmenter(mmap, cfg.augmentation)
        if cfg.method == "mean_teacher":
            params, ema_params, records = training.train_mean_teacher(
                cfg, dataset, augmenter, cfg.beta_mt, rng, run_id=run_id)
            ema_gap = (network.params_distance(ema_params, params)
                       / network.params_norm(params))
        else:
            params, records = training.train_pi_model(cfg, dataset, augmenter,
                                                      rng, run_id=run_id)
    last = records[-1]
    return RunResult(run_id=run_id, method=cfg.method, axis=axis, value=value,
                     seed=seed, records=records, final_nll=last.test_nll,
                     final_acc=last.test_acc, ema_gap=ema_gap)


@dataclass
class SweepSpec:
    task: TaskParams
    train: TrainConfig
    axis: str
    values: list
    seeds: list

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"SweepSpec: unknown axis {self.axis!r}")
        if not self.values:
            raise ValueError("SweepSpec: values must be nonempty")
        if not self.seeds:
            raise ValueError("SweepSpec: seeds must be nonempty")


@dataclass
class SummaryRow:
    axis_value: float
    mean_final_nll: float
    std_final_nll: float
    n_seeds: int


@dataclass
class SweepResult:
    spec: SweepSpec
    runs: list
    summary: list


def _sweep_worker(args):
    tp, config, axis, value, seed = args
    cfg = replace(config, seed=seed)
    run_id = f"{apply_axis(cfg, axis, value).method}-{axis}{value:g}-s{seed}"
    try:
        return run_single(tp, cfg, axis, value, run_id=run_id)
    except Exception as exc:  # a failed point must not sink the sweep
        return RunResult(run_id=run_id, method=config.method, axis=axis,
                         value=value, seed=seed, records=[], error=repr(exc))


def run_sweep(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    """Full factorial over values x seeds with per-value aggregation."""
    work = [(spec.task, spec.train, spec.axis, value, seed)
            for value in spec.values for seed in spec.seeds]
    if jobs > 1:
        with Pool(processes=jobs) as pool:
            runs = pool.map(_sweep_worker, work)
    else:
        runs = [_sweep_worker(w) for w in work]
    summary = []
    for value in spec.values:
        finals = [r.final_nll for r in runs
                  if r.value == value and r.error is None]
        if finals:
            mean = float(np.mean(finals))
            std = float(np.std(finals, ddof=1)) if len(finals) > 1 else 0.0
        else:
            mean, std = math.nan, math.nan
        summary.append(SummaryRow(axis_value=float(value), mean_final_nll=mean,
                                  std_final_nll=std, n_seeds=len(finals)))
    return SweepResult(spec=spec, runs=runs, summary=summary)


def sweep_records_csv(result: SweepResult) -> str:
    lines = [training.CSV_HEADER]
    for run in sorted(result.runs, key=lambda r: r.run_id):
        lines.extend(rec.csv_row() for rec in run.records)
    return "\n".join(lines) + "\n"


def sweep_summary_csv(result: SweepResult) -> str:
    lines = [SUMMARY_CSV_HEADER]
    for row in result.summary:
        lines.append(",".join([repr(row.axis_value), repr(row.mean_final_nll),
                               repr(row.std_final_nll), str(row.n_seeds)]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Harmonic interpolation on the unit square. Boundary labels are 0 on the
# u=0 side and 1 on the u=1 side, so the energy-minimizing interpolant is
# f(u, v) = u; the trained network is compared against it on a regular grid
# and probed for harmonicity with a 5-point Laplacian stencil.
# ---------------------------------------------------------------------------

@dataclass
class HarmonicConfig:
    boundary_per_side: int = 20
    n_unlabelled: int = 1000
    hidden: int = 100
    lam: float = 10.0
    epsilon: float = 0.03
    epochs: int = 400
    warmup_epochs: int = 20
    eta: float = 0.05
    momentum: float = 0.9
    batch_unlabelled: int = 100
    grid: int = 21
    seed: int = 1

    def __post_init__(self):
        if self.grid < 3:
            raise ValueError("HarmonicConfig: grid must be >= 3")
        if self.boundary_per_side < 1:
            raise ValueError("HarmonicConfig: boundary_per_side must be >= 1")


@dataclass
class HarmonicReport:
    grid_u: np.ndarray
    grid_v: np.ndarray
    grid_f: np.ndarray
    grid_analytic: np.ndarray
    abs_err: np.ndarray
    rms_error: float
    mean_abs_laplacian_init: float
    mean_abs_laplacian_trained: float
    energy_trajectory: list
    records: list


def grid_mean_abs_laplacian(f_grid: np.ndarray, spacing: float) -> float:
    """Mean absolute 5-point-stencil Laplacian over interior grid points."""
    interior = (f_grid[2:, 1:-1] + f_grid[:-2, 1:-1] + f_grid[1:-1, 2:]
                + f_grid[1:-1, :-2] - 4.0 * f_grid[1:-1, 1:-1]) / spacing ** 2
    return float(np.mean(np.abs(interior)))


def harmonic_experiment(config: HarmonicConfig, rng: RngState):
    """Train a pi model with squared loss on boundary-labelled data and
    report grid error against f(u, v) = u plus harmonicity and energy
    diagnostics."""
    n_side = config.boundary_per_side
    v_pts = np.linspace(0.0, 1.0, n_side)
    x_lab = np.vstack([np.column_stack([np.zeros(n_side), v_pts]),
                       np.column_stack([np.ones(n_side), v_pts])])
    y_lab = np.concatenate([np.zeros(n_side), np.ones(n_side)])
    x_unl = rng.uniform(0.0, 1.0, size=(config.n_unlabelled, 2))

    lin = np.linspace(0.0, 1.0, config.grid)
    uu, vv = np.meshgrid(lin, lin, indexing="ij")
    grid_pts = np.column_stack([uu.ravel(), vv.ravel()])
    analytic = uu.ravel().copy()

    dataset = Dataset(z_labelled=x_lab.copy(), x_labelled=x_lab,
                      y_labelled=y_lab, z_unlabelled=x_unl.copy(),
                      x_unlabelled=x_unl, z_test=grid_pts.copy(),
                      x_test=grid_pts, y_test=analytic)
    aug = AugmentationSpec(epsilon=config.epsilon, k=2, mode="ambient")
    cfg = TrainConfig(method="pi_model", epochs=config.epochs,
                      warmup_epochs=config.warmup_epochs, lam=config.lam,
                      eta=config.eta, momentum=config.momentum,
                      batch_labelled=x_lab.shape[0],
                      batch_unlabelled=config.batch_unlabelled,
                      augmentation=aug, loss="squared", hidden=config.hidden,
                      seed=config.seed)
    params0 = network.init_network(rng, 2, config.hidden)
    spacing = lin[1] - lin[0]
    f_init = network.forward_batch(params0, grid_pts).reshape(config.grid,
                                                              config.grid)
    lap_init = grid_mean_abs_laplacian(f_init, spacing)

    energy_trajectory = []

    def on_epoch(epoch, params):
        energy_trajectory.append(
            objectives.dirichlet_energy(params, None, x_unl, method="chain"))

    params, records = training.train_pi_model(
        cfg, dataset, Augmenter(None, aug), rng, params0=params0,
        epoch_hook=on_epoch, run_id=f"harmonic-s{config.seed}")

    f_grid = network.forward_batch(params, grid_pts)
    abs_err = np.abs(f_grid - analytic)
    report = HarmonicReport(
        grid_u=uu.ravel().copy(), grid_v=vv.ravel().copy(), grid_f=f_grid,
        grid_analytic=analytic, abs_err=abs_err,
        rms_error=float(np.sqrt(np.mean((f_grid - analytic) ** 2))),
        mean_abs_laplacian_init=lap_init,
        mean_abs_laplacian_trained=grid_mean_abs_laplacian(
            f_grid.reshape(config.grid, config.grid), spacing),
        energy_trajectory=energy_trajectory, records=records)
    return params, report


def harmonic_grid_csv(report: HarmonicReport) -> str:
    lines = [GRID_CSV_HEADER]
    for u, v, f, a, e in zip(report.grid_u, report.grid_v, report.grid_f,
                             report.grid_analytic, report.abs_err):
        lines.append(",".join([repr(float(u)), repr(float(v)), repr(float(f)),
                               repr(float(a)), repr(float(e))]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Learning-rate study: full-batch updates with frozen augmentation draws
# against the RK4 path of the same deterministic field, compared on the
# shared step grid; the sup-norm gap should shrink roughly linearly in eta.
# ---------------------------------------------------------------------------

@dataclass
class FluidConfig:
    task: TaskParams = field(default_factory=lambda: TaskParams(
        n_unlabelled=200, n_test=0))
    etas: tuple = (0.02, 0.01, 0.005)
    horizon: float = 5.0
    lam: float = 1.0
    epsilon: float = 0.3
    k: int = 10
    hidden: int = 64
    loss: str = "logistic"
    seeds: tuple = (1, 2, 3, 4, 5)


@dataclass
class FluidResult:
    rows: list        # (eta, seed, sup_distance)
    mean_by_eta: list  # (eta, mean sup_distance) in config order
    ratios: list      # consecutive mean ratios


def fluid_limit_experiment(config: FluidConfig) -> FluidResult:
    rows = []
    for seed in config.seeds:
        mmap, _, dataset = build_world(config.task, seed)
        params0 = network.init_network(prng_new(seed, STREAM_TRAIN),
                                       config.task.ambient_dim, config.hidden)
        rng_frozen = prng_new(seed, STREAM_FROZEN)
        frozen_aug = []
        for zs in (dataset.z_labelled, dataset.z_unlabelled):
            omega = np.zeros_like(zs)
            omega[:, :config.k] = rng_frozen.standard_normal(
                (zs.shape[0], config.k))
            frozen_aug.append(phi_forward_batch(mmap,
                                                zs + config.epsilon * omega))
        xs_aug_lab, xs_aug_unl = frozen_aug
        cfg = TrainConfig(method="pi_model", lam=config.lam, loss=config.loss,
                          hidden=config.hidden, seed=seed,
                          augmentation=AugmentationSpec(epsilon=config.epsilon,
                                                        k=config.k))
        template = network.params_copy(params0)

        def neg_field(vec):
            p = network.vector_to_params(vec, template)
            _, grads = training.frozen_objective_grads(
                p, dataset, xs_aug_lab, xs_aug_unl, config.lam, config.loss)
            return -network.grads_to_vector(grads)

        for eta in config.etas:
            _, ode_states, _ = training.gradient_flow_trajectory(
                cfg, dataset, (xs_aug_lab, xs_aug_unl), dt=eta,
                horizon=config.horizon, params0=params0)
            vec = network.params_to_vector(params0)
            sup_dist = 0.0
            for step in range(ode_states.shape[0] - 1):
                vec = vec + eta * neg_field(vec)
                gap = float(np.linalg.norm(vec - ode_states[step + 1]))
                sup_dist = max(sup_dist, gap)
            rows.append((float(eta), int(seed), sup_dist))
    mean_by_eta = []
    for eta in config.etas:
        dists = [d for e, _, d in rows if e == eta]
        mean_by_eta.append((float(eta), float(np.mean(dists))))
    ratios = [mean_by_eta[i][1] / mean_by_eta[i + 1][1]
              for i in range(len(mean_by_eta) - 1)]
    return FluidResult(rows=rows, mean_by_eta=mean_by_eta, ratios=ratios)


def fluid_csv(result: FluidResult) -> str:
    lines = [FLUID_CSV_HEADER]
    for eta, seed, dist in result.rows:
        lines.append(",".join([repr(eta), str(seed), repr(dist)]))
    return "\n".join(lines) + "\n"
