"""Experiment drivers: seeded, CSV-emitting desk-scale studies.

Each driver consumes an ExperimentSpec (kind, parameter dict, seeds,
output path, format), validates its parameters, runs deterministically,
and returns a (header, rows) table.  `execute` dispatches and writes the
table plus a `<out>.meta.json` sidecar recording every parameter, so a
result file can always be traced back to its configuration.

The only non-seeded column anywhere is compare_heuristics'
score_compute_ms, which is wall-clock by nature; every other value is
byte-reproducible for fixed seeds.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .backbones import BACKBONE_KINDS, BackboneConfig
from .csbm import (
    ClassStats,
    CsbmParams,
    canonical_prototypes,
    homophily_from_target,
    measured_edge_homophily,
    sample_graph,
)
from .datasets import load_dataset, save_dataset
from .graph import NodeProfile, degrees, make_split, profile_counts
from .heuristics import HEURISTIC_NAMES, degree_similarity, heuristic_similarity
from .model import AdGnnConfig, estimated_alpha, log_benefit_scores
from .theory import mc_single_layer_stats, single_layer_stats
from .train import RunResult, TrainConfig, train_model

__all__ = ["KINDS", "ExperimentSpec", "execute"]

KINDS = (
    "generate",
    "train_eval",
    "theory_validate",
    "sweep_homophily",
    "sweep_degree_threshold",
    "sweep_depth",
    "sweep_lambda",
    "profile_depth_benefit",
    "compare_heuristics",
)

_FORMATS = ("csv", "json")

_MULTI_SEED_KINDS = (
    "sweep_homophily",
    "sweep_degree_threshold",
    "sweep_depth",
    "sweep_lambda",
    "compare_heuristics",
)

# experiment-wide CSBM defaults: separable but not trivially so, and small
# enough that a full sweep runs in seconds.  delta_sq is deliberately modest;
# a two-layer pass keeps ~1/d of the raw signal through return walks, so a
# larger separation lets the midpoint of the homophily curve ride that leak
# instead of collapsing.
_CSBM_DEFAULTS = {
    "n0": 1000,
    "n1": 1000,
    "homophily": 0.9,
    "mean_degree": 10.0,
    "delta_sq": 1.0,
    "dim": 8,
    "sigma": 1.0,
}
_CSBM_KEYS = frozenset(_CSBM_DEFAULTS)

_TRAIN_DEFAULTS = {
    "epochs": 150,
    # 0.02 trains the shallow models marginally faster but destabilizes
    # tall trunks: the first Adam step after the initial val peak can be
    # large enough to knock a 32-layer run into a regime it never leaves.
    "lr": 0.01,
    "weight_decay": 0.0,
    "dropout": 0.0,
    "hidden": 16,
    "early_stop_patience": None,
}
_TRAIN_KEYS = frozenset(_TRAIN_DEFAULTS)

_MODEL_DEFAULTS = {
    "model": "plain",
    "kind": "gcn_symnorm",
    "layers": 2,
    "lambda": 0.0,
    "gating": "soft",
    "temperature": 0.1,
    "heuristic_name": "common_neighbors",
    "head_hidden": 16,
    "beta": 1.0,
    "gamma": 1.0,
}
_MODEL_KEYS = frozenset(_MODEL_DEFAULTS)

_MODEL_NAMES = ("plain", "learned", "fast_degree", "heuristic", "modified")


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    parameters: dict = field(default_factory=dict)
    out: Path | None = None
    seeds: tuple[int, ...] = ()
    output_format: str = "csv"

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.output_format not in _FORMATS:
            raise ValueError(f"format must be one of {_FORMATS}")
        if self.out is not None:
            object.__setattr__(self, "out", Path(self.out))
        if not self.seeds:
            default = (0, 1, 2, 3, 4) if self.kind in _MULTI_SEED_KINDS else (0,)
            object.__setattr__(self, "seeds", default)
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


def _check_keys(cfg: dict, allowed: frozenset | set, kind: str) -> None:
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise ValueError(f"unknown config keys for {kind}: {unknown}")


def _csbm_params(cfg: dict, **overrides) -> CsbmParams:
    merged = dict(_CSBM_DEFAULTS)
    merged.update({k: cfg[k] for k in cfg if k in _CSBM_KEYS})
    merged.update(overrides)
    p_in, p_out = homophily_from_target(
        float(merged["homophily"]),
        float(merged["mean_degree"]),
        int(merged["n0"]),
        int(merged["n1"]),
    )
    mu0, mu1 = canonical_prototypes(float(merged["delta_sq"]), int(merged["dim"]))
    return CsbmParams(
        n0=int(merged["n0"]),
        n1=int(merged["n1"]),
        mu0=mu0,
        mu1=mu1,
        sigma=float(merged["sigma"]),
        p_in=p_in,
        p_out=p_out,
    )


def _train_config(cfg: dict, seeds: tuple[int, ...]) -> TrainConfig:
    merged = dict(_TRAIN_DEFAULTS)
    merged.update({k: cfg[k] for k in cfg if k in _TRAIN_KEYS})
    patience = merged["early_stop_patience"]
    return TrainConfig(
        epochs=int(merged["epochs"]),
        lr=float(merged["lr"]),
        weight_decay=float(merged["weight_decay"]),
        dropout=float(merged["dropout"]),
        hidden_dim=int(merged["hidden"]),
        seeds=seeds,
        early_stop_patience=None if patience is None else int(patience),
    )


def _model_config(cfg: dict, tc: TrainConfig, **overrides):
    merged = dict(_MODEL_DEFAULTS)
    merged.update({k: cfg[k] for k in cfg if k in _MODEL_KEYS})
    merged.update(overrides)
    name = merged["model"]
    if name not in _MODEL_NAMES:
        raise ValueError(f"model must be one of {_MODEL_NAMES}")
    if merged["kind"] not in BACKBONE_KINDS:
        raise ValueError(f"kind must be one of {BACKBONE_KINDS}")
    backbone = BackboneConfig(
        kind=merged["kind"],
        layers=int(merged["layers"]),
        hidden_dim=tc.hidden_dim,
        dropout=tc.dropout,
    )
    if name == "plain":
        return backbone
    return AdGnnConfig(
        t_max=int(merged["layers"]),
        backbone=backbone,
        lambda_weight=float(merged["lambda"]),
        variant=name,
        heuristic_name=merged["heuristic_name"],
        gating=merged["gating"],
        temperature=float(merged["temperature"]),
        head_hidden=int(merged["head_hidden"]),
        beta=float(merged["beta"]),
        gamma=float(merged["gamma"]),
    )


def _trained_stats(
    model_cfg,
    params: CsbmParams,
    seeds: tuple[int, ...],
    tc: TrainConfig,
    override_fn=None,
) -> tuple[float, float]:
    """Mean and std of test accuracy; data, split, and init all keyed by
    the same per-run seed."""
    results = []
    for s in seeds:
        data = sample_graph(params, seed=s)
        split = make_split(data[0].num_nodes, seed=s)
        override = None if override_fn is None else override_fn(data[0])
        results.append(
            train_model(model_cfg, data, split, tc, seed=s,
                        depth_override=override)
        )
    run = RunResult(tuple(results))
    return run.mean, run.std


# ---------------------------------------------------------------- drivers


def run_generate(spec: ExperimentSpec) -> tuple[list[str], list[list]]:
    _check_keys(spec.parameters, _CSBM_KEYS, spec.kind)
    if spec.out is None:
        raise ValueError("generate requires an output directory")
    params = _csbm_params(spec.parameters)
    seed = spec.seeds[0]
    graph, features, labels = sample_graph(params, seed=seed)
    meta = {
        "kind": "csbm",
        "seed": seed,
        "n0": params.n0,
        "n1": params.n1,
        "mu0": params.mu0.tolist(),
        "mu1": params.mu1.tolist(),
        "sigma": params.sigma,
        "p_in": params.p_in,
        "p_out": params.p_out,
        "measured_edge_homophily": (
            measured_edge_homophily(graph, labels) if graph.num_edges else None
        ),
        "generator_version": __version__,
    }
    save_dataset(spec.out, graph, features, labels, meta=meta)
    header = ["nodes", "edges", "classes", "edge_homophily"]
    row = [
        graph.num_nodes,
        int(graph.num_edges),
        labels.num_classes,
        meta["measured_edge_homophily"],
    ]
    return header, [row]


def run_train(spec: ExperimentSpec) -> tuple[list[str], list[list]]:
    allowed = _CSBM_KEYS | _TRAIN_KEYS | _MODEL_KEYS | {"data"}
    _check_keys(spec.parameters, allowed, spec.kind)
    cfg = spec.parameters
    tc = _train_config(cfg, spec.seeds)
    model_cfg = _model_config(cfg, tc)
    fixed_data = None
    if "data" in cfg:
        fixed_data = load_dataset(cfg["data"])
    results = []
    for s in spec.seeds:
        data = (
            fixed_data
            if fixed_data is not None
            else sample_graph(_csbm_params(cfg), seed=s)
        )
        split = make_split(data[0].num_nodes, seed=s)
        results.append(train_model(model_cfg, data, split, tc, seed=s))
    header = [
        "seed",
        "test_accuracy",
        "best_val_epoch",
        "best_val_accuracy",
        "mean_stopping_depth",
    ]
    rows = [[r.csv_row()[k] for k in header] for r in results]
    return header, rows


def run_theory_validate(spec: ExperimentSpec) -> tuple[list[str], list[list]]:
    """Single-layer oracle table: analytic signal and noise against Monte
    Carlo estimates.  Profiles with exact signal cancellation (alpha = 0)
    are redrawn, since relative error is undefined at zero analytic
    signal."""
    allowed = {"profiles", "max_degree", "trials", "delta_sq", "sigma_sq", "dim"}
    _check_keys(spec.parameters, allowed, spec.kind)
    cfg = spec.parameters
    count = int(cfg.get("profiles", 50))
    max_degree = int(cfg.get("max_degree", 20))
    trials = int(cfg.get("trials", 100_000))
    stats = ClassStats(
        delta_sq=float(cfg.get("delta_sq", 4.0)),
        sigma_sq=float(cfg.get("sigma_sq", 1.0)),
    )
    dim = int(cfg.get("dim", 8))
    if count < 1 or max_degree < 1:
        raise ValueError("profiles and max_degree must be positive")
    base_seed = spec.seeds[0]
    rng = np.random.default_rng(base_seed)
    header = [
        "d_plus",
        "d_minus",
        "degree",
        "alpha",
        "analytic_signal",
        "mc_signal",
        "analytic_noise",
        "mc_noise",
        "rel_err_signal",
        "rel_err_noise",
    ]
    rows = []
    for i in range(count):
        while True:
            d = int(rng.integers(1, max_degree + 1))
            d_plus = int(rng.integers(0, d + 1))
            if 1 + 2 * d_plus - d != 0:
                break
        profile = NodeProfile(d_plus=d_plus, d_minus=d - d_plus, degree=d)
        analytic = single_layer_stats(profile, stats)
        mc = mc_single_layer_stats(
            profile, stats, trials=trials, seed=base_seed * 1_000_003 + i,
            dim=dim,
        )
        alpha = (1 + profile.d_plus - profile.d_minus) / (d + 1)
        rows.append([
            profile.d_plus,
            profile.d_minus,
            d,
            alpha,
            analytic.signal_variance,
            mc.signal_variance,
            analytic.noise_variance,
            mc.noise_variance,
            abs(mc.signal_variance - analytic.signal_variance)
            / analytic.signal_variance,
            abs(mc.noise_variance - analytic.noise_variance)
            / analytic.noise_variance,
        ])
    return header, rows


def run_sweep_homophily(spec: ExperimentSpec) -> tuple[list[str], list[list]]:
    allowed = (
        (_CSBM_KEYS - {"homophily"}) | _TRAIN_KEYS | {"grid", "kind", "layers"}
    )
    _check_keys(spec.parameters, allowed, spec.kind)
    cfg = spec.parameters
    grid = [float(h) for h in cfg.get("grid", (0.0, 0.25, 0.5, 0.75, 1.0))]
    if any(h < 0.0 or h > 1.0 for h in grid):
        raise ValueError("homophily grid must lie in [0, 1]")
    tc = _train_config(cfg, spec.seeds)
    model_cfg = _model_config(cfg, tc, model="plain")
    rows = []
    for h in grid:
        params = _csbm_params(cfg, homophily=h)
        mean, std = _trained_stats(model_cfg, params, spec.seeds, tc)
        rows.append([h, mean, std])
    return ["homophily", "acc_mean", "acc_std"], rows


def run_sweep_degree_threshold(spec: ExperimentSpec) -> tuple[list[str], list[list]]:
    """Strong-heterophily sweep where nodes at or below a degree cutoff are
    forced to keep their raw features (stopping depth 0) while everyone
    else runs full depth."""
    allowed = _CSBM_KEYS | _TRAIN_KEYS | {"thresholds", "kind", "layers"}
    _check_keys(spec.parameters, allowed, spec.kind)
    cfg = spec.parameters
    thresholds = [int(t) for t in cfg.get("thresholds", (0, 2, 4, 6))]
    if any(t < 0 for t in thresholds):
        raise ValueError("degree thresholds must be non-negative")
    tc = _train_config(cfg, spec.seeds)
    # lower default degree than the other sweeps so the forced-raw
    # population is large enough to move aggregate accuracy, and wider
    # class separation so keeping raw features is actually worth something
    base = {"homophily": 0.0, "mean_degree": 5.0, "delta_sq": 2.0}
    base.update({k: cfg[k] for k in cfg if k in _CSBM_KEYS})
    params = _csbm_params(base)
    model_cfg = _model_config(cfg, tc, model="fast_degree", gating="hard")
    t_max = model_cfg.t_max
    rows = []
    for threshold in thresholds:
        def override_fn(graph, _cut=threshold):
            deg = degrees(graph)
            return np.where(deg <= _cut, 0, t_max)

        mean, std = _trained_stats(
            model_cfg, params, spec.seeds, tc, override_fn=override_fn
        )
        rows.append([threshold, mean, std])
    return ["threshold", "acc_mean", "acc_std"], rows


def run_sweep_depth(spec: ExperimentSpec) -> tuple[list[str], list[list]]:
    allowed = _CSBM_KEYS | _TRAIN_KEYS | _MODEL_KEYS | {"depths"}
    _check_keys(spec.parameters, allowed, spec.kind)
    cfg = spec.parameters
    depths = [int(d) for d in cfg.get("depths", (1, 2, 4, 8, 16, 32))]
    if any(d < 1 for d in depths):
        raise ValueError("depths must be positive")
    tc = _train_config(cfg, spec.seeds)
    params = _csbm_params(cfg)
    adaptive_name = cfg.get("model", "learned")
    if adaptive_name == "plain":
        raise ValueError("sweep_depth compares plain against an adaptive model")
    rows = []
    for depth in depths:
        for name in ("plain", "adaptive"):
            model = "plain" if name == "plain" else adaptive_name
            model_cfg = _model_config(cfg, tc, model=model, layers=depth)
            mean, std = _trained_stats(model_cfg, params, spec.seeds, tc)
            rows.append([depth, name, mean, std])
    return ["depth", "model", "acc_mean", "acc_std"], rows


def run_sweep_lambda(spec: ExperimentSpec) -> tuple[list[str], list[list]]:
    allowed = _CSBM_KEYS | _TRAIN_KEYS | _MODEL_KEYS | {"lambdas", "data"}
    _check_keys(spec.parameters, allowed, spec.kind)
    cfg = spec.parameters
    lambdas = [float(v) for v in cfg.get("lambdas", (0.0, 0.25, 0.5, 0.75, 1.0))]
    if any(v < 0.0 or v > 1.0 for v in lambdas):
        raise ValueError("lambda grid must lie in [0, 1]")
    tc = _train_config(cfg, spec.seeds)
    fixed_data = load_dataset(cfg["data"]) if "data" in cfg else None
    params = None if fixed_data is not None else _csbm_params(cfg)
    adaptive_name = cfg.get("model", "learned")
    if adaptive_name == "plain":
        raise ValueError("sweep_lambda requires an adaptive model")
    rows = []
    for lam in lambdas:
        model_cfg = _model_config(
            cfg, tc, model=adaptive_name, **{"lambda": lam}
        )
        if fixed_data is not None:
            results = []
            for s in spec.seeds:
                split = make_split(fixed_data[0].num_nodes, seed=s)
                results.append(
                    train_model(model_cfg, fixed_data, split, tc, seed=s)
                )
            run = RunResult(tuple(results))
            mean, std = run.mean, run.std
        else:
            mean, std = _trained_stats(model_cfg, params, spec.seeds, tc)
        rows.append([lam, mean, std])
    return ["lambda", "acc_mean", "acc_std"], rows


def run_profile_depth_benefit(spec: ExperimentSpec) -> tuple[list[str], list[list]]:
    """Label-oracle depth-benefit profile: per-degree mean of the log
    depth benefit.  Nodes with exact signal cancellation (benefit 0, log
    -inf) cannot be averaged with the rest and land in a sentinel bucket
    keyed degree=-1."""
    allowed = _CSBM_KEYS | {"n_layers"}
    _check_keys(spec.parameters, allowed, spec.kind)
    cfg = spec.parameters
    n_layers = int(cfg.get("n_layers", 2))
    if n_layers < 1:
        raise ValueError("n_layers must be positive")
    params = _csbm_params(cfg)
    graph, _, labels = sample_graph(params, seed=spec.seeds[0])
    d_plus, d_minus, deg = profile_counts(graph, labels)
    alpha = estimated_alpha(
        d_plus.astype(np.float64), d_minus.astype(np.float64), deg
    )
    scores = log_benefit_scores(alpha, deg, n_layers)
    finite = np.isfinite(scores)
    rows = []
    if (~finite).any():
        rows.append([-1, float("-inf"), int((~finite).sum())])
    for degree in np.unique(deg[finite]):
        bucket = scores[finite & (deg == degree)]
        rows.append([int(degree), float(bucket.mean()), int(bucket.size)])
    return ["degree", "mean_log_benefit", "node_count"], rows


def run_compare_heuristics(spec: ExperimentSpec) -> tuple[list[str], list[list]]:
    """Accuracy and score-computation cost per similarity source, on one
    fixed dataset.  'degree' runs the fast variant; the other names run
    the heuristic variant.  score_compute_ms is the best of
    timing_repeats wall-clock measurements."""
    allowed = (
        _CSBM_KEYS
        | _TRAIN_KEYS
        | {"heuristics", "kind", "layers", "gating", "temperature",
           "lambda", "data_seed", "timing_repeats"}
    )
    _check_keys(spec.parameters, allowed, spec.kind)
    cfg = spec.parameters
    names = list(cfg.get("heuristics", list(HEURISTIC_NAMES) + ["degree"]))
    if not names:
        raise ValueError("heuristic list must be nonempty")
    for name in names:
        if name != "degree" and name not in HEURISTIC_NAMES:
            raise ValueError(
                f"unknown heuristic {name!r}; choose from "
                f"{HEURISTIC_NAMES + ('degree',)}"
            )
    repeats = int(cfg.get("timing_repeats", 3))
    tc = _train_config(cfg, spec.seeds)
    params = _csbm_params(cfg)
    data = sample_graph(params, seed=int(cfg.get("data_seed", 0)))
    graph = data[0]
    rows = []
    for name in names:
        if name == "degree":
            model_cfg = _model_config(cfg, tc, model="fast_degree")
            score_fn = lambda: degree_similarity(graph)  # noqa: E731
        else:
            model_cfg = _model_config(
                cfg, tc, model="heuristic", heuristic_name=name
            )
            score_fn = lambda n=name: heuristic_similarity(graph, n)  # noqa: E731
        elapsed = []
        for _ in range(max(1, repeats)):
            start = time.perf_counter()
            score_fn()
            elapsed.append(time.perf_counter() - start)
        results = []
        for s in spec.seeds:
            split = make_split(graph.num_nodes, seed=s)
            results.append(train_model(model_cfg, data, split, tc, seed=s))
        run = RunResult(tuple(results))
        rows.append([name, run.mean, run.std, min(elapsed) * 1000.0])
    return ["heuristic", "acc_mean", "acc_std", "score_compute_ms"], rows


_DISPATCH = {
    "generate": run_generate,
    "train_eval": run_train,
    "theory_validate": run_theory_validate,
    "sweep_homophily": run_sweep_homophily,
    "sweep_degree_threshold": run_sweep_degree_threshold,
    "sweep_depth": run_sweep_depth,
    "sweep_lambda": run_sweep_lambda,
    "profile_depth_benefit": run_profile_depth_benefit,
    "compare_heuristics": run_compare_heuristics,
}


def _write_table(spec: ExperimentSpec, header: list[str], rows: list[list]) -> None:
    out = spec.out
    out.parent.mkdir(parents=True, exist_ok=True)
    if spec.output_format == "csv":
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    else:
        payload = [dict(zip(header, row)) for row in rows]
        with open(out, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    sidecar = out.with_name(out.name + ".meta.json")
    meta = {
        "kind": spec.kind,
        "parameters": spec.parameters,
        "seeds": list(spec.seeds),
        "format": spec.output_format,
        "header": header,
        "package_version": __version__,
        "numpy_version": np.__version__,
    }
    with open(sidecar, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def execute(spec: ExperimentSpec) -> tuple[list[str], list[list]]:
    """Run one experiment; writes results (and the meta sidecar) when the
    spec carries an output path.  generate writes a dataset directory
    instead of a table."""
    header, rows = _DISPATCH[spec.kind](spec)
    if spec.kind != "generate" and spec.out is not None:
        _write_table(spec, header, rows)
    return header, rows
