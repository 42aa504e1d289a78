"""Configuration-driven experiment runners with reproducible reports.

Every experiment is described by a JSON config validated against the
packaged schema, runs to a RunLog of plain scalar rows, and is emitted as
CSV/JSON (optionally SVG) whose bytes depend only on the config and seed
list.  Seeds (and grid cells) are independent work units, so a process
pool with N workers produces exactly the serial result.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .beta import compute_beta, psi_d, verify_identity
from .dynamics import (
    act_moments,
    act_slope_on_geodesics,
    column_angles,
    gate_moments,
    gate_slope_on_geodesics,
    mixed_two_layer_init,
    monitor_hypotheses,
    quadratic_falloff_probe,
    reduced_teacher,
    spare_row_gap,
    step_two_layer,
    two_layer_constants,
    two_layer_moments,
)
from .errors import (
    ConfigurationError,
    DegenerateBatchError,
    NumericError,
    PreconditionError,
)
from .metrics import bn_bias_audit, mean_rank, rho_bar, rho_matrix, v_row_norms
from .net import (
    Network,
    NetworkSpec,
    backward,
    build_network,
    forward,
    from_json,
    sgd_step,
    squared_loss,
    to_json,
)
from .teachers import (
    GausStream,
    StudentInit,
    TeacherSpec,
    make_student,
    make_teacher,
    next_batch,
    teacher_labels,
)

KINDS = (
    "verify_identity",
    "train",
    "overparam_grid",
    "ablate_size",
    "ablate_overparam",
    "ablate_finite",
    "lottery",
    "bn_audit",
    "psi_check",
    "falloff_probe",
)

# Role offsets keep the init, the training stream, and the evaluation
# stream statistically independent while still derived from one run seed.
TRAIN_STREAM_OFF = 10_000
VAL_STREAM_OFF = 20_000
REINIT_OFF = 30_000
RETRAIN_STREAM_OFF = 40_000

VAL_BATCH = 2048
DIVERGENCE_LOSS = 1e6

_DEFAULTS: dict = {
    "seeds": [0],
    "eta": 0.01,
    "epochs": 100,
    "batches_per_epoch": 100,
    "batch_size": 128,
    "mode": "free-run",
    "workers": 1,
    "teacher": {
        "layer_widths": [20, 10, 15, 20, 25],
        "weight_grid": [-0.5, -0.25, 0.25, 0.5],
        "bias_range": [-0.5, 0.5],
        "seed": 0,
    },
    "student": {
        "overparam_factor": 10,
        "p_w": 0.0,
        "p_v": 0.0,
        "bn_mode": "none",
    },
    "stream": {"std": 10.0, "mode": "infinite", "n_samples": 0},
    "grid": {
        "dim": 10,
        "teacher_width": 20,
        "outputs": 30,
        "teacher_seed": 0,
        "overparams": [2, 5, 10],
        "cells": [[10.0, 10.0], [10.0, 0.0], [0.0, 10.0], [0.0, 0.0]],
        "iterations": 2000,
        "n_mc": 1024,
        "eta": 0.05,
        "tau": 0.0,
        "record_every": 20,
        "monitor_every": 50,
        "probe_n": 50000,
    },
    "ablate": {
        "archs": [[20, 10, 15, 20, 25], [20, 50, 75, 100, 125]],
        "bn_modes": ["none", "linear_relu_bn"],
        "factors": [1, 2, 5, 10, 20, 50],
        "finite_sizes": [512],
    },
    "lottery": {"retrain_epochs": 0},
    "falloff": {
        "dim": 20,
        "scales": [0.02, 0.05, 0.1, 0.2],
        "n": 200000,
        "n_directions": 4,
    },
    "psi": {
        "angles": [0.5235987755982988, 1.0471975511965976, 1.5707963267948966],
        "n": 200000,
    },
    "verify": {"n_trials": 20, "tol": 1e-10},
}

_KIND_OVERRIDES: dict = {
    "bn_audit": {"student": {"bn_mode": "linear_relu_bn"}},
}

_SCHEMA: dict | None = None


def _schema() -> dict:
    global _SCHEMA
    if _SCHEMA is None:
        text = resources.files("reludyn").joinpath("config_schema.json").read_text()
        _SCHEMA = json.loads(text)
    return _SCHEMA


def config_hash(data: dict) -> str:
    """Stable short digest of a config: canonical JSON, sorted keys.

    The worker count is execution plumbing, not experiment identity, so
    it never enters the digest: serial and pooled runs of one config
    must produce byte-identical summaries, hash column included.
    """
    data = {k: v for k, v in data.items() if k != "workers"}
    canon = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, default-filled experiment description."""

    kind: str
    seeds: tuple[int, ...]
    eta: float
    epochs: int
    batches_per_epoch: int
    batch_size: int
    mode: str
    workers: int
    teacher: dict
    student: dict
    stream: dict
    grid: dict
    ablate: dict
    lottery: dict
    falloff: dict
    psi: dict
    verify: dict
    raw: dict
    config_hash: str


def make_config(data: dict) -> ExperimentConfig:
    """Validate a raw config dict against the schema and fill defaults."""
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a JSON object")
    try:
        jsonschema.validate(data, _schema())
    except jsonschema.ValidationError as exc:
        raise ConfigurationError(f"config rejected: {exc.message}") from exc
    kind = data["kind"]
    merged = _merge(_DEFAULTS, _KIND_OVERRIDES.get(kind, {}))
    merged = _merge(merged, data)
    merged["kind"] = kind
    if kind == "lottery" and merged["student"]["bn_mode"] != "none":
        raise ConfigurationError(
            "pruning zeroes whole channels and degenerates batch statistics; "
            "lottery runs require bn_mode none"
        )
    return ExperimentConfig(
        kind=kind,
        seeds=tuple(int(s) for s in merged["seeds"]),
        eta=float(merged["eta"]),
        epochs=int(merged["epochs"]),
        batches_per_epoch=int(merged["batches_per_epoch"]),
        batch_size=int(merged["batch_size"]),
        mode=str(merged["mode"]),
        workers=int(merged["workers"]),
        teacher=merged["teacher"],
        student=merged["student"],
        stream=merged["stream"],
        grid=merged["grid"],
        ablate=merged["ablate"],
        lottery=merged["lottery"],
        falloff=merged["falloff"],
        psi=merged["psi"],
        verify=merged["verify"],
        raw=merged,
        config_hash=config_hash(merged),
    )


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config file.  OS errors propagate."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
    return make_config(data)


@dataclass
class RunLog:
    """Everything one experiment produced, ready for emission.

    Rows hold only str/int/float/bool/None so the CSV bytes are a pure
    function of the values; wall_clock is reported in meta only and never
    enters a CSV.
    """

    kind: str
    config: dict
    config_hash: str
    rows: list[dict]
    aggregates: list[dict] = field(default_factory=list)
    tables: dict[str, list[dict]] = field(default_factory=dict)
    ledgers: dict = field(default_factory=dict)
    assumptions: list[dict] = field(default_factory=list)
    wall_clock: float = 0.0
    failed: bool = False


# ----------------------------------------------------------- aggregation


def _numeric_keys(rows: list[dict], skip: set[str]) -> list[str]:
    keys: list[str] = []
    for row in rows:
        for k, v in row.items():
            if k in skip or k in keys:
                continue
            if isinstance(v, bool):
                continue
            if isinstance(v, (int, float)):
                keys.append(k)
    return keys


def _grouped(rows: list[dict], by: tuple[str, ...]):
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = tuple(row.get(k) for k in by)
        groups.setdefault(key, []).append(row)
    return sorted(groups.items(), key=lambda kv: kv[0])


def _aggregate(rows: list[dict], by: tuple[str, ...], stats: str) -> list[dict]:
    if not rows:
        return []
    metrics = _numeric_keys(rows, set(by) | {"seed"})
    out = []
    for key, grp in _grouped(rows, by):
        agg = dict(zip(by, key))
        agg["n_seeds"] = len({r.get("seed") for r in grp})
        for k in metrics:
            vals = [r[k] for r in grp if k in r]
            if not vals:
                continue
            if stats == "minmax":
                agg[f"{k}_min"] = float(min(vals))
                agg[f"{k}_max"] = float(max(vals))
            else:
                agg[f"{k}_mean"] = float(np.mean(vals))
                agg[f"{k}_std"] = float(np.std(vals))
        out.append(agg)
    return out


def _parallel_map(fn, payloads: list, workers: int) -> list:
    if workers <= 1 or len(payloads) <= 1:
        return [fn(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, payloads))


def _derive_seed(*parts: int) -> int:
    """Deterministic child seed from a tuple of role/unit tags."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


# ------------------------------------------------------- training runner


def _run_training(teacher: Network, student: Network, *, eta: float,
                  epochs: int, batches_per_epoch: int, batch_size: int,
                  stream_cfg: dict, stream_seed: int, val_seed: int):
    """SGD on teacher soft targets; per-epoch metric rows.

    Epoch 0 is the untouched initialization.  A loss above the divergence
    cutoff (or a numeric failure inside an epoch) marks the run diverged
    and stops it; rows up to and including that epoch are kept.
    """
    dim = teacher.spec.layer_widths[0]
    train_stream = GausStream(
        dim=dim, std=stream_cfg["std"], mode=stream_cfg["mode"],
        n_samples=stream_cfg["n_samples"], seed=stream_seed,
    )
    val_x = next_batch(
        GausStream(dim=dim, std=stream_cfg["std"], mode="infinite",
                   seed=val_seed),
        VAL_BATCH,
    )
    val_t = forward(teacher, val_x)
    n_hidden = student.n_layers - 1
    checkpoints: list[list] = [[] for _ in range(n_hidden)]
    rows: list[dict] = []
    diverged = False
    # overflow on the way to the divergence cutoff is an expected,
    # reported outcome, not a numeric bug worth a warning storm
    for epoch in range(epochs + 1):
        if epoch > 0:
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    for _ in range(batches_per_epoch):
                        x = next_batch(train_stream, batch_size)
                        tr = forward(student, x)
                        grads = backward(
                            student, tr, teacher_labels(teacher, x)
                        )
                        student = sgd_step(student, grads, eta)
            except (NumericError, DegenerateBatchError):
                diverged = True
        with np.errstate(over="ignore", invalid="ignore"):
            tr_s = forward(student, val_x)
            loss = float(squared_loss(tr_s.outputs, val_t.outputs))
            if not math.isfinite(loss) or loss > DIVERGENCE_LOSS:
                diverged = True
            row = {"epoch": epoch, "loss": loss, "diverged": int(diverged)}
            for h in range(n_hidden):
                cm = rho_matrix(tr_s.act[h], val_t.act[h])
                checkpoints[h].append(cm)
                row[f"rho_bar_l{h}"] = float(rho_bar(cm).value)
                vr = v_row_norms(student, h)
                row[f"v_l{h}_min"] = float(vr.min())
                row[f"v_l{h}_max"] = float(vr.max())
                row[f"v_l{h}_mean"] = float(vr.mean())
        rows.append(row)
        if diverged:
            break
    for h in range(n_hidden):
        if len(checkpoints[h]) < 2:
            continue
        try:
            series = mean_rank(checkpoints[h])
        except PreconditionError:
            continue
        for i in range(len(rows)):
            rows[i][f"r_bar_l{h}"] = float(series[i])
    finals = [cps[-1] for cps in checkpoints]
    return rows, student, finals, diverged


def _train_unit(payload: dict) -> dict:
    teacher = make_teacher(TeacherSpec(**payload["teacher"]))
    if payload.get("net_json") is not None:
        student = from_json(payload["net_json"])
    else:
        s = payload["student"]
        student = make_student(
            teacher,
            StudentInit(
                overparam_factor=s["overparam_factor"],
                p_w=s["p_w"], p_v=s["p_v"], seed=payload["init_seed"],
            ),
            bn_mode=s["bn_mode"],
        )
    rows, trained, finals, diverged = _run_training(
        teacher, student,
        eta=payload["eta"], epochs=payload["epochs"],
        batches_per_epoch=payload["batches_per_epoch"],
        batch_size=payload["batch_size"], stream_cfg=payload["stream"],
        stream_seed=payload["stream_seed"], val_seed=payload["val_seed"],
    )
    tagged = [dict(payload["tags"], seed=payload["seed"], **r) for r in rows]
    out = {
        "seed": payload["seed"], "tags": payload["tags"],
        "rows": tagged, "diverged": diverged,
    }
    if payload.get("return_net"):
        out["net"] = to_json(trained)
        out["rho"] = [cm.rho for cm in finals]
    return out


def _train_payload(cfg: ExperimentConfig, seed: int, *, teacher=None,
                   student=None, stream=None, tags=None, epochs=None,
                   stream_seed=None, init_seed=None, net_json=None,
                   return_net=False) -> dict:
    return {
        "seed": seed,
        "teacher": teacher if teacher is not None else cfg.teacher,
        "student": student if student is not None else cfg.student,
        "stream": stream if stream is not None else cfg.stream,
        "tags": tags or {},
        "eta": cfg.eta,
        "epochs": cfg.epochs if epochs is None else epochs,
        "batches_per_epoch": cfg.batches_per_epoch,
        "batch_size": cfg.batch_size,
        "stream_seed": (seed + TRAIN_STREAM_OFF if stream_seed is None
                        else stream_seed),
        "val_seed": seed + VAL_STREAM_OFF,
        "init_seed": seed if init_seed is None else init_seed,
        "net_json": net_json,
        "return_net": return_net,
    }


def run_train(cfg: ExperimentConfig) -> RunLog:
    """Train one student per seed; emit per-epoch metrics and min/max."""
    t0 = time.perf_counter()
    payloads = [_train_payload(cfg, seed) for seed in cfg.seeds]
    results = _parallel_map(_train_unit, payloads, cfg.workers)
    rows = [r for res in results for r in res["rows"]]
    assumptions = [
        {"seed": res["seed"], "diverged": bool(res["diverged"])}
        for res in results
    ]
    return RunLog(
        kind=cfg.kind, config=cfg.raw, config_hash=cfg.config_hash,
        rows=rows, aggregates=_aggregate(rows, ("epoch",), "minmax"),
        assumptions=assumptions, wall_clock=time.perf_counter() - t0,
    )


def run_bn_audit(cfg: ExperimentConfig) -> RunLog:
    """Train under BN and report the sign split of the learned shifts."""
    t0 = time.perf_counter()
    payloads = [_train_payload(cfg, seed, return_net=True) for seed in cfg.seeds]
    results = _parallel_map(_train_unit, payloads, cfg.workers)
    rows = [r for res in results for r in res["rows"]]
    bias_rows, hist_rows = [], []
    for res in results:
        net = from_json(res["net"])
        for rep in bn_bias_audit(net):
            bias_rows.append({
                "seed": res["seed"], "layer": rep.layer,
                "n_negative": rep.n_negative, "n_positive": rep.n_positive,
            })
            for b in range(len(rep.counts)):
                hist_rows.append({
                    "seed": res["seed"], "layer": rep.layer, "bin": b,
                    "lo": float(rep.bin_edges[b]),
                    "hi": float(rep.bin_edges[b + 1]),
                    "count": int(rep.counts[b]),
                })
    return RunLog(
        kind=cfg.kind, config=cfg.raw, config_hash=cfg.config_hash,
        rows=rows, aggregates=_aggregate(rows, ("epoch",), "minmax"),
        tables={"bn_bias": bias_rows, "bn_bias_hist": hist_rows},
        wall_clock=time.perf_counter() - t0,
    )


def run_ablations(cfg: ExperimentConfig) -> RunLog:
    """Size, over-parameterization, and finite-data ablations."""
    t0 = time.perf_counter()
    payloads = []
    if cfg.kind == "ablate_size":
        for widths in cfg.ablate["archs"]:
            arch = "-".join(str(w) for w in widths)
            for bn in cfg.ablate["bn_modes"]:
                for seed in cfg.seeds:
                    payloads.append(_train_payload(
                        cfg, seed,
                        teacher=dict(cfg.teacher, layer_widths=list(widths)),
                        student=dict(cfg.student, bn_mode=bn),
                        tags={"arch": arch, "bn_mode": bn},
                    ))
        by, stats = ("arch", "bn_mode", "epoch"), "minmax"
    elif cfg.kind == "ablate_overparam":
        for factor in cfg.ablate["factors"]:
            for seed in cfg.seeds:
                # a fresh teacher per seed: the band statistics are over
                # (teacher, init) draws, not one fixed teacher
                payloads.append(_train_payload(
                    cfg, seed,
                    teacher=dict(cfg.teacher, seed=cfg.teacher["seed"] + seed),
                    student=dict(cfg.student, overparam_factor=int(factor)),
                    tags={"factor": int(factor)},
                ))
        by, stats = ("factor", "epoch"), "meanstd"
    elif cfg.kind == "ablate_finite":
        for size in list(cfg.ablate["finite_sizes"]) + [0]:
            stream = dict(
                cfg.stream,
                mode="finite" if size else "infinite",
                n_samples=int(size),
            )
            for seed in cfg.seeds:
                payloads.append(_train_payload(
                    cfg, seed, stream=stream, tags={"samples": int(size)},
                ))
        by, stats = ("samples", "epoch"), "minmax"
    else:
        raise ConfigurationError(f"not an ablation kind: {cfg.kind}")
    results = _parallel_map(_train_unit, payloads, cfg.workers)
    rows = [r for res in results for r in res["rows"]]
    assumptions = [
        {"seed": res["seed"], "tags": res["tags"],
         "diverged": bool(res["diverged"])}
        for res in results
    ]
    return RunLog(
        kind=cfg.kind, config=cfg.raw, config_hash=cfg.config_hash,
        rows=rows, aggregates=_aggregate(rows, by, stats),
        assumptions=assumptions, wall_clock=time.perf_counter() - t0,
    )


# --------------------------------------------------------------- lottery


def _greedy_winners(rho: np.ndarray) -> dict[int, int]:
    """Distinct best student per teacher column, strongest pairs first.

    Ties break toward smaller indices, so the assignment is deterministic.
    """
    n_s, n_t = rho.shape
    order = sorted(
        (-float(rho[i, j]), i, j) for i in range(n_s) for j in range(n_t)
    )
    assigned: dict[int, int] = {}
    used: set[int] = set()
    for _, i, j in order:
        if j in assigned or i in used:
            continue
        assigned[j] = i
        used.add(i)
        if len(assigned) == n_t:
            break
    return assigned


def _prune_to(net: Network, keep: list[list[int]]) -> Network:
    """Zero the fan-in column, bias, and fan-out row of dropped nodes.

    A zeroed hidden node never fires and its gradient is identically
    zero, so it stays dead through any further plain-SGD training.
    """
    weights = [w.copy() for w in net.weights]
    biases = [None if b is None else b.copy() for b in net.biases]
    for h, kept in enumerate(keep):
        width = net.spec.layer_widths[h + 1]
        drop = sorted(set(range(width)) - set(kept))
        if not drop:
            continue
        weights[h][:, drop] = 0.0
        if biases[h] is not None:
            biases[h][drop] = 0.0
        weights[h + 1][drop, :] = 0.0
    return build_network(net.spec, weights, biases)


def _lottery_unit(payload: dict) -> dict:
    seed = payload["seed"]
    teacher = make_teacher(TeacherSpec(**payload["teacher"]))
    s = payload["student"]
    student0 = make_student(
        teacher,
        StudentInit(overparam_factor=s["overparam_factor"],
                    p_w=s["p_w"], p_v=s["p_v"], seed=seed),
        bn_mode="none",
    )
    common = dict(
        eta=payload["eta"], batches_per_epoch=payload["batches_per_epoch"],
        batch_size=payload["batch_size"], stream_cfg=payload["stream"],
        val_seed=seed + VAL_STREAM_OFF,
    )
    base_rows, _, finals, _ = _run_training(
        teacher, student0, epochs=payload["epochs"],
        stream_seed=seed + TRAIN_STREAM_OFF, **common,
    )
    keep, contested = [], []
    for cm in finals:
        win = _greedy_winners(cm.rho)
        keep.append(sorted(win.values()))
        best = [int(np.argmax(cm.rho[:, j])) for j in range(cm.rho.shape[1])]
        contested.append(len(best) - len(set(best)))
    fresh = make_student(
        teacher,
        StudentInit(overparam_factor=s["overparam_factor"],
                    p_w=s["p_w"], p_v=s["p_v"], seed=seed + REINIT_OFF),
        bn_mode="none",
    )
    arms = (
        ("winners_reset", _prune_to(student0, keep)),
        ("winners_reinit", _prune_to(fresh, keep)),
        ("baseline", student0),
    )
    rows = [dict(seed=seed, arm="base", **r) for r in base_rows]
    summaries = []
    for arm, net0 in arms:
        a_rows, _, _, a_div = _run_training(
            teacher, net0, epochs=payload["retrain_epochs"],
            stream_seed=seed + RETRAIN_STREAM_OFF, **common,
        )
        rows.extend(dict(seed=seed, arm=arm, **r) for r in a_rows)
        summary = {
            "seed": seed, "arm": arm,
            "final_loss": a_rows[-1]["loss"], "diverged": int(a_div),
        }
        for h in range(len(keep)):
            summary[f"rho_bar_l{h}"] = a_rows[-1].get(f"rho_bar_l{h}")
            summary[f"n_winners_l{h}"] = len(keep[h])
            summary[f"n_contested_l{h}"] = contested[h]
        summaries.append(summary)
    return {"seed": seed, "rows": rows, "arms": summaries}


def run_lottery(cfg: ExperimentConfig) -> RunLog:
    """Reset-and-prune study: winners-reset vs winners-reinit vs baseline.

    Winners are one distinct student node per teacher node, picked by
    final correlation after a base training run; the same retrain stream
    feeds all three arms so the comparison is paired.
    """
    t0 = time.perf_counter()
    retrain = cfg.lottery["retrain_epochs"] or cfg.epochs
    payloads = []
    for seed in cfg.seeds:
        p = _train_payload(cfg, seed)
        p["retrain_epochs"] = int(retrain)
        payloads.append(p)
    results = _parallel_map(_lottery_unit, payloads, cfg.workers)
    rows = [r for res in results for r in res["rows"]]
    arms = [a for res in results for a in res["arms"]]
    return RunLog(
        kind=cfg.kind, config=cfg.raw, config_hash=cfg.config_hash,
        rows=rows, aggregates=_aggregate(rows, ("arm", "epoch"), "minmax"),
        tables={"arms": arms}, wall_clock=time.perf_counter() - t0,
    )


# ------------------------------------------------------ checking runners


def _random_net(rng: np.random.Generator, widths: list[int],
                bias: bool) -> Network:
    spec = NetworkSpec(
        layer_widths=tuple(widths), bn_mode="none",
        has_bias=(bias,) * (len(widths) - 1),
    )
    weights = [
        rng.normal(0.0, 1.0 / math.sqrt(widths[li]),
                   size=(widths[li], widths[li + 1]))
        for li in range(len(widths) - 1)
    ]
    biases = [
        rng.uniform(-0.5, 0.5, size=widths[li + 1]) if bias else None
        for li in range(len(widths) - 1)
    ]
    return build_network(spec, weights, biases)


def run_verify_identity(cfg: ExperimentConfig) -> RunLog:
    """Exactness check of the gradient decomposition on random pairs.

    Residuals are reported relative to the largest node gradient; any
    trial over tolerance marks the whole log failed.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seeds[0])
    tol = float(cfg.verify["tol"])
    rows = []
    for trial in range(int(cfg.verify["n_trials"])):
        depth = int(rng.integers(2, 5))
        d_in = int(rng.integers(3, 13))
        d_out = int(rng.integers(3, 9))
        s_widths = [d_in] + [int(rng.integers(4, 25)) for _ in range(depth - 1)] + [d_out]
        t_widths = [d_in] + [int(rng.integers(4, 25)) for _ in range(depth - 1)] + [d_out]
        bias = bool(rng.integers(0, 2))
        student = _random_net(rng, s_widths, bias)
        teacher = _random_net(rng, t_widths, bias)
        x = rng.normal(0.0, 1.0, size=(int(rng.integers(4, 25)), d_in))
        tr_s, tr_t = forward(student, x), forward(teacher, x)
        grads = backward(student, tr_s, tr_t.outputs)
        betas = compute_beta(student, teacher, tr_s, tr_t)
        resid = verify_identity(betas, tr_s, tr_t, grads)
        gmax = max(float(np.abs(g).max()) for g in grads.node)
        rel = resid / gmax if gmax > 0 else 0.0
        rows.append({
            "seed": cfg.seeds[0], "trial": trial,
            "student": "-".join(str(w) for w in s_widths),
            "teacher": "-".join(str(w) for w in t_widths),
            "bias": int(bias), "residual": float(rel),
            "ok": int(rel < tol),
        })
    failed = any(not r["ok"] for r in rows)
    return RunLog(
        kind=cfg.kind, config=cfg.raw, config_hash=cfg.config_hash,
        rows=rows, failed=failed, wall_clock=time.perf_counter() - t0,
    )


def run_psi_check(cfg: ExperimentConfig) -> RunLog:
    """Joint-firing moment vs the closed form (pi - angle) / 2 pi."""
    t0 = time.perf_counter()
    n = int(cfg.psi["n"])
    rows = []
    for seed in cfg.seeds:
        for i, angle in enumerate(cfg.psi["angles"]):
            stream = GausStream(dim=2, std=1.0,
                                seed=_derive_seed(50, seed, i))
            w1 = np.array([1.0, 0.0])
            w2 = np.array([math.cos(angle), math.sin(angle)])
            val, err = psi_d(w1, w2, stream, n)
            ref = (math.pi - angle) / (2.0 * math.pi)
            rows.append({
                "seed": seed, "trial": i, "angle": float(angle),
                "psi_d": float(val), "stderr": float(err),
                "closed_form": ref,
                "ok": int(abs(val - ref) <= 4.0 * err + 1e-12),
            })
        stream = GausStream(dim=2, std=1.0, seed=_derive_seed(51, seed))
        w1 = np.array([1.0, 0.0])
        val, err = psi_d(w1, w1, stream, n)
        rows.append({
            "seed": seed, "trial": -1, "angle": 0.0,
            "psi_d": float(val), "stderr": float(err), "closed_form": 0.5,
            "ok": int(abs(val - 0.5) <= 4.0 * err + 1e-12),
        })
    failed = any(not r["ok"] for r in rows)
    return RunLog(
        kind=cfg.kind, config=cfg.raw, config_hash=cfg.config_hash,
        rows=rows, failed=failed, wall_clock=time.perf_counter() - t0,
    )


def run_falloff(cfg: ExperimentConfig) -> RunLog:
    """Perturbation-response exponent of the diagonal activation moment."""
    t0 = time.perf_counter()
    f = cfg.falloff
    rows, points = [], []
    for seed in cfg.seeds:
        rng = np.random.default_rng(seed)
        w_star = rng.normal(size=int(f["dim"]))
        w_star /= np.linalg.norm(w_star)
        stream = GausStream(dim=int(f["dim"]), std=1.0,
                            seed=_derive_seed(70, seed))
        probe = quadratic_falloff_probe(
            w_star, tuple(f["scales"]), stream, int(f["n"]),
            n_directions=int(f["n_directions"]), seed=_derive_seed(71, seed),
        )
        rows.append({
            "seed": seed, "exponent": float(probe.exponent),
            "c0_hat": float(probe.c0_hat), "n_kept": int(probe.kept.sum()),
        })
        for idx in range(len(probe.dists)):
            points.append({
                "seed": seed, "point": idx,
                "dist": float(probe.dists[idx]),
                "diff": float(probe.diffs[idx]),
                "stderr": float(probe.stderrs[idx]),
                "kept": int(probe.kept[idx]),
            })
    return RunLog(
        kind=cfg.kind, config=cfg.raw, config_hash=cfg.config_hash,
        rows=rows, tables={"points": points},
        wall_clock=time.perf_counter() - t0,
    )


# ------------------------------------------------------------- grid runs


def _cell_key(overparam: int, p_w: float, p_v: float) -> str:
    fmt = lambda v: f"{v:g}".replace(".", "p")
    return f"x{overparam}_pw{fmt(p_w)}_pv{fmt(p_v)}"


def _measure_cell_ledger(state, grid: dict, cell_index: int,
                         c0_hat: float) -> tuple:
    """Convergence-constant inputs measured on the cell's own geometry.

    Separation scales are worst off-diagonal/diagonal moment ratios of
    the alignment targets; slopes are probed along the geodesics the
    u-set would traverse.  The initial angle is clamped into the open
    quarter circle; a start beyond it simply yields an infeasible ledger.
    """
    d = state.w.shape[0]
    m, n = state.u_count, state.n_filters
    targets = state.targets
    x = next_batch(
        GausStream(dim=d, std=1.0, seed=_derive_seed(5, cell_index)),
        int(grid["probe_n"]),
    )
    d_t = gate_moments(x, targets, targets, grid["tau"])[0]
    l_t = act_moments(x, targets, targets, grid["tau"])[0]
    off = ~np.eye(n, dtype=bool)
    eps_d = float((d_t / np.diag(d_t)[:, None])[off].max())
    eps_l = float((l_t / np.diag(l_t)[:, None])[off].max())
    theta_raw = float(column_angles(state.w[:, :m], state.w_star).max())
    theta_0 = min(max(theta_raw, 1e-4), math.pi / 2 - 1e-9)
    geo_stream = GausStream(dim=d, std=1.0, seed=_derive_seed(6, cell_index))
    k_d = gate_slope_on_geodesics(
        state.w[:, :m], state.w_star, geo_stream, int(grid["probe_n"]),
        tau=grid["tau"],
    )
    geo_stream = GausStream(dim=d, std=1.0, seed=_derive_seed(6, cell_index))
    k_l = act_slope_on_geodesics(
        state.w[:, :m], state.w_star, geo_stream, int(grid["probe_n"]),
        tau=grid["tau"],
    )
    row_norms = np.linalg.norm(state.v, axis=1)
    b_v = float(max(np.linalg.norm(state.v_star, axis=1).max(),
                    row_norms.max()))
    b_dv = float(np.linalg.norm(state.v[:m] - state.v_star, axis=1).max())
    ledger = two_layer_constants(
        k_d, k_l, theta_0, eps_d, eps_l, b_v, b_dv, m, n, c0_hat,
        grid["eta"], float(np.diag(d_t).min()), float(np.diag(l_t).min()),
    )
    inputs = {
        "k_d": k_d, "k_l": k_l, "theta_0": theta_0, "theta_raw": theta_raw,
        "eps_d": eps_d, "eps_l": eps_l, "b_v": b_v, "b_dv": b_dv,
        "m": m, "n": n, "c0_hat": c0_hat, "eta": grid["eta"],
        "d_diag_min": float(np.diag(d_t).min()),
        "l_diag_min": float(np.diag(l_t).min()),
    }
    return ledger, inputs


def _grid_unit(payload: dict) -> dict:
    g = payload["grid"]
    seed, cell_index = payload["seed"], payload["cell_index"]
    overparam, p_w, p_v = payload["overparam"], payload["p_w"], payload["p_v"]
    w_star, v_star = reduced_teacher(
        np.random.default_rng(g["teacher_seed"]), g["dim"],
        g["teacher_width"], g["outputs"],
    )
    n = overparam * g["teacher_width"]
    state = mixed_two_layer_init(
        np.random.default_rng(_derive_seed(1, cell_index, seed)),
        w_star, v_star, n, p_w, p_v, g["eta"], tau=g["tau"],
    )
    stream = GausStream(dim=g["dim"], std=1.0,
                        seed=_derive_seed(2, cell_index, seed))
    ledger = payload.get("ledger")
    monitor_x = None
    if ledger is not None and ledger.feasible:
        monitor_x = next_batch(
            GausStream(dim=g["dim"], std=1.0,
                       seed=_derive_seed(3, cell_index, seed)),
            g["n_mc"],
        )
    m = state.u_count
    tags = {
        "overparam": overparam, "p_w": p_w, "p_v": p_v,
        "guaranteed": int(payload["cell_mode"] == "guaranteed"),
    }
    rows, monitors, detail = [], [], []

    def record(it: int, diverged: int) -> None:
        norms = np.linalg.norm(state.v, axis=1)
        u, r = norms[:m], norms[m:]
        row = dict(tags, seed=seed, iteration=it, diverged=diverged)
        row["u_min"] = float(u.min())
        row["u_max"] = float(u.max())
        row["u_mean"] = float(u.mean())
        row["r_max"] = float(r.max()) if r.size else 0.0
        row["r_mean"] = float(r.mean()) if r.size else 0.0
        row["gap"] = float(spare_row_gap(state))
        row["sin_max"] = float(np.sin(state.thetas[:m]).max())
        rows.append(row)

    def record_detail(it: int) -> None:
        entry = {"t": it}
        sines = np.sin(state.thetas)
        for j in range(state.n_filters):
            entry[f"sin_{j}"] = float(sines[j])
        norms = np.linalg.norm(state.v, axis=1)
        for j in range(state.n_filters):
            entry[f"v_{j}"] = float(norms[j])
        detail.append(entry)

    record(0, 0)
    if payload["detail"]:
        record_detail(0)
    for it in range(1, g["iterations"] + 1):
        x = next_batch(stream, g["n_mc"])
        try:
            state = step_two_layer(state, two_layer_moments(state, x))
        except NumericError:
            record(it - 1, 1)
            break
        if it % g["record_every"] == 0 or it == g["iterations"]:
            record(it, 0)
            if payload["detail"]:
                record_detail(it)
        if monitor_x is not None and it % g["monitor_every"] == 0:
            entry = monitor_hypotheses(state, ledger, it + 1, monitor_x)
            mrow = dict(tags, seed=seed, t=entry.t)
            for key in ("w_separation_ok", "wu_contraction_ok",
                        "v_contraction_ok", "wr_bound_ok"):
                mrow[key] = int(getattr(entry, key))
            for key in ("slack_w_separation", "slack_wu", "slack_v",
                        "slack_wr"):
                mrow[key] = float(getattr(entry, key))
            monitors.append(mrow)
            if payload["detail"] and detail and detail[-1]["t"] == it:
                for key in ("slack_w_separation", "slack_wu", "slack_v",
                            "slack_wr"):
                    detail[-1][key] = float(getattr(entry, key))
                detail[-1]["gamma"] = ledger.gamma
                detail[-1]["rate_w"] = ledger.rate_w
    return {
        "cell_index": cell_index, "seed": seed, "rows": rows,
        "monitors": monitors, "detail": detail,
    }


def run_overparam_grid(cfg: ExperimentConfig) -> RunLog:
    """Reduced two-layer trajectories over (overparam) x (init proximity).

    Each cell gets a measured constant ledger; in guaranteed mode an
    infeasible ledger downgrades the cell to free-run (trajectories still
    run, the marking lands in the ledger block and the row tags).
    Per-iteration mean and std across seeds mirror the row-norm panels.
    """
    t0 = time.perf_counter()
    g = cfg.grid
    w_star, v_star = reduced_teacher(
        np.random.default_rng(g["teacher_seed"]), g["dim"],
        g["teacher_width"], g["outputs"],
    )
    c0_probe = quadratic_falloff_probe(
        w_star[:, 0], (0.05, 0.1, 0.2, 0.4),
        GausStream(dim=g["dim"], std=1.0, seed=_derive_seed(4)),
        int(g["probe_n"]), n_directions=4, seed=0, tau=g["tau"],
    )
    cells = [
        (int(o), float(pw), float(pv))
        for o in g["overparams"] for pw, pv in g["cells"]
    ]
    ledgers: dict = {}
    cell_info = []
    for ci, (o, p_w, p_v) in enumerate(cells):
        state0 = mixed_two_layer_init(
            np.random.default_rng(_derive_seed(1, ci, cfg.seeds[0])),
            w_star, v_star,
            o * g["teacher_width"], p_w, p_v, g["eta"], tau=g["tau"],
        )
        ledger, inputs = _measure_cell_ledger(state0, g, ci, c0_probe.c0_hat)
        if cfg.mode == "guaranteed" and ledger.feasible:
            cell_mode = "guaranteed"
        else:
            cell_mode = "free-run"
        ledgers[_cell_key(o, p_w, p_v)] = {
            "inputs": inputs,
            "ledger": asdict(ledger),
            "cell_mode": cell_mode,
        }
        cell_info.append((ci, o, p_w, p_v, ledger, cell_mode))
    payloads = []
    for ci, o, p_w, p_v, ledger, cell_mode in cell_info:
        for seed in cfg.seeds:
            first = seed == cfg.seeds[0]
            payloads.append({
                "grid": g, "cell_index": ci, "seed": seed,
                "overparam": o, "p_w": p_w, "p_v": p_v,
                "cell_mode": cell_mode,
                "ledger": ledger if (first and cell_mode == "guaranteed") else None,
                "detail": first,
            })
    results = _parallel_map(_grid_unit, payloads, cfg.workers)
    rows = [r for res in results for r in res["rows"]]
    monitors = [mrow for res in results for mrow in res["monitors"]]
    tables = {"monitors": monitors} if monitors else {}
    for res in results:
        if res["detail"]:
            ci = res["cell_index"]
            o, p_w, p_v = cells[ci]
            tables[f"detail_{_cell_key(o, p_w, p_v)}"] = res["detail"]
    assumptions = []
    for key, entry in ledgers.items():
        cell_monitors = [
            mrow for mrow in monitors
            if _cell_key(mrow["overparam"], mrow["p_w"], mrow["p_v"]) == key
        ]
        assumptions.append({
            "cell": key,
            "cell_mode": entry["cell_mode"],
            "feasible": entry["ledger"]["feasible"],
            "binding": entry["ledger"]["binding"],
            "checked": len(cell_monitors),
            "violations": sum(
                1 for mrow in cell_monitors
                if not (mrow["w_separation_ok"] and mrow["wu_contraction_ok"]
                        and mrow["v_contraction_ok"] and mrow["wr_bound_ok"])
            ),
        })
    return RunLog(
        kind=cfg.kind, config=cfg.raw, config_hash=cfg.config_hash,
        rows=rows,
        aggregates=_aggregate(
            rows, ("overparam", "p_w", "p_v", "iteration"), "meanstd",
        ),
        tables=tables, ledgers=ledgers, assumptions=assumptions,
        wall_clock=time.perf_counter() - t0,
    )


_RUNNERS = {
    "verify_identity": run_verify_identity,
    "train": run_train,
    "overparam_grid": run_overparam_grid,
    "ablate_size": run_ablations,
    "ablate_overparam": run_ablations,
    "ablate_finite": run_ablations,
    "lottery": run_lottery,
    "bn_audit": run_bn_audit,
    "psi_check": run_psi_check,
    "falloff_probe": run_falloff,
}


def run_experiment(cfg: ExperimentConfig) -> RunLog:
    """Dispatch a validated config to its runner."""
    return _RUNNERS[cfg.kind](cfg)


# -------------------------------------------------------------- emission


def _fmt_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _row_keys(rows: list[dict]) -> list[str]:
    keys: list[str] = []
    for row in rows:
        for k in row:
            if k not in keys:
                keys.append(k)
    return keys


def _write_csv(path: Path, rows: list[dict]) -> None:
    keys = _row_keys(rows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(keys)
        for row in rows:
            writer.writerow([_fmt_cell(row.get(k)) for k in keys])


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    return v


def emit_reports(log: RunLog, out_dir, plots: bool = False) -> list[Path]:
    """Write summary.csv, per-table CSVs, meta.json, optional SVG plots.

    Emission is pure: the same log yields the same bytes, and summary
    rows carry the config hash so they can be traced back to meta.json.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    summary = [dict(config=log.config_hash, **row) for row in log.rows]
    path = out / "summary.csv"
    if summary:
        _write_csv(path, summary)
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerow(["config"])
    written.append(path)
    if log.aggregates:
        path = out / "aggregate.csv"
        _write_csv(path, log.aggregates)
        written.append(path)
    for name in sorted(log.tables):
        path = out / f"{name}.csv"
        _write_csv(path, log.tables[name])
        written.append(path)
    meta = {
        "kind": log.kind,
        "config_hash": log.config_hash,
        "config": log.config,
        "ledgers": log.ledgers,
        "assumptions": log.assumptions,
        "failed": log.failed,
        "row_count": len(log.rows),
        "wall_clock_s": round(log.wall_clock, 3),
    }
    path = out / "meta.json"
    path.write_text(
        json.dumps(_jsonable(meta), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    written.append(path)
    if plots:
        for fname, svg in _plots(log):
            path = out / fname
            path.write_text(svg, encoding="utf-8")
            written.append(path)
    return written


# ----------------------------------------------------------------- plots


_PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
)

_TAG_KEYS = {
    "seed", "epoch", "iteration", "trial", "t", "point", "bin",
    "arch", "bn_mode", "factor", "samples", "arm", "overparam",
    "p_w", "p_v", "guaranteed", "diverged", "ok", "bias", "kept",
    "n_kept", "config", "student", "teacher",
}


def svg_line_plot(series: dict[str, tuple[list, list]], title: str,
                  xlabel: str, ylabel: str) -> str:
    """Minimal self-contained line chart; coordinates rounded to 0.01."""
    width, height = 720, 440
    ml, mr, mt, mb = 64, 156, 36, 46
    pts_x = [x for xs, _ in series.values() for x in xs
             if isinstance(x, (int, float)) and math.isfinite(x)]
    pts_y = [y for _, ys in series.values() for y in ys
             if isinstance(y, (int, float)) and math.isfinite(y)]
    x0, x1 = (min(pts_x), max(pts_x)) if pts_x else (0.0, 1.0)
    y0, y1 = (min(pts_y), max(pts_y)) if pts_y else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    sx = lambda x: ml + (x - x0) / (x1 - x0) * (width - ml - mr)
    sy = lambda y: height - mb - (y - y0) / (y1 - y0) * (height - mt - mb)
    f = lambda v: f"{v:.2f}"
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{ml}" y="22" font-family="sans-serif" font-size="14">'
        f'{title}</text>',
        f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" '
        f'y2="{height - mb}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" '
        f'stroke="black"/>',
        f'<text x="{(ml + width - mr) // 2}" y="{height - 10}" '
        f'font-family="sans-serif" font-size="12" text-anchor="middle">'
        f'{xlabel}</text>',
        f'<text x="14" y="{(mt + height - mb) // 2}" '
        f'font-family="sans-serif" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 14 {(mt + height - mb) // 2})">'
        f'{ylabel}</text>',
    ]
    for i in range(5):
        xv = x0 + i * (x1 - x0) / 4
        yv = y0 + i * (y1 - y0) / 4
        parts.append(
            f'<line x1="{f(sx(xv))}" y1="{height - mb}" x2="{f(sx(xv))}" '
            f'y2="{height - mb + 4}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{f(sx(xv))}" y="{height - mb + 16}" '
            f'font-family="sans-serif" font-size="10" text-anchor="middle">'
            f'{xv:.4g}</text>'
        )
        parts.append(
            f'<line x1="{ml - 4}" y1="{f(sy(yv))}" x2="{ml}" '
            f'y2="{f(sy(yv))}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{ml - 6}" y="{f(sy(yv))}" font-family="sans-serif" '
            f'font-size="10" text-anchor="end">{yv:.4g}</text>'
        )
    for idx, (name, (xs, ys)) in enumerate(series.items()):
        color = _PALETTE[idx % len(_PALETTE)]
        coords = " ".join(
            f"{f(sx(x))},{f(sy(y))}"
            for x, y in zip(xs, ys)
            if isinstance(y, (int, float)) and math.isfinite(y)
        )
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        ly = mt + 14 * (idx + 1)
        parts.append(
            f'<line x1="{width - mr + 8}" y1="{ly - 4}" '
            f'x2="{width - mr + 28}" y2="{ly - 4}" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{width - mr + 32}" y="{ly}" '
            f'font-family="sans-serif" font-size="10">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _series_key(row: dict, keys: list[str]) -> str:
    return ",".join(f"{k}={row[k]}" for k in keys if k in row)


def _plots(log: RunLog) -> list[tuple[str, str]]:
    plots: list[tuple[str, str]] = []
    if log.kind == "overparam_grid":
        for key, grp in _grouped(
            log.aggregates, ("overparam", "p_w", "p_v"),
        ):
            o, p_w, p_v = key
            xs = [r["iteration"] for r in grp]
            series = {}
            for metric in ("u_min_mean", "u_max_mean", "r_max_mean",
                           "r_mean_mean"):
                if any(metric in r for r in grp):
                    series[metric] = (xs, [r.get(metric) for r in grp])
            name = f"cell_{_cell_key(int(o), p_w, p_v)}.svg"
            plots.append((name, svg_line_plot(
                series, f"overparam {o}, p_w {p_w:g}, p_v {p_v:g}",
                "iteration", "fan-out row norm",
            )))
        return plots
    if not log.rows:
        return plots
    x_key = next(
        (k for k in ("epoch", "iteration", "trial") if k in log.rows[0]),
        None,
    )
    if x_key is None:
        return plots
    tag_keys = [
        k for k in log.rows[0]
        if k in _TAG_KEYS and k != x_key and k != "diverged"
    ]
    metrics = _numeric_keys(log.rows, _TAG_KEYS | {x_key})
    for metric in metrics:
        series: dict[str, tuple[list, list]] = {}
        for row in log.rows:
            if metric not in row:
                continue
            label = _series_key(row, tag_keys) or "all"
            xs, ys = series.setdefault(label, ([], []))
            xs.append(row[x_key])
            ys.append(row[metric])
        if len(series) > 16:
            series = dict(list(series.items())[:16])
        plots.append((f"{metric}.svg", svg_line_plot(
            series, f"{log.kind}: {metric}", x_key, metric,
        )))
    return plots
