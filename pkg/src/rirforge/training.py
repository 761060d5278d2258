"""Training loop: CFG-dropout steps, Adam updates, validation, dataset mixing.

Determinism contract: a run is fully reproducible from its seed. Per step the
generator is consumed in a fixed order (timesteps, dropout, noise), and the
validation draws are frozen once per run so epoch losses are comparable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diffusion import Schedule, forward_diffuse
from .errors import NonFiniteLoss
from .losses import LossConfig, edc_loss, mse_loss
from .nn import autodiff as ops
from .nn.checkpoint import save_checkpoint
from .nn.unet import UNetConfig, init_params, unet_apply, unet_forward


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def init_adam(params: dict[str, np.ndarray]) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(v) for k, v in params.items()},
        v={k: np.zeros_like(v) for k, v in params.items()},
    )


def global_grad_norm(grads: dict[str, np.ndarray]) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    return float(np.sqrt(total))


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so the global norm is at most max_norm."""
    norm = global_grad_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def adam_update(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> None:
    """One in-place Adam step with decoupled weight decay."""
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        if weight_decay:
            p *= 1.0 - lr * weight_decay
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def optimizer_tensors(state: AdamState) -> dict[str, np.ndarray]:
    out = {f"adam.m.{k}": v for k, v in state.m.items()}
    out.update({f"adam.v.{k}": v for k, v in state.v.items()})
    return out


# ---------------------------------------------------------------------------
# single training step

def apply_cfg_dropout(cond: np.ndarray, p: float, rng: np.random.Generator):
    """Zero each item's conditioner independently with probability p."""
    drop = rng.random(cond.shape[0]) < p
    if drop.any():
        cond = np.where(drop[:, None], 0.0, cond)
    return cond, drop


def record_total_loss(
    params: dict[str, np.ndarray],
    config: UNetConfig,
    x_t: np.ndarray,
    cond: np.ndarray,
    t: np.ndarray,
    x0: np.ndarray,
    loss_cfg: LossConfig,
):
    """Traced forward through the denoiser and the total loss.

    Returns (recording, info) where info carries the scalar loss components.
    """
    leaves = {name: ops.Var(arr) for name, arr in params.items()}
    pred = unet_apply(leaves, x_t[:, None, :], cond[:, None, :], t, config)
    pred = ops.reshape(pred, x0.shape)
    mse = mse_loss(pred, x0)
    if loss_cfg.lambda_edc > 0.0:
        edc = edc_loss(pred, x0, loss_cfg)
        per_item = ops.add(mse, ops.mul(edc, loss_cfg.lambda_edc))
        edc_val = float(np.mean(edc.data))
    else:
        per_item = mse
        edc_val = 0.0
    loss = ops.reduce_mean(per_item)
    info = {
        "mse": float(np.mean(mse.data)),
        "edc": edc_val,
        "total": float(loss.data),
    }
    return ops.Recording(loss, leaves), info


def train_step(
    params: dict[str, np.ndarray],
    config: UNetConfig,
    x0: np.ndarray,
    cond: np.ndarray,
    rng: np.random.Generator,
    loss_cfg: LossConfig,
    sched: Schedule,
):
    """One CFG-dropout denoising step; returns (grads, info).

    Draw order from rng: timesteps, dropout, noise.
    """
    batch = x0.shape[0]
    t = rng.integers(1, sched.num_steps + 1, size=batch)
    cond_used, drop = apply_cfg_dropout(cond, loss_cfg.cfg_dropout_p, rng)
    eps = rng.standard_normal(x0.shape)
    x_t = forward_diffuse(x0, t, eps, sched)
    dtype = np.dtype(config.dtype)
    rec, info = record_total_loss(
        params,
        config,
        x_t.astype(dtype),
        cond_used.astype(dtype),
        t,
        x0.astype(dtype),
        loss_cfg,
    )
    grads = rec.backward()
    info["dropped"] = int(drop.sum())
    info["t"] = t
    return grads, info


def validation_loss(
    params, config, x0, cond, t, eps, drop, loss_cfg: LossConfig, sched: Schedule
):
    """Untraced total loss on frozen validation draws. Returns (mse, edc, total)."""
    cond_used = np.where(drop[:, None], 0.0, cond)
    x_t = forward_diffuse(x0, t, eps, sched)
    dtype = np.dtype(config.dtype)
    pred = unet_forward(
        params, x_t.astype(dtype)[:, None, :], cond_used.astype(dtype)[:, None, :], t, config
    )
    pred = pred.reshape(x0.shape)
    mse = float(np.mean(mse_loss(pred, x0)))
    if loss_cfg.lambda_edc > 0.0:
        edc = float(np.mean(edc_loss(pred, x0, loss_cfg)))
    else:
        edc = 0.0
    return mse, edc, mse + loss_cfg.lambda_edc * edc


# ---------------------------------------------------------------------------
# dataset mixing

def mix_datasets(records_a, records_b, ratio: tuple[float, float], rng, key=None):
    """Per-item independent source selection between two paired record lists.

    Both lists must cover the same ids; each id independently takes the
    record from the first list with probability ratio[0] / sum(ratio).
    """
    if key is None:
        key = lambda r: r.id
    ra, rb = float(ratio[0]), float(ratio[1])
    if ra < 0 or rb < 0 or ra + rb <= 0:
        raise ValueError(f"invalid mixing ratio {ratio}")
    by_id_b = {key(r): r for r in records_b}
    ids_a = [key(r) for r in records_a]
    if set(ids_a) != set(by_id_b):
        raise ValueError("mix_datasets requires the two sources to cover the same ids")
    p_a = ra / (ra + rb)
    picks = rng.random(len(records_a)) < p_a
    return [ra_rec if take_a else by_id_b[key(ra_rec)]
            for ra_rec, take_a in zip(records_a, picks)]


# ---------------------------------------------------------------------------
# full training loop

@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    history: list[dict] = field(default_factory=list)
    best_valid_total: float = float("inf")
    best_epoch: int = -1
    steps_run: int = 0


def train(
    x0_train: np.ndarray,
    cond_train: np.ndarray,
    x0_valid: np.ndarray,
    cond_valid: np.ndarray,
    config: UNetConfig,
    sched: Schedule,
    loss_cfg: LossConfig,
    *,
    epochs: int,
    batch_size: int,
    learning_rate: float = 1e-4,
    grad_clip: float = 1.0,
    weight_decay: float = 0.0,
    seed: int = 0,
    max_steps: int | None = None,
    checkpoint_path=None,
    log_path=None,
    extra_meta: dict | None = None,
    params: dict[str, np.ndarray] | None = None,
    log_every: int = 1,
) -> TrainResult:
    """Iterate train_step over shuffled epochs, track the best validation loss.

    Writes a line-delimited JSON log (one record per step and per epoch) and
    the best-validation checkpoint when paths are given. Aborts with
    NonFiniteLoss if the loss leaves the reals.
    """
    root = np.random.SeedSequence(seed)
    sq_params, sq_steps, sq_valid = root.spawn(3)
    rng_steps = np.random.default_rng(sq_steps)
    if params is None:
        params = init_params(config, np.random.default_rng(sq_params))
    state = init_adam(params)

    rng_valid = np.random.default_rng(sq_valid)
    n_valid = x0_valid.shape[0]
    t_val = rng_valid.integers(1, sched.num_steps + 1, size=n_valid)
    drop_val = rng_valid.random(n_valid) < loss_cfg.cfg_dropout_p
    eps_val = rng_valid.standard_normal(x0_valid.shape)

    result = TrainResult(params=params)
    log_fh = open(log_path, "w") if log_path else None

    def log(record: dict):
        result.history.append(record)
        if log_fh:
            log_fh.write(json.dumps(record, sort_keys=True) + "\n")

    n_train = x0_train.shape[0]
    step = 0
    try:
        for epoch in range(epochs):
            order = rng_steps.permutation(n_train)
            for lo in range(0, n_train, batch_size):
                idx = order[lo : lo + batch_size]
                grads, info = train_step(
                    params, config, x0_train[idx], cond_train[idx], rng_steps,
                    loss_cfg, sched,
                )
                if not np.isfinite(info["total"]):
                    raise NonFiniteLoss(
                        f"step {step}: loss became {info['total']} "
                        f"(mse={info['mse']}, edc={info['edc']})"
                    )
                clip_grad_norm(grads, grad_clip)
                adam_update(params, grads, state, learning_rate,
                            weight_decay=weight_decay)
                step += 1
                if step % log_every == 0:
                    log(
                        {
                            "kind": "step",
                            "step": step,
                            "epoch": epoch,
                            "mse": info["mse"],
                            "edc": info["edc"],
                            "total": info["total"],
                            "lr": learning_rate,
                            "seed": seed,
                        }
                    )
                if max_steps is not None and step >= max_steps:
                    break
            v_mse, v_edc, v_total = validation_loss(
                params, config, x0_valid, cond_valid, t_val, eps_val, drop_val,
                loss_cfg, sched,
            )
            is_best = v_total < result.best_valid_total
            if is_best:
                result.best_valid_total = v_total
                result.best_epoch = epoch
                if checkpoint_path is not None:
                    save_checkpoint(
                        checkpoint_path,
                        params,
                        config,
                        optimizer_state=optimizer_tensors(state),
                        extra=dict(
                            extra_meta or {},
                            adam_step=state.step,
                            epoch=epoch,
                            valid_total=v_total,
                            seed=seed,
                        ),
                    )
            log(
                {
                    "kind": "epoch",
                    "step": step,
                    "epoch": epoch,
                    "valid_mse": v_mse,
                    "valid_edc": v_edc,
                    "valid_total": v_total,
                    "best": is_best,
                    "lr": learning_rate,
                    "seed": seed,
                }
            )
            if max_steps is not None and step >= max_steps:
                break
    finally:
        if log_fh:
            log_fh.close()
    result.steps_run = step
    return result
