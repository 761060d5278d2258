"""Command-line pipeline: simulate, surrogate-tail, train, complete, evaluate,
plot-data.

Every command takes --seed and is fully reproducible: rerunning with the same
arguments produces byte-identical manifests, logs, and WAVs. Dataset synthesis
and batch evaluation fan out over a process pool sized by
RIRFORGE_NUM_WORKERS (default 1); geometry sampling and manifest writing stay
in the coordinator so worker count never affects the output.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import ism
from .diffusion import cosine_schedule, sample
from .errors import RirForgeError
from .losses import LossConfig
from .metrics import evaluate_items, write_report_csv, write_report_json
from .nn.checkpoint import load_checkpoint
from .nn.unet import UNetConfig, make_denoiser
from .signals import Rir, compute_edc
from .surrogate import surrogate_tail
from .training import mix_datasets, train


def _add_run_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--preset", choices=sorted(ds.PRESETS), help="named defaults")
    p.add_argument("--seed", type=int, help="master RNG seed")
    p.add_argument("--order", type=int, dest="max_order",
                   help="maximum reflection order of the conditioner")
    p.add_argument("--guidance", type=float, help="guidance scale s >= 1")
    p.add_argument("--lambda", type=float, dest="lambda_edc",
                   help="EDC loss scale (>= 0)")
    p.add_argument("--cfg-dropout", type=float, dest="cfg_dropout",
                   help="conditioner dropout probability in [0, 1]")
    p.add_argument("--k", type=int, help="signal length in samples (multiple of 128)")
    p.add_argument("--sample-rate", type=int, dest="sample_rate")
    p.add_argument("--t-steps", type=int, dest="t_steps", help="diffusion steps T")


def _run_config(args) -> ds.RunConfig:
    keys = ("seed", "max_order", "guidance", "lambda_edc", "cfg_dropout", "k",
            "sample_rate", "t_steps")
    overrides = {k: getattr(args, k, None) for k in keys}
    return ds.build_run_config(args.config, args.preset, **overrides)


# ---------------------------------------------------------------------------
# simulate

def _render_pair(job):
    (dims, absorption, c_sound, src, rcv, cond_order, target_order, fs, k,
     keep, window) = job
    room = ism.Room(dims=dims, absorption=absorption, speed_of_sound=c_sound)
    target = ism.simulate(room, ism.SourcePose(src), ism.ReceiverPose(rcv),
                          target_order, fs, k, keep)
    cond = ism.simulate(room, ism.SourcePose(src), ism.ReceiverPose(rcv),
                        cond_order, fs, k, keep)
    if window is not None:
        cond = ism.truncate_window(cond, window)
    return cond.samples.astype(np.float32), target.samples.astype(np.float32)


def cmd_simulate(args) -> int:
    cfg = _run_config(args)
    out = Path(args.out)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)

    rooms = [ism.sample_room(rng) for _ in range(args.rooms)]
    jobs, meta = [], []
    for ri, room in enumerate(rooms):
        sources = []
        receivers = []
        for _ in range(args.sources):
            sources.append(ism.sample_position(room, rng, ism.GeometryRanges().wall_margin))
        for _ in range(args.receivers):
            receivers.append(ism.sample_position(room, rng, ism.GeometryRanges().wall_margin))
        for si, src in enumerate(sources):
            for mi, rcv in enumerate(receivers):
                item = f"r{ri:03d}_s{si:02d}_m{mi:02d}"
                jobs.append((room.dims, room.absorption, room.speed_of_sound,
                             src, rcv, cfg.max_order, args.target_order,
                             cfg.sample_rate, cfg.k, cfg.keep_seconds,
                             args.conditioner_window))
                meta.append((item, f"r{ri:03d}", f"s{si:02d}", f"m{mi:02d}"))

    splits = ds.assign_splits(len(jobs), rng)
    workers = ds.num_workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rendered = list(pool.map(_render_pair, jobs, chunksize=4))
    else:
        rendered = [_render_pair(j) for j in jobs]

    records = []
    for (item, room_id, source_id, receiver_id), split, (cond, target) in zip(
        meta, splits, rendered
    ):
        cond_rel = f"wav/{item}_cond.wav"
        target_rel = f"wav/{item}_target.wav"
        ds.write_wav(out / cond_rel, cond, cfg.sample_rate)
        ds.write_wav(out / target_rel, target, cfg.sample_rate)
        records.append(ds.Record(
            id=item, conditioner_path=cond_rel, target_path=target_rel,
            room_id=room_id, source_id=source_id, receiver_id=receiver_id,
            max_order=cfg.max_order, split=split, source_tag="ism",
        ))
    ds.write_manifest(out / "manifest.jsonl", records)
    ds.echo_config(cfg, out)
    print(f"simulate: wrote {len(records)} pairs to {out}")
    return 0


# ---------------------------------------------------------------------------
# surrogate-tail

def cmd_surrogate_tail(args) -> int:
    cfg = _run_config(args)
    out = Path(args.out)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    records = ds.read_manifest(args.manifest)
    rng = np.random.default_rng(cfg.seed)
    new_records = []
    for rec in records:
        x, fs = ds.read_wav(ds.resolve_path(args.manifest, rec.target_path))
        variant = surrogate_tail(Rir(x, fs), rng, cfg.keep_seconds)
        target_rel = f"wav/{rec.id}_target.wav"
        ds.write_wav(out / target_rel, variant.samples.astype(np.float32), fs)
        cond_src = ds.resolve_path(args.manifest, rec.conditioner_path)
        cond_rel = f"wav/{rec.id}_cond.wav"
        (out / cond_rel).write_bytes(Path(cond_src).read_bytes())
        new_records.append(ds.Record(
            id=rec.id, conditioner_path=cond_rel, target_path=target_rel,
            room_id=rec.room_id, source_id=rec.source_id,
            receiver_id=rec.receiver_id, max_order=rec.max_order,
            split=rec.split, source_tag="surrogate",
        ))
    ds.write_manifest(out / "manifest.jsonl", new_records)
    ds.echo_config(cfg, out)
    print(f"surrogate-tail: wrote {len(new_records)} variants to {out}")
    return 0


# ---------------------------------------------------------------------------
# train

def _parse_ratio(text: str) -> tuple[float, float]:
    try:
        a, b = text.split(":")
        return float(a), float(b)
    except ValueError:
        raise RirForgeError(f"expected RATIO like 8:2, got {text!r}")


def cmd_train(args) -> int:
    cfg = _run_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = ds.read_manifest(args.manifest)
    # each record resolves WAV paths against the manifest it came from
    bases = {rec.id: args.manifest for rec in records}
    if args.mix_manifest:
        other = ds.read_manifest(args.mix_manifest)
        ratio = _parse_ratio(args.mix_ratio)
        rng_mix = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x31F]))
        other_ids = {id(r) for r in other}
        records = mix_datasets(records, other, ratio, rng_mix)
        bases = {
            rec.id: (args.mix_manifest if id(rec) in other_ids else args.manifest)
            for rec in records
        }
    train_recs = [r for r in records if r.split == "train"]
    valid_recs = [r for r in records if r.split == "valid"]
    if not train_recs or not valid_recs:
        raise RirForgeError("manifest must contain both train and valid records")

    def _load(recs):
        conds, targets = [], []
        for r in recs:
            base = bases[r.id]
            c, _ = ds.read_wav(ds.resolve_path(base, r.conditioner_path))
            x, _ = ds.read_wav(ds.resolve_path(base, r.target_path))
            conds.append(c)
            targets.append(x)
        return np.stack(conds), np.stack(targets)

    cond_tr, x0_tr = _load(train_recs)
    cond_va, x0_va = _load(valid_recs)
    if x0_tr.shape[1] != cfg.k:
        raise RirForgeError(f"dataset length {x0_tr.shape[1]} != configured k {cfg.k}")

    net_cfg = UNetConfig(input_length=cfg.k, base_channels=cfg.base_channels)
    sched = cosine_schedule(cfg.t_steps, cfg.schedule_offset)
    loss_cfg = LossConfig(lambda_edc=cfg.lambda_edc, edc_floor_db=cfg.edc_floor_db,
                          cfg_dropout_p=cfg.cfg_dropout)
    extra = {"sample_rate": cfg.sample_rate, "k": cfg.k, "t_steps": cfg.t_steps,
             "schedule_offset": cfg.schedule_offset, "lambda_edc": cfg.lambda_edc,
             "cfg_dropout": cfg.cfg_dropout, "guidance": cfg.guidance}
    result = train(
        x0_tr, cond_tr, x0_va, cond_va, net_cfg, sched, loss_cfg,
        epochs=args.epochs, batch_size=args.batch_size,
        learning_rate=args.lr, seed=cfg.seed, max_steps=args.max_steps,
        checkpoint_path=out / "model.ckpt", log_path=out / "train_log.jsonl",
        extra_meta=extra,
    )
    ds.echo_config(cfg, out)
    print(f"train: {result.steps_run} steps, best valid total "
          f"{result.best_valid_total:.6g} (epoch {result.best_epoch}) -> {out}")
    return 0


# ---------------------------------------------------------------------------
# complete

def cmd_complete(args) -> int:
    params, net_cfg, _, extra = load_checkpoint(args.checkpoint)
    fs = int(extra.get("sample_rate", 16000))
    t_steps = int(extra.get("t_steps", 1000))
    offset = float(extra.get("schedule_offset", 0.008))
    guidance = args.guidance if args.guidance is not None else float(extra.get("guidance", 1.0))
    seed = args.seed if args.seed is not None else 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.conditioner:
        conds = [np.asarray(ds.read_wav(args.conditioner)[0])]
        names = [Path(args.conditioner).stem + "_completed"]
    elif args.manifest:
        records = [r for r in ds.read_manifest(args.manifest)
                   if args.split in ("all", r.split)]
        conds, names = [], []
        for rec in records:
            c, _ = ds.read_wav(ds.resolve_path(args.manifest, rec.conditioner_path))
            conds.append(c)
            names.append(rec.id)
    else:
        raise RirForgeError("complete needs --conditioner or --manifest")

    sched = cosine_schedule(t_steps, offset)
    denoiser = make_denoiser(params, net_cfg)
    rng = np.random.default_rng(seed)
    batch = np.stack(conds)
    completed = sample(denoiser, batch, sched, guidance=guidance, rng=rng)
    for name, signal in zip(names, completed):
        ds.write_wav(out / f"{name}.wav", signal.astype(np.float32), fs)
    print(f"complete: wrote {len(names)} RIR(s) to {out} "
          f"(T={t_steps}, s={guidance}, seed={seed})")
    return 0


# ---------------------------------------------------------------------------
# evaluate

def cmd_evaluate(args) -> int:
    cfg = _run_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = [r for r in ds.read_manifest(args.manifest)
               if args.split in ("all", r.split)]
    if not records:
        raise RirForgeError(f"no records with split {args.split!r}")
    k80 = args.k80 if args.k80 is not None else cfg.k80
    preds, targets, conds, ids = [], [], [], []
    for rec in records:
        pred_path = Path(args.predictions) / f"{rec.id}.wav"
        if not pred_path.exists():
            raise RirForgeError(f"missing prediction {pred_path}")
        preds.append(ds.read_wav(pred_path)[0])
        targets.append(ds.read_wav(ds.resolve_path(args.manifest, rec.target_path))[0])
        conds.append(ds.read_wav(ds.resolve_path(args.manifest, rec.conditioner_path))[0])
        ids.append(rec.id)
    report = evaluate_items(preds, targets, conds, ids, k80, cfg.edc_floor_db)
    write_report_json(report, out / "report.json")
    write_report_csv(report, out / "report.csv")
    print(f"evaluate: {len(ids)} items (k80={k80})")
    for label, s in (("RER_early", report.rer_early_db),
                     ("RMSE_late", report.rmse_late_db),
                     ("EDC_MAE", report.edc_mae_db)):
        print(f"  {label:10s} mean {s.mean: .3f} dB  std {s.std:.3f}  "
              f"excluded {s.excluded}")
    return 0


# ---------------------------------------------------------------------------
# plot-data

def cmd_plot_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for wav in args.wavs:
        x, fs = ds.read_wav(wav)
        edc = compute_edc(Rir(x, fs)).values_db
        path = out / (Path(wav).stem + ".csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time_s", "amplitude", "edc_db"])
            for n in range(x.size):
                writer.writerow([repr(n / fs), repr(float(x[n])), repr(float(edc[n]))])
        print(f"plot-data: {wav} -> {path}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rirforge",
        description="Diffusion-based RIR completion from image-source early reflections",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize an ISM dataset")
    _add_run_config_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--rooms", type=int, default=1)
    p.add_argument("--sources", type=int, default=1)
    p.add_argument("--receivers", type=int, default=2)
    p.add_argument("--target-order", type=int, default=30,
                   help="reflection order of the full (target) simulation")
    p.add_argument("--conditioner-window", type=float, default=None,
                   help="optionally truncate conditioners to this many seconds")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("surrogate-tail",
                       help="derive non-physical target-domain variants")
    _add_run_config_flags(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_surrogate_tail)

    p = sub.add_parser("train", help="train the denoiser on a manifest")
    _add_run_config_flags(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mix-manifest", help="second dataset for ratio mixing")
    p.add_argument("--mix-ratio", default="8:2")
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--max-steps", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("complete", help="run completion from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--conditioner", help="single conditioner WAV")
    p.add_argument("--manifest", help="batch completion over a manifest")
    p.add_argument("--split", default="test", choices=("train", "valid", "test", "all"))
    p.add_argument("--out", required=True)
    p.add_argument("--guidance", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("evaluate", help="metric report for completed RIRs")
    _add_run_config_flags(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=("train", "valid", "test", "all"))
    p.add_argument("--k80", type=int, default=None,
                   help="first sample after the conditioner window")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot-data", help="CSV export (time, amplitude, EDC)")
    p.add_argument("wavs", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RirForgeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
