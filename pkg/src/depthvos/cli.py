"""Command-line entry points: synth / train / infer / eval / ablate.

Outputs per run directory: config.resolved.json always; train adds
checkpoint/, loss_curve_stage{1,2}.csv and loss_curve.png; infer adds
masks/<seq>/<frame>.png; eval adds scores.json, scores.txt and scores.png;
ablate adds ablation.csv, ablation.json and ablation.png.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .archive import ArchiveError
from .config import ConfigError, RunConfig, resolve, write_resolved
from .core import MaskMap
from .data import (
    DataError,
    LoadedSequence,
    discover_manifests,
    load_all,
    save_mask_png,
    synth_dataset,
    _read_mask,
)
from .metrics import DatasetReport, evaluate_dataset, evaluate_sequence
from .model import build_model, load_checkpoint, save_checkpoint
from .plots import plot_ablation, plot_loss_curves, plot_scores
from .training import save_loss_curve, train_two_stages
from .tta import Variant, make_variants, propagate_with_tta


def infer_sequence(model, seq: LoadedSequence, variants: list[Variant], write_interval=None):
    """Propagate one sequence; returns masks per frame index, cropped to the
    original (pre-padding) resolution."""
    first = seq.manifest.annotated[0]
    depths = list(seq.depths) if model.fusion is not None else None
    preds = propagate_with_tta(
        model,
        list(seq.frames),
        seq.masks[first],
        variants,
        depths=depths,
        first_idx=first,
        write_interval=write_interval,
    )
    out = {}
    for idx, (_, mask) in preds.items():
        oh, ow = seq.frames[idx].orig_h, seq.frames[idx].orig_w
        out[idx] = MaskMap(labels=mask.labels[:oh, :ow], num_objects=mask.num_objects)
    return out


def score_sequences(pred_masks_by_seq, manifests) -> DatasetReport:
    """Score predictions against raw (unpadded) ground-truth masks."""
    scores = []
    for man in manifests:
        preds = pred_masks_by_seq[man.sequence_id]
        gts = {}
        for idx in man.annotated:
            rec = man.frames[idx]
            if rec.mask is None:
                raise DataError(f"{man.sequence_id}: annotated frame {idx} has no mask")
            gts[idx] = MaskMap(
                labels=_read_mask(man.root / rec.mask), num_objects=man.num_objects
            )
        scores.append(evaluate_sequence(preds, gts, man.annotated, man.sequence_id))
    return evaluate_dataset(scores)


def _save_scores(report: DatasetReport, out: Path) -> None:
    with open(out / "scores.json", "w") as f:
        json.dump(report.summary(), f, indent=1, sort_keys=True)
    with open(out / "scores.txt", "w") as f:
        f.write(report.table() + "\n")
    plot_scores(report, out / "scores.png")


def cmd_synth(cfg: RunConfig) -> None:
    out = Path(cfg.out)
    manifests = synth_dataset(out, cfg.synth_sequences, base_seed=cfg.synth.seed, cfg=cfg.synth)
    write_resolved(cfg, out, "synth")
    print(f"wrote {len(manifests)} sequences under {out}")


def cmd_train(cfg: RunConfig) -> None:
    if cfg.train_root is None:
        raise ConfigError("train needs train_root (--data)")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = load_all(discover_manifests(cfg.train_root))
    model = build_model(cfg.model)
    model, curves = train_two_stages(model, dataset, cfg.stage1, cfg.stage2)
    save_checkpoint(model, out / "checkpoint")
    for name, curve in curves.items():
        save_loss_curve(curve, out / f"loss_curve_{name}.csv")
    plot_loss_curves(curves, out / "loss_curve.png")
    write_resolved(cfg, out, "train")
    print(
        f"trained: stage1 {curves['stage1'][0]:.4f}->{curves['stage1'][-1]:.4f}, "
        f"stage2 {curves['stage2'][0]:.4f}->{curves['stage2'][-1]:.4f}; checkpoint at {out / 'checkpoint'}"
    )


def _variants_from(cfg: RunConfig, args) -> list[Variant]:
    use_tta = args.tta or args.scales is not None or args.flip
    if not use_tta:
        return [Variant(scale=1.0, flipped=False)]
    scales = cfg.tta.scales
    return make_variants(scales, cfg.tta.flip)


def cmd_infer(cfg: RunConfig, checkpoint: str, variants: list[Variant]) -> None:
    if cfg.eval_root is None:
        raise ConfigError("infer needs a dataset root (--data)")
    out = Path(cfg.out)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    model = load_checkpoint(checkpoint)
    manifests = discover_manifests(cfg.eval_root)
    for seq in load_all(manifests):
        masks = infer_sequence(model, seq, variants)
        seq_dir = out / "masks" / seq.manifest.sequence_id
        seq_dir.mkdir(parents=True, exist_ok=True)
        for idx, mask in masks.items():
            save_mask_png(mask.labels, seq_dir / f"{idx:05d}.png")
        print(f"{seq.manifest.sequence_id}: wrote {len(masks)} masks")
    write_resolved(cfg, out, "infer")


def cmd_eval(cfg: RunConfig, pred_root: str) -> None:
    if cfg.eval_root is None:
        raise ConfigError("eval needs a dataset root (--data)")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    manifests = discover_manifests(cfg.eval_root)
    preds_by_seq = {}
    for man in manifests:
        seq_dir = Path(pred_root) / man.sequence_id
        preds = {}
        for idx in man.annotated:
            p = seq_dir / f"{idx:05d}.png"
            if not p.is_file():
                raise DataError(f"missing prediction {p}")
            preds[idx] = MaskMap(labels=_read_mask(p), num_objects=man.num_objects)
        preds_by_seq[man.sequence_id] = preds
    report = score_sequences(preds_by_seq, manifests)
    _save_scores(report, out)
    write_resolved(cfg, out, "eval")
    print(report.table())


def cmd_ablate(cfg: RunConfig) -> None:
    """Train fusion on/off, evaluate each with and without TTA: 4 rows."""
    import dataclasses

    if cfg.train_root is None or cfg.eval_root is None:
        raise ConfigError("ablate needs train_root and eval_root (--data/--eval-data)")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    train_set = load_all(discover_manifests(cfg.train_root))
    eval_manifests = discover_manifests(cfg.eval_root)
    eval_set = load_all(eval_manifests)
    rows = []
    for fusion in (False, True):
        model = build_model(dataclasses.replace(cfg.model, fusion_enabled=fusion))
        model, _ = train_two_stages(model, train_set, cfg.stage1, cfg.stage2)
        for tta_on in (False, True):
            variants = (
                make_variants(cfg.tta.scales, cfg.tta.flip)
                if tta_on
                else [Variant(scale=1.0, flipped=False)]
            )
            preds = {
                s.manifest.sequence_id: infer_sequence(model, s, variants) for s in eval_set
            }
            report = score_sequences(preds, eval_manifests)
            rows.append(
                {
                    "name": f"fusion={'on' if fusion else 'off'},tta={'on' if tta_on else 'off'}",
                    "fusion": fusion,
                    "tta": tta_on,
                    "j_and_f": report.jf,
                    "j": report.j,
                    "f": report.f,
                }
            )
            print(f"{rows[-1]['name']}: J&F={100 * report.jf:.1f}%")
    with open(out / "ablation.json", "w") as f:
        json.dump(rows, f, indent=1, sort_keys=True)
    with open(out / "ablation.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["name", "fusion", "tta", "j_and_f", "j", "f"])
        writer.writeheader()
        writer.writerows(rows)
    plot_ablation(rows, out / "ablation.png")
    write_resolved(cfg, out, "ablate")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="depthvos", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help="output directory")

    sp = sub.add_parser("synth", help="generate a synthetic occlusion dataset")
    common(sp)
    sp.add_argument("--sequences", type=int, default=None, help="number of clips")

    sp = sub.add_parser("train", help="two-stage training on a dataset")
    common(sp)
    sp.add_argument("--data", default=None, help="training dataset root")
    sp.add_argument("--no-fusion", action="store_true", help="RGB-only ablation")

    sp = sub.add_parser("infer", help="propagate first-frame masks through sequences")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", default=None, help="dataset root")
    sp.add_argument("--scales", default=None, help="comma list, e.g. 1.2,1.3,1.4")
    sp.add_argument("--flip", action="store_true", help="add flipped variants")
    sp.add_argument("--tta", action="store_true", help="use the config's TTA variants")

    sp = sub.add_parser("eval", help="score predicted masks against ground truth")
    common(sp)
    sp.add_argument("--data", default=None, help="dataset root")
    sp.add_argument("--pred", required=True, help="predicted masks root (out/masks of infer)")

    sp = sub.add_parser("ablate", help="fusion x tta grid over one dataset pair")
    common(sp)
    sp.add_argument("--data", default=None, help="training dataset root")
    sp.add_argument("--eval-data", default=None, help="evaluation dataset root")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if getattr(args, "data", None) is not None:
        key = "eval_root" if args.command in ("infer", "eval") else "train_root"
        overrides[key] = args.data
    if getattr(args, "eval_data", None) is not None:
        overrides["eval_root"] = args.eval_data
    if getattr(args, "sequences", None) is not None:
        overrides["synth_sequences"] = args.sequences
    if getattr(args, "no_fusion", False):
        overrides["model.fusion_enabled"] = False
    if getattr(args, "scales", None) is not None:
        overrides["tta.scales"] = [float(s) for s in args.scales.split(",")]
    if getattr(args, "flip", False):
        overrides["tta.flip"] = True
    try:
        cfg = resolve(args.config, overrides)
        if args.command == "synth":
            cmd_synth(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "infer":
            cmd_infer(cfg, args.checkpoint, _variants_from(cfg, args))
        elif args.command == "eval":
            cmd_eval(cfg, args.pred)
        elif args.command == "ablate":
            cmd_ablate(cfg)
    except (ConfigError, DataError, ArchiveError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
