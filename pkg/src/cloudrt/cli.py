"""Command-line entry point: ``cloudrt <subcommand> ...``.

Exit codes are 0 on success, 1 when acceptance criteria fail, 2 for input
errors and 3 for numerical failures during training.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__, acceptance, em, metrics, scenegen
from .surrogate import (MECH_DET, MECH_NON, NumericalError, SurrogateConfig, SurrogateModel,
                        build_training_set, desk_config, rollout, train)
from .tracer import TraceConfig, desk_trace_config, export_channel, import_channel, load_scene, \
    save_scene, trace

log = logging.getLogger("cloudrt")

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
DATA_ENV = "CLOUDRT_DATA"
BUILTIN_ROOMS = ("room_a", "room_b", "room_c")


class InputError(Exception):
    """Bad user input; reported with exit code 2."""


def sub_seeds(seed: int) -> dict:
    """Named seeds derived from the global one; logged in every config snapshot."""
    names = ("scene", "links", "trace", "train")
    states = np.random.SeedSequence(seed).spawn(len(names))
    return {n: int(s.generate_state(1)[0] & 0x7FFFFFFF) for n, s in zip(names, states)}


def out_dir(args) -> Path:
    if args.out:
        p = Path(args.out)
    elif os.environ.get(DATA_ENV):
        p = Path(os.environ[DATA_ENV]) / args.command
    else:
        raise InputError(f"--out is required when {DATA_ENV} is not set")
    p.mkdir(parents=True, exist_ok=True)
    return p


def read_config(args) -> dict:
    if not args.config:
        return {}
    try:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"config file {args.config} not found") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.config}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise InputError(f"{args.config}: top level must be an object")
    return doc


def write_snapshot(out: Path, args, resolved: dict) -> None:
    snap = {"command": args.command, "version": __version__, "seed": args.seed,
            "sub_seeds": sub_seeds(args.seed), "threads": args.threads,
            "args": {k: v for k, v in sorted(vars(args).items())
                     if k not in ("func", "command") and v is not None},
            "resolved": resolved}
    (out / "config.json").write_text(json.dumps(snap, indent=2, sort_keys=True, default=str),
                                     encoding="utf-8")


def trace_config(doc: dict, seed: int, base: Optional[TraceConfig] = None) -> TraceConfig:
    """TraceConfig from the ``trace`` section of a config file."""
    sec = doc.get("trace", {})
    known = {f.name for f in fields(TraceConfig)}
    bad = sorted(set(sec) - known)
    if bad:
        raise InputError(f"unknown trace option(s): {', '.join(bad)}")
    base = base or desk_trace_config()
    kw = {**asdict(base), "seed": seed, **sec}
    try:
        return TraceConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise InputError(f"trace config: {exc}") from None


def read_scene(path) -> "scenegen.Scene":
    p = Path(path)
    if not p.exists():
        raise InputError(f"scene file {p} not found")
    try:
        return load_scene(p)
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise InputError(f"{p}: {exc}") from None


def read_links(args, scene, seed: int) -> List[tuple]:
    """Links from ``--links FILE``, ``--tx/--rx`` or ``--random-links N``."""
    if args.links:
        try:
            doc = json.loads(Path(args.links).read_text(encoding="utf-8"))
            items = doc["links"] if isinstance(doc, dict) else doc
            return [(np.array(l["tx"], dtype=float), np.array(l["rx"], dtype=float))
                    for l in items]
        except FileNotFoundError:
            raise InputError(f"links file {args.links} not found") from None
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{args.links}: malformed links ({exc})") from None
    if args.tx is not None and args.rx is not None:
        return [(np.array(args.tx, dtype=float), np.array(args.rx, dtype=float))]
    if args.random_links:
        if scene.cloud is None:
            raise InputError("--random-links needs a scene with a point cloud")
        return scenegen.random_links(scene, args.random_links, seed)
    raise InputError("give --links, --tx/--rx or --random-links")


def links_json(links) -> dict:
    return {"links": [{"id": i, "tx": np.asarray(tx).tolist(), "rx": np.asarray(rx).tolist()}
                      for i, (tx, rx) in enumerate(links)]}


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")


# --------------------------------------------------------------------------
# subcommands


def cmd_gen_scene(args) -> int:
    seeds = sub_seeds(args.seed)
    if args.spec in BUILTIN_ROOMS:
        spec = scenegen.room_specs(seeds["scene"])[BUILTIN_ROOMS.index(args.spec)]
    else:
        if not Path(args.spec).exists():
            raise InputError(f"spec file {args.spec} not found")
        try:
            spec = scenegen.load_room_spec(args.spec)
        except ValueError as exc:
            raise InputError(str(exc)) from None
    mats = em.load_materials(spec.materials_path) if spec.materials_path else em.load_materials()
    used = [spec.floor_material, spec.ceiling_material, *spec.wall_materials,
            *(c.material for c in spec.columns), *(p.material for p in spec.partitions)]
    for m in used:
        if not 0 <= m < len(mats):
            raise InputError(f"unknown material id {m} (table has {len(mats)} entries)")
    scene = scenegen.gen_room(spec, seeds["scene"], mats)
    out = out_dir(args)
    name = args.name or spec.name
    save_scene(scene, out / f"{name}.scene.json")
    _write_json(out / f"{name}.spec.json", spec.to_json())
    write_snapshot(out, args, {"spec": spec.to_json()})
    print(f"{name}: {len(scene.cloud.positions)} points, {len(scene.edges)} edges -> {out}")
    return EXIT_OK


def _trace_links(args, fn) -> int:
    seeds = sub_seeds(args.seed)
    scene = read_scene(args.scene)
    cfg = trace_config(read_config(args), seeds["trace"])
    links = read_links(args, scene, seeds["links"])
    out = out_dir(args)
    rows = []
    for i, (tx, rx) in enumerate(links):
        try:
            real = fn(scene.with_link(tx, rx), cfg)
        except ValueError as exc:
            raise InputError(f"link {i}: {exc}") from None
        export_channel(real, out / f"channel_{i:04d}.json")
        rows.append({"link": i, "n_paths": len(real.paths), **real.diagnostics})
    _write_json(out / "links.json", links_json(links))
    _write_json(out / "diagnostics.json", {"links": rows})
    write_snapshot(out, args, {"trace": asdict(cfg)})
    print(f"{len(links)} link(s) -> {out}")
    return EXIT_OK


def cmd_trace(args) -> int:
    return _trace_links(args, trace)


def cmd_rollout(args) -> int:
    try:
        det = SurrogateModel.load(args.det)
        non = SurrogateModel.load(args.non)
    except FileNotFoundError as exc:
        raise InputError(f"checkpoint not found: {exc.filename}") from None
    except ValueError as exc:
        raise InputError(str(exc)) from None
    caches = {}
    return _trace_links(args, lambda sc, cfg: rollout(sc, det, non, cfg, caches))


def cmd_dataset(args) -> int:
    seeds = sub_seeds(args.seed)
    doc = read_config(args)
    cfg = trace_config(doc, seeds["trace"])
    scenes = [read_scene(p) for p in args.scenes]
    out = out_dir(args)
    if args.links:
        try:
            items = json.loads(Path(args.links).read_text(encoding="utf-8"))
            items = items["links"] if isinstance(items, dict) else items
            links = [(int(l.get("scene", 0)), np.array(l["tx"], float), np.array(l["rx"], float))
                     for l in items]
        except FileNotFoundError:
            raise InputError(f"links file {args.links} not found") from None
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{args.links}: malformed links ({exc})") from None
        for si, _, _ in links:
            if not 0 <= si < len(scenes):
                raise InputError(f"link refers to scene {si}, only {len(scenes)} given")
    else:
        links = [(si, tx, rx) for si, sc in enumerate(scenes)
                 for tx, rx in scenegen.random_links(sc, args.random_links, seeds["links"] + si)]
    for i, sc in enumerate(scenes):
        save_scene(sc, out / f"scene_{i:02d}.scene.json")
    ds = scenegen.gen_dataset(scenes, links, cfg, seed=seeds["links"], out_dir=out,
                              max_non_det_per_link=args.per_link,
                              max_det_per_link=args.per_link)
    write_snapshot(out, args, {"trace": asdict(cfg), "n_scenes": len(scenes)})
    c = ds.manifest.counts
    print(f"{len(links)} links: {c[MECH_DET]} deterministic, {c[MECH_NON]} non-deterministic "
          f"samples -> {out}")
    return EXIT_OK


def load_dataset_dir(path) -> "scenegen.RayDataset":
    d = Path(path)
    if not (d / "manifest.json").exists():
        raise InputError(f"{d} is not a dataset directory (no manifest.json)")
    scene_files = sorted(d.glob("scene_*.scene.json"))
    if not scene_files:
        raise InputError(f"{d} holds no scene files")
    try:
        return scenegen.load_dataset(d, [load_scene(p) for p in scene_files])
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"{d}: {exc}") from None


def surrogate_config(doc: dict, mech: str, seed: int) -> SurrogateConfig:
    sec = doc.get("surrogate", {})
    try:
        if sec:
            base = {**desk_config(mech).to_json(), "seed": seed, **sec, "mechanism": mech}
            return SurrogateConfig.from_json(base)
        return desk_config(mech, seed=seed)
    except (TypeError, ValueError) as exc:
        raise InputError(f"surrogate config: {exc}") from None


def cmd_train(args) -> int:
    seeds = sub_seeds(args.seed)
    mech = MECH_DET if args.mechanism == "det" else MECH_NON
    cfg = surrogate_config(read_config(args), mech, seeds["train"])
    ds = load_dataset_dir(args.dataset).split("train")
    try:
        ts = build_training_set(ds, cfg, mech)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = out_dir(args)
    write_snapshot(out, args, {"surrogate": cfg.to_json(), "n_samples": len(ts)})
    model = SurrogateModel(cfg)

    def progress(ep, row):
        if ep % 10 == 0 or ep == (args.epochs or cfg.epochs) - 1:
            log.info("epoch %d dir %.4g att %.4g total %.4g", *row)
    res = train(ts, model, epochs=args.epochs, log_path=out / "train_log.csv", on_epoch=progress)
    model.save(out / f"{args.mechanism}.npz")
    print(f"trained {args.mechanism} on {len(ts)} samples, final loss {res.final[3]:.4g} -> {out}")
    return EXIT_OK


def _channels(d: Path) -> dict:
    if not d.is_dir():
        raise InputError(f"{d} is not a directory")
    return {p.name: p for p in sorted(d.glob("channel_*.json"))}


def _order_errors(pred_nlos, truth_nlos) -> dict:
    """Per interaction order: mean angle between hop directions of matched paths.

    Each true path is matched to the predicted path of equal order closest in delay.
    """
    out = {}
    for k in sorted({p.bounces for p in truth_nlos}):
        cands = [p for p in pred_nlos if p.bounces == k]
        if not cands:
            continue
        errs = []
        for t in (p for p in truth_nlos if p.bounces == k):
            m = min(cands, key=lambda p: abs(p.tau - t.tau))
            errs.append(float(np.mean(metrics.angle_deg(m.dirs, t.dirs))))
        out[k] = float(np.mean(errs))
    return out


def cmd_eval(args) -> int:
    pred, truth = _channels(Path(args.pred)), _channels(Path(args.truth))
    common = sorted(set(pred) & set(truth))
    if not common:
        raise InputError("no channel files in common between prediction and truth")
    rows, pl_p, pl_t, ds_p, ds_t = [], [], [], [], []
    ang = {}
    for name in common:
        lp, np_, _ = import_channel(pred[name])
        lt, nt, _ = import_channel(truth[name])
        pp = ([lp] if lp else []) + np_
        tp = ([lt] if lt else []) + nt
        try:
            row = {"link": name[len("channel_"):-len(".json")],
                   "pl_pred_db": metrics.path_loss(pp), "pl_true_db": metrics.path_loss(tp),
                   "ds_pred_ns": metrics.rms_ds(pp) * 1e9, "ds_true_ns": metrics.rms_ds(tp) * 1e9,
                   "n_pred": len(pp), "n_true": len(tp)}
        except ValueError as exc:
            raise InputError(f"{name}: {exc}") from None
        for k, e in _order_errors(np_, nt).items():
            row[f"ang_err_order{k}_deg"] = e
            ang.setdefault(k, []).append(e)
        rows.append(row)
        pl_p.append(row["pl_pred_db"])
        pl_t.append(row["pl_true_db"])
        ds_p.append(row["ds_pred_ns"])
        ds_t.append(row["ds_true_ns"])
    out = out_dir(args)
    cols = ["link", "pl_pred_db", "pl_true_db", "ds_pred_ns", "ds_true_ns", "n_pred", "n_true"]
    cols += sorted({k for r in rows for k in r if k.startswith("ang_err")})
    metrics.write_link_csv(out / "links.csv", rows, cols)
    agg = {"n_links": len(rows), "pl_rmse_db": metrics.rmse(pl_p, pl_t),
           "ds_rmse_ns": metrics.rmse(ds_p, ds_t),
           "angular_error_deg": {str(k): float(np.mean(v)) for k, v in sorted(ang.items())}}
    _write_json(out / "summary.json", agg)
    write_snapshot(out, args, {})
    print(f"{len(rows)} links: PL RMSE {agg['pl_rmse_db']:.3f} dB, "
          f"DS RMSE {agg['ds_rmse_ns']:.3f} ns -> {out}")
    return EXIT_OK


def cmd_accept(args) -> int:
    work = Path(args.out) if args.out else (
        Path(os.environ[DATA_ENV]) / "accept" if os.environ.get(DATA_ENV) else None)
    numbers = acceptance.FAST if args.level == "fast" else acceptance.FULL
    if args.only:
        numbers = tuple(args.only)
    suite = acceptance.Suite(work, seed=args.seed, log=lambda m: log.info("%s", m))
    results = acceptance.run(numbers, suite, on_result=lambda r: print(r.line(), flush=True))
    report = acceptance.report_json(results)
    if work is not None:
        work.mkdir(parents=True, exist_ok=True)
        (work / f"report_{args.level}.json").write_text(report, encoding="utf-8")
    failed = [r.number for r in results if not r.passed]
    if failed:
        print(f"failed criteria: {', '.join(map(str, failed))}")
        return EXIT_FAIL
    print(f"all {len(results)} criteria passed")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _add_link_args(p) -> None:
    p.add_argument("--links", help="JSON file with a list of {tx, rx} objects")
    p.add_argument("--tx", type=float, nargs=3, metavar=("X", "Y", "Z"))
    p.add_argument("--rx", type=float, nargs=3, metavar=("X", "Y", "Z"))
    p.add_argument("--random-links", type=int, default=0, metavar="N")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with 'trace' and 'surrogate' sections")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None,
                        help="numba worker threads (default: all available)")
    common.add_argument("--out", help=f"output directory (default: ${DATA_ENV}/<command>)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="cloudrt", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"cloudrt {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scene", parents=[common], help="sample a room spec into a scene")
    p.add_argument("spec", help=f"RoomSpec JSON file or one of {', '.join(BUILTIN_ROOMS)}")
    p.add_argument("--name")
    p.set_defaults(func=cmd_gen_scene)

    p = sub.add_parser("trace", parents=[common], help="ray trace links of a scene")
    p.add_argument("scene")
    _add_link_args(p)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("dataset", parents=[common], help="build a ray-level training dataset")
    p.add_argument("scenes", nargs="+")
    p.add_argument("--links", help="JSON list of {scene, tx, rx}")
    p.add_argument("--random-links", type=int, default=20, metavar="N",
                   help="links per scene when --links is absent")
    p.add_argument("--per-link", type=int, default=40,
                   help="cap on samples per mechanism and link (0 keeps all)")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", parents=[common], help="train one mechanism's network")
    p.add_argument("dataset")
    p.add_argument("--mechanism", choices=("det", "non"), required=True)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rollout", parents=[common], help="predict channels with the surrogate")
    p.add_argument("scene")
    p.add_argument("--det", required=True, help="deterministic checkpoint")
    p.add_argument("--non", required=True, help="non-deterministic checkpoint")
    _add_link_args(p)
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("eval", parents=[common], help="compare predicted and reference channels")
    p.add_argument("pred")
    p.add_argument("truth")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("accept", parents=[common], help="run the acceptance criteria")
    p.add_argument("level", choices=("fast", "full"))
    p.add_argument("--only", type=int, nargs="+", choices=range(1, 11), metavar="N")
    p.set_defaults(func=cmd_accept)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        acceptance.set_threads(args.threads)
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure at epoch {exc.epoch}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
