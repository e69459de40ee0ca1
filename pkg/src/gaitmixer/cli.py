"""``gaitmixer`` command line: synth, train, eval, analyze, inspect-checkpoint.

Settings come from built-in defaults, then an optional ``--config`` JSON
document, then flags (flags win). Every command writes the fully resolved
document to ``resolved_config.json`` in its output directory; passing that
file back with ``--config`` reruns the command.

Exit codes: 0 ok, 2 configuration error, 3 data/IO error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from pathlib import Path

from .errors import ConfigError, DataError, NumericError

log = logging.getLogger("gaitmixer")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
OUT_ENV = "GAITMIXER_OUT"
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

# Sections and keys beyond the dataclass-backed model/train sections.
DATA_DEFAULTS = {"subjects": 10, "seqs_per_subject": 10, "frames": 90, "views": None,
                 "format": "json", "manifest": None, "train_subjects": None}
EVAL_DEFAULTS = {"checkpoint": None, "conditions": ["NM", "BG", "CL"], "batch_size": 64}
ANALYSIS_DEFAULTS = {"checkpoint": None, "samples": [0], "reference": None, "layer": None,
                     "channels": None, "n_channels": 4, "log_scale": True, "palette": "heat",
                     "cell": 8}
TRAIN_EXTRA = {"resume": None}


def default_config() -> dict:
    from .config import ModelConfig
    from .train import TrainConfig

    train = TrainConfig().to_dict()
    train.update(TRAIN_EXTRA)
    return {"seed": 0, "output": None, "model": ModelConfig().to_dict(),
            "data": dict(DATA_DEFAULTS), "train": train, "eval": dict(EVAL_DEFAULTS),
            "analysis": copy.deepcopy(ANALYSIS_DEFAULTS)}


def merge(base: dict, override: dict, where: str = "") -> dict:
    """Recursive update that rejects keys ``base`` does not know."""
    out = copy.deepcopy(base)
    for k, v in override.items():
        if k not in base:
            raise ConfigError(f"unknown config key {where + k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict):
            out[k] = merge(base[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


def load_config_file(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    doc.pop("command", None)
    return doc


def model_config(cfg: dict):
    from .config import ModelConfig
    return ModelConfig.from_dict(cfg["model"])


def train_config(cfg: dict):
    from .train import TrainConfig, linear_lr_scale
    t = {k: v for k, v in cfg["train"].items() if k not in TRAIN_EXTRA}
    if t.get("lr_scale") == "auto":
        t["lr_scale"] = linear_lr_scale(t["p"], t["k"])
    return TrainConfig.from_dict(t)


def output_dir(cfg: dict, command: str) -> Path:
    if cfg.get("output"):
        return Path(cfg["output"])
    root = os.environ.get(OUT_ENV, "runs")
    return Path(root) / command


def write_resolved(cfg: dict, command: str, out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    doc = dict(cfg, command=command, output=str(out))
    path = out / "resolved_config.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_manifest(cfg: dict):
    from .data import DatasetManifest
    path = cfg["data"]["manifest"]
    if not path:
        raise ConfigError("no manifest given (use --manifest or data.manifest)")
    return DatasetManifest.read(path, cfg["data"]["train_subjects"])


# -- commands ----------------------------------------------------------------------

def cmd_synth(cfg: dict, out: Path) -> int:
    import numpy as np
    from .data import SynthSpec, synthesize_gait, write_dataset

    d = cfg["data"]
    if int(d["subjects"]) < 2:
        raise ConfigError("synth needs at least 2 subjects")
    views = tuple(d["views"]) if d["views"] is not None else None
    spec = SynthSpec(frames=int(d["frames"]), views=views)
    manifest = synthesize_gait(int(d["subjects"]), int(d["seqs_per_subject"]),
                               np.random.default_rng(cfg["seed"]), spec)
    path = write_dataset(manifest, out, d["format"])
    print(f"wrote {len(manifest.records)} sequences and {path}")
    return EXIT_OK


def cmd_train(cfg: dict, out: Path) -> int:
    from .train import train

    manifest = read_manifest(cfg)
    mcfg, tcfg = model_config(cfg), train_config(cfg)
    tr = train(manifest, mcfg, tcfg, seed=cfg["seed"], out_dir=out, resume=cfg["train"]["resume"])
    last = tr.history[-1] if tr.history else {}
    print(f"trained {mcfg.variant} to step {tr.step}"
          + (f" (final loss {last['loss']:.4f})" if last else "")
          + f"; checkpoint {out / 'final.gmx'}")
    return EXIT_OK


def load_model(cfg: dict, section: str):
    from .model import GaitMixer
    ckpt = cfg[section]["checkpoint"]
    if not ckpt:
        raise ConfigError(f"no checkpoint given (use --checkpoint or {section}.checkpoint)")
    return GaitMixer.load(ckpt)


def cmd_eval(cfg: dict, out: Path) -> int:
    from .data import CONDITIONS
    from .evaluate import embed_all, evaluate_casia, report_summary, report_table

    conds = tuple(cfg["eval"]["conditions"])
    bad = [c for c in conds if c not in CONDITIONS]
    if bad or not conds:
        raise ConfigError(f"conditions must be a non-empty subset of {CONDITIONS}, got {conds}")
    model = load_model(cfg, "eval")
    manifest = read_manifest(cfg)
    records = manifest.test_records() if manifest.test_subjects else manifest.records
    emb = embed_all(model, manifest, records, frames=model.cfg.frames,
                    batch_size=int(cfg["eval"]["batch_size"]))
    report = evaluate_casia(emb, conditions=conds)
    missing = [(c, pv, gv) for c in conds for pv in report.views for gv in report.views
               if pv != gv and (c, pv, gv) not in report.cells]
    if missing:
        log.warning("%d (condition, probe view, gallery view) cells have no data, e.g. %s",
                    len(missing), missing[:3])
    report.write_jsonl(out / "eval_cells.jsonl")
    table = report_table(report)
    (out / "eval_table.txt").write_text(table, encoding="utf-8")
    summary = report_summary(report)
    summary["missing_cells"] = len(missing)
    summary["skipped_sequences"] = len(emb.skipped)
    (out / "eval_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                           encoding="utf-8")
    print(table, end="")
    return EXIT_OK


def cmd_analyze(cfg: dict, out: Path) -> int:
    import numpy as np
    from .analysis import (feature_spectrum, grad_cam, high_frequency_fraction, joint_time_maps,
                           render)
    from .data import center_crop, normalize
    from .numerics import no_grad

    a = cfg["analysis"]
    model = load_model(cfg, "analysis")
    manifest = read_manifest(cfg)
    records = manifest.records
    layer = a["layer"] or f"temporal.block{model.cfg.temporal_blocks - 1}"
    if layer not in model.hook_names():
        raise ConfigError(f"unknown layer {layer!r}; valid hooks: {', '.join(model.hook_names())}")

    def window(i):
        if not 0 <= i < len(records):
            raise ConfigError(f"sample {i} out of range (manifest has {len(records)} sequences)")
        seq = normalize(manifest.load(records[i]))
        return center_crop(seq, model.cfg.frames).window

    summary = {"layer": layer, "samples": []}
    for i in a["samples"]:
        i = int(i)
        x = window(i)
        hooks: dict = {}
        with no_grad():
            model.forward(x[None], hooks)
        maps = joint_time_maps(hooks[layer].data[0], layer, model.cfg.joints)
        spec = feature_spectrum(maps, a["channels"], int(a["n_channels"]), layer,
                                log_scale=bool(a["log_scale"]))
        for c, mag in zip(spec.channels, spec.magnitudes):
            render(mag, out / f"fft_s{i:04d}_ch{c:04d}.png", a["palette"], int(a["cell"]))
        hf = high_frequency_fraction(np.moveaxis(maps[..., spec.channels], -1, 0))

        ref_idx = a["reference"]
        if ref_idx is None:
            # default reference: another sequence of the same subject, else the sample itself
            same = [j for j, r in enumerate(records)
                    if r.subject == records[i].subject and j != i]
            ref_idx = same[0] if same else i
        ref = model.embed(window(int(ref_idx))[None])[0]
        cam = grad_cam(model, x, ref, layer)
        render(cam.grid, out / f"gradcam_s{i:04d}.png", a["palette"], int(a["cell"]))
        summary["samples"].append({"sample": i, "reference": int(ref_idx),
                                   "channels": spec.channels, "high_frequency_fraction": hf,
                                   "cam_score": cam.score})
    (out / "analysis.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    print(f"analysis of {len(a['samples'])} sample(s) at {layer} written to {out}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    from .model import init_param_shapes
    from .config import ModelConfig
    from .numerics import load_checkpoint

    header, arrays = load_checkpoint(args.checkpoint)
    n_model = sum(v.size for k, v in arrays.items() if k.startswith("model."))
    info = {"header": header, "arrays": len(arrays), "model_parameters": int(n_model)}
    if "model" in header:
        expected = init_param_shapes(ModelConfig.from_dict(header["model"]))
        found = {k[len("model."):]: tuple(v.shape) for k, v in arrays.items()
                 if k.startswith("model.")}
        info["consistent"] = found == {k: tuple(s) for k, s in expected.items()}
    if args.arrays:
        info["shapes"] = {k: list(v.shape) for k, v in sorted(arrays.items())}
    print(json.dumps(info, indent=2, sort_keys=True))
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gaitmixer", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run config (defaults < file < flags)")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<command>)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int,
                        help="BLAS/OpenMP thread count; 1 gives bitwise-reproducible runs")

    def manifest_flags(sp):
        sp.add_argument("--manifest", help="manifest.jsonl of the dataset")
        sp.add_argument("--train-subjects", type=int,
                        help="first N subjects (id order) form the training split")

    s = sub.add_parser("synth", help="generate a synthetic gait dataset")
    common(s)
    s.add_argument("--subjects", type=int)
    s.add_argument("--seqs", type=int, help="sequences per subject")
    s.add_argument("--frames", type=int)
    s.add_argument("--format", choices=("json", "csv"))

    t = sub.add_parser("train", help="train a model")
    common(t)
    manifest_flags(t)
    t.add_argument("--variant", choices=("gaitmixer", "gaitformer"))
    t.add_argument("--steps", type=int)
    t.add_argument("--batch", type=int, nargs=2, metavar=("P", "K"))
    t.add_argument("--lr-scale", help="float, or 'auto' for linear batch scaling")
    t.add_argument("--d-model", type=int)
    t.add_argument("--blocks", type=int, nargs=2, metavar=("SPATIAL", "TEMPORAL"))
    t.add_argument("--checkpoint-every", type=int)
    t.add_argument("--resume", help="training checkpoint to continue from")

    e = sub.add_parser("eval", help="gallery/probe rank-1 evaluation")
    common(e)
    manifest_flags(e)
    e.add_argument("--checkpoint")
    e.add_argument("--conditions", nargs="+", choices=("NM", "BG", "CL"))

    a = sub.add_parser("analyze", help="feature spectra and Grad-CAM maps")
    common(a)
    manifest_flags(a)
    a.add_argument("--checkpoint")
    a.add_argument("--samples", type=int, nargs="+", help="manifest record indices")
    a.add_argument("--reference", type=int, help="record index of the Grad-CAM reference")
    a.add_argument("--layer")
    a.add_argument("--channels", type=int, nargs="+")
    a.add_argument("--n-channels", type=int)

    i = sub.add_parser("inspect-checkpoint", help="print a checkpoint header")
    i.add_argument("checkpoint")
    i.add_argument("--arrays", action="store_true", help="list every array shape")
    return p


def flag_overrides(args) -> dict:
    """Flags that were given, mapped onto config paths."""
    o: dict = {}

    def put(section, key, value):
        if value is not None:
            o.setdefault(section, {})[key] = value

    if args.seed is not None:
        o["seed"] = args.seed
    if args.out is not None:
        o["output"] = args.out
    g = vars(args)
    put("data", "manifest", g.get("manifest"))
    put("data", "train_subjects", g.get("train_subjects"))
    if args.command == "synth":
        put("data", "subjects", args.subjects)
        put("data", "seqs_per_subject", args.seqs)
        put("data", "frames", args.frames)
        put("data", "format", args.format)
    elif args.command == "train":
        put("model", "variant", args.variant)
        put("model", "d_model", args.d_model)
        if args.blocks:
            put("model", "spatial_blocks", args.blocks[0])
            put("model", "temporal_blocks", args.blocks[1])
        put("train", "steps", args.steps)
        if args.batch:
            put("train", "p", args.batch[0])
            put("train", "k", args.batch[1])
        if args.lr_scale is not None:
            try:
                put("train", "lr_scale", args.lr_scale if args.lr_scale == "auto"
                    else float(args.lr_scale))
            except ValueError:
                raise ConfigError(f"--lr-scale must be a number or 'auto'") from None
        put("train", "checkpoint_every", args.checkpoint_every)
        put("train", "resume", args.resume)
    elif args.command == "eval":
        put("eval", "checkpoint", args.checkpoint)
        put("eval", "conditions", args.conditions)
    elif args.command == "analyze":
        put("analysis", "checkpoint", args.checkpoint)
        put("analysis", "samples", args.samples)
        put("analysis", "reference", args.reference)
        put("analysis", "layer", args.layer)
        put("analysis", "channels", args.channels)
        put("analysis", "n_channels", args.n_channels)
    return o


def resolve(args) -> dict:
    cfg = default_config()
    if args.config:
        cfg = merge(cfg, load_config_file(args.config))
    cfg = merge(cfg, flag_overrides(args))
    # validate the dataclass-backed sections up front
    model_config(cfg)
    train_config(cfg)
    return cfg


def set_threads(n: int | None) -> None:
    if n is None:
        return
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    for var in THREAD_VARS:
        os.environ[var] = str(n)
    if "numpy" in sys.modules:
        log.debug("numpy already loaded; thread settings apply to new BLAS pools only")


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "analyze": cmd_analyze}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "inspect-checkpoint":
            return cmd_inspect(args)
        set_threads(args.threads)
        cfg = resolve(args)
        out = output_dir(cfg, args.command)
        write_resolved(cfg, args.command, out)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
